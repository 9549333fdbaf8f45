//! Binary model container, little-endian throughout:
//!
//! ```text
//! magic "STRM" | version u32 | dim u64 | word min,max u32 u32 | char min,max u32 u32
//! | hash_seed u64 | bias f64 | train_config_fingerprint u64 | count u64
//! | count x (index u32, weight f64) | FNV-1a checksum of all preceding bytes u64
//! ```
//!
//! Only weights whose bit pattern is nonzero are stored, so `-0.0` survives.

use std::path::Path;

use super::features::{FeatureConfig, NgramRange, FNV_OFFSET_BASIS};
use super::RegressionModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STRM";
pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::with_key(FNV_OFFSET_BASIS);
    h.write(bytes);
    h.finish()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RegressionModel {
    /// SHA-256 of the serialized model, hex encoded.
    pub fn fingerprint(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let fc = &self.feature_config;
        let stored: Vec<(u32, f64)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.to_bits() != 0)
            .map(|(i, &w)| (i as u32, w))
            .collect();
        let mut out = Vec::with_capacity(72 + stored.len() * 12);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(fc.dim as u64).to_le_bytes());
        for v in [
            fc.word_ngrams.min,
            fc.word_ngrams.max,
            fc.char_ngrams.min,
            fc.char_ngrams.max,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&fc.hash_seed.to_le_bytes());
        out.extend_from_slice(&self.bias.to_le_bytes());
        out.extend_from_slice(&self.train_config_fingerprint.to_le_bytes());
        out.extend_from_slice(&(stored.len() as u64).to_le_bytes());
        for (i, w) in stored {
            out.extend_from_slice(&i.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
        }
        let checksum = fnv1a(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dim = r.u64()? as usize;
        let word_ngrams = NgramRange::new(r.u32()? as usize, r.u32()? as usize);
        let char_ngrams = NgramRange::new(r.u32()? as usize, r.u32()? as usize);
        let feature_config = FeatureConfig {
            dim,
            word_ngrams,
            char_ngrams,
            hash_seed: r.u64()?,
        };
        feature_config
            .validate()
            .map_err(|e| Error::Corrupt(e.to_string()))?;
        let bias = f64::from_bits(r.u64()?);
        let train_config_fingerprint = r.u64()?;
        let count = r.u64()? as usize;
        if count > dim || r.remaining() < count.saturating_mul(12) {
            return Err(Error::Corrupt("weight table truncated".into()));
        }
        let mut weights = vec![0.0; dim];
        for _ in 0..count {
            let i = r.u32()? as usize;
            let w = f64::from_bits(r.u64()?);
            if i >= dim {
                return Err(Error::Corrupt(format!("weight index {i} out of range")));
            }
            weights[i] = w;
        }
        let body_len = r.pos;
        let checksum = r.u64()?;
        if checksum != fnv1a(&bytes[..body_len]) {
            return Err(Error::Corrupt("checksum mismatch".into()));
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt("trailing bytes".into()));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Corrupt("non-finite parameter".into()));
        }
        Ok(RegressionModel {
            weights,
            bias,
            feature_config,
            train_config_fingerprint,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn save_model(model: &RegressionModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<RegressionModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    RegressionModel::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> RegressionModel {
        let fc = FeatureConfig {
            dim: 64,
            ..Default::default()
        };
        let mut m = RegressionModel::constant(2.75, fc);
        m.weights[3] = 0.1;
        m.weights[17] = -0.0;
        m.weights[63] = -1e-300;
        m.train_config_fingerprint = 0xdead_beef;
        m
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = sample();
        let back = RegressionModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), m.to_bytes());
        assert!(back.weights[17].is_sign_negative());
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_detected() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 8, 20, bytes.len() - 9, bytes.len() - 1] {
            let err = RegressionModel::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Corrupt(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn future_version_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            RegressionModel::from_bytes(&bytes),
            Err(Error::Version {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn flipped_byte_detected() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 12] ^= 0x40;
        assert!(matches!(
            RegressionModel::from_bytes(&bytes),
            Err(Error::Corrupt(_))
        ));
    }

    proptest! {
        #[test]
        fn any_model_roundtrips(
            weights in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 32),
            bias in -10.0f64..10.0,
        ) {
            let fc = FeatureConfig { dim: 32, ..Default::default() };
            let m = RegressionModel { weights, bias, feature_config: fc, train_config_fingerprint: 7 };
            prop_assert_eq!(RegressionModel::from_bytes(&m.to_bytes()).unwrap().to_bytes(), m.to_bytes());
        }
    }
}
