//! End-to-end run: every stage in order, each artifact in its own place
//! under the work directory, and a manifest of SHA-256 hashes at the end.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    claim_output, cmd_evaluate, cmd_expand, cmd_predict, cmd_preprocess, cmd_pseudo_label,
    cmd_train_ensemble, read, CliError, CliResult, OutputOptions, PipelineConfig, TrainStage,
    KEPT_FILE, OCCUPANCY_FILE, SCORED_FILE,
};
use crate::error::Error;
use crate::model::{sha256_hex, FORMAT_VERSION};

pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Where [`run_all`] puts each artifact, relative to the work directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("preprocess/train.tsv")
    }
    pub fn unlabeled(&self) -> PathBuf {
        self.root.join("preprocess/unlabeled.tsv")
    }
    pub fn test(&self) -> PathBuf {
        self.root.join("preprocess/test.tsv")
    }
    pub fn stats(&self) -> PathBuf {
        self.root.join("preprocess/unlabeled_stats.tsv")
    }
    pub fn initial_ensemble(&self) -> PathBuf {
        self.root.join("ensemble-initial")
    }
    pub fn pseudo(&self) -> PathBuf {
        self.root.join("pseudo")
    }
    pub fn expanded(&self) -> PathBuf {
        self.root.join("expand/expanded.tsv")
    }
    pub fn final_ensemble(&self) -> PathBuf {
        self.root.join("ensemble-final")
    }
    pub fn predictions(&self) -> PathBuf {
        self.root.join("predict/predictions.tsv")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluate")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join(RUN_MANIFEST)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactHash {
    /// Relative to the work directory (or the bare file name for inputs).
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: String,
    /// `"ok"` or `"skipped"`.
    pub status: String,
    pub outputs: Vec<ArtifactHash>,
}

/// Contains no timestamps or absolute paths: identical inputs and config
/// give an identical file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub model_format_version: u32,
    pub config: serde_json::Value,
    /// Whether dataset and prediction TSVs carry a header row.
    pub tsv_header: bool,
    pub inputs: Vec<ArtifactHash>,
    pub stages: Vec<StageRecord>,
}

fn hash_file(path: &Path, label: String) -> CliResult<ArtifactHash> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(ArtifactHash {
        path: label,
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

/// Hashes a file, or every file below a directory in sorted order.
fn hash_artifact(root: &Path, path: &Path) -> CliResult<Vec<ArtifactHash>> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(root).unwrap_or(f);
            let label = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            hash_file(f, label)
        })
        .collect()
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    if path.is_dir() {
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            collect_files(&entry.path(), out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Runs every stage into `workdir`. Any failure aborts the run as
/// [`CliError::Stage`] naming the stage; `on_stage` sees each finished stage.
pub fn run_all(
    cfg: &PipelineConfig,
    workdir: &Path,
    out: OutputOptions,
    mut on_stage: impl FnMut(&StageRecord),
) -> CliResult<RunManifest> {
    cfg.validate()?;
    let layout = RunLayout::new(workdir);
    let manifest_path = layout.manifest();
    if manifest_path.exists() && !out.force {
        return Err(CliError::Usage(format!(
            "{} already holds a run; pass --force or use a fresh work directory",
            workdir.display()
        )));
    }
    fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;

    let mut stages = Vec::new();
    let mut finish = |name: &str, outputs: &[PathBuf], skipped: bool| -> CliResult<()> {
        let mut hashes = Vec::new();
        for p in outputs {
            hashes.extend(hash_artifact(workdir, p)?);
        }
        let record = StageRecord {
            name: name.to_string(),
            status: if skipped { "skipped" } else { "ok" }.to_string(),
            outputs: hashes,
        };
        on_stage(&record);
        stages.push(record);
        Ok(())
    };
    // Wraps anything a stage raises (other than refusing to overwrite) with
    // the stage's name.
    let tag = |stage: &'static str| {
        move |e: CliError| match e {
            CliError::Data(source) => CliError::Stage {
                stage: stage.to_string(),
                source,
            },
            other => other,
        }
    };

    let norm = &cfg.normalization;
    cmd_preprocess(&cfg.train, &layout.train(), norm, false, out).map_err(tag("preprocess"))?;
    cmd_preprocess(&cfg.test, &layout.test(), norm, false, out).map_err(tag("preprocess"))?;
    let pool = cmd_preprocess(&cfg.unlabeled, &layout.unlabeled(), norm, true, out)
        .map_err(tag("preprocess"))?;
    claim_output(&layout.stats(), out.force)?;
    super::write_text(&layout.stats(), &crate::corpus::stats_tsv(&pool.stats))?;
    finish(
        "preprocess",
        &[
            layout.train(),
            layout.test(),
            layout.unlabeled(),
            layout.stats(),
        ],
        false,
    )?;

    cmd_train_ensemble(
        cfg,
        TrainStage::Initial,
        &layout.train(),
        &layout.initial_ensemble(),
        out,
    )
    .map_err(tag(TrainStage::Initial.name()))?;
    finish(
        TrainStage::Initial.name(),
        &[layout.initial_ensemble()],
        false,
    )?;

    cmd_pseudo_label(
        cfg,
        &layout.initial_ensemble(),
        &layout.unlabeled(),
        &layout.pseudo(),
        out,
    )
    .map_err(tag("pseudo-label"))?;
    let pseudo = layout.pseudo();
    finish(
        "pseudo-label",
        &[
            pseudo.join(SCORED_FILE),
            pseudo.join(KEPT_FILE),
            pseudo.join(OCCUPANCY_FILE),
        ],
        false,
    )?;

    cmd_expand(
        &layout.train(),
        &pseudo.join(KEPT_FILE),
        &layout.expanded(),
        out,
    )
    .map_err(tag("expand"))?;
    finish("expand", &[layout.expanded()], false)?;

    cmd_train_ensemble(
        cfg,
        TrainStage::Final,
        &layout.expanded(),
        &layout.final_ensemble(),
        out,
    )
    .map_err(tag(TrainStage::Final.name()))?;
    finish(TrainStage::Final.name(), &[layout.final_ensemble()], false)?;

    cmd_predict(
        &layout.final_ensemble(),
        &layout.test(),
        &layout.predictions(),
        cfg.export_clamp,
        out,
    )
    .map_err(tag("predict"))?;
    finish("predict", &[layout.predictions()], false)?;

    let test = read(&layout.test()).map_err(tag("evaluate"))?;
    if test.iter().all(|e| e.score.is_some()) {
        let systems = [("final".to_string(), layout.predictions())];
        cmd_evaluate(
            &systems,
            &layout.test(),
            cfg.group_by,
            Some(&layout.evaluation()),
            out,
        )
        .map_err(tag("evaluate"))?;
        finish("evaluate", &[layout.evaluation()], false)?;
    } else {
        finish("evaluate", &[], true)?;
    }

    let mut config = serde_json::to_value(cfg).expect("config serializes");
    let mut inputs = Vec::new();
    for (role, path) in [
        ("train", &cfg.train),
        ("unlabeled", &cfg.unlabeled),
        ("test", &cfg.test),
    ] {
        if let Some(obj) = config.as_object_mut() {
            obj.remove(role);
        }
        inputs.push(hash_file(path, role.to_string())?);
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        model_format_version: FORMAT_VERSION,
        config,
        tsv_header: out.header,
        inputs,
        stages,
    };
    claim_output(&manifest_path, out.force)?;
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    super::write_text(&manifest_path, &json)?;
    Ok(manifest)
}
