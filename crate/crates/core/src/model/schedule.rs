use super::TrainConfig;

/// Number of warmup steps: `warmup_fraction * total_steps`, rounded.
pub fn warmup_steps(total_steps: usize, cfg: &TrainConfig) -> usize {
    (cfg.warmup_fraction * total_steps as f64).round() as usize
}

/// Linear warmup to `peak_lr`, then polynomial decay to zero at `total_steps`.
///
/// With `W` warmup steps: `peak * step / W` for `step <= W`, otherwise
/// `peak * (1 - (step - W) / (total - W))^power`. When `W` rounds to zero the
/// schedule starts at the peak.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    debug_assert!(total_steps >= 1 && step <= total_steps);
    let warmup = warmup_steps(total_steps, cfg);
    if warmup > 0 && step <= warmup {
        return cfg.peak_lr * step as f64 / warmup as f64;
    }
    let decay_len = (total_steps - warmup) as f64;
    let remaining = 1.0 - (step - warmup) as f64 / decay_len;
    cfg.peak_lr * remaining.max(0.0).powf(cfg.decay_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(peak: f64, power: f64) -> TrainConfig {
        TrainConfig {
            peak_lr: peak,
            decay_power: power,
            warmup_fraction: 0.06,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn golden_points() {
        let c = cfg(1e-5, 1.0);
        assert_eq!(warmup_steps(1000, &c), 60);
        assert_eq!(lr_at(0, 1000, &c), 0.0);
        assert_eq!(lr_at(60, 1000, &c), 1e-5);
        assert_eq!(lr_at(1000, 1000, &c), 0.0);
        // 1e-5 * (1 - 470/940)
        assert!((lr_at(530, 1000, &c) - 5e-6).abs() < 1e-12);
        assert!((lr_at(30, 1000, &c) - 5e-6).abs() < 1e-12);
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let c = cfg(0.1, 1.0);
        assert_eq!(warmup_steps(5, &c), 0);
        assert_eq!(lr_at(0, 5, &c), 0.1);
        assert!((lr_at(4, 5, &c) - 0.02).abs() < 1e-15);
        assert_eq!(lr_at(5, 5, &c), 0.0);
    }

    #[test]
    fn quadratic_decay() {
        let c = cfg(1.0, 2.0);
        // halfway through decay: 0.5^2
        assert!((lr_at(530, 1000, &c) - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rises_then_falls(total in 1usize..3000, frac in 0.001f64..0.999, power in 0.1f64..4.0) {
            let c = TrainConfig { warmup_fraction: frac, decay_power: power, ..cfg(0.3, 1.0) };
            let w = warmup_steps(total, &c);
            let lrs: Vec<f64> = (0..=total).map(|s| lr_at(s, total, &c)).collect();
            prop_assert!(lrs.iter().all(|&v| v >= 0.0 && v <= c.peak_lr));
            prop_assert!(lrs[..=w].windows(2).all(|p| p[0] <= p[1]));
            prop_assert!(lrs[w..].windows(2).all(|p| p[0] >= p[1]));
        }
    }
}
