//! Learning-rate schedule: linear warmup from zero to the start rate over
//! the warmup fraction of all steps, then linear decay to the end rate.

use super::TrainConfig;

pub fn lr_schedule(step: u64, total_steps: u64, cfg: &TrainConfig) -> f64 {
    debug_assert!(step <= total_steps);
    if total_steps == 0 {
        return cfg.lr_start;
    }
    let warmup_steps = (cfg.warmup_ratio * total_steps as f64).floor() as u64;
    if step < warmup_steps {
        return cfg.lr_start * step as f64 / warmup_steps as f64;
    }
    if total_steps == warmup_steps {
        return cfg.lr_end;
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    cfg.lr_start + (cfg.lr_end - cfg.lr_start) * progress
}
