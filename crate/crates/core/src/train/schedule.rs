/// Linear warmup to `base_lr` over `warmup` steps, then cosine decay over the
/// remaining `total - warmup` steps. `step` is zero-based.
pub fn lr_at_step(step: usize, base_lr: f64, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        return base_lr * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1) as f64;
    let progress = (step - warmup) as f64 / span;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_endpoint_is_base() {
        assert_eq!(lr_at_step(9, 0.1, 10, 100), 0.1);
        assert_eq!(lr_at_step(10, 0.1, 10, 100), 0.1);
    }

    #[test]
    fn first_warmup_step() {
        assert!((lr_at_step(0, 0.1, 10, 100) - 0.01).abs() < 1e-18);
    }

    #[test]
    fn cosine_midpoint() {
        assert!((lr_at_step(10 + 45, 0.1, 10, 100) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn monotone_decay_after_warmup() {
        let lrs: Vec<f64> = (10..100).map(|s| lr_at_step(s, 1.0, 10, 100)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn no_warmup() {
        assert_eq!(lr_at_step(0, 2.0, 0, 10), 2.0);
    }
}
