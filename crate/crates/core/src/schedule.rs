//! Learning-rate schedule: linear warmup then linear decay to zero.

use crate::error::Error;
use crate::Result;

/// Multiplier in [0, 1] applied to both parameter-group learning rates.
/// Ramps 0 -> 1 over `warmup_iters`, then decays 1 -> 0 at `total_iters`.
pub fn lr_multiplier(step: usize, warmup_iters: usize, total_iters: usize) -> Result<f64> {
    if step > total_iters {
        return Err(Error::StepOutOfRange { step, total: total_iters });
    }
    if step <= warmup_iters {
        if warmup_iters == 0 {
            return Ok(1.0);
        }
        return Ok(step as f64 / warmup_iters as f64);
    }
    Ok((total_iters - step) as f64 / (total_iters - warmup_iters) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_at_end_of_warmup() {
        assert_eq!(lr_multiplier(1500, 1500, 40_000).unwrap(), 1.0);
    }

    #[test]
    fn warmup_midpoint() {
        assert_eq!(lr_multiplier(750, 1500, 40_000).unwrap(), 0.5);
    }

    #[test]
    fn decay_checkpoint() {
        // (40000 - 20750) / (40000 - 1500) = 19250 / 38500 = 0.5
        assert_eq!(lr_multiplier(20_750, 1500, 40_000).unwrap(), 0.5);
    }

    #[test]
    fn zero_at_both_endpoints() {
        assert_eq!(lr_multiplier(0, 1500, 40_000).unwrap(), 0.0);
        assert_eq!(lr_multiplier(40_000, 1500, 40_000).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_is_an_error() {
        assert!(lr_multiplier(40_001, 1500, 40_000).is_err());
    }

    #[test]
    fn piecewise_linear_with_single_peak() {
        let (warmup, total) = (100, 1000);
        let mut prev = lr_multiplier(0, warmup, total).unwrap();
        let mut peaks = 0;
        let mut direction = 1.0;
        for step in 1..=total {
            let cur = lr_multiplier(step, warmup, total).unwrap();
            assert!((0.0..=1.0).contains(&cur));
            // Continuity: consecutive steps never jump more than one slope unit.
            let max_slope = (1.0 / warmup as f64).max(1.0 / (total - warmup) as f64);
            assert!((cur - prev).abs() <= max_slope + 1e-12);
            if direction > 0.0 && cur < prev {
                peaks += 1;
                direction = -1.0;
            }
            prev = cur;
        }
        assert_eq!(peaks, 1);
    }
}
