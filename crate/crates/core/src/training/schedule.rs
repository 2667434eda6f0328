use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Linear warmup from 0 to `peak`, then cosine decay towards 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak: f64, total_steps: usize, warmup_fraction: f64) -> Self {
        let total_steps = total_steps.max(1);
        let warmup_steps =
            ((warmup_fraction * total_steps as f64).round() as usize).min(total_steps - 1);
        LrSchedule {
            peak,
            warmup_steps,
            total_steps,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        0.5 * self.peak * (1.0 + (PI * progress).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_cosine() {
        let s = LrSchedule::new(1e-3, 1000, 0.05);
        assert_eq!(s.warmup_steps, 50);
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(25) - 5e-4).abs() < 1e-15);
        let lrs: Vec<f64> = (0..1000).map(|i| s.lr(i)).collect();
        assert_eq!(lrs.iter().filter(|&&v| v == 1e-3).count(), 1);
        assert!(lrs.iter().all(|&v| v <= 1e-3));
        assert!(lrs[999] < 1e-7);
        for w in lrs[50..].windows(2) {
            assert!(w[1] <= w[0]);
        }
        for w in lrs[..51].windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
