//! Cosine annealing of the per-round retention.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSchedule {
    pub start: f64,
    pub end: f64,
    /// Number of warmup rounds; annealing covers rounds `warmup+1..=rounds`.
    pub warmup: usize,
    pub rounds: usize,
}

impl GammaSchedule {
    /// Retention for 1-indexed round `r`. The first post-warmup round gives
    /// `start` and the final round gives `end`.
    pub fn gamma_at(&self, r: usize) -> Result<f64> {
        if r <= self.warmup || r > self.rounds {
            return Err(Error::Domain(format!(
                "round {r} is outside the annealed range {}..={}",
                self.warmup + 1,
                self.rounds
            )));
        }
        let r_eff = (r - self.warmup - 1) as f64;
        let span = (self.rounds - self.warmup - 1) as f64;
        if span == 0.0 {
            return Ok(self.start);
        }
        let c = (std::f64::consts::PI * r_eff / span).cos();
        Ok(self.end + 0.5 * (self.start - self.end) * (1.0 + c))
    }

    /// Per-pass retention for round `r` with `passes` gossip passes.
    pub fn per_pass(&self, r: usize, passes: usize) -> Result<f64> {
        super::calibrated_retention(self.gamma_at(r)?, passes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sched(rounds: usize) -> GammaSchedule {
        GammaSchedule {
            start: 0.4,
            end: 0.05,
            warmup: rounds / 6,
            rounds,
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let s = sched(61);
        assert_eq!(s.warmup, 10);
        assert_abs_diff_eq!(s.gamma_at(11).unwrap(), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.gamma_at(61).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(s.gamma_at(36).unwrap(), 0.225, epsilon = 1e-12);
    }

    #[test]
    fn warmup_rounds_are_rejected() {
        let s = sched(60);
        assert!(s.gamma_at(10).is_err());
        assert!(s.gamma_at(61).is_err());
        assert!(s.gamma_at(0).is_err());
    }

    #[test]
    fn monotone_and_bounded() {
        let s = sched(100);
        let mut prev = f64::INFINITY;
        for r in s.warmup + 1..=s.rounds {
            let g = s.gamma_at(r).unwrap();
            assert!(g <= prev && (0.05..=0.4).contains(&g));
            let gin = s.per_pass(r, 5).unwrap();
            assert!(gin > 0.0 && gin < 1.0);
            prev = g;
        }
    }

    #[test]
    fn single_annealed_round_uses_start() {
        let s = GammaSchedule {
            start: 0.4,
            end: 0.05,
            warmup: 5,
            rounds: 6,
        };
        assert_eq!(s.gamma_at(6).unwrap(), 0.4);
    }
}
