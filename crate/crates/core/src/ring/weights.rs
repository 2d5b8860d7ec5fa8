//! Fibonacci prior weights, the accuracy gate and the parameter blend.

use crate::error::{Error, Result};

/// The golden ratio.
pub const PHI: f64 = 1.618_033_988_749_895;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FibWeights {
    /// Weight on the left (predecessor) neighbour, `1/φ`.
    pub alpha: f64,
    /// Weight on the right (successor) neighbour, `1/φ²`.
    pub beta: f64,
}

pub fn fib_weights() -> FibWeights {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    FibWeights {
        alpha: 1.0 / phi,
        beta: 1.0 / (phi * phi),
    }
}

/// Gate threshold, gate-failure epsilon and the prior/posterior mixing coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    pub tau: f64,
    pub epsilon: f64,
    /// Weight on the Fibonacci prior; the posterior receives `1 - mix`.
    pub mix: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            tau: 0.35,
            epsilon: 1e-8,
            mix: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GossipWeights {
    pub tau: f64,
    pub epsilon: f64,
    pub g_left: f64,
    pub g_right: f64,
    /// Accuracy posterior; zero when self-retaining.
    pub w_left: f64,
    pub w_right: f64,
    /// Final neighbour weights; zero when self-retaining.
    pub a_left: f64,
    pub a_right: f64,
    pub self_retention_used: bool,
}

/// Gates both neighbour accuracies at `tau` and mixes the resulting posterior
/// with the Fibonacci prior. When both neighbours fail the gate the node
/// keeps its own parameters.
pub fn gate_and_interpolate(a_left: f64, a_right: f64, cfg: GateConfig) -> GossipWeights {
    let gate = |a: f64| if a >= cfg.tau { a } else { 0.0 };
    let (g_left, g_right) = (gate(a_left), gate(a_right));
    let total = g_left + g_right;
    let mut out = GossipWeights {
        tau: cfg.tau,
        epsilon: cfg.epsilon,
        g_left,
        g_right,
        w_left: 0.0,
        w_right: 0.0,
        a_left: 0.0,
        a_right: 0.0,
        self_retention_used: total < cfg.epsilon,
    };
    if out.self_retention_used {
        return out;
    }
    let prior = fib_weights();
    out.w_left = g_left / total;
    out.w_right = g_right / total;
    out.a_left = cfg.mix * prior.alpha + (1.0 - cfg.mix) * out.w_left;
    out.a_right = cfg.mix * prior.beta + (1.0 - cfg.mix) * out.w_right;
    out
}

/// Neighbour weights used by a blend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlendWeights {
    /// The static Fibonacci prior.
    Fibonacci,
    /// Accuracy-gated weights; self-retention leaves the node untouched.
    Gated(GossipWeights),
    /// Arbitrary neighbour weights, e.g. uniform `(1/2, 1/2)`.
    Fixed { left: f64, right: f64 },
}

impl BlendWeights {
    /// `(left, right)` weights, or `None` for self-retention.
    pub fn pair(&self) -> Option<(f64, f64)> {
        match *self {
            BlendWeights::Fibonacci => {
                let w = fib_weights();
                Some((w.alpha, w.beta))
            }
            BlendWeights::Gated(g) if g.self_retention_used => None,
            BlendWeights::Gated(g) => Some((g.a_left, g.a_right)),
            BlendWeights::Fixed { left, right } => Some((left, right)),
        }
    }
}

/// Writes `γ·self + (1-γ)(a_L·left + a_R·right)` into `out`.
pub fn blend_into(
    out: &mut [f64],
    own: &[f64],
    left: &[f64],
    right: &[f64],
    weights: BlendWeights,
    gamma: f64,
) -> Result<()> {
    for len in [out.len(), left.len(), right.len()] {
        if len != own.len() {
            return Err(Error::Shape {
                expected: own.len(),
                got: len,
            });
        }
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Domain(format!("retention {gamma} outside [0, 1]")));
    }
    let Some((a_l, a_r)) = weights.pair() else {
        out.copy_from_slice(own);
        return Ok(());
    };
    let (cl, cr) = ((1.0 - gamma) * a_l, (1.0 - gamma) * a_r);
    for (((o, &s), &l), &r) in out.iter_mut().zip(own).zip(left).zip(right) {
        *o = gamma * s + cl * l + cr * r;
    }
    Ok(())
}

pub fn blend(own: &[f64], left: &[f64], right: &[f64], weights: BlendWeights, gamma: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; own.len()];
    blend_into(&mut out, own, left, right, weights, gamma)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fibonacci_constants() {
        let w = fib_weights();
        assert_abs_diff_eq!(w.alpha, 0.618_033_988_7, epsilon = 1e-10);
        assert_abs_diff_eq!(w.beta, 0.381_966_011_3, epsilon = 1e-10);
        assert_abs_diff_eq!(w.alpha + w.beta, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.alpha / w.beta, PHI, epsilon = 1e-12);
    }

    #[test]
    fn equal_accuracies_recover_shifted_prior() {
        let g = gate_and_interpolate(0.8, 0.8, GateConfig::default());
        let w = fib_weights();
        assert_eq!((g.w_left, g.w_right), (0.5, 0.5));
        assert_abs_diff_eq!(g.a_left, w.alpha / 2.0 + 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(g.a_left, 0.5590, epsilon = 1e-4);
        assert_abs_diff_eq!(g.a_right, 0.4410, epsilon = 1e-4);
        assert_abs_diff_eq!(g.a_left + g.a_right, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gated_neighbour_attains_the_bounds() {
        let g = gate_and_interpolate(0.9, 0.2, GateConfig::default());
        assert_eq!(g.g_right, 0.0);
        assert_eq!(g.w_left, 1.0);
        assert_abs_diff_eq!(g.a_left, 0.8090, epsilon = 1e-4);
        assert_abs_diff_eq!(g.a_right, 0.1910, epsilon = 1e-4);
    }

    #[test]
    fn both_gated_out_self_retains() {
        let g = gate_and_interpolate(0.1, 0.1, GateConfig::default());
        assert!(g.self_retention_used);
        let own = [1.0, 2.0];
        let out = blend(&own, &[5.0, 5.0], &[7.0, 7.0], BlendWeights::Gated(g), 0.3).unwrap();
        assert_eq!(out, own);
    }

    #[test]
    fn gate_is_inclusive_at_tau() {
        let g = gate_and_interpolate(0.35, 0.0, GateConfig::default());
        assert_eq!(g.g_left, 0.35);
        assert!(!g.self_retention_used);
    }

    #[test]
    fn blend_examples() {
        let v = [0.3, -1.2, 4.0];
        assert_eq!(blend(&v, &[9.0; 3], &[-9.0; 3], BlendWeights::Fibonacci, 1.0).unwrap(), v);
        let out = blend(&v, &v, &v, BlendWeights::Fibonacci, 0.37).unwrap();
        for (o, x) in out.iter().zip(&v) {
            assert_abs_diff_eq!(*o, *x, epsilon = 1e-14);
        }
        let s = blend(&[0.0], &[1.0], &[0.0], BlendWeights::Fibonacci, 0.0).unwrap();
        assert_abs_diff_eq!(s[0], 0.618_033_988_7, epsilon = 1e-10);
    }

    #[test]
    fn blend_rejects_mismatched_lengths() {
        let r = blend(&[0.0; 3], &[0.0; 2], &[0.0; 3], BlendWeights::Fibonacci, 0.5);
        assert!(matches!(r, Err(Error::Shape { expected: 3, got: 2 })));
    }
}
