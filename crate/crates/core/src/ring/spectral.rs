//! The circulant gossip mixing matrix and its spectrum.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Row-stochastic circulant matrix: self weight `γ`, left neighbour
/// `(1-γ)·α_norm`, right neighbour `(1-γ)·β_norm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingMatrix {
    pub n: usize,
    pub gamma: f64,
    pub alpha_norm: f64,
    pub beta_norm: f64,
}

impl MixingMatrix {
    pub fn new(n: usize, gamma: f64, alpha_norm: f64, beta_norm: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("mixing matrix needs at least 2 nodes, got {n}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Domain(format!("self weight {gamma} outside (0, 1)")));
        }
        if !(alpha_norm > 0.0 && beta_norm > 0.0) || (alpha_norm + beta_norm - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "neighbour weights ({alpha_norm}, {beta_norm}) must be positive and sum to 1"
            )));
        }
        Ok(Self {
            n,
            gamma,
            alpha_norm,
            beta_norm,
        })
    }

    /// Fibonacci-weighted ring.
    pub fn fibonacci(n: usize, gamma: f64) -> Result<Self> {
        let w = super::fib_weights();
        Self::new(n, gamma, w.alpha, w.beta)
    }

    /// Symmetric ring with `(1/2, 1/2)` neighbour weights.
    pub fn uniform(n: usize, gamma: f64) -> Result<Self> {
        Self::new(n, gamma, 0.5, 0.5)
    }

    pub fn left_weight(&self) -> f64 {
        (1.0 - self.gamma) * self.alpha_norm
    }

    pub fn right_weight(&self) -> f64 {
        (1.0 - self.gamma) * self.beta_norm
    }

    /// Dense realization. With two nodes both neighbours are the same client
    /// and their weights add up.
    pub fn dense(&self) -> Array2<f64> {
        let n = self.n;
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] += self.gamma;
            m[[i, (i + n - 1) % n]] += self.left_weight();
            m[[i, (i + 1) % n]] += self.right_weight();
        }
        m
    }

    /// Closed-form eigenvalues `λ_k = γ + a·ω^k + b·ω^{-k}`, `ω = e^{2πi/N}`.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let (a, b) = (self.left_weight(), self.right_weight());
        (0..self.n)
            .map(|k| {
                if k == 0 {
                    return Complex64::new(1.0, 0.0);
                }
                let w = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / self.n as f64);
                self.gamma + a * w + b * w.conj()
            })
            .collect()
    }

    /// Largest eigenvalue modulus excluding `λ_0 = 1`.
    pub fn spectral_radius_excluding_one(&self) -> f64 {
        self.eigenvalues()[1..].iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    pub fn spectrum(&self) -> Spectrum {
        let lambda = self.eigenvalues();
        Spectrum {
            lambda_re: lambda.iter().map(|l| l.re).collect(),
            lambda_im: lambda.iter().map(|l| l.im).collect(),
            rho: self.spectral_radius_excluding_one(),
        }
    }

    /// `ρ` of this matrix next to `ρ` of the uniform matrix with the same `N` and `γ`.
    pub fn compare_with_uniform(&self) -> SpectralComparison {
        let uniform = Self {
            alpha_norm: 0.5,
            beta_norm: 0.5,
            ..*self
        };
        SpectralComparison {
            n: self.n,
            gamma: self.gamma,
            rho: self.spectral_radius_excluding_one(),
            rho_uniform: uniform.spectral_radius_excluding_one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub lambda_re: Vec<f64>,
    pub lambda_im: Vec<f64>,
    pub rho: f64,
}

impl Spectrum {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralComparison {
    pub n: usize,
    pub gamma: f64,
    pub rho: f64,
    pub rho_uniform: f64,
}

/// True when every entry of `M^k` is strictly positive, i.e. every client's
/// parameters reach every other client within `k` passes.
pub fn coverage_check(mix: &MixingMatrix, k: usize) -> bool {
    if k == 0 {
        return false;
    }
    let m = mix.dense();
    let mut p = m.clone();
    for _ in 1..k {
        p = p.dot(&m);
    }
    p.iter().all(|&x| x > 0.0)
}

/// Per-pass retention `γ_r^{1/K}`, so that `K` passes compound to `γ_r`.
pub fn calibrated_retention(gamma_round: f64, passes: usize) -> Result<f64> {
    if !(gamma_round > 0.0 && gamma_round <= 1.0) {
        return Err(Error::Domain(format!("round retention {gamma_round} outside (0, 1]")));
    }
    if passes == 0 {
        return Err(Error::Domain("number of gossip passes must be at least 1".into()));
    }
    Ok(gamma_round.powf(1.0 / passes as f64))
}
