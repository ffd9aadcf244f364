//! Closed-form solution of the scalar Riccati equation for the variance
//! exponent of `phi3`.
//!
//! In backward time `s = tau - t` the exponent `y(s)` solves
//!
//! ```text
//! dy/ds = ½ σ_V² y² + b y + 1,   y(0) = 0,   b = 2 σ_V ρ_LV − κ
//! ```
//!
//! whose right-hand side has discriminant `Δ = b² − 2 σ_V²`. The roots used
//! for `Δ > 0` are `(−b ± √Δ) / σ_V²`, the actual zeros of the right-hand
//! side; `h1` is the smaller one and is the limit of `y` as `s → ∞` when
//! `b < 0`.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;

use super::expm1_ratio;

/// Discriminants closer to zero than this use the double-root formula.
pub const DEGENERATE_DISCRIMINANT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RiccatiCase {
    /// `σ_V = 0`: the equation is linear, `y = (e^{bs} − 1) / b`.
    Linear,
    /// `Δ > 0`: two real roots `h1 < h2`.
    TwoRoots { h1: f64, h2: f64, sqrt_disc: f64 },
    /// `|Δ| < 1e-12`: one double root.
    DoubleRoot,
    /// `Δ < 0`: tangent solution with the given phase `atan(b / √−Δ)`.
    Oscillatory { sqrt_neg_disc: f64, phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Riccati {
    pub b: f64,
    pub sigma_v2: f64,
    pub discriminant: f64,
    pub case: RiccatiCase,
    /// Backward time at which `y` diverges, `+∞` if it stays finite.
    pub explosion: f64,
}

impl Riccati {
    pub fn new(kappa: f64, sigma_v: f64, rho_lv: f64) -> Self {
        let b = 2.0 * sigma_v * rho_lv - kappa;
        let sigma_v2 = sigma_v * sigma_v;
        let discriminant = b * b - 2.0 * sigma_v2;

        let (case, explosion) = if sigma_v2 == 0.0 {
            (RiccatiCase::Linear, f64::INFINITY)
        } else if discriminant.abs() < DEGENERATE_DISCRIMINANT {
            let explosion = if b > 0.0 { 2.0 / b } else { f64::INFINITY };
            (RiccatiCase::DoubleRoot, explosion)
        } else if discriminant > 0.0 {
            let sqrt_disc = discriminant.sqrt();
            // cancellation-free roots of ½σ²h² + bh + 1
            let q = -0.5 * (b + b.signum() * sqrt_disc);
            let (r1, r2) = (q / (0.5 * sigma_v2), 1.0 / q);
            let (h1, h2) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let ratio = h1 / h2;
            let explosion = if ratio > 1.0 {
                ratio.ln() / sqrt_disc
            } else {
                f64::INFINITY
            };
            (RiccatiCase::TwoRoots { h1, h2, sqrt_disc }, explosion)
        } else {
            let sqrt_neg_disc = (-discriminant).sqrt();
            let phase = (b / sqrt_neg_disc).atan();
            let explosion = (FRAC_PI_2 - phase) / (0.5 * sqrt_neg_disc);
            (
                RiccatiCase::Oscillatory {
                    sqrt_neg_disc,
                    phase,
                },
                explosion,
            )
        };
        Self {
            b,
            sigma_v2,
            discriminant,
            case,
            explosion,
        }
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self::new(p.kappa, p.sigma_v, p.rho_lv)
    }

    /// `y` after backward time `s ≥ 0`.
    pub fn backward(&self, s: f64) -> Result<f64> {
        if s >= self.explosion {
            return Err(Error::RiccatiExplosion { at: self.explosion });
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let b = self.b;
        let y = match self.case {
            RiccatiCase::Linear => expm1_ratio(b, s),
            RiccatiCase::TwoRoots { h1, h2, sqrt_disc } => {
                let decay = (-sqrt_disc * s).exp();
                h1 * (-(-sqrt_disc * s).exp_m1()) / (1.0 - (h1 / h2) * decay)
            }
            RiccatiCase::DoubleRoot => {
                let c = b * b / (2.0 * self.sigma_v2);
                c * s / (1.0 - 0.5 * b * s)
            }
            RiccatiCase::Oscillatory {
                sqrt_neg_disc,
                phase,
            } => {
                (sqrt_neg_disc / self.sigma_v2) * (phase + 0.5 * sqrt_neg_disc * s).tan()
                    - b / self.sigma_v2
            }
        };
        Ok(y)
    }

    /// The exponent at calendar time `t` for outer integration time `tau`.
    pub fn phi32(&self, t: f64, tau: f64) -> Result<f64> {
        if t > tau {
            return Err(Error::TimeOrder { t, tau });
        }
        self.backward(tau - t)
    }

    /// Right-hand side `½σ²y² + by + 1` of the backward equation.
    pub fn rhs(&self, y: f64) -> f64 {
        0.5 * self.sigma_v2 * y * y + self.b * y + 1.0
    }
}
