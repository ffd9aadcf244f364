//! The closed-form value function and optimal investment policy.
//!
//! The value function is quadratic in real wealth `X̄` and real salary `L̄`,
//!
//! ```text
//! φ(t, X̄, L̄, V) = φ1 X̄² + φ2 X̄ + φ3(t, V) L̄² + φ4 L̄ + φ5 X̄ L̄ + φ6
//! ```
//!
//! Only `φ3` depends on the variance. `φ1` and `φ2` are explicit, `φ4`, `φ5`
//! and `φ6` are one-dimensional integrals over `[t, T]`, and `φ3` is a
//! superposition over terminal times `τ` of exponential-affine solutions
//! `φ̃31(t; τ) exp(φ̃32(t; τ) V)` built from the Riccati exponent in
//! [`riccati`].

pub mod riccati;

use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams, State, ValidatedParams, Varpi};
use crate::quad::{adaptive_simpson, adaptive_simpson_n, GaussLegendre, DEFAULT_TOL};

use serde::Serialize;

pub use riccati::{Riccati, RiccatiCase};

/// Number of nodes in the memoized `φ5` table.
pub const PHI5_GRID: usize = 512;
/// Below this `|X̄|` the weight form of the policy is reported as singular.
pub const WEIGHT_SINGULARITY: f64 = 1e-12;

/// `(e^{a h} − 1) / a`, continuous through `a = 0`.
pub fn expm1_ratio(a: f64, h: f64) -> f64 {
    let x = a * h;
    if x.abs() < 1e-8 {
        h * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
    } else {
        x.exp_m1() / a
    }
}

/// The five variance-independent coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiScalars {
    pub phi1: f64,
    pub phi2: f64,
    pub phi4: f64,
    pub phi5: f64,
    pub phi6: f64,
}

/// All six coefficients at one `(t, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueDecomposition {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
    pub phi5: f64,
    pub phi6: f64,
}

impl ValueDecomposition {
    pub fn evaluate(&self, x: f64, l: f64) -> f64 {
        self.phi1 * x * x
            + self.phi2 * x
            + self.phi3 * l * l
            + self.phi4 * l
            + self.phi5 * x * l
            + self.phi6
    }
}

/// `φ3` and its first two variance derivatives, with the quadrature error
/// estimate of the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Phi3 {
    pub value: f64,
    pub dv: f64,
    pub dvv: f64,
    pub error: f64,
}

/// The coefficients the feedback policy needs at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyCoefficients {
    pub phi1: f64,
    pub phi2: f64,
    pub phi5: f64,
    pub varpi: Varpi,
}

impl PolicyCoefficients {
    /// Optimal amount held in the stock, `A* = π* X̄`. Smooth through `X̄ = 0`.
    pub fn amount(&self, x: f64, l: f64) -> f64 {
        let w = &self.varpi;
        let num = (2.0 * self.phi1 * x + self.phi2 + self.phi5 * l) * w.varpi1
            + self.phi5 * l * w.varpi2
            + 2.0 * self.phi1 * x * w.varpi3;
        -num / (2.0 * self.phi1 * w.varpi4)
    }

    /// Optimal stock weight, `None` when `|X̄| < 1e-12`.
    pub fn weight(&self, x: f64, l: f64) -> Option<f64> {
        if x.abs() < WEIGHT_SINGULARITY {
            return None;
        }
        let w = &self.varpi;
        let denom = 2.0 * self.phi1 * x;
        Some(
            -(2.0 * self.phi1 * x + self.phi2 + self.phi5 * l) / denom * w.varpi1 / w.varpi4
                - self.phi5 * l / denom * w.varpi2 / w.varpi4
                - w.varpi3 / w.varpi4,
        )
    }
}

/// Optimal control at a state, in weight and amount form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalPolicy {
    pub weight: Option<f64>,
    pub amount: f64,
}

impl OptimalPolicy {
    pub fn weight_or_err(&self, x_bar: f64) -> Result<f64> {
        self.weight.ok_or(Error::SingularWeight { x_bar })
    }
}

/// Evaluator for the closed-form solution of one validated parameter set.
///
/// Construction tabulates `φ5` on a uniform grid; everything else is
/// computed on demand. The struct is immutable afterwards and can be shared
/// freely across threads.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    params: ValidatedParams,
    coeffs: DerivedCoeffs,
    riccati: Riccati,
    phi5_table: Vec<f64>,
}

impl ValueFunction {
    pub fn new(params: ValidatedParams) -> Result<Self> {
        let coeffs = params.coeffs();
        let riccati = Riccati::from_params(&params);
        let mut vf = Self {
            params,
            coeffs,
            riccati,
            phi5_table: Vec::new(),
        };
        let horizon = vf.params.horizon;
        let last = (PHI5_GRID - 1) as f64;
        let table = (0..PHI5_GRID)
            .map(|i| vf.phi5_direct(horizon * (i as f64 / last)))
            .collect::<Result<Vec<_>>>()?;
        vf.phi5_table = table;
        Ok(vf)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn validated(&self) -> &ValidatedParams {
        &self.params
    }

    pub fn coeffs(&self) -> &DerivedCoeffs {
        &self.coeffs
    }

    pub fn riccati(&self) -> &Riccati {
        &self.riccati
    }

    fn remaining(&self, t: f64) -> f64 {
        self.params.horizon - t
    }

    /// Effective growth rate of `φ5`, `a5 + λ_c η_Lc`.
    pub fn phi5_rate(&self) -> f64 {
        self.coeffs.a.a5 + self.params.lambda_c * self.params.eta_lc
    }

    /// Effective growth rate of `φ4`, `a4 + λ_c η_Lc`.
    pub fn phi4_rate(&self) -> f64 {
        self.coeffs.a.a4 + self.params.lambda_c * self.params.eta_lc
    }

    pub fn phi1(&self, t: f64) -> f64 {
        let p = &self.params;
        let a1 = self.coeffs.a.a1;
        let h = self.remaining(t);
        p.lambda_mort * p.beta2 * p.beta2 * expm1_ratio(a1, h) + p.beta1 * p.beta1 * (a1 * h).exp()
    }

    pub fn phi2(&self, t: f64) -> f64 {
        let p = &self.params;
        let a2 = self.coeffs.a.a2;
        let h = self.remaining(t);
        2.0 * p.lambda_mort * (p.alpha2 * p.beta2 - p.beta2 * p.beta2 * p.x2_star) * expm1_ratio(a2, h)
            + 2.0 * p.beta1 * (p.alpha1 - p.beta1 * p.x1_star) * (a2 * h).exp()
    }

    /// `φ5` by direct adaptive quadrature, bypassing the table.
    pub fn phi5_direct(&self, t: f64) -> Result<f64> {
        let c = self.phi5_rate();
        let xi = self.params.xi;
        let r = adaptive_simpson(
            |s| (c * (s - t)).exp() * self.phi1(s),
            t,
            self.params.horizon,
            DEFAULT_TOL,
        )?;
        Ok(2.0 * xi * r.value[0])
    }

    /// `φ5` by four-point Lagrange interpolation in the memoized table.
    pub fn phi5(&self, t: f64) -> f64 {
        let last = PHI5_GRID - 1;
        let u = t / self.params.horizon * last as f64;
        let start = (u.floor() as isize - 1).clamp(0, last as isize - 3) as usize;
        let nodes = [start, start + 1, start + 2, start + 3];
        let mut acc = 0.0;
        for (j, &nj) in nodes.iter().enumerate() {
            let mut basis = 1.0;
            for (k, &nk) in nodes.iter().enumerate() {
                if k != j {
                    basis *= (u - nk as f64) / (nj as f64 - nk as f64);
                }
            }
            acc += basis * self.phi5_table[nj];
        }
        acc
    }

    pub fn phi4(&self, t: f64) -> Result<f64> {
        let c = self.phi4_rate();
        let p = &self.params;
        let w = &self.coeffs.varpi;
        let k = w.varpi1 * (w.varpi1 + w.varpi2) / w.varpi4;
        let r = adaptive_simpson(
            |s| {
                let (p1, p2, p5) = (self.phi1(s), self.phi2(s), self.phi5(s));
                (c * (s - t)).exp() * (p.xi * p2 - p2 * p5 / (2.0 * p1) * k)
            },
            t,
            p.horizon,
            DEFAULT_TOL,
        )?;
        Ok(r.value[0])
    }

    pub fn phi6(&self, t: f64) -> Result<f64> {
        let p = &self.params;
        let w = &self.coeffs.varpi;
        let lam = p.lambda_mort;
        let death = lam * (p.alpha2 - p.beta2 * p.x2_star).powi(2);
        let k = w.varpi1 * w.varpi1 / w.varpi4;
        let r = adaptive_simpson(
            |s| {
                let (p1, p2) = (self.phi1(s), self.phi2(s));
                (-lam * (s - t)).exp() * (death - p2 * p2 / (4.0 * p1) * k)
            },
            t,
            p.horizon,
            DEFAULT_TOL,
        )?;
        let terminal = (p.alpha1 - p.beta1 * p.x1_star).powi(2) * (-lam * self.remaining(t)).exp();
        Ok(r.value[0] + terminal)
    }

    pub fn scalars(&self, t: f64) -> Result<PhiScalars> {
        Ok(PhiScalars {
            phi1: self.phi1(t),
            phi2: self.phi2(t),
            phi4: self.phi4(t)?,
            phi5: self.phi5(t),
            phi6: self.phi6(t)?,
        })
    }

    pub fn policy_coefficients(&self, t: f64) -> PolicyCoefficients {
        PolicyCoefficients {
            phi1: self.phi1(t),
            phi2: self.phi2(t),
            phi5: self.phi5(t),
            varpi: self.coeffs.varpi,
        }
    }

    /// Source term of the `φ3` equation at time `tau`.
    pub fn f3(&self, tau: f64) -> f64 {
        let w = &self.coeffs.varpi;
        let p5 = self.phi5(tau);
        -p5 * p5 / (4.0 * self.phi1(tau)) * (w.varpi1 + w.varpi2).powi(2) / w.varpi4
            + self.params.xi * p5
    }

    fn exponent_rate(&self, y: f64) -> f64 {
        let p = &self.params;
        let common = (y * p.eta_vc).exp_m1();
        self.coeffs.a.a3
            + p.kappa * p.delta * y
            + p.lambda_v * (y * p.eta_vv).exp_m1()
            + p.lambda_c * common
            + p.lambda_c * (1.0 + common) * (p.eta_lc * p.eta_lc + 2.0 * p.eta_lc)
    }

    /// `∫_t^τ f31(s; τ) ds`, which depends only on `τ − t`.
    fn log_growth(&self, span: f64) -> Result<f64> {
        if span == 0.0 {
            return Ok(0.0);
        }
        if span >= self.riccati.explosion {
            return Err(Error::RiccatiExplosion {
                at: self.riccati.explosion,
            });
        }
        let riccati = &self.riccati;
        Ok(GaussLegendre::order64().integrate(
            |u| {
                let y = riccati.backward(u).expect("inside the explosion time");
                self.exponent_rate(y)
            },
            0.0,
            span,
        ))
    }

    pub fn tilde_phi32(&self, t: f64, tau: f64) -> Result<f64> {
        self.riccati.phi32(t, tau)
    }

    pub fn tilde_phi31(&self, t: f64, tau: f64) -> Result<f64> {
        if t > tau {
            return Err(Error::TimeOrder { t, tau });
        }
        Ok(self.log_growth(tau - t)?.exp() * self.f3(tau))
    }

    /// `φ3(t, V)` with `∂φ3/∂V` and `∂²φ3/∂V²`, differentiated under the
    /// integral over terminal times.
    pub fn phi3_full(&self, t: f64, v: f64) -> Result<Phi3> {
        self.phi3_full_tol(t, v, DEFAULT_TOL)
    }

    /// As [`Self::phi3_full`] with an explicit absolute quadrature tolerance.
    pub fn phi3_full_tol(&self, t: f64, v: f64, tol: f64) -> Result<Phi3> {
        let horizon = self.params.horizon;
        if self.params.xi == 0.0 || t >= horizon {
            return Ok(Phi3 {
                value: 0.0,
                dv: 0.0,
                dvv: 0.0,
                error: 0.0,
            });
        }
        let mut failure = None;
        let r = adaptive_simpson_n(
            |tau| {
                let span = tau - t;
                let terms = self.riccati.backward(span).and_then(|y| {
                    let g = self.log_growth(span)?;
                    let k = self.f3(tau) * (g + y * v).exp();
                    Ok([k, k * y, k * y * y])
                });
                terms.unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    [f64::NAN; 3]
                })
            },
            t,
            horizon,
            tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let r = r?;
        Ok(Phi3 {
            value: r.value[0],
            dv: r.value[1],
            dvv: r.value[2],
            error: r.error,
        })
    }

    pub fn phi3(&self, t: f64, v: f64) -> Result<f64> {
        Ok(self.phi3_full(t, v)?.value)
    }

    pub fn decomposition(&self, t: f64, v: f64) -> Result<ValueDecomposition> {
        let s = self.scalars(t)?;
        Ok(ValueDecomposition {
            phi1: s.phi1,
            phi2: s.phi2,
            phi3: self.phi3(t, v)?,
            phi4: s.phi4,
            phi5: s.phi5,
            phi6: s.phi6,
        })
    }

    /// `φ(t, X̄, L̄, V)`. At `t = T` this is the terminal loss, evaluated
    /// in factored form.
    pub fn value(&self, state: &State) -> Result<f64> {
        let p = &self.params;
        state.check(p.horizon)?;
        if state.t == p.horizon {
            return Ok((p.alpha1 + p.beta1 * (state.x_bar - p.x1_star)).powi(2));
        }
        Ok(self
            .decomposition(state.t, state.v)?
            .evaluate(state.x_bar, state.l_bar))
    }

    pub fn optimal_policy(&self, state: &State) -> Result<OptimalPolicy> {
        state.check(self.params.horizon)?;
        let c = self.policy_coefficients(state.t);
        Ok(OptimalPolicy {
            weight: c.weight(state.x_bar, state.l_bar),
            amount: c.amount(state.x_bar, state.l_bar),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn baseline() -> ValueFunction {
        ValueFunction::new(ModelParams::baseline().validate().unwrap()).unwrap()
    }

    fn with(f: impl FnOnce(&mut ModelParams)) -> ValueFunction {
        let mut p = ModelParams::baseline();
        f(&mut p);
        ValueFunction::new(p.validate().unwrap()).unwrap()
    }

    #[test]
    fn expm1_ratio_is_continuous_at_zero() {
        assert_eq!(expm1_ratio(0.0, 2.0), 2.0);
        assert_relative_eq!(expm1_ratio(1e-10, 2.0), 2.0 * (1.0 + 1e-10), max_relative = 1e-15);
        assert_relative_eq!(expm1_ratio(0.3, 2.0), (0.6f64.exp() - 1.0) / 0.3, max_relative = 1e-14);
    }

    #[test]
    fn terminal_conditions() {
        let vf = baseline();
        let p = *vf.params();
        let s = vf.scalars(p.horizon).unwrap();
        assert_eq!(s.phi1, p.beta1 * p.beta1);
        assert_eq!(s.phi2, 2.0 * p.beta1 * (p.alpha1 - p.beta1 * p.x1_star));
        assert_eq!(s.phi4, 0.0);
        assert_eq!(s.phi5, 0.0);
        assert_eq!(s.phi6, (p.alpha1 - p.beta1 * p.x1_star).powi(2));
        assert_eq!(vf.phi3(p.horizon, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn phi1_without_mortality() {
        // λ = 0, a1 = -0.1, β1 = -1, T - t = 1
        let h = 1.0;
        let a1 = -0.1;
        let lam = 0.0;
        let beta1: f64 = -1.0;
        let phi1 = lam * expm1_ratio(a1, h) + beta1 * beta1 * (a1 * h).exp();
        assert_abs_diff_eq!(phi1, 0.904837, epsilon = 5e-7);

        let vf = with(|p| p.lambda_mort = 0.0);
        let a1 = vf.coeffs().a.a1;
        assert_relative_eq!(vf.phi1(2.0), (a1 * 3.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn phi1_is_positive() {
        let vf = baseline();
        for k in 0..=50 {
            assert!(vf.phi1(k as f64 * 0.1) > 0.0);
        }
    }

    #[test]
    fn table_interpolation_matches_direct_quadrature() {
        let vf = baseline();
        for k in 0..37 {
            let t = k as f64 * 0.1371;
            assert_abs_diff_eq!(vf.phi5(t), vf.phi5_direct(t).unwrap(), epsilon = 1e-11);
        }
    }

    #[test]
    fn no_contribution_kills_salary_terms() {
        let vf = with(|p| p.xi = 0.0);
        for t in [0.0, 1.3, 4.9] {
            let s = vf.scalars(t).unwrap();
            assert_eq!(s.phi5, 0.0);
            assert_eq!(s.phi4, 0.0);
            assert_eq!(vf.phi3(t, 0.04).unwrap(), 0.0);
            assert_eq!(vf.tilde_phi31(t, 5.0).unwrap(), 0.0);
        }
        let a = vf.value(&State::new(0.5, 1.0, 0.2, 0.04)).unwrap();
        let b = vf.value(&State::new(0.5, 1.0, 3.0, 0.4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn value_at_target_is_alpha1_squared() {
        let vf = baseline();
        let p = *vf.params();
        let v = vf
            .value(&State::new(p.horizon, p.x1_star, 0.7, 0.2))
            .unwrap();
        assert_relative_eq!(v, p.alpha1 * p.alpha1, max_relative = 1e-14);
    }

    #[test]
    fn terminal_value_is_terminal_loss() {
        let vf = with(|p| p.beta2 = -1e-300);
        let p = *vf.params();
        for x in [-1.0, 0.3, 2.5] {
            let v = vf.value(&State::new(p.horizon, x, 0.2, 0.04)).unwrap();
            assert_relative_eq!(v, (p.alpha1 + p.beta1 * (x - p.x1_star)).powi(2), max_relative = 1e-14);
        }
    }

    #[test]
    fn tilde_phi31_at_tau_is_the_source() {
        let vf = baseline();
        assert_eq!(vf.tilde_phi31(2.0, 2.0).unwrap(), vf.f3(2.0));
        assert!(vf.tilde_phi31(2.5, 2.0).is_err());
    }

    #[test]
    fn phi3_derivative_matches_difference() {
        let vf = baseline();
        let full = vf.phi3_full(1.0, 0.05).unwrap();
        let h = 1e-4;
        let fd = (vf.phi3(1.0, 0.05 + h).unwrap() - vf.phi3(1.0, 0.05 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(full.dv, fd, max_relative = 1e-6);
        assert!(full.value > 0.0);
    }

    #[test]
    fn policy_forms_agree() {
        let vf = baseline();
        for x in [-2.0, -1e-3, 0.5, 1.0, 3.0] {
            let pol = vf.optimal_policy(&State::new(1.0, x, 0.2, 0.04)).unwrap();
            assert_relative_eq!(pol.weight.unwrap() * x, pol.amount, max_relative = 1e-12);
        }
        let at_zero = vf.optimal_policy(&State::new(1.0, 0.0, 0.2, 0.04)).unwrap();
        assert!(at_zero.weight.is_none());
        assert!(at_zero.weight_or_err(0.0).is_err());
        let near = vf.optimal_policy(&State::new(1.0, 1e-9, 0.2, 0.04)).unwrap();
        assert_abs_diff_eq!(near.amount, at_zero.amount, epsilon = 1e-8);
    }

    #[test]
    fn policy_without_contributions() {
        let vf = with(|p| p.xi = 0.0);
        let w = vf.coeffs().varpi;
        let c = vf.policy_coefficients(0.7);
        let x = 1.3;
        let expected = -(2.0 * c.phi1 * x + c.phi2) / (2.0 * c.phi1 * x) * w.varpi1 / w.varpi4
            - w.varpi3 / w.varpi4;
        assert_relative_eq!(c.weight(x, 0.4).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn policy_when_marginal_wealth_term_vanishes() {
        let vf = baseline();
        let c = vf.policy_coefficients(0.7);
        let w = vf.coeffs().varpi;
        let l = 0.3;
        let x = -(c.phi2 + c.phi5 * l) / (2.0 * c.phi1);
        let expected = -c.phi5 * l * w.varpi2 / (2.0 * c.phi1 * x * w.varpi4) - w.varpi3 / w.varpi4;
        assert_relative_eq!(c.weight(x, l).unwrap(), expected, max_relative = 1e-9);
    }
}
