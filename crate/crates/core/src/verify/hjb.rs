//! Direct assembly of the HJB operator `Ψ(π)` from the closed-form value
//! function, including every nonlocal jump term.

use crate::closedform::{ValueDecomposition, ValueFunction};
use crate::error::Result;
use crate::model::{real_inflation_jump, ModelParams, State, Varpi};

use super::{coefficient_rates, relative};

/// Everything `Ψ` needs at one state; `Ψ(π)` itself is then cheap.
#[derive(Debug, Clone)]
pub struct HjbPoint {
    pub state: State,
    p: ModelParams,
    varpi: Varpi,
    phi: ValueDecomposition,
    rates: ValueDecomposition,
    phi3_v: f64,
    phi3_vv: f64,
    phi3_after_vv: f64,
    phi3_after_vc: f64,
    pi_star: f64,
}

/// Number of additive terms in `Ψ`.
pub const N_TERMS: usize = 17;

impl HjbPoint {
    pub fn new(vf: &ValueFunction, state: &State) -> Result<Self> {
        state.check(vf.params().horizon)?;
        let p = *vf.params();
        let phi = vf.decomposition(state.t, state.v)?;
        let rates = coefficient_rates(vf, state.t, state.v)?;
        let d3 = vf.phi3_full(state.t, state.v)?;
        Ok(Self {
            state: *state,
            p,
            varpi: vf.coeffs().varpi,
            phi,
            rates,
            phi3_v: d3.dv,
            phi3_vv: d3.dvv,
            phi3_after_vv: vf.phi3(state.t, state.v + p.eta_vv)?,
            phi3_after_vc: vf.phi3(state.t, state.v + p.eta_vc)?,
            pi_star: vf.optimal_policy(state)?.weight_or_err(state.x_bar)?,
        })
    }

    /// The value function at `(X̄, L̄)` with `φ3` replaced by `phi3`.
    fn phi_at(&self, x: f64, l: f64, phi3: f64) -> f64 {
        ValueDecomposition { phi3, ..self.phi }.evaluate(x, l)
    }

    /// The additive terms of `Ψ(π)` in the printed order.
    pub fn terms(&self, pi: f64) -> [f64; N_TERMS] {
        let p = &self.p;
        let d = &self.phi;
        let r = &self.rates;
        let State { x_bar: x, l_bar: l, v, .. } = self.state;
        let phi = d.evaluate(x, l);
        let growth = p.m + 0.5 * p.zeta * p.zeta;
        let cross = p.zeta * p.sigma_pi * p.rho_pi_r;
        let s2 = p.sigma_pi * p.sigma_pi;
        let jump = real_inflation_jump(p);

        let phi_t = r.evaluate(x, l);
        let phi_x = 2.0 * d.phi1 * x + d.phi2 + d.phi5 * l;
        let phi_xx = 2.0 * d.phi1;
        let phi_l = 2.0 * d.phi3 * l + d.phi4 + d.phi5 * x;
        let phi_ll = 2.0 * d.phi3;
        let phi_xl = d.phi5;
        let phi_v = self.phi3_v * l * l;
        let phi_vv = self.phi3_vv * l * l;
        let phi_lv = 2.0 * self.phi3_v * l;

        [
            phi_t,
            p.lambda_mort * (p.alpha2 + p.beta2 * (x - p.x2_star)).powi(2),
            -p.lambda_mort * phi,
            phi_x * x * (growth + pi * (p.mu_s - growth + cross) - p.mu_pi + s2 - cross),
            phi_x * p.xi * l,
            0.5 * phi_xx
                * x
                * x
                * ((1.0 - pi).powi(2) * p.zeta * p.zeta + pi * pi * p.sigma_ss * p.sigma_ss + s2
                    - 2.0 * (1.0 - pi) * cross),
            phi_l * l * (p.mu_l - p.mu_pi + s2),
            0.5 * phi_ll * l * l * (p.sigma_ls * p.sigma_ls + v + s2),
            phi_v * p.kappa * (p.delta - v),
            0.5 * phi_vv * p.sigma_v * p.sigma_v * v,
            phi_xl * x * l * (pi * p.sigma_ss * p.sigma_ls + s2 - (1.0 - pi) * cross),
            phi_lv * l * v * p.sigma_v * p.rho_lv,
            p.lambda_s * (self.phi_at(x * (1.0 + pi * p.eta_s), l, d.phi3) - phi),
            p.lambda_l * (self.phi_at(x, l * (1.0 + p.eta_ll), d.phi3) - phi),
            p.lambda_v * (self.phi_at(x, l, self.phi3_after_vv) - phi),
            p.lambda_c * (self.phi_at(x, l * (1.0 + p.eta_lc), self.phi3_after_vc) - phi),
            p.lambda_pi * (self.phi_at(x * (1.0 + jump), l * (1.0 + jump), d.phi3) - phi),
        ]
    }

    pub fn psi(&self, pi: f64) -> f64 {
        self.terms(pi).iter().sum()
    }

    /// `|Ψ(π)|` relative to its largest additive term.
    pub fn relative_residual(&self, pi: f64) -> f64 {
        relative(&self.terms(pi))
    }

    /// Leading coefficient `φ1 X̄² ϖ4` of the quadratic `Ψ(π)`.
    pub fn curvature(&self) -> f64 {
        self.phi.phi1 * self.state.x_bar * self.state.x_bar * self.varpi.varpi4
    }

    /// Linear coefficient of `Ψ(π)`.
    pub fn slope_at_zero(&self) -> f64 {
        let d = &self.phi;
        let w = &self.varpi;
        let State { x_bar: x, l_bar: l, .. } = self.state;
        (2.0 * d.phi1 * x + d.phi2 + d.phi5 * l) * x * w.varpi1
            + d.phi5 * x * l * w.varpi2
            + 2.0 * d.phi1 * x * x * w.varpi3
    }

    /// Analytic `dΨ/dπ`.
    pub fn dpsi(&self, pi: f64) -> f64 {
        2.0 * self.curvature() * pi + self.slope_at_zero()
    }

    /// `dΨ/dπ` relative to the larger of its two parts.
    pub fn relative_foc(&self, pi: f64) -> f64 {
        relative(&[2.0 * self.curvature() * pi, self.slope_at_zero()])
    }

    /// The closed-form optimal weight at this state.
    pub fn optimal_weight(&self) -> f64 {
        self.pi_star
    }
}

/// `Ψ(π*)` at a state.
pub fn hjb_residual(vf: &ValueFunction, state: &State) -> Result<f64> {
    let h = HjbPoint::new(vf, state)?;
    Ok(h.psi(h.optimal_weight()))
}

/// Analytic `dΨ/dπ` at `π*`.
pub fn foc_residual(vf: &ValueFunction, state: &State) -> Result<f64> {
    let h = HjbPoint::new(vf, state)?;
    Ok(h.dpsi(h.optimal_weight()))
}
