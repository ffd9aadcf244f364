//! Model parameters, their validation, and the derived coefficient blocks.
//!
//! All coefficients are time-constant. Jump magnitudes are deterministic
//! scalars: a jump of the stock moves `S` to `S(1 + eta_S)`, a jump of the
//! variance adds `eta_VV` (or `eta_Vc` for the common shock) to `V`.

use std::fmt;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every constant coefficient of the market, salary, variance and inflation
/// dynamics, together with the objective and initial-state parameters.
///
/// Serialized field names follow the conventional symbols (`mu_S`,
/// `sigma_SS`, `X1_star`, ...). Unknown keys are rejected when loading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Drift parameter of the riskless asset.
    pub m: f64,
    /// Diffusion coefficient of the riskless asset.
    pub zeta: f64,
    /// Initial-price exponent, `S0(0) = e^r`.
    pub r: f64,

    #[serde(rename = "mu_S")]
    pub mu_s: f64,
    #[serde(rename = "sigma_SS")]
    pub sigma_ss: f64,
    #[serde(rename = "eta_S")]
    pub eta_s: f64,
    #[serde(rename = "lambda_S")]
    pub lambda_s: f64,

    #[serde(rename = "mu_L")]
    pub mu_l: f64,
    #[serde(rename = "sigma_LS")]
    pub sigma_ls: f64,
    #[serde(rename = "eta_LL")]
    pub eta_ll: f64,
    #[serde(rename = "eta_Lc")]
    pub eta_lc: f64,
    #[serde(rename = "lambda_L")]
    pub lambda_l: f64,
    /// Intensity of the common shock hitting salary and variance together.
    pub lambda_c: f64,

    /// Mean-reversion rate of the variance.
    pub kappa: f64,
    /// Long-run variance level.
    pub delta: f64,
    #[serde(rename = "sigma_V")]
    pub sigma_v: f64,
    #[serde(rename = "eta_VV")]
    pub eta_vv: f64,
    #[serde(rename = "eta_Vc")]
    pub eta_vc: f64,
    #[serde(rename = "lambda_V")]
    pub lambda_v: f64,

    #[serde(rename = "mu_Pi")]
    pub mu_pi: f64,
    #[serde(rename = "sigma_Pi")]
    pub sigma_pi: f64,
    #[serde(rename = "eta_Pi")]
    pub eta_pi: f64,
    #[serde(rename = "lambda_Pi")]
    pub lambda_pi: f64,

    /// Correlation of the riskless-asset and price-index noises.
    #[serde(rename = "rho_Pir")]
    pub rho_pi_r: f64,
    /// Correlation of the salary and variance noises.
    #[serde(rename = "rho_LV")]
    pub rho_lv: f64,

    /// Contribution rate as a fraction of salary.
    pub xi: f64,
    /// Constant mortality intensity.
    pub lambda_mort: f64,
    /// Retirement horizon in years.
    #[serde(rename = "T")]
    pub horizon: f64,

    pub alpha1: f64,
    pub beta1: f64,
    #[serde(rename = "X1_star")]
    pub x1_star: f64,
    pub alpha2: f64,
    pub beta2: f64,
    #[serde(rename = "X2_star")]
    pub x2_star: f64,

    #[serde(rename = "X0_real")]
    pub x0_real: f64,
    #[serde(rename = "L0_real")]
    pub l0_real: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
}

impl ModelParams {
    /// The reference parameter set shipped as `configs/baseline.json`.
    pub fn baseline() -> Self {
        Self {
            m: 0.02,
            zeta: 0.10,
            r: 0.0,
            mu_s: 0.10,
            sigma_ss: 0.20,
            eta_s: 0.05,
            lambda_s: 1.0,
            mu_l: 0.03,
            sigma_ls: 0.10,
            eta_ll: 0.02,
            eta_lc: 0.01,
            lambda_l: 0.5,
            lambda_c: 0.5,
            kappa: 2.0,
            delta: 0.04,
            sigma_v: 0.3,
            eta_vv: 0.01,
            eta_vc: 0.01,
            lambda_v: 0.5,
            mu_pi: 0.02,
            sigma_pi: 0.02,
            eta_pi: 0.02,
            lambda_pi: 0.5,
            rho_pi_r: 0.5,
            rho_lv: -0.3,
            xi: 0.1,
            lambda_mort: 0.01,
            horizon: 5.0,
            alpha1: 0.5,
            beta1: -1.0,
            x1_star: 1.2,
            alpha2: 0.5,
            beta2: -1.0,
            x2_star: 1.1,
            x0_real: 1.0,
            l0_real: 0.2,
            v0: 0.04,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain f64 fields always serialize")
    }

    /// Check every constraint and collect all failures.
    pub fn validate(self) -> std::result::Result<ValidatedParams, ValidationError> {
        let p = &self;
        let mut violations = Vec::new();
        let named = [
            ("m", p.m),
            ("zeta", p.zeta),
            ("r", p.r),
            ("mu_S", p.mu_s),
            ("sigma_SS", p.sigma_ss),
            ("eta_S", p.eta_s),
            ("lambda_S", p.lambda_s),
            ("mu_L", p.mu_l),
            ("sigma_LS", p.sigma_ls),
            ("eta_LL", p.eta_ll),
            ("eta_Lc", p.eta_lc),
            ("lambda_L", p.lambda_l),
            ("lambda_c", p.lambda_c),
            ("kappa", p.kappa),
            ("delta", p.delta),
            ("sigma_V", p.sigma_v),
            ("eta_VV", p.eta_vv),
            ("eta_Vc", p.eta_vc),
            ("lambda_V", p.lambda_v),
            ("mu_Pi", p.mu_pi),
            ("sigma_Pi", p.sigma_pi),
            ("eta_Pi", p.eta_pi),
            ("lambda_Pi", p.lambda_pi),
            ("rho_Pir", p.rho_pi_r),
            ("rho_LV", p.rho_lv),
            ("xi", p.xi),
            ("lambda_mort", p.lambda_mort),
            ("T", p.horizon),
            ("alpha1", p.alpha1),
            ("beta1", p.beta1),
            ("X1_star", p.x1_star),
            ("alpha2", p.alpha2),
            ("beta2", p.beta2),
            ("X2_star", p.x2_star),
            ("X0_real", p.x0_real),
            ("L0_real", p.l0_real),
            ("V0", p.v0),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                violations.push(Violation {
                    constraint: format!("{name} finite"),
                    value,
                });
            }
        }

        let mut check = |ok: bool, constraint: &'static str, value: f64| {
            if !ok {
                violations.push(Violation {
                    constraint: constraint.to_string(),
                    value,
                });
            }
        };

        check(p.eta_s > -1.0, "eta_S > -1", p.eta_s);
        check(p.eta_ll > -1.0, "eta_LL > -1", p.eta_ll);
        check(p.eta_lc > -1.0, "eta_Lc > -1", p.eta_lc);
        check(p.eta_pi > -1.0, "eta_Pi > -1", p.eta_pi);
        check(p.eta_vv >= 0.0, "eta_VV >= 0", p.eta_vv);
        check(p.eta_vc >= 0.0, "eta_Vc >= 0", p.eta_vc);
        check(p.kappa > 0.0, "kappa > 0", p.kappa);
        check(p.delta > 0.0, "delta > 0", p.delta);
        check(p.sigma_v >= 0.0, "sigma_V >= 0", p.sigma_v);
        check(
            2.0 * p.kappa * p.delta > p.sigma_v * p.sigma_v,
            "2 kappa delta > sigma_V^2",
            2.0 * p.kappa * p.delta - p.sigma_v * p.sigma_v,
        );
        check(p.rho_pi_r > -1.0 && p.rho_pi_r < 1.0, "rho_Pir in (-1, 1)", p.rho_pi_r);
        check(p.rho_lv > -1.0 && p.rho_lv < 1.0, "rho_LV in (-1, 1)", p.rho_lv);
        check((0.0..=1.0).contains(&p.xi), "xi in [0, 1]", p.xi);
        check(p.horizon > 0.0, "T > 0", p.horizon);
        check(p.lambda_mort >= 0.0, "lambda_mort >= 0", p.lambda_mort);
        check(p.alpha1 > 0.0, "alpha1 > 0", p.alpha1);
        check(p.alpha2 > 0.0, "alpha2 > 0", p.alpha2);
        check(p.beta1 < 0.0, "beta1 < 0", p.beta1);
        check(p.beta2 < 0.0, "beta2 < 0", p.beta2);
        check(p.v0 > 0.0, "V0 > 0", p.v0);
        check(p.x0_real > 0.0, "X0_real > 0", p.x0_real);
        check(p.l0_real > 0.0, "L0_real > 0", p.l0_real);
        check(p.lambda_s >= 0.0, "lambda_S >= 0", p.lambda_s);
        check(p.lambda_l >= 0.0, "lambda_L >= 0", p.lambda_l);
        check(p.lambda_c >= 0.0, "lambda_c >= 0", p.lambda_c);
        check(p.lambda_v >= 0.0, "lambda_V >= 0", p.lambda_v);
        check(p.lambda_pi >= 0.0, "lambda_Pi >= 0", p.lambda_pi);
        let varpi4 = derive_varpi(p).varpi4;
        check(varpi4 > 0.0, "varpi4 > 0", varpi4);

        if violations.is_empty() {
            Ok(ValidatedParams(self))
        } else {
            Err(ValidationError { violations })
        }
    }
}

/// A single failed constraint and the value that failed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (got {})", self.constraint, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} parameter constraint(s) violated: {}", .violations.len(), join(.violations))]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn mentions(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parameters that passed [`ModelParams::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedParams(ModelParams);

impl ValidatedParams {
    pub fn into_inner(self) -> ModelParams {
        self.0
    }

    pub fn coeffs(&self) -> DerivedCoeffs {
        DerivedCoeffs::new(&self.0)
    }
}

impl Deref for ValidatedParams {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

/// The four market combinations that drive the optimal stock weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Varpi {
    /// Excess appreciation of the stock over the riskless asset, inflation
    /// covariance and compensated jumps included.
    pub varpi1: f64,
    pub varpi2: f64,
    pub varpi3: f64,
    /// Total instantaneous variance of a unit stock position.
    pub varpi4: f64,
}

/// The five growth rates `a1..a5` of the coefficient equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRates {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

pub fn derive_varpi(p: &ModelParams) -> Varpi {
    let riskless = p.m + 0.5 * p.zeta * p.zeta;
    let cov_r_pi = p.zeta * p.sigma_pi * p.rho_pi_r;
    Varpi {
        varpi1: p.mu_s - riskless + cov_r_pi + p.lambda_s * p.eta_s,
        varpi2: cov_r_pi + p.sigma_ss * p.sigma_ls,
        varpi3: cov_r_pi - p.zeta * p.zeta,
        varpi4: p.zeta * p.zeta + p.sigma_ss * p.sigma_ss + p.lambda_s * p.eta_s * p.eta_s,
    }
}

/// Inflation jump factor seen by real quantities: a price-index jump
/// multiplies real wealth and real salary by `1 + (eta_Pi^2 - eta_Pi)`.
pub fn real_inflation_jump(p: &ModelParams) -> f64 {
    p.eta_pi * p.eta_pi - p.eta_pi
}

pub fn derive_a(p: &ModelParams, w: &Varpi) -> GrowthRates {
    let riskless = p.m + 0.5 * p.zeta * p.zeta;
    let cov_r_pi = p.zeta * p.sigma_pi * p.rho_pi_r;
    let s2_pi = p.sigma_pi * p.sigma_pi;
    let j = real_inflation_jump(p);
    let j_quad = j * j + 2.0 * j;
    let lam = p.lambda_mort;
    let eta_l = p.eta_ll;

    let a1 = p.zeta * p.zeta - 4.0 * cov_r_pi - lam + 2.0 * (riskless - p.mu_pi + s2_pi)
        + s2_pi
        + p.lambda_pi * j_quad
        - (w.varpi1 + w.varpi3).powi(2) / w.varpi4;
    let a2 = riskless - p.mu_pi + s2_pi - cov_r_pi - lam + p.lambda_pi * j
        - w.varpi1 * (w.varpi1 + w.varpi3) / w.varpi4;
    let a3 = 2.0 * (p.mu_l - p.mu_pi + s2_pi) + p.sigma_ls * p.sigma_ls + s2_pi - lam
        + p.lambda_l * eta_l * eta_l
        + 2.0 * p.lambda_l * eta_l
        + p.lambda_pi * j_quad;
    let a4 = p.mu_l - p.mu_pi + s2_pi - lam + p.lambda_l * eta_l + p.lambda_pi * j;
    let a5 = riskless - 2.0 * p.mu_pi + 3.0 * s2_pi - 2.0 * cov_r_pi
        + p.mu_l
        + p.lambda_l * eta_l
        + p.lambda_pi * j_quad
        - lam
        - (w.varpi1 * w.varpi1 + w.varpi1 * w.varpi2 + w.varpi1 * w.varpi3 + w.varpi2 * w.varpi3)
            / w.varpi4;
    GrowthRates { a1, a2, a3, a4, a5 }
}

/// Both coefficient blocks, computed once per parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCoeffs {
    pub varpi: Varpi,
    pub a: GrowthRates,
}

impl DerivedCoeffs {
    pub fn new(p: &ModelParams) -> Self {
        let varpi = derive_varpi(p);
        let a = derive_a(p, &varpi);
        Self { varpi, a }
    }
}

/// A point `(t, X̄, L̄, V)` of the state space: time, real wealth, real salary
/// and instantaneous salary variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub x_bar: f64,
    pub l_bar: f64,
    pub v: f64,
}

impl State {
    pub fn new(t: f64, x_bar: f64, l_bar: f64, v: f64) -> Self {
        Self { t, x_bar, l_bar, v }
    }

    pub fn initial(p: &ModelParams) -> Self {
        Self::new(0.0, p.x0_real, p.l0_real, p.v0)
    }

    pub fn check(&self, horizon: f64) -> Result<()> {
        let finite = self.t.is_finite()
            && self.x_bar.is_finite()
            && self.l_bar.is_finite()
            && self.v.is_finite();
        if !finite || self.t < 0.0 || self.t > horizon || self.v < 0.0 {
            return Err(Error::InvalidState {
                state: *self,
                horizon,
            });
        }
        Ok(())
    }
}
