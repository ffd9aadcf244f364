//! The six coefficient brackets obtained by substituting the quadratic
//! ansatz and the optimal policy into the HJB equation. Each must vanish.

use serde::Serialize;

use crate::closedform::ValueFunction;
use crate::error::Result;

use super::{coefficient_rates, relative};

pub const BRACKET_NAMES: [&str; 6] = ["x^2", "x", "l^2", "l", "x*l", "1"];

/// One bracket: its sum and its additive terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bracket {
    pub name: &'static str,
    pub residual: f64,
    pub relative: f64,
    pub terms: Vec<f64>,
}

impl Bracket {
    fn new(name: &'static str, terms: Vec<f64>) -> Self {
        Self {
            name,
            residual: terms.iter().sum(),
            relative: relative(&terms),
            terms,
        }
    }
}

/// Brackets in the order of [`BRACKET_NAMES`].
pub fn ansatz_residuals(vf: &ValueFunction, t: f64, v: f64) -> Result<[Bracket; 6]> {
    let p = vf.params();
    let c = vf.coeffs();
    let (w, a) = (c.varpi, c.a);
    let lam = p.lambda_mort;
    let d = vf.decomposition(t, v)?;
    let r = coefficient_rates(vf, t, v)?;
    let d3 = vf.phi3_full(t, v)?;
    let after_vv = vf.decomposition(t, v + p.eta_vv)?;
    let after_vc = vf.decomposition(t, v + p.eta_vc)?;

    // Only φ3 depends on V; the others still go through the shifted
    // evaluations so that any hidden V-dependence would show up.
    let shifts = |now: f64, vv: f64, vc: f64| [p.lambda_v * (vv - now), p.lambda_c * (vc - now)];
    let [j1v, j1c] = shifts(d.phi1, after_vv.phi1, after_vc.phi1);
    let [j2v, j2c] = shifts(d.phi2, after_vv.phi2, after_vc.phi2);
    let [j3v, j3c] = shifts(d.phi3, after_vv.phi3, after_vc.phi3);
    let [j4v, j4c] = shifts(d.phi4, after_vv.phi4, after_vc.phi4);
    let [j5v, j5c] = shifts(d.phi5, after_vv.phi5, after_vc.phi5);
    let [j6v, j6c] = shifts(d.phi6, after_vv.phi6, after_vc.phi6);
    let diffusion = 0.5 * p.sigma_v * p.sigma_v * v;

    Ok([
        Bracket::new("x^2", vec![r.phi1, a.a1 * d.phi1, j1v, j1c, lam * p.beta2 * p.beta2]),
        Bracket::new(
            "x",
            vec![
                r.phi2,
                a.a2 * d.phi2,
                j2v,
                j2c,
                2.0 * lam * (p.alpha2 * p.beta2 - p.beta2 * p.beta2 * p.x2_star),
            ],
        ),
        Bracket::new(
            "l^2",
            vec![
                r.phi3,
                (a.a3 + v) * d.phi3,
                (p.kappa * (p.delta - v) + 2.0 * p.sigma_v * p.rho_lv * v) * d3.dv,
                diffusion * d3.dvv,
                j3v,
                j3c,
                p.lambda_c * after_vc.phi3 * (p.eta_lc * p.eta_lc + 2.0 * p.eta_lc),
                -d.phi5 * d.phi5 / (4.0 * d.phi1) * (w.varpi1 + w.varpi2).powi(2) / w.varpi4,
                p.xi * d.phi5,
            ],
        ),
        Bracket::new(
            "l",
            vec![
                r.phi4,
                a.a4 * d.phi4,
                j4v,
                j4c,
                p.lambda_c * after_vc.phi4 * p.eta_lc,
                -d.phi2 * d.phi5 / (2.0 * d.phi1) * w.varpi1 * (w.varpi1 + w.varpi2) / w.varpi4,
                p.xi * d.phi2,
            ],
        ),
        Bracket::new(
            "x*l",
            vec![
                r.phi5,
                a.a5 * d.phi5,
                p.lambda_c * p.eta_lc * after_vc.phi5,
                j5v,
                j5c,
                2.0 * p.xi * d.phi1,
            ],
        ),
        Bracket::new(
            "1",
            vec![
                r.phi6,
                -lam * d.phi6,
                j6v,
                j6c,
                -d.phi2 * d.phi2 / (4.0 * d.phi1) * w.varpi1 * w.varpi1 / w.varpi4,
                lam * (p.alpha2 - p.beta2 * p.x2_star).powi(2),
            ],
        ),
    ])
}
