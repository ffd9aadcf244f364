//! Backward Runge–Kutta oracles for the coefficient ODEs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DerivedCoeffs, ModelParams};

/// Absolute and relative tolerance of the oracle integrations.
pub const ORACLE_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 1_000_000;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand–Prince 5(4) from `(t0, y0)` to `t1`, in either
/// direction.
pub fn dopri5<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: f64,
) -> Result<[f64; N]> {
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = span.abs().clamp(1e-6, 0.01) * dir;
    for _ in 0..MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k = [[0.0; N]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for i in 0..N {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err = 0.0_f64;
        for i in 0..N {
            let mut high = 0.0;
            let mut low = 0.0;
            for s in 0..7 {
                high += B5[s] * k[s][i];
                low += B4[s] * k[s][i];
            }
            y5[i] += h * high;
            let scale = tol + tol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (high - low)).abs() / scale);
        }
        if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integrator {
                at: t,
                reason: "non-finite derivative".into(),
            });
        }
        if err <= 1.0 {
            t = if (t + h - t1) * dir >= 0.0 { t1 } else { t + h };
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integrator {
                at: t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
    }
    Err(Error::Integrator {
        at: t,
        reason: format!("more than {MAX_STEPS} steps"),
    })
}

/// Oracle values of the variance-independent coefficients on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTable {
    pub t: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi4: Vec<f64>,
    pub phi5: Vec<f64>,
    pub phi6: Vec<f64>,
}

/// Integrates the five scalar coefficient ODEs jointly, backward from their
/// terminal values at `T`, and records them at each grid time.
pub fn scalar_oracle(p: &ModelParams, grid: &[f64], tol: f64) -> Result<OracleTable> {
    let c = DerivedCoeffs::new(p);
    let (w, a) = (c.varpi, c.a);
    let lam = p.lambda_mort;
    let c5 = a.a5 + p.lambda_c * p.eta_lc;
    let c4 = a.a4 + p.lambda_c * p.eta_lc;
    let k4 = w.varpi1 * (w.varpi1 + w.varpi2) / w.varpi4;
    let k6 = w.varpi1 * w.varpi1 / w.varpi4;
    let death1 = lam * p.beta2 * p.beta2;
    let death2 = 2.0 * lam * (p.alpha2 * p.beta2 - p.beta2 * p.beta2 * p.x2_star);
    let death6 = lam * (p.alpha2 - p.beta2 * p.x2_star).powi(2);

    // y = [φ1, φ2, φ5, φ4, φ6]
    let rhs = |_t: f64, y: &[f64; 5]| {
        let [f1, f2, f5, f4, f6] = *y;
        [
            -a.a1 * f1 - death1,
            -a.a2 * f2 - death2,
            -c5 * f5 - 2.0 * p.xi * f1,
            -c4 * f4 - p.xi * f2 + f2 * f5 / (2.0 * f1) * k4,
            lam * f6 - death6 + f2 * f2 / (4.0 * f1) * k6,
        ]
    };
    let terminal = [
        p.beta1 * p.beta1,
        2.0 * p.beta1 * (p.alpha1 - p.beta1 * p.x1_star),
        0.0,
        0.0,
        (p.alpha1 - p.beta1 * p.x1_star).powi(2),
    ];

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| grid[j].total_cmp(&grid[i]));
    let mut values = vec![[0.0; 5]; grid.len()];
    let (mut t, mut y) = (p.horizon, terminal);
    for i in order {
        if !(0.0..=p.horizon).contains(&grid[i]) {
            return Err(Error::Integrator {
                at: grid[i],
                reason: "grid point outside [0, T]".into(),
            });
        }
        y = dopri5(rhs, t, y, grid[i], tol)?;
        t = grid[i];
        values[i] = y;
    }
    let column = |k: usize| values.iter().map(|v| v[k]).collect();
    Ok(OracleTable {
        t: grid.to_vec(),
        phi1: column(0),
        phi2: column(1),
        phi5: column(2),
        phi4: column(3),
        phi6: column(4),
    })
}

/// The Riccati exponent at each time in `ts`, integrated backward in
/// calendar time from zero at `tau`.
pub fn riccati_oracle(kappa: f64, sigma_v: f64, rho_lv: f64, tau: f64, ts: &[f64], tol: f64) -> Result<Vec<f64>> {
    let b = 2.0 * sigma_v * rho_lv - kappa;
    let rhs = |_t: f64, y: &[f64; 1]| [-0.5 * sigma_v * sigma_v * y[0] * y[0] - b * y[0] - 1.0];
    ts.iter()
        .map(|&t| dopri5(rhs, tau, [0.0], t, tol).map(|y| y[0]))
        .collect()
}

/// The exponential-affine prefactor at time `t` for terminal time `tau`,
/// integrated jointly with the Riccati exponent. `source` is the terminal
/// value at `tau`.
pub fn prefactor_oracle(p: &ModelParams, t: f64, tau: f64, source: f64, tol: f64) -> Result<f64> {
    let a3 = DerivedCoeffs::new(p).a.a3;
    let b = 2.0 * p.sigma_v * p.rho_lv - p.kappa;
    let rate = |y: f64| {
        a3 + p.kappa * p.delta * y
            + p.lambda_v * ((y * p.eta_vv).exp() - 1.0)
            + p.lambda_c * ((y * p.eta_vc).exp() - 1.0)
            + p.lambda_c * (y * p.eta_vc).exp() * (p.eta_lc * p.eta_lc + 2.0 * p.eta_lc)
    };
    let rhs = |_t: f64, y: &[f64; 2]| {
        let [e, k] = *y;
        [-0.5 * p.sigma_v * p.sigma_v * e * e - b * e - 1.0, -rate(e) * k]
    };
    Ok(dopri5(rhs, tau, [0.0, source], t, tol)?[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_decay() {
        let y = dopri5(|_, y: &[f64; 1]| [-0.7 * y[0]], 0.0, [1.0], 3.0, 1e-12).unwrap();
        assert_abs_diff_eq!(y[0], (-2.1f64).exp(), epsilon = 1e-11);
        let back = dopri5(|_, y: &[f64; 1]| [-0.7 * y[0]], 3.0, y, 0.0, 1e-12).unwrap();
        assert_abs_diff_eq!(back[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn harmonic_oscillator() {
        let y = dopri5(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 10.0, 1e-11).unwrap();
        assert_abs_diff_eq!(y[0], 10f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        let r = dopri5(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, 1e-10);
        assert!(matches!(r, Err(Error::Integrator { .. })));
    }

    #[test]
    fn terminal_point_is_exact() {
        let p = ModelParams::baseline();
        let o = scalar_oracle(&p, &[p.horizon], ORACLE_TOL).unwrap();
        assert_eq!(o.phi1[0], p.beta1 * p.beta1);
        assert_eq!(o.phi5[0], 0.0);
        assert_eq!(o.phi6[0], (p.alpha1 - p.beta1 * p.x1_star).powi(2));
    }

    #[test]
    fn phi1_without_mortality() {
        let mut p = ModelParams::baseline();
        p.lambda_mort = 0.0;
        let a1 = DerivedCoeffs::new(&p).a.a1;
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let o = scalar_oracle(&p, &grid, ORACLE_TOL).unwrap();
        for (t, v) in grid.iter().zip(&o.phi1) {
            assert_abs_diff_eq!(*v, p.beta1 * p.beta1 * (a1 * (p.horizon - t)).exp(), epsilon = 1e-10);
        }
    }
}
