//! One-dimensional quadrature: adaptive Simpson with Richardson correction and
//! fixed-order Gauss–Legendre.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Absolute tolerance used by every adaptive integral in the closed forms.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Maximum bisection depth of the adaptive rule.
pub const MAX_DEPTH: u32 = 40;
/// Levels that are always bisected before the error test is trusted.
const MIN_DEPTH: u32 = 3;

/// Integral value with its accumulated error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    pub error: f64,
}

fn lincomb<const N: usize>(c: f64, x: &[f64; N], y: &[f64; N], z: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| c * (x[i] + 4.0 * y[i] + z[i]))
}

fn max_abs<const N: usize>(x: &[f64; N]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

struct Walk<'f, const N: usize> {
    f: &'f mut dyn FnMut(f64) -> [f64; N],
    error: f64,
    worst_unconverged: Option<f64>,
    non_finite: bool,
}

impl<const N: usize> Walk<'_, N> {
    fn eval(&mut self, x: f64) -> [f64; N] {
        let y = (self.f)(x);
        if y.iter().any(|v| !v.is_finite()) {
            self.non_finite = true;
        }
        y
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        a: f64,
        fa: [f64; N],
        m: f64,
        fm: [f64; N],
        b: f64,
        fb: [f64; N],
        whole: [f64; N],
        tol: f64,
        depth: u32,
    ) -> [f64; N] {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let left = lincomb((m - a) / 6.0, &fa, &flm, &fm);
        let right = lincomb((b - m) / 6.0, &fm, &frm, &fb);
        let delta: [f64; N] = std::array::from_fn(|i| left[i] + right[i] - whole[i]);
        let err = max_abs(&delta) / 15.0;
        let deep_enough = depth + MIN_DEPTH <= MAX_DEPTH;
        if self.non_finite || (deep_enough && err <= tol) || depth == 0 {
            if depth == 0 && err > tol {
                let worst = self.worst_unconverged.unwrap_or(0.0).max(err);
                self.worst_unconverged = Some(worst);
            }
            self.error += err;
            return std::array::from_fn(|i| left[i] + right[i] + delta[i] / 15.0);
        }
        let l = self.step(a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1);
        let r = self.step(m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
        std::array::from_fn(|i| l[i] + r[i])
    }
}

/// Integrate a vector-valued function on `[a, b]` to absolute tolerance `tol`
/// (measured on the largest component).
pub fn adaptive_simpson_n<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Integral<N>> {
    if a == b {
        return Ok(Integral {
            value: [0.0; N],
            error: 0.0,
        });
    }
    let mut walk = Walk {
        f: &mut f,
        error: 0.0,
        worst_unconverged: None,
        non_finite: false,
    };
    let m = 0.5 * (a + b);
    let fa = walk.eval(a);
    let fm = walk.eval(m);
    let fb = walk.eval(b);
    let whole = lincomb((b - a) / 6.0, &fa, &fm, &fb);
    let value = walk.step(a, fa, m, fm, b, fb, whole, tol, MAX_DEPTH);
    if walk.non_finite || value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature {
            a,
            b,
            tol,
            estimate: f64::INFINITY,
        });
    }
    if let Some(worst) = walk.worst_unconverged {
        return Err(Error::Quadrature {
            a,
            b,
            tol,
            estimate: worst.max(walk.error),
        });
    }
    Ok(Integral {
        value,
        error: walk.error,
    })
}

pub fn adaptive_simpson(f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Integral<1>> {
    let mut f = f;
    adaptive_simpson_n(|x| [f(x)], a, b, tol)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, found by Newton iteration from the
    /// Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// The shared 64-point rule.
    pub fn order64() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(64))
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        half * sum
    }
}

/// `P_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}
