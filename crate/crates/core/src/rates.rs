//! Closed-form theory numbers. All logarithms are natural.
//!
//! Absolute constants that the theory only proves to exist are explicit
//! arguments; [`DEFAULT_CONSTANT`] is used for reporting.

use std::f64::consts::E;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StructureSpec;
use crate::simulate::ModelFamily;

pub const DEFAULT_CONSTANT: f64 = 1.0;

/// Lower end of the critical-radius search interval.
pub const EPSILON_MIN: f64 = 1e-8;
const BISECTION_STEPS: usize = 200;
const FALLBACK_GRID: usize = 10_000;
const PROBE_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_x: f64,
    pub r_b: f64,
    pub r_z: f64,
    pub total: f64,
    pub frobenius_lower: Option<f64>,
    pub spectral_lower: Option<f64>,
}

/// `count · s · ln(e k / s)` with `0 · ln(x / 0) = 0`.
fn sparse_entropy(count: usize, s: usize, k: usize) -> f64 {
    if s == 0 {
        0.0
    } else {
        (count * s) as f64 * (E * k as f64 / s as f64).ln()
    }
}

/// `R_X`, `R_B`, `R_Z` and their sum.
pub fn rate_components(spec: &StructureSpec) -> RateReport {
    let (n, m) = (spec.n as f64, spec.m as f64);
    let (r_n, r_m) = (spec.r_n() as f64, spec.r_m() as f64);
    let r_x = if spec.s_n == 0 {
        0.0
    } else {
        (n * r_m).min(sparse_entropy(spec.n, spec.s_n, spec.k_n))
    };
    let r_z = if spec.s_m == 0 {
        0.0
    } else {
        (m * r_n).min(sparse_entropy(spec.m, spec.s_m, spec.k_m))
    };
    let r_b = r_n * r_m;
    RateReport {
        r_x,
        r_b,
        r_z,
        total: r_x + r_b + r_z,
        frobenius_lower: None,
        spectral_lower: None,
    }
}

/// [`rate_components`] with the lower-bound values filled in.
pub fn rate_report(spec: &StructureSpec, sigma: f64, p: f64, c_frob: f64, c_spec: f64) -> Result<RateReport> {
    let lower = lower_values(spec, sigma, p, c_frob, c_spec)?;
    Ok(RateReport {
        frobenius_lower: Some(lower.frobenius),
        spectral_lower: Some(lower.spectral),
        ..rate_components(spec)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBounds {
    pub frobenius: f64,
    pub spectral: f64,
}

/// `c_frob σ²/p (R_X + R_B + R_Z)` and `c_spec σ²/p (n ∨ m)`.
pub fn lower_values(spec: &StructureSpec, sigma: f64, p: f64, c_frob: f64, c_spec: f64) -> Result<LowerBounds> {
    if !(sigma >= 0.0) {
        return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0, 1], got {p}")));
    }
    if !(c_frob > 0.0 && c_spec > 0.0) {
        return Err(Error::Parameter("constants must be positive".into()));
    }
    let scale = sigma * sigma / p;
    Ok(LowerBounds {
        frobenius: c_frob * scale * rate_components(spec).total,
        spectral: c_spec * scale * spec.n.max(spec.m) as f64,
    })
}

/// Minimax rate table for the families that have a closed form.
pub fn family_rate(family: &ModelFamily) -> Result<f64> {
    family.validate()?;
    let ln = f64::ln;
    Ok(match *family {
        ModelFamily::Mixture { n, m, k } => {
            let (n, m, k) = (n as f64, m as f64, k as f64);
            (n * ln(E * k) + k * m).min(n * m)
        }
        ModelFamily::Dictionary { d, n, k, s } => {
            let (d, n, k, s) = (d as f64, n as f64, k as f64, s as f64);
            (n * s * ln(E * k / s) + k * d).min(n * d)
        }
        ModelFamily::Sbm { n, k } => {
            let (n, k) = (n as f64, k as f64);
            n * ln(E * k) + k * k
        }
        ModelFamily::Biclustering { n, m, k_n, k_m } => {
            let (n, m, kn, km) = (n as f64, m as f64, k_n as f64, k_m as f64);
            let a = n * ln(E * kn) + m * ln(E * km) + kn * km;
            let b = n * km + m * ln(E * km);
            let c = m * kn + n * ln(E * kn);
            a.min(b).min(c).min(n * m)
        }
        ModelFamily::MixedMembership { .. } | ModelFamily::Generic { .. } => {
            return Err(Error::UnsupportedFamily(format!(
                "{} has no closed-form rate",
                family.name()
            )))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub epsilon: f64,
    pub u: f64,
    pub epsilon0: Option<f64>,
}

impl CoveringReport {
    /// `R₁ ∧ R₂ ∧ R₃ ∧ R₄`.
    pub fn bound(&self) -> f64 {
        self.r1.min(self.r2).min(self.r3).min(self.r4)
    }
}

/// `coef · ln(arg)` floored at zero; zero when `coef = 0`.
fn log_term(coef: f64, arg: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * arg.ln().max(0.0)
    }
}

/// Upper bounds on the log covering number of the bounded class intersected
/// with a Frobenius ball of radius `u`.
pub fn covering_bounds(spec: &StructureSpec, u: f64, epsilon: f64) -> Result<CoveringReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::Parameter(format!("u must lie in (0, 1], got {u}")));
    }
    if !spec.bounded {
        return Err(Error::Parameter("covering bounds need a bounded spec".into()));
    }
    Ok(covering_unchecked(spec, u, epsilon))
}

fn covering_unchecked(spec: &StructureSpec, u: f64, eps: f64) -> CoveringReport {
    let (n, m) = (spec.n as f64, spec.m as f64);
    let (s_n, s_m) = (spec.s_n as f64, spec.s_m as f64);
    let (r_n, r_m) = (spec.r_n() as f64, spec.r_m() as f64);
    let ent_n = sparse_entropy(spec.n, spec.s_n, spec.k_n);
    let ent_m = sparse_entropy(spec.m, spec.s_m, spec.k_m);
    let root = (m * n).sqrt();
    let r1 = ent_n
        + ent_m
        + log_term(n * s_n + m * s_m, 6.0 * spec.b_max * root * s_m * s_n / eps)
        + log_term(r_n * r_m, 9.0 * u / eps);
    let r2 = log_term(n * r_m, 6.0 * u / eps) + ent_m + log_term(m * s_m, 2.0 * spec.b_max * root * s_m * s_n / eps);
    let r3 = log_term(m * r_n, 6.0 * u / eps) + ent_n + log_term(n * s_n, 2.0 * spec.b_max * root * s_m * s_n / eps);
    let r4 = log_term(m * n, 3.0 * u / eps);
    CoveringReport {
        r1,
        r2,
        r3,
        r4,
        epsilon: eps,
        u,
        epsilon0: None,
    }
}

/// `ε ↦ R₁(ε) ∧ … ∧ R₄(ε)` for a bounded spec and radius `u`.
pub fn covering_surrogate(spec: &StructureSpec, u: f64) -> Result<impl Fn(f64) -> f64 + '_> {
    covering_bounds(spec, u, 0.5)?;
    Ok(move |eps: f64| covering_unchecked(spec, u, eps).bound())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMethod {
    Bisection,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRadius {
    pub epsilon0: f64,
    pub method: RadiusMethod,
    /// `N ε² < log N_ε` on all of `(ε_min, 1]`; `ε₀` is clamped to 1.
    pub saturated: bool,
}

fn log_grid(points: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (EPSILON_MIN.ln(), 0.0f64);
    (0..points).map(move |i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
}

/// Critical radius solving `½ log N_ε ≤ N ε² ≤ log N_ε` for a non-increasing
/// log-covering function.
pub fn critical_radius<F>(total_entries: usize, covering_fn: F) -> Result<CriticalRadius>
where
    F: Fn(f64) -> f64,
{
    if total_entries == 0 {
        return Err(Error::Parameter("total_entries must be positive".into()));
    }
    let nn = total_entries as f64;
    let mut prev = f64::INFINITY;
    for eps in log_grid(PROBE_GRID) {
        let v = covering_fn(eps);
        if v > prev * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Contract(format!(
                "covering function increases at ε = {eps:e} ({prev} → {v})"
            )));
        }
        prev = v;
    }

    let g = |eps: f64| nn * eps * eps - covering_fn(eps);
    if g(1.0) <= 0.0 {
        return Ok(CriticalRadius {
            epsilon0: 1.0,
            method: RadiusMethod::Bisection,
            saturated: true,
        });
    }
    let (mut lo, mut hi) = (EPSILON_MIN, 1.0);
    if g(lo) < 0.0 {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        hi = lo;
    }
    let eps0 = 0.5 * (lo + hi);
    let f0 = covering_fn(eps0);
    let lhs = nn * eps0 * eps0;
    let slack = 1e-9 * f0.abs().max(1.0);
    if 0.5 * f0 <= lhs + slack && lhs <= f0 + slack {
        return Ok(CriticalRadius {
            epsilon0: eps0,
            method: RadiusMethod::Bisection,
            saturated: false,
        });
    }

    // Discontinuous covering function: average of the inf/sup characterisation.
    let mut first_above = None;
    let mut last_below = None;
    for eps in log_grid(FALLBACK_GRID) {
        let v = g(eps);
        if v > 0.0 && first_above.is_none() {
            first_above = Some(eps);
        }
        if v < 0.0 {
            last_below = Some(eps);
        }
    }
    let inf = first_above.unwrap_or(1.0);
    let sup = last_below.unwrap_or(EPSILON_MIN);
    Ok(CriticalRadius {
        epsilon0: 0.5 * (inf + sup),
        method: RadiusMethod::Grid,
        saturated: false,
    })
}

/// Gaussian KL divergence between observation laws, `p ‖θ − θ′‖²/(2σ²)`.
pub fn kl_divergence(theta: &DMatrix<f64>, theta_prime: &DMatrix<f64>, p: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0, 1], got {p}")));
    }
    if theta.shape() != theta_prime.shape() {
        return Err(Error::shape(
            "theta_prime",
            format!("{:?} vs {:?}", theta.shape(), theta_prime.shape()),
        ));
    }
    Ok(p * (theta - theta_prime).norm_squared() / (2.0 * sigma * sigma))
}

/// Sparsity penalty `R(s_n, s_m)` of the adaptive estimator, transcribed as
/// printed (note `k_n` appears in both sparse log terms).
pub fn penalty(s_n: usize, s_m: usize, spec: &StructureSpec) -> Result<f64> {
    if s_n < 1 || s_n > spec.k_n || s_m < 1 || s_m > spec.k_m {
        return Err(Error::Parameter(format!(
            "penalty needs 1 ≤ s_n ≤ {} and 1 ≤ s_m ≤ {}, got ({s_n}, {s_m})",
            spec.k_n, spec.k_m
        )));
    }
    let (n, m) = (spec.n as f64, spec.m as f64);
    let (r_n, r_m) = (spec.r_n() as f64, spec.r_m() as f64);
    let short = spec.n.min(spec.m) as f64;
    let dense_log = (6.0 * short.sqrt()).ln();
    let sparse_log = (spec.k_n as f64 * s_m as f64 * short).ln();
    let row_term = (n * r_m * dense_log).min(n * s_n as f64 * sparse_log);
    let col_term = (m * r_n * dense_log).min(m * s_m as f64 * sparse_log);
    Ok(row_term + col_term + r_n * r_m * (9.0 * short.sqrt()).ln())
}

/// Regularisation weight `8 (σ ∨ θ_mx)²` of the adaptive estimator.
pub fn default_adaptive_lambda(sigma: f64, theta_mx: f64) -> f64 {
    let s = sigma.max(theta_mx);
    8.0 * s * s
}

/// Side condition `n m ln(3√(n∧m)) ≥ 6 ln(k_n k_m)` and `d ≥ 10` of the
/// adaptive estimator's guarantee.
pub fn adaptive_condition_holds(spec: &StructureSpec) -> bool {
    let short = spec.n.min(spec.m) as f64;
    let lhs = (spec.n * spec.m) as f64 * (3.0 * short.sqrt()).ln();
    lhs >= 6.0 * ((spec.k_n * spec.k_m) as f64).ln() && spec.d() >= 10
}

/// Threshold `c (b + θ_mx) √((n ∨ m)/p)` for hard thresholding. Warns when
/// `p < ln(n+m)/(n ∨ m)`.
pub fn spectral_threshold(b: f64, theta_mx: f64, n: usize, m: usize, p: f64, c: f64) -> f64 {
    let long = n.max(m) as f64;
    if p < ((n + m) as f64).ln() / long {
        warn!("p = {p} is below ln(n+m)/(n∨m); the threshold guarantee does not apply");
    }
    c * (b + theta_mx) * (long / p).sqrt()
}
