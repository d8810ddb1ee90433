//! Monte Carlo risk experiments and their summaries.
//!
//! A run visits every grid point × `p` × replica, draws `θ*` from the
//! configured family, observes it, estimates it and records both error
//! norms. Replica `r` of cell `c` draws from stream `(seed, r)`, in the
//! substreams `[c, 0]` (generation), `[c, 1]` (observation) and `[c, 2]`
//! (solver restarts).

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, SolverConfig};
use crate::model::{spectral_norm, StructureSpec};
use crate::par::{self, Execution};
use crate::rates;
use crate::rng::derive_seed;
use crate::simulate::{generate, observe_sampled, ModelFamily, NoiseKind};

pub const CSV_HEADER: [&str; 20] = [
    "family",
    "n",
    "m",
    "k_n",
    "k_m",
    "s_n",
    "s_m",
    "p",
    "sigma",
    "method",
    "replica",
    "status",
    "frob_err_sq",
    "spec_err_sq",
    "objective",
    "sel_sn",
    "sel_sm",
    "rate_total",
    "ratio",
    "seconds",
];

/// Default cap on the projected work of a run, in elementary operations.
pub const DEFAULT_BUDGET: f64 = 1e14;

/// Dimension overrides applied to the family template for one grid point.
/// `k` sets both `k_n` and `k_m` and `s` both `s_n` and `s_m` unless the
/// specific field is given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub k_n: Option<usize>,
    #[serde(default)]
    pub k_m: Option<usize>,
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default)]
    pub s_n: Option<usize>,
    #[serde(default)]
    pub s_m: Option<usize>,
}

impl Dims {
    pub fn apply(&self, family: &ModelFamily) -> Result<ModelFamily> {
        let kn = self.k_n.or(self.k);
        let km = self.k_m.or(self.k);
        let out = match family.clone() {
            ModelFamily::Generic { mut spec } => {
                spec.n = self.n.unwrap_or(spec.n);
                spec.m = self.m.unwrap_or(spec.m);
                spec.k_n = kn.unwrap_or(spec.k_n);
                spec.k_m = km.unwrap_or(spec.k_m);
                spec.s_n = self.s_n.or(self.s).unwrap_or(spec.s_n);
                spec.s_m = self.s_m.or(self.s).unwrap_or(spec.s_m);
                ModelFamily::Generic { spec }
            }
            ModelFamily::Mixture { n, m, k } => ModelFamily::Mixture {
                n: self.n.unwrap_or(n),
                m: self.m.unwrap_or(m),
                k: self.k.unwrap_or(k),
            },
            ModelFamily::Dictionary { d, n, k, s } => ModelFamily::Dictionary {
                d: self.d.unwrap_or(d),
                n: self.n.unwrap_or(n),
                k: self.k.unwrap_or(k),
                s: self.s.unwrap_or(s),
            },
            ModelFamily::Sbm { n, k } => ModelFamily::Sbm {
                n: self.n.unwrap_or(n),
                k: self.k.unwrap_or(k),
            },
            ModelFamily::MixedMembership { n, k, s } => ModelFamily::MixedMembership {
                n: self.n.unwrap_or(n),
                k: self.k.unwrap_or(k),
                s: self.s.unwrap_or(s),
            },
            ModelFamily::Biclustering { n, m, k_n, k_m } => ModelFamily::Biclustering {
                n: self.n.unwrap_or(n),
                m: self.m.unwrap_or(m),
                k_n: kn.unwrap_or(k_n),
                k_m: km.unwrap_or(k_m),
            },
        };
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Method {
    /// Exhaustive least squares; rows beyond the solver limit are refused.
    Exact,
    /// Block-coordinate least squares.
    Bcd,
    /// Exhaustive when within the limit, block-coordinate otherwise.
    LeastSquares,
    /// Hard thresholding at `spectral_threshold(b, θ_mx, n, m, p, c)`;
    /// `b` defaults to the noise bound and `θ_mx` to the spec's.
    Svt {
        #[serde(default = "default_svt_c")]
        c: f64,
        #[serde(default)]
        theta_mx: Option<f64>,
        #[serde(default)]
        b: Option<f64>,
    },
    /// Sparsity-adaptive penalized least squares; `lambda` defaults to
    /// `8 (σ ∨ θ_mx)²`.
    Adaptive {
        #[serde(default)]
        lambda: Option<f64>,
    },
}

fn default_svt_c() -> f64 {
    3.0
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Bcd => "bcd",
            Method::LeastSquares => "least_squares",
            Method::Svt { .. } => "svt",
            Method::Adaptive { .. } => "adaptive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub family: ModelFamily,
    pub grid: Vec<Dims>,
    pub p_values: Vec<f64>,
    pub noise: NoiseKind,
    pub method: Method,
    #[serde(default)]
    pub solver: SolverConfig,
    pub replicas: usize,
    pub seed: u64,
    /// Rescale each `θ*` so that `‖θ*‖_∞ ≤ rescale_sup`.
    #[serde(default)]
    pub rescale_sup: Option<f64>,
    /// Record wall time; off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Parameter("replicas must be >= 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Parameter("grid must be non-empty".into()));
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Parameter(format!(
                "p_values must be non-empty in (0, 1]: {:?}",
                self.p_values
            )));
        }
        if let Some(c) = self.rescale_sup {
            if !(c > 0.0) {
                return Err(Error::Parameter("rescale_sup must be positive".into()));
            }
        }
        self.noise.validate()?;
        self.solver.validate()?;
        match self.method {
            Method::Svt { c, theta_mx, b } => {
                if !(c > 0.0) || theta_mx.is_some_and(|t| !(t > 0.0)) || b.is_some_and(|b| !(b >= 0.0)) {
                    return Err(Error::Parameter("svt constants must be positive".into()));
                }
                if b.is_none() && self.noise.bound().is_none() {
                    return Err(Error::Parameter("svt needs `b` for unbounded noise".into()));
                }
            }
            Method::Adaptive { lambda: Some(l) } if !(l > 0.0) => {
                return Err(Error::Parameter("adaptive lambda must be positive".into()));
            }
            _ => {}
        }
        for d in &self.grid {
            d.apply(&self.family)?.spec()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub k_n: usize,
    pub k_m: usize,
    pub s_n: usize,
    pub s_m: usize,
    pub p: f64,
    pub sigma: f64,
    pub method: String,
    pub replica: usize,
    pub status: String,
    pub frob_err_sq: Option<f64>,
    pub spec_err_sq: Option<f64>,
    pub objective: Option<f64>,
    pub sel_sn: Option<usize>,
    pub sel_sm: Option<usize>,
    pub rate_total: f64,
    pub ratio: Option<f64>,
    pub seconds: f64,
    /// Grid-point × p index, the row's cell.
    #[serde(skip)]
    pub cell: usize,
    /// Threshold used by `svt` rows.
    #[serde(skip)]
    pub threshold: Option<f64>,
    /// `‖Y/p − θ*‖` for `svt` rows.
    #[serde(skip)]
    pub noise_op_norm: Option<f64>,
}

impl BenchRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

struct Cell {
    family: ModelFamily,
    spec: StructureSpec,
    p: f64,
}

fn cells(cfg: &BenchConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for d in &cfg.grid {
        let family = d.apply(&cfg.family)?;
        let spec = family.spec()?;
        for &p in &cfg.p_values {
            out.push(Cell {
                family: family.clone(),
                spec: spec.clone(),
                p,
            });
        }
    }
    Ok(out)
}

/// Projected work of one estimator call, in elementary operations.
fn work(method: &Method, spec: &StructureSpec, solver: &SolverConfig) -> f64 {
    let (n, m) = (spec.n as f64, spec.m as f64);
    let bcd = |spec: &StructureSpec| -> f64 {
        let rows = |k, s, a: &crate::model::Alphabet| match a.nonzero_values() {
            Some(v) if s > 0 => estimators::row_candidate_count(k, s, v.len()),
            _ => (k as f64).powi(s.min(3) as i32 + 1),
        };
        let cx = rows(spec.k_n, spec.s_n, &spec.alphabet_n);
        let cz = rows(spec.k_m, spec.s_m, &spec.alphabet_m);
        solver.restarts as f64 * solver.max_iterations as f64 * (n * cx + m * cz) * n.max(m)
    };
    let exact = |spec: &StructureSpec| -> f64 {
        match estimators::enumeration_size(spec) {
            Ok(Some(size)) => size.min(solver.exhaustive_limit as f64) * n * m,
            _ => 0.0,
        }
    };
    let ls = |spec: &StructureSpec| match estimators::enumeration_size(spec) {
        Ok(Some(size)) if size <= solver.exhaustive_limit as f64 => exact(spec),
        _ => bcd(spec),
    };
    match method {
        Method::Exact => exact(spec),
        Method::Bcd => bcd(spec),
        Method::LeastSquares => ls(spec),
        Method::Svt { .. } => n * m * n.min(m),
        Method::Adaptive { .. } => (1..=spec.k_n)
            .flat_map(|a| (1..=spec.k_m).map(move |b| (a, b)))
            .map(|(a, b)| ls(&spec.with_sparsity(a, b)))
            .sum(),
    }
}

/// Total projected work of a run.
pub fn projected_work(cfg: &BenchConfig) -> Result<f64> {
    Ok(cells(cfg)?
        .iter()
        .map(|c| work(&cfg.method, &c.spec, &cfg.solver))
        .sum::<f64>()
        * cfg.replicas as f64)
}

struct Outcome {
    theta_hat: DMatrix<f64>,
    objective: f64,
    selected: Option<(usize, usize)>,
    threshold: Option<f64>,
}

fn estimate(cfg: &BenchConfig, cell: &Cell, obs: &crate::model::Observation, seed: u64) -> Result<Outcome> {
    let spec = &cell.spec;
    let solver = &cfg.solver;
    let from = |r: estimators::EstimateResult| Outcome {
        theta_hat: r.theta_hat,
        objective: r.objective,
        selected: r.selected_s,
        threshold: None,
    };
    Ok(match cfg.method {
        Method::Exact => from(estimators::exact_least_squares(obs, spec, solver)?),
        Method::Bcd => from(estimators::block_coordinate_ls(obs, spec, solver, seed)?),
        Method::LeastSquares => from(estimators::least_squares(obs, spec, solver, seed)?),
        Method::Svt { c, theta_mx, b } => {
            let b = b.or(cfg.noise.bound()).unwrap_or(0.0);
            let theta_mx = theta_mx.unwrap_or(spec.theta_mx);
            let lambda = rates::spectral_threshold(b, theta_mx, spec.n, spec.m, cell.p, c);
            let mut out = from(estimators::hard_threshold(obs, lambda)?);
            out.threshold = Some(lambda);
            out
        }
        Method::Adaptive { lambda } => {
            let lambda =
                lambda.unwrap_or_else(|| rates::default_adaptive_lambda(cfg.noise.sigma_proxy(), spec.theta_mx));
            from(estimators::adaptive_penalized(obs, spec, lambda, solver, seed)?)
        }
    })
}

fn run_row(cfg: &BenchConfig, cells: &[Cell], cell_idx: usize, replica: usize) -> BenchRow {
    let cell = &cells[cell_idx];
    let spec = &cell.spec;
    let sigma = cfg.noise.sigma_proxy();
    let rate_total = rates::rate_components(spec).total;
    let mut row = BenchRow {
        family: cell.family.name().to_string(),
        n: spec.n,
        m: spec.m,
        k_n: spec.k_n,
        k_m: spec.k_m,
        s_n: spec.s_n,
        s_m: spec.s_m,
        p: cell.p,
        sigma,
        method: cfg.method.name().to_string(),
        replica,
        status: "ok".into(),
        frob_err_sq: None,
        spec_err_sq: None,
        objective: None,
        sel_sn: None,
        sel_sm: None,
        rate_total,
        ratio: None,
        seconds: 0.0,
        cell: cell_idx,
        threshold: None,
        noise_op_norm: None,
    };
    let stream = |tag: u64| derive_seed(cfg.seed, &[replica as u64, cell_idx as u64, tag]);
    let start = Instant::now();
    let result = (|| -> Result<(DMatrix<f64>, Outcome, f64)> {
        let (f, _) = generate(&cell.family, stream(0))?;
        let mut theta = f.assemble()?;
        if let Some(c) = cfg.rescale_sup {
            let sup = theta.amax();
            if sup > c {
                theta *= c / sup;
            }
        }
        let (obs, _) = observe_sampled(&theta, cell.p, &cfg.noise, stream(1))?;
        let w_norm = if matches!(cfg.method, Method::Svt { .. }) {
            spectral_norm(&(obs.y_rescaled() - &theta))
        } else {
            f64::NAN
        };
        let out = estimate(cfg, cell, &obs, stream(2))?;
        Ok((theta, out, w_norm))
    })();
    if cfg.timing {
        row.seconds = start.elapsed().as_secs_f64();
    }
    match result {
        Ok((theta, out, w_norm)) => {
            let err = &out.theta_hat - &theta;
            let frob = err.norm_squared();
            row.frob_err_sq = Some(frob);
            row.spec_err_sq = Some(spectral_norm(&err).powi(2));
            row.objective = Some(out.objective);
            row.sel_sn = out.selected.map(|s| s.0);
            row.sel_sm = out.selected.map(|s| s.1);
            if sigma > 0.0 && rate_total > 0.0 {
                row.ratio = Some(frob * cell.p / (sigma * sigma * rate_total));
            }
            row.threshold = out.threshold;
            row.noise_op_norm = w_norm.is_finite().then_some(w_norm);
        }
        Err(Error::Refused(_)) => row.status = "refused".into(),
        Err(_) => row.status = "failed".into(),
    }
    row
}

/// Runs the experiment. Refuses (`Error::Budget`) when the projected work
/// exceeds `cfg.budget` (default [`DEFAULT_BUDGET`]); estimator failures are
/// recorded per row. Rows are sorted by `(cell, replica)`.
pub fn run_experiment(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let budget = cfg.budget.unwrap_or(DEFAULT_BUDGET);
    let projected = projected_work(cfg)?;
    if projected > budget {
        return Err(Error::Budget(format!(
            "projected work {projected:e} exceeds the budget of {budget:e}"
        )));
    }
    let cells = cells(cfg)?;
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicas).map(move |r| (c, r)))
        .collect();
    let mut rows = par::with_thread_cap(|| par::map(cfg.execution, &tasks, |&(c, r)| run_row(cfg, &cells, c, r)));
    rows.sort_by_key(|r| (r.cell, r.replica));
    if let Some(path) = &cfg.out {
        write_csv(path, &rows)?;
    }
    Ok(rows)
}

pub fn write_csv_to<W: std::io::Write>(writer: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[BenchRow]) -> Result<()> {
    write_csv_to(std::fs::File::create(path)?, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub family: String,
    pub n: usize,
    pub m: usize,
    pub k_n: usize,
    pub k_m: usize,
    pub s_n: usize,
    pub s_m: usize,
    pub p: f64,
    pub method: String,
    pub ok: usize,
    pub failed: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub rate_total: f64,
    pub mean_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    /// Least-squares slope of `ln(mean error)` on `ln(rate_total)`; absent
    /// with fewer than two distinct rates.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual of the slope fit.
    pub residual: Option<f64>,
    /// Largest per-cell mean of `risk_to_rate_ratio`.
    pub c_hat: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some((slope, intercept, (rss / n).sqrt()))
}

pub fn summarize(rows: &[BenchRow]) -> Result<Summary> {
    let mut keys: Vec<usize> = rows.iter().map(|r| r.cell).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut cells = Vec::new();
    for key in keys {
        let group: Vec<&BenchRow> = rows.iter().filter(|r| r.cell == key).collect();
        let mut errs: Vec<f64> = group
            .iter()
            .filter(|r| r.is_ok())
            .filter_map(|r| r.frob_err_sq)
            .collect();
        if errs.is_empty() {
            continue;
        }
        errs.sort_by(f64::total_cmp);
        let ratios: Vec<f64> = group.iter().filter(|r| r.is_ok()).filter_map(|r| r.ratio).collect();
        let first = group[0];
        cells.push(CellSummary {
            cell: key,
            family: first.family.clone(),
            n: first.n,
            m: first.m,
            k_n: first.k_n,
            k_m: first.k_m,
            s_n: first.s_n,
            s_m: first.s_m,
            p: first.p,
            method: first.method.clone(),
            ok: errs.len(),
            failed: group.len() - errs.len(),
            mean: errs.iter().sum::<f64>() / errs.len() as f64,
            median: quantile(&errs, 0.5),
            q10: quantile(&errs, 0.1),
            q90: quantile(&errs, 0.9),
            rate_total: first.rate_total,
            mean_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            max_ratio: ratios.iter().copied().reduce(f64::max),
        });
    }
    if cells.is_empty() {
        return Err(Error::EmptySummary("no successful rows".into()));
    }
    let points: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.mean > 0.0 && c.rate_total > 0.0)
        .map(|c| (c.rate_total.ln(), c.mean.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    let fit = fit_line(&x, &y);
    Ok(Summary {
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        residual: fit.map(|f| f.2),
        c_hat: cells.iter().filter_map(|c| c.mean_ratio).reduce(f64::max),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(method: Method, noise: NoiseKind) -> BenchConfig {
        BenchConfig {
            family: ModelFamily::Biclustering {
                n: 3,
                m: 3,
                k_n: 2,
                k_m: 2,
            },
            grid: vec![Dims::default()],
            p_values: vec![1.0],
            noise,
            method,
            solver: SolverConfig {
                execution: Execution::Sequential,
                ..SolverConfig::default()
            },
            replicas: 3,
            seed: 1,
            rescale_sup: None,
            timing: false,
            execution: Execution::Parallel,
            budget: None,
            out: None,
        }
    }

    #[test]
    fn noiseless_exact_rows_are_zero() {
        let rows = run_experiment(&tiny(Method::Exact, NoiseKind::None)).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert!(r.is_ok());
            assert!(r.frob_err_sq.unwrap() <= 1e-20);
            assert!(r.ratio.is_none());
        }
    }

    #[test]
    fn csv_header_and_determinism() {
        let cfg = tiny(Method::Bcd, NoiseKind::Gaussian { sigma: 0.5 });
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&BenchConfig {
            execution: Execution::Sequential,
            ..cfg
        })
        .unwrap();
        let mut out_a = Vec::new();
        let mut out_b = Vec::new();
        write_csv_to(&mut out_a, &a).unwrap();
        write_csv_to(&mut out_b, &b).unwrap();
        assert_eq!(out_a, out_b);
        let text = String::from_utf8(out_a).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn ratio_definition() {
        let rows = run_experiment(&tiny(Method::Bcd, NoiseKind::Gaussian { sigma: 0.5 })).unwrap();
        for r in rows {
            let want = r.frob_err_sq.unwrap() * r.p / (0.25 * r.rate_total);
            assert!((r.ratio.unwrap() - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn refusals_are_rows() {
        let mut cfg = tiny(Method::Exact, NoiseKind::None);
        cfg.solver.exhaustive_limit = 10;
        let rows = run_experiment(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.status == "refused"));
        assert!(matches!(summarize(&rows), Err(Error::EmptySummary(_))));
    }

    #[test]
    fn budget_refusal() {
        let mut cfg = tiny(Method::Bcd, NoiseKind::None);
        cfg.budget = Some(1.0);
        assert!(matches!(run_experiment(&cfg), Err(Error::Budget(_))));
    }

    #[test]
    fn config_errors() {
        let mut cfg = tiny(Method::Bcd, NoiseKind::None);
        cfg.replicas = 0;
        assert!(matches!(run_experiment(&cfg), Err(Error::Parameter(_))));
        let mut cfg = tiny(Method::Bcd, NoiseKind::None);
        cfg.grid.clear();
        assert!(cfg.validate().is_err());
        let cfg = tiny(
            Method::Svt {
                c: 3.0,
                theta_mx: None,
                b: None,
            },
            NoiseKind::Gaussian { sigma: 1.0 },
        );
        assert!(cfg.validate().is_err());
    }

    fn row(cell: usize, rate: f64, err: f64, ratio: Option<f64>) -> BenchRow {
        BenchRow {
            family: "sbm".into(),
            n: 1,
            m: 1,
            k_n: 1,
            k_m: 1,
            s_n: 1,
            s_m: 1,
            p: 1.0,
            sigma: 1.0,
            method: "bcd".into(),
            replica: 0,
            status: "ok".into(),
            frob_err_sq: Some(err),
            spec_err_sq: Some(err),
            objective: Some(0.0),
            sel_sn: None,
            sel_sm: None,
            rate_total: rate,
            ratio,
            seconds: 0.0,
            cell,
            threshold: None,
            noise_op_norm: None,
        }
    }

    #[test]
    fn summary_single_cell() {
        let rows = vec![row(0, 5.0, 2.0, None), row(0, 5.0, 2.0, None)];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.cells[0].mean, 2.0);
        assert_eq!(s.cells[0].median, 2.0);
        assert!(s.slope.is_none());
    }

    #[test]
    fn summary_unit_slope() {
        let rows = vec![row(0, 3.0, 7.0, Some(1.0)), row(1, 6.0, 14.0, Some(2.0))];
        let s = summarize(&rows).unwrap();
        assert!((s.slope.unwrap() - 1.0).abs() < 1e-12);
        assert!(s.residual.unwrap() < 1e-12);
        assert_eq!(s.c_hat, Some(2.0));
    }

    #[test]
    fn summary_order_independent() {
        let mut rows = vec![
            row(0, 3.0, 1.0, Some(0.5)),
            row(0, 3.0, 3.0, Some(1.5)),
            row(1, 9.0, 4.0, Some(0.7)),
        ];
        let a = summarize(&rows).unwrap();
        rows.reverse();
        assert_eq!(summarize(&rows).unwrap(), a);
    }

    #[test]
    fn dims_override_family() {
        let fam = Dims {
            n: Some(20),
            k: Some(3),
            ..Dims::default()
        }
        .apply(&ModelFamily::Sbm { n: 5, k: 2 })
        .unwrap();
        assert_eq!(fam, ModelFamily::Sbm { n: 20, k: 3 });
    }
}
