//! Estimators of `θ*`: least squares over `Θ(s_n, s_m)` (exhaustive and
//! block-coordinate), SVD hard thresholding, and the sparsity-adaptive
//! penalized least squares.
//!
//! The continuous block `B` is always profiled out in closed form, so the
//! combinatorial searches only range over the sparse factors `X` and `Z`.
//!
//! Candidate rows of a sparse factor over a finite alphabet are enumerated in
//! a fixed order: supports by increasing size, supports of equal size in
//! lexicographic order of their index sets, and for each support the
//! non-zero alphabet values in increasing order with the last coordinate
//! varying fastest. The zero row is candidate 0. Whole factors are enumerated
//! row-lexicographically (row 0 is the most significant digit), and among
//! equal objectives the first candidate wins.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::dense;
use crate::model::{Alphabet, Factorization, Observation, StructureSpec};
use crate::par::{self, Execution};
use crate::rates;
use crate::rng::{derive_seed, CounterRng};

/// Relative singular-value cut-off of the minimum-norm least squares.
pub const RANK_TOL: f64 = 1e-10;

/// Maximum candidates per row for the block-coordinate solver.
pub const ROW_CANDIDATE_LIMIT: f64 = 1e6;

/// Above this many supports the continuous row update truncates instead of
/// searching every support.
const SUPPORT_SEARCH_LIMIT: usize = 10_000;

const BOX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tol: f64,
    pub exhaustive_limit: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 200,
            tol: 1e-9,
            exhaustive_limit: 2_000_000,
            execution: Execution::Parallel,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 || self.exhaustive_limit == 0 || !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("solver settings must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    #[serde(with = "dense")]
    pub theta_hat: DMatrix<f64>,
    pub factorization: Option<Factorization>,
    pub objective: f64,
    pub selected_s: Option<(usize, usize)>,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
    /// Objective after initialisation and after every sweep of the winning run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

/// Masked squared-loss problem `Σ_{mask} (target − X B Zᵀ)²`.
struct Problem<'a> {
    target: DMatrix<f64>,
    target_t: DMatrix<f64>,
    obs_cols: Vec<Vec<usize>>,
    obs_rows: Vec<Vec<usize>>,
    full: bool,
    spec: &'a StructureSpec,
}

impl<'a> Problem<'a> {
    fn new(target: DMatrix<f64>, mask: &DMatrix<bool>, spec: &'a StructureSpec) -> Result<Self> {
        if target.shape() != (spec.n, spec.m) {
            return Err(Error::shape(
                "observation",
                format!("data is {:?} but spec is {}x{}", target.shape(), spec.n, spec.m),
            ));
        }
        let (n, m) = target.shape();
        let obs_cols = (0..n).map(|i| (0..m).filter(|&j| mask[(i, j)]).collect()).collect();
        let obs_rows = (0..m).map(|j| (0..n).filter(|&i| mask[(i, j)]).collect()).collect();
        Ok(Self {
            target_t: target.transpose(),
            target,
            obs_cols,
            obs_rows,
            full: mask.iter().all(|&o| o),
            spec,
        })
    }

    fn objective(&self, theta: &DMatrix<f64>) -> f64 {
        self.obs_cols
            .iter()
            .enumerate()
            .map(|(i, cols)| {
                cols.iter()
                    .map(|&j| (self.target[(i, j)] - theta[(i, j)]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    fn objective_of(&self, x: &DMatrix<f64>, b: &DMatrix<f64>, z: &DMatrix<f64>) -> f64 {
        self.objective(&(x * b * z.transpose()))
    }

    /// Design matrix with one row `vec(x_iᵀ z_j)` per observed entry.
    fn design(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let (kn, km) = (x.ncols(), z.ncols());
        let rows: usize = self.obs_cols.iter().map(Vec::len).sum();
        let mut a = DMatrix::zeros(rows, kn * km);
        let mut y = DVector::zeros(rows);
        let mut r = 0;
        for (i, cols) in self.obs_cols.iter().enumerate() {
            for &j in cols {
                for p in 0..kn {
                    let xp = x[(i, p)];
                    if xp == 0.0 {
                        continue;
                    }
                    for q in 0..km {
                        a[(r, p * km + q)] = xp * z[(j, q)];
                    }
                }
                y[r] = self.target[(i, j)];
                r += 1;
            }
        }
        (a, y)
    }

    fn solve_b_min_norm(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
        let (kn, km) = (x.ncols(), z.ncols());
        if self.full && x.nrows() > 0 && z.nrows() > 0 && kn > 0 && km > 0 {
            // (Z ⊗ X)⁺ from the two small SVDs, same relative cut-off
            let sx = x.clone().svd(true, true);
            let sz = z.clone().svd(true, true);
            let (ux, vx) = (sx.u.unwrap(), sx.v_t.unwrap().transpose());
            let (uz, vz) = (sz.u.unwrap(), sz.v_t.unwrap().transpose());
            let cut = RANK_TOL * sx.singular_values.max() * sz.singular_values.max();
            let core = ux.tr_mul(&self.target) * &uz;
            let mut c = DMatrix::zeros(ux.ncols(), uz.ncols());
            for a in 0..c.nrows() {
                for b in 0..c.ncols() {
                    let d = sx.singular_values[a] * sz.singular_values[b];
                    if d > cut && cut > 0.0 {
                        c[(a, b)] = core[(a, b)] / d;
                    }
                }
            }
            return vx * c * vz.transpose();
        }
        let (a, y) = self.design(x, z);
        let vec_b = min_norm_solve(a, &y);
        DMatrix::from_fn(kn, km, |p, q| vec_b[p * km + q])
    }

    /// B-step. For bounded specs the minimiser over `‖B‖_∞ ≤ b_max` is found
    /// by projected coordinate descent when the unconstrained one is infeasible.
    fn solve_b(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.solve_b_min_norm(x, z);
        if !self.spec.bounded || b.amax() <= self.spec.b_max {
            return b;
        }
        let (kn, km) = (x.ncols(), z.ncols());
        let (a, y) = self.design(x, z);
        let g = a.tr_mul(&a);
        let h = a.tr_mul(&y);
        let bmax = self.spec.b_max;
        let mut v = DVector::from_fn(kn * km, |t, _| b[(t / km, t % km)].clamp(-bmax, bmax));
        box_coordinate_descent(&g, &h, &mut v, &vec![-bmax; kn * km], &vec![bmax; kn * km]);
        DMatrix::from_fn(kn, km, |p, q| v[p * km + q])
    }
}

/// Minimum-norm least squares via SVD, zeroing singular values below
/// `RANK_TOL · σ_max`.
fn min_norm_solve(a: DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return DVector::zeros(cols);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DVector::zeros(cols);
    }
    svd.solve(y, RANK_TOL * smax).unwrap_or_else(|_| DVector::zeros(cols))
}

/// Minimise `½ vᵀ G v − hᵀ v` over the box `[lo, hi]` by cyclic coordinate
/// descent, starting from a feasible `v`.
fn box_coordinate_descent(g: &DMatrix<f64>, h: &DVector<f64>, v: &mut DVector<f64>, lo: &[f64], hi: &[f64]) {
    let k = v.len();
    for _ in 0..BOX_SWEEPS {
        let mut change = 0.0f64;
        for t in 0..k {
            let gtt = g[(t, t)];
            if gtt <= 0.0 {
                continue;
            }
            let mut r = h[t];
            for u in 0..k {
                if u != t {
                    r -= g[(t, u)] * v[u];
                }
            }
            let next = (r / gtt).clamp(lo[t], hi[t]);
            change = change.max((next - v[t]).abs());
            v[t] = next;
        }
        if change <= 1e-14 * (1.0 + v.amax()) {
            break;
        }
    }
}

/// `argmin_B Σ_{mask} (Y' − X B Zᵀ)²` with the minimum-Frobenius-norm tie rule.
pub fn solve_b_given_xz(obs: &Observation, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != obs.nrows() {
        return Err(Error::shape(
            "X",
            format!("X has {} rows, data has {}", x.nrows(), obs.nrows()),
        ));
    }
    if z.nrows() != obs.ncols() {
        return Err(Error::shape(
            "Z",
            format!("Z has {} rows, data has {}", z.nrows(), obs.ncols()),
        ));
    }
    let spec = StructureSpec::binary(obs.nrows(), obs.ncols(), x.ncols(), z.ncols(), 1, 1);
    let prob = Problem::new(obs.y_rescaled(), obs.mask(), &spec)?;
    Ok(prob.solve_b_min_norm(x, z))
}

/// A sparse row as `(column, value)` pairs.
type SparseRow = Vec<(usize, f64)>;

/// `Σ_{j≤s} C(k, j) vʲ`, the number of candidate rows.
pub fn row_candidate_count(k: usize, s: usize, values: usize) -> f64 {
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=s.min(k) {
        if j > 0 {
            binom = binom * (k - j + 1) as f64 / j as f64;
        }
        total += binom * (values as f64).powi(j as i32);
    }
    total
}

/// Index sets of size `0..=s` over `0..k`, by size then lexicographically.
fn supports(k: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for size in 1..=s.min(k) {
        let mut comb: Vec<usize> = (0..size).collect();
        loop {
            out.push(comb.clone());
            let mut i = size;
            while i > 0 && comb[i - 1] == k - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            comb[i - 1] += 1;
            for t in i..size {
                comb[t] = comb[t - 1] + 1;
            }
        }
    }
    out
}

fn enumerate_rows(k: usize, s: usize, values: &[f64]) -> Vec<SparseRow> {
    let mut out = Vec::new();
    for support in supports(k, s) {
        if support.is_empty() {
            out.push(vec![]);
            continue;
        }
        if values.is_empty() {
            continue;
        }
        let mut digits = vec![0usize; support.len()];
        loop {
            out.push(support.iter().zip(&digits).map(|(&c, &d)| (c, values[d])).collect());
            let mut pos = digits.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < values.len() {
                    break;
                }
                digits[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
    out
}

/// Search space for one sparse factor.
enum FactorSpace {
    Identity(usize),
    Enumerated {
        rows: usize,
        k: usize,
        cands: Vec<SparseRow>,
    },
    Continuous {
        rows: usize,
        k: usize,
        s: usize,
        lo: f64,
        hi: f64,
    },
}

impl FactorSpace {
    fn new(rows: usize, k: usize, s: usize, alphabet: &Alphabet, bounded: bool, name: &str) -> Result<Self> {
        if s == 0 {
            return Ok(FactorSpace::Identity(rows));
        }
        match alphabet {
            Alphabet::Finite { .. } => {
                let values = alphabet.nonzero_values().unwrap_or_default();
                let count = row_candidate_count(k, s, values.len());
                if count > ROW_CANDIDATE_LIMIT {
                    return Err(Error::Refused(format!(
                        "{name}: {count:e} candidate rows exceed the limit of {ROW_CANDIDATE_LIMIT:e}"
                    )));
                }
                Ok(FactorSpace::Enumerated {
                    rows,
                    k,
                    cands: enumerate_rows(k, s, &values),
                })
            }
            &Alphabet::Interval { lo, hi } => {
                let (lo, hi) = if bounded { (lo.max(-1.0), hi.min(1.0)) } else { (lo, hi) };
                if lo > hi {
                    return Err(Error::Parameter(format!("{name}: empty bounded alphabet")));
                }
                Ok(FactorSpace::Continuous { rows, k, s, lo, hi })
            }
        }
    }

    /// Number of whole factors, as a float to avoid overflow.
    fn count(&self) -> Option<f64> {
        match self {
            FactorSpace::Identity(_) => Some(1.0),
            FactorSpace::Enumerated { rows, cands, .. } => Some((cands.len() as f64).powi(*rows as i32)),
            FactorSpace::Continuous { .. } => None,
        }
    }

    fn matrix(&self, mut index: u64) -> DMatrix<f64> {
        match self {
            FactorSpace::Identity(n) => DMatrix::identity(*n, *n),
            FactorSpace::Enumerated { rows, k, cands } => {
                let base = cands.len() as u64;
                let mut a = DMatrix::zeros(*rows, *k);
                for i in (0..*rows).rev() {
                    let c = &cands[(index % base) as usize];
                    index /= base;
                    for &(col, v) in c {
                        a[(i, col)] = v;
                    }
                }
                a
            }
            FactorSpace::Continuous { .. } => unreachable!("continuous factors are not enumerable"),
        }
    }

    fn random(&self, rng: &mut CounterRng) -> DMatrix<f64> {
        match self {
            FactorSpace::Identity(n) => DMatrix::identity(*n, *n),
            FactorSpace::Enumerated { rows, k, cands } => {
                let mut a = DMatrix::zeros(*rows, *k);
                let mut picks: Vec<usize> = (0..*rows).map(|_| rng.below(cands.len() as u64) as usize).collect();
                if picks.iter().all(|&c| c == 0) && cands.len() > 1 {
                    picks[0] = 1 + rng.below(cands.len() as u64 - 1) as usize;
                }
                for (i, &c) in picks.iter().enumerate() {
                    for &(col, v) in &cands[c] {
                        a[(i, col)] = v;
                    }
                }
                a
            }
            &FactorSpace::Continuous { rows, k, s, lo, hi } => {
                let mut a = DMatrix::zeros(rows, k);
                for i in 0..rows {
                    for c in rng.subset(k, s) {
                        a[(i, c)] = rng.uniform(lo, hi);
                    }
                }
                a
            }
        }
    }

    /// Update every row of `factor` given `design` (k × cols); returns
    /// whether any row changed. A row is replaced only on strict decrease.
    fn update_rows(
        &self,
        factor: &mut DMatrix<f64>,
        design: &DMatrix<f64>,
        target: &DMatrix<f64>,
        observed: &[Vec<usize>],
    ) -> bool {
        let row_cost = |i: usize, row: &[(usize, f64)]| -> f64 {
            observed[i]
                .iter()
                .map(|&j| {
                    let pred: f64 = row.iter().map(|&(c, v)| v * design[(c, j)]).sum();
                    (target[(i, j)] - pred).powi(2)
                })
                .sum()
        };
        let current = |factor: &DMatrix<f64>, i: usize| -> SparseRow {
            factor
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(c, &v)| (c, v))
                .collect()
        };
        let mut changed = false;
        match self {
            FactorSpace::Identity(_) => {}
            FactorSpace::Enumerated { rows, cands, .. } => {
                for i in 0..*rows {
                    let now = row_cost(i, &current(factor, i));
                    let mut best = (f64::INFINITY, 0usize);
                    for (c, cand) in cands.iter().enumerate() {
                        let cost = row_cost(i, cand);
                        if cost < best.0 {
                            best = (cost, c);
                        }
                    }
                    if best.0 < now {
                        factor.row_mut(i).fill(0.0);
                        for &(col, v) in &cands[best.1] {
                            factor[(i, col)] = v;
                        }
                        changed = true;
                    }
                }
            }
            &FactorSpace::Continuous { rows, k, s, lo, hi } => {
                let sups = supports(k, s);
                for i in 0..rows {
                    let now = row_cost(i, &current(factor, i));
                    let cand = if sups.len() <= SUPPORT_SEARCH_LIMIT {
                        best_support_row(design, target, i, &observed[i], &sups, lo, hi)
                    } else {
                        truncated_row(design, target, i, &observed[i], k, s, lo, hi)
                    };
                    let cost = row_cost(i, &cand);
                    if cost < now {
                        factor.row_mut(i).fill(0.0);
                        for &(col, v) in &cand {
                            factor[(i, col)] = v;
                        }
                        changed = true;
                    }
                }
            }
        }
        changed
    }
}

/// Candidate row with its profiled loss and updated normal equations.
type Profiled = (f64, DVector<f64>, DMatrix<f64>, DVector<f64>);

impl FactorSpace {
    /// Row moves scored with `B` profiled out: each candidate row is rated
    /// by `min_B` of the loss, through rank-one updates of the normal
    /// equations `G = Σ_i (f_i f_iᵀ) ⊗ M_i`, `h = Σ_i f_i ⊗ v_i` with
    /// `M_i = Σ_j o_j o_jᵀ` and `v_i = Σ_j t_ij o_j` over observed `j`.
    /// Moves must improve the profiled loss by more than `1e-10 Σ t²`.
    fn profiled_update(
        &self,
        factor: &mut DMatrix<f64>,
        other: &DMatrix<f64>,
        target: &DMatrix<f64>,
        observed: &[Vec<usize>],
    ) -> bool {
        let FactorSpace::Enumerated { rows, k, cands } = self else {
            return false;
        };
        let ko = other.ncols();
        let big = k * ko;
        let mut y2 = 0.0;
        let mut ms = Vec::with_capacity(*rows);
        let mut vs = Vec::with_capacity(*rows);
        for i in 0..*rows {
            let mut mi = DMatrix::zeros(ko, ko);
            let mut vi = DVector::zeros(ko);
            for &j in &observed[i] {
                let o = other.row(j).transpose();
                mi.ger(1.0, &o, &o, 1.0);
                vi.axpy(target[(i, j)], &o, 1.0);
                y2 += target[(i, j)].powi(2);
            }
            ms.push(mi);
            vs.push(vi);
        }
        let dense = |row: &[(usize, f64)]| {
            let mut v = DVector::zeros(*k);
            for &(c, x) in row {
                v[c] = x;
            }
            v
        };
        let add = |g: &mut DMatrix<f64>, h: &mut DVector<f64>, f: &DVector<f64>, i: usize, sign: f64| {
            for a in 0..*k {
                if f[a] == 0.0 {
                    continue;
                }
                for c in 0..ko {
                    h[a * ko + c] += sign * f[a] * vs[i][c];
                }
                for b in 0..*k {
                    let w = sign * f[a] * f[b];
                    if w == 0.0 {
                        continue;
                    }
                    for c in 0..ko {
                        for d in 0..ko {
                            g[(a * ko + c, b * ko + d)] += w * ms[i][(c, d)];
                        }
                    }
                }
            }
        };
        let profile = |g: &DMatrix<f64>, h: &DVector<f64>| -> f64 {
            let eig = g.clone().symmetric_eigen();
            let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
            let mut explained = 0.0;
            for (t, &l) in eig.eigenvalues.iter().enumerate() {
                if l > 1e-12 * lmax {
                    explained += eig.eigenvectors.column(t).dot(h).powi(2) / l;
                }
            }
            y2 - explained
        };
        let mut g = DMatrix::zeros(big, big);
        let mut h = DVector::zeros(big);
        let current: Vec<DVector<f64>> = (0..*rows).map(|i| factor.row(i).transpose()).collect();
        for (i, f) in current.iter().enumerate() {
            add(&mut g, &mut h, f, i, 1.0);
        }
        let margin = 1e-10 * y2;
        let mut cur = profile(&g, &h);
        let mut changed = false;
        for i in 0..*rows {
            let fi = factor.row(i).transpose();
            let mut g0 = g.clone();
            let mut h0 = h.clone();
            add(&mut g0, &mut h0, &fi, i, -1.0);
            let mut best: Option<Profiled> = None;
            for cand in cands {
                let c = dense(cand);
                if c == fi {
                    continue;
                }
                let mut gc = g0.clone();
                let mut hc = h0.clone();
                add(&mut gc, &mut hc, &c, i, 1.0);
                let val = profile(&gc, &hc);
                let bar = best.as_ref().map_or(cur - margin, |b| b.0);
                if val < bar {
                    best = Some((val, c, gc, hc));
                }
            }
            if let Some((val, c, gc, hc)) = best {
                factor.row_mut(i).copy_from(&c.transpose());
                g = gc;
                h = hc;
                cur = val;
                changed = true;
            }
        }
        changed
    }
}

/// Normal equations of one row restricted to `support`.
fn row_normal_equations(
    design: &DMatrix<f64>,
    target: &DMatrix<f64>,
    i: usize,
    cols: &[usize],
    support: &[usize],
) -> (DMatrix<f64>, DVector<f64>) {
    let k = support.len();
    let mut g = DMatrix::zeros(k, k);
    let mut h = DVector::zeros(k);
    for &j in cols {
        let t = target[(i, j)];
        for (a, &ca) in support.iter().enumerate() {
            let da = design[(ca, j)];
            h[a] += da * t;
            for (b, &cb) in support.iter().enumerate() {
                g[(a, b)] += da * design[(cb, j)];
            }
        }
    }
    (g, h)
}

fn quadratic(g: &DMatrix<f64>, h: &DVector<f64>, v: &DVector<f64>) -> f64 {
    0.5 * (v.transpose() * g * v)[(0, 0)] - h.dot(v)
}

/// Exact box-constrained least squares for small supports: every
/// free/lower/upper assignment is solved and the best feasible one kept.
fn box_least_squares(g: &DMatrix<f64>, h: &DVector<f64>, lo: f64, hi: f64) -> DVector<f64> {
    let k = h.len();
    if k == 0 {
        return DVector::zeros(0);
    }
    if k > 6 {
        let mut v = DVector::from_element(k, 0.0f64.clamp(lo, hi));
        box_coordinate_descent(g, h, &mut v, &vec![lo; k], &vec![hi; k]);
        return v;
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    let combos = 3usize.pow(k as u32);
    for code in 0..combos {
        let mut state = vec![0u8; k];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut v = DVector::zeros(k);
        let free: Vec<usize> = (0..k).filter(|&t| state[t] == 0).collect();
        for t in 0..k {
            match state[t] {
                1 => v[t] = lo,
                2 => v[t] = hi,
                _ => {}
            }
        }
        if !free.is_empty() {
            let f = free.len();
            let gff = DMatrix::from_fn(f, f, |a, b| g[(free[a], free[b])]);
            let rhs = DVector::from_fn(f, |a, _| {
                let t = free[a];
                h[t] - (0..k).filter(|u| state[*u] != 0).map(|u| g[(t, u)] * v[u]).sum::<f64>()
            });
            let smax = gff.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let sol = if smax == 0.0 {
                DVector::zeros(f)
            } else {
                gff.svd(true, true)
                    .solve(&rhs, 1e-12 * smax)
                    .unwrap_or_else(|_| DVector::zeros(f))
            };
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            if sol.iter().any(|&x| x < lo - slack || x > hi + slack) {
                continue;
            }
            for (a, &t) in free.iter().enumerate() {
                v[t] = sol[a].clamp(lo, hi);
            }
        }
        let q = quadratic(g, h, &v);
        if best.as_ref().is_none_or(|(bq, _)| q < *bq) {
            best = Some((q, v));
        }
    }
    best.map(|(_, v)| v).unwrap_or_else(|| DVector::zeros(k))
}

fn best_support_row(
    design: &DMatrix<f64>,
    target: &DMatrix<f64>,
    i: usize,
    cols: &[usize],
    sups: &[Vec<usize>],
    lo: f64,
    hi: f64,
) -> SparseRow {
    let mut best: (f64, SparseRow) = (f64::INFINITY, vec![]);
    for support in sups {
        let (g, h) = row_normal_equations(design, target, i, cols, support);
        let v = box_least_squares(&g, &h, lo, hi);
        let q = quadratic(&g, &h, &v);
        if q < best.0 {
            best = (q, support.iter().zip(v.iter()).map(|(&c, &x)| (c, x)).collect());
        }
    }
    best.1
}

/// Least squares over all coordinates, truncation to the `s` largest
/// magnitudes, then clipping to `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
fn truncated_row(
    design: &DMatrix<f64>,
    target: &DMatrix<f64>,
    i: usize,
    cols: &[usize],
    k: usize,
    s: usize,
    lo: f64,
    hi: f64,
) -> SparseRow {
    let all: Vec<usize> = (0..k).collect();
    let (g, h) = row_normal_equations(design, target, i, cols, &all);
    let smax = g.amax();
    let v = if smax == 0.0 {
        DVector::zeros(k)
    } else {
        g.svd(true, true)
            .solve(&h, RANK_TOL * smax)
            .unwrap_or_else(|_| DVector::zeros(k))
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[..s.min(k)].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|c| (c, v[c].clamp(lo, hi))).collect()
}

struct Spaces {
    x: FactorSpace,
    z: FactorSpace,
}

fn spaces(spec: &StructureSpec) -> Result<Spaces> {
    spec.validate()?;
    Ok(Spaces {
        x: FactorSpace::new(spec.n, spec.k_n, spec.s_n, &spec.alphabet_n, spec.bounded, "X")?,
        z: FactorSpace::new(spec.m, spec.k_m, spec.s_m, &spec.alphabet_m, spec.bounded, "Z")?,
    })
}

/// Number of `(X, Z)` pairs the exhaustive search visits, or `None` for
/// continuous alphabets.
pub fn enumeration_size(spec: &StructureSpec) -> Result<Option<f64>> {
    let sp = spaces(spec)?;
    Ok(match (sp.x.count(), sp.z.count()) {
        (Some(a), Some(b)) => Some(a * b),
        _ => None,
    })
}

fn exact_on(prob: &Problem<'_>, cfg: &SolverConfig) -> Result<EstimateResult> {
    cfg.validate()?;
    let sp = spaces(prob.spec)?;
    let (cx, cz) = match (sp.x.count(), sp.z.count()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Parameter(
                "exhaustive least squares needs finite alphabets".into(),
            ))
        }
    };
    let total = cx * cz;
    if total > cfg.exhaustive_limit as f64 {
        return Err(Error::Refused(format!(
            "exhaustive search over {total:e} (X, Z) pairs exceeds the limit of {}; use block_coordinate_ls",
            cfg.exhaustive_limit
        )));
    }
    let (cx, cz, total) = (cx as u64, cz as u64, total as u64);
    let chunks = total.clamp(1, 256);
    let per = total.div_ceil(chunks);
    let bests = par::map_range(cfg.execution, chunks as usize, |c| {
        let start = c as u64 * per;
        let end = (start + per).min(total);
        let mut best: Option<(f64, u64)> = None;
        let mut cached: Option<(u64, DMatrix<f64>)> = None;
        for t in start..end {
            let (xi, zi) = (t / cz, t % cz);
            if cached.as_ref().is_none_or(|(i, _)| *i != xi) {
                cached = Some((xi, sp.x.matrix(xi)));
            }
            let x = &cached.as_ref().unwrap().1;
            let z = sp.z.matrix(zi);
            let b = prob.solve_b(x, &z);
            let obj = prob.objective_of(x, &b, &z);
            if best.is_none_or(|(bo, _)| obj < bo) {
                best = Some((obj, t));
            }
        }
        best
    });
    let (obj, t) = bests
        .into_iter()
        .flatten()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or_else(|| Error::Parameter("empty search space".into()))?;
    let x = sp.x.matrix(t / cz);
    let z = sp.z.matrix(t % cz);
    let b = prob.solve_b(&x, &z);
    let f = Factorization::new(x, b, z);
    let theta_hat = f.assemble()?;
    debug_assert!(cx > 0);
    Ok(EstimateResult {
        theta_hat,
        factorization: Some(f),
        objective: obj,
        selected_s: None,
        iterations: total as usize,
        restarts_used: 0,
        converged: true,
        trace: vec![],
    })
}

/// Global minimiser of `Σ_{mask} (Y' − X B Zᵀ)²` by exhaustive search over
/// `(X, Z)`, refusing when the search exceeds `cfg.exhaustive_limit` pairs.
pub fn exact_least_squares(obs: &Observation, spec: &StructureSpec, cfg: &SolverConfig) -> Result<EstimateResult> {
    let prob = Problem::new(obs.y_rescaled(), obs.mask(), spec)?;
    exact_on(&prob, cfg)
}

struct Run {
    f: Factorization,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn bcd_run(prob: &Problem<'_>, sp: &Spaces, cfg: &SolverConfig, init: (DMatrix<f64>, DMatrix<f64>)) -> Run {
    let (mut x, mut z) = init;
    let mut b = prob.solve_b(&x, &z);
    let mut obj = prob.objective_of(&x, &b, &z);
    let mut trace = vec![obj];
    let mut converged = obj == 0.0;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let prev = obj;

        let b_step = |x: &DMatrix<f64>, z: &DMatrix<f64>, b: &mut DMatrix<f64>, obj: &mut f64| {
            let nb = prob.solve_b(x, z);
            let nobj = prob.objective_of(x, &nb, z);
            if nobj <= *obj {
                *b = nb;
                *obj = nobj;
            }
        };
        b_step(&x, &z, &mut b, &mut obj);
        let profiled = |space: &FactorSpace,
                        x: &mut DMatrix<f64>,
                        z: &mut DMatrix<f64>,
                        b: &mut DMatrix<f64>,
                        obj: &mut f64,
                        on_x: bool| {
            let (saved_x, saved_z) = (x.clone(), z.clone());
            let moved = if on_x {
                space.profiled_update(x, &*z, &prob.target, &prob.obs_cols)
            } else {
                space.profiled_update(z, &*x, &prob.target_t, &prob.obs_rows)
            };
            if !moved {
                return;
            }
            let nb = prob.solve_b(x, z);
            let nobj = prob.objective_of(x, &nb, z);
            if nobj <= *obj {
                *b = nb;
                *obj = nobj;
            } else {
                *x = saved_x;
                *z = saved_z;
            }
        };
        if !matches!(sp.x, FactorSpace::Identity(_)) {
            let w = &b * z.transpose();
            if sp.x.update_rows(&mut x, &w, &prob.target, &prob.obs_cols) {
                obj = prob.objective_of(&x, &b, &z).min(obj);
                b_step(&x, &z, &mut b, &mut obj);
            }
        }
        if !matches!(sp.z, FactorSpace::Identity(_)) {
            let w = (&x * &b).transpose();
            sp.z.update_rows(&mut z, &w, &prob.target_t, &prob.obs_rows);
        }
        obj = prob.objective_of(&x, &b, &z).min(obj);
        if obj == 0.0 || prev - obj <= cfg.tol * prev {
            // stalled: try moves with B profiled out before stopping
            let stalled = obj;
            profiled(&sp.x, &mut x, &mut z, &mut b, &mut obj, true);
            profiled(&sp.z, &mut x, &mut z, &mut b, &mut obj, false);
            converged = obj == 0.0 || obj >= stalled;
        }
        trace.push(obj);
    }
    let continuous = |f: &FactorSpace| matches!(f, FactorSpace::Continuous { .. });
    if continuous(&sp.x) || continuous(&sp.z) {
        if let Some((nx, nb, nz, nobj)) = polish(prob, sp, &x, &b, &z, obj) {
            (x, b, z, obj) = (nx, nb, nz, nobj);
            trace.push(obj);
        }
        let before = obj;
        (x, b, z, obj) = escape(prob, sp, (x, b, z, obj));
        if obj < before {
            trace.push(obj);
        }
    }
    Run {
        objective: obj,
        f: Factorization::new(x, b, z),
        trace,
        iterations,
        converged,
    }
}

/// Largest `|Ω| × parameters` Jacobian the polish step will form.
const POLISH_LIMIT: usize = 20_000_000;

/// Levenberg-Marquardt on `B` and the nonzero continuous entries with the
/// supports held fixed, clipping to the boxes after each step. Returns the
/// polished triple when it lowers the loss.
type Triple = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64);

fn polish(
    prob: &Problem<'_>,
    sp: &Spaces,
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: &DMatrix<f64>,
    obj: f64,
) -> Option<Triple> {
    let free = (x.map(|v| v != 0.0), z.map(|v| v != 0.0));
    polish_on(prob, sp, (x, b, z), &free, obj, 200)
}

fn polish_on(
    prob: &Problem<'_>,
    sp: &Spaces,
    (x, b, z): (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>),
    free: &(DMatrix<bool>, DMatrix<bool>),
    obj: f64,
    max_iter: usize,
) -> Option<Triple> {
    let (kn, km) = (x.ncols(), z.ncols());
    let bmax = if prob.spec.bounded {
        prob.spec.b_max
    } else {
        f64::INFINITY
    };
    // (block, row, col, lo, hi); block 0 = X, 1 = B, 2 = Z
    let mut vars: Vec<(u8, usize, usize, f64, f64)> = Vec::new();
    for p in 0..kn {
        for q in 0..km {
            vars.push((1, p, q, -bmax, bmax));
        }
    }
    for (block, f, space) in [(0u8, &free.0, &sp.x), (2, &free.1, &sp.z)] {
        if let &FactorSpace::Continuous { lo, hi, .. } = space {
            for i in 0..f.nrows() {
                for a in 0..f.ncols() {
                    if f[(i, a)] {
                        vars.push((block, i, a, lo, hi));
                    }
                }
            }
        }
    }
    let entries: Vec<(usize, usize)> = prob
        .obs_cols
        .iter()
        .enumerate()
        .flat_map(|(i, cols)| cols.iter().map(move |&j| (i, j)))
        .collect();
    let np = vars.len();
    if entries.is_empty() || entries.len().saturating_mul(np) > POLISH_LIMIT {
        return None;
    }
    let (mut x, mut b, mut z) = (x.clone(), b.clone(), z.clone());
    let mut cur = obj;
    let mut mu = -1.0;
    for _ in 0..max_iter {
        if cur == 0.0 {
            break;
        }
        let xb = &x * &b;
        let bz = &b * z.transpose();
        let theta = &xb * z.transpose();
        let mut jac = DMatrix::zeros(entries.len(), np);
        let mut res = DVector::zeros(entries.len());
        for (r, &(i, j)) in entries.iter().enumerate() {
            res[r] = theta[(i, j)] - prob.target[(i, j)];
            for (c, &(block, u, v, _, _)) in vars.iter().enumerate() {
                jac[(r, c)] = match block {
                    0 if u == i => bz[(v, j)],
                    1 => x[(i, u)] * z[(j, v)],
                    2 if u == j => xb[(i, v)],
                    _ => 0.0,
                };
            }
        }
        let g = jac.tr_mul(&jac);
        let grad = jac.tr_mul(&res);
        let scale = g.diagonal().max().max(f64::MIN_POSITIVE);
        if mu < 0.0 {
            mu = 1e-3 * scale;
        }
        let mut improved = false;
        while mu <= 1e16 * scale {
            let mut damped = g.clone();
            for t in 0..np {
                damped[(t, t)] += mu;
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let step = chol.solve(&grad);
            let (mut nx, mut nb, mut nz) = (x.clone(), b.clone(), z.clone());
            for (c, &(block, u, v, lo, hi)) in vars.iter().enumerate() {
                let m = match block {
                    0 => &mut nx,
                    1 => &mut nb,
                    _ => &mut nz,
                };
                m[(u, v)] = (m[(u, v)] - step[c]).clamp(lo, hi);
            }
            let nobj = prob.objective_of(&nx, &nb, &nz);
            if nobj < cur {
                let gain = cur - nobj;
                (x, b, z, cur) = (nx, nb, nz, nobj);
                mu = (mu / 3.0).max(1e-20 * scale);
                improved = gain > 1e-15 * (cur + gain);
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (cur < obj).then_some((x, b, z, cur))
}

/// Largest `|Ω| × parameters` size for which support escapes are tried.
const ESCAPE_LIMIT: usize = 200_000;

/// Single-row support changes of the continuous factors, each followed by
/// a short joint polish; the first one that lowers the loss is kept and the
/// scan starts over, for at most five rounds.
fn escape(prob: &Problem<'_>, sp: &Spaces, start: Triple) -> Triple {
    let (mut x, mut b, mut z, mut obj) = start;
    let observed: usize = prob.obs_cols.iter().map(Vec::len).sum();
    let params = |space: &FactorSpace| match space {
        FactorSpace::Continuous { rows, s, .. } => rows * s,
        _ => 0,
    };
    let np = b.len() + params(&sp.x) + params(&sp.z);
    if observed.saturating_mul(np) > ESCAPE_LIMIT {
        return (x, b, z, obj);
    }
    for _ in 0..5 {
        if obj == 0.0 {
            break;
        }
        let mut moved = false;
        'scan: for on_x in [true, false] {
            let space = if on_x { &sp.x } else { &sp.z };
            let &FactorSpace::Continuous { rows, k, s, lo, hi } = space else {
                continue;
            };
            let sups = supports(k, s);
            if sups.len() > 64 {
                continue;
            }
            let (design, target, observed) = if on_x {
                (&b * z.transpose(), &prob.target, &prob.obs_cols)
            } else {
                ((&x * &b).transpose(), &prob.target_t, &prob.obs_rows)
            };
            for i in 0..rows {
                let f = if on_x { &x } else { &z };
                let now: Vec<usize> = (0..k).filter(|&a| f[(i, a)] != 0.0).collect();
                for support in &sups {
                    if *support == now {
                        continue;
                    }
                    let (g, h) = row_normal_equations(&design, target, i, &observed[i], support);
                    let v = box_least_squares(&g, &h, lo, hi);
                    let mut trial = f.clone();
                    trial.row_mut(i).fill(0.0);
                    for (&c, &val) in support.iter().zip(v.iter()) {
                        trial[(i, c)] = val;
                    }
                    let mut mask = trial.map(|v| v != 0.0);
                    for &c in support {
                        mask[(i, c)] = true;
                    }
                    let (tx, tz) = if on_x { (&trial, &z) } else { (&x, &trial) };
                    let base = prob.objective_of(tx, &b, tz);
                    let free = if on_x {
                        (mask, z.map(|v| v != 0.0))
                    } else {
                        (x.map(|v| v != 0.0), mask)
                    };
                    let Some((nx, nb, nz, nobj)) = polish_on(prob, sp, (tx, &b, tz), &free, base, 30) else {
                        continue;
                    };
                    if nobj < obj * (1.0 - 1e-6) {
                        (x, b, z, obj) = polish(prob, sp, &nx, &nb, &nz, nobj).unwrap_or((nx, nb, nz, nobj));
                        moved = true;
                        break 'scan;
                    }
                }
            }
        }
        if !moved {
            break;
        }
    }
    (x, b, z, obj)
}

fn bcd_on(prob: &Problem<'_>, cfg: &SolverConfig, seed: u64) -> Result<EstimateResult> {
    cfg.validate()?;
    let sp = spaces(prob.spec)?;
    let runs = par::map_range(cfg.execution, cfg.restarts, |r| {
        let mut rng = CounterRng::new(seed, &[r as u64]);
        let init = (sp.x.random(&mut rng), sp.z.random(&mut rng));
        bcd_run(prob, &sp, cfg, init)
    });
    let (_, best) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.objective.total_cmp(&b.objective).then(i.cmp(j)))
        .expect("restarts >= 1");
    finish_run(best, cfg.restarts)
}

fn finish_run(run: Run, restarts: usize) -> Result<EstimateResult> {
    let theta_hat = run.f.assemble()?;
    Ok(EstimateResult {
        theta_hat,
        factorization: Some(run.f),
        objective: run.objective,
        selected_s: None,
        iterations: run.iterations,
        restarts_used: restarts,
        converged: run.converged,
        trace: run.trace,
    })
}

/// Alternating minimisation of `Σ_{mask} (Y' − X B Zᵀ)²`: closed-form `B`,
/// then exact per-row updates of `X` and `Z`; best of `cfg.restarts` seeded
/// random starts.
pub fn block_coordinate_ls(
    obs: &Observation,
    spec: &StructureSpec,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<EstimateResult> {
    let prob = Problem::new(obs.y_rescaled(), obs.mask(), spec)?;
    bcd_on(&prob, cfg, seed)
}

/// Single block-coordinate run from a given starting point (its `B` is
/// ignored and re-solved).
pub fn block_coordinate_ls_from(
    obs: &Observation,
    spec: &StructureSpec,
    cfg: &SolverConfig,
    init: &Factorization,
) -> Result<EstimateResult> {
    cfg.validate()?;
    let prob = Problem::new(obs.y_rescaled(), obs.mask(), spec)?;
    let sp = spaces(spec)?;
    if init.x.shape() != (spec.n, spec.k_n) || init.z.shape() != (spec.m, spec.k_m) {
        return Err(Error::shape("init", "starting factors do not match the spec"));
    }
    finish_run(bcd_run(&prob, &sp, cfg, (init.x.clone(), init.z.clone())), 1)
}

fn ls_on(prob: &Problem<'_>, cfg: &SolverConfig, seed: u64) -> Result<EstimateResult> {
    match enumeration_size(prob.spec)? {
        Some(size) if size <= cfg.exhaustive_limit as f64 => exact_on(prob, cfg),
        _ => bcd_on(prob, cfg, seed),
    }
}

/// Exhaustive search when it fits in `cfg.exhaustive_limit`, block-coordinate
/// descent otherwise.
pub fn least_squares(obs: &Observation, spec: &StructureSpec, cfg: &SolverConfig, seed: u64) -> Result<EstimateResult> {
    let prob = Problem::new(obs.y_rescaled(), obs.mask(), spec)?;
    ls_on(&prob, cfg, seed)
}

/// Hard thresholding of the singular values of `Y' = Y/p` at `lambda`.
/// `objective` reports the discarded energy `Σ_{σ_j < λ} σ_j²`.
pub fn hard_threshold(obs: &Observation, lambda: f64) -> Result<EstimateResult> {
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let y = obs.y_rescaled();
    let (n, m) = y.shape();
    let svd = y.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut theta = DMatrix::zeros(n, m);
    let mut discarded = 0.0;
    let mut kept = 0;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s >= lambda {
            theta += s * u.column(j) * vt.row(j);
            kept += 1;
        } else {
            discarded += s * s;
        }
    }
    Ok(EstimateResult {
        theta_hat: theta,
        factorization: None,
        objective: discarded,
        selected_s: None,
        iterations: kept,
        restarts_used: 0,
        converged: true,
        trace: vec![],
    })
}

pub use crate::rates::spectral_threshold;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub s_n: usize,
    pub s_m: usize,
    /// `Σ_{mask} (Y − θ̂)²` for the cell's fit.
    pub objective: f64,
    pub penalty: f64,
    pub penalized: f64,
    pub result: EstimateResult,
}

/// Fits every `(s_n, s_m) ∈ [1..k_n] × [1..k_m]` on the unrescaled data.
pub fn adaptive_grid(
    obs: &Observation,
    base_spec: &StructureSpec,
    lambda: f64,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Vec<GridCell>> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    base_spec.validate()?;
    if !rates::adaptive_condition_holds(base_spec) {
        warn!("n m ln(3√(n∧m)) ≥ 6 ln(k_n k_m) or d ≥ 10 fails; the adaptive guarantee does not apply");
    }
    let cells: Vec<(usize, usize)> = (1..=base_spec.k_n)
        .flat_map(|a| (1..=base_spec.k_m).map(move |b| (a, b)))
        .collect();
    let fits = par::map(cfg.execution, &cells, |&(s_n, s_m)| -> Result<GridCell> {
        let spec = base_spec.with_sparsity(s_n, s_m);
        let prob = Problem::new(obs.y().clone(), obs.mask(), &spec)?;
        let result = ls_on(&prob, cfg, derive_seed(seed, &[s_n as u64, s_m as u64]))?;
        let penalty = rates::penalty(s_n, s_m, base_spec)?;
        Ok(GridCell {
            s_n,
            s_m,
            objective: result.objective,
            penalty,
            penalized: result.objective + lambda * penalty,
            result,
        })
    });
    fits.into_iter().collect()
}

/// Index of the selected cell: smallest penalized objective, ties toward
/// smaller `s_n + s_m`, then smaller `s_n`.
pub fn select_cell(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&a, &b| {
        let (ca, cb) = (&cells[a], &cells[b]);
        ca.penalized
            .total_cmp(&cb.penalized)
            .then((ca.s_n + ca.s_m).cmp(&(cb.s_n + cb.s_m)))
            .then(ca.s_n.cmp(&cb.s_n))
    })
}

/// Sparsity-adaptive penalized least squares
/// `argmin Σ_{mask} (Y − θ)² + λ R(s_n, s_m)`.
pub fn adaptive_penalized(
    obs: &Observation,
    base_spec: &StructureSpec,
    lambda: f64,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<EstimateResult> {
    let cells = adaptive_grid(obs, base_spec, lambda, cfg, seed)?;
    let best = select_cell(&cells).ok_or_else(|| Error::Parameter("empty sparsity grid".into()))?;
    let cell = cells.into_iter().nth(best).expect("index in range");
    Ok(EstimateResult {
        objective: cell.penalized,
        selected_s: Some((cell.s_n, cell.s_m)),
        ..cell.result
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate, ModelFamily};

    fn exact_cfg() -> SolverConfig {
        SolverConfig {
            execution: Execution::Sequential,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn candidate_enumeration_order() {
        let rows = enumerate_rows(3, 2, &[1.0, 2.0]);
        assert_eq!(rows.len() as f64, row_candidate_count(3, 2, 2));
        assert_eq!(rows[0], vec![]);
        assert_eq!(rows[1], vec![(0, 1.0)]);
        assert_eq!(rows[2], vec![(0, 2.0)]);
        assert_eq!(rows[3], vec![(1, 1.0)]);
        assert_eq!(rows[7], vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(rows[8], vec![(0, 1.0), (1, 2.0)]);
        assert_eq!(supports(4, 2).len(), 1 + 4 + 6);
    }

    #[test]
    fn full_mask_b_matches_design_solve() {
        let mut rng = CounterRng::new(21, &[]);
        let y = DMatrix::from_fn(6, 5, |_, _| rng.normal());
        // duplicated column makes X rank deficient
        let mut x = DMatrix::from_fn(6, 3, |_, _| f64::from(rng.below(2) as u8));
        let c0 = x.column(0).clone_owned();
        x.set_column(2, &c0);
        let z = DMatrix::from_fn(5, 2, |_, _| rng.uniform(-1.0, 1.0));
        let spec = StructureSpec::binary(6, 5, 3, 2, 1, 1);
        let full = Problem::new(y.clone(), &DMatrix::from_element(6, 5, true), &spec).unwrap();
        assert!(full.full);
        let fast = full.solve_b_min_norm(&x, &z);
        let (a, t) = full.design(&x, &z);
        let v = min_norm_solve(a, &t);
        let slow = DMatrix::from_fn(3, 2, |p, q| v[p * 2 + q]);
        assert!((fast - slow).amax() < 1e-10);
    }

    #[test]
    fn polish_reaches_noiseless_optimum_from_correct_supports() {
        let family = ModelFamily::Dictionary { d: 4, n: 6, k: 2, s: 1 };
        let (f, spec) = generate(&family, 8).unwrap();
        let theta = f.assemble().unwrap();
        let prob = Problem::new(theta.clone(), &DMatrix::from_element(4, 6, true), &spec).unwrap();
        let sp = spaces(&spec).unwrap();
        let z = DMatrix::from_fn(6, 2, |i, a| f.z[(i, a)] * (1.0 - 0.05 * i as f64));
        let b = prob.solve_b(&f.x, &z);
        let start = prob.objective_of(&f.x, &b, &z);
        let (_, _, _, obj) = polish(&prob, &sp, &f.x, &b, &z, start).unwrap();
        assert!(obj < 1e-20 && obj < start);
    }

    #[test]
    fn b_step_full_identity() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let obs = Observation::complete(y.clone(), 0.0);
        let b = solve_b_given_xz(&obs, &DMatrix::identity(2, 2), &DMatrix::identity(2, 2)).unwrap();
        assert!((b - y).amax() < 1e-12);
    }

    #[test]
    fn b_step_reproduces_noiseless_theta() {
        // Oracle: normal equations (XᵀX) B (ZᵀZ) = Xᵀ Y Z for full masks.
        let mut rng = CounterRng::new(5, &[]);
        let x = DMatrix::from_fn(6, 3, |_, _| rng.uniform(-1.0, 1.0));
        let z = DMatrix::from_fn(5, 2, |_, _| rng.uniform(-1.0, 1.0));
        let b_true = DMatrix::from_fn(3, 2, |_, _| rng.uniform(-2.0, 2.0));
        let theta = &x * &b_true * z.transpose();
        let obs = Observation::complete(theta.clone(), 0.0);
        let b = solve_b_given_xz(&obs, &x, &z).unwrap();
        let xtx = x.transpose() * &x;
        let ztz = z.transpose() * &z;
        let oracle = xtx.try_inverse().unwrap() * x.transpose() * &theta * &z * ztz.try_inverse().unwrap();
        assert!((&b - oracle).amax() < 1e-9);
        assert!((&x * &b * z.transpose() - theta).norm() <= 1e-8);
    }

    #[test]
    fn b_step_minimum_norm_when_underdetermined() {
        // One observation, four unknowns: the minimum-norm fit puts all
        // weight on the single active design coordinate.
        let mut mask = DMatrix::from_element(2, 2, false);
        mask[(0, 0)] = true;
        let mut y = DMatrix::zeros(2, 2);
        y[(0, 0)] = 3.0;
        let obs = Observation::new(y, mask, 1.0, 0.0, None).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = solve_b_given_xz(&obs, &x, &z).unwrap();
        let fit = (&x * &b * z.transpose())[(0, 0)];
        assert!((fit - 3.0).abs() < 1e-12);
        // design row (1, 0, 1, 0): B = [1.5 0; 1.5 0]
        assert!((b[(0, 0)] - 1.5).abs() < 1e-12 && (b[(1, 0)] - 1.5).abs() < 1e-12);
        assert!(b[(0, 1)].abs() < 1e-12 && b[(1, 1)].abs() < 1e-12);
    }

    #[test]
    fn exact_recovers_member_noiselessly() {
        let spec = StructureSpec::binary(3, 3, 2, 2, 1, 1);
        let (f, _) = generate(
            &ModelFamily::Biclustering {
                n: 3,
                m: 3,
                k_n: 2,
                k_m: 2,
            },
            3,
        )
        .unwrap();
        let theta = f.assemble().unwrap();
        let r = exact_least_squares(&Observation::complete(theta.clone(), 0.0), &spec, &exact_cfg()).unwrap();
        assert!(r.objective < 1e-24);
        assert!((r.theta_hat - theta).amax() < 1e-12);
    }

    #[test]
    fn exact_small_brute_force_example() {
        let spec = StructureSpec::binary(2, 2, 1, 1, 1, 1);
        let y = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let r = exact_least_squares(&Observation::complete(y.clone(), 0.0), &spec, &exact_cfg()).unwrap();
        assert!((&r.theta_hat - &y).amax() < 1e-12);
        let f = r.factorization.unwrap();
        assert_eq!(f.x, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(f.z, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
        assert!((f.b[(0, 0)] - 2.0).abs() < 1e-12);
        assert_eq!(r.iterations, 16);
    }

    #[test]
    fn exact_refuses_large_search() {
        let mut spec = StructureSpec::binary(6, 6, 4, 4, 1, 1);
        spec.alphabet_n = Alphabet::finite(vec![-1.0, 0.0, 1.0]).unwrap();
        spec.alphabet_m = spec.alphabet_n.clone();
        let obs = Observation::complete(DMatrix::zeros(6, 6), 0.0);
        assert!(matches!(
            exact_least_squares(&obs, &spec, &exact_cfg()),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn bcd_fixed_point_at_truth() {
        let (f, spec) = generate(&ModelFamily::Sbm { n: 8, k: 2 }, 1).unwrap();
        let obs = Observation::complete(f.assemble().unwrap(), 0.0);
        let r = block_coordinate_ls_from(&obs, &spec, &exact_cfg(), &f).unwrap();
        assert!(r.objective < 1e-20);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn bcd_trace_is_non_increasing() {
        let (f, spec) = generate(
            &ModelFamily::Biclustering {
                n: 12,
                m: 10,
                k_n: 3,
                k_m: 2,
            },
            2,
        )
        .unwrap();
        let theta = f.assemble().unwrap();
        let mut rng = CounterRng::new(3, &[]);
        let noisy = theta.map(|v| v + 0.3 * rng.normal());
        let obs = Observation::complete(noisy, 0.3);
        let r = block_coordinate_ls(
            &obs,
            &spec,
            &SolverConfig {
                restarts: 4,
                ..exact_cfg()
            },
            9,
        )
        .unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bcd_refuses_huge_rows() {
        let mut spec = StructureSpec::binary(4, 4, 40, 4, 10, 1);
        spec.alphabet_n = Alphabet::finite(vec![1.0, 2.0, 3.0]).unwrap();
        let obs = Observation::complete(DMatrix::zeros(4, 4), 0.0);
        assert!(matches!(
            block_coordinate_ls(&obs, &spec, &exact_cfg(), 0),
            Err(Error::Refused(_))
        ));
    }

    #[test]
    fn continuous_rows_track_bounded_box() {
        let (f, spec) = generate(&ModelFamily::MixedMembership { n: 6, k: 3, s: 2 }, 4).unwrap();
        let obs = Observation::complete(f.assemble().unwrap(), 0.0);
        let r = block_coordinate_ls(
            &obs,
            &spec,
            &SolverConfig {
                restarts: 3,
                ..exact_cfg()
            },
            0,
        )
        .unwrap();
        let fr = r.factorization.unwrap();
        assert!(fr.x.iter().chain(fr.z.iter()).all(|&v| (0.0..=1.0).contains(&v)));
        assert!(fr.b.amax() <= spec.b_max + 1e-12);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn box_least_squares_matches_grid_search() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = DVector::from_vec(vec![3.0, -1.0]);
        let v = box_least_squares(&g, &h, 0.0, 1.0);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 0..=200 {
            for b in 0..=200 {
                let w = DVector::from_vec(vec![a as f64 / 200.0, b as f64 / 200.0]);
                let q = quadratic(&g, &h, &w);
                if q < best.0 {
                    best = (q, w[0], w[1]);
                }
            }
        }
        assert!((v[0] - best.1).abs() < 1e-2 && (v[1] - best.2).abs() < 1e-2);
        assert!(quadratic(&g, &h, &v) <= best.0 + 1e-12);
    }

    #[test]
    fn hard_threshold_examples() {
        let y = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0]);
        let obs = Observation::complete(y.clone(), 0.0);
        let r = hard_threshold(&obs, 3.0).unwrap();
        assert!((r.theta_hat - DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 0.0])).amax() < 1e-12);
        assert!((r.objective - 1.0).abs() < 1e-12);
        assert!((hard_threshold(&obs, 0.0).unwrap().theta_hat - &y).amax() < 1e-12);
        assert!(hard_threshold(&obs, 5.1).unwrap().theta_hat.amax() == 0.0);
        assert!(hard_threshold(&obs, -1.0).is_err());
    }

    #[test]
    fn hard_threshold_rank_and_spectrum() {
        let mut rng = CounterRng::new(17, &[]);
        let y = DMatrix::from_fn(8, 6, |_, _| rng.uniform(-1.0, 1.0));
        let obs = Observation::complete(y.clone(), 0.0);
        let sv = y.singular_values();
        let lambda = 0.5 * (sv[1] + sv[2]).max(sv.iter().copied().fold(0.0, f64::max) * 0.3);
        let r = hard_threshold(&obs, lambda).unwrap();
        let kept: Vec<f64> = sv.iter().copied().filter(|&s| s >= lambda).collect();
        let out = r.theta_hat.singular_values();
        let nonzero: Vec<f64> = out.iter().copied().filter(|&s| s > 1e-9).collect();
        assert_eq!(nonzero.len(), kept.len());
        for s in nonzero {
            assert!(kept.iter().any(|&k| (k - s).abs() < 1e-9));
        }
    }

    #[test]
    fn adaptive_prefers_smallest_class_on_zero_signal() {
        let spec = StructureSpec::binary(3, 3, 2, 2, 1, 1);
        let obs = Observation::complete(DMatrix::zeros(3, 3), 0.0);
        let r = adaptive_penalized(&obs, &spec, 1.0, &exact_cfg(), 0).unwrap();
        assert_eq!(r.selected_s, Some((1, 1)));
        assert!(r.theta_hat.amax() == 0.0);
    }

    #[test]
    fn adaptive_with_vanishing_lambda_follows_residual() {
        let (f, _) = generate(
            &ModelFamily::Biclustering {
                n: 3,
                m: 3,
                k_n: 2,
                k_m: 2,
            },
            5,
        )
        .unwrap();
        let mut rng = CounterRng::new(1, &[]);
        let y = f.assemble().unwrap().map(|v| v + 0.5 * rng.normal());
        let obs = Observation::complete(y, 0.5);
        let spec = StructureSpec::binary(3, 3, 2, 2, 1, 1);
        let cells = adaptive_grid(&obs, &spec, 1e-12, &exact_cfg(), 0).unwrap();
        let r = adaptive_penalized(&obs, &spec, 1e-12, &exact_cfg(), 0).unwrap();
        let min_resid = cells.iter().map(|c| c.objective).fold(f64::INFINITY, f64::min);
        let sel = r.selected_s.unwrap();
        let chosen = cells.iter().find(|c| (c.s_n, c.s_m) == sel).unwrap();
        assert!(chosen.objective <= min_resid + 1e-9);
        assert!(cells.iter().find(|c| (c.s_n, c.s_m) == (2, 2)).unwrap().objective <= min_resid + 1e-12);
    }

    #[test]
    fn select_cell_tie_rules() {
        let dummy = EstimateResult {
            theta_hat: DMatrix::zeros(1, 1),
            factorization: None,
            objective: 0.0,
            selected_s: None,
            iterations: 0,
            restarts_used: 0,
            converged: true,
            trace: vec![],
        };
        let cell = |s_n, s_m, penalized| GridCell {
            s_n,
            s_m,
            objective: 0.0,
            penalty: 0.0,
            penalized,
            result: dummy.clone(),
        };
        let cells = vec![cell(2, 1, 1.0), cell(1, 2, 1.0), cell(1, 1, 2.0), cell(2, 2, 1.0)];
        assert_eq!(select_cell(&cells), Some(1));
    }
}
