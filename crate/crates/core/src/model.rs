//! Structured-matrix data model: alphabets, structure specs, factorizations,
//! observations, membership validation and matrix norms.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{dense, ObservationFile};

/// Tolerance for alphabet membership of externally loaded factors.
pub const LOADED_ALPHABET_TOL: f64 = 1e-9;

/// Largest dimension for which the spectral norm uses a full SVD.
pub const SVD_NORM_LIMIT: usize = 512;

/// Set of admissible non-zero values for the entries of `X` or `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Alphabet {
    /// Sorted, distinct values.
    Finite { values: Vec<f64> },
    /// Closed interval `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
}

impl Alphabet {
    pub fn finite(values: Vec<f64>) -> Result<Self> {
        let a = Alphabet::Finite { values };
        a.validate()?;
        Ok(a)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        let a = Alphabet::Interval { lo, hi };
        a.validate()?;
        Ok(a)
    }

    /// The alphabet `{0, 1}`.
    pub fn binary() -> Self {
        Alphabet::Finite { values: vec![0.0, 1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Alphabet::Finite { values } => {
                if values.is_empty() {
                    return Err(Error::Parameter("finite alphabet is empty".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parameter("alphabet values must be finite".into()));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Parameter("finite alphabet must be strictly increasing".into()));
                }
                Ok(())
            }
            Alphabet::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(Error::Parameter(format!(
                        "interval alphabet needs lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Alphabet::Finite { .. })
    }

    /// Non-zero values of a finite alphabet in increasing order.
    pub fn nonzero_values(&self) -> Option<Vec<f64>> {
        match self {
            Alphabet::Finite { values } => Some(values.iter().copied().filter(|&v| v != 0.0).collect()),
            Alphabet::Interval { .. } => None,
        }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        match self {
            Alphabet::Finite { values } => values.iter().any(|&a| (a - v).abs() <= tol),
            Alphabet::Interval { lo, hi } => v >= lo - tol && v <= hi + tol,
        }
    }
}

/// Geometry of the class `Θ(s_n, s_m)` (or its bounded version when
/// `bounded` is set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub n: usize,
    pub m: usize,
    pub k_n: usize,
    pub k_m: usize,
    pub s_n: usize,
    pub s_m: usize,
    pub alphabet_n: Alphabet,
    pub alphabet_m: Alphabet,
    pub b_max: f64,
    pub theta_mx: f64,
    pub bounded: bool,
}

impl StructureSpec {
    /// Unbounded spec with `{0, 1}` alphabets and unit bounds.
    pub fn binary(n: usize, m: usize, k_n: usize, k_m: usize, s_n: usize, s_m: usize) -> Self {
        Self {
            n,
            m,
            k_n,
            k_m,
            s_n,
            s_m,
            alphabet_n: Alphabet::binary(),
            alphabet_m: Alphabet::binary(),
            b_max: 1.0,
            theta_mx: 1.0,
            bounded: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.k_n == 0 || self.k_m == 0 {
            return Err(Error::Parameter("n, m, k_n, k_m must be positive".into()));
        }
        if self.s_n > self.k_n || self.s_m > self.k_m {
            return Err(Error::Parameter(format!(
                "sparsity out of range: s_n={} (k_n={}), s_m={} (k_m={})",
                self.s_n, self.k_n, self.s_m, self.k_m
            )));
        }
        if self.s_n == 0 && self.k_n != self.n {
            return Err(Error::Parameter("s_n = 0 requires k_n = n".into()));
        }
        if self.s_m == 0 && self.k_m != self.m {
            return Err(Error::Parameter("s_m = 0 requires k_m = m".into()));
        }
        if !(self.b_max > 0.0 && self.theta_mx > 0.0) {
            return Err(Error::Parameter("b_max and theta_mx must be positive".into()));
        }
        self.alphabet_n.validate()?;
        self.alphabet_m.validate()
    }

    pub fn d(&self) -> usize {
        self.n + self.m
    }

    pub fn r_n(&self) -> usize {
        self.n.min(self.k_n)
    }

    pub fn r_m(&self) -> usize {
        self.m.min(self.k_m)
    }

    pub fn with_sparsity(&self, s_n: usize, s_m: usize) -> Self {
        Self {
            s_n,
            s_m,
            ..self.clone()
        }
    }
}

/// A triple `(X, B, Z)` representing `θ = X B Zᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    #[serde(with = "dense")]
    pub x: DMatrix<f64>,
    #[serde(with = "dense")]
    pub b: DMatrix<f64>,
    #[serde(with = "dense")]
    pub z: DMatrix<f64>,
}

impl Factorization {
    pub fn new(x: DMatrix<f64>, b: DMatrix<f64>, z: DMatrix<f64>) -> Self {
        Self { x, b, z }
    }

    pub fn assemble(&self) -> Result<DMatrix<f64>> {
        assemble(self)
    }
}

/// Dense product `X B Zᵀ`.
pub fn assemble(f: &Factorization) -> Result<DMatrix<f64>> {
    if f.x.ncols() != f.b.nrows() {
        return Err(Error::shape(
            "X",
            format!("X has {} columns but B has {} rows", f.x.ncols(), f.b.nrows()),
        ));
    }
    if f.z.ncols() != f.b.ncols() {
        return Err(Error::shape(
            "Z",
            format!("Z has {} columns but B has {} columns", f.z.ncols(), f.b.ncols()),
        ));
    }
    Ok(&f.x * &f.b * f.z.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Matrix,
    Row(usize),
    Entry(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub location: Location,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Location::Matrix => write!(f, "{} (value {})", self.constraint, self.value),
            Location::Row(i) => write!(f, "{}, row {} (value {})", self.constraint, i, self.value),
            Location::Entry(i, j) => write!(f, "{}, entry ({}, {}) (value {})", self.constraint, i, j, self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted: bool,
    pub violations: Vec<Violation>,
}

/// Membership check with exact alphabet equality, for generator output.
pub fn validate_membership(f: &Factorization, spec: &StructureSpec) -> ValidationReport {
    validate_membership_tol(f, spec, 0.0)
}

/// Membership check with an absolute tolerance on alphabet and bound checks.
pub fn validate_membership_tol(f: &Factorization, spec: &StructureSpec, tol: f64) -> ValidationReport {
    let mut v = Vec::new();
    let shapes = [
        ("X", &f.x, spec.n, spec.k_n),
        ("B", &f.b, spec.k_n, spec.k_m),
        ("Z", &f.z, spec.m, spec.k_m),
    ];
    for (name, mat, rows, cols) in shapes {
        if mat.nrows() != rows || mat.ncols() != cols {
            v.push(Violation {
                constraint: format!(
                    "shape {name}: expected {rows}x{cols}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                ),
                location: Location::Matrix,
                value: f64::NAN,
            });
        }
    }
    if !v.is_empty() {
        return ValidationReport {
            accepted: false,
            violations: v,
        };
    }

    check_factor("X", &f.x, spec.s_n, &spec.alphabet_n, spec.bounded, tol, &mut v);
    check_factor("Z", &f.z, spec.s_m, &spec.alphabet_m, spec.bounded, tol, &mut v);

    if spec.bounded {
        for ((i, j), &b) in indexed(&f.b) {
            if b.abs() > spec.b_max + tol {
                v.push(Violation {
                    constraint: "‖B‖_∞ ≤ b_max".into(),
                    location: Location::Entry(i, j),
                    value: b,
                });
            }
        }
        if let Ok(theta) = assemble(f) {
            for ((i, j), &t) in indexed(&theta) {
                if t.abs() > spec.theta_mx + tol {
                    v.push(Violation {
                        constraint: "‖θ‖_∞ ≤ θ_mx".into(),
                        location: Location::Entry(i, j),
                        value: t,
                    });
                }
            }
        }
    }

    ValidationReport {
        accepted: v.is_empty(),
        violations: v,
    }
}

fn indexed(a: &DMatrix<f64>) -> impl Iterator<Item = ((usize, usize), &f64)> {
    let rows = a.nrows();
    a.iter().enumerate().map(move |(idx, x)| ((idx % rows, idx / rows), x))
}

fn check_factor(
    name: &str,
    a: &DMatrix<f64>,
    s: usize,
    alphabet: &Alphabet,
    bounded: bool,
    tol: f64,
    out: &mut Vec<Violation>,
) {
    if s == 0 {
        for ((i, j), &x) in indexed(a) {
            let want = if i == j { 1.0 } else { 0.0 };
            if (x - want).abs() > tol {
                out.push(Violation {
                    constraint: format!("identity {name}"),
                    location: Location::Entry(i, j),
                    value: x,
                });
            }
        }
        return;
    }
    for i in 0..a.nrows() {
        let nnz = a.row(i).iter().filter(|x| x.abs() > tol).count();
        if nnz > s {
            out.push(Violation {
                constraint: format!("row-sparsity {name}"),
                location: Location::Row(i),
                value: nnz as f64,
            });
        }
    }
    for ((i, j), &x) in indexed(a) {
        if x.abs() <= tol {
            continue;
        }
        if !alphabet.contains(x, tol) {
            out.push(Violation {
                constraint: format!("alphabet {name}"),
                location: Location::Entry(i, j),
                value: x,
            });
        }
        if bounded && x.abs() > 1.0 + tol {
            out.push(Violation {
                constraint: format!("‖{name}‖_∞ ≤ 1"),
                location: Location::Entry(i, j),
                value: x,
            });
        }
    }
}

/// Observed data `Y = E ∘ (θ* + W)` with its Bernoulli mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservationFile", into = "ObservationFile")]
pub struct Observation {
    y: DMatrix<f64>,
    mask: DMatrix<bool>,
    p: f64,
    sigma: f64,
    b: Option<f64>,
}

impl Observation {
    pub fn new(y: DMatrix<f64>, mask: DMatrix<bool>, p: f64, sigma: f64, b: Option<f64>) -> Result<Self> {
        if y.shape() != mask.shape() {
            return Err(Error::shape(
                "mask",
                format!("y is {:?} but mask is {:?}", y.shape(), mask.shape()),
            ));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!("p must lie in (0, 1], got {p}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if let Some(b) = b {
            if !(b >= 0.0) {
                return Err(Error::Parameter(format!("b must be >= 0, got {b}")));
            }
        }
        if y.iter().zip(mask.iter()).any(|(&v, &e)| !e && v != 0.0) {
            return Err(Error::Parameter("y must be zero at every unobserved entry".into()));
        }
        Ok(Self { y, mask, p, sigma, b })
    }

    /// Fully observed data with `p = 1`.
    pub fn complete(y: DMatrix<f64>, sigma: f64) -> Self {
        let mask = DMatrix::from_element(y.nrows(), y.ncols(), true);
        Self {
            y,
            mask,
            p: 1.0,
            sigma,
            b: None,
        }
    }

    pub fn with_noise_level(mut self, sigma: f64, b: Option<f64>) -> Self {
        self.sigma = sigma;
        self.b = b;
        self
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn b(&self) -> Option<f64> {
        self.b
    }

    pub fn nrows(&self) -> usize {
        self.y.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.y.ncols()
    }

    /// `Y' = Y / p`.
    pub fn y_rescaled(&self) -> DMatrix<f64> {
        &self.y / self.p
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&e| e).count()
    }

    /// The index set `Ω` in row-major order.
    pub fn observed(&self) -> Vec<(usize, usize)> {
        let (n, m) = self.mask.shape();
        (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| self.mask[(i, j)])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub frobenius: f64,
    pub spectral: f64,
    pub sup: f64,
}

pub fn norms(a: &DMatrix<f64>) -> Result<Norms> {
    if a.is_empty() {
        return Err(Error::Parameter("norms of an empty matrix".into()));
    }
    Ok(Norms {
        frobenius: a.norm(),
        spectral: spectral_norm(a),
        sup: a.amax(),
    })
}

/// Largest singular value: full SVD up to 512×512, power iteration above.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.nrows() <= SVD_NORM_LIMIT && a.ncols() <= SVD_NORM_LIMIT {
        a.singular_values().max()
    } else {
        spectral_norm_power(a, 1e-10, 10_000)
    }
}

/// Power iteration on `AᵀA`, stopping on relative change below `tol`.
pub fn spectral_norm_power(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let m = a.ncols();
    let mut v = DVector::from_fn(m, |j, _| 1.0 + (j as f64 * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let av = a * &v;
        let mut w = a.tr_mul(&av);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        w /= wn;
        let next = av.norm();
        let done = (next - sigma).abs() <= tol * next.max(f64::MIN_POSITIVE);
        sigma = next;
        v = w;
        if done {
            break;
        }
    }
    (a * &v).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_spec(n: usize) -> StructureSpec {
        StructureSpec::binary(n, n, n, n, 0, 0)
    }

    #[test]
    fn assemble_identity_factors() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = Factorization::new(DMatrix::identity(2, 2), b.clone(), DMatrix::identity(2, 2));
        assert_eq!(f.assemble().unwrap(), b);
    }

    #[test]
    fn assemble_one_hot_block_model() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.9]);
        let theta = Factorization::new(z.clone(), b, z).assemble().unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.1, 0.5, 0.5, 0.1, 0.1, 0.1, 0.9]);
        assert!((theta - want).amax() < 1e-15);
    }

    #[test]
    fn assemble_zero_row_propagates() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let theta = Factorization::new(x, b, DMatrix::identity(2, 2)).assemble().unwrap();
        assert!(theta.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assemble_reports_offending_factor() {
        let f = Factorization::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2));
        match f.assemble() {
            Err(Error::Shape { factor, .. }) => assert_eq!(factor, "X"),
            other => panic!("expected shape error, got {other:?}"),
        }
        let f = Factorization::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 3));
        assert!(matches!(f.assemble(), Err(Error::Shape { factor, .. }) if factor == "Z"));
    }

    #[test]
    fn identity_is_sole_member_for_zero_sparsity() {
        let spec = identity_spec(3);
        let f = Factorization::new(
            DMatrix::identity(3, 3),
            DMatrix::from_element(3, 3, 0.3),
            DMatrix::identity(3, 3),
        );
        assert!(validate_membership(&f, &spec).accepted);
        let mut g = f.clone();
        g.x[(0, 1)] = 1.0;
        let r = validate_membership(&g, &spec);
        assert!(!r.accepted);
        assert_eq!(r.violations[0].constraint, "identity X");
    }

    #[test]
    fn row_sparsity_violation_names_row() {
        let spec = StructureSpec::binary(3, 2, 3, 2, 1, 1);
        let mut x = DMatrix::zeros(3, 3);
        x[(0, 0)] = 1.0;
        x[(1, 0)] = 1.0;
        x[(1, 2)] = 1.0;
        let f = Factorization::new(x, DMatrix::zeros(3, 2), DMatrix::identity(2, 2));
        let r = validate_membership(&f, &spec);
        assert!(!r.accepted);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].constraint, "row-sparsity X");
        assert_eq!(r.violations[0].location, Location::Row(1));
        assert_eq!(r.violations[0].to_string(), "row-sparsity X, row 1 (value 2)");
    }

    #[test]
    fn bounded_spec_rejects_large_factor_entry() {
        let mut spec = StructureSpec::binary(2, 2, 2, 2, 1, 1);
        spec.alphabet_n = Alphabet::interval(-2.0, 2.0).unwrap();
        spec.bounded = true;
        spec.theta_mx = 10.0;
        let mut x = DMatrix::identity(2, 2);
        x[(0, 0)] = 1.5;
        let f = Factorization::new(x, DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2));
        let r = validate_membership(&f, &spec);
        assert!(!r.accepted);
        assert!(r.violations.iter().any(|v| v.constraint == "‖X‖_∞ ≤ 1"));
    }

    #[test]
    fn loaded_values_use_tolerance() {
        let spec = StructureSpec::binary(2, 2, 2, 2, 1, 1);
        let mut x = DMatrix::identity(2, 2);
        x[(0, 0)] = 1.0 + 1e-12;
        let f = Factorization::new(x, DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        assert!(!validate_membership(&f, &spec).accepted);
        assert!(validate_membership_tol(&f, &spec, LOADED_ALPHABET_TOL).accepted);
    }

    #[test]
    fn alphabet_invariants() {
        assert!(Alphabet::finite(vec![]).is_err());
        assert!(Alphabet::finite(vec![1.0, 0.0]).is_err());
        assert!(Alphabet::finite(vec![0.0, 0.0]).is_err());
        assert!(Alphabet::interval(1.0, 0.0).is_err());
        assert!(Alphabet::interval(0.0, 0.0).is_ok());
    }

    #[test]
    fn spec_invariants() {
        assert!(StructureSpec::binary(3, 3, 2, 3, 0, 0).validate().is_err());
        assert!(StructureSpec::binary(3, 3, 3, 3, 0, 0).validate().is_ok());
        assert!(StructureSpec::binary(3, 3, 2, 2, 3, 1).validate().is_err());
        let s = StructureSpec::binary(5, 3, 7, 2, 1, 1);
        assert_eq!((s.d(), s.r_n(), s.r_m()), (8, 5, 2));
    }

    #[test]
    fn observation_rejects_nonzero_masked_entries() {
        let y = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let mask = DMatrix::from_row_slice(1, 2, &[true, false]);
        assert!(Observation::new(y, mask, 0.5, 1.0, None).is_err());
    }

    #[test]
    fn observation_rescales() {
        let y = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let mask = DMatrix::from_row_slice(1, 2, &[true, false]);
        let obs = Observation::new(y, mask, 0.5, 1.0, None).unwrap();
        assert_eq!(obs.y_rescaled()[(0, 0)], 2.0);
        assert_eq!(obs.observed(), vec![(0, 0)]);
        assert!(Observation::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, true), 0.0, 1.0, None).is_err());
    }

    #[test]
    fn norms_of_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let n = norms(&a).unwrap();
        assert!((n.spectral - 3.0).abs() < 1e-12);
        assert!((n.frobenius - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(n.sup, 3.0);
        assert!(norms(&DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn norms_of_rank_one() {
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let v = DVector::from_vec(vec![0.0, 2f64.sqrt()]);
        let a = &u * v.transpose();
        assert!((norms(&a).unwrap().spectral - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_matches_power_iteration_oracle() {
        // Oracle: plain power iteration on AᵀA with 5000 fixed steps.
        let mut rng = crate::rng::CounterRng::new(2024, &[]);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.uniform(-1.0, 1.0));
        let ata = a.transpose() * &a;
        let mut v = DVector::from_element(3, 1.0);
        for _ in 0..5000 {
            v = &ata * &v;
            v /= v.norm();
        }
        let oracle = (&a * &v).norm();
        assert!((spectral_norm(&a) - oracle).abs() < 1e-10);
        assert!((spectral_norm_power(&a, 1e-14, 10_000) - oracle).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn sparse_product_bound(seed in any::<u64>(), n in 1usize..6, m in 1usize..6, k in 1usize..4, s in 1usize..4) {
            // ‖(XB)Zᵀ‖_F ≤ s_m √(nm) ‖XB‖_∞ ‖Z‖_∞ when rows of Z are s_m-sparse.
            let s = s.min(k);
            let mut rng = crate::rng::CounterRng::new(seed, &[]);
            let xb = DMatrix::from_fn(n, k, |_, _| rng.uniform(-2.0, 2.0));
            let mut z = DMatrix::zeros(m, k);
            for i in 0..m {
                for j in rng.subset(k, s) {
                    z[(i, j)] = rng.uniform(-1.5, 1.5);
                }
            }
            let lhs = (&xb * z.transpose()).norm();
            let rhs = s as f64 * ((n * m) as f64).sqrt() * xb.amax() * z.amax();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn assemble_is_linear_in_b(seed in any::<u64>()) {
            let mut rng = crate::rng::CounterRng::new(seed, &[]);
            let x = DMatrix::from_fn(4, 3, |_, _| rng.uniform(-1.0, 1.0));
            let z = DMatrix::from_fn(5, 2, |_, _| rng.uniform(-1.0, 1.0));
            let b1 = DMatrix::from_fn(3, 2, |_, _| rng.uniform(-1.0, 1.0));
            let b2 = DMatrix::from_fn(3, 2, |_, _| rng.uniform(-1.0, 1.0));
            let lhs = Factorization::new(x.clone(), &b1 + &b2, z.clone()).assemble().unwrap();
            let rhs = Factorization::new(x.clone(), b1, z.clone()).assemble().unwrap()
                + Factorization::new(x, b2, z).assemble().unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }
    }
}
