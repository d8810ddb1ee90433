//! Lower-bound constructions: sparse binary packings, random sign
//! embeddings and the hypothesis sets `T_Z` and `T_B`.
//!
//! Every certificate is recomputed from the constructed objects; nothing is
//! taken on trust from the lemmas that motivate the construction.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::dense_list;
use crate::model::{validate_membership, Factorization, StructureSpec};
use crate::par::{self, Execution};
use crate::rates::kl_divergence;
use crate::rng::CounterRng;

/// Target packing constants `(c1, c2, c3)`.
pub const DEFAULT_CONSTANTS: (f64, f64, f64) = (0.1, 0.5, 0.5);

/// Candidates examined by the greedy packing before it stops.
pub const CANDIDATE_LIMIT: u64 = 1 << 20;

pub const DEFAULT_SET_CAP: usize = 64;
pub const DEFAULT_MAX_RESAMPLES: usize = 1000;

/// Relative slack for comparing recomputed certificates.
const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryPacking {
    pub k: usize,
    pub s: usize,
    pub codewords: Vec<Vec<u8>>,
    pub constants: (f64, f64, f64),
}

impl BinaryPacking {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Minimum pairwise squared distance, `None` for fewer than two words.
    pub fn min_sq_distance(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (u, a) in self.codewords.iter().enumerate() {
            for b in &self.codewords[u + 1..] {
                let d = hamming(a, b);
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best
    }
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn ln_binom(k: usize, w: usize) -> f64 {
    (0..w).map(|i| ((k - i) as f64 / (i + 1) as f64).ln()).sum()
}

fn bits_to_word(bits: u64, k: usize) -> Vec<u8> {
    (0..k).map(|i| ((bits >> i) & 1) as u8).collect()
}

/// All `k`-bit masks with popcount in `weights`, in increasing numeric order.
fn all_masks(k: usize, weights: std::ops::RangeInclusive<usize>) -> Vec<u64> {
    let mut out = Vec::new();
    for w in weights {
        if w == 0 {
            out.push(0);
            continue;
        }
        let mut v: u64 = (1u64 << w) - 1;
        let limit = if k == 64 { u64::MAX } else { 1u64 << k };
        while v < limit {
            out.push(v);
            let t = v | (v - 1);
            let next = (t.wrapping_add(1)) | (((!t & t.wrapping_add(1)).wrapping_sub(1)) >> (v.trailing_zeros() + 1));
            if next <= v {
                break;
            }
            v = next;
        }
    }
    out
}

/// Greedy packing of `{0,1}^k`: candidates of weight `s` (or weights in
/// `[⌈c2 s⌉, s]` when `s > k/2`) are visited in seeded random order and kept
/// when their squared distance to every kept word is at least `c3·s`.
pub fn sparse_binary_packing(k: usize, s: usize, target_c: (f64, f64, f64), seed: u64) -> Result<BinaryPacking> {
    let (c1, c2, c3) = target_c;
    if k < 2 || s == 0 || s > k {
        return Err(Error::Parameter(format!(
            "packing needs k >= 2 and 1 <= s <= k, got k={k}, s={s}"
        )));
    }
    if k > 64 {
        return Err(Error::Parameter(format!("packing supports k <= 64, got {k}")));
    }
    if !(c1 > 0.0 && c2 > 0.0 && c2 <= 1.0 && c3 > 0.0) {
        return Err(Error::Parameter(format!("invalid packing constants {target_c:?}")));
    }
    let lo = if 2 * s <= k {
        s
    } else {
        ((c2 * s as f64).ceil() as usize).clamp(1, s)
    };
    let total: f64 = (lo..=s).map(|w| ln_binom(k, w).exp()).sum();
    let need = c3 * s as f64;
    let mut rng = CounterRng::new(seed, &[]);
    let mut kept: Vec<u64> = Vec::new();
    let consider = |mask: u64, kept: &mut Vec<u64>| {
        if kept.iter().all(|&w| ((w ^ mask).count_ones() as f64) >= need) {
            kept.push(mask);
        }
    };
    if total <= CANDIDATE_LIMIT as f64 {
        let mut cands = all_masks(k, lo..=s);
        rng.shuffle(&mut cands);
        for mask in cands {
            consider(mask, &mut kept);
        }
    } else {
        let widths: Vec<f64> = (lo..=s).map(|w| ln_binom(k, w)).collect();
        let wmax = widths.iter().copied().fold(f64::MIN, f64::max);
        let weights: Vec<f64> = widths.iter().map(|l| (l - wmax).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        for _ in 0..CANDIDATE_LIMIT {
            let mut u = rng.next_f64() * wsum;
            let mut w = lo;
            for (i, &x) in weights.iter().enumerate() {
                w = lo + i;
                if u < x {
                    break;
                }
                u -= x;
            }
            let mask = rng.subset(k, w).into_iter().fold(0u64, |m, i| m | (1 << i));
            if !kept.contains(&mask) {
                consider(mask, &mut kept);
            }
        }
    }
    let packing = BinaryPacking {
        k,
        s,
        codewords: kept.iter().map(|&m| bits_to_word(m, k)).collect(),
        constants: target_c,
    };
    certify_packing(&packing)?;
    Ok(packing)
}

/// Checks the three packing invariants by direct computation.
pub fn certify_packing(p: &BinaryPacking) -> Result<()> {
    let (c1, c2, c3) = p.constants;
    let (k, s) = (p.k as f64, p.s as f64);
    for a in &p.codewords {
        let w = a.iter().filter(|&&v| v == 1).count();
        let weight_ok = if 2 * p.s <= p.k {
            w == p.s
        } else {
            (w as f64) >= c2 * s && w <= p.s
        };
        if !weight_ok || a.len() != p.k {
            return Err(Error::Construction(format!(
                "codeword weight {w} violates the packing weights"
            )));
        }
    }
    if let Some(d) = p.min_sq_distance() {
        if (d as f64) < c3 * s {
            return Err(Error::Construction(format!(
                "pairwise distance {d} < c3·s = {}",
                c3 * s
            )));
        }
    }
    let need = c1 * s * (std::f64::consts::E * k / s).ln();
    let have = (p.len() as f64).ln();
    if p.is_empty() || have < need {
        return Err(Error::Construction(format!(
            "greedy packing reached {} codewords (log {have:.4}) but c1·s·ln(ek/s) = {need:.4}; lower c3 or reseed",
            p.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignEmbedding {
    pub q: DMatrix<i8>,
    /// Attempts drawn before acceptance (1 = first draw accepted).
    pub attempts: usize,
    /// Extreme ratios `‖Q(a−b)‖² / (r‖a−b‖²)` over all distinct pairs.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl SignEmbedding {
    pub fn as_f64(&self) -> DMatrix<f64> {
        self.q.map(f64::from)
    }
}

fn pair_ratios(q: &DMatrix<i8>, vectors: &[Vec<u8>]) -> (f64, f64) {
    let r = q.nrows() as f64;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (u, a) in vectors.iter().enumerate() {
        for b in &vectors[u + 1..] {
            let d = hamming(a, b);
            if d == 0 {
                continue;
            }
            let mut proj = 0.0;
            for row in 0..q.nrows() {
                let v: i64 = (0..a.len())
                    .map(|c| i64::from(q[(row, c)]) * (i64::from(a[c]) - i64::from(b[c])))
                    .sum();
                proj += (v * v) as f64;
            }
            let ratio = proj / (r * d as f64);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    if lo.is_infinite() {
        (1.0, 1.0)
    } else {
        (lo, hi)
    }
}

/// Rejection sampling of an `r × k` sign matrix with
/// `(r/2)‖a−b‖² ≤ ‖Qa−Qb‖² ≤ (3r/2)‖a−b‖²` on every pair of `vectors`.
pub fn sign_embedding(r: usize, vectors: &[Vec<u8>], seed: u64, max_resamples: usize) -> Result<SignEmbedding> {
    if r == 0 || vectors.is_empty() || max_resamples == 0 {
        return Err(Error::Parameter(
            "sign embedding needs r >= 1, vectors and max_resamples >= 1".into(),
        ));
    }
    let k = vectors[0].len();
    if vectors.iter().any(|v| v.len() != k || v.iter().any(|&e| e > 1)) {
        return Err(Error::Parameter("vectors must be binary and of equal length".into()));
    }
    let n = vectors.len() as f64;
    if (r as f64) <= 96.0 * n.ln() {
        warn!(
            "r = {r} <= 96 ln N = {:.2}; acceptance is not guaranteed",
            96.0 * n.ln()
        );
    }
    let mut best = (0.0f64, f64::INFINITY);
    for attempt in 0..max_resamples {
        let mut rng = CounterRng::new(seed, &[attempt as u64]);
        let q = DMatrix::from_fn(r, k, |_, _| if rng.next_u64() >> 63 == 1 { 1i8 } else { -1i8 });
        let (lo, hi) = pair_ratios(&q, vectors);
        if lo >= 0.5 && hi <= 1.5 {
            return Ok(SignEmbedding {
                q,
                attempts: attempt + 1,
                min_ratio: lo,
                max_ratio: hi,
            });
        }
        if (lo - 0.5).min(1.5 - hi) > (best.0 - 0.5).min(1.5 - best.1) {
            best = (lo, hi);
        }
    }
    Err(Error::Construction(format!(
        "no sign matrix after {max_resamples} draws; best pair ratios [{:.4}, {:.4}] outside [0.5, 1.5]",
        best.0, best.1
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    TZ,
    TB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub kind: SetKind,
    #[serde(with = "dense_list")]
    pub thetas: Vec<DMatrix<f64>>,
    pub delta: f64,
    pub min_sq_distance: f64,
    pub max_kl: f64,
    /// Lower bound on pairwise squared distances the set certifies.
    pub distance_bound: f64,
    /// Upper bound on pairwise KL divergences the set certifies.
    pub kl_bound: f64,
    pub p: f64,
    pub sigma: f64,
    pub seed: u64,
    pub constants: Option<(f64, f64, f64)>,
}

/// Exhaustive `(min ‖θ_u − θ_v‖², max KL)` over distinct pairs.
pub fn pairwise_extremes(thetas: &[DMatrix<f64>], p: f64, sigma: f64, exec: Execution) -> Result<(f64, f64)> {
    let per = par::map_range(exec, thetas.len(), |u| -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for v in u + 1..thetas.len() {
            lo = lo.min((&thetas[u] - &thetas[v]).norm_squared());
            hi = hi.max(kl_divergence(&thetas[u], &thetas[v], p, sigma)?);
        }
        Ok((lo, hi))
    });
    let mut out = (f64::INFINITY, 0.0f64);
    for r in per {
        let (lo, hi) = r?;
        out = (out.0.min(lo), out.1.max(hi));
    }
    Ok(out)
}

fn padded_identity(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn check_inputs(spec: &StructureSpec, sigma: f64, p: f64, c0: f64) -> Result<()> {
    spec.validate()?;
    if !(sigma > 0.0) || !(p > 0.0 && p <= 1.0) || !(c0 >= 0.0) {
        return Err(Error::Parameter(format!(
            "need sigma > 0, p in (0, 1], c0 >= 0; got sigma={sigma}, p={p}, c0={c0}"
        )));
    }
    for (name, a) in [("alphabet_n", &spec.alphabet_n), ("alphabet_m", &spec.alphabet_m)] {
        if !a.contains(1.0, 0.0) {
            return Err(Error::Parameter(format!(
                "{name} must contain 1 for the packing constructions"
            )));
        }
    }
    Ok(())
}

fn finish(
    kind: SetKind,
    spec: &StructureSpec,
    members: Vec<Factorization>,
    params: (f64, f64, f64, u64),
    bounds: (f64, f64),
    constants: Option<(f64, f64, f64)>,
) -> Result<HypothesisSet> {
    let (delta, p, sigma, seed) = params;
    let mut thetas = Vec::with_capacity(members.len());
    for f in &members {
        let report = validate_membership(f, spec);
        if !report.accepted {
            return Err(Error::Construction(format!(
                "hypothesis outside the class: {}",
                report.violations.first().map(ToString::to_string).unwrap_or_default()
            )));
        }
        thetas.push(f.assemble()?);
    }
    let (min_sq, max_kl) = pairwise_extremes(&thetas, p, sigma, Execution::Parallel)?;
    if thetas.len() < 2 || min_sq == 0.0 {
        return Err(Error::Degenerate(format!(
            "{} hypotheses with minimum separation {min_sq}",
            thetas.len()
        )));
    }
    let (distance_bound, kl_bound) = bounds;
    if min_sq < distance_bound * (1.0 - CERT_TOL) || max_kl > kl_bound * (1.0 + CERT_TOL) {
        return Err(Error::Construction(format!(
            "certificate failed: min distance {min_sq} vs {distance_bound}, max KL {max_kl} vs {kl_bound}"
        )));
    }
    Ok(HypothesisSet {
        kind,
        thetas,
        delta,
        min_sq_distance: min_sq,
        max_kl,
        distance_bound,
        kl_bound,
        p,
        sigma,
        seed,
        constants,
    })
}

/// Size of `𝒮` in the `T_Z` construction before the caller cap:
/// `⌊exp(min(r_n/97, c1 s_m ln(e k_m/s_m)))⌋` when that is at least 2,
/// otherwise the whole packing.
pub fn t_z_support_size(r_n: usize, k_m: usize, s_m: usize, c1: f64, packing_len: usize) -> usize {
    let e = (r_n as f64 / 97.0).min(c1 * s_m as f64 * (std::f64::consts::E * k_m as f64 / s_m as f64).ln());
    let formula = e.exp().floor();
    if formula >= 2.0 {
        (formula as usize).min(packing_len)
    } else {
        warn!("formula size of 𝒮 is {formula} < 2 at this scale; using all {packing_len} packing words");
        packing_len
    }
}

/// The `T_Z = {X₀ B₀ Zᵀ}` set: `X₀` a padded identity, `B₀ = δ[Q; 0]` with a
/// sign embedding `Q`, and `Z` rows drawn from a sparse binary packing. Row
/// `i` of hypothesis `h` is `π_i(h)` for an independent random permutation
/// `π_i` of `𝒮`, so any two hypotheses differ in every row.
pub fn build_t_z(spec: &StructureSpec, sigma: f64, p: f64, c0: f64, seed: u64, cap: usize) -> Result<HypothesisSet> {
    check_inputs(spec, sigma, p, c0)?;
    if spec.k_m < 2 || spec.s_m == 0 {
        return Err(Error::Parameter("T_Z needs k_m >= 2 and s_m >= 1".into()));
    }
    if spec.s_n == 0 && spec.k_n != spec.n {
        return Err(Error::Parameter("s_n = 0 requires k_n = n".into()));
    }
    let root = CounterRng::new(seed, &[]);
    let packing = sparse_binary_packing(spec.k_m, spec.s_m, DEFAULT_CONSTANTS, root.substream(&[0]).key())?;
    let (c1, _, c3) = packing.constants;
    let r_n = spec.r_n();
    let size = t_z_support_size(r_n, spec.k_m, spec.s_m, c1, packing.len()).min(cap.max(2));
    let mut support: Vec<Vec<u8>> = packing.codewords[..size.min(packing.len())].to_vec();
    if support.len() < 2 {
        return Err(Error::Degenerate(format!("|𝒮| = {} < 2", support.len())));
    }
    // halve 𝒮 until an embedding with r_n rows exists
    let q = loop {
        match sign_embedding(r_n, &support, root.substream(&[1]).key(), DEFAULT_MAX_RESAMPLES) {
            Ok(e) => break e.as_f64(),
            Err(Error::Construction(msg)) if support.len() > 2 => {
                let keep = (support.len() / 2).max(2);
                warn!("shrinking 𝒮 from {} to {keep}: {msg}", support.len());
                support.truncate(keep);
            }
            Err(e) => return Err(e),
        }
    };
    let (s_m, m) = (spec.s_m as f64, spec.m as f64);
    let delta = (c0 * sigma * sigma * (support.len() as f64).ln() / (p * r_n as f64 * s_m)).sqrt();
    if delta == 0.0 {
        return Err(Error::Degenerate("δ = 0: all hypotheses coincide".into()));
    }
    let x0 = padded_identity(spec.n, spec.k_n);
    let mut b0 = DMatrix::zeros(spec.k_n, spec.k_m);
    b0.view_mut((0, 0), (r_n, spec.k_m)).copy_from(&(&q * delta));

    let mut perm_rng = root.substream(&[2]);
    let perms: Vec<Vec<usize>> = (0..spec.m)
        .map(|_| {
            let mut idx: Vec<usize> = (0..support.len()).collect();
            perm_rng.shuffle(&mut idx);
            idx
        })
        .collect();
    let members = (0..support.len())
        .map(|h| {
            let z = DMatrix::from_fn(spec.m, spec.k_m, |i, c| f64::from(support[perms[i][h]][c]));
            Factorization::new(x0.clone(), b0.clone(), z)
        })
        .collect();
    let r = r_n as f64;
    let bounds = (
        c3 * r * delta * delta * m * s_m / 2.0,
        3.0 * p * r * delta * delta * m * s_m / (2.0 * sigma * sigma),
    );
    finish(
        SetKind::TZ,
        spec,
        members,
        (delta, p, sigma, seed),
        bounds,
        Some(packing.constants),
    )
}

/// The `T_B = {X₀ B Z₀ᵀ}` set with `B = δ[Q 0; 0 0]` and `Q` from a greedy
/// Varshamov-Gilbert code on `{0,1}^{r_n × r_m}` with Hamming distance at
/// least `r_n r_m / 8`. Below `r_n r_m = 16` the two-point set
/// `{0, δ E₁₁}` is returned with certificates `δ²` and `p δ²/(2σ²)`.
pub fn build_t_b(spec: &StructureSpec, sigma: f64, p: f64, c0: f64, seed: u64, cap: usize) -> Result<HypothesisSet> {
    check_inputs(spec, sigma, p, c0)?;
    let (r_n, r_m) = (spec.r_n(), spec.r_m());
    let rr = r_n * r_m;
    let delta = (c0 * sigma * sigma / p).sqrt();
    if delta == 0.0 {
        return Err(Error::Degenerate("δ = 0: all hypotheses coincide".into()));
    }
    let x0 = padded_identity(spec.n, spec.k_n);
    let z0 = padded_identity(spec.m, spec.k_m);
    let embed = |code: &[u8]| {
        let mut b = DMatrix::zeros(spec.k_n, spec.k_m);
        for i in 0..r_n {
            for j in 0..r_m {
                b[(i, j)] = delta * f64::from(code[i * r_m + j]);
            }
        }
        Factorization::new(x0.clone(), b, z0.clone())
    };
    let d2 = delta * delta;
    if rr < 16 {
        let mut e11 = vec![0u8; rr];
        e11[0] = 1;
        let members = vec![embed(&vec![0u8; rr]), embed(&e11)];
        return finish(
            SetKind::TB,
            spec,
            members,
            (delta, p, sigma, seed),
            (d2, p * d2 / (2.0 * sigma * sigma)),
            None,
        );
    }
    let need = (rr as f64 / 8.0).ceil() as usize;
    let mut rng = CounterRng::new(seed, &[]);
    let mut kept: Vec<Vec<u8>> = Vec::new();
    let cap = cap.max(2);
    let exhaustive = rr <= 20;
    let budget: u64 = if exhaustive { 1u64 << rr } else { CANDIDATE_LIMIT };
    let mut order: Vec<u64> = if exhaustive { (0..budget).collect() } else { vec![] };
    rng.shuffle(&mut order);
    for t in 0..budget {
        if kept.len() >= cap {
            break;
        }
        let word: Vec<u8> = if exhaustive {
            bits_to_word(order[t as usize], rr)
        } else {
            (0..rr).map(|_| (rng.next_u64() >> 63) as u8).collect()
        };
        if kept.iter().all(|w| hamming(w, &word) >= need) {
            kept.push(word);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Construction(format!(
            "greedy code found {} codewords",
            kept.len()
        )));
    }
    let members = kept.iter().map(|c| embed(c)).collect();
    let bounds = (rr as f64 * d2 / 8.0, p * d2 * rr as f64 / (2.0 * sigma * sigma));
    finish(SetKind::TB, spec, members, (delta, p, sigma, seed), bounds, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_packing() {
        let p = sparse_binary_packing(8, 1, DEFAULT_CONSTANTS, 3).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p.min_sq_distance(), Some(2));
        let mut words = p.codewords.clone();
        words.sort();
        for w in &words {
            assert_eq!(w.iter().map(|&v| v as usize).sum::<usize>(), 1);
        }
        words.dedup();
        assert_eq!(words.len(), 8);
    }

    #[test]
    fn weight_two_packing_pairwise() {
        let p = sparse_binary_packing(8, 2, DEFAULT_CONSTANTS, 11).unwrap();
        for (u, a) in p.codewords.iter().enumerate() {
            assert_eq!(a.iter().filter(|&&v| v == 1).count(), 2);
            for b in &p.codewords[u + 1..] {
                assert!(hamming(a, b) >= 1);
            }
        }
        // Every weight-2 word is admissible at c3·s = 1.
        assert_eq!(p.len(), 28);
    }

    #[test]
    fn dense_packing_weights() {
        let p = sparse_binary_packing(10, 8, DEFAULT_CONSTANTS, 2).unwrap();
        for a in &p.codewords {
            let w = a.iter().filter(|&&v| v == 1).count();
            assert!((4..=8).contains(&w));
        }
        assert!(p.min_sq_distance().unwrap() >= 4);
    }

    #[test]
    fn packing_preconditions() {
        assert!(sparse_binary_packing(1, 1, DEFAULT_CONSTANTS, 0).is_err());
        assert!(sparse_binary_packing(4, 0, DEFAULT_CONSTANTS, 0).is_err());
        assert!(sparse_binary_packing(4, 5, DEFAULT_CONSTANTS, 0).is_err());
        assert!(matches!(
            sparse_binary_packing(4, 2, (5.0, 0.5, 0.5), 0),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn mask_enumeration_counts() {
        assert_eq!(all_masks(6, 2..=2).len(), 15);
        assert_eq!(all_masks(5, 0..=5).len(), 32);
        assert!(all_masks(6, 3..=3).iter().all(|m| m.count_ones() == 3 && *m < 64));
    }

    #[test]
    fn embedding_one_hot() {
        let words: Vec<Vec<u8>> = (0..8).map(|i| (0..8).map(|j| u8::from(i == j)).collect()).collect();
        let e = sign_embedding(200, &words, 5, 100).unwrap();
        let q = e.as_f64();
        for u in 0..8 {
            for v in u + 1..8 {
                let d = (q.column(u) - q.column(v)).norm_squared();
                assert!((0.5 * 200.0 * 2.0..=1.5 * 200.0 * 2.0).contains(&d));
            }
        }
    }

    #[test]
    fn embedding_identical_vectors() {
        let words = vec![vec![1u8, 0], vec![1u8, 0]];
        assert!(sign_embedding(3, &words, 0, 1).is_ok());
    }

    #[test]
    fn embedding_short_r_still_tries() {
        let words: Vec<Vec<u8>> = (0..8).map(|i| (0..8).map(|j| u8::from(i == j)).collect()).collect();
        match sign_embedding(10, &words, 1, 5) {
            Ok(e) => assert!(e.min_ratio >= 0.5 && e.max_ratio <= 1.5),
            Err(err) => assert!(matches!(err, Error::Construction(_))),
        }
    }

    fn tz_spec() -> StructureSpec {
        StructureSpec::binary(8, 8, 4, 4, 1, 1)
    }

    #[test]
    fn t_z_certificates_recomputed() {
        let set = build_t_z(&tz_spec(), 1.0, 0.5, 0.1, 7, 16).unwrap();
        assert!(set.thetas.len() >= 2 && set.thetas.len() <= 16);
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for u in 0..set.thetas.len() {
            for v in u + 1..set.thetas.len() {
                let d = (&set.thetas[u] - &set.thetas[v]).norm_squared();
                lo = lo.min(d);
                hi = hi.max(0.5 * d / (2.0 * 1.0));
            }
        }
        assert!((lo - set.min_sq_distance).abs() <= 1e-9 * lo);
        assert!((hi - set.max_kl).abs() <= 1e-9 * hi);
        assert!(set.min_sq_distance >= set.distance_bound * (1.0 - 1e-9));
        assert!(set.max_kl <= set.kl_bound * (1.0 + 1e-9));
    }

    #[test]
    fn t_z_zero_scale_degenerate() {
        assert!(matches!(
            build_t_z(&tz_spec(), 1.0, 0.5, 0.0, 7, 16),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn t_b_two_point_branch() {
        let spec = StructureSpec::binary(2, 2, 2, 2, 1, 1);
        let set = build_t_b(&spec, 1.0, 1.0, 0.5, 0, 64).unwrap();
        assert_eq!(set.thetas.len(), 2);
        assert!((set.min_sq_distance - set.delta * set.delta).abs() < 1e-15);
    }

    #[test]
    fn t_b_code_distances() {
        let spec = StructureSpec::binary(4, 4, 4, 4, 1, 1);
        let set = build_t_b(&spec, 1.0, 1.0, 0.5, 3, 64).unwrap();
        assert!(set.thetas.len() >= 2);
        let d2 = set.delta * set.delta;
        for u in 0..set.thetas.len() {
            for v in u + 1..set.thetas.len() {
                let ham = (&set.thetas[u] - &set.thetas[v]).norm_squared() / d2;
                assert!(ham >= 2.0 - 1e-9);
            }
        }
        assert!(matches!(
            build_t_b(&spec, 1.0, 1.0, 0.0, 3, 64),
            Err(Error::Degenerate(_))
        ));
    }
}
