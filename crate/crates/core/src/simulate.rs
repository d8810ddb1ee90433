//! Sampling of the observation model: Bernoulli masks, sub-Gaussian noise and
//! ground-truth structured matrices for the standard model families.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, Factorization, Observation, StructureSpec};
use crate::rng::CounterRng;

const TAG_MASK: u64 = 0x6D61_736B;
const TAG_NOISE: u64 = 0x6E6F_6973;
const TAG_GENERATE: u64 = 0x6765_6E65;

/// Rejections allowed per truncated-Gaussian entry before clamping.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Rademacher { scale: f64 },
    UniformBounded { b: f64 },
    TruncatedGaussian { sigma: f64, b: f64 },
    None,
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseKind::Gaussian { sigma } => sigma >= 0.0,
            NoiseKind::Rademacher { scale } => scale >= 0.0,
            NoiseKind::UniformBounded { b } => b >= 0.0,
            NoiseKind::TruncatedGaussian { sigma, b } => sigma >= 0.0 && b >= sigma,
            NoiseKind::None => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid noise parameters {self:?}")))
        }
    }

    /// Sub-Gaussian proxy σ of the law.
    pub fn sigma_proxy(&self) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::Rademacher { scale } => scale,
            NoiseKind::UniformBounded { b } => b,
            NoiseKind::TruncatedGaussian { sigma, .. } => sigma,
            NoiseKind::None => 0.0,
        }
    }

    /// Almost-sure bound on `|ξ|`, when the law has one.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            NoiseKind::Gaussian { .. } => None,
            NoiseKind::Rademacher { scale } => Some(scale),
            NoiseKind::UniformBounded { b } => Some(b),
            NoiseKind::TruncatedGaussian { b, .. } => Some(b),
            NoiseKind::None => Some(0.0),
        }
    }
}

/// I.i.d. Bernoulli(p) mask. Entry `(i, j)` is `unit(i·m + j) < p` on the
/// mask stream of `seed`.
pub fn sample_mask(n: usize, m: usize, p: f64, seed: u64) -> Result<DMatrix<bool>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0, 1], got {p}")));
    }
    let rng = CounterRng::new(seed, &[TAG_MASK]);
    Ok(DMatrix::from_fn(n, m, |i, j| rng.unit_at((i * m + j) as u64) < p))
}

/// I.i.d. noise; entry `(i, j)` draws from its own substream `i·m + j`.
/// `kind` is assumed valid (see [`NoiseKind::validate`]).
pub fn sample_noise(kind: &NoiseKind, n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let base = CounterRng::new(seed, &[TAG_NOISE]);
    DMatrix::from_fn(n, m, |i, j| {
        let mut rng = base.substream(&[(i * m + j) as u64]);
        match *kind {
            NoiseKind::Gaussian { sigma } => sigma * rng.normal(),
            NoiseKind::Rademacher { scale } => {
                if rng.next_u64() >> 63 == 1 {
                    scale
                } else {
                    -scale
                }
            }
            NoiseKind::UniformBounded { b } => rng.uniform(-b, b),
            NoiseKind::TruncatedGaussian { sigma, b } => {
                for _ in 0..MAX_REJECTIONS {
                    let x = sigma * rng.normal();
                    if x.abs() <= b {
                        return x;
                    }
                }
                0.0
            }
            NoiseKind::None => 0.0,
        }
    })
}

/// `y = mask ∘ (θ* + noise)`; noise metadata defaults to `σ = 0, b = None`
/// (see [`Observation::with_noise_level`]).
pub fn observe(theta_star: &DMatrix<f64>, mask: &DMatrix<bool>, noise: &DMatrix<f64>, p: f64) -> Result<Observation> {
    if theta_star.shape() != mask.shape() {
        return Err(Error::shape(
            "mask",
            format!("θ* is {:?}, mask is {:?}", theta_star.shape(), mask.shape()),
        ));
    }
    if theta_star.shape() != noise.shape() {
        return Err(Error::shape(
            "noise",
            format!("θ* is {:?}, noise is {:?}", theta_star.shape(), noise.shape()),
        ));
    }
    let y = DMatrix::from_fn(theta_star.nrows(), theta_star.ncols(), |i, j| {
        if mask[(i, j)] {
            theta_star[(i, j)] + noise[(i, j)]
        } else {
            0.0
        }
    });
    Observation::new(y, mask.clone(), p, 0.0, None)
}

/// Sample mask and noise and observe `θ*`, recording the noise level.
pub fn observe_sampled(
    theta_star: &DMatrix<f64>,
    p: f64,
    noise: &NoiseKind,
    seed: u64,
) -> Result<(Observation, DMatrix<f64>)> {
    noise.validate()?;
    let (n, m) = theta_star.shape();
    let mask = sample_mask(n, m, p, seed)?;
    let xi = sample_noise(noise, n, m, seed);
    let obs = observe(theta_star, &mask, &xi, p)?.with_noise_level(noise.sigma_proxy(), noise.bound());
    Ok((obs, xi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    Generic { spec: StructureSpec },
    Mixture { n: usize, m: usize, k: usize },
    Dictionary { d: usize, n: usize, k: usize, s: usize },
    Sbm { n: usize, k: usize },
    MixedMembership { n: usize, k: usize, s: usize },
    Biclustering { n: usize, m: usize, k_n: usize, k_m: usize },
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Generic { .. } => "generic",
            ModelFamily::Mixture { .. } => "mixture",
            ModelFamily::Dictionary { .. } => "dictionary",
            ModelFamily::Sbm { .. } => "sbm",
            ModelFamily::MixedMembership { .. } => "mixed_membership",
            ModelFamily::Biclustering { .. } => "biclustering",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |vals: &[usize]| vals.iter().all(|&v| v > 0);
        let ok = match *self {
            ModelFamily::Generic { ref spec } => return spec.validate(),
            ModelFamily::Mixture { n, m, k } => positive(&[n, m, k]),
            ModelFamily::Dictionary { d, n, k, s } => positive(&[d, n, k, s]) && s <= k,
            ModelFamily::Sbm { n, k } => positive(&[n, k]),
            ModelFamily::MixedMembership { n, k, s } => positive(&[n, k, s]) && s <= k,
            ModelFamily::Biclustering { n, m, k_n, k_m } => positive(&[n, m, k_n, k_m]),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("inconsistent family parameters {self:?}")))
        }
    }

    /// Structure spec of the class the family's generator draws from.
    pub fn spec(&self) -> Result<StructureSpec> {
        self.validate()?;
        let unit = |alphabet_n, alphabet_m, n, m, k_n, k_m, s_n, s_m, bounded| StructureSpec {
            n,
            m,
            k_n,
            k_m,
            s_n,
            s_m,
            alphabet_n,
            alphabet_m,
            b_max: 1.0,
            theta_mx: 1.0,
            bounded,
        };
        let bin = Alphabet::binary;
        Ok(match *self {
            ModelFamily::Generic { ref spec } => spec.clone(),
            ModelFamily::Mixture { n, m, k } => unit(bin(), bin(), n, m, k, m, 1, 0, false),
            ModelFamily::Dictionary { d, n, k, s } => {
                unit(bin(), Alphabet::Interval { lo: -1.0, hi: 1.0 }, d, n, d, k, 0, s, false)
            }
            ModelFamily::Sbm { n, k } => unit(bin(), bin(), n, n, k, k, 1, 1, false),
            ModelFamily::MixedMembership { n, k, s } => {
                let simplex = Alphabet::Interval { lo: 0.0, hi: 1.0 };
                unit(simplex.clone(), simplex, n, n, k, k, s, s, true)
            }
            ModelFamily::Biclustering { n, m, k_n, k_m } => unit(bin(), bin(), n, m, k_n, k_m, 1, 1, false),
        })
    }
}

/// One-hot rows; rows `0..k` take columns `0..k` when `rows ≥ k`.
fn one_hot(rows: usize, k: usize, rng: &mut CounterRng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rows, k);
    for i in 0..rows {
        let c = if rows >= k && i < k {
            i
        } else {
            rng.below(k as u64) as usize
        };
        a[(i, c)] = 1.0;
    }
    a
}

fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut CounterRng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            a[(i, j)] = rng.uniform(lo, hi);
        }
    }
    a
}

/// Rows with exactly `s` non-zeros drawn from `alphabet`; identity when `s = 0`.
fn sparse_factor(
    rows: usize,
    k: usize,
    s: usize,
    alphabet: &Alphabet,
    bounded: bool,
    rng: &mut CounterRng,
) -> DMatrix<f64> {
    if s == 0 {
        return DMatrix::identity(rows, k);
    }
    let mut a = DMatrix::zeros(rows, k);
    let values = alphabet.nonzero_values();
    for i in 0..rows {
        for j in rng.subset(k, s) {
            a[(i, j)] = match (&values, alphabet) {
                (Some(vals), _) if !vals.is_empty() => vals[rng.below(vals.len() as u64) as usize],
                (Some(_), _) => 0.0,
                (None, Alphabet::Interval { lo, hi }) => {
                    let (lo, hi) = if bounded {
                        (lo.max(-1.0), hi.min(1.0))
                    } else {
                        (*lo, *hi)
                    };
                    rng.uniform(lo, hi)
                }
                (None, Alphabet::Finite { .. }) => unreachable!(),
            };
        }
    }
    a
}

/// Draw a ground-truth factorization and the spec of its class.
pub fn generate(family: &ModelFamily, seed: u64) -> Result<(Factorization, StructureSpec)> {
    let spec = family.spec()?;
    let root = CounterRng::new(seed, &[TAG_GENERATE]);
    let mut rx = root.substream(&[0]);
    let mut rb = root.substream(&[1]);
    let mut rz = root.substream(&[2]);
    let f = match *family {
        ModelFamily::Generic { ref spec } => {
            let x = sparse_factor(spec.n, spec.k_n, spec.s_n, &spec.alphabet_n, spec.bounded, &mut rx);
            let z = sparse_factor(spec.m, spec.k_m, spec.s_m, &spec.alphabet_m, spec.bounded, &mut rz);
            let scale = if spec.bounded { spec.b_max } else { 1.0 };
            let mut b = uniform_matrix(spec.k_n, spec.k_m, -scale, scale, &mut rb);
            if spec.bounded {
                let sup = (&x * &b * z.transpose()).amax();
                if sup > spec.theta_mx {
                    b *= spec.theta_mx / sup * (1.0 - 4.0 * f64::EPSILON);
                }
            }
            Factorization::new(x, b, z)
        }
        ModelFamily::Mixture { n, m, k } => Factorization::new(
            one_hot(n, k, &mut rx),
            uniform_matrix(k, m, 0.0, 1.0, &mut rb),
            DMatrix::identity(m, m),
        ),
        ModelFamily::Dictionary { d, n, k, s } => {
            let z = sparse_factor(n, k, s, &spec.alphabet_m, false, &mut rz);
            Factorization::new(DMatrix::identity(d, d), uniform_matrix(d, k, -1.0, 1.0, &mut rb), z)
        }
        ModelFamily::Sbm { n, k } => {
            let z = one_hot(n, k, &mut rz);
            let mut b = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in i..k {
                    let v = rb.next_f64();
                    b[(i, j)] = v;
                    b[(j, i)] = v;
                }
            }
            Factorization::new(z.clone(), b, z)
        }
        ModelFamily::MixedMembership { n, k, s } => {
            let mut z = DMatrix::zeros(n, k);
            for i in 0..n {
                let support = if n >= k && i < k {
                    // force column i into the support
                    let mut rest: Vec<usize> = rz
                        .subset(k - 1, s - 1)
                        .into_iter()
                        .map(|c| if c >= i { c + 1 } else { c })
                        .collect();
                    rest.push(i);
                    rest.sort_unstable();
                    rest
                } else {
                    rz.subset(k, s)
                };
                let w: Vec<f64> = support.iter().map(|_| rz.exponential()).collect();
                let total: f64 = w.iter().sum();
                for (&c, &wc) in support.iter().zip(&w) {
                    z[(i, c)] = wc / total;
                }
            }
            Factorization::new(z.clone(), uniform_matrix(k, k, 0.0, 1.0, &mut rb), z)
        }
        ModelFamily::Biclustering { n, m, k_n, k_m } => Factorization::new(
            one_hot(n, k_n, &mut rx),
            uniform_matrix(k_n, k_m, 0.0, 1.0, &mut rb),
            one_hot(m, k_m, &mut rz),
        ),
    };
    Ok((f, spec))
}
