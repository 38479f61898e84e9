//! Monte Carlo cross-check of the covariance assembly.
//!
//! Classical Gaussian vectors stand in for the quadratures: an input draw with
//! the squeezed-vacuum covariance, a noise displacement with covariance `V_N`
//! and, optionally, a modulation displacement with covariance `K`. Their sum
//! has covariance `V_out` (or `Vbar_out`), which the empirical estimate must
//! reproduce within sampling error.
//!
//! Randomness comes from `ChaCha8Rng`. Samples are generated in fixed-size
//! chunks, each on its own ChaCha stream selected from `(component, chunk)`,
//! so results do not depend on how chunks are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    averaged_output_covariance, input_covariance, modulation_covariance, noise_covariance, output_covariance,
    ChannelParams, InputParams,
};
use crate::entropy::{g, gaussian_entropy};
use crate::error::{Error, Result};
use crate::linalg::{
    check_psd, generic_symplectic_eigenvalues, generic_symplectic_eigenvalues_full, symplectic_eigenvalues,
    BlockCovariance, SpectralDecomposition,
};

pub const GENERATOR: &str = "ChaCha8Rng";

/// Samples per ChaCha stream.
const CHUNK: usize = 4096;

/// Agreement threshold in standard errors.
pub const Z_THRESHOLD: f64 = 5.0;

const INPUT: u64 = 1;
const NOISE: u64 = 2;
const MODULATION: u64 = 3;

/// `count` draws of a `2n`-dimensional Gaussian, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub count: usize,
    pub seed: u64,
    pub samples: DMatrix<f64>,
}

/// Factor `L` with `L L^T = C` for each block, from the spectral decomposition.
#[derive(Debug, Clone)]
struct BlockFactor {
    q: DMatrix<f64>,
    p: DMatrix<f64>,
}

impl BlockFactor {
    fn new(cov: &BlockCovariance) -> Result<Self> {
        let factor = |m: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let d = SpectralDecomposition::of_symmetric(m);
            check_psd(&d.eigenvalues, "sampling covariance")?;
            let v = &d.eigenvectors;
            Ok(DMatrix::from_fn(v.nrows(), v.ncols(), |i, k| {
                v[(i, k)] * d.eigenvalues[k].max(0.0).sqrt()
            }))
        };
        Ok(Self {
            q: factor(cov.q_block())?,
            p: factor(cov.p_block())?,
        })
    }

    fn n(&self) -> usize {
        self.q.nrows()
    }

    /// Add one draw into `out` (length `2n`).
    fn draw_into(&self, rng: &mut ChaCha8Rng, z: &mut DVector<f64>, out: &mut [f64]) {
        let n = self.n();
        for (b, l) in [&self.q, &self.p].into_iter().enumerate() {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(rng);
            }
            let x = l * &*z;
            for j in 0..n {
                out[b * n + j] += x[j];
            }
        }
    }
}

fn stream_rng(seed: u64, component: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((component << 48) | chunk as u64);
    rng
}

fn chunk_ranges(count: usize) -> Vec<(usize, usize)> {
    (0..count.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(count)))
        .collect()
}

/// Zero-mean Gaussian draws with block covariance `cov`.
pub fn sample_correlated_gaussian(cov: &BlockCovariance, count: usize, seed: u64) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let factor = BlockFactor::new(cov)?;
    let dim = 2 * factor.n();
    let chunks: Vec<Vec<f64>> = chunk_ranges(count)
        .into_par_iter()
        .enumerate()
        .map(|(c, (start, end))| {
            let mut rng = stream_rng(seed, 0, c);
            let mut z = DVector::zeros(factor.n());
            let mut rows = vec![0.0; (end - start) * dim];
            for row in rows.chunks_mut(dim) {
                factor.draw_into(&mut rng, &mut z, row);
            }
            rows
        })
        .collect();
    let flat: Vec<f64> = chunks.concat();
    Ok(SampleBatch {
        count,
        seed,
        samples: DMatrix::from_row_slice(count, dim, &flat),
    })
}

/// Sample mean and unbiased sample covariance of a full `2n`-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    pub count: usize,
    pub mean: DVector<f64>,
    pub full: DMatrix<f64>,
}

impl EmpiricalCovariance {
    fn from_sums(count: usize, sum: DVector<f64>, outer: DMatrix<f64>) -> Self {
        let c = count as f64;
        let mean = sum / c;
        let full = (outer - &mean * mean.transpose() * c) / (c - 1.0);
        Self {
            count,
            mean,
            full: (&full + full.transpose()) * 0.5,
        }
    }

    pub fn of_batch(batch: &SampleBatch) -> Self {
        let s = &batch.samples;
        let sum = DVector::from_fn(s.ncols(), |j, _| s.column(j).sum());
        Self::from_sums(batch.count, sum, s.transpose() * s)
    }

    pub fn n(&self) -> usize {
        self.full.nrows() / 2
    }

    /// The q and p diagonal blocks; q-p cross terms are dropped.
    pub fn to_block(&self) -> Result<BlockCovariance> {
        let n = self.n();
        BlockCovariance::new(
            self.full.view((0, 0), (n, n)).into_owned(),
            self.full.view((n, n), (n, n)).into_owned(),
        )
    }

    /// Largest `|estimate - target| / SE` over all entries of the full
    /// matrix, with `SE_ij = sqrt((T_ii T_jj + T_ij^2) / count)`.
    pub fn max_z(&self, target: &DMatrix<f64>) -> f64 {
        let c = self.count as f64;
        let mut worst: f64 = 0.0;
        for i in 0..target.nrows() {
            for j in 0..target.ncols() {
                let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / c).sqrt();
                let diff = (self.full[(i, j)] - target[(i, j)]).abs();
                let z = if se > 0.0 {
                    diff / se
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        worst
    }

    /// Largest z-score over the q-p cross block, whose target is zero.
    pub fn max_cross_z(&self) -> f64 {
        let n = self.n();
        let mut target = self.full.clone();
        for i in 0..n {
            for j in 0..n {
                target[(i, n + j)] = 0.0;
                target[(n + j, i)] = 0.0;
            }
        }
        self.max_z(&target)
    }

    pub fn max_abs_error(&self, target: &DMatrix<f64>) -> f64 {
        (&self.full - target).amax()
    }

    /// Entropy in bits of the Gaussian state with this covariance, from the
    /// full `2n x 2n` matrix. Sampling noise below the bound 1/2 is clamped.
    pub fn entropy(&self) -> Result<f64> {
        let spec = generic_symplectic_eigenvalues_full(&self.full)?;
        spec.values.iter().map(|&l| g((l - 0.5).max(0.0))).sum()
    }
}

/// Empirical covariance of input + noise (+ modulation) draws.
pub fn estimate_output_covariance(
    channel: &ChannelParams,
    input: &InputParams,
    count: usize,
    seed: u64,
    modulation: bool,
) -> Result<EmpiricalCovariance> {
    if count < 2 {
        return Err(Error::Domain("need at least two samples for a covariance".into()));
    }
    let n = channel.n;
    let mut parts = vec![
        (INPUT, BlockFactor::new(&input_covariance(n, input.r)?)?),
        (NOISE, BlockFactor::new(&noise_covariance(channel)?)?),
    ];
    if modulation {
        parts.push((MODULATION, BlockFactor::new(&modulation_covariance(n, input)?)?));
    }
    let dim = 2 * n;
    let partials: Vec<(DVector<f64>, DMatrix<f64>)> = chunk_ranges(count)
        .into_par_iter()
        .enumerate()
        .map(|(c, (start, end))| {
            let mut rngs: Vec<ChaCha8Rng> = parts.iter().map(|(tag, _)| stream_rng(seed, *tag, c)).collect();
            let mut z = DVector::zeros(n);
            let mut x = vec![0.0; dim];
            let mut sum = DVector::zeros(dim);
            let mut outer = DMatrix::zeros(dim, dim);
            for _ in start..end {
                x.iter_mut().for_each(|v| *v = 0.0);
                for ((_, factor), rng) in parts.iter().zip(rngs.iter_mut()) {
                    factor.draw_into(rng, &mut z, &mut x);
                }
                let xv = DVector::from_column_slice(&x);
                sum += &xv;
                outer.ger(1.0, &xv, &xv, 1.0);
            }
            (sum, outer)
        })
        .collect();
    let (sum, outer) = partials.into_iter().fold(
        (DVector::zeros(dim), DMatrix::zeros(dim, dim)),
        |(s, o), (ps, po)| (s + ps, o + po),
    );
    Ok(EmpiricalCovariance::from_sums(count, sum, outer))
}

/// Outcome of comparing Monte Carlo estimates against the analytic
/// covariances for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub generator: &'static str,
    pub seed: u64,
    pub samples: usize,
    /// Largest z-score of the individual-output estimate.
    pub out_max_z: f64,
    /// Largest z-score of the averaged-output estimate.
    pub avg_max_z: f64,
    /// Largest z-score of the q-p cross terms of the averaged estimate.
    pub cross_max_z: f64,
    pub avg_entropy_analytic: f64,
    pub avg_entropy_estimate: f64,
    pub entropy_tolerance: f64,
    pub passed: bool,
}

/// Run both estimates and compare against the analytic assembly.
pub fn validate_assembly(
    channel: &ChannelParams,
    input: &InputParams,
    count: usize,
    seed: u64,
    entropy_tolerance: f64,
) -> Result<ValidationReport> {
    let out_target = output_covariance(channel, input.r)?;
    let avg_target = averaged_output_covariance(channel, input)?;
    let out_est = estimate_output_covariance(channel, input, count, seed, false)?;
    let avg_est = estimate_output_covariance(channel, input, count, seed, true)?;
    let out_max_z = out_est.max_z(&out_target.to_full());
    let avg_max_z = avg_est.max_z(&avg_target.to_full());
    let cross_max_z = avg_est.max_cross_z();
    let avg_entropy_analytic = gaussian_entropy(&avg_target)?;
    let avg_entropy_estimate = avg_est.entropy()?;
    let passed = out_max_z <= Z_THRESHOLD
        && avg_max_z <= Z_THRESHOLD
        && cross_max_z <= Z_THRESHOLD
        && (avg_entropy_estimate - avg_entropy_analytic).abs() <= entropy_tolerance;
    Ok(ValidationReport {
        generator: GENERATOR,
        seed,
        samples: count,
        out_max_z,
        avg_max_z,
        cross_max_z,
        avg_entropy_analytic,
        avg_entropy_estimate,
        entropy_tolerance,
        passed,
    })
}

/// Block covariance `q = X L X^T`, `p = X^-T L X^-1` with `X = exp(G)` for a
/// random `G`, whose symplectic spectrum is the random diagonal `L >= 1/2`.
pub fn random_physical_covariance<R: Rng>(rng: &mut R, n: usize) -> (BlockCovariance, Vec<f64>) {
    let generator = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
    let x = generator.exp();
    let x_inv = x.clone().try_inverse().expect("matrix exponential is invertible");
    let mut spectrum: Vec<f64> = (0..n).map(|_| 0.5 + rng.random_range(0.0..3.0)).collect();
    let l = DMatrix::from_diagonal(&DVector::from_vec(spectrum.clone()));
    let q = &x * &l * x.transpose();
    let p = x_inv.transpose() * &l * &x_inv;
    let cov = BlockCovariance::new((&q + q.transpose()) * 0.5, (&p + p.transpose()) * 0.5)
        .expect("symmetrised blocks");
    spectrum.sort_by(|a, b| b.total_cmp(a));
    (cov, spectrum)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCheckReport {
    pub cases: usize,
    pub max_modes: usize,
    pub seed: u64,
    /// Largest disagreement between the block and generic routes.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare the block symplectic solver against the generic `2n x 2n` route
/// on `cases` random physical covariances with `1..=max_modes` modes.
pub fn symplectic_dual_check(
    cases: usize,
    max_modes: usize,
    seed: u64,
    tolerance: f64,
) -> Result<DualCheckReport> {
    if max_modes == 0 {
        return Err(Error::Domain("max_modes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation: f64 = 0.0;
    for i in 0..cases {
        let (cov, _) = random_physical_covariance(&mut rng, 1 + i % max_modes);
        let block = symplectic_eigenvalues(&cov)?.values;
        let generic = generic_symplectic_eigenvalues(&cov)?.values;
        for (a, b) in block.iter().zip(&generic) {
            max_deviation = max_deviation.max((a - b).abs());
        }
    }
    Ok(DualCheckReport {
        cases,
        max_modes,
        seed,
        max_deviation,
        tolerance,
        passed: max_deviation < tolerance,
    })
}
