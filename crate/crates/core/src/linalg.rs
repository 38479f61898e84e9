//! Symmetric-matrix spectral machinery.
//!
//! Every covariance in the channel model is block diagonal in the
//! `(q_1..q_n, p_1..p_n)` ordering, and every off-diagonal structure is a
//! function of one fixed nearest-neighbour pattern `T` (zero diagonal, unit
//! first off-diagonals). `T` has a closed-form eigensystem, so matrix
//! exponentials of `scale * T` never need a numerical eigensolver.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Eigenvalues of a symmetric form that fall in `(-PSD_TOL, 0)` are roundoff.
pub const PSD_TOL: f64 = 1e-10;

/// Symplectic eigenvalues within this distance below 1/2 are clamped to 1/2.
pub const PHYSICAL_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

/// The `n x n` path-graph pattern shared by the memory, squeezing and
/// modulation generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingMatrix {
    n: usize,
}

impl CouplingMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("number of modes must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
    }

    /// Closed-form eigensystem: `mu_k = 2 cos(k pi / (n + 1))` with
    /// `v_k(j) = sqrt(2 / (n + 1)) sin(j k pi / (n + 1))`, `j, k = 1..n`.
    pub fn spectrum(&self) -> SpectralDecomposition {
        let n = self.n;
        let h = PI / (n as f64 + 1.0);
        let norm = (2.0 / (n as f64 + 1.0)).sqrt();
        // cos(k h) - cos((n + 1 - k) h) keeps the spectrum exactly antisymmetric.
        let eigenvalues = DVector::from_fn(n, |k, _| ((k + 1) as f64 * h).cos() - ((n - k) as f64 * h).cos());
        let eigenvectors = DMatrix::from_fn(n, n, |j, k| norm * (((j + 1) * (k + 1)) as f64 * h).sin());
        SpectralDecomposition {
            eigenvalues,
            eigenvectors,
        }
    }
}

/// Eigenvalues in descending order with the matching orthonormal eigenvectors
/// as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    /// Numerical decomposition of a symmetric matrix, sorted descending.
    pub fn of_symmetric(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
        let eigenvectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(mu)) V^T`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, k| v[(i, k)] * f(self.eigenvalues[k]));
        symmetrize(&(scaled * v.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|mu| mu)
    }

    /// Diagonal of `V diag(f(mu)) V^T` without forming the full product.
    pub fn mapped_diagonal(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let v = &self.eigenvectors;
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&mu| f(mu)).collect();
        DVector::from_fn(v.nrows(), |i, _| {
            (0..v.ncols()).map(|k| v[(i, k)] * v[(i, k)] * weights[k]).sum()
        })
    }
}

/// Spectral decomposition of the coupling pattern for `n` modes.
pub fn coupling_spectrum(n: usize) -> Result<SpectralDecomposition> {
    Ok(CouplingMatrix::new(n)?.spectrum())
}

/// `exp(scale * M)` for the decomposed symmetric matrix `M`.
pub fn sym_exp(decomp: &SpectralDecomposition, scale: f64) -> DMatrix<f64> {
    decomp.map_eigenvalues(|mu| (scale * mu).exp())
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in `(-tol, 0)` are clamped to zero, where `tol` is
/// [`PSD_TOL`] relative to the largest eigenvalue magnitude (floor 1).
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = SpectralDecomposition::of_symmetric(m);
    check_psd(&d.eigenvalues, "matrix square root")?;
    Ok(d.map_eigenvalues(|mu| mu.max(0.0).sqrt()))
}

pub(crate) fn check_psd(eigenvalues: &DVector<f64>, what: &str) -> Result<()> {
    let scale = eigenvalues.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    match eigenvalues.iter().copied().find(|&mu| mu < -PSD_TOL * scale) {
        Some(mu) => Err(Error::NonPhysical(format!(
            "{what}: negative eigenvalue {mu:.3e} of a form that must be positive semidefinite"
        ))),
        None => Ok(()),
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL * scale))
}

/// A `2n x 2n` covariance `diag(q, p)` stored as its two `n x n` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    q: DMatrix<f64>,
    p: DMatrix<f64>,
}

impl BlockCovariance {
    pub fn new(q: DMatrix<f64>, p: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.shape() != p.shape() || q.nrows() == 0 {
            return Err(Error::Domain(format!(
                "covariance blocks must be equal non-empty squares, got {:?} and {:?}",
                q.shape(),
                p.shape()
            )));
        }
        if !is_symmetric(&q) || !is_symmetric(&p) {
            return Err(Error::Domain("covariance blocks must be symmetric".into()));
        }
        Ok(Self { q, p })
    }

    /// `c * I` on both blocks.
    pub fn scaled_identity(n: usize, c: f64) -> Self {
        Self {
            q: DMatrix::identity(n, n) * c,
            p: DMatrix::identity(n, n) * c,
        }
    }

    pub fn vacuum(n: usize) -> Self {
        Self::scaled_identity(n, 0.5)
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn q_block(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn p_block(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn swap_blocks(&self) -> Self {
        Self {
            q: self.p.clone(),
            p: self.q.clone(),
        }
    }

    /// Sum of two covariances with the same number of modes.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n(), other.n(), "mode count mismatch");
        Self {
            q: &self.q + &other.q,
            p: &self.p + &other.p,
        }
    }

    /// Covariance of the joint state of two independent mode groups, with the
    /// quadrature ordering `(q_a, q_b, p_a, p_b)`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (a, b) = (self.n(), other.n());
        let stack = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a + b, a + b);
            m.view_mut((0, 0), (a, a)).copy_from(x);
            m.view_mut((a, a), (b, b)).copy_from(y);
            m
        };
        Self {
            q: stack(&self.q, &other.q),
            p: stack(&self.p, &other.p),
        }
    }

    /// The full `2n x 2n` matrix.
    pub fn to_full(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.q);
        m.view_mut((n, n), (n, n)).copy_from(&self.p);
        m
    }

    /// All `2n` diagonal entries, q block first.
    pub fn diagonal(&self) -> Vec<f64> {
        self.q
            .diagonal()
            .iter()
            .chain(self.p.diagonal().iter())
            .copied()
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.q.trace() + self.p.trace()
    }

    /// Mean photon number per mode, `(Tr q + Tr p - n) / (2n)`.
    pub fn photons_per_mode(&self) -> f64 {
        let n = self.n() as f64;
        (self.trace() - n) / (2.0 * n)
    }
}

/// Moduli of the symplectic eigenvalues, descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymplecticSpectrum {
    pub values: Vec<f64>,
    /// How many values were lifted from just below 1/2 to exactly 1/2.
    pub clamped: usize,
}

impl SymplecticSpectrum {
    fn from_unsorted(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        Self { values, clamped: 0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Enforce the uncertainty bound `lambda >= 1/2`, clamping roundoff-size
    /// violations and rejecting larger ones.
    pub fn into_physical(mut self) -> Result<Self> {
        for v in &mut self.values {
            if *v < 0.5 {
                if *v < 0.5 - PHYSICAL_TOL {
                    return Err(Error::NonPhysical(format!(
                        "symplectic eigenvalue {v} violates the uncertainty bound 1/2"
                    )));
                }
                *v = 0.5;
                self.clamped += 1;
            }
        }
        Ok(self)
    }
}

/// Symplectic spectrum of `diag(A, B)`: `sqrt(eig(A B))`, computed through
/// the symmetric similar form `sqrt(A) B sqrt(A)`.
///
/// Only positive semidefiniteness is checked; use
/// [`physical_symplectic_eigenvalues`] for quantum states.
pub fn symplectic_eigenvalues(cov: &BlockCovariance) -> Result<SymplecticSpectrum> {
    let root = psd_sqrt(cov.q_block())?;
    let form = symmetrize(&(&root * cov.p_block() * &root));
    let eig = SymmetricEigen::new(form).eigenvalues;
    check_psd(&eig, "symplectic form sqrt(A) B sqrt(A)")?;
    check_psd(&SymmetricEigen::new(cov.p_block().clone()).eigenvalues, "p block")?;
    Ok(SymplecticSpectrum::from_unsorted(
        eig.iter().map(|&x| x.max(0.0).sqrt()).collect(),
    ))
}

/// [`symplectic_eigenvalues`] followed by the uncertainty-bound check.
pub fn physical_symplectic_eigenvalues(cov: &BlockCovariance) -> Result<SymplecticSpectrum> {
    symplectic_eigenvalues(cov)?.into_physical()
}

/// Independent route: eigenvalues of `Omega V` for the full `2n x 2n`
/// matrix, with `Omega = [[0, I], [-I, 0]]`. These are `+-i lambda_j`, the
/// roots of `det[V - lambda J]` rotated by `i`.
pub fn generic_symplectic_eigenvalues(cov: &BlockCovariance) -> Result<SymplecticSpectrum> {
    generic_symplectic_eigenvalues_full(&cov.to_full())
}

/// As [`generic_symplectic_eigenvalues`] for an arbitrary (not necessarily
/// block-diagonal) symmetric `2n x 2n` covariance.
pub fn generic_symplectic_eigenvalues_full(v: &DMatrix<f64>) -> Result<SymplecticSpectrum> {
    let dim = v.nrows();
    if dim == 0 || !dim.is_multiple_of(2) || !v.is_square() {
        return Err(Error::Domain(format!(
            "expected a 2n x 2n matrix, got {:?}",
            v.shape()
        )));
    }
    check_psd(&SymmetricEigen::new(symmetrize(v)).eigenvalues, "covariance")?;
    let n = dim / 2;
    let mut omega = DMatrix::zeros(dim, dim);
    for j in 0..n {
        omega[(j, n + j)] = 1.0;
        omega[(n + j, j)] = -1.0;
    }
    let eig = (omega * v).complex_eigenvalues();
    let mut moduli: Vec<f64> = eig.iter().map(|z| z.im.abs()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    // Each modulus appears twice (conjugate pair); average the pair.
    let values = moduli.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect();
    Ok(SymplecticSpectrum::from_unsorted(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn coupling_spectrum_small_cases() {
        assert_eq!(coupling_spectrum(1).unwrap().eigenvalues.as_slice(), &[0.0]);
        let two = coupling_spectrum(2).unwrap();
        assert_abs_diff_eq!(two.eigenvalues[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two.eigenvalues[1], -1.0, epsilon = 1e-15);
        let three = coupling_spectrum(3).unwrap();
        let expect = [2f64.sqrt(), 0.0, -(2f64.sqrt())];
        for (a, b) in three.eigenvalues.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn coupling_spectrum_matches_numeric_eigensolve() {
        for n in 1..=6 {
            let t = CouplingMatrix::new(n).unwrap().to_matrix();
            let numeric = SpectralDecomposition::of_symmetric(&t);
            let analytic = coupling_spectrum(n).unwrap();
            for k in 0..n {
                assert_abs_diff_eq!(numeric.eigenvalues[k], analytic.eigenvalues[k], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(matches!(coupling_spectrum(0), Err(Error::Domain(_))));
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for n in 1..=12 {
            let d = coupling_spectrum(n).unwrap();
            let t = CouplingMatrix::new(n).unwrap().to_matrix();
            assert!(max_abs(&(d.reconstruct() - &t)) < 1e-12, "n = {n}");
            let vtv = d.eigenvectors.transpose() * &d.eigenvectors;
            assert!(max_abs(&(vtv - DMatrix::identity(n, n))) < 1e-12, "n = {n}");
        }
    }

    /// Truncated power series for `exp(M)`, independent of the spectral route.
    fn series_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * m / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn sym_exp_zero_scale_is_identity() {
        for n in 1..=5 {
            let d = coupling_spectrum(n).unwrap();
            assert!(max_abs(&(sym_exp(&d, 0.0) - DMatrix::identity(n, n))) < 1e-14);
        }
    }

    #[test]
    fn sym_exp_two_mode_closed_form() {
        let s = 0.37;
        let d = coupling_spectrum(2).unwrap();
        let e = sym_exp(&d, -s);
        let closed = DMatrix::from_row_slice(2, 2, &[s.cosh(), -s.sinh(), -s.sinh(), s.cosh()]);
        assert!(max_abs(&(&e - &closed)) < 1e-14);
        let t = CouplingMatrix::new(2).unwrap().to_matrix();
        assert!(max_abs(&(&e - series_exp(&(t * -s)))) < 1e-14);
    }

    #[test]
    fn sym_exp_matches_power_series() {
        for n in 1..=7 {
            let d = coupling_spectrum(n).unwrap();
            let t = CouplingMatrix::new(n).unwrap().to_matrix();
            for scale in [-0.8, -0.1, 0.25, 0.6] {
                let diff = sym_exp(&d, scale) - series_exp(&(&t * scale));
                assert!(max_abs(&diff) < 1e-13, "n = {n}, scale = {scale}");
            }
        }
    }

    #[test]
    fn sym_exp_inverse_pair() {
        for n in 1..=8 {
            let d = coupling_spectrum(n).unwrap();
            let prod = sym_exp(&d, 0.7) * sym_exp(&d, -0.7);
            assert!(max_abs(&(prod - DMatrix::identity(n, n))) < 1e-10);
        }
    }

    #[test]
    fn vacuum_thermal_and_squeezed_spectra() {
        for n in 1..=4 {
            let vac = BlockCovariance::vacuum(n);
            for v in symplectic_eigenvalues(&vac).unwrap().values {
                assert_abs_diff_eq!(v, 0.5, epsilon = 1e-14);
            }
            let thermal = BlockCovariance::scaled_identity(n, 2.0 / 3.0 + 0.5);
            for (a, b) in symplectic_eigenvalues(&thermal)
                .unwrap()
                .values
                .iter()
                .zip(generic_symplectic_eigenvalues(&thermal).unwrap().values)
            {
                assert_abs_diff_eq!(*a, 7.0 / 6.0, epsilon = 1e-14);
                assert_abs_diff_eq!(b, 7.0 / 6.0, epsilon = 1e-10);
            }
        }
        for r in [0.0f64, 0.3, 1.5] {
            let sq = BlockCovariance::new(
                DMatrix::from_element(1, 1, (2.0 * r).exp() / 2.0),
                DMatrix::from_element(1, 1, (-2.0 * r).exp() / 2.0),
            )
            .unwrap();
            assert_abs_diff_eq!(
                symplectic_eigenvalues(&sq).unwrap().values[0],
                0.5,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                generic_symplectic_eigenvalues(&sq).unwrap().values[0],
                0.5,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn negative_block_rejected() {
        let bad = BlockCovariance::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!(matches!(symplectic_eigenvalues(&bad), Err(Error::NonPhysical(_))));
        assert!(matches!(
            generic_symplectic_eigenvalues(&bad),
            Err(Error::NonPhysical(_))
        ));
    }

    #[test]
    fn asymmetric_block_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(BlockCovariance::new(q, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn physical_clamp_and_rejection() {
        let slightly = BlockCovariance::scaled_identity(2, 0.5 - 1e-11);
        let spec = physical_symplectic_eigenvalues(&slightly).unwrap();
        assert_eq!(spec.values, vec![0.5, 0.5]);
        assert_eq!(spec.clamped, 2);
        let sub = BlockCovariance::scaled_identity(2, 0.4);
        assert!(matches!(
            physical_symplectic_eigenvalues(&sub),
            Err(Error::NonPhysical(_))
        ));
    }
}
