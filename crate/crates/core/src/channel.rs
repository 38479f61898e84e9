//! Covariance assembly for the correlated additive-noise channel.
//!
//! With `T` the nearest-neighbour pattern:
//!
//! - input (multimode squeezed vacuum): `V_in = diag(exp(-rT), exp(rT)) / 2`
//! - noise: `V_N = V1 + eps * V2`, `V2 = diag(exp(-sT), exp(sT)) / 2`,
//!   `V1` diagonal with `[V1]_jj = N - eps [V2]_jj`
//! - modulation: `K = K1 + theta * K2`, `K2 = diag(exp(yT), exp(-yT)) / 2`,
//!   `K1` diagonal with `[K1]_jj = (nbar - nbar_r) - theta [K2]_jj`
//! - outputs: `V_out = V_in + V_N` and `Vbar_out = V_out + K`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{coupling_spectrum, sym_exp, BlockCovariance, SpectralDecomposition};

/// Diagonal entries of `V1` or `K1` down to `-FEASIBILITY_TOL` count as zero.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Regulator bands are checked with this slack.
const BAND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelParams {
    /// Channel uses, one mode each.
    pub n: usize,
    /// Added thermal photons per mode, `N`.
    pub noise: f64,
    /// Memory degree `s`.
    pub memory: f64,
    /// Positivity regulator `epsilon`.
    pub epsilon: f64,
}

impl ChannelParams {
    pub fn new(n: usize, noise: f64, memory: f64, epsilon: f64) -> Result<Self> {
        let params = Self {
            n,
            noise,
            memory,
            epsilon,
        };
        params.check_ranges()?;
        Ok(params)
    }

    /// Channel with `epsilon` from [`default_epsilon`].
    pub fn with_default_epsilon(n: usize, noise: f64, memory: f64) -> Result<Self> {
        Self::new(n, noise, memory, default_epsilon(noise)?)
    }

    pub fn with_memory(&self, memory: f64) -> Result<Self> {
        Self::new(self.n, self.noise, memory, self.epsilon)
    }

    pub fn with_modes(&self, n: usize) -> Result<Self> {
        Self::new(n, self.noise, self.memory, self.epsilon)
    }

    fn check_ranges(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("number of channel uses must be at least 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Domain(format!(
                "added noise N = {} must be >= 0",
                self.noise
            )));
        }
        if !(self.memory.is_finite() && self.memory >= 0.0) {
            return Err(Error::Domain(format!("memory s = {} must be >= 0", self.memory)));
        }
        check_regulator_band("epsilon", self.epsilon, self.noise)
    }

    /// Full validation including the memory feasibility constraint.
    pub fn validate(&self) -> Result<()> {
        self.check_ranges()?;
        noise_covariance(self).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InputParams {
    /// Photon budget per mode.
    pub nbar: f64,
    /// Input entanglement (multimode squeezing) parameter.
    pub r: f64,
    /// Classical correlation of the modulation across uses.
    pub y: f64,
    /// Positivity regulator `theta`.
    pub theta: f64,
}

impl InputParams {
    /// Input parameters for `n` modes; checks every constraint that does not
    /// depend on `y` and the regulator band for `theta`.
    pub fn new(n: usize, nbar: f64, r: f64, y: f64, theta: f64) -> Result<Self> {
        let params = Self { nbar, r, y, theta };
        params.residual_budget(n)?;
        check_regulator_band("theta", theta, params.residual_budget(n)?)?;
        Ok(params)
    }

    /// Input with `theta` from [`default_theta`] of the residual budget.
    pub fn with_default_theta(n: usize, nbar: f64, r: f64, y: f64) -> Result<Self> {
        let probe = Self {
            nbar,
            r,
            y,
            theta: 0.0,
        };
        let theta = default_theta(probe.residual_budget(n)?)?;
        Self::new(n, nbar, r, y, theta)
    }

    /// `nbar - nbar_r`, the photons per mode left for classical modulation.
    pub fn residual_budget(&self, n: usize) -> Result<f64> {
        if !(self.nbar.is_finite() && self.nbar >= 0.0) {
            return Err(Error::Domain(format!(
                "photon budget nbar = {} must be >= 0",
                self.nbar
            )));
        }
        if !self.y.is_finite() {
            return Err(Error::Domain(format!(
                "correlation y = {} must be finite",
                self.y
            )));
        }
        let squeezed = squeezed_photons(n, self.r)?;
        let budget = self.nbar - squeezed;
        if budget < -FEASIBILITY_TOL {
            return Err(Error::InfeasibleSqueezing {
                squeezed,
                nbar: self.nbar,
            });
        }
        Ok(budget.max(0.0))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        modulation_covariance(n, self).map(|_| ())
    }
}

/// A Gaussian state; the mean never enters entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: BlockCovariance,
}

impl GaussianState {
    pub fn centered(cov: BlockCovariance) -> Self {
        Self {
            mean: DVector::zeros(2 * cov.n()),
            cov,
        }
    }
}

fn check_regulator_band(name: &str, value: f64, level: f64) -> Result<()> {
    let ok = if level >= 0.5 {
        (value - 1.0).abs() <= BAND_TOL
    } else {
        value >= 0.0 && value <= 2.0 * level + BAND_TOL
    };
    if ok && value.is_finite() {
        Ok(())
    } else if level >= 0.5 {
        Err(Error::Domain(format!(
            "{name} = {value} must be 1 when its level {level} >= 1/2"
        )))
    } else {
        Err(Error::Domain(format!(
            "{name} = {value} must lie in [0, {}] for level {level} < 1/2",
            2.0 * level
        )))
    }
}

fn default_regulator(name: &str, level: f64) -> Result<f64> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(Error::Domain(format!("{name} level {level} must be >= 0")));
    }
    Ok(if level >= 0.5 { 1.0 } else { 2.0 * level })
}

/// `1` for `N >= 1/2`, otherwise `2N`, the top of the allowed band.
pub fn default_epsilon(noise: f64) -> Result<f64> {
    default_regulator("epsilon", noise)
}

/// `1` for a residual budget `>= 1/2`, otherwise twice the budget.
pub fn default_theta(budget: f64) -> Result<f64> {
    default_regulator("theta", budget)
}

/// Squeezed vacuum covariance `diag(exp(-rT), exp(rT)) / 2`.
pub fn input_covariance(n: usize, r: f64) -> Result<BlockCovariance> {
    check_entanglement(r)?;
    let d = coupling_spectrum(n)?;
    BlockCovariance::new(sym_exp(&d, -r) * 0.5, sym_exp(&d, r) * 0.5)
}

/// Mean squeezed photons per mode, `(sum_k cosh(r mu_k) - n) / (2n)`.
pub fn squeezed_photons(n: usize, r: f64) -> Result<f64> {
    check_entanglement(r)?;
    let d = coupling_spectrum(n)?;
    let total: f64 = d.eigenvalues.iter().map(|mu| (r * mu).cosh()).sum();
    Ok(((total - n as f64) / (2.0 * n as f64)).max(0.0))
}

fn check_entanglement(r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("entanglement r = {r} must be >= 0")))
    }
}

/// A covariance `X1 + weight * X2` with `X2 = diag(exp(scale T), exp(-scale T)) / 2`
/// and diagonal `X1` chosen so every diagonal entry equals `level`.
struct Patterned {
    cov: BlockCovariance,
    /// `(index, value)` of the smallest diagonal entry of `X1`, index over
    /// the `2n` quadratures.
    min_slack: (usize, f64),
}

fn patterned(d: &SpectralDecomposition, level: f64, scale: f64, weight: f64) -> Patterned {
    let n = d.dim();
    let blocks = [sym_exp(d, scale) * 0.5, sym_exp(d, -scale) * 0.5];
    let mut min_slack = (0, f64::INFINITY);
    let mut out = Vec::with_capacity(2);
    for (b, x2) in blocks.into_iter().enumerate() {
        let mut m: DMatrix<f64> = &x2 * weight;
        for j in 0..n {
            let slack = level - weight * x2[(j, j)];
            if slack < min_slack.1 {
                min_slack = (b * n + j, slack);
            }
            m[(j, j)] = level.max(weight * x2[(j, j)]);
        }
        out.push(m);
    }
    let p = out.pop().unwrap();
    let q = out.pop().unwrap();
    Patterned {
        cov: BlockCovariance::new(q, p).expect("patterned blocks are symmetric"),
        min_slack,
    }
}

/// Smallest diagonal entry of `V1` over all `2n` quadratures.
pub fn noise_slack(channel: &ChannelParams) -> Result<f64> {
    let excess = max_diagonal_excess(channel.n, -channel.memory)?;
    Ok((channel.noise - 0.5 * channel.epsilon) - 0.5 * channel.epsilon * excess)
}

/// Smallest diagonal entry of `K1` for residual budget `budget`.
pub fn modulation_slack(n: usize, budget: f64, y: f64, theta: f64) -> Result<f64> {
    let excess = max_diagonal_excess(n, y)?;
    Ok((budget - 0.5 * theta) - 0.5 * theta * excess)
}

/// `max_j [exp(scale T)]_jj - 1`, accurate for small `scale` because the
/// eigenvector rows have unit norm and `expm1` keeps the second-order term.
fn max_diagonal_excess(n: usize, scale: f64) -> Result<f64> {
    let d = coupling_spectrum(n)?;
    let excess = d.mapped_diagonal(|mu| (scale * mu).exp_m1());
    Ok(excess.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
}

/// Correlated classical noise covariance `V_N`.
pub fn noise_covariance(channel: &ChannelParams) -> Result<BlockCovariance> {
    channel.check_ranges()?;
    let d = coupling_spectrum(channel.n)?;
    let built = patterned(&d, channel.noise, -channel.memory, channel.epsilon);
    let (index, value) = built.min_slack;
    if value < -FEASIBILITY_TOL {
        return Err(Error::InfeasibleMemory {
            index,
            value,
            memory: channel.memory,
            noise: channel.noise,
            epsilon: channel.epsilon,
        });
    }
    Ok(built.cov)
}

/// Classical modulation covariance `K`.
pub fn modulation_covariance(n: usize, input: &InputParams) -> Result<BlockCovariance> {
    let budget = input.residual_budget(n)?;
    check_regulator_band("theta", input.theta, budget)?;
    let d = coupling_spectrum(n)?;
    // K2 is V2 with s -> -y.
    let built = patterned(&d, budget, input.y, input.theta);
    let (index, value) = built.min_slack;
    if value < -FEASIBILITY_TOL {
        return Err(Error::InfeasibleCorrelation {
            index,
            value,
            correlation: input.y.abs(),
            budget,
            theta: input.theta,
        });
    }
    Ok(built.cov)
}

/// Covariance of each individual output state, `V_in + V_N`.
pub fn output_covariance(channel: &ChannelParams, r: f64) -> Result<BlockCovariance> {
    Ok(input_covariance(channel.n, r)?.add(&noise_covariance(channel)?))
}

/// Covariance of the ensemble-averaged output, `V_out + K`.
pub fn averaged_output_covariance(channel: &ChannelParams, input: &InputParams) -> Result<BlockCovariance> {
    Ok(output_covariance(channel, input.r)?.add(&modulation_covariance(channel.n, input)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::physical_symplectic_eigenvalues;
    use approx::assert_abs_diff_eq;

    const N_FIG: f64 = 2.0 / 3.0;

    fn assert_matrix(actual: &DMatrix<f64>, expected: &[f64], tol: f64) {
        let n = actual.nrows();
        let e = DMatrix::from_row_slice(n, n, expected);
        assert!((actual - &e).amax() < tol, "{actual} vs {e}");
    }

    #[test]
    fn regulator_defaults() {
        assert_eq!(default_epsilon(N_FIG).unwrap(), 1.0);
        assert_eq!(default_epsilon(0.25).unwrap(), 0.5);
        assert_eq!(default_theta(0.5).unwrap(), 1.0);
        assert!(matches!(default_epsilon(-0.1), Err(Error::Domain(_))));
        assert!(matches!(default_theta(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn epsilon_band_enforced() {
        assert!(ChannelParams::new(2, N_FIG, 0.0, 0.5).is_err());
        assert!(ChannelParams::new(2, 0.25, 0.0, 0.3).is_ok());
        assert!(ChannelParams::new(2, 0.25, 0.0, 0.6).is_err());
        assert!(ChannelParams::new(0, 0.25, 0.0, 0.3).is_err());
        assert!(ChannelParams::new(2, 0.25, -0.1, 0.3).is_err());
    }

    #[test]
    fn coherent_input_is_vacuum() {
        let v = input_covariance(4, 0.0).unwrap();
        let vac = BlockCovariance::vacuum(4);
        assert!((v.to_full() - vac.to_full()).amax() < 1e-15);
    }

    #[test]
    fn two_mode_input_closed_form() {
        let r: f64 = 0.3;
        let v = input_covariance(2, r).unwrap();
        let (c, s) = (r.cosh() / 2.0, r.sinh() / 2.0);
        assert_matrix(v.q_block(), &[c, -s, -s, c], 1e-15);
        assert_matrix(v.p_block(), &[c, s, s, c], 1e-15);
    }

    #[test]
    fn squeezed_input_is_pure() {
        for n in 1..=6 {
            for r in [0.0, 0.2, 0.9] {
                let spec = physical_symplectic_eigenvalues(&input_covariance(n, r).unwrap()).unwrap();
                for v in spec.values {
                    assert_abs_diff_eq!(v, 0.5, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn squeezed_photon_counts() {
        assert_eq!(squeezed_photons(3, 0.0).unwrap(), 0.0);
        // (2 cosh 0.5 - 2) / 4 and (2 cosh(sqrt2/2) + 1 - 3) / 6, mpmath to 30 digits.
        assert_abs_diff_eq!(
            squeezed_photons(2, 0.5).unwrap(),
            0.063_812_982_603_190_39,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            squeezed_photons(3, 0.5).unwrap(),
            0.086_863_945_507_118_7,
            epsilon = 1e-15
        );
        for n in 1..=6 {
            let trace_route = input_covariance(n, 0.5).unwrap().photons_per_mode();
            assert_abs_diff_eq!(squeezed_photons(n, 0.5).unwrap(), trace_route, epsilon = 1e-13);
        }
    }

    #[test]
    fn memoryless_noise_is_thermal() {
        for eps in [0.0, 0.2, 0.5] {
            let ch = ChannelParams::new(3, 0.25, 0.0, eps).unwrap();
            let v = noise_covariance(&ch).unwrap();
            assert!((v.q_block() - DMatrix::identity(3, 3) * 0.25).amax() < 1e-15);
            assert!((v.p_block() - DMatrix::identity(3, 3) * 0.25).amax() < 1e-15);
        }
    }

    #[test]
    fn two_mode_noise_closed_form() {
        let ch = ChannelParams::new(2, N_FIG, 0.2, 1.0).unwrap();
        let v = noise_covariance(&ch).unwrap();
        let sh = 0.2f64.sinh() / 2.0;
        assert_matrix(v.q_block(), &[N_FIG, -sh, -sh, N_FIG], 1e-15);
        assert_matrix(v.p_block(), &[N_FIG, sh, sh, N_FIG], 1e-15);
    }

    #[test]
    fn two_mode_noise_feasibility_boundary() {
        let s_max = (4.0f64 / 3.0).acosh();
        assert!(ChannelParams::new(2, N_FIG, s_max - 1e-9, 1.0)
            .unwrap()
            .validate()
            .is_ok());
        let err = ChannelParams::new(2, N_FIG, s_max + 1e-6, 1.0)
            .unwrap()
            .validate()
            .unwrap_err();
        assert!(matches!(err, Error::InfeasibleMemory { .. }));
        assert!(err.to_string().contains("[V1]"));
        // Numeric scan of the smallest diagonal entry changes sign at the closed form.
        let scan: Vec<f64> = (0..=2000).map(|i| i as f64 * 1e-3).collect();
        let crossing = scan
            .iter()
            .find(|&&s| noise_slack(&ChannelParams::new(2, N_FIG, s, 1.0).unwrap()).unwrap() < 0.0)
            .unwrap();
        assert!((crossing - s_max).abs() <= 1e-3);
    }

    #[test]
    fn modulation_examples() {
        let k = modulation_covariance(3, &InputParams::new(3, 2.0, 0.0, 0.0, 1.0).unwrap()).unwrap();
        assert!((k.to_full() - BlockCovariance::scaled_identity(3, 2.0).to_full()).amax() < 1e-14);

        let k = modulation_covariance(2, &InputParams::new(2, 2.0, 0.0, 0.3, 1.0).unwrap()).unwrap();
        let sh = 0.3f64.sinh() / 2.0;
        assert_matrix(k.q_block(), &[2.0, sh, sh, 2.0], 1e-15);
        assert_matrix(k.p_block(), &[2.0, -sh, -sh, 2.0], 1e-15);

        // cosh(y) <= 2 nbar at r = 0, theta = 1, n = 2.
        let y_max = 4.0f64.acosh();
        assert!(InputParams::new(2, 2.0, 0.0, y_max - 1e-9, 1.0)
            .unwrap()
            .validate(2)
            .is_ok());
        let err = InputParams::new(2, 2.0, 0.0, -(y_max + 1e-6), 1.0)
            .unwrap()
            .validate(2)
            .unwrap_err();
        assert!(matches!(err, Error::InfeasibleCorrelation { .. }));
    }

    #[test]
    fn over_squeezed_input_rejected() {
        let err = InputParams::with_default_theta(2, 0.01, 1.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSqueezing { .. }));
    }

    #[test]
    fn output_examples() {
        let ch = ChannelParams::new(3, N_FIG, 0.0, 1.0).unwrap();
        let v = output_covariance(&ch, 0.0).unwrap();
        assert!((v.q_block() - DMatrix::identity(3, 3) * (N_FIG + 0.5)).amax() < 1e-15);
        let input = InputParams::new(3, 2.0, 0.0, 0.0, 1.0).unwrap();
        let avg = averaged_output_covariance(&ch, &input).unwrap();
        assert!((avg.p_block() - DMatrix::identity(3, 3) * (2.0 + N_FIG + 0.5)).amax() < 1e-14);

        let ch = ChannelParams::new(2, N_FIG, 0.2, 1.0).unwrap();
        let v = output_covariance(&ch, 0.1).unwrap();
        let (c, s1, s2) = (0.1f64.cosh() / 2.0, 0.1f64.sinh() / 2.0, 0.2f64.sinh() / 2.0);
        assert_matrix(v.q_block(), &[c + N_FIG, -s1 - s2, -s1 - s2, c + N_FIG], 1e-15);
        assert_matrix(v.p_block(), &[c + N_FIG, s1 + s2, s1 + s2, c + N_FIG], 1e-15);
    }

    #[test]
    fn modulation_adds_residual_budget_on_diagonal() {
        let ch = ChannelParams::new(4, N_FIG, 0.15, 1.0).unwrap();
        let input = InputParams::with_default_theta(4, 2.0, 0.2, -0.4).unwrap();
        let budget = input.residual_budget(4).unwrap();
        let diff: Vec<f64> = averaged_output_covariance(&ch, &input)
            .unwrap()
            .diagonal()
            .iter()
            .zip(output_covariance(&ch, 0.2).unwrap().diagonal())
            .map(|(a, b)| a - b)
            .collect();
        for d in diff {
            assert_abs_diff_eq!(d, budget, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_state_mean_is_zero_by_default() {
        let st = GaussianState::centered(BlockCovariance::vacuum(3));
        assert_eq!(st.mean.len(), 6);
        assert!(st.mean.iter().all(|&m| m == 0.0));
    }
}
