//! Thermal entropy, Gaussian-state entropy and the transmission rate.

use serde::Serialize;

use crate::channel::{averaged_output_covariance, output_covariance, ChannelParams, InputParams};
use crate::error::{Error, Result};
use crate::linalg::{physical_symplectic_eigenvalues, BlockCovariance, SymplecticSpectrum, PHYSICAL_TOL};

/// Below this mean photon number `g` returns exactly zero.
const G_ZERO_CUTOFF: f64 = 1e-12;

/// Entropy in bits of a thermal state with mean photon number `x`:
/// `(x + 1) log2(x + 1) - x log2(x)`, and `0` at `x = 0`.
pub fn g(x: f64) -> Result<f64> {
    if x.is_nan() || x < -PHYSICAL_TOL {
        return Err(Error::Domain(format!("thermal entropy needs x >= 0, got {x}")));
    }
    if x < G_ZERO_CUTOFF {
        return Ok(0.0);
    }
    let nats = (x + 1.0) * x.ln_1p() - x * x.ln();
    Ok(nats / std::f64::consts::LN_2)
}

fn spectrum_entropy(spectrum: &SymplecticSpectrum) -> f64 {
    spectrum
        .values
        .iter()
        .map(|&l| g(l - 0.5).expect("physical spectrum"))
        .sum()
}

/// Von Neumann entropy in bits, `sum_j g(|lambda_j| - 1/2)`.
pub fn gaussian_entropy(cov: &BlockCovariance) -> Result<f64> {
    Ok(spectrum_entropy(&physical_symplectic_eigenvalues(cov)?))
}

/// Rate of one `(channel, input)` configuration together with the spectra it
/// was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    /// Bits per channel use.
    pub rate: f64,
    /// Symplectic spectrum of the averaged output.
    pub avg_spectrum: SymplecticSpectrum,
    /// Symplectic spectrum of an individual output.
    pub out_spectrum: SymplecticSpectrum,
    pub channel: ChannelParams,
    pub input: InputParams,
}

impl RateResult {
    /// `(1/n) sum_j [g(lbar_j - 1/2) - g(l_j - 1/2)]` from the stored spectra.
    pub fn recompute(&self) -> f64 {
        (spectrum_entropy(&self.avg_spectrum) - spectrum_entropy(&self.out_spectrum)) / self.channel.n as f64
    }
}

/// Rate from an explicit pair of averaged and individual output covariances.
pub fn rate_from_covariances(avg: &BlockCovariance, out: &BlockCovariance) -> Result<f64> {
    let n = out.n() as f64;
    Ok((gaussian_entropy(avg)? - gaussian_entropy(out)?) / n)
}

/// `R(r, y) = (1/n) [S(Vbar_out) - S(V_out)]`.
pub fn transmission_rate(channel: &ChannelParams, input: &InputParams) -> Result<RateResult> {
    let out = output_covariance(channel, input.r)?;
    let avg = averaged_output_covariance(channel, input)?;
    let out_spectrum = physical_symplectic_eigenvalues(&out)?;
    let avg_spectrum = physical_symplectic_eigenvalues(&avg)?;
    let mut result = RateResult {
        rate: 0.0,
        avg_spectrum,
        out_spectrum,
        channel: *channel,
        input: *input,
    };
    result.rate = result.recompute();
    Ok(result)
}
