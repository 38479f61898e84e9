use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};

use memchan_core::optimize::{OptimizerSettings, ThetaPolicy, YSign};

/// A real number given as a decimal or as an exact fraction such as `2/3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl FromStr for Real {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let value = match s.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
                let den: f64 = den
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
                if den == 0.0 {
                    return Err(format!("zero denominator in {s:?}"));
                }
                num / den
            }
            None => s.parse().map_err(|e| format!("bad number {s:?}: {e}"))?,
        };
        if value.is_finite() {
            Ok(Real(value))
        } else {
            Err(format!("{s:?} is not finite"))
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

/// `auto` or an explicit regulator value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regulator {
    Auto,
    Value(f64),
}

impl FromStr for Regulator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("auto") {
            Ok(Regulator::Auto)
        } else {
            Real::from_str(s).map(|r| Regulator::Value(r.0))
        }
    }
}

impl Serialize for Regulator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Regulator::Auto => s.serialize_str("auto"),
            Regulator::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl Regulator {
    pub fn theta_policy(&self) -> ThetaPolicy {
        match *self {
            Regulator::Auto => ThetaPolicy::Auto,
            Regulator::Value(v) => ThetaPolicy::Fixed(v),
        }
    }
}

/// `start:stop:count`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, count] = parts.as_slice() else {
            return Err(format!("expected start:stop:count, got {s:?}"));
        };
        let start = Real::from_str(start)?.0;
        let stop = Real::from_str(stop)?.0;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|e| format!("bad count in {s:?}: {e}"))?;
        if count == 0 || stop < start {
            return Err(format!("axis {s:?} needs count >= 1 and stop >= start"));
        }
        Ok(Axis { start, stop, count })
    }
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum YSignArg {
    Both,
    Nonneg,
    Nonpos,
}

impl From<YSignArg> for YSign {
    fn from(v: YSignArg) -> Self {
        match v {
            YSignArg::Both => YSign::Both,
            YSignArg::Nonneg => YSign::NonNegative,
            YSignArg::Nonpos => YSign::NonPositive,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "memchan",
    version,
    about = "Transmission rates of Gaussian channels with correlated additive noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the rate at one (r, y) point.
    Rate(RateArgs),
    /// Rate maximised over y along a grid of r (one curve per memory value and n).
    SweepR(SweepRArgs),
    /// Rate maximised over (r, y) for each number of channel uses.
    SweepN(SweepNArgs),
    /// Report the feasible ranges of s, r and y.
    Feasible(FeasibleArgs),
    /// Monte Carlo check of the covariance assembly and the symplectic dual-method check.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ChannelArgs {
    /// Added thermal photons per mode; decimals or fractions like 2/3.
    #[arg(long, default_value = "2/3")]
    pub noise: Real,
    /// Noise positivity regulator: `auto` or a value in the allowed band.
    #[arg(long, default_value = "auto")]
    pub epsilon: Regulator,
    /// Modulation positivity regulator: `auto` or a value in the allowed band.
    #[arg(long, default_value = "auto")]
    pub theta: Regulator,
    /// Photon budget per mode.
    #[arg(long, default_value = "2")]
    pub nbar: Real,
    /// Refuse to run with more modes than this.
    #[arg(long = "n-max-guard", default_value_t = 12)]
    pub n_max_guard: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    /// Points in the coarse r grid of the joint optimisation.
    #[arg(long = "r-grid", default_value_t = 65)]
    pub r_grid: usize,
    /// Points in the coarse y grid.
    #[arg(long = "y-grid", default_value_t = 129)]
    pub y_grid: usize,
    /// Signs of y the optimiser may use.
    #[arg(long = "y-sign", value_enum, default_value_t = YSignArg::Both)]
    pub y_sign: YSignArg,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; defaults to `$MEMCHAN_OUT_DIR/<subcommand>.<ext>` when
    /// that variable is set, otherwise standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Memory degree s.
    #[arg(long, default_value = "0")]
    pub memory: Real,
    #[arg(long, default_value = "0")]
    pub r: Real,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub y: Real,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepRArgs {
    /// Numbers of channel uses (repeat or comma-separate).
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
    pub n: Vec<usize>,
    /// Memory degrees (repeat or comma-separate).
    #[arg(long, value_delimiter = ',', default_values = ["0", "0.1", "0.2"])]
    pub memory: Vec<Real>,
    /// r axis as start:stop:count; defaults to 0:r_max:41 for each n.
    #[arg(long = "r-axis")]
    pub r_axis: Option<Axis>,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepNArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values = ["0", "0.1", "0.2"])]
    pub memory: Vec<Real>,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FeasibleArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value = "0")]
    pub memory: Real,
    /// Also report the y bound at this r.
    #[arg(long)]
    pub r: Option<Real>,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value = "0.2")]
    pub memory: Real,
    #[arg(long, default_value = "0.1")]
    pub r: Real,
    #[arg(long, default_value = "0.2", allow_hyphen_values = true)]
    pub y: Real,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Allowed entropy gap in bits between estimate and analytic value.
    #[arg(long = "entropy-tol", default_value_t = 0.02)]
    pub entropy_tol: f64,
    /// Random covariances for the symplectic dual-method check.
    #[arg(long = "dual-cases", default_value_t = 200)]
    pub dual_cases: usize,
    /// Largest mode count in the dual-method check.
    #[arg(long = "dual-max-n", default_value_t = 8)]
    pub dual_max_n: usize,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

pub fn optimizer_settings(channel: &ChannelArgs, grid: &GridArgs) -> OptimizerSettings {
    OptimizerSettings {
        y_grid: grid.y_grid,
        r_grid: grid.r_grid,
        theta: channel.theta.theta_policy(),
        y_sign: grid.y_sign.into(),
        max_modes: channel.n_max_guard,
        ..OptimizerSettings::default()
    }
}
