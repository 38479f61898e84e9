//! Feasible parameter ranges and maximisation of the rate over the input
//! correlation `y` and the entanglement `r`.
//!
//! Each one-dimensional maximisation evaluates a uniform grid, picks the best
//! point and refines it with golden-section search inside the neighbouring
//! grid cells. The refined point only replaces the grid winner when it is
//! strictly better, so the result always dominates the grid.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    modulation_slack, noise_slack, squeezed_photons, ChannelParams, InputParams, FEASIBILITY_TOL,
};
use crate::entropy::{transmission_rate, RateResult};
use crate::error::{Error, Result};

/// Absolute tolerance of every bisection for a feasibility boundary.
pub const BOUND_TOL: f64 = 1e-10;

/// Bisection gives up growing its bracket past this value and reports an
/// unbounded parameter.
const BRACKET_CAP: f64 = 1024.0;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// How `theta` is chosen as the residual budget changes with `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "policy", content = "value", rename_all = "lowercase")]
pub enum ThetaPolicy {
    /// `1` for a budget `>= 1/2`, otherwise twice the budget.
    Auto,
    /// The given value wherever the budget is below 1/2; `1` otherwise,
    /// because the band leaves no choice there.
    Fixed(f64),
}

impl ThetaPolicy {
    pub fn resolve(&self, budget: f64) -> Result<f64> {
        match *self {
            ThetaPolicy::Auto => crate::channel::default_theta(budget),
            ThetaPolicy::Fixed(_) if budget >= 0.5 => Ok(1.0),
            ThetaPolicy::Fixed(v) if v >= 0.0 && v <= 2.0 * budget + FEASIBILITY_TOL => Ok(v),
            ThetaPolicy::Fixed(v) => Err(Error::Domain(format!(
                "theta = {v} outside [0, {}] for residual budget {budget}",
                2.0 * budget
            ))),
        }
    }

    /// Smallest residual budget at which the policy yields a valid `theta`.
    pub fn min_budget(&self) -> f64 {
        match *self {
            ThetaPolicy::Auto => 0.0,
            ThetaPolicy::Fixed(v) => v.clamp(0.0, 1.0) / 2.0,
        }
    }
}

/// Which signs of `y` the optimiser may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum YSign {
    Both,
    NonNegative,
    NonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerSettings {
    /// Points in the coarse `y` grid.
    pub y_grid: usize,
    /// Points in the coarse `r` grid.
    pub r_grid: usize,
    /// Golden-section stopping width in `y`.
    pub y_tol: f64,
    /// Golden-section stopping width in `r`.
    pub r_tol: f64,
    pub theta: ThetaPolicy,
    pub y_sign: YSign,
    /// Largest number of modes accepted.
    pub max_modes: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            y_grid: 129,
            r_grid: 65,
            y_tol: 1e-6,
            r_tol: 1e-5,
            theta: ThetaPolicy::Auto,
            y_sign: YSign::Both,
            max_modes: 12,
        }
    }
}

impl OptimizerSettings {
    fn check(&self, n: usize) -> Result<()> {
        if n > self.max_modes {
            return Err(Error::Domain(format!(
                "n = {n} exceeds the configured mode ceiling {}",
                self.max_modes
            )));
        }
        if self.y_grid < 2 || self.r_grid < 2 {
            return Err(Error::Domain("grids need at least 2 points".into()));
        }
        if !(self.y_tol > 0.0 && self.r_tol > 0.0) {
            return Err(Error::Domain("refinement tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Parameter bounds implied by positivity of `V1`, `K1` and the photon budget.
///
/// A bound is `f64::INFINITY` when the constraint never binds (for example
/// `s` with `epsilon = 0`). Parameters that have no effect at all (`r` and
/// `y` for a single mode, `y` when `theta = 0`) get a bound of zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibleRegion {
    pub channel: ChannelParams,
    pub nbar: f64,
    pub theta: ThetaPolicy,
    pub s_max: f64,
    pub r_max: f64,
    pub y_max_at_zero: f64,
}

impl FeasibleRegion {
    /// Largest `|y|` keeping `K1 >= 0` at entanglement `r`.
    pub fn y_max(&self, r: f64) -> Result<f64> {
        y_bound(self.channel.n, self.nbar, r, self.theta)
    }
}

/// Largest `x >= 0` with `ok(x)`, given `ok(0)`. Assumes `ok` is monotone.
fn bisect_boundary(ok: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > BOUND_TOL {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn s_bound(channel: &ChannelParams) -> Result<f64> {
    if channel.n == 1 || channel.epsilon == 0.0 {
        return Ok(f64::INFINITY);
    }
    let probe = |s: f64| -> Result<bool> {
        let ch = ChannelParams {
            memory: s,
            ..*channel
        };
        Ok(noise_slack(&ch)? >= 0.0)
    };
    bisect_boundary(probe)
}

fn r_bound(n: usize, nbar: f64, theta: ThetaPolicy) -> Result<f64> {
    let threshold = theta.min_budget();
    if nbar < threshold - FEASIBILITY_TOL {
        return Err(Error::EmptyRegion(format!(
            "photon budget {nbar} is below {threshold}, the least budget the theta policy allows"
        )));
    }
    if n == 1 {
        return Ok(0.0);
    }
    bisect_boundary(|r| Ok(nbar - squeezed_photons(n, r)? >= threshold))
}

fn y_bound(n: usize, nbar: f64, r: f64, theta: ThetaPolicy) -> Result<f64> {
    let squeezed = squeezed_photons(n, r)?;
    let budget = nbar - squeezed;
    if budget < theta.min_budget() - FEASIBILITY_TOL {
        return Err(Error::InfeasibleSqueezing { squeezed, nbar });
    }
    let budget = budget.max(0.0);
    let th = theta.resolve(budget)?;
    // The diagonal of exp(yT) is at least 1, so theta = 2 budget pins y to 0.
    if n == 1 || th == 0.0 || th >= 2.0 * budget {
        return Ok(0.0);
    }
    bisect_boundary(|y| Ok(modulation_slack(n, budget, y, th)? >= 0.0))
}

/// Bounds on `s`, `r` and `y` for a channel and photon budget.
pub fn feasible_region(channel: &ChannelParams, nbar: f64, theta: ThetaPolicy) -> Result<FeasibleRegion> {
    let channel = ChannelParams::new(channel.n, channel.noise, channel.memory, channel.epsilon)?;
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(Error::Domain(format!("photon budget nbar = {nbar} must be >= 0")));
    }
    let s_max = s_bound(&channel)?;
    if channel.memory > s_max {
        return Err(Error::EmptyRegion(format!(
            "memory s = {} exceeds the largest feasible value {s_max} for N = {}, epsilon = {}",
            channel.memory, channel.noise, channel.epsilon
        )));
    }
    let r_max = r_bound(channel.n, nbar, theta)?;
    let y_max_at_zero = y_bound(channel.n, nbar, 0.0, theta)?;
    Ok(FeasibleRegion {
        channel,
        nbar,
        theta,
        s_max,
        r_max,
        y_max_at_zero,
    })
}

/// A maximiser and the full rate evaluation there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub r: f64,
    pub y: f64,
    pub result: RateResult,
}

impl Optimum {
    pub fn rate(&self) -> f64 {
        self.result.rate
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 || hi == lo {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .collect()
}

/// Tie-break order for equal rates: `Less` means `a` is preferred.
type Preference = fn(f64, f64) -> Ordering;

fn prefer_small(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

fn prefer_small_abs_then_negative(a: f64, b: f64) -> Ordering {
    a.abs().total_cmp(&b.abs()).then(a.total_cmp(&b))
}

fn better(a: (f64, f64), b: (f64, f64), prefer: Preference) -> bool {
    match a.1.total_cmp(&b.1) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => prefer(a.0, b.0) == Ordering::Less,
    }
}

/// Maximise `f` over `[lo, hi]` by grid search followed by golden-section
/// refinement. Grid points are evaluated in parallel; the reduction is
/// sequential in grid order.
fn grid_then_golden<T, F>(
    lo: f64,
    hi: f64,
    points: usize,
    tol: f64,
    prefer: Preference,
    f: F,
) -> Result<(f64, T)>
where
    T: Send,
    F: Fn(f64) -> Result<(f64, T)> + Sync,
{
    let grid = linspace(lo, hi, points);
    let evaluated: Vec<(f64, f64, T)> = grid
        .par_iter()
        .map(|&x| f(x).map(|(v, t)| (x, v, t)))
        .collect::<Result<_>>()?;
    let mut best_idx = 0;
    for i in 1..evaluated.len() {
        let (x, v, _) = &evaluated[i];
        let (bx, bv, _) = &evaluated[best_idx];
        if better((*x, *v), (*bx, *bv), prefer) {
            best_idx = i;
        }
    }
    let mut a = grid[best_idx.saturating_sub(1)];
    let mut b = grid[(best_idx + 1).min(grid.len() - 1)];
    let mut best = evaluated.into_iter().nth(best_idx).unwrap();
    if b - a <= tol {
        return Ok((best.0, best.2));
    }

    let consider = |x: f64, v: f64, t: T, best: &mut (f64, f64, T)| {
        if better((x, v), (best.0, best.1), prefer) {
            *best = (x, v, t);
        }
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, tc) = f(c)?;
    consider(c, fc, tc, &mut best);
    let (mut fd, td) = f(d)?;
    consider(d, fd, td, &mut best);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            let (v, t) = f(c)?;
            fc = v;
            consider(c, v, t, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            let (v, t) = f(d)?;
            fd = v;
            consider(d, v, t, &mut best);
        }
    }
    let mid = 0.5 * (a + b);
    let (v, t) = f(mid)?;
    consider(mid, v, t, &mut best);
    Ok((best.0, best.2))
}

fn evaluate(channel: &ChannelParams, nbar: f64, r: f64, y: f64, theta: ThetaPolicy) -> Result<RateResult> {
    let budget = (nbar - squeezed_photons(channel.n, r)?).max(0.0);
    let input = InputParams::new(channel.n, nbar, r, y, theta.resolve(budget)?)?;
    transmission_rate(channel, &input)
}

/// Rate at a single `(r, y)` with `theta` chosen by the policy.
pub fn rate_at(channel: &ChannelParams, nbar: f64, r: f64, y: f64, theta: ThetaPolicy) -> Result<RateResult> {
    evaluate(channel, nbar, r, y, theta)
}

/// Maximise the rate over `y` at fixed `r`.
pub fn max_over_y(
    channel: &ChannelParams,
    nbar: f64,
    r: f64,
    settings: &OptimizerSettings,
) -> Result<Optimum> {
    settings.check(channel.n)?;
    channel.validate()?;
    let y_max = y_bound(channel.n, nbar, r, settings.theta)?;
    let (lo, hi) = match settings.y_sign {
        YSign::Both => (-y_max, y_max),
        YSign::NonNegative => (0.0, y_max),
        YSign::NonPositive => (-y_max, 0.0),
    };
    let (y, result) = grid_then_golden(
        lo,
        hi,
        settings.y_grid,
        settings.y_tol,
        prefer_small_abs_then_negative,
        |y| evaluate(channel, nbar, r, y, settings.theta).map(|res| (res.rate, res)),
    )?;
    Ok(Optimum { r, y, result })
}

/// Maximise the rate jointly over `r in [0, r_max]` and `y`.
pub fn max_over_ry(channel: &ChannelParams, nbar: f64, settings: &OptimizerSettings) -> Result<Optimum> {
    settings.check(channel.n)?;
    let region = feasible_region(channel, nbar, settings.theta)?;
    let (_, best) = grid_then_golden(
        0.0,
        region.r_max,
        settings.r_grid,
        settings.r_tol,
        prefer_small,
        |r| max_over_y(&region.channel, nbar, r, settings).map(|opt| (opt.rate(), opt)),
    )?;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub n: usize,
    /// Axis value for `r` sweeps; the optimised `r` for `n` sweeps.
    pub r: f64,
    pub y_opt: f64,
    pub rate: f64,
    /// Present for joint `(r, y)` optimisation only.
    pub r_opt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    R,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub nbar: f64,
    pub noise: f64,
    pub settings: OptimizerSettings,
    pub channels: Vec<ChannelParams>,
    pub rows: Vec<SweepRow>,
    /// `(s, n, r)` grid points dropped because `r` exceeded `r_max`.
    pub skipped: Vec<(f64, usize, f64)>,
}

/// Rate maximised over `y` along a grid of `r`, for each channel.
pub fn sweep_r(
    channels: &[ChannelParams],
    nbar: f64,
    r_grid: &[f64],
    settings: &OptimizerSettings,
) -> Result<SweepResult> {
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for ch in channels {
        settings.check(ch.n)?;
        let region = feasible_region(ch, nbar, settings.theta)?;
        for &r in r_grid {
            if r.is_nan() || r < 0.0 {
                return Err(Error::Domain(format!("r grid value {r} must be >= 0")));
            }
            if r <= region.r_max {
                jobs.push((*ch, r));
            } else {
                skipped.push((ch.memory, ch.n, r));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(ch, r)| {
            max_over_y(ch, nbar, *r, settings).map(|opt| SweepRow {
                s: ch.memory,
                n: ch.n,
                r: *r,
                y_opt: opt.y,
                rate: opt.rate(),
                r_opt: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        kind: SweepKind::R,
        nbar,
        noise: channels.first().map_or(f64::NAN, |c| c.noise),
        settings: *settings,
        channels: channels.to_vec(),
        rows,
        skipped,
    })
}

/// Rate maximised over `(r, y)` for each number of uses in `modes`.
pub fn sweep_n(
    template: &ChannelParams,
    nbar: f64,
    modes: &[usize],
    settings: &OptimizerSettings,
) -> Result<SweepResult> {
    let channels = modes
        .iter()
        .map(|&n| {
            settings.check(n)?;
            template.with_modes(n)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = channels
        .par_iter()
        .map(|ch| {
            max_over_ry(ch, nbar, settings).map(|opt| SweepRow {
                s: ch.memory,
                n: ch.n,
                r: opt.r,
                y_opt: opt.y,
                rate: opt.rate(),
                r_opt: Some(opt.r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        kind: SweepKind::N,
        nbar,
        noise: template.noise,
        settings: *settings,
        channels,
        rows,
        skipped: Vec::new(),
    })
}

/// `points` evenly spaced values covering `[0, r_max]` for this channel.
pub fn default_r_axis(
    channel: &ChannelParams,
    nbar: f64,
    theta: ThetaPolicy,
    points: usize,
) -> Result<Vec<f64>> {
    let region = feasible_region(channel, nbar, theta)?;
    Ok(linspace(0.0, region.r_max, points))
}
