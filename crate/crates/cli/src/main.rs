mod args;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::json;

use memchan_core::channel::{modulation_slack, noise_slack, squeezed_photons, ChannelParams, InputParams};
use memchan_core::mc::{symplectic_dual_check, validate_assembly, GENERATOR, Z_THRESHOLD};
use memchan_core::optimize::{default_r_axis, feasible_region, sweep_n, sweep_r, SweepResult};
use memchan_core::transmission_rate;

use args::{ChannelArgs, Cli, Command, Format, OutputArgs, Regulator};

/// Default directory for output files when `--out` is absent.
const OUT_DIR_ENV: &str = "MEMCHAN_OUT_DIR";

const DEFAULT_R_POINTS: usize = 41;
const DUAL_TOL: f64 = 1e-10;

/// Exit status when `validate` ran but a check failed.
const EXIT_VALIDATION_FAILED: u8 = 3;

#[derive(Serialize)]
struct RunConfig<'a, A, R> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: &'a A,
    resolved: R,
}

fn config<'a, A, R>(command: &'static str, args: &'a A, resolved: R) -> RunConfig<'a, A, R> {
    RunConfig {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        args,
        resolved,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether every check passed (always true outside `validate`).
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Rate(a) => rate(a).map(|_| true),
        Command::SweepR(a) => sweep_r_cmd(a).map(|_| true),
        Command::SweepN(a) => sweep_n_cmd(a).map(|_| true),
        Command::Feasible(a) => feasible(a).map(|_| true),
        Command::Validate(a) => validate(a),
    }
}

fn channel(c: &ChannelArgs, n: usize, memory: f64) -> Result<ChannelParams> {
    if n > c.n_max_guard {
        bail!("n = {n} exceeds --n-max-guard {}", c.n_max_guard);
    }
    let ch = match c.epsilon {
        Regulator::Auto => ChannelParams::with_default_epsilon(n, c.noise.0, memory)?,
        Regulator::Value(eps) => ChannelParams::new(n, c.noise.0, memory, eps)?,
    };
    ch.validate()?;
    Ok(ch)
}

fn input(c: &ChannelArgs, n: usize, r: f64, y: f64) -> Result<InputParams> {
    let input = match c.theta {
        Regulator::Auto => InputParams::with_default_theta(n, c.nbar.0, r, y)?,
        Regulator::Value(theta) => InputParams::new(n, c.nbar.0, r, y, theta)?,
    };
    input.validate(n)?;
    Ok(input)
}

fn rate(a: args::RateArgs) -> Result<()> {
    let ch = channel(&a.channel, a.n, a.memory.0)?;
    let inp = input(&a.channel, a.n, a.r.0, a.y.0)?;
    let result = transmission_rate(&ch, &inp)?;
    let budget = inp.residual_budget(a.n)?;
    let report = json!({
        "config": config("rate", &a, json!({ "channel": ch, "input": inp })),
        "rate": result.rate,
        "avg_spectrum": result.avg_spectrum,
        "out_spectrum": result.out_spectrum,
        "squeezed_photons": squeezed_photons(a.n, inp.r)?,
        "residual_budget": budget,
        "epsilon": ch.epsilon,
        "theta": inp.theta,
        "slack": {
            "min_v1_diagonal": noise_slack(&ch)?,
            "min_k1_diagonal": modulation_slack(a.n, budget, inp.y, inp.theta)?,
            "photon_budget": budget,
        },
    });
    write_json("rate", &a.output, &report)
}

fn sweep_r_cmd(a: args::SweepRArgs) -> Result<()> {
    let settings = args::optimizer_settings(&a.channel, &a.grid);
    let mut combined: Option<SweepResult> = None;
    let mut axes = Vec::new();
    for &n in &a.n {
        let channels = a
            .memory
            .iter()
            .map(|s| channel(&a.channel, n, s.0))
            .collect::<Result<Vec<_>>>()?;
        let Some(first) = channels.first() else {
            bail!("at least one --memory value is required");
        };
        let axis = match a.r_axis {
            Some(axis) => axis.values(),
            None => default_r_axis(first, a.channel.nbar.0, settings.theta, DEFAULT_R_POINTS)?,
        };
        let part = sweep_r(&channels, a.channel.nbar.0, &axis, &settings)
            .with_context(|| format!("r sweep for n = {n}"))?;
        axes.push(json!({ "n": n, "r": axis }));
        match combined.as_mut() {
            None => combined = Some(part),
            Some(all) => {
                all.channels.extend(part.channels);
                all.rows.extend(part.rows);
                all.skipped.extend(part.skipped);
            }
        }
    }
    let Some(result) = combined else {
        bail!("at least one --n value is required");
    };
    let resolved = json!({
        "settings": settings,
        "channels": result.channels,
        "r_axes": axes,
        "skipped": result.skipped,
    });
    write_sweep("sweep-r", &a.output, &config("sweep-r", &a, resolved), &result)
}

fn sweep_n_cmd(a: args::SweepNArgs) -> Result<()> {
    let settings = args::optimizer_settings(&a.channel, &a.grid);
    let mut combined: Option<SweepResult> = None;
    for s in &a.memory {
        for &n in &a.n {
            // Rejects infeasible (n, s) with the violated constraint named.
            channel(&a.channel, n, s.0)?;
        }
        let Some(&n0) = a.n.first() else {
            bail!("at least one --n value is required");
        };
        let template = channel(&a.channel, n0, s.0)?;
        let part = sweep_n(&template, a.channel.nbar.0, &a.n, &settings)
            .with_context(|| format!("n sweep for s = {}", s.0))?;
        match combined.as_mut() {
            None => combined = Some(part),
            Some(all) => {
                all.channels.extend(part.channels);
                all.rows.extend(part.rows);
            }
        }
    }
    let Some(result) = combined else {
        bail!("at least one --memory value is required");
    };
    let resolved = json!({ "settings": settings, "channels": result.channels });
    write_sweep("sweep-n", &a.output, &config("sweep-n", &a, resolved), &result)
}

fn feasible(a: args::FeasibleArgs) -> Result<()> {
    if a.n > a.channel.n_max_guard {
        bail!("n = {} exceeds --n-max-guard {}", a.n, a.channel.n_max_guard);
    }
    // Range checks only: the point of this command is to report s_max even
    // when the requested s lies beyond it.
    let ch = match a.channel.epsilon {
        Regulator::Auto => ChannelParams::with_default_epsilon(a.n, a.channel.noise.0, 0.0)?,
        Regulator::Value(eps) => ChannelParams::new(a.n, a.channel.noise.0, 0.0, eps)?,
    };
    let theta = a.channel.theta.theta_policy();
    let region = feasible_region(&ch, a.channel.nbar.0, theta)?;
    let y_at_r = match a.r {
        Some(r) if r.0 > region.r_max => bail!(
            "r = {} exceeds r_max = {} for nbar = {}",
            r.0,
            region.r_max,
            a.channel.nbar.0
        ),
        Some(r) => Some(json!({ "r": r.0, "y_max": region.y_max(r.0)? })),
        None => None,
    };
    let memory_feasible = a.memory.0 <= region.s_max;
    let report = json!({
        "config": config("feasible", &a, json!({ "epsilon": ch.epsilon, "theta": theta })),
        "s_max": region.s_max,
        "s_max_unbounded": region.s_max.is_infinite(),
        "memory": a.memory.0,
        "memory_feasible": memory_feasible,
        "r_max": region.r_max,
        "y_max_at_r0": region.y_max_at_zero,
        "y_max_at_r": y_at_r,
    });
    write_json("feasible", &a.output, &report)
}

fn validate(a: args::ValidateArgs) -> Result<bool> {
    let ch = channel(&a.channel, a.n, a.memory.0)?;
    let inp = input(&a.channel, a.n, a.r.0, a.y.0)?;
    let mc = validate_assembly(&ch, &inp, a.samples, a.seed, a.entropy_tol)?;
    let dual = symplectic_dual_check(a.dual_cases, a.dual_max_n, a.seed, DUAL_TOL)?;
    let passed = mc.passed && dual.passed;
    let resolved = json!({
        "channel": ch,
        "input": inp,
        "generator": GENERATOR,
        "z_threshold": Z_THRESHOLD,
        "dual_tolerance": DUAL_TOL,
    });
    let report = json!({
        "config": config("validate", &a, resolved),
        "monte_carlo": mc,
        "symplectic_dual_check": dual,
        "passed": passed,
    });
    write_json("validate", &a.output, &report)?;
    if !passed {
        eprintln!("validation failed");
    }
    Ok(passed)
}

fn destination(command: &str, out: &OutputArgs, ext: &str) -> Option<PathBuf> {
    out.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| PathBuf::from(d).join(format!("{command}.{ext}")))
    })
}

fn emit(path: Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn write_json(command: &str, out: &OutputArgs, value: &serde_json::Value) -> Result<()> {
    if out.format == Some(Format::Csv) {
        bail!("{command} only writes JSON");
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    emit(destination(command, out, "json"), &bytes)
}

fn write_sweep<C: Serialize>(
    command: &str,
    out: &OutputArgs,
    config: &C,
    result: &SweepResult,
) -> Result<()> {
    let format = out.format.unwrap_or(Format::Csv);
    let bytes = match format {
        Format::Json => {
            let mut bytes = serde_json::to_vec_pretty(&json!({
                "config": config,
                "rows": result.rows,
            }))?;
            bytes.push(b'\n');
            bytes
        }
        Format::Csv => {
            let mut bytes = format!("# config: {}\n", serde_json::to_string(config)?).into_bytes();
            let mut w = csv::Writer::from_writer(&mut bytes);
            for row in &result.rows {
                w.serialize(row)?;
            }
            w.flush()?;
            drop(w);
            bytes
        }
    };
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    emit(destination(command, out, ext), &bytes)
}
