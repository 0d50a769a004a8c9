//! `gfaccess`: command-line front end for the grant-free access analysis
//! library. Verifies pattern codebooks, catalogs stopping sets, evaluates
//! the analytic outage models, runs Monte Carlo simulations and searches
//! maximum rates / spectral-efficiency curves.
//!
//! Unit convention: all SNR-like quantities cross this boundary in dB and
//! are converted to linear scale exactly once, here. The library is
//! linear-only.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gf_access::analytic::{
    marginalize_over_u, outage_collision, outage_collision_sic, outage_full_mrc,
    outage_full_mrc_gamma, pilot_bound, ChannelParams, SicContext,
};
use gf_access::codebook::{
    enumerate_stopping_sets, load_named, CodebookMode, PatternCodebook, StoppingSetCatalog,
};
use gf_access::combinatorics::ActivationLaw;
use gf_access::optimizer::{crossover_traffic, max_rate, CurvePoint};
use gf_access::simulator::{simulate, ReceiverModel, ReceiverSpec};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser, Debug, Serialize)]
#[command(name = "gfaccess", version, about)]
struct Cli {
    /// Worker pool size (default: available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SystemArg {
    /// Named bundled system (e.g. "S(2,4,25)") or a codebook file path;
    /// repeatable where a list is meaningful
    #[arg(long)]
    system: Vec<String>,
    /// Random slot selection with "M,K" (e.g. --random 25,4)
    #[arg(long, value_name = "M,K")]
    random: Option<String>,
    /// Population size N (default: C for Steiner systems; required for
    /// --random)
    #[arg(long)]
    users: Option<u64>,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Check all structural invariants of a codebook
    Verify {
        #[command(flatten)]
        system: SystemArg,
    },
    /// Enumerate stopping sets up to a given order (JSON catalog)
    StoppingSets {
        #[command(flatten)]
        system: SystemArg,
        /// Largest order to enumerate
        #[arg(long, default_value_t = 5)]
        n_max: u32,
        /// Abort after visiting this many candidate subsets
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Evaluate an analytic outage model over a parameter grid (CSV)
    Analyze {
        #[command(flatten)]
        system: SystemArg,
        /// Receiver model
        #[arg(long)]
        model: String,
        /// Per-repetition SNR grid in dB
        #[arg(long, value_delimiter = ',', required = true)]
        snr_db: Vec<f64>,
        /// Traffic intensity (bN) grid
        #[arg(long, value_delimiter = ',', required = true)]
        bn: Vec<f64>,
        /// Transmission rate (bits per channel use)
        #[arg(long)]
        rate: f64,
        /// Use the two-parameter gamma approximation of the interfered-slot
        /// SINR (full-MRC model only)
        #[arg(long)]
        approx_gamma: bool,
        /// Pilot pool size: report the pilot-collision outage lower bound
        #[arg(long)]
        pilots: Option<u32>,
    },
    /// Monte Carlo simulation of one configuration (JSON record)
    Simulate {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        model: String,
        /// Per-repetition SNR in dB
        #[arg(long)]
        snr_db: f64,
        /// Traffic intensity bN
        #[arg(long)]
        bn: f64,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 100_000)]
        frames: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Finite pilot pool size Q
        #[arg(long)]
        pilots: Option<u32>,
        /// Redraw the pilot per slot instead of per activation (experimental)
        #[arg(long)]
        pilot_per_slot: bool,
        /// Exact combiner SINR with complex weights
        #[arg(long)]
        correlated_mrc: bool,
    },
    /// Maximum-rate curves under a reliability target (CSV)
    Optimize {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        model: String,
        /// Reliability target epsilon_tar
        #[arg(long)]
        target: f64,
        /// Total SNR budget theta*K in dB (split evenly across repetitions)
        #[arg(long)]
        snr_per_rep_db: f64,
        /// Traffic intensity (bN) grid
        #[arg(long, value_delimiter = ',', required = true)]
        bn: Vec<f64>,
        /// Rate search tolerance in bits
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Also report the traffic intensity where orthogonal allocation
        /// overtakes the shared scheme
        #[arg(long)]
        crossover: bool,
    },
}

/// Reproducibility record echoed verbatim into every output.
#[derive(Debug, Serialize)]
struct RunManifest {
    subcommand: String,
    parameters: serde_json::Value,
    codebooks: Vec<String>,
    output: Option<String>,
    seed: Option<u64>,
    version: String,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Resolve one codebook: bundled name, file path, or --random M,K. An
/// explicit `name` overrides the --random shorthand.
fn resolve_codebook(spec: &SystemArg, name: Option<&str>) -> Result<(PatternCodebook, String)> {
    if let (Some(mk), None) = (&spec.random, name) {
        let (m, k) = mk
            .split_once(',')
            .ok_or_else(|| anyhow!("--random expects M,K (e.g. 25,4)"))?;
        let m: u32 = m.trim().parse().context("bad M in --random")?;
        let k: u32 = k.trim().parse().context("bad K in --random")?;
        return Ok((PatternCodebook::random(m, k), format!("Random({m},{k})")));
    }
    let name = match name {
        Some(n) => n,
        None => spec
            .system
            .first()
            .ok_or_else(|| anyhow!("one of --system or --random is required"))?,
    };
    if std::path::Path::new(name).is_file() {
        let source = std::fs::read_to_string(name)?;
        let cb = PatternCodebook::load(&source)?;
        Ok((cb, name.to_string()))
    } else {
        let cb = load_named(name)?;
        Ok((cb, name.to_string()))
    }
}

fn population(cb: &PatternCodebook, spec: &SystemArg) -> Result<u64> {
    match (spec.users, cb.mode) {
        (Some(n), _) => Ok(n),
        (None, CodebookMode::Steiner) => Ok(cb.size() as u64),
        (None, CodebookMode::Random) => {
            bail!("--users is required with --random (no natural population size)")
        }
    }
}

fn parse_model(s: &str) -> Result<ReceiverModel> {
    Ok(match s {
        "collision" => ReceiverModel::Collision,
        "collision-sic" => ReceiverModel::CollisionSic,
        "mrc" => ReceiverModel::FullMrc,
        "mrc-sic" => ReceiverModel::FullMrcSic,
        other => bail!("unknown model {other:?} (collision|collision-sic|mrc|mrc-sic)"),
    })
}

/// Marginalized analytic outage for one model at one grid point.
fn analytic_outage(
    model: ReceiverModel,
    cb: &PatternCodebook,
    sic_ctx: Option<&SicContext>,
    activation: &ActivationLaw,
    theta: f64,
    rate: f64,
    use_gamma: bool,
    tail_cut: f64,
) -> Result<f64> {
    let law = cb.law();
    let point = |u: u64| -> Result<f64> {
        let ch = ChannelParams::new(theta, rate);
        Ok(match model {
            ReceiverModel::Collision => outage_collision(ch, u, &law)?,
            ReceiverModel::CollisionSic => {
                let ctx = sic_ctx.ok_or_else(|| {
                    anyhow!("collision-sic analysis needs a Steiner stopping-set catalog")
                })?;
                outage_collision_sic(ch, u, &law, ctx)?
            }
            ReceiverModel::FullMrc => {
                if use_gamma {
                    outage_full_mrc_gamma(ch, u, &law)?
                } else {
                    outage_full_mrc(ch, u, &law)?
                }
            }
            ReceiverModel::FullMrcSic => {
                bail!("no analytic model for mrc-sic; use `gfaccess simulate`")
            }
        })
    };
    // surface errors from the first evaluation, then marginalize
    point(1)?;
    Ok(marginalize_over_u(
        |u| point(u).unwrap_or(1.0),
        activation,
        tail_cut,
    ))
}

/// Stopping-set context for the collision + SIC approximation: orders n' and
/// n' + 1 of the codebook's catalog.
fn sic_context(cb: &PatternCodebook) -> Result<SicContext> {
    if !cb.is_steiner() {
        bail!("collision-sic analysis needs a Steiner system");
    }
    let n0 = cb.stopping_order_bound();
    let mut counts = Vec::new();
    for n in [n0, n0 + 1] {
        let entry = enumerate_stopping_sets(cb, n, false, None)?;
        counts.push((n, entry.count));
    }
    Ok(SicContext::from_counts(&counts, cb.size() as u64))
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn manifest_of(cli: &Cli, codebooks: Vec<String>, seed: Option<u64>) -> RunManifest {
    let (subcommand, parameters) = match serde_json::to_value(&cli.command) {
        Ok(serde_json::Value::Object(map)) => {
            let (k, v) = map.into_iter().next().unwrap_or_default();
            (k, v)
        }
        _ => ("?".to_string(), serde_json::Value::Null),
    };
    RunManifest {
        subcommand,
        parameters,
        codebooks,
        output: cli.out.as_ref().map(|p| p.display().to_string()),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn csv_manifest_header(manifest: &RunManifest) -> String {
    format!("# manifest: {}\n", serde_json::to_string(manifest).unwrap())
}

fn cmd_verify(system: &SystemArg) -> Result<String> {
    // loading re-checks every structural invariant; reaching this point with
    // a Steiner codebook means the design is valid
    let (cb, name) = resolve_codebook(system, None)?;
    if !cb.is_steiner() {
        return Ok(format!("{name}: random selection — nothing to verify\n"));
    }
    Ok(format!(
        "{name}: S({},{},{}) C={} D={} OK\n",
        cb.t,
        cb.k,
        cb.m,
        cb.size(),
        cb.d
    ))
}

fn cmd_stopping_sets(
    cli: &Cli,
    system: &SystemArg,
    n_max: u32,
    budget: Option<u64>,
) -> Result<String> {
    let (cb, name) = resolve_codebook(system, None)?;
    if !cb.is_steiner() {
        bail!("stopping sets are defined for Steiner codebooks only");
    }
    let manifest = manifest_of(cli, vec![name.clone()], None);
    let mut catalog = StoppingSetCatalog::new(name);
    let n0 = cb.stopping_order_bound();
    for n in n0..=n_max.max(n0) {
        let entry = enumerate_stopping_sets(&cb, n, false, budget)?;
        catalog.entries.insert(entry.n, entry);
    }
    #[derive(Serialize)]
    struct Output<'a> {
        manifest: &'a RunManifest,
        catalog: &'a StoppingSetCatalog,
    }
    Ok(serde_json::to_string_pretty(&Output {
        manifest: &manifest,
        catalog: &catalog,
    })? + "\n")
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    cli: &Cli,
    system: &SystemArg,
    model_name: &str,
    snr_db: &[f64],
    bn: &[f64],
    rate: f64,
    approx_gamma: bool,
    pilots: Option<u32>,
) -> Result<String> {
    let model = parse_model(model_name)?;
    let (cb, name) = resolve_codebook(system, None)?;
    let n_users = population(&cb, system)?;
    let sic_ctx = if model == ReceiverModel::CollisionSic {
        Some(sic_context(&cb)?)
    } else {
        None
    };
    let manifest = manifest_of(cli, vec![name.clone()], None);
    let mut csv = csv_manifest_header(&manifest);
    csv.push_str("system,model,bN,theta_db,rate,outage\n");
    for &bn_val in bn {
        let activation = ActivationLaw::new(n_users, bn_val / n_users as f64);
        for &db in snr_db {
            let theta = db_to_linear(db);
            let value = match pilots {
                Some(q) => {
                    let ch = ChannelParams::new(theta, rate);
                    let law = cb.law();
                    marginalize_over_u(|u| pilot_bound(ch, u, q, &law), &activation, 1e-9)
                }
                None => analytic_outage(
                    model,
                    &cb,
                    sic_ctx.as_ref(),
                    &activation,
                    theta,
                    rate,
                    approx_gamma,
                    1e-9,
                )?,
            };
            writeln!(csv, "{name},{model_name},{bn_val},{db},{rate},{value:.10e}").unwrap();
        }
    }
    Ok(csv)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cli: &Cli,
    system: &SystemArg,
    model_name: &str,
    snr_db: f64,
    bn: f64,
    rate: f64,
    frames: u64,
    seed: u64,
    pilots: Option<u32>,
    pilot_per_slot: bool,
    correlated_mrc: bool,
) -> Result<String> {
    let model = parse_model(model_name)?;
    let (cb, name) = resolve_codebook(system, None)?;
    let n_users = population(&cb, system)?;
    let activation = ActivationLaw::new(n_users, bn / n_users as f64);
    let spec = ReceiverSpec {
        model,
        pilots,
        pilot_per_slot,
        correlated_mrc,
    };
    let manifest = manifest_of(cli, vec![name.clone()], Some(seed));
    let start = Instant::now();
    let estimate = simulate(
        &cb,
        &activation,
        db_to_linear(snr_db),
        rate,
        &spec,
        frames,
        seed,
    );
    #[derive(Serialize)]
    struct Output<'a> {
        manifest: &'a RunManifest,
        estimate: &'a gf_access::simulator::OutageEstimate,
        wall_time_s: f64,
    }
    Ok(serde_json::to_string_pretty(&Output {
        manifest: &manifest,
        estimate: &estimate,
        wall_time_s: start.elapsed().as_secs_f64(),
    })? + "\n")
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    cli: &Cli,
    system: &SystemArg,
    model_name: &str,
    target: f64,
    snr_per_rep_db: f64,
    bn: &[f64],
    tolerance: f64,
    crossover: bool,
) -> Result<String> {
    if bn.is_empty() {
        bail!("--bn grid must not be empty");
    }
    let model = parse_model(model_name)?;
    let mut resolved = Vec::new();
    for sys_name in &system.system {
        resolved.push(resolve_codebook(system, Some(sys_name))?);
    }
    if system.random.is_some() {
        resolved.push(resolve_codebook(system, None)?);
    }
    if resolved.is_empty() {
        bail!("one of --system or --random is required");
    }
    let manifest = manifest_of(cli, resolved.iter().map(|(_, n)| n.clone()).collect(), None);
    let mut csv = csv_manifest_header(&manifest);
    csv.push_str("system,model,bN,theta_db,R_star,spectral_eff,feasible\n");
    let mut notes = String::new();
    for (cb, name) in &resolved {
        let n_users = population(&cb, system)?;
        let k = cb.k;
        // theta*K budget split evenly across the K repetitions
        let theta = db_to_linear(snr_per_rep_db) / k as f64;
        let theta_db = linear_to_db(theta);
        let sic_ctx = if model == ReceiverModel::CollisionSic {
            Some(sic_context(&cb)?)
        } else {
            None
        };
        let mut curve = Vec::new();
        let mut prev_r = f64::INFINITY;
        for &bn_val in bn {
            let activation = ActivationLaw::new(n_users, bn_val / n_users as f64);
            let outage_fn = |r: f64| {
                analytic_outage(
                    model,
                    &cb,
                    sic_ctx.as_ref(),
                    &activation,
                    theta,
                    r,
                    false,
                    target * 1e-3,
                )
                .unwrap_or(1.0)
            };
            let sol = max_rate(outage_fn, &activation, k, cb.m, theta, target, tolerance);
            // sanity: R* must be non-increasing along a sorted traffic grid
            if sol.r_star > prev_r + tolerance {
                bail!("R*({bn_val}) increased along the traffic grid");
            }
            prev_r = sol.r_star;
            curve.push(CurvePoint {
                bn: bn_val,
                r_star: sol.r_star,
            });
            writeln!(
                csv,
                "{},{},{},{:.6},{:.6},{:.8},{}",
                name,
                model_name,
                bn_val,
                theta_db,
                sol.r_star,
                sol.spectral_efficiency,
                sol.feasible
            )
            .unwrap();
        }
        if crossover {
            match crossover_traffic(&curve, k, theta, target, cb.m, cb.size() as u64) {
                Ok(x) => writeln!(notes, "# crossover {name}: bN = {x:.4}").unwrap(),
                Err(e) => writeln!(notes, "# crossover {name}: {e}").unwrap(),
            }
        }
    }
    csv.push_str(&notes);
    Ok(csv)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("worker pool already initialized")?;
    }
    let output = match &cli.command {
        Command::Verify { system } => cmd_verify(system)?,
        Command::StoppingSets {
            system,
            n_max,
            budget,
        } => cmd_stopping_sets(&cli, system, *n_max, *budget)?,
        Command::Analyze {
            system,
            model,
            snr_db,
            bn,
            rate,
            approx_gamma,
            pilots,
        } => cmd_analyze(
            &cli,
            system,
            model,
            snr_db,
            bn,
            *rate,
            *approx_gamma,
            *pilots,
        )?,
        Command::Simulate {
            system,
            model,
            snr_db,
            bn,
            rate,
            frames,
            seed,
            pilots,
            pilot_per_slot,
            correlated_mrc,
        } => cmd_simulate(
            &cli,
            system,
            model,
            *snr_db,
            *bn,
            *rate,
            *frames,
            *seed,
            *pilots,
            *pilot_per_slot,
            *correlated_mrc,
        )?,
        Command::Optimize {
            system,
            model,
            target,
            snr_per_rep_db,
            bn,
            tolerance,
            crossover,
        } => cmd_optimize(
            &cli,
            system,
            model,
            *target,
            *snr_per_rep_db,
            bn,
            *tolerance,
            *crossover,
        )?,
    };
    write_output(&cli.out, &output)
}
