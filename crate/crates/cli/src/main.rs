//! `rab`: command-line front-end for the rab-core library.
//!
//! Subcommands compute closed-form service rates, sweep two-source region
//! boundaries, optimize stability/throughput bounds for larger networks,
//! run seeded slot-level simulations, and recompute bundled reference
//! results. Every run writes CSV artifacts plus a JSON manifest that pins
//! the inputs needed to reproduce them byte-identically.

mod config;
mod output;
mod reproduce;

use clap::{Parser, Subcommand, ValueEnum};
use rab_core::channel::Channel;
use rab_core::rates::{service_rates_2x2, service_rates_collision, ServiceRates};
use rab_core::regions::{
    boundary_2src, classify_region_shape, max_lambda1_2src, optimize_lambda_n, BoundObjective,
    SolverSettings,
};
use rab_core::sim::{run, SimConfig};
use std::path::PathBuf;
use std::process::ExitCode;

use config::{load, BoundsConfig, RatesConfig, Region2Config};
use output::{csv_document, version_string, write_file, write_manifest, RunManifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad flag value, unreadable/unwritable path. Exit code 2.
    Invalid(String),
    /// A reproduce target deviated from the bundled reference. Exit code 1.
    Mismatch(String),
}

impl From<rab_core::Error> for CliError {
    fn from(e: rab_core::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "rab", version, about = "Rate regions and simulation for slotted random-access broadcast")]
struct Cli {
    /// Directory for CSV artifacts and run manifests.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in a simulation config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of swept grid points.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Overrides the simulation horizon in slots.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// Worker threads for the sweeps (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form backlogged/empty service rates at one policy.
    Rates {
        #[arg(long)]
        config: PathBuf,
    },
    /// Two-source region boundary sweep (stability-exact or throughput).
    Region2 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Stability-upper/lower and throughput optima for fixed-rate rows.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Seeded slot-level simulation with stability verdicts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute a bundled reference artifact and diff against it.
    Reproduce { target: ReproduceTarget },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReproduceTarget {
    /// Four-source optimized-rate table.
    Table2,
    /// Five- and ten-source optimized-rate table.
    Table3,
    /// Two-source boundaries for the two reference channels.
    Fig3,
    /// Nested throughput boundaries for 2/5/15 destinations.
    Fig4,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        // ignore failure: the pool may already be initialized in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Mismatch(msg)) => {
            eprintln!("reproduce mismatch: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Rates { config } => cmd_rates(cli, config),
        Cmd::Region2 { config } => cmd_region2(cli, config),
        Cmd::Bounds { config } => cmd_bounds(cli, config),
        Cmd::Simulate { config } => cmd_simulate(cli, config),
        Cmd::Reproduce { target } => reproduce::cmd_reproduce(cli, *target),
    }
}

fn manifest(cli: &Cli, sub: &str, config: Option<&PathBuf>, solver: &SolverSettings, outputs: Vec<String>) -> RunManifest {
    RunManifest {
        subcommand: sub.to_string(),
        config: config.map(|p| p.display().to_string()),
        out_dir: cli.out.display().to_string(),
        seed: cli.seed,
        grid: cli.grid,
        horizon: cli.horizon,
        jobs: cli.jobs,
        solver: solver.clone(),
        version: version_string(),
        outputs,
    }
}

fn channel_rates(channel: &Channel, p: &[f64]) -> Result<ServiceRates, CliError> {
    let channel = channel.clone().validated()?;
    let policy = rab_core::channel::TransmitPolicy(p.to_vec());
    let mu = match &channel {
        Channel::Mpr2x2(c) => service_rates_2x2(c, &policy)?,
        Channel::Collision(c) => service_rates_collision(c, &policy)?,
    };
    Ok(mu)
}

fn cmd_rates(cli: &Cli, path: &PathBuf) -> Result<(), CliError> {
    let cfg: RatesConfig = load(path)?;
    let mu = channel_rates(&cfg.channel, &cfg.p)?;
    let meta = vec![
        format!("rab rates ({})", version_string()),
        format!("channel: {}", serde_json::to_string(&cfg.channel).unwrap()),
        format!("p: {:?}", cfg.p),
    ];
    let rows: Vec<String> = (0..cfg.p.len())
        .map(|n| format!("{n},{:.12},{:.12}", mu.mu_b[n], mu.mu_e[n]))
        .collect();
    let doc = csv_document(&meta, "source,mu_backlogged,mu_empty", &rows);
    write_file(&cli.out, "rates.csv", &doc)?;
    let m = manifest(cli, "rates", Some(path), &SolverSettings::default(), vec!["rates.csv".into()]);
    write_manifest(&cli.out, "rates.manifest.json", &m)
}

fn cmd_region2(cli: &Cli, path: &PathBuf) -> Result<(), CliError> {
    let cfg: Region2Config = load(path)?;
    let solver = cfg.solver.clone().unwrap_or_default();
    let points = cli.grid.or(cfg.grid_points).unwrap_or(50);
    if points < 1 {
        return Err(CliError::Invalid("grid must be at least 1".into()));
    }
    let lmax = match cfg.lambda1_max {
        Some(v) if v >= 0.0 => v,
        Some(v) => return Err(CliError::Invalid(format!("lambda1_max = {v} is negative"))),
        None => 0.999 * max_lambda1_2src(&cfg.channel, &solver)?,
    };
    let grid: Vec<f64> = if points == 1 {
        vec![lmax]
    } else {
        (0..points)
            .map(|i| i as f64 * lmax / (points - 1) as f64)
            .collect()
    };
    let b = boundary_2src(&cfg.channel, cfg.kind.to_kind(), &grid, &solver)?;
    let shape = classify_region_shape(&b, 1e-3);
    let meta = vec![
        format!("rab region2 ({})", version_string()),
        format!("channel: {}", serde_json::to_string(&cfg.channel).unwrap()),
        format!("kind: {}", b.kind.as_str()),
        format!("grid points: {points}, lambda1 max: {lmax:.6}"),
        format!("policies excluded by the mu_b <= mu_e hypothesis: {}", b.excluded_hypothesis),
        format!("boundary shape: {shape:?}"),
    ];
    let rows: Vec<String> = b
        .points
        .iter()
        .map(|pt| {
            format!(
                "{:.12},{:.12},{:.9},{:.9},{}",
                pt.lambda[0], pt.lambda[1], pt.p_opt[0], pt.p_opt[1], pt.feasible
            )
        })
        .collect();
    let doc = csv_document(&meta, "lambda1,lambda2,p1_opt,p2_opt,feasible", &rows);
    write_file(&cli.out, "region2.csv", &doc)?;
    let m = manifest(cli, "region2", Some(path), &solver, vec!["region2.csv".into()]);
    write_manifest(&cli.out, "region2.manifest.json", &m)
}

fn cmd_bounds(cli: &Cli, path: &PathBuf) -> Result<(), CliError> {
    let cfg: BoundsConfig = load(path)?;
    let solver = cfg.solver.clone().unwrap_or_default();
    let n = cfg.channel.n_sources;
    let mut rows = Vec::new();
    for (i, fixed) in cfg.rows.iter().enumerate() {
        if fixed.len() != n - 1 {
            return Err(CliError::Invalid(format!(
                "row {i}: expected {} fixed rates for {n} sources, got {}",
                n - 1,
                fixed.len()
            )));
        }
        let u = optimize_lambda_n(&cfg.channel, fixed, BoundObjective::StabilityUpper, &solver)?;
        let l = optimize_lambda_n(&cfg.channel, fixed, BoundObjective::StabilityLower, &solver)?;
        let t = optimize_lambda_n(&cfg.channel, fixed, BoundObjective::Throughput, &solver)?;
        let fixed_str = fixed
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        rows.push(format!(
            "{i},{fixed_str},{:.6},{:.6},{:.6}",
            u.lambda[n - 1],
            l.lambda[n - 1],
            t.lambda[n - 1]
        ));
    }
    let meta = vec![
        format!("rab bounds ({})", version_string()),
        format!("channel: {}", serde_json::to_string(&cfg.channel).unwrap()),
        "lambda_N maximized per row with lambda_1..lambda_N-1 fixed".to_string(),
    ];
    let doc = csv_document(
        &meta,
        "row,fixed,stability_upper,stability_lower,throughput",
        &rows,
    );
    write_file(&cli.out, "bounds.csv", &doc)?;
    let m = manifest(cli, "bounds", Some(path), &solver, vec!["bounds.csv".into()]);
    write_manifest(&cli.out, "bounds.manifest.json", &m)
}

fn cmd_simulate(cli: &Cli, path: &PathBuf) -> Result<(), CliError> {
    let mut cfg: SimConfig = load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(h) = cli.horizon {
        cfg.horizon = h;
    }
    let res = run(&cfg)?;
    let n = cfg.p.0.len();
    let meta = vec![
        format!("rab simulate ({})", version_string()),
        format!("channel: {}", serde_json::to_string(&cfg.channel).unwrap()),
        format!(
            "seed: {}, horizon: {}, warmup: {}, dominant_k: {}",
            cfg.seed,
            cfg.horizon,
            cfg.warmup_slots(),
            cfg.dominant_k
        ),
        format!("measured slots: {}", res.measured_slots),
    ];
    let rows: Vec<String> = (0..n)
        .map(|s| {
            format!(
                "{s},{},{},{:.9},{:.6},{},{:.6e},{}",
                cfg.lambda.0[s],
                cfg.p.0[s],
                res.empirical_mu[s],
                res.mean_queue[s],
                res.max_queue[s],
                res.drift_slope[s],
                res.verdict[s].as_str()
            )
        })
        .collect();
    let doc = csv_document(
        &meta,
        "source,lambda,p,empirical_mu,mean_queue,max_queue,drift_slope,verdict",
        &rows,
    );
    write_file(&cli.out, "simulate.csv", &doc)?;
    let mut outputs = vec!["simulate.csv".into()];

    if let Some(traces) = &res.queue_trace {
        let stride = traces[0].stride;
        let warmup = cfg.warmup_slots();
        let len = traces.iter().map(|t| t.samples.len()).min().unwrap_or(0);
        let header = {
            let mut h = String::from("slot");
            for s in 0..n {
                h.push_str(&format!(",q{}", s + 1));
            }
            h
        };
        let rows: Vec<String> = (0..len)
            .map(|i| {
                let mut r = format!("{}", warmup + i as u64 * stride);
                for t in traces {
                    r.push_str(&format!(",{}", t.samples[i]));
                }
                r
            })
            .collect();
        let doc = csv_document(
            &[format!("rab simulate trace (stride {stride})")],
            &header,
            &rows,
        );
        write_file(&cli.out, "trace.csv", &doc)?;
        outputs.push("trace.csv".into());
    }
    let m = manifest(cli, "simulate", Some(path), &SolverSettings::default(), outputs);
    write_manifest(&cli.out, "simulate.manifest.json", &m)
}
