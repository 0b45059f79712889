//! Command-line interface: constants tables, theorem verification runs,
//! crossing-record dumps and variation-series sweeps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fbmbt::crossing::{local_time_estimate, simulate_coupled, simulate_walk, CoupledOptions};
use fbmbt::experiment::{
    report, run, ExperimentConfig, OutputFormat, RunMode, TheoremPart,
};
use fbmbt::gaussian::Hurst;
use fbmbt::hermite::limit_constants;
use fbmbt::rng::{stream_rng, DOMAIN_WALK};
use fbmbt::variation::{
    hermite_variation, raw_variation, raw_variation_uncentered, weighted_variation,
    StatisticKind, Weight,
};
use fbmbt::Error;

#[derive(Parser)]
#[command(
    name = "fbmbt",
    about = "Simulation and Monte Carlo verification toolkit for fractional Brownian motion in Brownian time",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the limit constants (mu, kappa, b, alpha, beta, gamma) for (H, r).
    Constants(ConstantsArgs),
    /// Run a Monte Carlo verification experiment.
    Verify(VerifyArgs),
    /// Simulate one crossing record and dump it as JSON.
    Crossings(CrossingsArgs),
    /// Emit per-replication variation statistics as CSV.
    Variation(VariationArgs),
}

#[derive(Args)]
struct ConstantsArgs {
    #[arg(long)]
    hurst: f64,
    #[arg(long)]
    r: u32,
    /// Output format: text (aligned) or csv.
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Theorem part: p1|p1c|p2|p3|p4|identities|constants.
    #[arg(long)]
    part: String,
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = 1)]
    r: u32,
    /// Weight function name: one|cos|rational.
    #[arg(long, default_value = "one")]
    f: String,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Comma-separated dyadic levels.
    #[arg(long, value_delimiter = ',', default_value = "8,10,12,14,16")]
    levels: Vec<u32>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inner-process mode: walk|coupled.
    #[arg(long, default_value = "walk")]
    mode: String,
    /// Output directory for values.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout format: csv|json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Span multiplier for the outer-process grid (>= 4).
    #[arg(long, default_value_t = 6.0)]
    span_mult: f64,
}

#[derive(Args)]
struct CrossingsArgs {
    #[arg(long)]
    level: u32,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// walk|coupled.
    #[arg(long, default_value = "walk")]
    mode: String,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VariationArgs {
    /// Statistic: v (stopped), w (hermite), s (raw centered), r (raw).
    #[arg(long, default_value = "v")]
    stat: String,
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = 2)]
    r: u32,
    #[arg(long, default_value = "one")]
    f: String,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,10,12")]
    levels: Vec<u32>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Normalization exponent for the raw statistic.
    #[arg(long, default_value_t = 0.0)]
    kappa_exp: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(threads) = std::env::var("FBMBT_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .ok();
        }
    }

    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(pass) => {
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> fbmbt::Result<bool> {
    match cli.command {
        Command::Constants(args) => run_constants(args),
        Command::Verify(args) => run_verify(args),
        Command::Crossings(args) => run_crossings(args),
        Command::Variation(args) => run_variation(args),
    }
}

fn run_constants(args: ConstantsArgs) -> fbmbt::Result<bool> {
    let hurst = Hurst::new(args.hurst)?;
    let c = limit_constants(hurst, args.r)?;
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "divergent".to_string(), |x| x.to_string());
    match args.format.as_str() {
        "csv" => {
            println!("quantity,index,value");
            for (p, v) in c.mu.iter().enumerate() {
                println!("mu,{p},{v}");
            }
            for (i, v) in c.kappa.iter().enumerate() {
                println!("kappa,{},{v}", i + 1);
            }
            for (a, v) in c.b.iter().enumerate() {
                println!("b,{},{v}", a + 1);
            }
            for (m, v) in c.alpha.iter().enumerate() {
                println!("alpha,{},{}", m + 1, fmt_opt(*v));
            }
            println!("beta,{},{}", 2 * args.r - 1, fmt_opt(c.beta_odd));
            println!("gamma,{},{}", 2 * args.r, fmt_opt(c.gamma_even));
        }
        "text" => {
            println!("limit constants at H = {}, r = {}", args.hurst, args.r);
            println!("{:<10} {:>5} {:>24}", "quantity", "index", "value");
            for (p, v) in c.mu.iter().enumerate() {
                println!("{:<10} {:>5} {:>24}", "mu", p, v);
            }
            for (i, v) in c.kappa.iter().enumerate() {
                println!("{:<10} {:>5} {:>24}", "kappa", i + 1, v);
            }
            for (a, v) in c.b.iter().enumerate() {
                println!("{:<10} {:>5} {:>24}", "b", a + 1, v);
            }
            for (m, v) in c.alpha.iter().enumerate() {
                println!("{:<10} {:>5} {:>24}", "alpha", m + 1, fmt_opt(*v));
            }
            println!("{:<10} {:>5} {:>24}", "beta", 2 * args.r - 1, fmt_opt(c.beta_odd));
            println!("{:<10} {:>5} {:>24}", "gamma", 2 * args.r, fmt_opt(c.gamma_even));
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown constants format `{other}`; expected text|csv"
            )))
        }
    }
    Ok(true)
}

fn run_verify(args: VerifyArgs) -> fbmbt::Result<bool> {
    let config = ExperimentConfig {
        part: TheoremPart::from_name(&args.part)?,
        hurst: args.hurst,
        r: args.r,
        weight: Weight::from_name(&args.f)?,
        horizon: args.t,
        levels: args.levels,
        replications: args.reps,
        master_seed: args.seed,
        mode: RunMode::from_name(&args.mode)?,
        span_multiplier: args.span_mult,
        output: args.out.clone(),
        format: OutputFormat::from_name(&args.format)?,
    };
    let result = run(&config)?;

    if let Some(dir) = &config.output {
        let (csv, json) = report(&result, dir)?;
        eprintln!("wrote {} and {}", csv.display(), json.display());
    }

    match config.format {
        OutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&result).expect("serializable"));
        }
        OutputFormat::Csv => {
            if let Some(c) = &result.constants {
                println!("{}", serde_json::to_string_pretty(c).expect("serializable"));
            } else if let Some(gap) = result.identity_max_relative_gap {
                println!("max_relative_identity_gap,{gap}");
            } else {
                println!("n,mean,var,var_ci_lo,var_ci_hi,target,mse,correlation,ks_p");
                for s in &result.summary {
                    println!(
                        "{},{},{},{},{},{},{},{},{}",
                        s.n,
                        s.mean,
                        s.var,
                        s.var_ci.0,
                        s.var_ci.1,
                        s.target.map_or(String::new(), |v| v.to_string()),
                        s.mse.map_or(String::new(), |v| v.to_string()),
                        s.correlation.map_or(String::new(), |v| v.to_string()),
                        s.ks_p.map_or(String::new(), |v| v.to_string()),
                    );
                }
            }
        }
    }
    eprintln!(
        "part {} finished in {:.1}s: {}",
        config.part,
        result.runtime_seconds,
        if result.pass { "pass" } else { "tolerance fail" }
    );
    Ok(result.pass)
}

fn run_crossings(args: CrossingsArgs) -> fbmbt::Result<bool> {
    let mut rng = stream_rng(args.seed, DOMAIN_WALK, 0);
    let record = match args.mode.as_str() {
        "walk" => simulate_walk(args.level, args.t, &mut rng)?,
        "coupled" => simulate_coupled(
            args.level,
            args.t,
            args.level + 6,
            &mut rng,
            CoupledOptions::default(),
        )?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown mode `{other}`; expected walk|coupled"
            )))
        }
    };
    record.check_integrity()?;
    let lt = local_time_estimate(&record);

    #[derive(serde::Serialize)]
    struct CountRow {
        j: i64,
        #[serde(rename = "U")]
        up: u64,
        #[serde(rename = "D")]
        down: u64,
    }
    #[derive(serde::Serialize)]
    struct LocalTimeRow {
        j: i64,
        value: f64,
    }
    #[derive(serde::Serialize)]
    struct Dump {
        n: u32,
        t: f64,
        j_star: i64,
        counts: Vec<CountRow>,
        local_time: Vec<LocalTimeRow>,
    }

    let mut cells: std::collections::BTreeSet<i64> = record.up_counts().keys().copied().collect();
    cells.extend(record.down_counts().keys());
    let dump = Dump {
        n: record.level(),
        t: record.horizon(),
        j_star: record.j_star(),
        counts: cells
            .iter()
            .map(|&j| CountRow {
                j,
                up: record.up(j),
                down: record.down(j),
            })
            .collect(),
        local_time: lt
            .values()
            .iter()
            .map(|(&j, &value)| LocalTimeRow { j, value })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&dump).expect("serializable dump");
    match args.out {
        Some(path) => std::fs::write(&path, json + "\n")
            .map_err(|e| Error::io(path.display().to_string(), e))?,
        None => println!("{json}"),
    }
    Ok(true)
}

fn run_variation(args: VariationArgs) -> fbmbt::Result<bool> {
    let kind = StatisticKind::from_name(&args.stat)?;
    let weight = Weight::from_name(&args.f)?;
    let hurst = Hurst::new(args.hurst)?;
    let mode = match kind {
        StatisticKind::Raw | StatisticKind::RawUncentered => RunMode::PathCoupled,
        _ => RunMode::WalkOnly,
    };

    let mut out = String::from("statistic,H,r,f,n,replication,value\n");
    for &level in &args.levels {
        for rep in 0..args.reps as u64 {
            let replication = fbmbt::experiment::prepare_replication(
                args.seed, rep, hurst, level, args.t, 6.0, mode,
            )?;
            let value = match kind {
                StatisticKind::Stopped => {
                    weighted_variation(&replication.grid, &replication.record, weight, args.r, args.t)?
                }
                StatisticKind::Hermite => {
                    hermite_variation(&replication.grid, weight, 2 * args.r - 1, args.t)?
                }
                StatisticKind::Raw => raw_variation(
                    &replication.grid,
                    &replication.record,
                    weight,
                    args.r,
                    args.kappa_exp,
                    args.t,
                )?,
                StatisticKind::RawUncentered => raw_variation_uncentered(
                    &replication.grid,
                    &replication.record,
                    weight,
                    args.r,
                    args.t,
                )?,
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                kind.name(),
                args.hurst,
                args.r,
                weight.name(),
                level,
                rep,
                value
            ));
        }
    }
    match args.out {
        Some(path) => {
            std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?
        }
        None => print!("{out}"),
    }
    Ok(true)
}
