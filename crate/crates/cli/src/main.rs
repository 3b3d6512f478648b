mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use synthtx::cmmd::{clamp_cmmd, cmmd_components_batch, cmmd_value};
use synthtx::data::load_dataset;
use synthtx::estimator::{Method, Problem, WeightModel};
use synthtx::points::Points;
use synthtx::simulation::{monte_carlo, replicate_study};

use crate::config::{Overrides, RunConfig};
use crate::output::{write_csv, Report};

#[derive(Parser)]
#[command(name = "synthtx", version, about = "Synthetic treatment group estimation from multiple source populations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a previous report.txt to re-run its embedded config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input CSV (overrides `input` in the config).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// sieve, point_constrained, point_unconstrained, uniform or pool.
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Monte Carlo at n = 4000 per group and 100 replicates.
    #[arg(long, global = true)]
    paper_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate θ and the effect on the target population; writes report.txt.
    Estimate,
    /// Weight and CMMD curves on a grid; writes weights.csv and cmmd.csv.
    Curves,
    /// Draw one simulated study; writes dataset.csv and truth.txt.
    Simulate,
    /// Monte Carlo study; writes mre_table.csv, coverage_table.csv and replicates.csv.
    Mc,
    /// Check an input file without estimating.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `SYNTHTX_THREADS` caps both the rayon pool and faer's kernels.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SYNTHTX_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| anyhow!("SYNTHTX_THREADS must be a positive integer, got '{raw}'"))?;
    if n == 0 {
        bail!("SYNTHTX_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    faer::set_global_parallelism(if n == 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = cli.common;
    let base = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        input: c.input,
        method: c.method,
        alpha: c.alpha,
        seed: c.seed,
        out_dir: c.out_dir,
        paper_scale: c.paper_scale,
    };
    let cfg = base.resolve(&overrides)?;
    match cli.command {
        Command::Estimate => estimate(&cfg),
        Command::Curves => curves(&cfg),
        Command::Simulate => simulate(&cfg),
        Command::Mc => mc(&cfg),
        Command::Validate => validate(&cfg),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&std::path::Path> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let (data, record) = load_dataset(cfg.input()?, &cfg.load_options())?;
    data.validate_for_estimation()?;
    println!("rows {}", record.rows);
    println!("covariate_dim {}", data.dim());
    println!("n_sources {}", data.n_sources());
    for pop in 0..=data.n_sources() {
        println!("pop {pop} control {} treated {}", data.count(pop, 0), data.count(pop, 1));
    }
    Ok(())
}

fn estimate(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let mut report = Report::new(cfg)?;
    let outcome = (|| -> Result<()> {
        let (data, record) = load_dataset(cfg.input()?, &cfg.load_options())?;
        report.load_record(&record);
        let problem = Problem::new(&data, cfg.estimator()?)?;
        let est = problem.estimate(cfg.method()?)?;
        report.estimate(&est);
        println!("{} theta_hat {} ate_hat {}", est.method, est.theta_hat, est.ate_hat);
        if let Some(ci) = &est.ci {
            println!("ci{} [{}, {}]", ci.level, ci.lo, ci.hi);
        }
        Ok(())
    })();
    if let Err(e) = &outcome {
        report.error(&format!("{e:#}"));
    }
    report.write(&dir.join("report.txt"))?;
    outcome
}

fn curves(cfg: &RunConfig) -> Result<()> {
    let (data, _) = load_dataset(cfg.input()?, &cfg.load_options())?;
    if data.dim() != 1 {
        bail!("curves need a one-dimensional covariate (got dimension {})", data.dim());
    }
    let problem = Problem::new(&data, cfg.estimator()?)?;
    let tx = problem.target_x().first_coordinate();
    let lo = cfg.curves.lo.unwrap_or_else(|| tx.iter().copied().fold(f64::INFINITY, f64::min));
    let hi = cfg.curves.hi.unwrap_or_else(|| tx.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let steps = cfg.curves.steps;
    if !(lo < hi) || steps < 2 {
        bail!("curve grid needs lo < hi and at least 2 steps (got {lo}, {hi}, {steps})");
    }
    let grid: Vec<f64> = (0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect();
    let emb = problem.embeddings()?;
    let comps = cmmd_components_batch(&emb.sources, &emb.target, &Points::from_scalars(&grid))?;
    let WeightModel::Sieve(sieve) = problem.fit_weights(Method::Sieve)? else {
        bail!("sieve weights are unavailable");
    };
    let sieve_w: Vec<Vec<f64>> = grid.iter().map(|&x| sieve.eval_weights(x)).collect();
    let point_c = problem.pointwise_at(&comps, true)?;
    let point_u = problem.pointwise_at(&comps, false)?;
    let n = problem.n_sources();
    let uniform = vec![vec![1.0 / n as f64; n]; grid.len()];

    let dir = out_dir(cfg)?;
    let mut header = vec!["method".to_string(), "x".to_string()];
    header.extend((1..=n).map(|i| format!("w_{i}")));
    let mut rows = Vec::new();
    for (method, ws) in [
        (Method::Sieve, &sieve_w),
        (Method::PointConstrained, &point_c),
        (Method::PointUnconstrained, &point_u),
        (Method::Uniform, &uniform),
    ] {
        for (x, w) in grid.iter().zip(ws.iter()) {
            let mut row = vec![method.to_string(), output::float(*x)];
            row.extend(w.iter().map(|v| output::float(*v)));
            rows.push(row);
        }
    }
    write_csv(&dir.join("weights.csv"), &header, &rows)?;

    let mut rows = Vec::new();
    for (k, x) in grid.iter().enumerate() {
        let d = |w: &[f64]| -> Result<String> { Ok(output::float(clamp_cmmd(cmmd_value(&comps[k], w)?)?)) };
        rows.push(vec![output::float(*x), d(&sieve_w[k])?, d(&point_c[k])?, d(&uniform[k])?]);
    }
    write_csv(&dir.join("cmmd.csv"), &["x", "d_sieve", "d_point", "d_uniform"].map(String::from), &rows)?;
    println!("wrote {} grid points to {}", grid.len(), dir.display());
    Ok(())
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let mc = cfg.monte_carlo()?;
    // the same study replicate 0 of `mc` would analyse
    let study = replicate_study(&mc, 0)?;
    let dir = out_dir(cfg)?;
    let file = std::fs::File::create(dir.join("dataset.csv"))?;
    study.dataset.write_csv(std::io::BufWriter::new(file))?;
    let mut report = Report::new(cfg)?;
    report.truth(&study);
    report.write(&dir.join("truth.txt"))?;
    println!("true_theta {}", study.true_theta);
    Ok(())
}

fn mc(cfg: &RunConfig) -> Result<()> {
    let mc = cfg.monte_carlo()?;
    let out = monte_carlo(&mc)?;
    let dir = out_dir(cfg)?;
    output::write_mc(dir, &mc, &out)?;
    let mut report = Report::new(cfg)?;
    report.mc(&out);
    report.write(&dir.join("report.txt"))?;
    for row in &out.mre_table {
        match row.summary {
            Some(s) => println!("{} mre {:.4} sd {:.4} failures {}", row.method, s.mre, s.sd, row.failures),
            None => println!("{} mre unavailable failures {}", row.method, row.failures),
        }
    }
    for row in &out.coverage_table {
        println!("{} coverage@{} {:?}", row.method, row.level, row.coverage);
    }
    Ok(())
}
