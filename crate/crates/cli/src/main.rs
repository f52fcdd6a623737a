// Comparisons written as !(x > 0) are deliberate NaN guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Run};
use ggamma_core::covering::{build_covering_sequence, classify_z, Zone};
use ggamma_core::discrete::{discrete_hardy_bruteforce, discrete_hardy_d, RealSeq};
use ggamma_core::functionals::{Functionals, ParamTriple};
use ggamma_core::grids::build_grid;
use ggamma_core::oracle::estimate_c;
use ggamma_core::report::{embedding_constant_bounds, EmbeddingReport, WitnessDump};

#[derive(Parser)]
#[command(
    name = "ggamma",
    about = "Embedding constants between generalized weighted Lorentz spaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOverrides {
    /// Outer grid size.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Grid spacing: linear | logarithmic | hybrid.
    #[arg(long)]
    grid_mode: Option<String>,
    /// Relative tolerance of supremum refinement.
    #[arg(long)]
    esup_tol: Option<f64>,
    /// Relative tolerance of adaptive quadrature.
    #[arg(long)]
    quad_tol: Option<f64>,
    /// Covering-sequence ratio.
    #[arg(long)]
    a: Option<f64>,
    /// Oracle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a template configuration file.
    Init {
        /// Destination path.
        #[arg(default_value = "ggamma.toml")]
        path: PathBuf,
    },
    /// Run the full pipeline for one configuration and write a JSON report.
    EmbedCheck {
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Run several configurations and write a CSV summary.
    Suite {
        configs: Vec<PathBuf>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Dump the covering sequence of phi as CSV.
    Covering {
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Discrete Hardy constant for sequences read from CSV (columns a,b).
    HardyDiscrete {
        csv: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        r: f64,
        /// Brute-force restarts.
        #[arg(long, default_value_t = 32)]
        trials: usize,
    },
    /// Brute-force estimate of the optimal constant with its witness.
    Oracle {
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Export t, U, Delta, V, W, phi, sigma along the grid as CSV.
    Curves {
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init { path } => {
            fs::write(&path, config::TEMPLATE)
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::EmbedCheck { config, overrides } => embed_check(&config, &overrides),
        Command::Suite {
            configs,
            jobs,
            overrides,
        } => suite(&configs, jobs, &overrides),
        Command::Covering { config, overrides } => covering(&config, &overrides),
        Command::HardyDiscrete {
            csv,
            p,
            q,
            r,
            trials,
        } => hardy_discrete(&csv, p, q, r, trials),
        Command::Oracle { config, overrides } => oracle_cmd(&config, &overrides),
        Command::Curves { config, overrides } => curves(&config, &overrides),
    }
}

fn load(path: &Path, overrides: &CommonOverrides) -> Result<Run> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let cfg = FileConfig::parse(&text)?;
    let mut run = cfg.resolve()?;
    if let Some(n) = overrides.grid_n {
        run.settings.outer_n = n;
    }
    if let Some(m) = &overrides.grid_mode {
        run.settings.mode = config::parse_mode(m)?;
        run.mode = run.settings.mode;
    }
    if let Some(t) = overrides.esup_tol {
        run.settings.esup_tol = t;
    }
    if let Some(a) = overrides.a {
        if !(a > 1.0) {
            bail!("--a must exceed 1");
        }
        run.covering_a = a;
    }
    if let Some(s) = overrides.seed {
        run.budget.seed = s;
    }
    if let Some(o) = &overrides.out {
        run.out = Some(o.display().to_string());
    }
    if let Some(t) = overrides.quad_tol {
        if !(t > 0.0 && t < 1.0) {
            bail!("--quad-tol must be in (0, 1)");
        }
        run.quad_tol = t;
    }
    Ok(run)
}

fn run_report(run: &Run) -> Result<EmbeddingReport> {
    let mut report = embedding_constant_bounds(&run.params, &run.ws, &run.settings, &run.budget)?;
    // Cross-check of the two phi routes (split form vs direct min-kernel
    // quadrature) at a few points, at the configured quadrature tolerance.
    let fx = Functionals::new(run.params, run.ws.clone())?;
    let l = run.ws.domain().l_eff();
    let mut worst: f64 = 0.0;
    for i in 1..8 {
        let t = l * f64::powf(10.0, -(i as f64));
        let split = fx.phi(t);
        if let Ok(direct) = fx.phi_direct(t, run.quad_tol) {
            if split.is_finite() && direct.is_finite() && split > 0.0 {
                worst = worst.max((split - direct).abs() / split);
            }
        }
    }
    if worst > 10.0 * run.quad_tol {
        report.flags.push(format!(
            "phi two-form disagreement {worst:.2e} above 10x quadrature tolerance"
        ));
    }
    Ok(report)
}

fn embed_check(path: &Path, overrides: &CommonOverrides) -> Result<()> {
    let run = load(path, overrides)?;
    let report = run_report(&run)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &run.out {
        Some(out) => {
            fs::write(out, &json).with_context(|| format!("cannot write {out}"))?;
            println!(
                "case {} b_sum {} c_estimate {} ratio {} -> {out}",
                report.case, report.b_sum, report.c_estimate, report.ratio
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn suite(configs: &[PathBuf], jobs: usize, overrides: &CommonOverrides) -> Result<()> {
    if configs.is_empty() {
        bail!("empty batch: no configuration files given");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("thread pool")?;
    let mut rows: Vec<(usize, std::result::Result<EmbeddingReport, String>)> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .enumerate()
            .map(|(i, path)| {
                let res = load(path, overrides)
                    .and_then(|run| run_report(&run))
                    .map_err(|e| format!("{e:#}"));
                (i, res)
            })
            .collect()
    });
    rows.sort_by_key(|(i, _)| *i);

    let mut out: Box<dyn Write> = match &overrides.out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?)
        }
        None => Box::new(std::io::stdout()),
    };
    writeln!(
        out,
        "index,config,case,B1,B2,B3,B4,B5,B6,B7,B8,b_sum,c_estimate,ratio,flags,error"
    )?;
    for (i, res) in rows {
        let cfg = configs[i].display();
        match res {
            Ok(rep) => {
                let b = |k: &str| {
                    rep.b_values
                        .get(k)
                        .map(|v| format!("{v}"))
                        .unwrap_or_default()
                };
                writeln!(
                    out,
                    "{i},{cfg},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    rep.case,
                    b("B1"),
                    b("B2"),
                    b("B3"),
                    b("B4"),
                    b("B5"),
                    b("B6"),
                    b("B7"),
                    b("B8"),
                    rep.b_sum,
                    rep.c_estimate,
                    rep.ratio,
                    rep.flags.join(";").replace(',', ";"),
                )?;
            }
            Err(e) => {
                writeln!(
                    out,
                    "{i},{cfg},,,,,,,,,,,,,,{}",
                    e.replace(',', ";").replace('\n', " ")
                )?;
            }
        }
    }
    Ok(())
}

fn covering(path: &Path, overrides: &CommonOverrides) -> Result<()> {
    let run = load(path, overrides)?;
    let fx = Functionals::new(run.params, run.ws.clone())?;
    let grid = build_grid(run.ws.domain(), run.settings.outer_n, run.mode)?;
    let p = run.params.p;
    let h = |t: f64| fx.phi(t);
    let rho = |t: f64| fx.prim_u(t).powf(p);
    let cs = build_covering_sequence(&h, &rho, run.covering_a, &grid)?;
    let cs = classify_z(cs, &h, &rho, &grid)?;
    let mut out: Box<dyn Write> = match &run.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot write {p}"))?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(out, "k,x_k,h_x_k,rho_x_k,zone")?;
    let idx = cs.interval_indices();
    // The left endpoint of the first interval, then each interval's right
    // endpoint with the zone of the interval ending there.
    if let Some(&k0) = idx.first() {
        let x = cs.interval(k0).0;
        let x_eff = x.max(1e-300);
        writeln!(out, "{},{},{},{},", k0 - 1, x, h(x_eff), rho(x_eff))?;
    }
    for &k in &idx {
        let x = cs.interval(k).1;
        let x_eff = if x.is_finite() { x } else { fx.l_eff() };
        let zone = match cs.zone(k) {
            Zone::Z1 => "Z1",
            Zone::Z2 => "Z2",
        };
        writeln!(out, "{k},{x},{},{},{zone}", h(x_eff), rho(x_eff))?;
    }
    Ok(())
}

fn hardy_discrete(csv: &Path, p: f64, q: f64, r: f64, trials: usize) -> Result<()> {
    let text = fs::read_to_string(csv).with_context(|| format!("cannot read {}", csv.display()))?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('a')) {
            continue;
        }
        let mut parts = line.split(',');
        let (av, bv) = (parts.next(), parts.next());
        match (av, bv) {
            (Some(x), Some(y)) => {
                a.push(
                    x.trim()
                        .parse::<f64>()
                        .with_context(|| format!("line {} column a", lineno + 1))?,
                );
                b.push(
                    y.trim()
                        .parse::<f64>()
                        .with_context(|| format!("line {} column b", lineno + 1))?,
                );
            }
            _ => bail!("line {}: expected two comma-separated columns", lineno + 1),
        }
    }
    let params = ParamTriple::new(p, q, r)?;
    let a = RealSeq::from_values(a)?;
    let b = RealSeq::from_values(b)?;
    let d = discrete_hardy_d(&a, &b, &params)?;
    let brute = discrete_hardy_bruteforce(&a, &b, &params, trials)?;
    println!("D = {d}");
    println!("bruteforce = {brute}");
    println!("ratio = {}", brute / d);
    Ok(())
}

fn oracle_cmd(path: &Path, overrides: &CommonOverrides) -> Result<()> {
    let run = load(path, overrides)?;
    let est = estimate_c(&run.params, &run.ws, &run.budget, None)?;
    println!("estimate = {}", est.value);
    println!(
        "budget: pieces {} restarts {} sweeps {} seed {}",
        est.budget.pieces, est.budget.restarts, est.budget.sweeps, est.budget.seed
    );
    let dump = WitnessDump::from_witness(&est.witness);
    let mut out: Box<dyn Write> = match &run.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot write {p}"))?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(out, "left,right,value")?;
    for (j, v) in dump.values.iter().enumerate() {
        writeln!(
            out,
            "{},{},{v}",
            dump.breakpoints[j],
            dump.breakpoints[j + 1]
        )?;
    }
    Ok(())
}

fn curves(path: &Path, overrides: &CommonOverrides) -> Result<()> {
    let run = load(path, overrides)?;
    let fx = Functionals::new(run.params, run.ws.clone())?;
    let grid = build_grid(run.ws.domain(), run.settings.outer_n, run.mode)?;
    let sigma_defined =
        run.params.r < run.params.p && (run.params.p - run.params.r) > 1e-6 * run.params.p;
    let mut out: Box<dyn Write> = match &run.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("cannot write {p}"))?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(out, "t,U,Delta,V,W,phi,sigma")?;
    for &t in grid.points() {
        let sigma = if sigma_defined {
            match fx.sigma(t) {
                Ok(s) if s.is_finite() => format!("{s}"),
                _ => String::new(),
            }
        } else {
            String::new()
        };
        writeln!(
            out,
            "{t},{},{},{},{},{},{sigma}",
            fx.prim_u(t),
            fx.prim_delta(t),
            fx.prim_v(t),
            fx.prim_w(t),
            fx.phi(t),
        )?;
    }
    Ok(())
}
