//! Command-line driver: mesh generation, single solves, convergence-rate
//! sweeps, and the lemma verification suite.  Every option can be preloaded
//! from a `key = value` configuration file; explicit flags win.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sobolevlab_core::experiments;
use sobolevlab_core::extremals::{Exponents, RadialProfile};
use sobolevlab_core::mesh::Mesh;
use sobolevlab_core::solver::{self, SolverOptions};
use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Parser)]
#[command(
    name = "sobolevlab",
    about = "Discrete Sobolev constants on polyhedral balls: solves, rate sweeps, and estimate checks",
    version
)]
struct Cli {
    /// Configuration file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the simplicial ball mesh at a refinement level and write it out.
    Mesh(MeshArgs),
    /// Minimize the Sobolev quotient on one mesh and store the minimizer.
    Solve(SolveArgs),
    /// Refinement sweep with rate fit against the sharp exponent.
    Rates(RatesArgs),
    /// Run the verification suite for the supporting estimates.
    Lemmas(LemmasArgs),
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    level: Option<u32>,
    /// Output mesh file (text format).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    level: Option<u32>,
    /// Relative gradient tolerance for the minimizer.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory: mesh.txt, solution.txt, result.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    dim: Option<usize>,
    /// One or more exponents, comma separated; sweeps run independently.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    #[arg(long)]
    max_level: Option<u32>,
    /// Worker threads for independent sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory: one CSV and one JSON summary per exponent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LemmasArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => HashMap::new(),
    };
    match cli.command {
        Command::Mesh(args) => cmd_mesh(args, &cfg),
        Command::Solve(args) => cmd_solve(args, &cfg),
        Command::Rates(args) => cmd_rates(args, &cfg),
        Command::Lemmas(args) => cmd_lemmas(args, &cfg),
    }
}

fn cmd_mesh(args: MeshArgs, cfg: &HashMap<String, String>) -> Result<()> {
    let dim = pick(args.dim, cfg, "dim")?;
    let level = pick(args.level, cfg, "level")?;
    let out: PathBuf = pick(args.out, cfg, "out")?;
    let mesh = Mesh::unit_ball(dim, level)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    mesh.write_text(&out)?;
    println!(
        "mesh dim={dim} level={level}: {} vertices, {} elements, h = {:.6} -> {}",
        mesh.n_vertices(),
        mesh.n_elements(),
        mesh.h(),
        out.display()
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs, cfg: &HashMap<String, String>) -> Result<()> {
    let dim = pick(args.dim, cfg, "dim")?;
    let p = pick(args.p, cfg, "p")?;
    let level = pick(args.level, cfg, "level")?;
    let out: PathBuf = pick(args.out, cfg, "out")?;
    let mut opts = SolverOptions::default();
    if let Some(tol) = pick_opt(args.tol, cfg, "tol")? {
        opts.grad_tol = tol;
    }
    if let Some(iters) = pick_opt(args.max_iters, cfg, "max-iters")? {
        opts.max_iters = iters;
    }

    let exps = Exponents::new(p, dim)?;
    let profile = RadialProfile::new(exps)?;
    let mesh = Mesh::unit_ball(dim, level)?;
    let result = solver::solve_sh(&mesh, &profile, &opts)?;

    fs::create_dir_all(&out)?;
    mesh.write_text(&out.join("mesh.txt"))?;
    result.u_h.write_text(&out.join("solution.txt"))?;
    let record = serde_json::json!({
        "S_h": result.s_h,
        "S_ref": profile.sharp_constant(),
        "iterations": result.iterations,
        "converged": result.converged,
        "h": mesh.h(),
        "p": p,
        "dim": dim,
        "level": level,
        "solution_file": "solution.txt",
        "mesh_file": "mesh.txt",
    });
    fs::write(
        out.join("result.json"),
        serde_json::to_string_pretty(&record)?,
    )?;
    println!(
        "S_h(p={p}, N={dim}) = {:.12} at level {level} (h = {:.6}, {} iterations, converged = {})",
        result.s_h,
        mesh.h(),
        result.iterations,
        result.converged
    );
    Ok(())
}

fn cmd_rates(args: RatesArgs, cfg: &HashMap<String, String>) -> Result<()> {
    let dim = pick(args.dim, cfg, "dim")?;
    let ps: Vec<f64> = if args.p.is_empty() {
        match cfg.get("p") {
            Some(s) => s
                .split(',')
                .map(|t| t.trim().parse().map_err(|e| anyhow!("config p = {t}: {e}")))
                .collect::<Result<_>>()?,
            None => bail!("missing required option --p (flag or config)"),
        }
    } else {
        args.p
    };
    let max_level = pick(args.max_level, cfg, "max-level")?;
    let jobs = pick_opt(args.jobs, cfg, "jobs")?.unwrap_or(1).max(1);
    let out: PathBuf = pick(args.out, cfg, "out")?;
    fs::create_dir_all(&out)?;

    // Independent sweeps pulled from a shared queue by `jobs` workers.
    let next = AtomicUsize::new(0);
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(ps.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&p) = ps.get(k) else { break };
                match run_one_sweep(p, dim, max_level, &out) {
                    Ok(line) => println!("{line}"),
                    Err(e) => failures.lock().unwrap().push(format!("p = {p}: {e:#}")),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        bail!("{} sweep(s) failed:\n{}", failures.len(), failures.join("\n"));
    }
    Ok(())
}

fn run_one_sweep(p: f64, dim: usize, max_level: u32, out: &Path) -> Result<String> {
    let report = experiments::run_convergence(p, dim, max_level, &SolverOptions::default())?;
    let tag = format!("p{p}_{dim}d");
    fs::write(out.join(format!("rates_{tag}.csv")), experiments::rates_csv(&report))?;
    fs::write(
        out.join(format!("rates_{tag}.json")),
        experiments::rates_json(&report)?,
    )?;
    Ok(match report.fitted_slope {
        Some(slope) => format!(
            "rates p={p} N={dim}: fitted slope {slope:.4} (target {:.4}) over {} levels",
            report.alpha_target,
            report.rows.len()
        ),
        None => format!("rates p={p} N={dim}: inconclusive ({} levels)", report.rows.len()),
    })
}

fn cmd_lemmas(args: LemmasArgs, cfg: &HashMap<String, String>) -> Result<()> {
    let dim = pick(args.dim, cfg, "dim")?;
    let p = pick(args.p, cfg, "p")?;
    let seed = pick_opt(args.seed, cfg, "seed")?.unwrap_or(0);
    let out: PathBuf = pick(args.out, cfg, "out")?;
    let reports = experiments::run_lemma_suite(p, dim, seed)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("lemmas.csv"), experiments::lemma_csv(&reports))?;
    let mut failed = 0usize;
    for r in &reports {
        println!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
        if !r.passed {
            failed += 1;
            for note in &r.notes {
                println!("     {note}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", reports.len());
    }
    println!("all {} checks passed", reports.len());
    Ok(())
}

/// `key = value` per line; `#` starts a comment.
fn load_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config {}:{}: expected `key = value`", path.display(), lineno + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag wins; otherwise the config entry; otherwise an error.
fn pick<T: FromStr>(flag: Option<T>, cfg: &HashMap<String, String>, key: &str) -> Result<T>
where
    T::Err: Display,
{
    match pick_opt(flag, cfg, key)? {
        Some(v) => Ok(v),
        None => bail!("missing required option --{key} (flag or config)"),
    }
}

fn pick_opt<T: FromStr>(
    flag: Option<T>,
    cfg: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>>
where
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e| anyhow!("config {key} = {s}: {e}")),
        None => Ok(None),
    }
}
