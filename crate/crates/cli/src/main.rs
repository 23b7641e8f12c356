//! Command-line front end for the rank-and-bid commitment solver.
//!
//! Subcommands: `solve` (optimal commitment for a problem spec), `respond`
//! (follower best response against a strategy), `smooth` (sort + smooth a
//! strategy and extract its equal-bid function), `verify` (independent
//! brute-force and perturbation audit of a solution directory).
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input.

mod spec;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rankbid::follower::response_profile;
use rankbid::oracle::{
    brute_force_leader_utility, perturbation_audit, sweep_cut_point, sweep_grid, AuditReport,
    GridSpec,
};
use rankbid::optimizer::{
    leader_utility, solve_all_pay, solve_auto, solve_first_price_uniform_f2,
    solve_general_seeded, Solution,
};
use rankbid::smoothing::{equal_bid, smooth_with_profile, EqualUtilityCurve};
use rankbid::strategy::sort_strategy;
use rankbid::{CommitmentProblem, RawStrategy, Real};
use serde::Serialize;
use spec::{resolve_grid, GridSpecOverride, ProblemSpec};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "commitment-solver", version, about = "Optimal commitments in rank-and-bid auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// Pick the closed form whose preconditions hold, else general search.
    Auto,
    FirstPriceUniform,
    AllPay,
    General,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal commitment for a problem spec.
    Solve {
        /// Problem spec JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        /// Output directory for solution.json, g.csv, s_star.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Seed for the general search restarts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Level budget of the general search.
        #[arg(long, default_value_t = 3)]
        max_steps: usize,
        /// Override abs/rel tolerance.
        #[arg(long)]
        tol: Option<Real>,
    },
    /// Best response profile of the follower against a committed strategy.
    Respond {
        #[arg(long)]
        spec: PathBuf,
        /// Two-column CSV (type, bid); need not be monotone.
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<Real>,
    },
    /// Sort and smooth a strategy; export it with its equal-bid function.
    Smooth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<Real>,
    },
    /// Audit a solution directory against the discretized oracle.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        /// Directory holding solution.json, g.csv, s_star.csv.
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leader-type grid cells.
        #[arg(long = "grid-n")]
        grid_n: Option<usize>,
        /// Bid grid cells.
        #[arg(long = "grid-m")]
        grid_m: Option<usize>,
        /// Follower-type grid cells.
        #[arg(long = "grid-k")]
        grid_k: Option<usize>,
        /// Where to write audit.json (defaults to the solution directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol: Option<Real>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("COMMITMENT_SOLVER_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve { spec, method, out, seed, max_steps, tol } => {
            cmd_solve(&spec, method, &out, seed, max_steps, tol)
        }
        Command::Respond { spec, strategy, out, tol } => cmd_respond(&spec, &strategy, &out, tol),
        Command::Smooth { spec, strategy, out, tol } => cmd_smooth(&spec, &strategy, &out, tol),
        Command::Verify { spec, solution, trials, seed, grid_n, grid_m, grid_k, out, tol } => {
            cmd_verify(&spec, &solution, trials, seed, grid_n, grid_m, grid_k, out.as_deref(), tol)
        }
    }
}

fn load_problem(spec_path: &Path, tol: Option<Real>) -> Result<(CommitmentProblem, GridSpecOverride)> {
    ProblemSpec::load(spec_path)?.into_problem(tol)
}

fn cmd_solve(
    spec_path: &Path,
    method: MethodArg,
    out: &Path,
    seed: u64,
    max_steps: usize,
    tol: Option<Real>,
) -> Result<u8> {
    let (problem, _) = load_problem(spec_path, tol)?;
    let solution = match method {
        MethodArg::Auto => solve_auto(&problem, seed),
        MethodArg::FirstPriceUniform => {
            solve_first_price_uniform_f2(&problem).map_err(|e| anyhow!("{e}"))?
        }
        MethodArg::AllPay => solve_all_pay(&problem).map_err(|e| anyhow!("{e}"))?,
        MethodArg::General => solve_general_seeded(&problem, max_steps, seed),
    };
    write_solution(out, &solution)?;
    println!(
        "method {} | cut points {:?} | leader utility {:.6} | stationarity residual {:.2e}",
        solution.method.as_str(),
        solution.cut_points,
        solution.leader_utility,
        solution.stationarity_residual
    );
    for note in &solution.notes {
        println!("note: {note}");
    }
    Ok(0)
}

fn write_solution(out: &Path, solution: &Solution) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut json = serde_json::to_string_pretty(solution)?;
    json.push('\n');
    write_atomic(&out.join("solution.json"), json.as_bytes())?;
    let mut g_csv = Vec::new();
    solution.g.curve.write_csv(&mut g_csv, "g")?;
    write_atomic(&out.join("g.csv"), &g_csv)?;
    let mut s_csv = Vec::new();
    solution.s_star.write_csv(&mut s_csv, "s_star")?;
    write_atomic(&out.join("s_star.csv"), &s_csv)?;
    Ok(())
}

fn load_strategy(path: &Path) -> Result<RawStrategy> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read strategy {}", path.display()))?;
    RawStrategy::from_csv(&text).map_err(|e| anyhow!("invalid strategy CSV: {e}"))
}

fn cmd_respond(spec_path: &Path, strategy_path: &Path, out: &Path, tol: Option<Real>) -> Result<u8> {
    let (problem, _) = load_problem(spec_path, tol)?;
    let raw = load_strategy(strategy_path)?;
    let sorted = sort_strategy(&raw, &problem.f1);
    let profile = response_profile(&problem, &sorted, rankbid::follower::PROFILE_GRID);
    std::fs::create_dir_all(out)?;
    let mut csv = Vec::new();
    profile.write_csv(&mut csv)?;
    write_atomic(&out.join("response.csv"), &csv)?;
    println!("response profile over {} follower types written", profile.ys.len());
    Ok(0)
}

fn cmd_smooth(spec_path: &Path, strategy_path: &Path, out: &Path, tol: Option<Real>) -> Result<u8> {
    let (problem, _) = load_problem(spec_path, tol)?;
    let raw = load_strategy(strategy_path)?;
    let sorted = sort_strategy(&raw, &problem.f1);
    let profile = response_profile(&problem, &sorted, rankbid::follower::PROFILE_GRID);
    let s_star = smooth_with_profile(&problem, &sorted, &profile);
    let g = equal_bid(&problem, &s_star);
    std::fs::create_dir_all(out)?;
    let mut s_csv = Vec::new();
    s_star.write_csv(&mut s_csv, "s_star")?;
    write_atomic(&out.join("s_star.csv"), &s_csv)?;
    let mut g_csv = Vec::new();
    g.curve.write_csv(&mut g_csv, "g")?;
    write_atomic(&out.join("g.csv"), &g_csv)?;
    // equal-utility curves at follower-type deciles, long format
    let (_, b2) = problem.follower_support();
    let mut eu_csv = String::from("y,x,t\n");
    for i in 1..=9 {
        let y = b2 * i as Real / 10.0;
        let curve = EqualUtilityCurve::sample(&problem, &sorted, y, 201);
        for (x, t) in curve.xs.iter().zip(&curve.bids) {
            eu_csv.push_str(&format!("{y},{x},{t}\n"));
        }
    }
    write_atomic(&out.join("eu_curves.csv"), eu_csv.as_bytes())?;
    println!("smoothed strategy, equal-bid function and equal-utility curves written");
    Ok(0)
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    pass: bool,
    findings: Vec<String>,
    seed: u64,
    trials: u64,
    grid: GridSpec,
    stored_utility: Real,
    recomputed_utility: Real,
    brute_force_utility: Real,
    agreement_tolerance: Real,
    sweep_argmax: Real,
    sweep_max_utility: Real,
    perturbation: AuditReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    cut_adjudication: Option<CutAdjudication>,
}

/// Cross-check of the two-piece cut point against the sweep oracle, including
/// the variant coefficient of the cut equation and the overbidding flag.
#[derive(Debug, Serialize)]
struct CutAdjudication {
    solver_cut: Real,
    sweep_argmax: Real,
    overbids_at_sweep_argmax: bool,
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    spec_path: &Path,
    solution_dir: &Path,
    trials: u64,
    seed: u64,
    grid_n: Option<usize>,
    grid_m: Option<usize>,
    grid_k: Option<usize>,
    out: Option<&Path>,
    tol: Option<Real>,
) -> Result<u8> {
    let (problem, grid_base) = load_problem(spec_path, tol)?;
    for required in ["solution.json", "g.csv", "s_star.csv"] {
        let path = solution_dir.join(required);
        if !path.is_file() {
            bail!("missing solution file {}", path.display());
        }
    }
    let text = std::fs::read_to_string(solution_dir.join("solution.json"))?;
    let solution: Solution =
        serde_json::from_str(&text).context("invalid solution.json")?;
    let (sa1, sa2) = solution.g.domain();
    let (a1, a2) = problem.leader_support();
    if (sa1 - a1).abs() > 1e-9 * (a2 - a1) || (sa2 - a2).abs() > 1e-9 * (a2 - a1) {
        bail!("solution domain [{sa1}, {sa2}] does not match the spec support [{a1}, {a2}]");
    }

    let mut findings = Vec::new();

    // 1. analytic objective must reproduce the stored utility
    let recomputed = leader_utility(&problem, &solution.g);
    if (recomputed - solution.leader_utility).abs() > 1e-6 * (1.0 + solution.leader_utility.abs())
    {
        findings.push(format!(
            "stored utility {} does not match recomputed objective {recomputed}",
            solution.leader_utility
        ));
    }

    // 2. independent brute-force agreement on the reconstructed strategy
    let grid = resolve_grid(
        &problem,
        grid_base,
        grid_n,
        grid_k,
        grid_m,
        solution.s_star.max_value(),
    );
    let rho = grid.resolution(&problem);
    let brute = brute_force_leader_utility(&problem, &solution.s_star, &grid);
    let agreement_tol = 3.0 * rho;
    if (brute - solution.leader_utility).abs() > agreement_tol {
        findings.push(format!(
            "brute-force utility {brute} disagrees with stored {} beyond {agreement_tol}",
            solution.leader_utility
        ));
    }

    // 3. sweep of two-piece cuts must not beat the solution materially
    let sweep = sweep_cut_point(&problem, &sweep_grid(&problem, 1200));
    if sweep.max_utility > solution.leader_utility + 1e-4 {
        findings.push(format!(
            "two-piece sweep found higher utility {} at cut {}",
            sweep.max_utility, sweep.argmax
        ));
    }

    // 4. seeded perturbation audit
    let report = perturbation_audit(&problem, &solution.g, solution.leader_utility, trials, seed);
    if report.max_gain > 1e-4 {
        findings.push(format!(
            "perturbation gain {} at {}",
            report.max_gain,
            report
                .best_improvement
                .as_ref()
                .map(|g| g.description.clone())
                .unwrap_or_default()
        ));
    }

    let cut_adjudication = (solution.cut_points.len() == 1).then(|| {
        let s_opt = &solution.s_star;
        let overbid = s_opt
            .grid()
            .iter()
            .filter(|&&x| x > a1 + 1e-9 * (a2 - a1))
            .map(|&x| s_opt.eval_clamped(x) - x)
            .fold(Real::NEG_INFINITY, Real::max)
            > 0.0;
        CutAdjudication {
            solver_cut: solution.cut_points[0],
            sweep_argmax: sweep.argmax,
            overbids_at_sweep_argmax: overbid,
        }
    });

    let pass = findings.is_empty();
    let report = VerifyReport {
        pass,
        findings: findings.clone(),
        seed,
        trials,
        grid,
        stored_utility: solution.leader_utility,
        recomputed_utility: recomputed,
        brute_force_utility: brute,
        agreement_tolerance: agreement_tol,
        sweep_argmax: sweep.argmax,
        sweep_max_utility: sweep.max_utility,
        perturbation: report,
        cut_adjudication,
    };
    let out_dir = out.unwrap_or(solution_dir);
    std::fs::create_dir_all(out_dir)?;
    let mut sweep_csv = Vec::new();
    sweep.write_csv(&mut sweep_csv)?;
    write_atomic(&out_dir.join("sweep.csv"), &sweep_csv)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_atomic(&out_dir.join("audit.json"), json.as_bytes())?;
    if pass {
        println!("verification passed: brute force {brute} vs stored {}", solution.leader_utility);
        Ok(0)
    } else {
        for finding in &findings {
            eprintln!("finding: {finding}");
        }
        Ok(1)
    }
}

/// Writes through a temp file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move output into place at {}", path.display()))?;
    Ok(())
}
