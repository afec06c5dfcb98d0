//! Experiment runner for the entropy-penalized mean-field scheme on the
//! torus. Every pipeline is a subcommand driven by one configuration file;
//! outcomes are JSON on stdout (plus files under `--out`), tables are CSV
//! with a schema line on top.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical-consistency
//! error, 4 reported non-convergence under `--strict`.

mod config;
mod io;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{fnv1a64, RawConfig};
use report::*;
use torus_mfg::grid::GridField;
use torus_mfg::measures::{w1_lp_oracle, wasserstein1, Density, VelocityGrid};
use torus_mfg::model::{FinalCondition, PotentialSpec};
use torus_mfg::oracle;
use torus_mfg::pde;
use torus_mfg::scheme::{
    gaussian_diagnostics, semigroup_check, solve_fixed_point, SchemeConfig, SchemeSolution,
};
use torus_mfg::step::push_forward;
use torus_mfg::{mc, Error};

#[derive(Parser)]
#[command(name = "torus-mfg", version, about = "Entropy-penalized mean-field scheme laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Configuration file (see README for the grammar).
    #[arg(long)]
    config: PathBuf,
    /// Directory for report files; stdout always carries the JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 when a fixed point fails to converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the mean-field fixed point and report the trajectory summary.
    Solve(Common),
    /// One-step solve with kernel diagnostics.
    Step(Common),
    /// Value report of the solved problem.
    Value(Common),
    /// Sweep the step count and compare against the PDE references.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step counts, e.g. 8,16,32,64.
        #[arg(long)]
        n: String,
    },
    /// Feynman–Kac Monte Carlo against the backward recursion.
    Fk {
        #[command(flatten)]
        common: Common,
        /// Override [mc] paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Override [mc] seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated node indices (default: every node).
        #[arg(long)]
        nodes: Option<String>,
    },
    /// Brute-force single-step minimizer against the Gibbs closed form.
    Oracle(Common),
    /// Wasserstein-1 distance between two density files.
    W1 {
        file_a: PathBuf,
        file_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Value-composition residual for a horizon split.
    Semigroup {
        #[command(flatten)]
        common: Common,
        /// Early,late step counts summing to s, e.g. 4,4.
        #[arg(long)]
        split: String,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    });
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::GridMismatch(_) | Error::Unsupported(_) | Error::TooLarge(_) => 2,
        Error::Numerical(_) | Error::Diverged(_) => 3,
    }
}

struct Problem {
    raw: RawConfig,
    grid: torus_mfg::TorusGrid,
    scheme: SchemeConfig<f64>,
    spec: PotentialSpec<f64>,
    u: FinalCondition<f64>,
    mu: Density<f64>,
}

fn load_problem(path: &Path) -> torus_mfg::Result<Problem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let raw = RawConfig::parse(&text)?;
    let grid = raw.grid()?;
    let scheme = raw.scheme()?;
    let spec = raw.potential(grid.dim())?;
    let u = raw.final_condition(grid)?;
    let mu = raw.initial_density(grid)?;
    Ok(Problem { raw, grid, scheme, spec, u, mu })
}

fn echo(raw: &RawConfig) -> ConfigEcho {
    ConfigEcho { resolved: raw.sections.clone(), content_hash: raw.content_hash() }
}

fn emit<T: serde::Serialize>(
    report: &Report<T>,
    out: &Option<PathBuf>,
    filename: &str,
) -> torus_mfg::Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    println!("{json}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        std::fs::write(dir.join(filename), json.as_bytes())
            .map_err(|e| Error::Config(format!("cannot write report: {e}")))?;
    }
    Ok(())
}

fn strict_code(strict: bool, converged: bool) -> i32 {
    if strict && !converged {
        4
    } else {
        0
    }
}

fn run(cli: Cli) -> torus_mfg::Result<i32> {
    match cli.cmd {
        Cmd::Solve(common) => cmd_solve(common),
        Cmd::Step(common) => cmd_step(common),
        Cmd::Value(common) => cmd_value(common),
        Cmd::Converge { common, n } => cmd_converge(common, &n),
        Cmd::Fk { common, paths, seed, nodes } => cmd_fk(common, paths, seed, nodes),
        Cmd::Oracle(common) => cmd_oracle(common),
        Cmd::W1 { file_a, file_b, out } => cmd_w1(&file_a, &file_b, &out),
        Cmd::Semigroup { common, split } => cmd_semigroup(common, &split),
    }
}

fn cmd_solve(common: Common) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    let start = Instant::now();
    let sol = solve_fixed_point(&p.mu, &p.u, &p.spec, &p.scheme)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    let (rec, prop) = sol.replay_residuals()?;
    let mass_err =
        sol.densities.iter().map(|d| (d.mass() - 1.0).abs()).fold(0.0f64, f64::max);
    let endpoint_min = sol.densities.last().expect("nonempty").field().min();
    let result = SolveResult {
        converged: sol.converged,
        fp_iterations: sol.iterations,
        fp_residual: sol.fp_residual,
        value: sol.value.into(),
        replay_recursion: rec,
        replay_propagation: prop,
        mass_error_max: mass_err,
        endpoint_density_min: endpoint_min,
        wall_ms,
    };
    let report = Report {
        schema: "torus-mfg.solve.v1".into(),
        command: "solve".into(),
        config: echo(&p.raw),
        result,
    };
    emit(&report, &common.out, "solve.json")?;
    if let Some(dir) = &common.out {
        io::write_density(&dir.join("density_final.density"), sol.densities.last().unwrap())?;
        io::write_density(&dir.join("density_start.density"), &sol.densities[0])?;
    }
    Ok(strict_code(common.strict, sol.converged))
}

fn cmd_step(common: Common) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    let cfg = SchemeConfig { s: 1, ..p.scheme };
    let sol = solve_fixed_point(&p.mu, &p.u, &p.spec, &cfg)?;
    let kern = &sol.kernels[0];
    let mut row_mass_err = 0.0f64;
    for x in 0..p.grid.len() {
        row_mass_err = row_mass_err.max((kern.row_mass(x) - 1.0).abs());
    }
    let (row_max, row_min) = kern.row_bounds();
    let pushed = push_forward(&p.mu, kern)?;
    let diag = gaussian_diagnostics(&[kern.cost().clone()], cfg.n)?;
    let surr = &diag.per_time[0];
    let sample: Vec<usize> = (0..p.grid.len()).step_by((p.grid.len() / 16).max(1)).collect();
    let mut mean_gap = 0.0f64;
    let mut cov_gap = 0.0f64;
    for &x in &sample {
        let (mean, cov) = kern.moments(x);
        for (axis, comp) in surr.beta.comps.iter().enumerate() {
            mean_gap = mean_gap.max((mean[axis] - comp.values()[x]).abs());
        }
        let q = surr.q.at(x);
        for a in 0..p.grid.dim() {
            for b in 0..p.grid.dim() {
                cov_gap = cov_gap.max((cov[a][b] - q[a][b] / cfg.n as f64).abs());
            }
        }
    }
    let result = StepResult {
        value: sol.value.into(),
        converged: sol.converged,
        fp_iterations: sol.iterations,
        row_mass_error_max: row_mass_err,
        row_max,
        row_min_central: row_min,
        empirical_bound_constant: row_max.max(1.0 / row_min),
        pushforward_min: pushed.field().min(),
        moment_mean_gap: mean_gap,
        moment_cov_gap: cov_gap,
    };
    let report = Report {
        schema: "torus-mfg.step.v1".into(),
        command: "step".into(),
        config: echo(&p.raw),
        result,
    };
    emit(&report, &common.out, "step.json")?;
    Ok(strict_code(common.strict, sol.converged))
}

fn cmd_value(common: Common) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    let sol = solve_fixed_point(&p.mu, &p.u, &p.spec, &p.scheme)?;
    let report = Report {
        schema: "torus-mfg.value.v1".into(),
        command: "value".into(),
        config: echo(&p.raw),
        result: ValueJson::from(sol.value),
    };
    emit(&report, &common.out, "value.json")?;
    Ok(strict_code(common.strict, sol.converged))
}

/// Reference data shared by the convergence metrics: the viscous
/// Hamilton–Jacobi solution (driven by the finest solve's mean field and
/// terminal derivative) and the Fokker–Planck flow along its gradient.
struct Reference {
    u_at_start: GridField<f64>,
    rho_final: Density<f64>,
}

fn build_reference(
    p: &Problem,
    finest: &SchemeSolution<f64>,
    nu: f64,
    dt_factor: f64,
) -> torus_mfg::Result<Reference> {
    let grid = p.grid;
    let t_start = finest.times[0];
    let dx = grid.dx::<f64>();
    let dt = dx * dx * dt_factor;
    // mean-field part of the potential from the finest trajectory, linear in t
    let w_series = pde::TimeSeries {
        times: finest.times.clone(),
        fields: finest.densities.iter().map(|d| p.spec.mean_field(d)).collect(),
    };
    let spec = p.spec.clone();
    let provider = move |t: f64| {
        let v = spec.eval_v(t, grid);
        v.add(&w_series.interpolate(t)).expect("shared grid")
    };
    let snapshots = 257usize;
    let mut record: Vec<f64> = (0..snapshots)
        .map(|i| t_start * (1.0 - i as f64 / (snapshots - 1) as f64))
        .collect();
    record[0] = t_start;
    let f0 = finest.costs[finest.costs.len() - 1].clone();
    let hj = pde::solve_hj(&f0, &provider, nu, t_start, dt, &record)?;
    let u_at_start = hj.fields[0].clone();
    let grad_series = pde::TimeSeries {
        times: hj.times.clone(),
        fields: hj.fields.iter().map(|u| u.axis_derivative(0)).collect(),
    };
    let drift = move |t: f64| grad_series.interpolate(t).scale(-1.0);
    let fp = pde::solve_fp(&p.mu, &drift, nu, t_start, dt, &[0.0])?;
    let rho_final = Density::normalized(fp.fields[0].clone())?;
    Ok(Reference { u_at_start, rho_final })
}

fn cmd_converge(common: Common, n_list: &str) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    if p.grid.dim() != 1 {
        return Err(Error::Unsupported("converge compares against p = 1 references".into()));
    }
    let ns: Vec<usize> = n_list
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad step count {s:?} in --n")))
        })
        .collect::<torus_mfg::Result<_>>()?;
    if ns.is_empty() {
        return Err(Error::Config("--n needs at least one step count".into()));
    }
    // fixed horizon taken from the config's (n, s)
    let horizon = p.scheme.s as f64 / p.scheme.n as f64;
    for &n in &ns {
        let s_f = horizon * n as f64;
        if (s_f - s_f.round()).abs() > 1e-9 || s_f < 0.5 {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a whole number of steps at n = {n}"
            )));
        }
    }
    // points are independent and deterministic; rows keep parameter order
    let solves: Vec<(usize, SchemeSolution<f64>, u64)> = ns
        .par_iter()
        .map(|&n| {
            let cfg = SchemeConfig {
                n,
                s: (horizon * n as f64).round() as usize,
                m: p.scheme.m.max((horizon.ceil() as usize).max(1)),
                ..p.scheme
            };
            let start = Instant::now();
            let sol = solve_fixed_point(&p.mu, &p.u, &p.spec, &cfg)?;
            let wall_ms = start.elapsed().as_millis() as u64;
            Ok((n, sol, wall_ms))
        })
        .collect::<torus_mfg::Result<_>>()?;
    let all_converged = solves.iter().all(|(_, sol, _)| sol.converged);
    let finest = &solves.iter().max_by_key(|(n, _, _)| *n).expect("nonempty").1;
    let nu = p.raw.pde_nu()?;
    let reference = build_reference(&p, finest, nu, p.raw.pde_dt_factor()?)?;

    let mut rows = Vec::new();
    for (n, sol, wall_ms) in &solves {
        let sup_err_f = sol.costs[0].sup_distance(&reference.u_at_start)?;
        let w1_err = wasserstein1(sol.densities.last().unwrap(), &reference.rho_final)?;
        rows.push(ConvergeRow {
            n: *n,
            sup_err_f,
            w1_err_mu_final: w1_err,
            value: sol.value.total,
            fp_iters: sol.iterations,
            wall_ms: *wall_ms,
        });
    }
    let report = Report {
        schema: "torus-mfg.converge.v1".into(),
        command: "converge".into(),
        config: echo(&p.raw),
        result: ConvergeResult { nu, rows },
    };
    emit(&report, &common.out, "converge.json")?;
    if let Some(dir) = &common.out {
        let mut csv = String::from("schema,torus-mfg.converge.v1\n");
        csv.push_str("n,sup_err_f,w1_err_mu_final,value,fp_iters,wall_ms\n");
        for r in &report.result.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n, r.sup_err_f, r.w1_err_mu_final, r.value, r.fp_iters, r.wall_ms
            ));
        }
        std::fs::write(dir.join("converge.csv"), csv)
            .map_err(|e| Error::Config(format!("cannot write converge.csv: {e}")))?;
    }
    Ok(strict_code(common.strict, all_converged))
}

fn cmd_fk(
    common: Common,
    paths: Option<usize>,
    seed: Option<u64>,
    nodes: Option<String>,
) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    if p.grid.dim() != 1 {
        return Err(Error::Unsupported("the Monte Carlo cross-check runs at p = 1".into()));
    }
    let paths = match paths {
        Some(n) => n,
        None => p.raw.mc_paths()?,
    };
    let seed = match seed {
        Some(s) => s,
        None => p.raw.mc_seed()?,
    };
    let sol = solve_fixed_point(&p.mu, &p.u, &p.spec, &p.scheme)?;
    let potentials: Vec<GridField<f64>> =
        sol.kernels.iter().map(|k| k.potential().clone()).collect();
    let f0 = sol.costs[sol.costs.len() - 1].clone();
    let j = -(p.scheme.s as i64);
    let node_list: Vec<usize> = match nodes {
        None => (0..p.grid.len()).collect(),
        Some(raw) => raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&i| i < p.grid.len())
                    .ok_or_else(|| Error::Config(format!("bad node index {s:?}")))
            })
            .collect::<torus_mfg::Result<_>>()?,
    };
    let estimates: Vec<(usize, (f64, f64))> = node_list
        .par_iter()
        .map(|&x| {
            mc::feynman_kac(x, j, p.scheme.n, &f0, &potentials, paths, seed).map(|e| (x, e))
        })
        .collect::<torus_mfg::Result<_>>()?;
    let mut rows = Vec::new();
    let mut max_sigma: f64 = 0.0;
    for (x, (est, se)) in estimates {
        let recursion = (-sol.costs[0].values()[x]).exp();
        let sigma_gap = if se > 0.0 { (est - recursion).abs() / se } else { 0.0 };
        max_sigma = max_sigma.max(sigma_gap);
        rows.push(FkRow {
            node: x,
            x: x as f64 / p.grid.nodes_per_axis() as f64,
            recursion,
            estimate: est,
            std_error: se,
            sigma_gap,
        });
    }
    let report = Report {
        schema: "torus-mfg.fk.v1".into(),
        command: "fk".into(),
        config: echo(&p.raw),
        result: FkResult {
            rng_algorithm: mc::RNG_ALGORITHM,
            paths,
            seed,
            horizon_index: j,
            rows,
            max_sigma_gap: max_sigma,
        },
    };
    emit(&report, &common.out, "fk.json")?;
    Ok(strict_code(common.strict, sol.converged))
}

fn cmd_oracle(common: Common) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    let h = 1.0 / p.scheme.n as f64;
    let v_grid = VelocityGrid::sized_for(p.grid.dim(), h, 0.0)?;
    let outcome = oracle::minimize_single_step(&p.mu, &p.u, h, v_grid)?;
    let pushed = oracle::push_forward_raw(&p.mu, &outcome.kernel)?;
    let f_cmp = p.u.derivative(&pushed)?;
    let gibbs = torus_mfg::step::build_kernel(&f_cmp, &GridField::zeros(p.grid), p.scheme.n)?;
    let row_l1 = oracle::compare_kernels(&outcome.kernel, &gibbs)?;
    let gibbs_raw = gibbs.materialize(v_grid)?;
    let obj_gibbs = oracle::raw_objective(&gibbs_raw, &p.mu, &p.u, h)?;
    let value = oracle::one_step_value(&outcome, &p.mu, &p.spec, -h, h)?;
    let report = Report {
        schema: "torus-mfg.oracle.v1".into(),
        command: "oracle".into(),
        config: echo(&p.raw),
        result: OracleResult {
            iterations: outcome.iterations,
            converged: outcome.converged,
            objective: outcome.objective(),
            objective_gap_vs_gibbs: (outcome.objective() - obj_gibbs).abs(),
            row_l1_max_vs_gibbs: row_l1,
            one_step_value: value,
        },
    };
    emit(&report, &common.out, "oracle.json")?;
    Ok(strict_code(common.strict, outcome.converged))
}

fn cmd_w1(file_a: &Path, file_b: &Path, out: &Option<PathBuf>) -> torus_mfg::Result<i32> {
    let a = io::read_density(file_a)?;
    let b = io::read_density(file_b)?;
    let (d1, method) = if a.grid().dim() == 1 {
        (wasserstein1(&a, &b)?, "circle-cdf")
    } else {
        (w1_lp_oracle(&a, &b)?, "transport-lp")
    };
    let hash = |p: &Path| -> torus_mfg::Result<String> {
        let bytes = std::fs::read(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
        Ok(format!("fnv1a64:{:016x}", fnv1a64(&bytes)))
    };
    let report = Report {
        schema: "torus-mfg.w1.v1".into(),
        command: "w1".into(),
        config: ConfigEcho { resolved: BTreeMap::new(), content_hash: "none".into() },
        result: W1Result {
            d1,
            file_a: file_a.display().to_string(),
            file_b: file_b.display().to_string(),
            hash_a: hash(file_a)?,
            hash_b: hash(file_b)?,
            method,
        },
    };
    emit(&report, out, "w1.json")?;
    Ok(0)
}

fn cmd_semigroup(common: Common, split: &str) -> torus_mfg::Result<i32> {
    let p = load_problem(&common.config)?;
    let parts: Vec<usize> = split
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad --split component {s:?}")))
        })
        .collect::<torus_mfg::Result<_>>()?;
    if parts.len() != 2 {
        return Err(Error::Config("--split takes EARLY,LATE".into()));
    }
    let (early, late) = (parts[0], parts[1]);
    let residual = semigroup_check(&p.mu, &p.u, &p.spec, &p.scheme, late, early)?;
    let report = Report {
        schema: "torus-mfg.semigroup.v1".into(),
        command: "semigroup".into(),
        config: echo(&p.raw),
        result: SemigroupResult { split_early: early, split_late: late, residual },
    };
    emit(&report, &common.out, "semigroup.json")?;
    Ok(0)
}
