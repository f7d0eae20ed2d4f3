//! Subcommand dispatch: runs one pipeline for a [`RunConfig`] and writes
//! its CSV artifacts plus a `run.txt` manifest into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{BasisKind, RunConfig, SUBCOMMANDS};
use crate::csv::{self, num};
use crate::drbsde::{check_flat_off, solve_drbsde_lattice, solve_drbsde_lsmc, Basis, DrbsdeSolution, Mode};
use crate::error::{Error, Result};
use crate::game::{
    build_lattice, dpp_check, dpp_check_refined, dynkin_corpus, value_backward_induction, Lattice, NodeControls, Order,
};
use crate::linalg::{random_spd, spd_sqrt_series, sqrt_residual, DEFAULT_TERMS, DEFAULT_TOL};
use crate::model::{validate_problem, GameProblem};
use crate::paths::{euler_forward, simulate_brownian, ControlPath};
use crate::pde::{convergence_study, cross_check, solve_obstacle_pde, viscosity_residual, PdeGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerances for the pass/fail checks of the check subcommands.
pub const ORACLE_TOL: f64 = 1e-12;
pub const CROSSCHECK_TOL: f64 = 1e-10;
pub const SQRT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Validate,
    Simulate,
    Drbsde,
    Value,
    Pde,
    DynkinOracle,
    DppCheck,
    Crosscheck,
    SqrtCheck,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::Validate,
        Subcommand::Simulate,
        Subcommand::Drbsde,
        Subcommand::Value,
        Subcommand::Pde,
        Subcommand::DynkinOracle,
        Subcommand::DppCheck,
        Subcommand::Crosscheck,
        Subcommand::SqrtCheck,
    ];

    pub fn as_str(self) -> &'static str {
        SUBCOMMANDS[Self::ALL.iter().position(|&s| s == self).expect("listed")]
    }

    pub fn parse(s: &str) -> Option<Self> {
        SUBCOMMANDS.iter().position(|&n| n == s).map(|i| Self::ALL[i])
    }
}

/// Result of a completed run. `status` is 0, or 1 when a check failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: i32,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        csv::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

fn lattice(cfg: &RunConfig, p: &GameProblem) -> Result<Lattice> {
    let g = &cfg.grid;
    build_lattice(p, g.n_steps, g.x_min, g.x_max, g.n_nodes)
}

fn pde_grid(cfg: &RunConfig, p: &GameProblem) -> Result<PdeGrid> {
    let g = &cfg.grid;
    PdeGrid::new(p, g.n_steps, g.x_min, g.x_max, g.n_nodes)
}

fn uses_grid(sub: Subcommand, cfg: &RunConfig) -> bool {
    match sub {
        Subcommand::Value | Subcommand::Pde | Subcommand::DppCheck | Subcommand::Crosscheck => true,
        Subcommand::Drbsde => cfg.solver.mode == Mode::Lattice,
        _ => false,
    }
}

/// Runs `sub` and writes its artifacts into `cfg.output_dir`.
///
/// Errors carry their exit status via [`Error::exit_code`]; grid-based
/// subcommands check the CFL and step-size conditions before solving.
pub fn run(sub: Subcommand, cfg: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let p = cfg.problem()?;
    if uses_grid(sub, cfg) {
        pde_grid(cfg, &p)?;
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut out = Artifacts {
        dir: Path::new(&cfg.output_dir).to_path_buf(),
        files: Vec::new(),
    };
    let (status, summary) = match sub {
        Subcommand::Validate => validate(cfg, &p, &mut out)?,
        Subcommand::Simulate => simulate(cfg, &p, &mut out)?,
        Subcommand::Drbsde => drbsde(cfg, &p, &mut out)?,
        Subcommand::Value => value(cfg, &p, &mut out)?,
        Subcommand::Pde => pde(cfg, &p, &mut out)?,
        Subcommand::DynkinOracle => dynkin_oracle(cfg, &mut out)?,
        Subcommand::DppCheck => dpp(cfg, &p, &mut out)?,
        Subcommand::Crosscheck => crosscheck(cfg, &p, &mut out)?,
        Subcommand::SqrtCheck => sqrt_check(cfg, &mut out)?,
    };
    let manifest = manifest(sub, cfg, &p, start.elapsed().as_secs_f64());
    out.write("run.txt", &manifest)?;
    Ok(RunOutcome {
        status,
        summary,
        files: out.files,
    })
}

/// Every effective setting, with preset parameters expanded to the values
/// the preset actually used, followed by a `[run]` section.
pub fn manifest(sub: Subcommand, cfg: &RunConfig, p: &GameProblem, wall_time_s: f64) -> String {
    let mut effective = cfg.clone();
    effective.params = p.params().clone();
    let mut doc = effective.to_document();
    let _ = writeln!(doc, "\n[run]");
    let _ = writeln!(doc, "subcommand = {}", sub.as_str());
    let _ = writeln!(doc, "version = {VERSION}");
    let _ = writeln!(doc, "wall_time_s = {wall_time_s}");
    doc
}

fn validate(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let report = validate_problem(p, cfg.solver.samples, cfg.mc.seed)?;
    out.write("validation.csv", &report.to_csv())?;
    let status = if report.passed() { 0 } else { 1 };
    Ok((status, format!("{}: assumptions {}", p.name(), if status == 0 { "hold" } else { "FAIL" })))
}

fn simulate(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let grid = cfg.time_grid(p)?;
    let n = cfg.mc.n_paths;
    let ens = simulate_brownian(&grid, n, p.noise_dim(), cfg.mc.seed)?;
    let mu = ControlPath::constant(n, grid.n_steps(), cfg.solver.u_index);
    let nu = ControlPath::constant(n, grid.n_steps(), cfg.solver.v_index);
    let states = euler_forward(p, &ens, &vec![cfg.x0; p.state_dim()], &mu, &nu)?;
    out.write("brownian.csv", &ens.to_csv())?;
    out.write("states.csv", &states.to_csv())?;
    Ok((0, format!("{n} paths, {} steps", grid.n_steps())))
}

fn drbsde(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let s = &cfg.solver;
    let sol: DrbsdeSolution = match s.mode {
        Mode::Lattice => {
            let lat = lattice(cfg, p)?;
            let mu = NodeControls::constant(&lat, s.u_index);
            let nu = NodeControls::constant(&lat, s.v_index);
            solve_drbsde_lattice(p, &lat, &mu, &nu)?
        }
        Mode::Lsmc => {
            let grid = cfg.time_grid(p)?;
            let n = cfg.mc.n_paths;
            let ens = simulate_brownian(&grid, n, p.noise_dim(), cfg.mc.seed)?;
            let mu = ControlPath::constant(n, grid.n_steps(), s.u_index);
            let nu = ControlPath::constant(n, grid.n_steps(), s.v_index);
            let states = euler_forward(p, &ens, &vec![cfg.x0; p.state_dim()], &mu, &nu)?;
            let basis = match s.basis {
                BasisKind::Polynomial => Basis::Polynomial {
                    degree: s.basis_degree,
                    with_obstacles: true,
                },
                BasisKind::Bins => Basis::Bins { n_bins: s.n_bins },
            };
            solve_drbsde_lsmc(p, &ens, &states, &mu, &nu, &basis)?
        }
    };
    let root = sol.root(cfg.x0);
    let (res_lo, res_hi) = check_flat_off(&sol, p);
    let sandwich = sol.sandwich_violation(p);
    out.write("drbsde.csv", &sol.to_csv())?;
    out.write(
        "summary.csv",
        &csv::document(
            "mode,root,std_error,res_lo,res_hi,sandwich_violation",
            [vec![
                s.mode.as_str().to_string(),
                num(root),
                num(sol.root_std_error),
                num(res_lo),
                num(res_hi),
                num(sandwich),
            ]],
        ),
    )?;
    Ok((0, format!("Y_0 = {root} ({} mode)", s.mode.as_str())))
}

fn value(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let lat = lattice(cfg, p)?;
    let w = value_backward_induction(p, &lat, cfg.solver.order)?;
    out.write("value.csv", &w.to_csv())?;
    Ok((0, format!("{} value at x0: {}", cfg.solver.order, w.root(cfg.x0))))
}

fn pde(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let g = pde_grid(cfg, p)?;
    let order = cfg.solver.order;
    let w = solve_obstacle_pde(p, &g, order)?;
    let res = viscosity_residual(p, &g, &w, order)?;
    let study = convergence_study(p, &g, cfg.solver.levels, order, cfg.x0)?;
    out.write("pde.csv", &w.to_csv())?;
    out.write("residual.csv", &res.to_csv())?;
    out.write("convergence.csv", &study.to_csv())?;
    Ok((0, format!("PDE value at x0: {}, max residual {:e}", w.root(cfg.x0), res.max_abs)))
}

fn dynkin_oracle(cfg: &RunConfig, out: &mut Artifacts) -> Result<(i32, String)> {
    let corpus = dynkin_corpus(cfg.solver.tree_count, cfg.solver.tree_depth, cfg.mc.seed)?;
    let mut rows = Vec::with_capacity(corpus.len());
    let mut worst: f64 = 0.0;
    for (k, case) in corpus.iter().enumerate() {
        let a = case.recursion()?;
        let b = case.brute_force()?;
        worst = worst.max((a - b).abs());
        rows.push(vec![
            k.to_string(),
            case.tree.depth.to_string(),
            num(a),
            num(b),
            num((a - b).abs()),
        ]);
    }
    out.write("dynkin.csv", &csv::document("tree,depth,recursion,brute_force,abs_diff", rows))?;
    let status = if worst <= ORACLE_TOL { 0 } else { 1 };
    Ok((status, format!("{} trees, max |recursion - brute force| = {worst:e}", corpus.len())))
}

fn dpp(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let lat = lattice(cfg, p)?;
    let grid = lat.grid().clone();
    let n = grid.n_steps();
    let knots: Vec<usize> = match cfg.grid.t_mid {
        Some(t) => vec![grid.knot_index(t).ok_or_else(|| Error::InvalidArgument(format!("t_mid {t} is not a knot")))?],
        None => {
            let mut v: Vec<usize> = [n / 4, n / 2, 3 * n / 4].into_iter().filter(|&j| j > 0 && j < n).collect();
            v.dedup();
            v
        }
    };
    if knots.is_empty() {
        return Err(Error::InvalidArgument("the time grid has no interior knot".into()));
    }
    let order = cfg.solver.order;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &j in &knots {
        let t = grid.knot(j);
        let m = dpp_check(p, &lat, t, order, cfg.x0)?;
        worst = worst.max(m.gap);
        let r = dpp_check_refined(p, &lat, t, order, cfg.x0)?;
        for (variant, rep) in [("matching", m), ("refined", r)] {
            rows.push(vec![num(t), variant.to_string(), num(rep.direct), num(rep.composed), num(rep.gap)]);
        }
    }
    out.write("dpp.csv", &csv::document("t_mid,variant,direct,composed,gap", rows))?;
    let status = if worst <= ORACLE_TOL { 0 } else { 1 };
    Ok((status, format!("max matching-grid gap {worst:e}")))
}

fn crosscheck(cfg: &RunConfig, p: &GameProblem, out: &mut Artifacts) -> Result<(i32, String)> {
    let lat = lattice(cfg, p)?;
    let g = pde_grid(cfg, p)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for order in [Order::SupInf, Order::InfSup] {
        let c = cross_check(p, &lat, &g, order, cfg.x0)?;
        worst = worst.max(c.rel_gap);
        rows.push(vec![
            order.as_str().to_string(),
            num(c.lattice_root),
            num(c.pde_root),
            num(c.rel_gap),
        ]);
    }
    out.write("crosscheck.csv", &csv::document("order,lattice_root,pde_root,rel_gap", rows))?;
    let status = if worst <= CROSSCHECK_TOL { 0 } else { 1 };
    Ok((status, format!("max rel_gap {worst:e}")))
}

/// Seed of trial `k`; spreads trials over the 64-bit seed space.
fn trial_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64)
}

fn sqrt_check(cfg: &RunConfig, out: &mut Artifacts) -> Result<(i32, String)> {
    let s = &cfg.solver;
    let mut rows = Vec::with_capacity(s.sqrt_trials);
    let mut worst: f64 = 0.0;
    for k in 0..s.sqrt_trials {
        let d = 1 + k % s.sqrt_dim;
        let gamma = random_spd(d, s.sqrt_cond, trial_seed(cfg.mc.seed, k))?;
        let r = spd_sqrt_series(&gamma, DEFAULT_TERMS, DEFAULT_TOL)?;
        let res = sqrt_residual(&gamma, &r);
        worst = worst.max(res);
        rows.push(vec![k.to_string(), num(res)]);
    }
    out.write("sqrt.csv", &csv::document("trial,residual", rows))?;
    let status = if worst <= SQRT_TOL { 0 } else { 1 };
    Ok((status, format!("{} trials, max residual {worst:e}", s.sqrt_trials)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(doc: &str, dir: &Path) -> RunConfig {
        let mut c = parse_config(doc).unwrap();
        c.output_dir = dir.to_string_lossy().into_owned();
        c
    }

    #[test]
    fn subcommand_names_round_trip() {
        for s in Subcommand::ALL {
            assert_eq!(Subcommand::parse(s.as_str()), Some(s));
        }
        assert_eq!(Subcommand::parse("nope"), None);
    }

    #[test]
    fn manifest_reparses_to_effective_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("[problem]\npreset = dynkin-flat\n[grid]\nn_steps = 20\nn_nodes = 11\n", dir.path());
        let o = run(Subcommand::Value, &c).unwrap();
        assert_eq!(o.status, 0);
        let text = std::fs::read_to_string(dir.path().join("run.txt")).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(back.grid, c.grid);
        assert_eq!(back.problem().unwrap().params(), c.problem().unwrap().params());
        assert!(text.contains("version = ") && text.contains("wall_time_s = "));
    }

    #[test]
    fn cfl_violation_is_numerical() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("[problem]\npreset = dynkin-flat\n[grid]\nn_steps = 2\nn_nodes = 201\n", dir.path());
        let e = run(Subcommand::Pde, &c).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("exceeds 1"), "{e}");
    }

    #[test]
    fn oracle_and_sqrt_checks_pass() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("[problem]\npreset = dynkin-flat\n[solver]\nsqrt_trials = 8\n", dir.path());
        assert_eq!(run(Subcommand::DynkinOracle, &c).unwrap().status, 0);
        assert_eq!(run(Subcommand::SqrtCheck, &c).unwrap().status, 0);
        let text = std::fs::read_to_string(dir.path().join("sqrt.csv")).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("trial,residual\n"));
    }
}
