//! Run configuration documents.
//!
//! Line-oriented `key = value` pairs under `[problem]`, `[grid]`, `[mc]`,
//! `[solver]` and `[output]` headers. `#` starts a comment, keys are
//! case-sensitive and unknown keys are errors. In `[problem]`, every key
//! other than `preset` and `x0` is passed to the preset. A `[run]` section
//! (`subcommand`, `version`, `wall_time_s`) is accepted so that manifests
//! parse back; it does not affect the configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::drbsde::Mode;
use crate::error::{Error, Result};
use crate::game::Order;
use crate::model::{make_preset, GameProblem};
use crate::paths::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Polynomial,
    Bins,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Polynomial => "polynomial",
            BasisKind::Bins => "bins",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub n_steps: usize,
    pub n_nodes: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// Split time for `dpp-check`; `None` tests the quartile knots.
    pub t_mid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub order: Order,
    pub mode: Mode,
    pub basis: BasisKind,
    pub basis_degree: usize,
    pub n_bins: usize,
    pub u_index: usize,
    pub v_index: usize,
    pub samples: usize,
    pub levels: usize,
    pub tree_depth: usize,
    pub tree_count: usize,
    pub sqrt_trials: usize,
    pub sqrt_dim: usize,
    pub sqrt_cond: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub params: BTreeMap<String, String>,
    pub x0: f64,
    pub grid: GridSettings,
    pub mc: McSettings,
    pub solver: SolverSettings,
    pub output_dir: String,
}

impl GridSettings {
    /// Default grid of a preset: one that satisfies the CFL and drift
    /// conditions with the preset's default parameters.
    pub fn for_preset(preset: &str) -> Self {
        let (n_steps, n_nodes, x_min, x_max) = match preset {
            "bsb-convex" => (600, 61, 0.0, 3.0),
            "linear-quadratic" => (400, 41, -2.0, 2.0),
            _ => (400, 121, -6.0, 6.0),
        };
        Self {
            n_steps,
            n_nodes,
            x_min,
            x_max,
            t_mid: None,
        }
    }
}

/// Default initial state of a preset: the strike for `bsb-convex`, else 0.
pub fn default_x0(preset: &str) -> f64 {
    if preset == "bsb-convex" {
        1.0
    } else {
        0.0
    }
}

impl Default for McSettings {
    fn default() -> Self {
        Self { n_paths: 1000, seed: 1 }
    }
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            order: Order::SupInf,
            mode: Mode::Lattice,
            basis: BasisKind::Polynomial,
            basis_degree: 3,
            n_bins: 50,
            u_index: 0,
            v_index: 0,
            samples: 1000,
            levels: 2,
            tree_depth: 2,
            tree_count: 20,
            sqrt_trials: 100,
            sqrt_dim: 4,
            sqrt_cond: 100.0,
        }
    }
}

impl RunConfig {
    /// All defaults for the given preset.
    pub fn new(preset: &str) -> Self {
        Self {
            preset: preset.to_string(),
            params: BTreeMap::new(),
            x0: default_x0(preset),
            grid: GridSettings::for_preset(preset),
            mc: McSettings::default(),
            solver: SolverSettings::default(),
            output_dir: "out".to_string(),
        }
    }

    pub fn problem(&self) -> Result<GameProblem> {
        make_preset(&self.preset, &self.params)
    }

    pub fn time_grid(&self, p: &GameProblem) -> Result<TimeGrid> {
        TimeGrid::new(0.0, p.horizon(), self.grid.n_steps)
    }

    /// Serializes every setting; `parse_config` reads it back to an equal value.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[problem]");
        let _ = writeln!(out, "preset = {}", self.preset);
        let _ = writeln!(out, "x0 = {}", self.x0);
        for (k, v) in &self.params {
            let _ = writeln!(out, "{k} = {v}");
        }
        let g = &self.grid;
        let _ = writeln!(out, "\n[grid]");
        let _ = writeln!(out, "n_steps = {}", g.n_steps);
        let _ = writeln!(out, "n_nodes = {}", g.n_nodes);
        let _ = writeln!(out, "x_min = {}", g.x_min);
        let _ = writeln!(out, "x_max = {}", g.x_max);
        if let Some(t) = g.t_mid {
            let _ = writeln!(out, "t_mid = {t}");
        }
        let _ = writeln!(out, "\n[mc]");
        let _ = writeln!(out, "n_paths = {}", self.mc.n_paths);
        let _ = writeln!(out, "seed = {}", self.mc.seed);
        let s = &self.solver;
        let _ = writeln!(out, "\n[solver]");
        let _ = writeln!(out, "order = {}", s.order.as_str());
        let _ = writeln!(out, "mode = {}", s.mode.as_str());
        let _ = writeln!(out, "basis = {}", s.basis.as_str());
        let _ = writeln!(out, "basis_degree = {}", s.basis_degree);
        let _ = writeln!(out, "n_bins = {}", s.n_bins);
        let _ = writeln!(out, "u_index = {}", s.u_index);
        let _ = writeln!(out, "v_index = {}", s.v_index);
        let _ = writeln!(out, "samples = {}", s.samples);
        let _ = writeln!(out, "levels = {}", s.levels);
        let _ = writeln!(out, "tree_depth = {}", s.tree_depth);
        let _ = writeln!(out, "tree_count = {}", s.tree_count);
        let _ = writeln!(out, "sqrt_trials = {}", s.sqrt_trials);
        let _ = writeln!(out, "sqrt_dim = {}", s.sqrt_dim);
        let _ = writeln!(out, "sqrt_cond = {}", s.sqrt_cond);
        let _ = writeln!(out, "\n[output]");
        let _ = writeln!(out, "dir = {}", self.output_dir);
        out
    }
}

const SECTIONS: [&str; 6] = ["problem", "grid", "mc", "solver", "output", "run"];

pub const SUBCOMMANDS: [&str; 9] = [
    "validate",
    "simulate",
    "drbsde",
    "value",
    "pde",
    "dynkin-oracle",
    "dpp-check",
    "crosscheck",
    "sqrt-check",
];

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str, what: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(line, format!("`{key}`: expected {what}, got `{v}`")))
}

fn positive(line: usize, key: &str, v: &str) -> Result<usize> {
    let n: i64 = parse_num(line, key, v, "an integer")?;
    if n < 1 {
        return Err(Error::config(line, format!("`{key}` must be a positive integer, got {n}")));
    }
    Ok(n as usize)
}

fn nonneg(line: usize, key: &str, v: &str) -> Result<usize> {
    let n: i64 = parse_num(line, key, v, "an integer")?;
    if n < 0 {
        return Err(Error::config(line, format!("`{key}` must be a nonnegative integer, got {n}")));
    }
    Ok(n as usize)
}

fn finite(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(line, key, v, "a number")?;
    if !x.is_finite() {
        return Err(Error::config(line, format!("`{key}` must be finite")));
    }
    Ok(x)
}

/// Parses a configuration document; omitted keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::new("");
    // grid keys and x0 default per preset, which may be named later
    let mut x0 = None;
    let (mut n_steps, mut n_nodes, mut x_min, mut x_max) = (None, None, None, None);
    let mut preset_line = None;
    let mut param_lines = BTreeMap::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut section: Option<String> = None;
    let mut lines = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line, format!("malformed section header `{content}`")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::config(line, format!("unknown section `[{name}]`")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::config(line, "empty key or value"));
        }
        let sec = section
            .clone()
            .ok_or_else(|| Error::config(line, format!("`{key}` appears before any section header")))?;
        if let Some(prev) = seen.insert((sec.clone(), key.to_string()), line) {
            return Err(Error::config(line, format!("duplicate key `{key}` (first set at line {prev})")));
        }
        lines.insert(key.to_string(), line);
        let s = &mut cfg.solver;
        match (sec.as_str(), key) {
            ("problem", "preset") => {
                cfg.preset = value.to_string();
                preset_line = Some(line);
            }
            ("problem", "x0") => x0 = Some(finite(line, key, value)?),
            ("problem", _) => {
                cfg.params.insert(key.to_string(), value.to_string());
                param_lines.insert(key.to_string(), line);
            }
            ("grid", "n_steps") => n_steps = Some(positive(line, key, value)?),
            ("grid", "n_nodes") => {
                let n = positive(line, key, value)?;
                if n < 3 {
                    return Err(Error::config(line, format!("`n_nodes` must be at least 3, got {n}")));
                }
                n_nodes = Some(n);
            }
            ("grid", "x_min") => x_min = Some(finite(line, key, value)?),
            ("grid", "x_max") => x_max = Some(finite(line, key, value)?),
            ("grid", "t_mid") => cfg.grid.t_mid = Some(finite(line, key, value)?),
            ("mc", "n_paths") => cfg.mc.n_paths = positive(line, key, value)?,
            ("mc", "seed") => cfg.mc.seed = parse_num(line, key, value, "an unsigned integer")?,
            ("solver", "order") => {
                s.order = Order::parse(value)
                    .ok_or_else(|| Error::config(line, format!("`order` must be supinf or infsup, got `{value}`")))?
            }
            ("solver", "mode") => {
                s.mode = match value {
                    "lattice" => Mode::Lattice,
                    "lsmc" => Mode::Lsmc,
                    _ => return Err(Error::config(line, format!("`mode` must be lattice or lsmc, got `{value}`"))),
                }
            }
            ("solver", "basis") => {
                s.basis = match value {
                    "polynomial" => BasisKind::Polynomial,
                    "bins" => BasisKind::Bins,
                    _ => {
                        return Err(Error::config(
                            line,
                            format!("`basis` must be polynomial or bins, got `{value}`"),
                        ))
                    }
                }
            }
            ("solver", "basis_degree") => s.basis_degree = positive(line, key, value)?,
            ("solver", "n_bins") => s.n_bins = positive(line, key, value)?,
            ("solver", "u_index") => s.u_index = nonneg(line, key, value)?,
            ("solver", "v_index") => s.v_index = nonneg(line, key, value)?,
            ("solver", "samples") => s.samples = positive(line, key, value)?,
            ("solver", "levels") => s.levels = nonneg(line, key, value)?,
            ("solver", "tree_depth") => {
                s.tree_depth = positive(line, key, value)?;
                if s.tree_depth > crate::game::dynkin::MAX_DEPTH {
                    return Err(Error::config(line, format!("`tree_depth` must be at most 4, got {}", s.tree_depth)));
                }
            }
            ("solver", "tree_count") => s.tree_count = positive(line, key, value)?,
            ("solver", "sqrt_trials") => s.sqrt_trials = positive(line, key, value)?,
            ("solver", "sqrt_dim") => s.sqrt_dim = positive(line, key, value)?,
            ("solver", "sqrt_cond") => {
                s.sqrt_cond = finite(line, key, value)?;
                if s.sqrt_cond < 1.0 {
                    return Err(Error::config(line, format!("`sqrt_cond` must be at least 1, got {}", s.sqrt_cond)));
                }
            }
            ("output", "dir") => cfg.output_dir = value.to_string(),
            ("run", "subcommand") => {
                if !SUBCOMMANDS.contains(&value) {
                    return Err(Error::config(line, format!("unknown subcommand `{value}`")));
                }
            }
            ("run", "version") => {}
            ("run", "wall_time_s") => {
                finite(line, key, value)?;
            }
            (sec, key) => return Err(Error::config(line, format!("unknown key `{key}` in [{sec}]"))),
        }
    }

    let Some(preset_line) = preset_line else {
        return Err(Error::Config {
            line: None,
            msg: "missing `preset` in [problem]".into(),
        });
    };
    let d = GridSettings::for_preset(&cfg.preset);
    cfg.grid.n_steps = n_steps.unwrap_or(d.n_steps);
    cfg.grid.n_nodes = n_nodes.unwrap_or(d.n_nodes);
    cfg.grid.x_min = x_min.unwrap_or(d.x_min);
    cfg.grid.x_max = x_max.unwrap_or(d.x_max);
    cfg.x0 = x0.unwrap_or(default_x0(&cfg.preset));
    let p = cfg.problem().map_err(|e| {
        let line = match &e {
            Error::InvalidParameter { key, .. } => param_lines.get(key).copied().unwrap_or(preset_line),
            _ => preset_line,
        };
        Error::config(line, e.to_string())
    })?;

    let at = |key: &str| lines.get(key).copied();
    let fail = |key: &str, msg: String| match at(key) {
        Some(line) => Error::config(line, msg),
        None => Error::Config { line: None, msg },
    };
    if !(cfg.grid.x_min < cfg.grid.x_max) {
        return Err(fail(
            "x_max",
            format!("x_min {} must be below x_max {}", cfg.grid.x_min, cfg.grid.x_max),
        ));
    }
    if !(cfg.grid.x_min..=cfg.grid.x_max).contains(&cfg.x0) {
        return Err(fail(
            "x0",
            format!("x0 {} lies outside [{}, {}]", cfg.x0, cfg.grid.x_min, cfg.grid.x_max),
        ));
    }
    if let Some(t) = cfg.grid.t_mid {
        let grid = cfg.time_grid(&p).map_err(|e| fail("n_steps", e.to_string()))?;
        match grid.knot_index(t) {
            Some(j) if j > 0 && j < grid.n_steps() => {}
            _ => return Err(fail("t_mid", format!("t_mid {t} is not an interior knot of the time grid"))),
        }
    }
    if cfg.solver.u_index >= p.u_grid().len() {
        return Err(fail(
            "u_index",
            format!("u_index {} exceeds the {} points of u", cfg.solver.u_index, p.u_grid().len()),
        ));
    }
    if cfg.solver.v_index >= p.v_grid().len() {
        return Err(fail(
            "v_index",
            format!("v_index {} exceeds the {} points of v", cfg.solver.v_index, p.v_grid().len()),
        ));
    }
    Ok(cfg)
}
