//! Time grids, Brownian ensembles and forward Euler–Maruyama simulation of
//! the controlled state, together with path concatenation and control
//! pasting on grid paths.

pub mod rng;

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::csv;
use crate::error::{Error, Result};
use crate::model::GameProblem;

pub use rng::CounterRng;

/// Uniform grid `t0 = s_0 < s_1 < … < s_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0 >= 0.0 && t_end > t0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs 0 <= t0 < T, got [{t0}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        Ok(Self {
            t0,
            t_end,
            n_steps,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// Knot `j`; the last knot is exactly `T`.
    pub fn knot(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_end
        } else {
            self.t0 + j as f64 * self.dt()
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.knot(j)).collect()
    }

    /// Index of the knot equal to `s` (to 1e-9 relative of the spacing).
    pub fn knot_index(&self, s: f64) -> Option<usize> {
        let pos = (s - self.t0) / self.dt();
        let j = pos.round();
        if j < 0.0 || j > self.n_steps as f64 || (pos - j).abs() > 1e-9 {
            None
        } else {
            Some(j as usize)
        }
    }

    /// The grid restricted to `[s_j, T]`.
    pub fn restrict(&self, j: usize) -> Result<TimeGrid> {
        if j >= self.n_steps {
            return Err(Error::OutOfRange(format!(
                "cannot restrict a {}-step grid at knot {j}",
                self.n_steps
            )));
        }
        Ok(TimeGrid {
            t0: self.knot(j),
            t_end: self.t_end,
            n_steps: self.n_steps - j,
        })
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            t_end: self.t_end,
            n_steps: self.n_steps * factor.max(1),
        }
    }

    fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.t0 - other.t0).abs() <= 1e-12 * self.t_end.abs().max(1.0)
            && (self.t_end - other.t_end).abs() <= 1e-12 * self.t_end.abs().max(1.0)
    }
}

/// Brownian increments `dW[path][step][coord]`, each `N(0, Δt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub dim: usize,
    pub seed: u64,
    dw: Vec<f64>,
}

impl PathEnsemble {
    pub fn increments(&self) -> &[f64] {
        &self.dw
    }

    /// Increments of one path, `[step][coord]` flattened.
    pub fn path(&self, path: usize) -> &[f64] {
        let w = self.grid.n_steps() * self.dim;
        &self.dw[path * w..(path + 1) * w]
    }

    #[inline]
    pub fn dw(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.grid.n_steps() + step) * self.dim;
        &self.dw[base..base + self.dim]
    }

    /// The Brownian path `B_{s_j} - B_{t0}` of one ensemble member.
    pub fn brownian_path(&self, path: usize) -> DiscretePath {
        let n = self.grid.n_steps();
        let mut values = vec![0.0; (n + 1) * self.dim];
        for j in 0..n {
            for c in 0..self.dim {
                values[(j + 1) * self.dim + c] = values[j * self.dim + c] + self.dw(path, j)[c];
            }
        }
        DiscretePath {
            grid: self.grid.clone(),
            dim: self.dim,
            values,
        }
    }

    pub fn to_csv(&self) -> String {
        let n = self.grid.n_steps();
        let rows = (0..self.n_paths).flat_map(|p| {
            (0..n).flat_map(move |j| {
                (0..self.dim).map(move |c| {
                    vec![
                        p.to_string(),
                        j.to_string(),
                        c.to_string(),
                        csv::num(self.dw(p, j)[c]),
                    ]
                })
            })
        });
        csv::document("path,step,coord,value", rows)
    }
}

/// Draws `n_paths` independent `d`-dimensional Brownian increment paths.
///
/// Increment `(path, step, coord)` is draw `step·d + coord` of counter
/// stream `path` under `seed`, scaled by `√Δt`.
pub fn simulate_brownian(grid: &TimeGrid, n_paths: usize, d: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 || d == 0 {
        return Err(Error::InvalidArgument("n_paths and d must be positive".into()));
    }
    let n = grid.n_steps();
    let sqrt_dt = grid.dt().sqrt();
    let mut dw = vec![0.0; n_paths * n * d];
    dw.par_chunks_mut(n * d).enumerate().for_each(|(p, chunk)| {
        let mut rng = CounterRng::new(seed, p as u64);
        for v in chunk.iter_mut() {
            *v = rng.next_gaussian() * sqrt_dt;
        }
    });
    Ok(PathEnsemble {
        grid: grid.clone(),
        n_paths,
        dim: d,
        seed,
        dw,
    })
}

/// Grid-valued control process: an index into a control grid per
/// `(path, step)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlPath {
    n_paths: usize,
    n_steps: usize,
    values: Vec<u32>,
}

impl ControlPath {
    pub fn constant(n_paths: usize, n_steps: usize, index: usize) -> Self {
        Self {
            n_paths,
            n_steps,
            values: vec![index as u32; n_paths * n_steps],
        }
    }

    pub fn from_fn(n_paths: usize, n_steps: usize, f: impl Fn(usize, usize) -> usize) -> Self {
        let mut values = Vec::with_capacity(n_paths * n_steps);
        for p in 0..n_paths {
            for j in 0..n_steps {
                values.push(f(p, j) as u32);
            }
        }
        Self {
            n_paths,
            n_steps,
            values,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn get(&self, path: usize, step: usize) -> usize {
        self.values[path * self.n_steps + step] as usize
    }

    fn set(&mut self, path: usize, step: usize, idx: usize) {
        self.values[path * self.n_steps + step] = idx as u32;
    }

    /// Errors unless every index is below `grid_len`.
    pub fn check_range(&self, grid_len: usize) -> Result<()> {
        match self.values.iter().position(|&v| v as usize >= grid_len) {
            None => Ok(()),
            Some(pos) => Err(Error::OutOfRange(format!(
                "control index {} at path {}, step {} exceeds grid of size {grid_len}",
                self.values[pos],
                pos / self.n_steps.max(1),
                pos % self.n_steps.max(1)
            ))),
        }
    }
}

/// Simulated states `X[path][knot][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePaths {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub dim: usize,
    pub x0: Vec<f64>,
    x: Vec<f64>,
}

impl StatePaths {
    #[inline]
    pub fn state(&self, path: usize, knot: usize) -> &[f64] {
        let base = (path * (self.grid.n_steps() + 1) + knot) * self.dim;
        &self.x[base..base + self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn to_csv(&self) -> String {
        let n = self.grid.n_steps();
        let rows = (0..self.n_paths).flat_map(|p| {
            (0..=n).flat_map(move |j| {
                (0..self.dim).map(move |c| {
                    vec![
                        p.to_string(),
                        j.to_string(),
                        c.to_string(),
                        csv::num(self.state(p, j)[c]),
                    ]
                })
            })
        });
        csv::document("path,step,coord,value", rows)
    }
}

/// Euler–Maruyama for the controlled SDE:
/// `X_{j+1} = X_j + b(s_j, X_j, u, v) Δt + σ(s_j, X_j, u, v) ΔW_j`.
pub fn euler_forward(
    p: &GameProblem,
    ens: &PathEnsemble,
    x0: &[f64],
    mu: &ControlPath,
    nu: &ControlPath,
) -> Result<StatePaths> {
    let k = p.state_dim();
    let d = p.noise_dim();
    let n = ens.grid.n_steps();
    if x0.len() != k {
        return Err(Error::Dimension(format!("x0 has length {}, expected {k}", x0.len())));
    }
    if ens.dim != d {
        return Err(Error::Dimension(format!(
            "ensemble noise dimension {} differs from problem's {d}",
            ens.dim
        )));
    }
    for (name, c) in [("mu", mu), ("nu", nu)] {
        if c.n_paths() != ens.n_paths || c.n_steps() != n {
            return Err(Error::Dimension(format!(
                "{name} is {}x{}, ensemble is {}x{n}",
                c.n_paths(),
                c.n_steps(),
                ens.n_paths
            )));
        }
    }
    mu.check_range(p.u_grid().len())?;
    nu.check_range(p.v_grid().len())?;

    let dt = ens.grid.dt();
    let stride = (n + 1) * k;
    let mut x = vec![0.0; ens.n_paths * stride];
    let outcomes: Vec<Result<()>> = x
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(path, xs)| {
            xs[..k].copy_from_slice(x0);
            for j in 0..n {
                let t = ens.grid.knot(j);
                let u = p.u_grid().point(mu.get(path, j));
                let v = p.v_grid().point(nu.get(path, j));
                let (head, tail) = xs.split_at_mut((j + 1) * k);
                let cur = &head[j * k..];
                let b = p.drift(t, cur, u, v);
                let s = p.diffusion(t, cur, u, v);
                let dw = ens.dw(path, j);
                for i in 0..k {
                    let mut next = cur[i] + b[i] * dt;
                    for c in 0..d {
                        next += s[i * d + c] * dw[c];
                    }
                    if !next.is_finite() {
                        return Err(Error::NonFinite {
                            what: "state".into(),
                            detail: format!("path {path}, step {}", j + 1),
                        });
                    }
                    tail[i] = next;
                }
            }
            Ok(())
        })
        .collect();
    outcomes.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(StatePaths {
        grid: ens.grid.clone(),
        n_paths: ens.n_paths,
        dim: k,
        x0: x0.to_vec(),
        x,
    })
}

/// A single discrete path on a time grid, `values[knot][coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub grid: TimeGrid,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl DiscretePath {
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let values = grid.knots().into_iter().flat_map(f).collect();
        Self { grid, dim, values }
    }

    pub fn at(&self, knot: usize) -> &[f64] {
        &self.values[knot * self.dim..(knot + 1) * self.dim]
    }
}

/// Concatenation `ω ⊗_s ω̃`: equals `ω` before knot `s` and `ω(s) + ω̃(r)`
/// from `s` on.
pub fn concat_paths(omega: &DiscretePath, tail: &DiscretePath, s: usize) -> Result<DiscretePath> {
    let restricted = omega.grid.restrict(s)?;
    if !restricted.same_as(&tail.grid) || omega.dim != tail.dim {
        return Err(Error::GridMismatch(format!(
            "tail grid must be the restriction of the head grid to knot {s}"
        )));
    }
    if tail.at(0).iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidArgument("tail path must start at 0".into()));
    }
    let dim = omega.dim;
    let mut values = omega.values[..s * dim].to_vec();
    let anchor = omega.at(s).to_vec();
    for r in 0..=tail.grid.n_steps() {
        values.extend(anchor.iter().zip(tail.at(r)).map(|(a, b)| a + b));
    }
    Ok(DiscretePath {
        grid: omega.grid.clone(),
        dim,
        values,
    })
}

/// One entry of a pasting: on `paths`, from knot `knot` onward, follow
/// `control` (whose step 0 is the grid's step `knot`).
#[derive(Debug, Clone)]
pub struct Pasting {
    pub paths: Vec<usize>,
    pub knot: usize,
    pub control: ControlPath,
}

/// Pastes replacement controls onto disjoint path sets.
pub fn paste_controls(mu: &ControlPath, replacements: &[Pasting]) -> Result<ControlPath> {
    let mut seen = BTreeSet::new();
    for r in replacements {
        if r.knot > mu.n_steps() {
            return Err(Error::OutOfRange(format!("knot {} beyond {} steps", r.knot, mu.n_steps())));
        }
        if r.control.n_paths() != mu.n_paths() || r.control.n_steps() != mu.n_steps() - r.knot {
            return Err(Error::Dimension(format!(
                "replacement at knot {} must be {}x{}",
                r.knot,
                mu.n_paths(),
                mu.n_steps() - r.knot
            )));
        }
        for &p in &r.paths {
            if p >= mu.n_paths() {
                return Err(Error::OutOfRange(format!("path {p} of {}", mu.n_paths())));
            }
            if !seen.insert(p) {
                return Err(Error::OverlappingPaths(p));
            }
        }
    }
    let mut out = mu.clone();
    for r in replacements {
        for &p in &r.paths {
            for j in r.knot..mu.n_steps() {
                out.set(p, j, r.control.get(p, j - r.knot));
            }
        }
    }
    Ok(out)
}
