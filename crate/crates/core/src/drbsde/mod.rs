//! Backward solvers for the discrete doubly reflected BSDE
//!
//! ```text
//! Ŷ_j = E[Y_{j+1} | X_j] + f(t_j, X_j, E[Y_{j+1} | X_j], Z_j, u, v) Δt
//! Z_j = E[Y_{j+1} ΔW_j | X_j] / Δt
//! Y_j = min(l_hi, max(l_lo, Ŷ_j)),   ΔK_lo = (l_lo − Ŷ_j)⁺,   ΔK_hi = (Ŷ_j − l_hi)⁺
//! ```
//!
//! with `Y_N = h(X_N)`. Conditional expectations come either from the
//! lattice stencil or from least-squares regression across Euler paths.

mod lsmc;
mod regression;

use rayon::prelude::*;

use crate::csv;
use crate::error::{Error, Result};
use crate::game::{candidate, clamp_obstacles, terminal_layer, Lattice, NodeControls};
use crate::model::GameProblem;
use crate::paths::TimeGrid;

pub use lsmc::{solve_drbsde_lsmc, Basis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lattice,
    Lsmc,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Lattice => "lattice",
            Mode::Lsmc => "lsmc",
        }
    }
}

/// Discrete `(Y, Z, K_lo, K_hi)` on a time grid × points (lattice nodes or
/// Monte Carlo paths). Arrays are time-major: entry `(j, i)` sits at
/// `j * n_points + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrbsdeSolution {
    pub grid: TimeGrid,
    pub mode: Mode,
    pub n_points: usize,
    pub state_dim: usize,
    pub noise_dim: usize,
    /// State at each `(j, i)`, `state_dim` values each.
    pub x: Vec<f64>,
    /// `n_steps + 1` layers.
    pub y: Vec<f64>,
    /// `n_steps` layers of `noise_dim` values each.
    pub z: Vec<f64>,
    /// Pushes applied at knot `j`, `n_steps` layers. The cumulative process
    /// at knot `j` is the sum over steps before `j`.
    pub dk_lo: Vec<f64>,
    pub dk_hi: Vec<f64>,
    /// Control grid indices used at `(j, i)`, `n_steps` layers.
    pub u_idx: Vec<u32>,
    pub v_idx: Vec<u32>,
    /// Standard error of the root value (zero on a lattice).
    pub root_std_error: f64,
}

impl DrbsdeSolution {
    pub fn y_at(&self, j: usize, i: usize) -> f64 {
        self.y[j * self.n_points + i]
    }

    pub fn x_at(&self, j: usize, i: usize) -> &[f64] {
        let base = (j * self.n_points + i) * self.state_dim;
        &self.x[base..base + self.state_dim]
    }

    pub fn z_at(&self, j: usize, i: usize) -> &[f64] {
        let base = (j * self.n_points + i) * self.noise_dim;
        &self.z[base..base + self.noise_dim]
    }

    /// `Y` at the first knot: interpolated at `x0` on a lattice, the common
    /// value on paths.
    pub fn root(&self, x0: f64) -> f64 {
        match self.mode {
            Mode::Lsmc => self.y[0],
            Mode::Lattice => {
                let nodes: Vec<f64> = (0..self.n_points).map(|i| self.x_at(0, i)[0]).collect();
                crate::game::interpolate(&nodes, &self.y[..self.n_points], x0)
            }
        }
    }

    /// Running totals of the pushes, `n_steps + 1` layers starting at 0.
    pub fn cumulative(&self, increments: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        let mut k = vec![0.0; (self.grid.n_steps() + 1) * n];
        for j in 0..self.grid.n_steps() {
            for i in 0..n {
                k[(j + 1) * n + i] = k[j * n + i] + increments[j * n + i];
            }
        }
        k
    }

    /// Largest amount by which `Y` leaves `[l_lo, l_hi]`.
    pub fn sandwich_violation(&self, p: &GameProblem) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..=self.grid.n_steps() {
            let t = self.grid.knot(j);
            for i in 0..self.n_points {
                let x = self.x_at(j, i);
                let y = self.y_at(j, i);
                worst = worst.max(p.lower_obstacle(t, x) - y).max(y - p.upper_obstacle(t, x));
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,point,Y");
        for c in 0..self.noise_dim {
            out.push_str(&format!(",Z{c}"));
        }
        out.push_str(",K_lo,K_hi\n");
        let k_lo = self.cumulative(&self.dk_lo);
        let k_hi = self.cumulative(&self.dk_hi);
        let n = self.n_points;
        for j in 0..=self.grid.n_steps() {
            let t = csv::num(self.grid.knot(j));
            for i in 0..n {
                out.push_str(&format!("{t},{i},{}", csv::num(self.y_at(j, i))));
                for c in 0..self.noise_dim {
                    let z = if j < self.grid.n_steps() { self.z_at(j, i)[c] } else { 0.0 };
                    out.push_str(&format!(",{}", csv::num(z)));
                }
                out.push_str(&format!(",{},{}\n", csv::num(k_lo[j * n + i]), csv::num(k_hi[j * n + i])));
            }
        }
        out
    }
}

/// Solves on a lattice with node-feedback controls `mu` (player I) and
/// `nu` (player II).
pub fn solve_drbsde_lattice(
    p: &GameProblem,
    lat: &Lattice,
    mu: &NodeControls,
    nu: &NodeControls,
) -> Result<DrbsdeSolution> {
    if lat.n_controls() != (p.u_grid().len(), p.v_grid().len()) || lat.noise_dim() != p.noise_dim() {
        return Err(Error::Dimension("lattice was built for a different problem".into()));
    }
    mu.check(lat, p.u_grid().len(), "mu")?;
    nu.check(lat, p.v_grid().len(), "nu")?;
    let grid = lat.grid().clone();
    let n = lat.n_nodes();
    let steps = grid.n_steps();
    let d = p.noise_dim();
    let mut y = vec![0.0; (steps + 1) * n];
    let mut z = vec![0.0; steps * n * d];
    let mut dk_lo = vec![0.0; steps * n];
    let mut dk_hi = vec![0.0; steps * n];
    y[steps * n..].copy_from_slice(&terminal_layer(p, lat.nodes(), grid.t_end())?);

    for j in (0..steps).rev() {
        let (head, tail) = y.split_at_mut((j + 1) * n);
        let next = &tail[..n];
        let t = grid.knot(j);
        let results: Vec<(f64, f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut zi = vec![0.0; d];
                let (ui, vi) = (mu.get(j, i), nu.get(j, i));
                let x = lat.nodes()[i];
                let hat = candidate(p, lat, j, i, ui, vi, next, &mut zi);
                let lo = p.lower_obstacle(t, &[x]);
                let hi = p.upper_obstacle(t, &[x]);
                (clamp_obstacles(p, t, x, hat), (lo - hat).max(0.0), (hat - hi).max(0.0))
            })
            .collect();
        for (i, (yi, klo, khi)) in results.into_iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::NonFinite {
                    what: "Y".into(),
                    detail: format!("step {j}, node {i}"),
                });
            }
            head[j * n + i] = yi;
            dk_lo[j * n + i] = klo;
            dk_hi[j * n + i] = khi;
            let (ui, vi) = (mu.get(j, i), nu.get(j, i));
            lat.z_proxy(j, i, ui, vi, next, &mut z[(j * n + i) * d..(j * n + i + 1) * d]);
        }
    }

    let x = (0..=steps).flat_map(|_| lat.nodes().iter().copied()).collect();
    let u_idx = (0..steps).flat_map(|j| (0..n).map(move |i| (j, i))).map(|(j, i)| mu.get(j, i) as u32).collect();
    let v_idx = (0..steps).flat_map(|j| (0..n).map(move |i| (j, i))).map(|(j, i)| nu.get(j, i) as u32).collect();
    Ok(DrbsdeSolution {
        grid,
        mode: Mode::Lattice,
        n_points: n,
        state_dim: 1,
        noise_dim: d,
        x,
        y,
        z,
        dk_lo,
        dk_hi,
        u_idx,
        v_idx,
        root_std_error: 0.0,
    })
}

/// Discrete flat-off residuals `max_i Σ_j (Y_j − l_lo) ΔK_lo,j` and
/// `max_i Σ_j (l_hi − Y_j) ΔK_hi,j`.
pub fn check_flat_off(sol: &DrbsdeSolution, p: &GameProblem) -> (f64, f64) {
    let n = sol.n_points;
    let mut res_lo = 0.0_f64;
    let mut res_hi = 0.0_f64;
    for i in 0..n {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for j in 0..sol.grid.n_steps() {
            let t = sol.grid.knot(j);
            let x = sol.x_at(j, i);
            let y = sol.y_at(j, i);
            lo += (y - p.lower_obstacle(t, x)) * sol.dk_lo[j * n + i];
            hi += (p.upper_obstacle(t, x) - y) * sol.dk_hi[j * n + i];
        }
        res_lo = res_lo.max(lo);
        res_hi = res_hi.max(hi);
    }
    (res_lo, res_hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingReport {
    /// `max (Y¹ − Y²)⁺` over every point.
    pub max_violation: f64,
    /// Whether `ξ¹ ≤ ξ²`, `l¹ ≤ l²` for both obstacles and `f¹ ≤ f²` held on
    /// the discrete data.
    pub hypothesis_holds: bool,
}

/// Checks `Y¹ ≤ Y²` for two solutions on a common grid. The generator
/// ordering is tested at the second solution's `(Y, Z)` and controls.
pub fn compare_drbsde(sol1: &DrbsdeSolution, p1: &GameProblem, sol2: &DrbsdeSolution, p2: &GameProblem) -> Result<OrderingReport> {
    if sol1.grid != sol2.grid || sol1.n_points != sol2.n_points || sol1.x != sol2.x || sol1.mode != sol2.mode {
        return Err(Error::GridMismatch("solutions are not on a common grid".into()));
    }
    let n = sol1.n_points;
    let steps = sol1.grid.n_steps();
    let mut hyp = true;
    for i in 0..n {
        let x = sol2.x_at(steps, i);
        hyp &= p1.terminal(x) <= p2.terminal(x);
    }
    for j in 0..=steps {
        let t = sol1.grid.knot(j);
        for i in 0..n {
            let x = sol2.x_at(j, i);
            hyp &= p1.lower_obstacle(t, x) <= p2.lower_obstacle(t, x);
            hyp &= p1.upper_obstacle(t, x) <= p2.upper_obstacle(t, x);
            if j < steps {
                let k = j * n + i;
                let u = p2.u_grid().point(sol2.u_idx[k] as usize);
                let v = p2.v_grid().point(sol2.v_idx[k] as usize);
                let (y, z) = (sol2.y_at(j, i), sol2.z_at(j, i));
                hyp &= p1.generator(t, x, y, z, u, v) <= p2.generator(t, x, y, z, u, v);
            }
        }
    }
    let max_violation = sol1.y.iter().zip(&sol2.y).map(|(a, b)| (a - b).max(0.0)).fold(0.0, f64::max);
    Ok(OrderingReport {
        max_violation,
        hypothesis_holds: hyp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// `E[max_j |Y¹_j − Y²_j|^ϖ]` along sampled chain paths.
    pub gap: f64,
    /// `E|ξ¹ − ξ²|^ϖ + E(Σ_j |f¹ − f²| Δt)^ϖ`, the generators evaluated at
    /// the second solution.
    pub driver: f64,
}

/// Solves both problems on `lat` with the same controls and estimates the
/// stability gap and its driver along `n_paths` chain paths started at the
/// node nearest `x0`.
#[allow(clippy::too_many_arguments)]
pub fn stability_gap(
    lat: &Lattice,
    p1: &GameProblem,
    p2: &GameProblem,
    mu: &NodeControls,
    nu: &NodeControls,
    varpi: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if !(varpi > 1.0 && varpi <= p1.holder_q().min(p2.holder_q())) {
        return Err(Error::InvalidArgument(format!("varpi must lie in (1, q], got {varpi}")));
    }
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    let s1 = solve_drbsde_lattice(p1, lat, mu, nu)?;
    let s2 = solve_drbsde_lattice(p2, lat, mu, nu)?;
    let start = lat.node_index(x0).ok_or_else(|| Error::InvalidArgument(format!("x0 = {x0} is not a lattice node")))?;
    let paths = lat.sample_paths(start, |j, i| (mu.get(j, i), nu.get(j, i)), n_paths, seed);
    let steps = lat.grid().n_steps();
    let dt = lat.grid().dt();
    let n = lat.n_nodes();
    let mut gap = 0.0;
    let mut driver = 0.0;
    for path in &paths {
        let mut sup = 0.0_f64;
        let mut f_int = 0.0;
        for (j, &i) in path.iter().enumerate() {
            sup = sup.max((s1.y_at(j, i) - s2.y_at(j, i)).abs());
            if j < steps {
                let t = lat.grid().knot(j);
                let x = [lat.nodes()[i]];
                let k = j * n + i;
                let u = p2.u_grid().point(s2.u_idx[k] as usize);
                let v = p2.v_grid().point(s2.v_idx[k] as usize);
                let (y, z) = (s2.y_at(j, i), s2.z_at(j, i));
                f_int += (p1.generator(t, &x, y, z, u, v) - p2.generator(t, &x, y, z, u, v)).abs() * dt;
            }
        }
        let xt = [lat.nodes()[path[steps]]];
        gap += sup.powf(varpi);
        driver += (p1.terminal(&xt) - p2.terminal(&xt)).abs().powf(varpi) + f_int.powf(varpi);
    }
    Ok(StabilityReport {
        gap: gap / n_paths as f64,
        driver: driver / n_paths as f64,
    })
}
