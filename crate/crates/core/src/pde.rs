//! Explicit monotone finite differences for the double-obstacle Isaacs
//! equation
//!
//! ```text
//! min{ w − l_lo, max{ −∂_t w − H(t, x, w, D w, D² w), w − l_hi } } = 0,   w(T, ·) = h
//! H = ½ tr(σσᵀ Γ) + z·b + f(t, x, y, σᵀz, u, v)   optimized over the control grids.
//! ```
//!
//! One backward step from layer `j+1` to `j`, per control pair:
//!
//! ```text
//! y_c = W_i + Δt (½ a D²W + b DW)          (a = σσᵀ, central differences)
//! q   = y_c + Δt f(t_j, x_i, y_c, σᵀ DW, u, v)
//! ```
//!
//! then the saddle value of `q` is clamped between the obstacles. Feeding
//! `y_c` rather than `W_i` to the generator keeps the update monotone when
//! the centre weight `1 − aΔt/Δx²` vanishes, and makes the step coincide
//! with the lattice recursion. The end nodes use a mirrored ghost value
//! (zero-flux condition), the same folding the lattice applies.

use rayon::prelude::*;

use crate::csv;
use crate::error::{Error, Result};
use crate::game::lattice::{check_cfl, check_step_size, stencil_weights, uniform_nodes};
use crate::game::{clamp_obstacles, saddle, terminal_layer, value_backward_induction, Lattice, Order, SurfaceKind, ValueSurface};
use crate::model::GameProblem;
use crate::paths::TimeGrid;

/// Space-time grid for the solver. Construct with [`PdeGrid::new`], which
/// enforces the CFL bounds for a given problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeGrid {
    pub grid: TimeGrid,
    pub nodes: Vec<f64>,
    pub dx: f64,
}

impl PdeGrid {
    pub fn new(p: &GameProblem, n_steps: usize, x_min: f64, x_max: f64, n_nodes: usize) -> Result<Self> {
        if p.state_dim() != 1 {
            return Err(Error::Dimension(format!(
                "the finite-difference solver is one-dimensional; problem has state dimension {}",
                p.state_dim()
            )));
        }
        let grid = TimeGrid::new(0.0, p.horizon(), n_steps)?;
        let nodes = uniform_nodes(x_min, x_max, n_nodes)?;
        let dx = (x_max - x_min) / (n_nodes - 1) as f64;
        let g = Self { grid, nodes, dx };
        check_step_size(p, g.grid.dt())?;
        let (max_a, max_b) = g.coefficient_bounds(p)?;
        let dt = g.grid.dt();
        check_cfl(max_a * dt / (dx * dx), max_b * dt / dx)?;
        Ok(g)
    }

    /// Same domain, `Δx/2` and `Δt/4`.
    pub fn refine(&self, p: &GameProblem) -> Result<Self> {
        let n = self.nodes.len();
        Self::new(p, 4 * self.grid.n_steps(), self.nodes[0], self.nodes[n - 1], 2 * n - 1)
    }

    fn coefficient_bounds(&self, p: &GameProblem) -> Result<(f64, f64)> {
        let mut max_a = 0.0_f64;
        let mut max_b = 0.0_f64;
        for j in 0..self.grid.n_steps() {
            let t = self.grid.knot(j);
            for &x in &self.nodes {
                for u in p.u_grid().points() {
                    for v in p.v_grid().points() {
                        let b = p.drift(t, &[x], u, v)[0];
                        let a: f64 = p.diffusion(t, &[x], u, v).iter().map(|s| s * s).sum();
                        if !a.is_finite() || !b.is_finite() {
                            return Err(Error::NonFinite {
                                what: "coefficient".into(),
                                detail: format!("t={t}, x={x}"),
                            });
                        }
                        max_a = max_a.max(a);
                        max_b = max_b.max(b.abs());
                    }
                }
            }
        }
        Ok((max_a, max_b))
    }

    fn neighbours(&self, i: usize) -> (usize, usize) {
        let last = self.nodes.len() - 1;
        (if i == 0 { 1 } else { i - 1 }, if i == last { last - 1 } else { i + 1 })
    }

    /// Central first and second differences of `layer` at node `i`.
    fn derivatives(&self, layer: &[f64], i: usize) -> (f64, f64) {
        let (l, r) = self.neighbours(i);
        let d1 = (layer[r] - layer[l]) / (2.0 * self.dx);
        let d2 = (layer[r] - 2.0 * layer[i] + layer[l]) / (self.dx * self.dx);
        (d1, d2)
    }
}

/// Arguments of the pointwise Hamiltonian. `gamma` is the `k×k` Hessian
/// slot in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianArgs<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub y: f64,
    pub z: &'a [f64],
    pub gamma: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
}

/// `½ tr(σσᵀ Γ) + z·b + f(t, x, y, σᵀz, u, v)`.
pub fn hamiltonian(p: &GameProblem, a: &HamiltonianArgs) -> Result<f64> {
    let (k, d) = (p.state_dim(), p.noise_dim());
    if a.x.len() != k || a.z.len() != k || a.gamma.len() != k * k {
        return Err(Error::Dimension(format!(
            "expected x, z of length {k} and a {k}x{k} Γ; got {}, {}, {}",
            a.x.len(),
            a.z.len(),
            a.gamma.len()
        )));
    }
    for r in 0..k {
        for c in 0..r {
            let (g1, g2) = (a.gamma[r * k + c], a.gamma[c * k + r]);
            if (g1 - g2).abs() > 1e-12 * g1.abs().max(g2.abs()).max(1.0) {
                return Err(Error::InvalidArgument(format!("Γ is not symmetric at ({r}, {c})")));
            }
        }
    }
    let b = p.drift(a.t, a.x, a.u, a.v);
    let s = p.diffusion(a.t, a.x, a.u, a.v);
    let mut trace = 0.0;
    for r in 0..k {
        for c in 0..k {
            let ssr: f64 = (0..d).map(|m| s[r * d + m] * s[c * d + m]).sum();
            trace += ssr * a.gamma[c * k + r];
        }
    }
    let zb: f64 = a.z.iter().zip(&b).map(|(z, b)| z * b).sum();
    let sz: Vec<f64> = (0..d).map(|m| (0..k).map(|r| s[r * d + m] * a.z[r]).sum()).collect();
    Ok(0.5 * trace + zb + p.generator(a.t, a.x, a.y, &sz, a.u, a.v))
}

/// `sup_u inf_v H` or `inf_v sup_u H` over the control grids.
pub fn isaacs_hamiltonian(p: &GameProblem, t: f64, x: &[f64], y: f64, z: &[f64], gamma: &[f64], order: Order) -> Result<f64> {
    let (n_u, n_v) = (p.u_grid().len(), p.v_grid().len());
    let mut values = vec![0.0; n_u * n_v];
    for ui in 0..n_u {
        for vi in 0..n_v {
            values[ui * n_v + vi] = hamiltonian(
                p,
                &HamiltonianArgs {
                    t,
                    x,
                    y,
                    z,
                    gamma,
                    u: p.u_grid().point(ui),
                    v: p.v_grid().point(vi),
                },
            )?;
        }
    }
    Ok(saddle(n_u, n_v, order, |u, v| values[u * n_v + v]))
}

/// One backward step at node `i`.
fn step_node(p: &GameProblem, g: &PdeGrid, j: usize, i: usize, next: &[f64], order: Order) -> Result<f64> {
    let t = g.grid.knot(j);
    let dt = g.grid.dt();
    let x = [g.nodes[i]];
    let (d1, d2) = g.derivatives(next, i);
    let (n_u, n_v) = (p.u_grid().len(), p.v_grid().len());
    let mut q = vec![0.0; n_u * n_v];
    for ui in 0..n_u {
        for vi in 0..n_v {
            let (u, v) = (p.u_grid().point(ui), p.v_grid().point(vi));
            let b = p.drift(t, &x, u, v)[0];
            let a: f64 = p.diffusion(t, &x, u, v).iter().map(|c| c * c).sum();
            // monotonicity: every stencil weight must be nonnegative
            stencil_weights(a, b, dt, g.dx, j, i)?;
            let y_c = next[i] + dt * (0.5 * a * d2 + b * d1);
            let s = p.diffusion(t, &x, u, v);
            let sz: Vec<f64> = s.iter().map(|c| c * d1).collect();
            let f_part = p.generator(t, &x, y_c, &sz, u, v);
            q[ui * n_v + vi] = y_c + dt * f_part;
        }
    }
    let opt = saddle(n_u, n_v, order, |u, v| q[u * n_v + v]);
    Ok(clamp_obstacles(p, t, x[0], opt))
}

/// Backward explicit solve on `g`.
pub fn solve_obstacle_pde(p: &GameProblem, g: &PdeGrid, order: Order) -> Result<ValueSurface> {
    let n = g.nodes.len();
    let steps = g.grid.n_steps();
    let mut w = vec![0.0; (steps + 1) * n];
    w[steps * n..].copy_from_slice(&terminal_layer(p, &g.nodes, g.grid.t_end())?);
    for j in (0..steps).rev() {
        let (head, tail) = w.split_at_mut((j + 1) * n);
        let next = &tail[..n];
        let layer: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| step_node(p, g, j, i, next, order))
            .collect::<Result<_>>()?;
        if let Some(i) = layer.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "PDE value".into(),
                detail: format!("layer {j}, node {i}"),
            });
        }
        head[j * n..].copy_from_slice(&layer);
    }
    Ok(ValueSurface {
        grid: g.grid.clone(),
        nodes: g.nodes.clone(),
        w,
        kind: SurfaceKind::Pde,
    })
}

/// Residual of the obstacle equation at interior nodes `1..n-1` and knots
/// `0..N-1`, stored time-major with `n - 2` entries per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub grid: TimeGrid,
    pub nodes: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_abs: f64,
}

impl ResidualField {
    fn width(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.residual[j * self.width() + i - 1]
    }

    /// Largest `|residual|` over nodes with `lo ≤ x ≤ hi`.
    pub fn max_abs_within(&self, lo: f64, hi: f64) -> f64 {
        let mut m = 0.0_f64;
        for j in 0..self.grid.n_steps() {
            for i in 1..self.nodes.len() - 1 {
                let x = self.nodes[i];
                if x >= lo && x <= hi {
                    m = m.max(self.at(j, i).abs());
                }
            }
        }
        m
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,x,residual\n");
        for j in 0..self.grid.n_steps() {
            let t = csv::num(self.grid.knot(j));
            for i in 1..self.nodes.len() - 1 {
                out.push_str(&format!("{t},{},{}\n", csv::num(self.nodes[i]), csv::num(self.at(j, i))));
            }
        }
        out
    }
}

/// Evaluates `min{w − l_lo, max{−∂_t w − H, w − l_hi}}` with a backward time
/// difference and central space differences of the layer at `t_j` itself.
pub fn viscosity_residual(p: &GameProblem, g: &PdeGrid, w: &ValueSurface, order: Order) -> Result<ResidualField> {
    if w.grid != g.grid || w.nodes.len() != g.nodes.len() {
        return Err(Error::GridMismatch("value surface does not live on this grid".into()));
    }
    let n = g.nodes.len();
    let steps = g.grid.n_steps();
    let dt = g.grid.dt();
    let mut residual = Vec::with_capacity(steps * (n - 2));
    for j in 0..steps {
        let t = g.grid.knot(j);
        let current = w.layer(j);
        let next = w.layer(j + 1);
        let row: Vec<f64> = (1..n - 1)
            .into_par_iter()
            .map(|i| {
                let x = [g.nodes[i]];
                let (d1, d2) = g.derivatives(current, i);
                let h = isaacs_hamiltonian(p, t, &x, current[i], &[d1], &[d2], order)?;
                let time = (current[i] - next[i]) / dt;
                let lo = current[i] - p.lower_obstacle(t, &x);
                let hi = current[i] - p.upper_obstacle(t, &x);
                Ok(lo.min((time - h).max(hi)))
            })
            .collect::<Result<_>>()?;
        residual.extend(row);
    }
    let max_abs = residual.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(ResidualField {
        grid: g.grid.clone(),
        nodes: g.nodes.clone(),
        residual,
        max_abs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCheck {
    pub lattice_root: f64,
    pub pde_root: f64,
    pub rel_gap: f64,
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares the game induction on `lat` with the PDE solve on `g` at
/// `(0, x0)`.
pub fn cross_check(p: &GameProblem, lat: &Lattice, g: &PdeGrid, order: Order, x0: f64) -> Result<CrossCheck> {
    let (ln, gn) = (lat.nodes(), &g.nodes);
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if !same(ln[0], gn[0]) || !same(ln[ln.len() - 1], gn[gn.len() - 1]) || !same(lat.grid().t_end(), g.grid.t_end()) || !same(lat.grid().t0(), g.grid.t0()) {
        return Err(Error::GridMismatch(format!(
            "lattice covers [{}, {}] x [{}, {}], PDE grid covers [{}, {}] x [{}, {}]",
            lat.grid().t0(),
            lat.grid().t_end(),
            ln[0],
            ln[ln.len() - 1],
            g.grid.t0(),
            g.grid.t_end(),
            gn[0],
            gn[gn.len() - 1]
        )));
    }
    let lattice_root = value_backward_induction(p, lat, order)?.root(x0);
    let pde_root = solve_obstacle_pde(p, g, order)?.root(x0);
    Ok(CrossCheck {
        lattice_root,
        pde_root,
        rel_gap: relative_gap(lattice_root, pde_root),
    })
}

/// Root values over successive `(Δt, Δx) → (Δt/4, Δx/2)` refinements.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub roots: Vec<f64>,
}

impl ConvergenceStudy {
    /// `|root_k − root_{k−1}|`, starting at level 1.
    pub fn diffs(&self) -> Vec<f64> {
        self.roots.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("resolution,root_value,diff\n");
        for (k, r) in self.roots.iter().enumerate() {
            let diff = if k == 0 { f64::NAN } else { (r - self.roots[k - 1]).abs() };
            out.push_str(&format!("{k},{},{}\n", csv::num(*r), csv::num(diff)));
        }
        out
    }
}

pub fn convergence_study(p: &GameProblem, base: &PdeGrid, levels: usize, order: Order, x0: f64) -> Result<ConvergenceStudy> {
    let mut g = base.clone();
    let mut roots = Vec::with_capacity(levels);
    for k in 0..levels {
        if k > 0 {
            g = g.refine(p)?;
        }
        roots.push(solve_obstacle_pde(p, &g, order)?.root(x0));
    }
    Ok(ConvergenceStudy { roots })
}
