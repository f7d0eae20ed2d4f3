//! Markov-chain approximation of the controlled diffusion on a uniform
//! one-dimensional node grid.
//!
//! From node `x_i` at step `j` under controls `(u, v)` the chain moves to
//! `x_{i-1}`, `x_i`, `x_{i+1}` with
//!
//! ```text
//! p± = ½(a Δt/Δx² ± b Δt/Δx),   p0 = 1 − a Δt/Δx²,   a = σσᵀ
//! ```
//!
//! so the first moment is `bΔt` and the second raw moment `aΔt`. At the two
//! end nodes the outward move is mirrored onto the inner neighbour
//! (reflecting truncation).

use crate::error::{Error, Result};
use crate::model::GameProblem;
use crate::paths::{CounterRng, TimeGrid};

/// Relative tolerance when comparing `aΔt/Δx²` against 1.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    /// Target nodes for the down, stay and up moves (after folding).
    pub targets: [usize; 3],
    pub probs: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Lattice {
    grid: TimeGrid,
    nodes: Vec<f64>,
    dx: f64,
    n_u: usize,
    n_v: usize,
    noise_dim: usize,
    probs: Vec<[f64; 3]>,
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

/// Uniform nodes `x_min + i Δx`, `i = 0..n_nodes`.
pub fn uniform_nodes(x_min: f64, x_max: f64, n_nodes: usize) -> Result<Vec<f64>> {
    if n_nodes < 3 || !(x_max > x_min) {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 nodes on a non-empty interval, got {n_nodes} on [{x_min}, {x_max}]"
        )));
    }
    let dx = (x_max - x_min) / (n_nodes - 1) as f64;
    Ok((0..n_nodes)
        .map(|i| {
            if i == n_nodes - 1 {
                x_max
            } else {
                x_min + i as f64 * dx
            }
        })
        .collect())
}

/// Builds the lattice on `[0, T] × [x_min, x_max]` with `n_steps` time
/// steps and `n_nodes` spatial nodes.
pub fn build_lattice(
    p: &GameProblem,
    n_steps: usize,
    x_min: f64,
    x_max: f64,
    n_nodes: usize,
) -> Result<Lattice> {
    let grid = TimeGrid::new(0.0, p.horizon(), n_steps)?;
    Lattice::new(p, grid, x_min, x_max, n_nodes)
}

/// Fails with the largest offending ratio when `aΔt/Δx² > 1` or
/// `|b|Δt/Δx > 1` anywhere.
pub(crate) fn check_cfl(max_r: f64, max_beta: f64) -> Result<()> {
    if max_r > 1.0 + CFL_SLACK {
        return Err(Error::Cfl(format!("max Δt·σσᵀ/Δx² = {max_r} exceeds 1")));
    }
    if max_beta > 1.0 + CFL_SLACK {
        return Err(Error::Cfl(format!("max Δt·|b|/Δx = {max_beta} exceeds 1")));
    }
    Ok(())
}

/// Stencil weights `(p−, p0, p+)` for one coefficient sample, assuming the
/// CFL bounds already hold.
pub(crate) fn stencil_weights(a: f64, b: f64, dt: f64, dx: f64, step: usize, node: usize) -> Result<[f64; 3]> {
    let r = (a * dt / (dx * dx)).min(1.0);
    let beta = b * dt / dx;
    let down = 0.5 * (r - beta);
    let up = 0.5 * (r + beta);
    let low = down.min(up);
    if low < -CFL_SLACK {
        return Err(Error::NegativeProbability { prob: low, step, node });
    }
    Ok([down.max(0.0), 1.0 - r, up.max(0.0)])
}

pub(crate) fn check_step_size(p: &GameProblem, dt: f64) -> Result<()> {
    let g = p.lipschitz() * dt;
    if g >= 1.0 {
        return Err(Error::Cfl(format!("γΔt = {g} must be below 1")));
    }
    Ok(())
}

impl Lattice {
    pub fn new(p: &GameProblem, grid: TimeGrid, x_min: f64, x_max: f64, n_nodes: usize) -> Result<Self> {
        if p.state_dim() != 1 {
            return Err(Error::Dimension(format!(
                "lattices are one-dimensional; problem has state dimension {}",
                p.state_dim()
            )));
        }
        let nodes = uniform_nodes(x_min, x_max, n_nodes)?;
        let dx = (x_max - x_min) / (n_nodes - 1) as f64;
        let dt = grid.dt();
        check_step_size(p, dt)?;
        let n_u = p.u_grid().len();
        let n_v = p.v_grid().len();
        let d = p.noise_dim();
        let total = grid.n_steps() * n_nodes * n_u * n_v;
        let mut drift = Vec::with_capacity(total);
        let mut sigma = Vec::with_capacity(total * d);
        let mut second = Vec::with_capacity(total);
        for j in 0..grid.n_steps() {
            let t = grid.knot(j);
            for (i, &x) in nodes.iter().enumerate() {
                for ui in 0..n_u {
                    for vi in 0..n_v {
                        let u = p.u_grid().point(ui);
                        let v = p.v_grid().point(vi);
                        let b = p.drift(t, &[x], u, v)[0];
                        let s = p.diffusion(t, &[x], u, v);
                        if !b.is_finite() || s.iter().any(|c| !c.is_finite()) {
                            return Err(Error::NonFinite {
                                what: "coefficient".into(),
                                detail: format!("step {j}, node {i}"),
                            });
                        }
                        second.push(s.iter().map(|c| c * c).sum::<f64>());
                        drift.push(b);
                        sigma.extend_from_slice(&s);
                    }
                }
            }
        }
        let max_a = second.iter().copied().fold(0.0, f64::max);
        let max_b = drift.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        check_cfl(max_a * dt / (dx * dx), max_b * dt / dx)?;
        let per_node = n_u * n_v;
        let probs = second
            .iter()
            .zip(&drift)
            .enumerate()
            .map(|(k, (&a, &b))| {
                let node = k / per_node;
                stencil_weights(a, b, dt, dx, node / n_nodes, node % n_nodes)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            nodes,
            dx,
            n_u,
            n_v,
            noise_dim: d,
            probs,
            drift,
            sigma,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn n_controls(&self) -> (usize, usize) {
        (self.n_u, self.n_v)
    }
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    #[inline]
    fn index(&self, j: usize, i: usize, ui: usize, vi: usize) -> usize {
        ((j * self.nodes.len() + i) * self.n_u + ui) * self.n_v + vi
    }

    /// Left and right neighbours with mirroring at the ends.
    #[inline]
    pub fn neighbours(&self, i: usize) -> (usize, usize) {
        let last = self.nodes.len() - 1;
        let left = if i == 0 { 1 } else { i - 1 };
        let right = if i == last { last - 1 } else { i + 1 };
        (left, right)
    }

    #[inline]
    pub fn stencil(&self, j: usize, i: usize, ui: usize, vi: usize) -> Stencil {
        let (l, r) = self.neighbours(i);
        Stencil {
            targets: [l, i, r],
            probs: self.probs[self.index(j, i, ui, vi)],
        }
    }

    #[inline]
    pub fn drift(&self, j: usize, i: usize, ui: usize, vi: usize) -> f64 {
        self.drift[self.index(j, i, ui, vi)]
    }

    #[inline]
    pub fn sigma(&self, j: usize, i: usize, ui: usize, vi: usize) -> &[f64] {
        let base = self.index(j, i, ui, vi) * self.noise_dim;
        &self.sigma[base..base + self.noise_dim]
    }

    /// `E[W_{j+1} | x_i]` under the stencil.
    #[inline]
    pub fn expectation(&self, j: usize, i: usize, ui: usize, vi: usize, next: &[f64]) -> f64 {
        let s = self.stencil(j, i, ui, vi);
        s.probs[0] * next[s.targets[0]] + s.probs[1] * next[s.targets[1]] + s.probs[2] * next[s.targets[2]]
    }

    /// Martingale-integrand proxy `Z = σᵀ (W_{i+1} − W_{i−1}) / (2Δx)`.
    ///
    /// This is `E[W_{j+1} ΔW] / Δt` for the driftless part of the stencil,
    /// where a move of `±Δx` carries the Brownian increment `±Δx/σ`.
    pub fn z_proxy(&self, j: usize, i: usize, ui: usize, vi: usize, next: &[f64], out: &mut [f64]) {
        let (l, r) = self.neighbours(i);
        let grad = (next[r] - next[l]) / (2.0 * self.dx);
        for (o, s) in out.iter_mut().zip(self.sigma(j, i, ui, vi)) {
            *o = s * grad;
        }
    }

    /// Index of the node equal to `x` within `1e-9·Δx`.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let pos = (x - self.nodes[0]) / self.dx;
        let i = pos.round();
        if i < 0.0 || i as usize >= self.nodes.len() || (pos - i).abs() > 1e-9 {
            None
        } else {
            Some(i as usize)
        }
    }

    /// Largest total probability, over constant control pairs, that the
    /// chain started at `x0` attempts to leave the domain and is folded
    /// back.
    pub fn folded_mass(&self, x0: f64) -> f64 {
        let n = self.nodes.len();
        let start = nearest(&self.nodes, x0);
        let mut worst = 0.0_f64;
        for ui in 0..self.n_u {
            for vi in 0..self.n_v {
                let mut dist = vec![0.0; n];
                dist[start] = 1.0;
                let mut folded = 0.0;
                for j in 0..self.grid.n_steps() {
                    let mut next = vec![0.0; n];
                    for (i, &mass) in dist.iter().enumerate() {
                        if mass == 0.0 {
                            continue;
                        }
                        let s = self.stencil(j, i, ui, vi);
                        if i == 0 {
                            folded += mass * s.probs[0];
                        }
                        if i == n - 1 {
                            folded += mass * s.probs[2];
                        }
                        for k in 0..3 {
                            next[s.targets[k]] += mass * s.probs[k];
                        }
                    }
                    dist = next;
                }
                worst = worst.max(folded);
            }
        }
        worst
    }

    /// Samples chain paths from `start`, returning node indices
    /// `[path][knot]`. Draw `j` of counter stream `path` decides step `j`.
    pub fn sample_paths(
        &self,
        start: usize,
        controls: impl Fn(usize, usize) -> (usize, usize),
        n_paths: usize,
        seed: u64,
    ) -> Vec<Vec<usize>> {
        (0..n_paths)
            .map(|path| {
                let mut rng = CounterRng::new(seed, path as u64);
                let mut i = start;
                let mut out = Vec::with_capacity(self.grid.n_steps() + 1);
                out.push(i);
                for j in 0..self.grid.n_steps() {
                    let (ui, vi) = controls(j, i);
                    let s = self.stencil(j, i, ui, vi);
                    let r = rng.next_uniform();
                    i = if r < s.probs[0] {
                        s.targets[0]
                    } else if r < s.probs[0] + s.probs[1] {
                        s.targets[1]
                    } else {
                        s.targets[2]
                    };
                    out.push(i);
                }
                out
            })
            .collect()
    }
}

pub(crate) fn nearest(nodes: &[f64], x: f64) -> usize {
    let dx = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
    (((x - nodes[0]) / dx).round().max(0.0) as usize).min(nodes.len() - 1)
}

/// Linear interpolation of a layer at `x` (clamped to the node range).
pub fn interpolate(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let dx = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let pos = (x - nodes[0]) / dx;
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    if w == 0.0 {
        values[i]
    } else {
        (1.0 - w) * values[i] + w * values[i + 1]
    }
}

/// Control assignment per `(step, node)` for lattice solvers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeControls {
    n_steps: usize,
    n_nodes: usize,
    idx: Vec<u32>,
}

impl NodeControls {
    pub fn constant(lat: &Lattice, index: usize) -> Self {
        Self {
            n_steps: lat.grid.n_steps(),
            n_nodes: lat.n_nodes(),
            idx: vec![index as u32; lat.grid.n_steps() * lat.n_nodes()],
        }
    }

    pub fn from_fn(lat: &Lattice, f: impl Fn(usize, usize) -> usize) -> Self {
        let (n_steps, n_nodes) = (lat.grid.n_steps(), lat.n_nodes());
        let idx = (0..n_steps)
            .flat_map(|j| (0..n_nodes).map(move |i| (j, i)))
            .map(|(j, i)| f(j, i) as u32)
            .collect();
        Self {
            n_steps,
            n_nodes,
            idx,
        }
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> usize {
        self.idx[j * self.n_nodes + i] as usize
    }

    pub(crate) fn check(&self, lat: &Lattice, grid_len: usize, name: &str) -> Result<()> {
        if self.n_steps != lat.grid.n_steps() || self.n_nodes != lat.n_nodes() {
            return Err(Error::Dimension(format!(
                "{name} covers {}x{} but the lattice is {}x{}",
                self.n_steps,
                self.n_nodes,
                lat.grid.n_steps(),
                lat.n_nodes()
            )));
        }
        if let Some(bad) = self.idx.iter().find(|&&v| v as usize >= grid_len) {
            return Err(Error::OutOfRange(format!(
                "{name} index {bad} exceeds control grid of size {grid_len}"
            )));
        }
        Ok(())
    }
}
