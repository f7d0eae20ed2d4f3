//! Game values on a Markov-chain lattice: backward sup-inf / inf-sup
//! induction, the Dynkin-game special case with a brute-force oracle, the
//! single-control value and the dynamic-programming check.

pub mod dynkin;
pub mod lattice;

use std::fmt;

use rayon::prelude::*;

use crate::csv;
use crate::error::{Error, Result};
use crate::model::GameProblem;
use crate::paths::TimeGrid;

pub use dynkin::{dynkin_brute_force, dynkin_corpus, dynkin_payoff, BinaryTree, DynkinCase, StoppingTime};
pub use lattice::{build_lattice, interpolate, uniform_nodes, Lattice, NodeControls, Stencil};

/// Order of the stepwise optimization. `SupInf` is the lower value
/// (maximizer moves first and the minimizer responds), `InfSup` the upper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    SupInf,
    InfSup,
}

impl Order {
    pub fn as_str(self) -> &'static str {
        match self {
            Order::SupInf => "supinf",
            Order::InfSup => "infsup",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "supinf" => Some(Order::SupInf),
            "infsup" => Some(Order::InfSup),
            _ => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    LowerGame,
    UpperGame,
    SingleControl,
    Dynkin,
    Pde,
}

impl SurfaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceKind::LowerGame => "lower-game",
            SurfaceKind::UpperGame => "upper-game",
            SurfaceKind::SingleControl => "single-control",
            SurfaceKind::Dynkin => "dynkin",
            SurfaceKind::Pde => "pde",
        }
    }

    fn for_order(order: Order) -> Self {
        match order {
            Order::SupInf => SurfaceKind::LowerGame,
            Order::InfSup => SurfaceKind::UpperGame,
        }
    }
}

/// Value function on a time grid × node grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub grid: TimeGrid,
    pub nodes: Vec<f64>,
    pub w: Vec<f64>,
    pub kind: SurfaceKind,
}

impl ValueSurface {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.w[j * self.nodes.len() + i]
    }

    pub fn layer(&self, j: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.w[j * n..(j + 1) * n]
    }

    /// Value at `(t0, x0)` by linear interpolation in space.
    pub fn root(&self, x0: f64) -> f64 {
        interpolate(&self.nodes, self.layer(0), x0)
    }

    /// Largest amount by which any node leaves `[l_lo, l_hi]`; zero when the
    /// sandwich holds.
    pub fn sandwich_violation(&self, p: &GameProblem) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..=self.grid.n_steps() {
            let t = self.grid.knot(j);
            for (i, &x) in self.nodes.iter().enumerate() {
                let w = self.value(j, i);
                let lo = p.lower_obstacle(t, &[x]);
                let hi = p.upper_obstacle(t, &[x]);
                worst = worst.max(lo - w).max(w - hi);
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,x,value,kind\n");
        let kind = self.kind.as_str();
        for j in 0..=self.grid.n_steps() {
            let t = csv::num(self.grid.knot(j));
            for (i, &x) in self.nodes.iter().enumerate() {
                out.push_str(&format!("{t},{},{},{kind}\n", csv::num(x), csv::num(self.value(j, i))));
            }
        }
        out
    }
}

/// Terminal layer `h(x_i)`, checked against the obstacles at the horizon.
pub(crate) fn terminal_layer(p: &GameProblem, nodes: &[f64], t_end: f64) -> Result<Vec<f64>> {
    nodes
        .iter()
        .map(|&x| {
            let h = p.terminal(&[x]);
            let lo = p.lower_obstacle(t_end, &[x]);
            let hi = p.upper_obstacle(t_end, &[x]);
            if !h.is_finite() {
                return Err(Error::NonFinite {
                    what: "terminal".into(),
                    detail: format!("x={x}"),
                });
            }
            if h < lo || h > hi {
                return Err(Error::TerminalOutsideObstacles {
                    x: vec![x],
                    value: h,
                    lower: lo,
                    upper: hi,
                });
            }
            Ok(h)
        })
        .collect()
}

/// One-step candidate `E[W] + f(t, x, E[W], Z, u, v) Δt` for a control pair.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn candidate(
    p: &GameProblem,
    lat: &Lattice,
    j: usize,
    i: usize,
    ui: usize,
    vi: usize,
    next: &[f64],
    z: &mut [f64],
) -> f64 {
    let t = lat.grid().knot(j);
    let x = lat.nodes()[i];
    let e = lat.expectation(j, i, ui, vi, next);
    lat.z_proxy(j, i, ui, vi, next, z);
    e + p.generator(t, &[x], e, z, p.u_grid().point(ui), p.v_grid().point(vi)) * lat.grid().dt()
}

/// Stepwise saddle value of `q(u, v)` in the given order. Ties keep the
/// first index.
pub(crate) fn saddle(n_u: usize, n_v: usize, order: Order, mut q: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut table = vec![0.0; n_u * n_v];
    for ui in 0..n_u {
        for vi in 0..n_v {
            table[ui * n_v + vi] = q(ui, vi);
        }
    }
    match order {
        Order::SupInf => {
            let mut best = f64::NEG_INFINITY;
            for ui in 0..n_u {
                let inner = table[ui * n_v..(ui + 1) * n_v].iter().copied().fold(f64::INFINITY, f64::min);
                if inner > best {
                    best = inner;
                }
            }
            best
        }
        Order::InfSup => {
            let mut best = f64::INFINITY;
            for vi in 0..n_v {
                let inner = (0..n_u).map(|ui| table[ui * n_v + vi]).fold(f64::NEG_INFINITY, f64::max);
                if inner < best {
                    best = inner;
                }
            }
            best
        }
    }
}

#[inline]
pub(crate) fn clamp_obstacles(p: &GameProblem, t: f64, x: f64, value: f64) -> f64 {
    p.upper_obstacle(t, &[x]).min(p.lower_obstacle(t, &[x]).max(value))
}

/// Backward induction over lattice steps `from..to`, starting from
/// `terminal` at knot `to`. Returns layers `from..=to` time-major.
fn induct(p: &GameProblem, lat: &Lattice, order: Order, from: usize, to: usize, terminal: Vec<f64>) -> Result<Vec<f64>> {
    let n = lat.n_nodes();
    let (n_u, n_v) = lat.n_controls();
    let d = lat.noise_dim();
    let layers = to - from + 1;
    let mut w = vec![0.0; layers * n];
    w[(layers - 1) * n..].copy_from_slice(&terminal);
    for j in (from..to).rev() {
        let row = j - from;
        let (head, tail) = w.split_at_mut((row + 1) * n);
        let next = &tail[..n];
        let current = &mut head[row * n..];
        let t = lat.grid().knot(j);
        current.par_iter_mut().enumerate().for_each(|(i, out)| {
            let mut z = vec![0.0; d];
            let opt = saddle(n_u, n_v, order, |ui, vi| candidate(p, lat, j, i, ui, vi, next, &mut z));
            *out = clamp_obstacles(p, t, lat.nodes()[i], opt);
        });
        if let Some(i) = current.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "value".into(),
                detail: format!("layer {j}, node {i}"),
            });
        }
    }
    Ok(w)
}

fn check_lattice(p: &GameProblem, lat: &Lattice) -> Result<()> {
    if lat.n_controls() != (p.u_grid().len(), p.v_grid().len()) || lat.noise_dim() != p.noise_dim() {
        return Err(Error::Dimension("lattice was built for a different problem".into()));
    }
    Ok(())
}

/// Lower (`SupInf`) or upper (`InfSup`) game value on the whole lattice.
pub fn value_backward_induction(p: &GameProblem, lat: &Lattice, order: Order) -> Result<ValueSurface> {
    check_lattice(p, lat)?;
    let grid = lat.grid().clone();
    let terminal = terminal_layer(p, lat.nodes(), grid.t_end())?;
    let w = induct(p, lat, order, 0, grid.n_steps(), terminal)?;
    Ok(ValueSurface {
        grid,
        nodes: lat.nodes().to_vec(),
        w,
        kind: SurfaceKind::for_order(order),
    })
}

/// Points at which `f` is probed to confirm it vanishes.
const ZERO_GENERATOR_PROBES: usize = 64;

/// Value of the Dynkin game `W = min(l_hi, max(l_lo, E[W_next]))`.
pub fn dynkin_value(p: &GameProblem, lat: &Lattice) -> Result<ValueSurface> {
    check_lattice(p, lat)?;
    if !p.u_grid().is_singleton() || !p.v_grid().is_singleton() {
        return Err(Error::InvalidArgument("Dynkin value needs singleton control grids".into()));
    }
    let (lo, hi) = p.validation_box();
    let u = p.u_grid().point(0);
    let v = p.v_grid().point(0);
    let z = vec![0.0; p.noise_dim()];
    for s in 0..ZERO_GENERATOR_PROBES {
        let a = s as f64 / (ZERO_GENERATOR_PROBES - 1) as f64;
        let t = a * p.horizon();
        let x = lo + a * (hi - lo);
        let y = 10.0 * (2.0 * a - 1.0);
        let f = p.generator(t, &[x], y, &z, u, v);
        if f != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Dynkin value needs f = 0, found f = {f} at t={t}, x={x}, y={y}"
            )));
        }
    }
    let grid = lat.grid().clone();
    let n = lat.n_nodes();
    let mut w = vec![0.0; (grid.n_steps() + 1) * n];
    w[grid.n_steps() * n..].copy_from_slice(&terminal_layer(p, lat.nodes(), grid.t_end())?);
    for j in (0..grid.n_steps()).rev() {
        let (head, tail) = w.split_at_mut((j + 1) * n);
        let next = &tail[..n];
        let t = grid.knot(j);
        for (i, out) in head[j * n..].iter_mut().enumerate() {
            let e = lat.expectation(j, i, 0, 0, next);
            *out = clamp_obstacles(p, t, lat.nodes()[i], e);
        }
    }
    Ok(ValueSurface {
        grid,
        nodes: lat.nodes().to_vec(),
        w,
        kind: SurfaceKind::Dynkin,
    })
}

/// Value when only player I optimizes (`v` grid is a singleton).
pub fn single_control_value(p: &GameProblem, lat: &Lattice) -> Result<ValueSurface> {
    if !p.v_grid().is_singleton() {
        return Err(Error::InvalidArgument(format!(
            "single-control value needs a singleton v grid, got {} points",
            p.v_grid().len()
        )));
    }
    let mut s = value_backward_induction(p, lat, Order::SupInf)?;
    s.kind = SurfaceKind::SingleControl;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppReport {
    pub direct: f64,
    pub composed: f64,
    pub gap: f64,
}

/// Solves on `[t_mid, T]`, then on `[t0, t_mid]` with the mid layer as
/// terminal data, and compares the root with the one-shot solve.
pub fn dpp_check(p: &GameProblem, lat: &Lattice, t_mid: f64, order: Order, x0: f64) -> Result<DppReport> {
    check_lattice(p, lat)?;
    let grid = lat.grid();
    let m = interior_knot(grid, t_mid)?;
    let direct = value_backward_induction(p, lat, order)?.root(x0);

    let n = lat.n_nodes();
    let terminal = terminal_layer(p, lat.nodes(), grid.t_end())?;
    let late = induct(p, lat, order, m, grid.n_steps(), terminal)?;
    let early = induct(p, lat, order, 0, m, late[..n].to_vec())?;
    let composed = interpolate(lat.nodes(), &early[..n], x0);
    Ok(DppReport {
        direct,
        composed,
        gap: (direct - composed).abs(),
    })
}

/// Like [`dpp_check`], but the `[t_mid, T]` leg runs on a lattice with half
/// the spacing and a quarter of the time step; its `t_mid` layer is
/// interpolated back onto the coarse nodes.
pub fn dpp_check_refined(p: &GameProblem, lat: &Lattice, t_mid: f64, order: Order, x0: f64) -> Result<DppReport> {
    check_lattice(p, lat)?;
    let grid = lat.grid();
    let m = interior_knot(grid, t_mid)?;
    let direct = value_backward_induction(p, lat, order)?.root(x0);

    let nodes = lat.nodes();
    let n = nodes.len();
    let fine_grid = TimeGrid::new(grid.knot(m), grid.t_end(), 4 * (grid.n_steps() - m))?;
    let fine = Lattice::new(p, fine_grid, nodes[0], nodes[n - 1], 2 * n - 1)?;
    let fine_terminal = terminal_layer(p, fine.nodes(), grid.t_end())?;
    let late = induct(p, &fine, order, 0, fine.grid().n_steps(), fine_terminal)?;
    let mid: Vec<f64> = nodes.iter().map(|&x| interpolate(fine.nodes(), &late[..2 * n - 1], x)).collect();
    let early = induct(p, lat, order, 0, m, mid)?;
    let composed = interpolate(nodes, &early[..n], x0);
    Ok(DppReport {
        direct,
        composed,
        gap: (direct - composed).abs(),
    })
}

fn interior_knot(grid: &TimeGrid, t_mid: f64) -> Result<usize> {
    match grid.knot_index(t_mid) {
        Some(m) if m > 0 && m < grid.n_steps() => Ok(m),
        _ => Err(Error::InvalidArgument(format!(
            "t_mid = {t_mid} is not an interior knot of the grid on [{}, {}]",
            grid.t0(),
            grid.t_end()
        ))),
    }
}
