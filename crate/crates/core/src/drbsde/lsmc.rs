use rayon::prelude::*;

use super::regression::{bin_means, mean, Projector};
use super::{DrbsdeSolution, Mode};
use crate::error::{Error, Result};
use crate::model::GameProblem;
use crate::paths::{ControlPath, PathEnsemble, StatePaths};

/// Regression basis for conditional expectations given `X_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// `1, x_c, x_c², …, x_c^degree` per coordinate, optionally with both
    /// obstacles evaluated at `(t_j, X_j)`.
    Polynomial { degree: usize, with_obstacles: bool },
    /// Equal-width bins over the sampled range of a scalar state.
    Bins { n_bins: usize },
}

impl Default for Basis {
    fn default() -> Self {
        Basis::Polynomial {
            degree: 3,
            with_obstacles: true,
        }
    }
}

enum Regressor {
    Span(Projector),
    Bins(Vec<f64>, usize),
}

impl Regressor {
    fn fit(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Regressor::Span(p) => p.project(y),
            Regressor::Bins(x, n_bins) => bin_means(x, y, *n_bins),
        }
    }
}

fn regressor(p: &GameProblem, states: &StatePaths, j: usize, basis: &Basis) -> Result<Regressor> {
    let n = states.n_paths;
    let t = states.grid.knot(j);
    match *basis {
        Basis::Polynomial { degree, with_obstacles } => {
            let n_features = 1 + states.dim * degree + if with_obstacles { 2 } else { 0 };
            if n <= n_features {
                return Err(Error::RankDeficient {
                    step: j,
                    reason: format!("{n} paths for {n_features} basis functions"),
                });
            }
            let mut cols = Vec::with_capacity(n_features - 1);
            for c in 0..states.dim {
                for e in 1..=degree {
                    cols.push((0..n).into_par_iter().map(|q| states.state(q, j)[c].powi(e as i32)).collect());
                }
            }
            if with_obstacles {
                cols.push((0..n).into_par_iter().map(|q| p.lower_obstacle(t, states.state(q, j))).collect());
                cols.push((0..n).into_par_iter().map(|q| p.upper_obstacle(t, states.state(q, j))).collect());
            }
            Ok(Regressor::Span(Projector::new(n, cols)))
        }
        Basis::Bins { n_bins } => {
            if states.dim != 1 {
                return Err(Error::Dimension("bin regression needs a scalar state".into()));
            }
            if n_bins == 0 || n < n_bins {
                return Err(Error::RankDeficient {
                    step: j,
                    reason: format!("{n} paths for {n_bins} bins"),
                });
            }
            Ok(Regressor::Bins((0..n).map(|q| states.state(q, j)[0]).collect(), n_bins))
        }
    }
}

/// Least-squares Monte Carlo solve along Euler paths `states` driven by
/// the increments of `ens` under controls `mu`, `nu`.
pub fn solve_drbsde_lsmc(
    p: &GameProblem,
    ens: &PathEnsemble,
    states: &StatePaths,
    mu: &ControlPath,
    nu: &ControlPath,
    basis: &Basis,
) -> Result<DrbsdeSolution> {
    let n = states.n_paths;
    let steps = states.grid.n_steps();
    let (k, d) = (p.state_dim(), p.noise_dim());
    if ens.grid != states.grid || ens.n_paths != n || ens.dim != d || states.dim != k {
        return Err(Error::Dimension("ensemble, states and problem disagree".into()));
    }
    for (c, name) in [(mu, "mu"), (nu, "nu")] {
        if c.n_paths() != n || c.n_steps() != steps {
            return Err(Error::Dimension(format!(
                "{name} is {}x{}, expected {n}x{steps}",
                c.n_paths(),
                c.n_steps()
            )));
        }
    }
    mu.check_range(p.u_grid().len())?;
    nu.check_range(p.v_grid().len())?;

    let dt = states.grid.dt();
    let mut y = vec![0.0; (steps + 1) * n];
    let mut z = vec![0.0; steps * n * d];
    let mut dk_lo = vec![0.0; steps * n];
    let mut dk_hi = vec![0.0; steps * n];
    let t_end = states.grid.t_end();
    for q in 0..n {
        let x = states.state(q, steps);
        let h = p.terminal(x);
        let (lo, hi) = (p.lower_obstacle(t_end, x), p.upper_obstacle(t_end, x));
        if !(lo <= h && h <= hi) {
            return Err(Error::TerminalOutsideObstacles {
                x: x.to_vec(),
                value: h,
                lower: lo,
                upper: hi,
            });
        }
        y[steps * n + q] = h;
    }

    // Pathwise realized value: the obstacle where a clamp binds, otherwise
    // the later realized value plus the generator increment. Its spread
    // gives the standard error of the root.
    let mut realized: Vec<f64> = y[steps * n..].to_vec();
    for j in (0..steps).rev() {
        let t = states.grid.knot(j);
        let (head, tail) = y.split_at_mut((j + 1) * n);
        let next = &tail[..n];
        let reg = regressor(p, states, j, basis)?;
        let e = reg.fit(next);
        let mut zs = Vec::with_capacity(d);
        for c in 0..d {
            let target: Vec<f64> = (0..n).into_par_iter().map(|q| next[q] * ens.dw(q, j)[c] / dt).collect();
            zs.push(reg.fit(&target));
        }
        let hat: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|q| {
                let x = states.state(q, j);
                let zq: Vec<f64> = zs.iter().map(|col| col[q]).collect();
                let u = p.u_grid().point(mu.get(q, j));
                let v = p.v_grid().point(nu.get(q, j));
                e[q] + p.generator(t, x, e[q], &zq, u, v) * dt
            })
            .collect();
        for q in 0..n {
            let x = states.state(q, j);
            let (lo, hi) = (p.lower_obstacle(t, x), p.upper_obstacle(t, x));
            let h = hat[q];
            if !h.is_finite() {
                return Err(Error::NonFinite {
                    what: "Y".into(),
                    detail: format!("step {j}, path {q}"),
                });
            }
            head[j * n + q] = hi.min(lo.max(h));
            realized[q] = if h < lo || h > hi { head[j * n + q] } else { realized[q] + (h - e[q]) };
            dk_lo[j * n + q] = (lo - h).max(0.0);
            dk_hi[j * n + q] = (h - hi).max(0.0);
            for c in 0..d {
                z[(j * n + q) * d + c] = zs[c][q];
            }
        }
    }

    let m = mean(&realized);
    let var = realized.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n.max(2) - 1) as f64;
    let root_std_error = (var / n as f64).sqrt();

    let mut x = vec![0.0; (steps + 1) * n * k];
    for j in 0..=steps {
        for q in 0..n {
            x[(j * n + q) * k..(j * n + q + 1) * k].copy_from_slice(states.state(q, j));
        }
    }
    let u_idx = (0..steps).flat_map(|j| (0..n).map(move |q| (j, q))).map(|(j, q)| mu.get(q, j) as u32).collect();
    let v_idx = (0..steps).flat_map(|j| (0..n).map(move |q| (j, q))).map(|(j, q)| nu.get(q, j) as u32).collect();
    Ok(DrbsdeSolution {
        grid: states.grid.clone(),
        mode: Mode::Lsmc,
        n_points: n,
        state_dim: k,
        noise_dim: d,
        x,
        y,
        z,
        dk_lo,
        dk_hi,
        u_idx,
        v_idx,
        root_std_error,
    })
}
