//! Exhaustive Dynkin-game value on a small non-recombining binary tree.
//!
//! Player I stops at `τ` and collects the lower obstacle, player II stops
//! at `σ̂` and pays the upper obstacle. Payoff:
//!
//! ```text
//! R(τ, σ̂) = l_lo(τ, X_τ)   if τ ≤ σ̂ and τ < T
//!           l_hi(σ̂, X_σ̂)   if σ̂ < τ
//!           h(X_T)          if τ ∧ σ̂ = T
//! ```
//!
//! Simultaneous stops pay `l_lo`, matching the `min(l_hi, max(l_lo, ·))`
//! nesting of the clamp recursion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_lattice, dynkin_value, Lattice};
use crate::error::{Error, Result};
use crate::model::GameProblem;

/// Enumeration bound: depth 4 already has 677 stopping times per player.
pub const MAX_DEPTH: usize = 4;

/// Non-recombining tree with `X` moving by `±dx` each step of length `dt`.
/// Nodes are numbered in heap order: the children of `k` are `2k+1` (up)
/// and `2k+2` (down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryTree {
    pub x0: f64,
    pub dx: f64,
    pub dt: f64,
    pub depth: usize,
    pub p_up: f64,
}

impl BinaryTree {
    pub fn new(x0: f64, dx: f64, dt: f64, depth: usize, p_up: f64) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::DepthTooLarge(depth));
        }
        if depth == 0 || !(dx > 0.0) || !(dt > 0.0) || !(0.0..=1.0).contains(&p_up) {
            return Err(Error::InvalidArgument(format!(
                "tree needs depth >= 1, dx > 0, dt > 0, p_up in [0,1]; got depth {depth}, dx {dx}, dt {dt}, p_up {p_up}"
            )));
        }
        Ok(Self {
            x0,
            dx,
            dt,
            depth,
            p_up,
        })
    }

    pub fn n_nodes(&self) -> usize {
        (1 << (self.depth + 1)) - 1
    }

    /// Time step (depth) of node `k`.
    pub fn level(k: usize) -> usize {
        (usize::BITS - 1 - (k + 1).leading_zeros()) as usize
    }

    /// State at node `k`.
    pub fn state(&self, k: usize) -> f64 {
        let mut net = 0i64;
        let mut node = k;
        while node > 0 {
            net += if node % 2 == 1 { 1 } else { -1 };
            node = (node - 1) / 2;
        }
        self.x0 + net as f64 * self.dx
    }

    pub fn time(&self, k: usize) -> f64 {
        Self::level(k) as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.depth as f64 * self.dt
    }
}

/// A stopping time as one flag per tree node. Flags below a stopped
/// ancestor are ignored; leaves always stop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingTime {
    pub flags: Vec<bool>,
}

impl StoppingTime {
    /// Node at which the path ending in leaf `leaf` stops.
    pub fn stop_node(&self, tree: &BinaryTree, leaf: usize) -> usize {
        let mut chain = vec![leaf];
        let mut k = leaf;
        while k > 0 {
            k = (k - 1) / 2;
            chain.push(k);
        }
        chain
            .into_iter()
            .rev()
            .find(|&k| BinaryTree::level(k) == tree.depth || self.flags[k])
            .expect("leaves always stop")
    }

    /// Every distinct stopping time on `tree`, in the same order as the
    /// rows of the payoff matrices built by [`dynkin_brute_force`].
    pub fn enumerate(tree: &BinaryTree) -> Vec<StoppingTime> {
        fn rec(k: usize, depth: usize, n: usize) -> Vec<Vec<bool>> {
            if BinaryTree::level(k) == depth {
                let mut f = vec![false; n];
                f[k] = true;
                return vec![f];
            }
            let mut stop = vec![false; n];
            stop[k] = true;
            let mut out = vec![stop];
            let ups = rec(2 * k + 1, depth, n);
            let downs = rec(2 * k + 2, depth, n);
            for a in &ups {
                for b in &downs {
                    out.push(a.iter().zip(b).map(|(x, y)| *x || *y).collect());
                }
            }
            out
        }
        rec(0, tree.depth, tree.n_nodes())
            .into_iter()
            .map(|flags| StoppingTime { flags })
            .collect()
    }
}

/// Expected payoff `E[R(τ, σ̂)]` of one strategy pair, by summing over leaves.
pub fn dynkin_payoff(
    tree: &BinaryTree,
    tau: &StoppingTime,
    sigma: &StoppingTime,
    lower: impl Fn(f64, f64) -> f64,
    upper: impl Fn(f64, f64) -> f64,
    terminal: impl Fn(f64) -> f64,
) -> f64 {
    let first_leaf = (1 << tree.depth) - 1;
    let mut total = 0.0;
    for leaf in first_leaf..tree.n_nodes() {
        let mut prob = 1.0;
        let mut k = leaf;
        while k > 0 {
            prob *= if k % 2 == 1 { tree.p_up } else { 1.0 - tree.p_up };
            k = (k - 1) / 2;
        }
        let a = tau.stop_node(tree, leaf);
        let b = sigma.stop_node(tree, leaf);
        let (la, lb) = (BinaryTree::level(a), BinaryTree::level(b));
        let r = if la.min(lb) == tree.depth {
            terminal(tree.state(leaf))
        } else if la <= lb {
            lower(tree.time(a), tree.state(a))
        } else {
            upper(tree.time(b), tree.state(b))
        };
        total += prob * r;
    }
    total
}

/// Payoff matrix of the subtree at `k`, given that neither player has
/// stopped before reaching it. Rows are player I's stopping times.
fn payoff_matrix(
    tree: &BinaryTree,
    k: usize,
    lower: &dyn Fn(f64, f64) -> f64,
    upper: &dyn Fn(f64, f64) -> f64,
    terminal: &dyn Fn(f64) -> f64,
) -> (usize, Vec<f64>) {
    let x = tree.state(k);
    if BinaryTree::level(k) == tree.depth {
        return (1, vec![terminal(x)]);
    }
    let t = tree.time(k);
    let (nu, up) = payoff_matrix(tree, 2 * k + 1, lower, upper, terminal);
    let (nd, down) = payoff_matrix(tree, 2 * k + 2, lower, upper, terminal);
    let n = 1 + nu * nd;
    let lo = lower(t, x);
    let hi = upper(t, x);
    let p = tree.p_up;
    let mut m = vec![0.0; n * n];
    // row 0: player I stops now (wins ties)
    m[..n].fill(lo);
    for r in 1..n {
        let (ra, rb) = ((r - 1) / nd, (r - 1) % nd);
        m[r * n] = hi;
        for c in 1..n {
            let (ca, cb) = ((c - 1) / nd, (c - 1) % nd);
            m[r * n + c] = p * up[ra * nu + ca] + (1.0 - p) * down[rb * nd + cb];
        }
    }
    (n, m)
}

/// `sup_τ inf_σ̂ E[R]`, after checking it equals `inf_σ̂ sup_τ E[R]` to 1e-12.
pub fn dynkin_brute_force(
    tree: &BinaryTree,
    lower: impl Fn(f64, f64) -> f64,
    upper: impl Fn(f64, f64) -> f64,
    terminal: impl Fn(f64) -> f64,
) -> Result<f64> {
    if tree.depth > MAX_DEPTH {
        return Err(Error::DepthTooLarge(tree.depth));
    }
    let (n, m) = payoff_matrix(tree, 0, &lower, &upper, &terminal);
    let maxmin = (0..n)
        .map(|r| m[r * n..(r + 1) * n].iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let minmax = (0..n)
        .map(|c| (0..n).map(|r| m[r * n + c]).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    if (maxmin - minmax).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "no saddle point: sup-inf {maxmin} differs from inf-sup {minmax}"
        )));
    }
    Ok(maxmin)
}

/// One tree of the oracle corpus with put-like obstacles:
///
/// ```text
/// h(x)       = (K − x)⁺
/// l_lo(t, x) = (K − x)⁺ − a (T − t)
/// l_hi(t, x) = (K − x)⁺ + c + s (T − t)
/// ```
///
/// with `a ≥ 0` and `c > 0`, so `l_lo < l_hi` everywhere and
/// `l_lo(T) = h < l_hi(T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynkinCase {
    pub tree: BinaryTree,
    pub strike: f64,
    pub lo_discount: f64,
    pub hi_premium: f64,
    pub hi_slope: f64,
}

impl DynkinCase {
    pub fn terminal(&self, x: f64) -> f64 {
        (self.strike - x).max(0.0)
    }

    pub fn lower(&self, t: f64, x: f64) -> f64 {
        self.terminal(x) - self.lo_discount * (self.tree.horizon() - t)
    }

    pub fn upper(&self, t: f64, x: f64) -> f64 {
        self.terminal(x) + self.hi_premium + self.hi_slope * (self.tree.horizon() - t)
    }

    pub fn brute_force(&self) -> Result<f64> {
        dynkin_brute_force(&self.tree, |t, x| self.lower(t, x), |t, x| self.upper(t, x), |x| self.terminal(x))
    }

    /// The same game as a problem whose lattice is the recombined tree:
    /// `b = 0`, `σ = dx/√dt`, `f = 0`.
    pub fn problem(&self) -> Result<GameProblem> {
        let c = *self;
        let sigma = c.tree.dx / c.tree.dt.sqrt();
        let reach = (c.tree.depth + 1) as f64 * c.tree.dx;
        GameProblem::builder(1, 1, c.tree.horizon())
            .name("dynkin-tree")
            .diffusion(move |_, _, _, _| vec![sigma])
            .terminal(move |x| c.terminal(x[0]))
            .lower_obstacle(move |t, x| c.lower(t, x[0]))
            .upper_obstacle(move |t, x| c.upper(t, x[0]))
            .lipschitz(0.5 / c.tree.dt)
            .validation_box(c.tree.x0 - reach, c.tree.x0 + reach)
            .build()
    }

    /// Lattice covering every tree node with one spare node on each side.
    pub fn lattice(&self, p: &GameProblem) -> Result<Lattice> {
        let depth = self.tree.depth;
        let reach = (depth + 1) as f64 * self.tree.dx;
        build_lattice(p, depth, self.tree.x0 - reach, self.tree.x0 + reach, 2 * depth + 3)
    }

    /// Root of the clamp recursion on the matching lattice.
    pub fn recursion(&self) -> Result<f64> {
        let p = self.problem()?;
        let lat = self.lattice(&p)?;
        let s = dynkin_value(&p, &lat)?;
        Ok(s.value(0, self.tree.depth + 1))
    }
}

/// Deterministic corpus of `count` trees. Depths cycle through
/// `1..=max_depth`; strikes, spacings and obstacle parameters are drawn
/// from a ChaCha8 stream seeded with `seed`.
pub fn dynkin_corpus(count: usize, max_depth: usize, seed: u64) -> Result<Vec<DynkinCase>> {
    if max_depth == 0 || max_depth > MAX_DEPTH {
        return Err(Error::DepthTooLarge(max_depth));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let depth = 1 + k % max_depth;
            let x0 = rng.random_range(0.5..1.5);
            let dx = rng.random_range(0.05..0.3);
            let dt = rng.random_range(0.05..0.5);
            let tree = BinaryTree::new(x0, dx, dt, depth, 0.5)?;
            Ok(DynkinCase {
                tree,
                strike: x0 + rng.random_range(-0.3..0.3),
                lo_discount: rng.random_range(0.0..0.2),
                hi_premium: rng.random_range(0.01..0.3),
                hi_slope: rng.random_range(0.0..0.2),
            })
        })
        .collect()
}
