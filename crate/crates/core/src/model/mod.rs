//! Problem instances for the controlled forward SDE
//!
//! ```text
//! dX_s = b(s, X_s, u_s, v_s) ds + σ(s, X_s, u_s, v_s) dB_s
//! ```
//!
//! coupled to a doubly reflected backward equation with generator `f`,
//! terminal value `h(X_T)` and obstacles `l_lo < l_hi`. Player I picks `u`
//! (maximizer), player II picks `v` (minimizer). Both control sets are
//! finite grids.

mod presets;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use presets::{make_preset, PRESET_NAMES};
pub use validate::{validate_problem, AssumptionCheck, ValidationReport};

/// Obstacle level used for "inactive" barriers. Finite so that sampled
/// assumption checks stay well defined.
pub const INACTIVE_BOUND: f64 = 1.0e6;

pub type DriftFn = dyn Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;
/// Returns the k×d diffusion matrix in row-major order.
pub type DiffusionFn = dyn Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;
/// `(t, x, y, z, u, v) -> f`
pub type GeneratorFn = dyn Fn(f64, &[f64], f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync;
pub type TerminalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
pub type ObstacleFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Finite set of control points with a designated origin for `[u] = ρ(u, u₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    points: Vec<Vec<f64>>,
    origin: Vec<f64>,
}

impl ControlGrid {
    pub fn new(points: Vec<Vec<f64>>, origin: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("control grid is empty".into()));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) || origin.len() != dim {
            return Err(Error::Dimension(
                "control points and origin must share one dimension".into(),
            ));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].iter().any(|b| b == a) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate control point {a:?}"
                )));
            }
        }
        Ok(Self { points, origin })
    }

    /// Scalar grid with origin 0.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect(), vec![0.0])
    }

    pub fn singleton(point: Vec<f64>) -> Self {
        let origin = point.clone();
        Self {
            points: vec![point],
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.points.len() == 1
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Euclidean distance to the origin point.
    pub fn origin_norm(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(&self.origin)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A complete game instance. Immutable once built; cheap to clone.
#[derive(Clone)]
pub struct GameProblem {
    name: String,
    state_dim: usize,
    noise_dim: usize,
    horizon: f64,
    lipschitz: f64,
    holder_q: f64,
    u_grid: ControlGrid,
    v_grid: ControlGrid,
    validation_box: (f64, f64),
    params: BTreeMap<String, String>,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    generator: Arc<GeneratorFn>,
    terminal: Arc<TerminalFn>,
    lower: Arc<ObstacleFn>,
    upper: Arc<ObstacleFn>,
}

impl fmt::Debug for GameProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameProblem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("horizon", &self.horizon)
            .field("lipschitz", &self.lipschitz)
            .field("holder_q", &self.holder_q)
            .field("u_grid", &self.u_grid)
            .field("v_grid", &self.v_grid)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl GameProblem {
    pub fn builder(state_dim: usize, noise_dim: usize, horizon: f64) -> ProblemBuilder {
        ProblemBuilder::new(state_dim, noise_dim, horizon)
    }

    /// Starts a builder carrying every field of `self`, for deriving variants.
    pub fn to_builder(&self) -> ProblemBuilder {
        ProblemBuilder {
            problem: self.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn holder_q(&self) -> f64 {
        self.holder_q
    }
    pub fn u_grid(&self) -> &ControlGrid {
        &self.u_grid
    }
    pub fn v_grid(&self) -> &ControlGrid {
        &self.v_grid
    }
    pub fn validation_box(&self) -> (f64, f64) {
        self.validation_box
    }
    /// Effective preset parameters (empty for hand-built problems).
    pub fn params(&self) -> &BTreeMap<String, String> {
        &self.params
    }

    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        (self.drift)(t, x, u, v)
    }
    #[inline]
    pub fn diffusion(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        (self.diffusion)(t, x, u, v)
    }
    #[inline]
    pub fn generator(&self, t: f64, x: &[f64], y: f64, z: &[f64], u: &[f64], v: &[f64]) -> f64 {
        (self.generator)(t, x, y, z, u, v)
    }
    #[inline]
    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }
    #[inline]
    pub fn lower_obstacle(&self, t: f64, x: &[f64]) -> f64 {
        (self.lower)(t, x)
    }
    #[inline]
    pub fn upper_obstacle(&self, t: f64, x: &[f64]) -> f64 {
        (self.upper)(t, x)
    }

    /// Deterministic probe points used at build time: three times and
    /// 33 points spread along the diagonal of the validation box.
    fn probe_points(&self) -> Vec<(f64, Vec<f64>)> {
        let (lo, hi) = self.validation_box;
        let mut out = Vec::new();
        for &t in &[0.0, 0.5 * self.horizon, self.horizon] {
            for i in 0..=32 {
                let s = lo + (hi - lo) * i as f64 / 32.0;
                out.push((t, vec![s; self.state_dim]));
            }
        }
        out
    }

    fn check_obstacles(&self) -> Result<()> {
        for (t, x) in self.probe_points() {
            let lower = self.lower_obstacle(t, &x);
            let upper = self.upper_obstacle(t, &x);
            if !(lower < upper) {
                return Err(Error::ObstacleSeparation { t, x, lower, upper });
            }
            if t == self.horizon {
                let value = self.terminal(&x);
                if !(lower <= value && value <= upper) {
                    return Err(Error::TerminalOutsideObstacles {
                        x,
                        value,
                        lower,
                        upper,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct ProblemBuilder {
    problem: GameProblem,
}

impl ProblemBuilder {
    fn new(state_dim: usize, noise_dim: usize, horizon: f64) -> Self {
        let k = state_dim;
        let kd = state_dim * noise_dim;
        Self {
            problem: GameProblem {
                name: "custom".to_string(),
                state_dim,
                noise_dim,
                horizon,
                lipschitz: 1.0,
                holder_q: 2.0,
                u_grid: ControlGrid::singleton(vec![0.0]),
                v_grid: ControlGrid::singleton(vec![0.0]),
                validation_box: (-5.0, 5.0),
                params: BTreeMap::new(),
                drift: Arc::new(move |_, _, _, _| vec![0.0; k]),
                diffusion: Arc::new(move |_, _, _, _| vec![0.0; kd]),
                generator: Arc::new(|_, _, _, _, _, _| 0.0),
                terminal: Arc::new(|_| 0.0),
                lower: Arc::new(|_, _| -INACTIVE_BOUND),
                upper: Arc::new(|_, _| INACTIVE_BOUND),
            },
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.problem.name = name.into();
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.problem.horizon = horizon;
        self
    }

    pub fn lipschitz(mut self, gamma: f64) -> Self {
        self.problem.lipschitz = gamma;
        self
    }

    pub fn holder_q(mut self, q: f64) -> Self {
        self.problem.holder_q = q;
        self
    }

    pub fn controls(mut self, u_grid: ControlGrid, v_grid: ControlGrid) -> Self {
        self.problem.u_grid = u_grid;
        self.problem.v_grid = v_grid;
        self
    }

    pub fn validation_box(mut self, lo: f64, hi: f64) -> Self {
        self.problem.validation_box = (lo, hi);
        self
    }

    pub fn params(mut self, params: BTreeMap<String, String>) -> Self {
        self.problem.params = params;
        self
    }

    pub fn drift<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.problem.drift = Arc::new(f);
        self
    }

    pub fn diffusion<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.problem.diffusion = Arc::new(f);
        self
    }

    pub fn generator<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], f64, &[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.problem.generator = Arc::new(f);
        self
    }

    pub fn terminal<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.problem.terminal = Arc::new(f);
        self
    }

    pub fn lower_obstacle<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.problem.lower = Arc::new(f);
        self
    }

    pub fn upper_obstacle<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.problem.upper = Arc::new(f);
        self
    }

    /// Checks scalar constraints and probes obstacle ordering
    /// (`l_lo < l_hi`, `l_lo(T,·) ≤ h ≤ l_hi(T,·)`) on the validation box.
    pub fn build(self) -> Result<GameProblem> {
        let p = self.problem;
        if p.state_dim == 0 || p.noise_dim == 0 {
            return Err(Error::Dimension("state and noise dimensions must be positive".into()));
        }
        if !(p.horizon > 0.0 && p.horizon.is_finite()) {
            return Err(Error::param("T", format!("horizon must be positive, got {}", p.horizon)));
        }
        if !(p.lipschitz > 0.0 && p.lipschitz.is_finite()) {
            return Err(Error::param("gamma", format!("must be positive, got {}", p.lipschitz)));
        }
        if !(p.holder_q > 1.0 && p.holder_q <= 2.0) {
            return Err(Error::param("q", format!("must lie in (1, 2], got {}", p.holder_q)));
        }
        let (lo, hi) = p.validation_box;
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty validation box [{lo}, {hi}]")));
        }
        p.check_obstacles()?;
        Ok(p)
    }
}
