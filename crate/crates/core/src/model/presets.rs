//! Built-in problem catalog.
//!
//! | preset | keys (defaults) |
//! |---|---|
//! | `dynkin-flat` | `l_lo` (-1), `l_hi` (1), `h` (0), `T` (1), `sigma` (1), `gamma` |
//! | `uncertain-volatility` | `sigma_lo` (1), `sigma_hi` (2), `h` (square; also neg-square, linear, call), `strike` (required for call), `rate` (0), `l_lo`, `l_hi` (inactive), `T` (1), `box` (5), `gamma` |
//! | `bsb-convex` | `sigma_lo` (0.2), `sigma_hi` (0.4), `strike` (1), `rate` (0.05), `american` (false), `x_max` (3·strike), `T` (1), `gamma` |
//! | `linear-quadratic` | `theta` (0.5), `rho` (0.1), `kappa` (-1), `lambda` (0.2), `u_max` (1), `v_lo` (0.5), `v_hi` (1.5), `a_lo` (0.4), `a_hi` (0.6), `T` (1), `box` (5), `gamma` |
//!
//! Every preset uses `q = 2`. When `gamma` is omitted it defaults to the
//! smallest constant for which the preset's coefficients satisfy the
//! growth, Lipschitz and Hölder assumptions on its validation box; a
//! smaller explicit `gamma` is rejected.

use std::collections::{BTreeMap, BTreeSet};

use super::{ControlGrid, GameProblem, INACTIVE_BOUND};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 4] = [
    "linear-quadratic",
    "uncertain-volatility",
    "dynkin-flat",
    "bsb-convex",
];

struct Params<'a> {
    map: &'a BTreeMap<String, String>,
    allowed: BTreeSet<&'static str>,
    effective: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn new(map: &'a BTreeMap<String, String>, allowed: &[&'static str]) -> Result<Self> {
        let allowed: BTreeSet<_> = allowed.iter().copied().collect();
        if let Some(k) = map.keys().find(|k| !allowed.contains(k.as_str())) {
            return Err(Error::param(k, "unknown key for this preset"));
        }
        Ok(Self {
            map,
            allowed,
            effective: BTreeMap::new(),
        })
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        debug_assert!(self.allowed.contains(key));
        let v = match self.map.get(key) {
            Some(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::param(key, format!("expected a number, got `{s}`")))?,
            None => default,
        };
        if !v.is_finite() {
            return Err(Error::param(key, "must be finite"));
        }
        self.effective.insert(key.to_string(), format_num(v));
        Ok(v)
    }

    fn f64_opt(&mut self, key: &'static str) -> Result<Option<f64>> {
        if self.map.contains_key(key) {
            self.f64_or(key, 0.0).map(Some)
        } else {
            Ok(None)
        }
    }

    fn str_or(&mut self, key: &'static str, default: &str) -> String {
        let v = self
            .map
            .get(key)
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|| default.to_string());
        self.effective.insert(key.to_string(), v.clone());
        v
    }

    fn bool_or(&mut self, key: &'static str, default: bool) -> Result<bool> {
        let v = match self.map.get(key).map(|s| s.trim()) {
            None => default,
            Some("true") => true,
            Some("false") => false,
            Some(s) => return Err(Error::param(key, format!("expected true/false, got `{s}`"))),
        };
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if v <= 0.0 {
            return Err(Error::param(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn nonnegative(&mut self, key: &'static str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if v < 0.0 {
            return Err(Error::param(key, format!("must be nonnegative, got {v}")));
        }
        Ok(v)
    }

    /// Resolves `gamma` against the preset's minimal admissible constant.
    fn gamma(&mut self, required: f64) -> Result<f64> {
        let g = match self.f64_opt("gamma")? {
            Some(g) if g < required * (1.0 - 1e-12) => {
                return Err(Error::param(
                    "gamma",
                    format!("{g} is below the constant {required} this preset requires"),
                ))
            }
            Some(g) => g,
            None => required,
        };
        self.effective.insert("gamma".into(), format_num(g));
        Ok(g)
    }
}

fn format_num(v: f64) -> String {
    format!("{v}")
}

/// Builds one of the catalog problems from string-valued parameters.
pub fn make_preset(name: &str, params: &BTreeMap<String, String>) -> Result<GameProblem> {
    match name {
        "dynkin-flat" => dynkin_flat(params),
        "uncertain-volatility" => uncertain_volatility(params),
        "bsb-convex" => bsb_convex(params),
        "linear-quadratic" => linear_quadratic(params),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn dynkin_flat(raw: &BTreeMap<String, String>) -> Result<GameProblem> {
    let mut p = Params::new(raw, &["l_lo", "l_hi", "h", "T", "sigma", "gamma"])?;
    let l_lo = p.f64_or("l_lo", -1.0)?;
    let l_hi = p.f64_or("l_hi", 1.0)?;
    let h = p.f64_or("h", 0.0)?;
    let horizon = p.positive("T", 1.0)?;
    let sigma = p.nonnegative("sigma", 1.0)?;
    if !(l_lo < l_hi) {
        return Err(Error::ObstacleSeparation {
            t: 0.0,
            x: vec![0.0],
            lower: l_lo,
            upper: l_hi,
        });
    }
    if !(l_lo <= h && h <= l_hi) {
        return Err(Error::param("h", format!("{h} lies outside [{l_lo}, {l_hi}]")));
    }
    // |σ(t,0)| = sigma must not exceed γ(1 + 0 + 0).
    let gamma = p.gamma(sigma.max(1.0))?;
    GameProblem::builder(1, 1, horizon)
        .name("dynkin-flat")
        .lipschitz(gamma)
        .diffusion(move |_, _, _, _| vec![sigma])
        .terminal(move |_| h)
        .lower_obstacle(move |_, _| l_lo)
        .upper_obstacle(move |_, _| l_hi)
        .params(p.effective)
        .build()
}

#[derive(Clone, Copy)]
enum Payoff {
    Square,
    NegSquare,
    Linear,
    Call(f64),
}

impl Payoff {
    fn eval(self, x: f64) -> f64 {
        match self {
            Payoff::Square => x * x,
            Payoff::NegSquare => -x * x,
            Payoff::Linear => x,
            Payoff::Call(k) => (x - k).max(0.0),
        }
    }

    /// Lipschitz constant on [lo, hi].
    fn lipschitz_on(self, lo: f64, hi: f64) -> f64 {
        match self {
            Payoff::Square | Payoff::NegSquare => 2.0 * lo.abs().max(hi.abs()),
            Payoff::Linear | Payoff::Call(_) => 1.0,
        }
    }
}

fn uncertain_volatility(raw: &BTreeMap<String, String>) -> Result<GameProblem> {
    let mut p = Params::new(
        raw,
        &[
            "sigma_lo", "sigma_hi", "h", "strike", "rate", "l_lo", "l_hi", "T", "box", "gamma",
        ],
    )?;
    let sigma_lo = p.positive("sigma_lo", 1.0)?;
    let sigma_hi = p.positive("sigma_hi", 2.0)?;
    if sigma_lo >= sigma_hi {
        return Err(Error::param("sigma_hi", "must exceed sigma_lo"));
    }
    let payoff = match p.str_or("h", "square").as_str() {
        "square" => Payoff::Square,
        "neg-square" => Payoff::NegSquare,
        "linear" => Payoff::Linear,
        "call" => {
            if !raw.contains_key("strike") {
                return Err(Error::MissingParameter("strike".into()));
            }
            Payoff::Call(p.f64_or("strike", 0.0)?)
        }
        other => {
            return Err(Error::param(
                "h",
                format!("unknown payoff `{other}` (square, neg-square, linear, call)"),
            ))
        }
    };
    let rate = p.nonnegative("rate", 0.0)?;
    let l_lo = p.f64_or("l_lo", -INACTIVE_BOUND)?;
    let l_hi = p.f64_or("l_hi", INACTIVE_BOUND)?;
    let horizon = p.positive("T", 1.0)?;
    let half = p.positive("box", 5.0)?;

    // Growth: u ≤ γ(1 + |u|) holds for γ ≥ 1. Lipschitz in (y, z): rate.
    // Terminal Hölder (q = 2 means Lipschitz) on the validation box.
    let required = 1.0_f64.max(rate).max(payoff.lipschitz_on(-half, half));
    let gamma = p.gamma(required)?;

    GameProblem::builder(1, 1, horizon)
        .name("uncertain-volatility")
        .lipschitz(gamma)
        .validation_box(-half, half)
        .controls(
            ControlGrid::scalar(&[sigma_lo, sigma_hi])?,
            ControlGrid::singleton(vec![0.0]),
        )
        .diffusion(|_, _, u, _| vec![u[0]])
        .generator(move |_, _, y, _, _, _| -rate * y)
        .terminal(move |x| payoff.eval(x[0]))
        .lower_obstacle(move |_, _| l_lo)
        .upper_obstacle(move |_, _| l_hi)
        .params(p.effective)
        .build()
}

fn bsb_convex(raw: &BTreeMap<String, String>) -> Result<GameProblem> {
    let mut p = Params::new(
        raw,
        &[
            "sigma_lo", "sigma_hi", "strike", "rate", "american", "x_max", "T", "gamma",
        ],
    )?;
    let sigma_lo = p.positive("sigma_lo", 0.2)?;
    let sigma_hi = p.positive("sigma_hi", 0.4)?;
    if sigma_lo >= sigma_hi {
        return Err(Error::param("sigma_hi", "must exceed sigma_lo"));
    }
    let strike = p.positive("strike", 1.0)?;
    let rate = p.nonnegative("rate", 0.05)?;
    let american = p.bool_or("american", false)?;
    let x_max = p.positive("x_max", 3.0 * strike)?;
    let horizon = p.positive("T", 1.0)?;

    // σ(t,x,u) = u·x is Lipschitz in x with constant max u; payoff and
    // obstacle are 1-Lipschitz; the discount -r·y is r-Lipschitz in y.
    let gamma = p.gamma(1.0_f64.max(sigma_hi).max(rate))?;
    let payoff = move |x: f64| (x - strike).max(0.0);

    let mut b = GameProblem::builder(1, 1, horizon)
        .name("bsb-convex")
        .lipschitz(gamma)
        .validation_box(0.0, x_max)
        .controls(
            ControlGrid::scalar(&[sigma_lo, sigma_hi])?,
            ControlGrid::singleton(vec![0.0]),
        )
        .diffusion(|_, x, u, _| vec![u[0] * x[0]])
        .generator(move |_, _, y, _, _, _| -rate * y)
        .terminal(move |x| payoff(x[0]));
    if american {
        b = b.lower_obstacle(move |_, x| payoff(x[0]));
    }
    b.params(p.effective).build()
}

fn linear_quadratic(raw: &BTreeMap<String, String>) -> Result<GameProblem> {
    let mut p = Params::new(
        raw,
        &[
            "theta", "rho", "kappa", "lambda", "u_max", "v_lo", "v_hi", "a_lo", "a_hi", "T",
            "box", "gamma",
        ],
    )?;
    let theta = p.nonnegative("theta", 0.5)?;
    let rho = p.nonnegative("rho", 0.1)?;
    let kappa = p.f64_or("kappa", -1.0)?;
    let lambda = p.nonnegative("lambda", 0.2)?;
    let u_max = p.positive("u_max", 1.0)?;
    let v_lo = p.positive("v_lo", 0.5)?;
    let v_hi = p.positive("v_hi", 1.5)?;
    if v_lo >= v_hi {
        return Err(Error::param("v_hi", "must exceed v_lo"));
    }
    let a_lo = p.f64_or("a_lo", 0.4)?;
    let a_hi = p.f64_or("a_hi", 0.6)?;
    if !(-a_lo < a_hi) {
        return Err(Error::ObstacleSeparation {
            t: 0.0,
            x: vec![0.0],
            lower: -a_lo,
            upper: a_hi,
        });
    }
    let horizon = p.positive("T", 1.0)?;
    let half = p.positive("box", 5.0)?;

    // Growth of f at the origin: λ|v² − u²|/2 ≤ γ(1 + |u| + |v|).
    let f_growth = [v_lo, v_hi]
        .iter()
        .map(|&v| lambda * (v * v - u_max * u_max).abs() / 2.0 / (1.0 + u_max + v))
        .fold(0.0, f64::max);
    let required = 1.0_f64
        .max(theta)
        .max(rho)
        .max(kappa.abs() * u_max)
        .max(f_growth);
    let gamma = p.gamma(required)?;

    GameProblem::builder(1, 1, horizon)
        .name("linear-quadratic")
        .lipschitz(gamma)
        .validation_box(-half, half)
        .controls(
            ControlGrid::scalar(&[-u_max, u_max])?,
            ControlGrid::scalar(&[v_lo, v_hi])?,
        )
        .drift(move |_, x, u, _| vec![-theta * x[0] + u[0]])
        .diffusion(|_, _, _, v| vec![v[0]])
        .generator(move |_, _, y, z, u, v| {
            -rho * y + kappa * u[0] * z[0] + 0.5 * lambda * (v[0] * v[0] - u[0] * u[0])
        })
        .terminal(move |x| x[0].clamp(-a_lo, a_hi))
        .lower_obstacle(move |_, _| -a_lo)
        .upper_obstacle(move |_, _| a_hi)
        .params(p.effective)
        .build()
}
