use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GameProblem;
use crate::error::{Error, Result};

/// Relative slack allowed on every ratio test.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    /// Largest observed ratio of a difference quotient to its bound. For the
    /// two ordering checks this is instead the largest signed gap
    /// (`l_lo - l_hi`, resp. the larger of `l_lo(T) - h` and `h - l_hi(T)`).
    pub max_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("assumption,max_ratio,pass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{}\n",
                c.name,
                crate::csv::num(c.max_ratio),
                c.pass
            ));
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn finite(v: f64, what: &str, t: f64, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            detail: format!("value {v} at t={t}, x={x:?}"),
        })
    }
}

fn finite_vec(v: Vec<f64>, what: &str, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    for &a in &v {
        finite(a, what, t, x)?;
    }
    Ok(v)
}

/// Samples the standing assumptions on `p`'s validation box.
///
/// Each sample draws `t ∈ [0,T]`, `x, x'` in the box, `y, y' ∈ [-10,10]`,
/// `z, z' ∈ [-10,10]^d` and grid controls `u, v`, all from a ChaCha8
/// stream seeded with `seed`.
pub fn validate_problem(p: &GameProblem, samples: usize, seed: u64) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = p.validation_box();
    let k = p.state_dim();
    let d = p.noise_dim();
    let gamma = p.lipschitz();
    let expo = 2.0 / p.holder_q();
    let origin = vec![0.0; k];
    let z0 = vec![0.0; d];

    let names = [
        "drift_diffusion_growth",
        "drift_diffusion_lipschitz",
        "obstacle_holder",
        "terminal_holder",
        "generator_growth",
        "generator_lipschitz",
        "obstacle_separation",
        "terminal_within_obstacles",
    ];
    let mut worst = [0.0_f64; 8];
    worst[6] = f64::NEG_INFINITY;
    worst[7] = f64::NEG_INFINITY;

    for _ in 0..samples {
        let t = rng.random_range(0.0..=p.horizon());
        let x: Vec<f64> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
        let x2: Vec<f64> = (0..k).map(|_| rng.random_range(lo..=hi)).collect();
        let y = rng.random_range(-10.0..=10.0);
        let y2 = rng.random_range(-10.0..=10.0);
        let z: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let z2: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..=10.0)).collect();
        let ui = rng.random_range(0..p.u_grid().len());
        let vi = rng.random_range(0..p.v_grid().len());
        let u = p.u_grid().point(ui);
        let v = p.v_grid().point(vi);
        let un = p.u_grid().origin_norm(u);
        let vn = p.v_grid().origin_norm(v);
        let dx = diff_norm(&x, &x2);

        let b0 = finite_vec(p.drift(t, &origin, u, v), "drift", t, &origin)?;
        let s0 = finite_vec(p.diffusion(t, &origin, u, v), "diffusion", t, &origin)?;
        worst[0] = worst[0].max((norm(&b0) + norm(&s0)) / (gamma * (1.0 + un + vn)));

        let b1 = finite_vec(p.drift(t, &x, u, v), "drift", t, &x)?;
        let b2 = finite_vec(p.drift(t, &x2, u, v), "drift", t, &x2)?;
        let s1 = finite_vec(p.diffusion(t, &x, u, v), "diffusion", t, &x)?;
        let s2 = finite_vec(p.diffusion(t, &x2, u, v), "diffusion", t, &x2)?;
        if dx > 0.0 {
            let r = (diff_norm(&b1, &b2) + diff_norm(&s1, &s2)) / (gamma * dx);
            worst[1] = worst[1].max(r);
        }

        let ll1 = finite(p.lower_obstacle(t, &x), "lower obstacle", t, &x)?;
        let ll2 = finite(p.lower_obstacle(t, &x2), "lower obstacle", t, &x2)?;
        let lu1 = finite(p.upper_obstacle(t, &x), "upper obstacle", t, &x)?;
        let lu2 = finite(p.upper_obstacle(t, &x2), "upper obstacle", t, &x2)?;
        let h1 = finite(p.terminal(&x), "terminal", t, &x)?;
        let h2 = finite(p.terminal(&x2), "terminal", t, &x2)?;
        if dx > 0.0 {
            let bound = gamma * dx.powf(expo);
            worst[2] = worst[2].max((ll1 - ll2).abs().max((lu1 - lu2).abs()) / bound);
            worst[3] = worst[3].max((h1 - h2).abs() / bound);
        }

        let f0 = finite(p.generator(t, &origin, 0.0, &z0, u, v), "generator", t, &origin)?;
        worst[4] = worst[4].max(f0.abs() / (gamma * (1.0 + un.powf(expo) + vn.powf(expo))));

        let f1 = finite(p.generator(t, &x, y, &z, u, v), "generator", t, &x)?;
        let f2 = finite(p.generator(t, &x2, y2, &z2, u, v), "generator", t, &x2)?;
        let denom = gamma * (dx.powf(expo) + (y - y2).abs() + diff_norm(&z, &z2));
        if denom > 0.0 {
            worst[5] = worst[5].max((f1 - f2).abs() / denom);
        }

        worst[6] = worst[6].max(ll1 - lu1).max(ll2 - lu2);

        let horizon = p.horizon();
        for xs in [&x, &x2] {
            let lo_t = finite(p.lower_obstacle(horizon, xs), "lower obstacle", horizon, xs)?;
            let hi_t = finite(p.upper_obstacle(horizon, xs), "upper obstacle", horizon, xs)?;
            let h = p.terminal(xs);
            worst[7] = worst[7].max((lo_t - h).max(h - hi_t));
        }
    }

    let checks = names
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let pass = match i {
                6 => worst[i] < 0.0,
                7 => worst[i] <= 0.0,
                _ => worst[i] <= 1.0 + SLACK,
            };
            AssumptionCheck {
                name,
                max_ratio: worst[i],
                pass,
            }
        })
        .collect();
    Ok(ValidationReport {
        samples,
        seed,
        checks,
    })
}
