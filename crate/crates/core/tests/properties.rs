use std::collections::BTreeMap;

use drgame::config::{parse_config, RunConfig};
use drgame::csv::num;
use drgame::game::{build_lattice, dynkin_corpus, value_backward_induction, Order};
use drgame::linalg::{random_spd, spd_sqrt_series, SpdMatrix, DEFAULT_TERMS, DEFAULT_TOL};
use drgame::model::make_preset;
use drgame::paths::{concat_paths, paste_controls, ControlPath, DiscretePath, Pasting, TimeGrid};
use proptest::prelude::*;

fn preset_doc() -> impl Strategy<Value = String> {
    let preset = prop_oneof![
        Just(("dynkin-flat", "sigma", 0.5..1.5)),
        Just(("uncertain-volatility", "T", 0.5..1.5)),
        Just(("bsb-convex", "rate", 0.0..0.1)),
        Just(("linear-quadratic", "theta", 0.0..1.0)),
    ];
    preset.prop_flat_map(|(name, key, range)| {
        (
            Just(name),
            Just(key),
            proptest::option::of(range),
            10usize..500,
            any::<u64>(),
            prop_oneof![Just("supinf"), Just("infsup")],
            prop_oneof![Just("lattice"), Just("lsmc")],
            prop_oneof![Just("polynomial"), Just("bins")],
            1usize..8,
            -1.0e3..-1.0f64,
        )
            .prop_map(|(name, key, value, n_steps, seed, order, mode, basis, degree, x_min)| {
                let mut doc = format!("# generated\n[problem]\npreset = {name}\n");
                if let Some(v) = value {
                    doc += &format!("{key} = {v}\n");
                }
                doc += &format!("[grid]\nn_steps = {n_steps}\nx_min = {x_min}\n[mc]\nseed = {seed}\n");
                doc += &format!("[solver]\norder = {order}\nmode = {mode}\nbasis = {basis}\nbasis_degree = {degree}\n");
                doc
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(doc in preset_doc()) {
        let cfg = parse_config(&doc).unwrap();
        let again = parse_config(&cfg.to_document()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_document(), cfg.to_document());
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(num(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn pasting_is_idempotent(
        n_paths in 1usize..6,
        n_steps in 1usize..8,
        seed in 0usize..1000,
        knot_frac in 0.0..=1.0f64,
    ) {
        let knot = ((n_steps as f64) * knot_frac) as usize;
        let mu = ControlPath::from_fn(n_paths, n_steps, |p, j| (p * 7 + j * 3 + seed) % 4);
        let repl = ControlPath::from_fn(n_paths, n_steps - knot, |p, j| (p + j + seed) % 3);
        let paths: Vec<usize> = (0..n_paths).filter(|p| (p + seed) % 2 == 0).collect();
        let r = [Pasting { paths: paths.clone(), knot, control: repl }];
        let once = paste_controls(&mu, &r).unwrap();
        let twice = paste_controls(&once, &r).unwrap();
        for p in 0..n_paths {
            for j in 0..n_steps {
                prop_assert_eq!(once.get(p, j), twice.get(p, j));
                if j < knot || !paths.contains(&p) {
                    prop_assert_eq!(once.get(p, j), mu.get(p, j));
                }
            }
        }
        let same = paste_controls(&mu, &[]).unwrap();
        for p in 0..n_paths {
            for j in 0..n_steps {
                prop_assert_eq!(same.get(p, j), mu.get(p, j));
            }
        }
    }

    #[test]
    fn concatenation_keeps_head_and_shifts_tail(n_steps in 2usize..12, s_frac in 0.0..1.0f64, a in -2.0..2.0f64) {
        let s = ((n_steps as f64) * s_frac) as usize;
        let grid = TimeGrid::new(0.0, 1.0, n_steps).unwrap();
        let omega = DiscretePath::from_fn(grid.clone(), 1, |t| vec![a * t * t]);
        let tail_grid = grid.restrict(s).unwrap();
        let t_s = grid.knot(s);
        let tail = DiscretePath::from_fn(tail_grid, 1, |t| vec![(t - t_s).sin()]);
        let c = concat_paths(&omega, &tail, s).unwrap();
        for j in 0..=n_steps {
            let want = if j < s { omega.at(j)[0] } else { omega.at(s)[0] + tail.at(j - s)[0] };
            prop_assert_eq!(c.at(j)[0], want);
        }
    }

    #[test]
    fn sqrt_scales_with_square_root(d in 1usize..5, cond in 1.0..50.0f64, c in 0.01..100.0f64, seed in any::<u64>()) {
        let g = random_spd(d, cond, seed).unwrap();
        let r = spd_sqrt_series(&g, DEFAULT_TERMS, DEFAULT_TOL).unwrap();
        let gc = SpdMatrix::new(g.matrix() * c).unwrap();
        let rc = spd_sqrt_series(&gc, DEFAULT_TERMS, DEFAULT_TOL).unwrap();
        let diff = (rc.matrix() - r.matrix() * c.sqrt()).norm() / rc.matrix().norm();
        prop_assert!(diff <= 1e-9, "relative difference {}", diff);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lower_value_never_exceeds_upper(
        theta in 0.0..0.5f64,
        kappa in -1.0..1.0f64,
        lambda in 0.0..0.5f64,
        rho in 0.0..0.5f64,
    ) {
        let params: BTreeMap<String, String> = [
            ("theta", theta), ("kappa", kappa), ("lambda", lambda), ("rho", rho),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        let p = make_preset("linear-quadratic", &params).unwrap();
        let lat = build_lattice(&p, 400, -2.0, 2.0, 41).unwrap();
        let lo = value_backward_induction(&p, &lat, Order::SupInf).unwrap();
        let hi = value_backward_induction(&p, &lat, Order::InfSup).unwrap();
        // exact in exact arithmetic; f depends on z, so the candidate is
        // not a positively weighted sum and rounding may invert ties
        for (a, b) in lo.w.iter().zip(&hi.w) {
            prop_assert!(*a <= b + 1e-12, "{} > {}", a, b);
        }
    }

    #[test]
    fn dynkin_recursion_matches_enumeration(seed in any::<u64>()) {
        for case in dynkin_corpus(6, 3, seed).unwrap() {
            let a = case.recursion().unwrap();
            let b = case.brute_force().unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }
}

#[test]
fn minimal_documents_match_builtin_defaults() {
    for name in drgame::model::PRESET_NAMES {
        let cfg = parse_config(&format!("[problem]\npreset = {name}\n")).unwrap();
        assert_eq!(cfg, RunConfig::new(name));
    }
}
