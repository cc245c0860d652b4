use proptest::prelude::*;
use std::sync::Arc;
use stochstab::feedback::sontag_phi;
use stochstab::model::TargetSet;
use stochstab::scenario::{builtin_scenario, list_builtins, Overrides, Scenario};
use stochstab::simulator::{
    euler_maruyama, first_entry_time, read_csv, wilson_interval, write_path_csv, PathFunctionals,
    Quantiles, Sde, SdePath, SimParams,
};
use stochstab::verifier::{
    admissible_controls, check_clf_at, check_strict_clf_at, constrained_hamiltonian, Tolerances,
};
use stochstab::{
    state, Control, ControlSet, ControlSetSpec, ControlSystem, LyapunovCandidate, Matrix,
    ScalarField, State,
};

/// `dx = (A x + α₁ e) dt + α₂ (B x) dB` on a grid of `(α₁, α₂)`.
fn linear_system(a: [f64; 4], b: [f64; 4], grid: Vec<Vec<f64>>) -> ControlSystem {
    let a = Matrix::from_row_slice(2, 2, &a);
    let b = Matrix::from_row_slice(2, 2, &b);
    ControlSystem::new(
        "linear",
        2,
        1,
        move |x: &State, u: &Control| &a * x + state(&[u[0], u[0]]),
        move |x: &State, u: &Control| {
            let c = (&b * x) * u[1];
            Matrix::from_column_slice(2, 1, c.as_slice())
        },
        ControlSet::new(ControlSetSpec::Finite { points: grid }).unwrap(),
    )
    .unwrap()
}

fn half_norm_squared() -> LyapunovCandidate {
    LyapunovCandidate::new("half-norm", 2, |x: &State| 0.5 * x.norm_squared())
        .with_gradient(|x: &State| x.clone())
        .with_hessian(|_x: &State| Matrix::identity(2, 2))
}

fn entries() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-2.0..2.0f64)
}

fn grid() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        (-2.0..2.0f64, prop_oneof![Just(0.0), -1.0..1.0f64]).prop_map(|(a, b)| vec![a, b]),
        1..30,
    )
}

fn nonzero_point() -> impl Strategy<Value = State> {
    (0.1..2.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| state(&[r * t.cos(), r * t.sin()]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn admissible_set_grows_with_orth_tol(
        a in entries(), b in entries(), g in grid(), x in nonzero_point(),
        p in prop::array::uniform2(-2.0..2.0f64), t1 in 0.0..0.5f64, dt in 0.0..0.5f64,
    ) {
        let sys = linear_system(a, b, g);
        let p = state(&p);
        let small = admissible_controls(&sys, &p, &x, t1);
        let large = admissible_controls(&sys, &p, &x, t1 + dt);
        prop_assert!(small.iter().all(|i| large.contains(i)));
        let y = Matrix::identity(2, 2);
        if let Ok(h_small) = constrained_hamiltonian(&sys, &x, &p, &y, t1) {
            let h_large = constrained_hamiltonian(&sys, &x, &p, &y, t1 + dt).unwrap();
            prop_assert!(h_large.value >= h_small.value);
        }
    }

    #[test]
    fn strict_clf_implies_clf(
        a in entries(), b in entries(), g in grid(), x in nonzero_point(), rate in 0.01..2.0f64,
    ) {
        let sys = linear_system(a, b, g);
        let v = half_norm_squared();
        let l: ScalarField = Arc::new(move |x: &State| rate * x.norm_squared());
        let tol = Tolerances::default();
        let strict = check_strict_clf_at(&sys, &v, &l, &x, &tol).unwrap();
        if strict.passed() {
            prop_assert!(check_clf_at(&sys, &v, &x, &tol).unwrap().passed());
        }
    }

    #[test]
    fn phi_identity_and_sign(a in -1e3..1e3f64, b in 1e-6..1e3f64) {
        let phi = sontag_phi(a, b).unwrap();
        let r = a.hypot(b);
        prop_assert!(phi >= 0.0);
        prop_assert!((a - b * phi + r).abs() <= 1e-10 * r.max(1.0));
    }

    #[test]
    fn phi_is_nondecreasing_in_first_argument(a in -1e2..1e2f64, da in 0.0..10.0f64, b in 1e-3..1e2f64) {
        prop_assert!(sontag_phi(a + da, b).unwrap() >= sontag_phi(a, b).unwrap() * (1.0 - 1e-12));
    }

    #[test]
    fn phi_vanishes_without_input_authority(a in -1e3..-1e-9f64) {
        prop_assert_eq!(sontag_phi(a, 0.0).unwrap(), 0.0);
        prop_assert!(sontag_phi(-a, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact(
        rows in prop::collection::vec(prop::array::uniform6(prop::num::f64::NORMAL | prop::num::f64::ZERO), 1..20),
    ) {
        let path = SdePath {
            times: rows.iter().map(|r| r[0]).collect(),
            states: rows.iter().map(|r| state(&r[1..3])).collect(),
            controls: rows.iter().map(|r| Control::from_column_slice(&r[3..4])).collect(),
            v_values: rows.iter().map(|r| r[4]).collect(),
            running_l_integral: rows.iter().map(|r| r[5]).collect(),
            seed: 0,
            escaped: false,
        };
        let mut buf = Vec::new();
        write_path_csv(&path, &mut buf).unwrap();
        let table = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&table.header, &["t", "x1", "x2", "u1", "V", "int_l"]);
        for (got, want) in table.rows.iter().zip(&rows) {
            for (g, w) in got.iter().zip(want) {
                prop_assert_eq!(g.to_bits(), w.to_bits());
            }
        }
    }

    #[test]
    fn scenario_toml_round_trip(
        which in 0usize..9, seed in any::<u64>(), paths in 1usize..500,
        dt in 1e-4..1e-2f64, horizon in 0.1..20.0f64,
    ) {
        let id = list_builtins()[which].id;
        let mut sc = builtin_scenario(id).unwrap();
        sc.apply(&Overrides { seed: Some(seed), paths: Some(paths), dt: Some(dt), horizon: Some(horizon) });
        let text = sc.to_toml().unwrap();
        prop_assert_eq!(Scenario::from_toml(&text).unwrap(), sc);
    }

    #[test]
    fn entry_time_is_monotone_in_ball_radius(
        seed in any::<u64>(), noise in 0.0..1.0f64, r1 in 0.05..1.0f64, dr in 0.0..1.0f64,
    ) {
        let sde = Sde::autonomous(
            2,
            1,
            Arc::new(|x: &State| -x),
            Arc::new(move |x: &State| Matrix::from_column_slice(2, 1, &[-noise * x[1], noise * x[0]])),
        );
        let path = euler_maruyama(&sde, &state(&[2.0, 0.0]), &SimParams::new(0.01, 3.0), seed, &PathFunctionals::default()).unwrap();
        let origin = state(&[0.0, 0.0]);
        let inner = first_entry_time(&path, &TargetSet::ball(origin.clone(), r1));
        let outer = first_entry_time(&path, &TargetSet::ball(origin, r1 + dr));
        if let Some(ti) = inner {
            prop_assert!(outer.is_some_and(|to| to <= ti));
        }
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(n in 1usize..10_000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn quantiles_are_ordered(values in prop::collection::vec(-1e6..1e6f64, 1..200)) {
        let q = Quantiles::of(&values).unwrap();
        prop_assert!(q.min <= q.p05 && q.p05 <= q.median && q.median <= q.p95 && q.p95 <= q.max);
        prop_assert!(values.contains(&q.median));
    }
}
