use lichnerowicz::admissibility::{
    assess, check_conditions, default_probes, detect_nonexistence, AssessOptions, ConditionOptions,
    Route,
};
use lichnerowicz::coefficients::{
    build_example_local, build_example_rn, ExponentialParams, LocalBumpParams,
};
use lichnerowicz::functional::Functional;
use lichnerowicz::mountain_pass::level_ordering;
use lichnerowicz::{Domain, DomainSpec};
use proptest::prelude::*;

fn radial(m: usize, r: f64) -> Domain {
    Domain::build(&DomainSpec::radial(3, m, r)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn verdicts_ignore_the_scale_of_psi(log_c in -3.0f64..3.0, theta in 1e-6f64..1e-3, b in 0.2f64..3.0) {
        let d = radial(150, 10.0);
        let (c, psi) = build_example_rn(&d, &ExponentialParams { theta, b, ..Default::default() }).unwrap();
        let f = Functional::new(&d, &c).unwrap();
        let s = 0.01;
        let (base, _) = check_conditions(&f, &psi, s, &ConditionOptions::default()).unwrap();
        let (scaled, _) = check_conditions(&f, &psi.scaled(10f64.powf(log_c)), s, &ConditionOptions::default()).unwrap();
        prop_assert_eq!(base.verdicts, scaled.verdicts);
        prop_assert!((base.singular_mass - scaled.singular_mass).abs() <= 1e-9 * base.singular_mass);
        if base.verdicts.theta_k {
            prop_assert!(base.t1 < base.t0);
        }
    }
}

#[test]
fn example_rn_orders_the_levels() {
    let d = radial(400, 20.0);
    let (c, psi) = build_example_rn(&d, &ExponentialParams::default()).unwrap();
    let f = Functional::new(&d, &c).unwrap();
    let adm = assess(&f, &psi, &AssessOptions::default(), None).unwrap();
    assert!(adm.report.feasible(), "{:?}", adm.report.verdicts);
    let g = adm.geometry.unwrap();
    assert_eq!(g.route, Route::Main);
    assert!(g.t1 < g.t0 && g.t0 < g.t2);
    for eps in [1.0, 1e-3, 1e-7] {
        let order = level_ordering(&f, &adm.psi, &g, eps).unwrap();
        assert!(order.holds(), "ε = {eps}: {order:?}");
    }
}

#[test]
fn too_much_singular_mass_is_rejected() {
    let d = radial(400, 20.0);
    let (c, psi) = build_example_rn(
        &d,
        &ExponentialParams {
            theta: 1e-2,
            ..Default::default()
        },
    )
    .unwrap();
    let f = Functional::new(&d, &c).unwrap();
    let adm = assess(&f, &psi, &AssessOptions::default(), None).unwrap();
    assert!(!adm.report.verdicts.psi_k);
    assert!(adm.geometry.is_none());
}

#[test]
fn constant_a_diverges_under_extension() {
    let base = DomainSpec::radial(3, 400, 20.0);
    let params = ExponentialParams {
        theta: 1.0,
        decay: 0.0,
        ..Default::default()
    };
    let ev = detect_nonexistence(&base, |d| {
        let (c, psi) = build_example_rn(d, &params)?;
        let probes = default_probes(d, &psi);
        Ok((c, probes))
    })
    .unwrap();
    assert!(ev.flag);
    for p in &ev.probes {
        assert!(p.growth >= 7.0, "{}: {}", p.label, p.growth);
    }
}

#[test]
fn compact_support_does_not_diverge() {
    let base = DomainSpec::radial(3, 400, 8.0);
    let ev = detect_nonexistence(&base, |d| {
        let (c, psi) = build_example_local(d, &LocalBumpParams::default())?;
        let probes = default_probes(d, &psi);
        Ok((c, probes))
    })
    .unwrap();
    assert!(!ev.flag);
    let d = Domain::build(&base).unwrap();
    let (c, psi) = build_example_local(&d, &LocalBumpParams::default()).unwrap();
    let f = Functional::new(&d, &c).unwrap();
    let adm = assess(&f, &psi, &AssessOptions::default(), None).unwrap();
    assert!(adm.report.feasible(), "{:?}", adm.report);
}
