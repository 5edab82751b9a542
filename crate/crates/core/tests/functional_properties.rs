use lichnerowicz::coefficients::{
    build_example_local, build_example_rn, CoefficientSet, ExponentialParams, LocalBumpParams,
};
use lichnerowicz::functional::Functional;
use lichnerowicz::{Domain, DomainSpec, Field};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenarios() -> Vec<(Domain, CoefficientSet)> {
    let radial = Domain::build(&DomainSpec::radial(3, 200, 10.0)).unwrap();
    let (c1, _) = build_example_rn(&radial, &ExponentialParams::default()).unwrap();
    let torus = Domain::build(&DomainSpec::torus(3, 8, 1.0)).unwrap();
    let p = LocalBumpParams {
        a: 0.01,
        r_inner: 0.15,
        r_outer: 0.3,
        b_outer: -0.5,
        ..Default::default()
    };
    let (c2, _) = build_example_local(&torus, &p).unwrap();
    vec![(radial, c1), (torus, c2)]
}

fn random_field(d: &Domain, rng: &mut ChaCha8Rng, positive: bool) -> Field {
    let lo = if positive { 0.05 } else { -1.0 };
    d.field((0..d.len()).map(|_| rng.gen_range(lo..1.0)).collect())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1_000_000, log_eps in -3.0f64..0.0) {
        let eps = 10f64.powf(log_eps);
        for (d, c) in scenarios() {
            let f = Functional::new(&d, &c).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&d, &mut rng, false);
            let v = random_field(&d, &mut rng, false);
            let h = 1e-6;
            let plus = f.energy(&u.add_scaled(h, &v).unwrap(), eps).unwrap().total;
            let minus = f.energy(&u.add_scaled(-h, &v).unwrap(), eps).unwrap().total;
            let fd = (plus - minus) / (2.0 * h);
            let assembled = f.directional(&u, &v, eps).unwrap();
            let scale = fd.abs().max(assembled.abs()).max(1.0);
            prop_assert!((fd - assembled).abs() / scale < 1e-5, "fd {} vs {}", fd, assembled);
        }
    }

    #[test]
    fn regularized_energy_is_below_the_limit(seed in 0u64..1_000_000, log_eps in -8.0f64..0.0) {
        for (d, c) in scenarios() {
            let f = Functional::new(&d, &c).unwrap();
            let u = random_field(&d, &mut ChaCha8Rng::seed_from_u64(seed), true);
            let limit = f.energy(&u, 0.0).unwrap().total;
            prop_assert!(limit.is_finite());
            prop_assert!(f.energy(&u, 10f64.powf(log_eps)).unwrap().total <= limit);
        }
    }

    #[test]
    fn norm_is_homogeneous(seed in 0u64..1_000_000, t in -5.0f64..5.0) {
        for (d, c) in scenarios() {
            let f = Functional::new(&d, &c).unwrap();
            let u = random_field(&d, &mut ChaCha8Rng::seed_from_u64(seed), false);
            let lhs = f.norm(&u.scaled(t)).unwrap();
            let rhs = t.abs() * f.norm(&u).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1.0));
        }
    }
}

#[test]
fn riesz_gradient_represents_the_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (d, c) in scenarios() {
        let f = Functional::new(&d, &c).unwrap();
        let u = random_field(&d, &mut rng, true);
        let v = random_field(&d, &mut rng, false);
        let (r, norm) = f.riesz_gradient(&u, 0.1).unwrap();
        let lhs = f.inner(&r, &v).unwrap();
        let rhs = f.directional(&u, &v, 0.1).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0),
            "{lhs} vs {rhs}"
        );
        assert!((norm - f.norm(&r).unwrap()).abs() <= 1e-10 * norm.max(1.0));
    }
}
