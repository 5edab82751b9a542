use lichnerowicz::admissibility::{assess, Admissibility, AssessOptions};
use lichnerowicz::coefficients::{build_example_rn, CoefficientSet, ExponentialParams};
use lichnerowicz::continuation::{
    geometric_schedule, run_continuation, run_local_continuation, run_low_regularity,
    ContinuationOptions, LowRegularityOptions,
};
use lichnerowicz::error::Error;
use lichnerowicz::functional::Functional;
use lichnerowicz::mountain_pass::RefineOptions;
use lichnerowicz::{Domain, DomainSpec, Field};

fn setup() -> (Domain, CoefficientSet, Field) {
    let d = Domain::build(&DomainSpec::radial(3, 1000, 20.0)).unwrap();
    let (c, psi) = build_example_rn(&d, &ExponentialParams::default()).unwrap();
    (d, c, psi)
}

fn admissible(f: &Functional<'_>, psi: &Field) -> Admissibility {
    let adm = assess(f, psi, &AssessOptions::default(), None).unwrap();
    assert!(adm.report.feasible());
    adm
}

fn quiet() -> ContinuationOptions {
    ContinuationOptions {
        verify: None,
        ..Default::default()
    }
}

#[test]
fn schedules_must_decrease() {
    assert!(geometric_schedule(1.0, 1.0, 4).is_err());
    assert!(geometric_schedule(0.0, 4.0, 4).is_err());
    assert!(geometric_schedule(1.0, 4.0, 0).is_err());
    let (d, c, psi) = setup();
    let f = Functional::new(&d, &c).unwrap();
    let adm = admissible(&f, &psi);
    for bad in [vec![], vec![1.0, 1.0], vec![0.5, 1.0], vec![1.0, -1.0]] {
        assert!(matches!(
            run_continuation(&f, &adm, &bad, &quiet()),
            Err(Error::Parameter(_))
        ));
    }
}

#[test]
fn single_step_schedule() {
    let (d, c, psi) = setup();
    let f = Functional::new(&d, &c).unwrap();
    let adm = admissible(&f, &psi);
    let trace = run_continuation(&f, &adm, &[0.5], &ContinuationOptions::default()).unwrap();
    assert!(
        trace.completed() && trace.bounds_hold(),
        "{:?}",
        trace.failure
    );
    assert_eq!(trace.per_eps.len(), 1);
    assert!(trace.cauchy.is_empty());
    assert_eq!(trace.final_eps(), Some(0.5));
    assert!(trace.verify.is_some());
    assert!(trace.levels[0] > trace.barrier);
}

#[test]
fn warm_and_cold_starts_agree() {
    let (d, c, psi) = setup();
    let f = Functional::new(&d, &c).unwrap();
    let adm = admissible(&f, &psi);
    let schedule = geometric_schedule(1.0, 4.0, 4).unwrap();
    let warm = run_continuation(&f, &adm, &schedule, &quiet()).unwrap();
    let cold = run_continuation(
        &f,
        &adm,
        &schedule,
        &ContinuationOptions {
            warm_start: false,
            ..quiet()
        },
    )
    .unwrap();
    assert!(
        warm.completed() && cold.completed(),
        "{:?} {:?}",
        warm.failure,
        cold.failure
    );
    let (a, b) = (warm.u0.as_ref().unwrap(), cold.u0.as_ref().unwrap());
    let gap = f.norm(&a.add_scaled(-1.0, b).unwrap()).unwrap();
    assert!(gap <= 1e-4 * f.norm(a).unwrap(), "gap {gap}");
    for (x, y) in warm.levels.iter().zip(&cold.levels) {
        assert!((x - y).abs() <= 1e-8 * x.abs());
    }
    // the levels increase as ε decreases
    assert!(warm.levels.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn flagged_nonexistence_refuses_to_solve() {
    let (d, c, psi) = setup();
    let f = Functional::new(&d, &c).unwrap();
    let mut adm = admissible(&f, &psi);
    adm.report.nonexistence_flag = true;
    assert!(matches!(
        run_continuation(&f, &adm, &[1.0], &quiet()),
        Err(Error::Precondition(_))
    ));
    adm.report.nonexistence_flag = false;
    adm.geometry = None;
    assert!(matches!(
        run_continuation(&f, &adm, &[1.0], &quiet()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn local_continuation_tracks_the_mountain_pass_solution() {
    let (d, c, psi) = setup();
    let f = Functional::new(&d, &c).unwrap();
    let adm = admissible(&f, &psi);
    let schedule = geometric_schedule(1.0, 4.0, 3).unwrap();
    let trace = run_continuation(&f, &adm, &schedule[..1], &quiet()).unwrap();
    let start = trace.u0.unwrap();
    let local =
        run_local_continuation(&f, &start, &schedule[1..], &RefineOptions::default()).unwrap();
    let full = run_continuation(&f, &adm, &schedule, &quiet()).unwrap();
    let gap = f
        .norm(
            &local
                .last()
                .unwrap()
                .u
                .add_scaled(-1.0, full.u0.as_ref().unwrap())
                .unwrap(),
        )
        .unwrap();
    assert!(gap <= 1e-6 * f.norm(&start).unwrap(), "gap {gap}");
    assert!(matches!(
        run_local_continuation(&f, &d.constant(0.0), &[1.0], &RefineOptions::default()),
        Err(Error::Nonconvergence(_))
    ));
}

#[test]
fn low_regularity_members_stay_bounded() {
    let (d, c, psi) = setup();
    let opts = LowRegularityOptions {
        continuation: quiet(),
        schedule: vec![1.0, 0.25],
        unit: 5.0,
        ..Default::default()
    };
    let s = assess(
        &Functional::new(&d, &c).unwrap(),
        &psi,
        &AssessOptions::default(),
        None,
    )
    .unwrap()
    .report
    .s;
    let out = run_low_regularity(&d, &c, &psi, s, 3, &opts).unwrap();
    assert_eq!(out.members.len(), 3);
    assert_eq!(out.increments.len(), 2);
    assert!(
        out.all_bounded(),
        "{:?} vs {}",
        out.scaled_norms,
        out.sequence_bound
    );
    for (i, m) in out.members.iter().enumerate() {
        assert!(m.completed(), "{:?}", m.failure);
        assert_eq!(m.approx_index, Some(i + 1));
    }
    assert!(run_low_regularity(&d, &c, &psi, s, 0, &opts).is_err());
}
