//! One run: build the problem, check admissibility, then solve, verify or
//! benchmark according to the mode.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use lichnerowicz::admissibility::{
    assess, default_probes, detect_nonexistence, Admissibility, AdmissibilityReport, AssessOptions,
    NonexistenceEvidence,
};
use lichnerowicz::coefficients::{
    build_example_local, build_example_rn, build_local_with_psi, AssumptionReport, CoefficientSet,
};
use lichnerowicz::continuation::{
    run_continuation, run_low_regularity, ContinuationOptions, LowRegularityOptions,
    LowRegularityTrace, SolveTrace,
};
use lichnerowicz::functional::Functional;
use lichnerowicz::io::{read_field, read_field_csv};
use lichnerowicz::mountain_pass::{level_ordering, LevelOrdering, SolveOptions};
use lichnerowicz::verify::{
    harnack_family, supersolution_family, verify_solution, VerificationReport, VerifyOptions,
};
use lichnerowicz::{Domain, DomainSpec, Field};
use serde::Serialize;

use crate::config::{Coefficients, Mode, RunConfig, Table};
use crate::output::{self, Artifacts};
use crate::{CliError, Status};

/// Relative residual of the regularized equation a verified solution may keep.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Relative change of the Harnack constant allowed under grid refinement.
pub const HARNACK_STABILITY: f64 = 0.2;

fn load_table(cfg: &RunConfig, d: &Domain, t: &Table) -> Result<Field, CliError> {
    match t {
        Table::Constant(c) => Ok(d.constant(*c)),
        Table::File(p) => {
            let path = cfg.resolve(p);
            let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            Ok(read_field_csv(BufReader::new(file), d)?)
        }
    }
}

/// Coefficients and `ψ` of the configured family on `d`.
pub fn build(cfg: &RunConfig, d: &Domain) -> Result<(CoefficientSet, Field), CliError> {
    let psi_table = cfg
        .psi
        .table
        .as_ref()
        .map(|t| load_table(cfg, d, t))
        .transpose()?;
    let (c, psi) = match &cfg.coefficients {
        Coefficients::RnExponential(p) => {
            let mut p = *p;
            if let Some(power) = cfg.psi.power {
                p.psi_power = power;
            }
            build_example_rn(d, &p)?
        }
        Coefficients::LocalBump(p) => match psi_table {
            Some(psi) => return Ok(build_local_with_psi(d, p, psi)?),
            None => build_example_local(d, p)?,
        },
        Coefficients::CustomTable(t) => {
            let c = CoefficientSet::new(
                d,
                load_table(cfg, d, &t.a)?,
                load_table(cfg, d, &t.b)?,
                load_table(cfg, d, &t.v)?,
            )?;
            let psi = psi_table
                .clone()
                .ok_or_else(|| CliError::Validation("custom-table needs [psi] table".into()))?;
            return Ok((c, psi));
        }
    };
    if let Some(psi) = psi_table {
        c.check_support(&psi)?;
        return Ok((c, psi));
    }
    Ok((c, psi))
}

#[derive(Serialize)]
struct SobolevSummary {
    s: f64,
    converged: bool,
    iterations: usize,
    residual: f64,
    probe_max: f64,
}

#[derive(Serialize)]
struct AdmissibilityDoc<'a> {
    domain: &'a DomainSpec,
    coefficients: &'a Coefficients,
    assumptions: &'a AssumptionReport,
    sobolev: Option<SobolevSummary>,
    report: Option<&'a AdmissibilityReport>,
    level_ordering: Option<LevelOrdering>,
    nonexistence: Option<&'a NonexistenceEvidence>,
    failure: Option<String>,
    feasible: bool,
}

struct Problem {
    domain: Domain,
    coefficients: CoefficientSet,
    psi: Field,
}

fn problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    let domain = Domain::build(&cfg.domain)?;
    let (coefficients, psi) = build(cfg, &domain)?;
    Ok(Problem {
        domain,
        coefficients,
        psi,
    })
}

fn first_eps(cfg: &RunConfig) -> f64 {
    match cfg.solver.mode {
        Mode::AdmissibilityOnly => cfg.solver.eps0,
        _ => cfg
            .schedule()
            .ok()
            .and_then(|s| s.first().copied())
            .unwrap_or(cfg.solver.eps0),
    }
}

/// Writes `admissibility.report`; returns the assessment when feasible.
fn admissibility(
    cfg: &RunConfig,
    p: &Problem,
    out: &Artifacts,
) -> Result<Option<Admissibility>, CliError> {
    let d = &p.domain;
    let assumptions = p.coefficients.check_assumptions(d)?;
    let evidence = match (&cfg.coefficients, cfg.solver.nonexistence_check) {
        (Coefficients::CustomTable(_), _) | (_, false) => None,
        _ => Some(detect_nonexistence(&cfg.domain, |d| {
            let (c, psi) = build(cfg, d).map_err(|e| match e {
                CliError::Core(e) => e,
                other => lichnerowicz::Error::Spec(other.to_string()),
            })?;
            Ok((c, default_probes(d, &psi)))
        })?),
    };
    let flagged = evidence.as_ref().is_some_and(|e| e.flag);
    let assumptions_hold = assumptions.a_pass && assumptions.b_pass && assumptions.v_pass;

    let f = Functional::new(d, &p.coefficients)?;
    let opts = AssessOptions {
        eps0: first_eps(cfg),
        seed: cfg.solver.seed,
        ..Default::default()
    };
    let assessed = if assumptions_hold {
        match assess(&f, &p.psi, &opts, None) {
            Ok(mut a) => {
                a.report.nonexistence_flag = flagged;
                Ok(a)
            }
            Err(
                e @ (lichnerowicz::Error::ConditionB(_)
                | lichnerowicz::Error::Geometry(_)
                | lichnerowicz::Error::Support(_)
                | lichnerowicz::Error::Normalization(_)),
            ) => Err(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    } else {
        Err("coefficient assumptions fail".to_string())
    };
    let (adm, failure) = match assessed {
        Ok(a) => (Some(a), None),
        Err(m) => (None, Some(m)),
    };
    let feasible = !flagged && adm.as_ref().is_some_and(|a| a.report.feasible());
    let ordering = match adm
        .as_ref()
        .and_then(|a| a.geometry.as_ref().map(|g| (a, g)))
    {
        Some((a, g)) => Some(level_ordering(&f, &a.psi, g, opts.eps0)?),
        None => None,
    };
    out.json(
        output::ADMISSIBILITY,
        &AdmissibilityDoc {
            domain: &cfg.domain,
            coefficients: &cfg.coefficients,
            assumptions: &assumptions,
            sobolev: adm.as_ref().map(|a| SobolevSummary {
                s: a.sobolev.s,
                converged: a.sobolev.converged,
                iterations: a.sobolev.iterations,
                residual: a.sobolev.residual,
                probe_max: a.sobolev.probe_max,
            }),
            report: adm.as_ref().map(|a| &a.report),
            level_ordering: ordering,
            nonexistence: evidence.as_ref(),
            failure,
            feasible,
        },
    )?;
    log::info!(
        "admissibility: {}",
        if feasible { "feasible" } else { "infeasible" }
    );
    Ok(adm.filter(|_| feasible))
}

fn verify_options(cfg: &RunConfig) -> VerifyOptions {
    VerifyOptions {
        bumps: cfg.solver.verify_bumps,
        seed: cfg.solver.seed,
        q: cfg.solver.harnack_q,
        family: cfg.solver.harnack_family,
    }
}

fn continuation_options(cfg: &RunConfig) -> ContinuationOptions {
    let s = &cfg.solver;
    let mut solve = SolveOptions {
        path_nodes: s.path_nodes,
        max_refinements: s.max_refinements,
        ..Default::default()
    };
    solve.deform.max_sweeps = s.max_sweeps;
    solve.deform.grad_tol = s.grad_tol;
    solve.refine.tol = s.newton_tol;
    solve.refine.max_iter = s.newton_max_iter;
    ContinuationOptions {
        solve,
        warm_start: s.warm_start,
        verify: s.verify.then(|| verify_options(cfg)),
    }
}

/// The verdicts a run is judged on. The limit-form inequality is reported
/// but not required: an ε-solution fails it wherever `u² ≲ ε`.
pub fn verification_passes(r: &VerificationReport) -> bool {
    let v = &r.verdicts;
    v.regularized_supersolution
        && v.finite_energy
        && v.positivity
        && v.harnack
        && r.regularized_residual.relative <= RESIDUAL_TOL
}

#[derive(Serialize)]
struct TraceDoc<'a, T> {
    mode: Mode,
    seed: u64,
    trace: &'a T,
}

fn write_solve(
    cfg: &RunConfig,
    out: &Artifacts,
    trace: &SolveTrace,
    psi: &Field,
) -> Result<(), CliError> {
    out.text(output::CONVERGENCE, &output::convergence_csv(trace))?;
    out.text(output::MOUNTAIN_PASS, &output::mountain_pass_csv(trace))?;
    out.field("psi", psi)?;
    if cfg.output.iterates {
        for (k, step) in trace.per_eps.iter().enumerate() {
            out.field(&format!("u_eps_{k:02}"), &step.critical.u)?;
        }
    }
    if let Some(u) = &trace.u0 {
        out.field("u_final", u)?;
    }
    if let Some(v) = &trace.verify {
        out.json(output::VERIFICATION, v)?;
    }
    Ok(())
}

fn solve_status(trace: &SolveTrace) -> Status {
    let verified = trace.verify.as_ref().is_none_or(verification_passes);
    if trace.completed() && trace.bounds_hold() && verified {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn solve(
    cfg: &RunConfig,
    p: &Problem,
    adm: &Admissibility,
    out: &Artifacts,
) -> Result<Status, CliError> {
    let f = Functional::new(&p.domain, &p.coefficients)?;
    let schedule = cfg.schedule()?;
    let trace = run_continuation(&f, adm, &schedule, &continuation_options(cfg))?;
    out.json(
        output::TRACE,
        &TraceDoc {
            mode: cfg.solver.mode,
            seed: cfg.solver.seed,
            trace: &trace,
        },
    )?;
    write_solve(cfg, out, &trace, &adm.psi)?;
    if let Some(failure) = &trace.failure {
        log::error!("continuation failed: {failure}");
    }
    Ok(solve_status(&trace))
}

fn low_regularity(
    cfg: &RunConfig,
    p: &Problem,
    adm: &Admissibility,
    out: &Artifacts,
) -> Result<Status, CliError> {
    let s = &cfg.solver;
    let opts = LowRegularityOptions {
        continuation: continuation_options(cfg),
        schedule: cfg.schedule()?,
        unit: s.unit.unwrap_or(f64::INFINITY),
        ..Default::default()
    };
    let trace: LowRegularityTrace = run_low_regularity(
        &p.domain,
        &p.coefficients,
        &p.psi,
        adm.report.s,
        s.n_max,
        &opts,
    )?;
    out.json(
        output::TRACE,
        &TraceDoc {
            mode: s.mode,
            seed: s.seed,
            trace: &trace,
        },
    )?;
    out.text(
        output::LOW_REGULARITY,
        &output::low_regularity_csv(&trace, p.domain.dimension()),
    )?;
    let last = trace
        .members
        .last()
        .ok_or_else(|| CliError::Validation("no member was solved".into()))?;
    write_solve(cfg, out, last, &adm.psi)?;
    let every = trace.members.len() == s.n_max
        && trace
            .members
            .iter()
            .all(|m| solve_status(m) == Status::Pass);
    Ok(if every && trace.all_bounded() {
        Status::Pass
    } else {
        Status::Fail
    })
}

fn read_dump(path: &Path, d: &Domain) -> Result<Field, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let r = BufReader::new(file);
    Ok(if path.extension().is_some_and(|e| e == "csv") {
        read_field_csv(r, d)?
    } else {
        read_field(r, d)?
    })
}

fn verify_only(cfg: &RunConfig, p: &Problem, out: &Artifacts) -> Result<Status, CliError> {
    let path = cfg
        .solver
        .field
        .as_ref()
        .map(|f| cfg.resolve(f))
        .ok_or_else(|| CliError::Validation("verify-only needs a field".into()))?;
    let u = read_dump(&path, &p.domain)?;
    let eps = match cfg.solver.verify_eps {
        Some(e) => e,
        None => *cfg.schedule()?.last().expect("validated schedule"),
    };
    let f = Functional::new(&p.domain, &p.coefficients)?;
    let report = verify_solution(&f, &u, eps, &verify_options(cfg))?;
    out.json(output::VERIFICATION, &report)?;
    Ok(if verification_passes(&report) {
        Status::Pass
    } else {
        Status::Fail
    })
}

#[derive(Serialize)]
struct HarnackGrid {
    nodes: usize,
    ratios: Vec<f64>,
    constant_estimate: f64,
}

#[derive(Serialize)]
struct HarnackBench {
    q: f64,
    seed: u64,
    family: usize,
    grids: Vec<HarnackGrid>,
    relative_change: f64,
    stable: bool,
}

/// The Harnack family on the configured grid and on one refinement, with
/// `d = V`.
fn harnack_bench(cfg: &RunConfig, out: &Artifacts) -> Result<Status, CliError> {
    let s = &cfg.solver;
    let mut grids = Vec::new();
    for spec in [cfg.domain.clone(), cfg.domain.refined()] {
        let d = Domain::build(&spec)?;
        let (c, _) = build(cfg, &d)?;
        let pot = c.v().values().to_vec();
        let family = supersolution_family(&d, &pot, s.harnack_family, s.seed)?;
        let summary = harnack_family(
            &d,
            &family,
            &pot,
            d.node_near_radius(0.0),
            d.max_ball_radius(),
            s.harnack_q,
        )?;
        log::info!(
            "{} nodes per axis: Harnack constant {:.6e}",
            spec.nodes,
            summary.constant_estimate
        );
        grids.push(HarnackGrid {
            nodes: spec.nodes,
            ratios: summary.ratios,
            constant_estimate: summary.constant_estimate,
        });
    }
    let (c0, c1) = (grids[0].constant_estimate, grids[1].constant_estimate);
    let relative_change = (c1 - c0).abs() / c0;
    let finite = grids.iter().all(|g| g.ratios.iter().all(|r| r.is_finite()));
    let stable = finite && relative_change <= HARNACK_STABILITY;
    out.json(
        output::HARNACK,
        &HarnackBench {
            q: s.harnack_q,
            seed: s.seed,
            family: s.harnack_family,
            grids,
            relative_change,
            stable,
        },
    )?;
    Ok(if stable { Status::Pass } else { Status::Fail })
}

/// Runs `cfg` and writes its artifacts under the configured directory.
pub fn run(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.validate()?;
    let out = Artifacts::create(&cfg.output.dir, cfg.output.fields)?;
    match cfg.solver.mode {
        Mode::HarnackBench => return harnack_bench(cfg, &out),
        Mode::VerifyOnly => return verify_only(cfg, &problem(cfg)?, &out),
        _ => {}
    }
    let p = problem(cfg)?;
    let Some(adm) = admissibility(cfg, &p, &out)? else {
        return Ok(Status::Infeasible);
    };
    match cfg.solver.mode {
        Mode::AdmissibilityOnly => Ok(Status::Pass),
        Mode::Solve => solve(cfg, &p, &adm, &out),
        Mode::LowRegularitySolve => low_regularity(cfg, &p, &adm, &out),
        Mode::VerifyOnly | Mode::HarnackBench => unreachable!("handled above"),
    }
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    kind: &'a str,
    message: String,
}

/// [`run`] with errors written to `error.report` and mapped to a status.
pub fn execute(cfg: &RunConfig) -> Status {
    match run(cfg) {
        Ok(status) => status,
        Err(e) => {
            log::error!("{e}");
            let doc = ErrorDoc {
                kind: e.kind(),
                message: e.to_string(),
            };
            if let Ok(out) = Artifacts::create(&cfg.output.dir, cfg.output.fields) {
                if let Err(w) = out.json(output::ERROR, &doc) {
                    log::error!("could not write the error report: {w}");
                }
            }
            Status::Fail
        }
    }
}
