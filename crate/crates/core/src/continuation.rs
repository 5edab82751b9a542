//! The limit `ε -> 0+` with warm starts, and the outer loop over truncated
//! coefficient sequences.

use serde::Serialize;

use crate::admissibility::{
    check_conditions, normalize_psi, Admissibility, ConditionOptions, Geometry,
};
use crate::coefficients::{approx_step, CoefficientSet};
use crate::domain::{Domain, Field};
use crate::error::{Error, Result};
use crate::functional::{Functional, POSITIVITY_FLOOR};
use crate::mountain_pass::{
    deform_and_refine, find_t2, refine_critical, solve_fixed_eps, CriticalPoint, MountainPass,
    MpPath, RefineOptions, SolveOptions, SweepRecord,
};
use crate::verify::{verify_solution, VerificationReport, VerifyOptions};

/// Relative slack of the per-entry bound checks.
pub const BOUND_TOL: f64 = 1e-6;

/// `eps0 · ratio^{-k}` for `k = 0..steps`.
pub fn geometric_schedule(eps0: f64, ratio: f64, steps: usize) -> Result<Vec<f64>> {
    if !(eps0 > 0.0) || !(ratio > 1.0) || steps == 0 {
        return Err(Error::Parameter(format!(
            "need ε₀ > 0, ratio > 1, steps >= 1; got {eps0}, {ratio}, {steps}"
        )));
    }
    Ok((0..steps).map(|k| eps0 * ratio.powi(-(k as i32))).collect())
}

/// `1, 1/4, …, 4^{-11}`.
pub fn default_schedule() -> Vec<f64> {
    geometric_schedule(1.0, 4.0, 12).expect("valid constants")
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty()
        || schedule.iter().any(|e| !(*e > 0.0))
        || schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::Parameter(
            "ε schedule must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    pub solve: SolveOptions,
    /// Route each path through the previous critical point.
    pub warm_start: bool,
    /// Verify the final iterate.
    pub verify: Option<VerifyOptions>,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            warm_start: true,
            verify: Some(VerifyOptions::default()),
        }
    }
}

/// One ε of the schedule.
#[derive(Clone, Debug, Serialize)]
pub struct EpsStep {
    pub critical: CriticalPoint,
    pub sweeps: usize,
    pub refinements: usize,
    pub deformation_converged: bool,
    pub initial_max: f64,
    /// `‖u_ε‖² <= N m_ε`.
    pub nehari_ok: bool,
    /// `m_ε` below the level bound.
    pub level_ok: bool,
    /// Singular mass below `2*` times the level bound.
    pub mass_ok: bool,
    #[serde(skip)]
    pub history: Vec<SweepRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveTrace {
    pub eps_schedule: Vec<f64>,
    pub per_eps: Vec<EpsStep>,
    #[serde(skip)]
    pub u0: Option<Field>,
    pub norms: Vec<f64>,
    pub levels: Vec<f64>,
    pub singular_masses: Vec<f64>,
    pub min_u: Vec<f64>,
    /// `‖u_{ε_{k+1}} - u_{ε_k}‖` for consecutive entries.
    pub cauchy: Vec<f64>,
    pub barrier: f64,
    pub level_bound: f64,
    pub mass_bound: f64,
    /// Set when an ε-solve failed; the arrays stop before it.
    pub failure: Option<String>,
    pub approx_index: Option<usize>,
    pub verify: Option<VerificationReport>,
}

impl SolveTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none() && self.per_eps.len() == self.eps_schedule.len()
    }

    /// Every recorded entry satisfies the Nehari, level and mass bounds.
    pub fn bounds_hold(&self) -> bool {
        self.per_eps
            .iter()
            .all(|s| s.nehari_ok && s.level_ok && s.mass_ok)
    }

    pub fn final_eps(&self) -> Option<f64> {
        self.per_eps.last().map(|s| s.critical.eps)
    }
}

struct Run {
    trace: SolveTrace,
    paths: Vec<MpPath>,
}

fn within(value: f64, bound: f64) -> bool {
    value <= bound + BOUND_TOL * bound.abs().max(1.0)
}

fn continue_eps(
    f: &Functional<'_>,
    geometry: &Geometry,
    psi: &Field,
    schedule: &[f64],
    opts: &ContinuationOptions,
    seeds: Option<&[MpPath]>,
) -> Result<Run> {
    check_schedule(schedule)?;
    let n = f.domain().dimension() as f64;
    let level_bound = geometry.level_bound();
    let mass_bound = f.two_star() * level_bound;
    let mut trace = SolveTrace {
        eps_schedule: schedule.to_vec(),
        per_eps: Vec::new(),
        u0: None,
        norms: Vec::new(),
        levels: Vec::new(),
        singular_masses: Vec::new(),
        min_u: Vec::new(),
        cauchy: Vec::new(),
        barrier: geometry.phi_t0,
        level_bound,
        mass_bound,
        failure: None,
        approx_index: None,
        verify: None,
    };
    let mut paths = Vec::new();
    for (k, &eps) in schedule.iter().enumerate() {
        let warm = if opts.warm_start {
            trace.u0.as_ref().map(|u| u.values())
        } else {
            None
        };
        let solved: Result<MountainPass> = match seeds.and_then(|s| s.get(k)) {
            Some(seed) => deform_and_refine(f, geometry, seed.clone(), eps, &opts.solve),
            None => solve_fixed_eps(f, geometry, psi, eps, warm, &opts.solve),
        };
        let mp = match solved {
            Ok(mp) => mp,
            Err(e @ (Error::SaddleLost(_) | Error::Nonconvergence(_) | Error::LinearSolve(_))) => {
                log::warn!("continuation stopped at ε = {eps:e}: {e}");
                trace.failure = Some(format!("ε = {eps:e}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let c = mp.critical;
        let u = &c.u;
        let mass = f.singular_mass(u.values(), eps);
        if let Some(prev) = &trace.u0 {
            trace.cauchy.push(f.norm(&u.add_scaled(-1.0, prev)?)?);
        }
        log::info!(
            "ε = {eps:.3e}: m = {:.9}, ‖u‖ = {:.6}, {} sweeps",
            c.m,
            c.norm,
            mp.history.len()
        );
        trace.norms.push(c.norm);
        trace.levels.push(c.m);
        trace.singular_masses.push(mass);
        trace.min_u.push(u.min());
        trace.per_eps.push(EpsStep {
            nehari_ok: within(c.norm * c.norm, n * c.m),
            level_ok: within(c.m, level_bound),
            mass_ok: within(mass, mass_bound),
            sweeps: mp.history.len(),
            refinements: mp.refinements,
            deformation_converged: mp.deformation_converged,
            initial_max: mp.initial_max,
            history: mp.history,
            critical: c.clone(),
        });
        trace.u0 = Some(c.u);
        paths.push(mp.path);
    }
    if let (Some(vopts), Some(u0), Some(eps)) = (&opts.verify, &trace.u0, trace.final_eps()) {
        trace.verify = Some(verify_solution(f, u0, eps, vopts)?);
    }
    Ok(Run { trace, paths })
}

/// Solves each ε of `schedule` by mountain pass. A failed solve ends the
/// trace with a failure record instead of an error.
pub fn run_continuation(
    f: &Functional<'_>,
    adm: &Admissibility,
    schedule: &[f64],
    opts: &ContinuationOptions,
) -> Result<SolveTrace> {
    if adm.report.nonexistence_flag {
        return Err(Error::Precondition(
            "nonexistence was flagged for this configuration".into(),
        ));
    }
    let geometry = adm
        .geometry
        .as_ref()
        .ok_or_else(|| Error::Precondition("no admissible mountain-pass geometry".into()))?;
    Ok(continue_eps(f, geometry, &adm.psi, schedule, opts, None)?.trace)
}

/// Newton continuation from `start` along `schedule`, without the path
/// search. Returns the critical point of every ε reached.
pub fn run_local_continuation(
    f: &Functional<'_>,
    start: &Field,
    schedule: &[f64],
    refine: &RefineOptions,
) -> Result<Vec<CriticalPoint>> {
    check_schedule(schedule)?;
    f.domain().check(start)?;
    let mut out: Vec<CriticalPoint> = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let from = out.last().map_or(start, |c| &c.u);
        let c = refine_critical(f, from.values(), eps, refine)?;
        if c.u.max() <= POSITIVITY_FLOOR {
            return Err(Error::Nonconvergence(format!(
                "Newton collapsed to u = 0 at ε = {eps:e}"
            )));
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LowRegularityOptions {
    pub continuation: ContinuationOptions,
    pub schedule: Vec<f64>,
    /// Radius step of the support truncation of `A_n`.
    pub unit: f64,
    pub conditions: ConditionOptions,
}

impl Default for LowRegularityOptions {
    fn default() -> Self {
        Self {
            continuation: ContinuationOptions::default(),
            schedule: default_schedule(),
            unit: f64::INFINITY,
            conditions: ConditionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LowRegularityTrace {
    pub t2: f64,
    /// Bound on `‖u‖²/N` shared by every member and every ε.
    pub sequence_bound: f64,
    pub members: Vec<SolveTrace>,
    /// Largest `‖u‖²/N` of each member.
    pub scaled_norms: Vec<f64>,
    pub bounded: Vec<bool>,
    /// `‖u_{n+1} - u_n‖` between the final iterates of consecutive members.
    pub increments: Vec<f64>,
}

impl LowRegularityTrace {
    pub fn all_bounded(&self) -> bool {
        self.bounded.iter().all(|b| *b)
    }
}

/// Solves the truncated problems `n = 1..=n_max`, each by a full ε
/// continuation. All members share `t₂`; member `n > 1` starts from the
/// paths of member `n - 1`.
pub fn run_low_regularity(
    domain: &Domain,
    target: &CoefficientSet,
    psi: &Field,
    s: f64,
    n_max: usize,
    opts: &LowRegularityOptions,
) -> Result<LowRegularityTrace> {
    if n_max == 0 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let f = Functional::new(domain, target)?;
    let psi = normalize_psi(&f, psi)?;
    let (_, geometry) = check_conditions(&f, &psi, s, &opts.conditions)?;
    let mut geometry = geometry
        .ok_or_else(|| Error::Precondition("target coefficients admit no geometry".into()))?;
    let (_, b_minus) = target.b_bounds(&vec![true; domain.len()]);
    let strict = b_minus > 0.0;
    let first = approx_step(domain, target, 1, opts.unit, strict)?;
    geometry.t2 = find_t2(&f, &psi, &geometry, opts.schedule[0], Some(&first))?;
    let sequence_bound = geometry.sequence_bound();
    let n = domain.dimension() as f64;

    let mut out = LowRegularityTrace {
        t2: geometry.t2,
        sequence_bound,
        members: Vec::new(),
        scaled_norms: Vec::new(),
        bounded: Vec::new(),
        increments: Vec::new(),
    };
    let mut seeds: Option<Vec<MpPath>> = None;
    for index in 1..=n_max {
        let member =
            approx_step(domain, target, index, opts.unit, strict)?.coefficients(domain, target)?;
        let fm = Functional::new(domain, &member)?;
        let (_, g) = check_conditions(&fm, &psi, s, &opts.conditions)?;
        let mut g =
            g.ok_or_else(|| Error::Geometry(format!("member {index} admits no geometry")))?;
        g.t2 = geometry.t2;
        let start: Vec<f64> = psi.values().iter().map(|x| g.t1 * x).collect();
        let moved = seeds.take().map(|paths| {
            paths
                .into_iter()
                .map(|mut p| {
                    p.nodes[0] = start.clone();
                    p
                })
                .collect::<Vec<_>>()
        });
        let run = continue_eps(
            &fm,
            &g,
            &psi,
            &opts.schedule,
            &opts.continuation,
            moved.as_deref(),
        )?;
        let mut trace = run.trace;
        trace.approx_index = Some(index);
        let scaled = trace.norms.iter().map(|x| x * x / n).fold(0.0, f64::max);
        out.scaled_norms.push(scaled);
        out.bounded.push(
            trace
                .norms
                .iter()
                .all(|x| within(x * x / n, sequence_bound)),
        );
        if let (Some(prev), Some(u)) = (
            out.members.last().and_then(|m: &SolveTrace| m.u0.as_ref()),
            &trace.u0,
        ) {
            out.increments.push(f.norm(&u.add_scaled(-1.0, prev)?)?);
        }
        let failed = trace.failure.is_some();
        out.members.push(trace);
        if failed {
            break;
        }
        seeds = Some(run.paths);
    }
    Ok(out)
}
