//! Mountain-pass critical points of `I_ε` between `t₁ψ` and `t₂ψ`.

mod path;
mod refine;
mod span;

pub use path::{
    deform, deform_refining, initial_path, path_through, refine_path, reparametrize, DeformOptions,
    Deformation, MpPath, StopReason, SweepRecord,
};
pub use refine::{below_barrier, refine_critical, CriticalPoint, RefineOptions, BARRIER_SLACK};
pub use span::SpanLandscape;

use serde::Serialize;

use crate::admissibility::Geometry;
use crate::coefficients::ApproxSequence;
use crate::domain::Field;
use crate::error::{Error, Result};
use crate::functional::Functional;

/// What the path deformation needs to know about an energy.
pub trait Landscape: Sync {
    fn energy(&self, x: &[f64]) -> f64;
    /// Gradient represented in the landscape's own inner product, with its norm.
    fn descent(&self, x: &[f64]) -> Result<(Vec<f64>, f64)>;
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
    /// Maps a trial point back into the admissible set.
    fn project(&self, _x: &mut [f64]) {}
}

/// `I_ε` on the full grid with the `V`-inner product, restricted to `u >= 0`.
#[derive(Clone, Copy, Debug)]
pub struct RegularizedLandscape<'a> {
    pub functional: Functional<'a>,
    pub eps: f64,
}

impl Landscape for RegularizedLandscape<'_> {
    fn energy(&self, x: &[f64]) -> f64 {
        self.functional.energy_total(x, self.eps)
    }

    fn descent(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let g = self.functional.gradient_values(x, self.eps)?;
        let r = self.functional.riesz(&g)?;
        let norm = self.functional.inner_values(&r, &r).max(0.0).sqrt();
        Ok((r, norm))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.functional.inner_values(&d, &d).max(0.0).sqrt()
    }

    fn project(&self, x: &mut [f64]) {
        for v in x.iter_mut() {
            *v = v.max(0.0);
        }
    }
}

/// Smallest `t` in `2t₀, 4t₀, …` whose energy does not exceed the start
/// energy for every `ε <= eps0` (and, given the first member of a
/// coefficient sequence, for every index of that sequence).
pub fn find_t2(
    f: &Functional<'_>,
    psi: &Field,
    geometry: &Geometry,
    eps0: f64,
    first: Option<&ApproxSequence>,
) -> Result<f64> {
    let p = f.two_star();
    let t1 = geometry.t1;
    let scaled = |t: f64| psi.values().iter().map(|x| t * x).collect::<Vec<_>>();
    let (upper, target): (Box<dyn Fn(f64) -> f64>, f64) = match first {
        None => {
            let target = f.energy_values(&scaled(t1), eps0)?.total;
            (Box::new(move |t| f.energy_total(&scaled(t), 0.0)), target)
        }
        Some(seq) => {
            let c = f.coefficients();
            let w = f.domain().weights();
            let psi_p: Vec<f64> = psi.values().iter().map(|x| x.abs().powf(p)).collect();
            let b = c.b().values();
            // ∫ (B_{1,+} - B_-) |ψ|^{2*} and ∫ (B_+ - B_{1,-}) |ψ|^{2*}
            let weak: f64 = (0..w.len())
                .map(|i| w[i] * (seq.b_plus_n.values()[i] - (-b[i]).max(0.0)) * psi_p[i])
                .sum();
            let strong: f64 = (0..w.len())
                .map(|i| w[i] * (b[i].max(0.0) - seq.b_minus_n.values()[i]) * psi_p[i])
                .sum();
            let mass = f.singular_mass(psi.values(), 0.0);
            let a1_term: f64 = (0..w.len())
                .map(|i| {
                    let s = eps0 + t1 * t1 * psi.values()[i] * psi.values()[i];
                    w[i] * seq.a_n.values()[i] / s.powf(0.5 * p)
                })
                .sum();
            let target = 0.5 * t1 * t1 - t1.powf(p) / p * strong + a1_term / p;
            (
                Box::new(move |t: f64| 0.5 * t * t - t.powf(p) / p * weak + mass / (p * t.powf(p))),
                target,
            )
        }
    };
    let mut t = 2.0 * geometry.t0;
    for _ in 0..60 {
        if upper(t) <= target {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::Geometry(format!(
        "energy along tψ never fell below {target:e} up to t = {t:e}"
    )))
}

/// Full result of one fixed-ε solve.
#[derive(Clone, Debug)]
pub struct MountainPass {
    pub critical: CriticalPoint,
    pub path: MpPath,
    /// Sweeps of every resolution level, numbered consecutively.
    pub history: Vec<SweepRecord>,
    pub deformation_converged: bool,
    pub initial_max: f64,
    /// How often the path was resampled at twice the resolution.
    pub refinements: usize,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub path_nodes: usize,
    pub deform: DeformOptions,
    pub refine: RefineOptions,
    /// Resolution doublings allowed after a failed refinement.
    pub max_refinements: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            path_nodes: 33,
            deform: DeformOptions::default(),
            refine: RefineOptions::default(),
            max_refinements: 5,
        }
    }
}

/// Builds the path (through `warm` when given), deforms it, and refines its
/// peak to a critical point. When refinement fails the path is resampled at
/// twice the resolution, deformed again, and refinement is retried.
pub fn solve_fixed_eps(
    f: &Functional<'_>,
    geometry: &Geometry,
    psi: &Field,
    eps: f64,
    warm: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<MountainPass> {
    if opts.path_nodes < 16 {
        return Err(Error::Parameter(format!(
            "path needs at least 16 nodes, got {}",
            opts.path_nodes
        )));
    }
    let land = RegularizedLandscape {
        functional: *f,
        eps,
    };
    let start: Vec<f64> = psi.values().iter().map(|x| geometry.t1 * x).collect();
    let end: Vec<f64> = psi.values().iter().map(|x| geometry.t2 * x).collect();
    let path = match warm {
        Some(w) => path_through(&land, &[start, w.to_vec(), end], opts.path_nodes),
        None => initial_path(&land, start, end, opts.path_nodes),
    };
    deform_and_refine(f, geometry, path, eps, opts)
}

/// Deforms an existing path from `t₁ψ` to `t₂ψ` and refines its peak.
pub fn deform_and_refine(
    f: &Functional<'_>,
    geometry: &Geometry,
    path: MpPath,
    eps: f64,
    opts: &SolveOptions,
) -> Result<MountainPass> {
    let land = RegularizedLandscape {
        functional: *f,
        eps,
    };
    // energies were computed for another ε when the path is reused
    let mut path = MpPath::new(&land, path.nodes);
    let initial_max = path.max_energy();
    // a critical point above the starting maximum is not the pass of this
    // path, but any level up to the a priori bound serves the estimates
    let ceiling = initial_max.max(geometry.level_bound());
    let mut refine = opts.refine.clone();
    refine.barrier = refine.barrier.or(Some(geometry.phi_t0));
    let mut history: Vec<SweepRecord> = Vec::new();
    let mut converged = true;
    let mut refinements = 0;
    loop {
        let d = deform(path, &land, &opts.deform)?;
        let offset = history.len();
        history.extend(d.history.iter().map(|r| SweepRecord {
            sweep: r.sweep + offset,
            ..*r
        }));
        converged &= d.converged();
        path = d.path;
        let peak = &path.nodes[path.peak_index()];
        // a level below the barrier (checked inside) means the peak sat on
        // the wrong side of an under-resolved ridge crossing
        let outcome = refine_critical(f, peak, eps, &refine);
        let failure = match outcome {
            Ok(critical) if critical.m <= ceiling => {
                return Ok(MountainPass { critical, path, history, deformation_converged: converged, initial_max, refinements })
            }
            Ok(critical) => Error::Nonconvergence(format!(
                "refinement reached level {:e} above both the starting path maximum and the level bound {ceiling:e}",
                critical.m
            )),
            Err(e @ (Error::SaddleLost(_) | Error::Nonconvergence(_))) => e,
            Err(e) => return Err(e),
        };
        log::debug!("ε = {eps:e}, {} path nodes: {failure}", path.len());
        if refinements == opts.max_refinements {
            return Err(failure);
        }
        path = refine_path(&land, &path);
        refinements += 1;
    }
}

/// Energies along `tψ` used in reports.
#[derive(Clone, Debug, Serialize)]
pub struct LevelOrdering {
    pub at_t0: f64,
    pub phi_t0: f64,
    pub at_t1: f64,
    pub at_t2: f64,
}

impl LevelOrdering {
    pub fn holds(&self) -> bool {
        self.at_t0 > self.phi_t0 && self.phi_t0 > self.at_t1 && self.at_t1 >= self.at_t2
    }
}

pub fn level_ordering(
    f: &Functional<'_>,
    psi: &Field,
    geometry: &Geometry,
    eps: f64,
) -> Result<LevelOrdering> {
    let at = |t: f64| {
        f.energy_values(&psi.values().iter().map(|x| t * x).collect::<Vec<_>>(), eps)
            .map(|e| e.total)
    };
    Ok(LevelOrdering {
        at_t0: at(geometry.t0)?,
        phi_t0: geometry.phi_t0,
        at_t1: at(geometry.t1)?,
        at_t2: at(geometry.t2)?,
    })
}
