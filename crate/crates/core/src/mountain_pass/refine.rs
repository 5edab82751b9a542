//! Damped Newton iteration on `I_ε' = 0` from the path peak, globalized on
//! the dual gradient norm and kept in `u >= 0`.

use serde::Serialize;

use crate::domain::Field;
use crate::error::{Error, Result};
use crate::functional::Functional;

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    #[serde(skip)]
    pub u: Field,
    pub m: f64,
    pub eps: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub norm: f64,
}

/// Relative tolerance of the barrier comparisons. The barrier rests on the
/// estimated `S`, and when the singular mass is small the pass level sits
/// almost on it.
pub const BARRIER_SLACK: f64 = 1e-3;

/// `value` lies clearly below `barrier`.
pub fn below_barrier(value: f64, barrier: f64) -> bool {
    value < barrier - BARRIER_SLACK * barrier.abs()
}

#[derive(Clone, Debug)]
pub struct RefineOptions {
    /// Converged once `‖I_ε'(u)‖ <= tol · max(1, ‖u‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// When set, a level clearly below this value is reported as a lost saddle.
    pub barrier: Option<f64>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            barrier: None,
        }
    }
}

struct State {
    u: Vec<f64>,
    g: Vec<f64>,
    r: Vec<f64>,
    merit: f64,
}

fn state(f: &Functional<'_>, u: Vec<f64>, eps: f64) -> Result<State> {
    let g = f.gradient_values(&u, eps)?;
    let r = f.riesz(&g)?;
    let merit = f.inner_values(&r, &r).max(0.0).sqrt();
    Ok(State { u, g, r, merit })
}

fn clamp(u: Vec<f64>) -> Vec<f64> {
    u.into_iter().map(|x| x.max(0.0)).collect()
}

fn line_search(f: &Functional<'_>, s: &State, dir: &[f64], eps: f64) -> Result<Option<State>> {
    let mut tau = 1.0;
    for _ in 0..30 {
        let trial = clamp(s.u.iter().zip(dir).map(|(a, b)| a + tau * b).collect());
        if let Ok(next) = state(f, trial, eps) {
            if next.merit.is_finite() && next.merit < (1.0 - 1e-4 * tau) * s.merit {
                return Ok(Some(next));
            }
        }
        tau *= 0.5;
    }
    Ok(None)
}

pub fn refine_critical(
    f: &Functional<'_>,
    peak: &[f64],
    eps: f64,
    opts: &RefineOptions,
) -> Result<CriticalPoint> {
    let d = f.domain();
    let mut s = state(f, clamp(peak.to_vec()), eps)?;
    let mut iterations = 0;
    loop {
        let norm = f.norm_sq_values(&s.u)?.sqrt();
        if s.merit <= opts.tol * norm.max(1.0) {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Nonconvergence(format!(
                "critical point refinement stalled at ‖I'‖ = {:.3e} after {iterations} iterations",
                s.merit
            )));
        }
        iterations += 1;
        let hdiag = f.hessian_diag(&s.u, eps);
        let newton = d
            .solve_shifted(&hdiag, &s.g.iter().map(|x| -x).collect::<Vec<_>>())
            .ok();
        let mut next = match newton {
            Some(dir) if dir.iter().all(|x| x.is_finite()) => line_search(f, &s, &dir, eps)?,
            _ => None,
        };
        if next.is_none() {
            // steepest descent on ½‖I'‖²: the direction -(-Δ+V)^{-1} H r
            let mut hr = d.laplacian_values(&s.r);
            for ((h, x), dg) in hr.iter_mut().zip(&s.r).zip(&hdiag) {
                *h = -*h + dg * x;
            }
            let dir: Vec<f64> = f.riesz(&hr)?.into_iter().map(|x| -x).collect();
            next = line_search(f, &s, &dir, eps)?;
        }
        match next {
            Some(n) => s = n,
            None => {
                return Err(Error::Nonconvergence(format!(
                    "no descent for ‖I'‖ = {:.3e} at iteration {iterations}",
                    s.merit
                )))
            }
        }
    }
    let m = f.energy_values(&s.u, eps)?.total;
    if let Some(barrier) = opts.barrier {
        if below_barrier(m, barrier) {
            return Err(Error::SaddleLost(format!(
                "level {m:e} fell to the barrier {barrier:e}"
            )));
        }
    }
    let norm = f.norm_sq_values(&s.u)?.sqrt();
    Ok(CriticalPoint {
        u: Field::from_raw(d.id(), s.u),
        m,
        eps,
        grad_norm: s.merit,
        iterations,
        norm,
    })
}
