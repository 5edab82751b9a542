//! Discrete paths and their deformation: every interior node takes a
//! damped descent step, then the nodes are redistributed at equal arc length.

use rayon::prelude::*;
use serde::Serialize;

use super::Landscape;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct MpPath {
    pub nodes: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

impl MpPath {
    pub fn new<L: Landscape>(land: &L, nodes: Vec<Vec<f64>>) -> Self {
        let energies = nodes.par_iter().map(|x| land.energy(x)).collect();
        Self { nodes, energies }
    }

    pub fn peak_index(&self) -> usize {
        let mut best = 0;
        for (i, e) in self.energies.iter().enumerate() {
            if *e > self.energies[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_energy(&self) -> f64 {
        self.energies[self.peak_index()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Longest distance between consecutive nodes.
    pub fn max_gap<L: Landscape>(&self, land: &L) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| land.distance(&w[0], &w[1]))
            .fold(0.0, f64::max)
    }

    pub fn length<L: Landscape>(&self, land: &L) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| land.distance(&w[0], &w[1]))
            .sum()
    }
}

/// The straight segment from `start` to `end` with `nodes` equally spaced points.
pub fn initial_path<L: Landscape>(
    land: &L,
    start: Vec<f64>,
    end: Vec<f64>,
    nodes: usize,
) -> MpPath {
    let mut out = Vec::with_capacity(nodes);
    for j in 0..nodes {
        let s = j as f64 / (nodes - 1) as f64;
        out.push(
            start
                .iter()
                .zip(&end)
                .map(|(a, b)| (1.0 - s) * a + s * b)
                .collect(),
        );
    }
    out[0] = start;
    out[nodes - 1] = end;
    MpPath::new(land, out)
}

/// Polygonal path through `waypoints`, resampled at equal arc length.
pub fn path_through<L: Landscape>(land: &L, waypoints: &[Vec<f64>], nodes: usize) -> MpPath {
    resample(land, waypoints, nodes)
}

fn resample<L: Landscape>(land: &L, pts: &[Vec<f64>], nodes: usize) -> MpPath {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + land.distance(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(nodes);
    out.push(pts[0].clone());
    let mut seg = 0;
    for j in 1..nodes - 1 {
        let target = total * j as f64 / (nodes - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let s = if len > 0.0 {
            ((target - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(
            pts[seg]
                .iter()
                .zip(&pts[seg + 1])
                .map(|(a, b)| (1.0 - s) * a + s * b)
                .collect(),
        );
    }
    out.push(pts[pts.len() - 1].clone());
    MpPath::new(land, out)
}

/// Redistributes interior nodes at equal arc length; endpoints are untouched.
pub fn reparametrize<L: Landscape>(land: &L, path: &MpPath) -> MpPath {
    resample(land, &path.nodes, path.nodes.len())
}

#[derive(Clone, Debug)]
pub struct DeformOptions {
    pub max_sweeps: usize,
    /// Stop once the peak node's gradient norm is below `grad_tol · max(1, ‖peak‖)`.
    pub grad_tol: f64,
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    pub armijo_start: f64,
    pub armijo_factor: f64,
    pub armijo_trials: usize,
    /// A node moves at most this fraction of the mean node spacing per sweep.
    pub step_cap: f64,
}

impl Default for DeformOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 2000,
            grad_tol: 1e-8,
            stagnation_tol: 1e-12,
            stagnation_window: 50,
            armijo_start: 1.0,
            armijo_factor: 0.5,
            armijo_trials: 30,
            step_cap: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub max_energy: f64,
    pub peak_grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Gradient,
    Stagnation,
    Budget,
}

#[derive(Clone, Debug)]
pub struct Deformation {
    pub path: MpPath,
    pub history: Vec<SweepRecord>,
    pub stop: StopReason,
}

impl Deformation {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::Budget
    }
}

fn armijo_step<L: Landscape>(
    land: &L,
    x: &[f64],
    e: f64,
    opts: &DeformOptions,
    cap: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let (d, norm) = land.descent(x)?;
    if norm == 0.0 {
        return Ok((x.to_vec(), e, 0.0));
    }
    let mut tau = opts.armijo_start.min(cap / norm);
    for _ in 0..opts.armijo_trials {
        let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - tau * b).collect();
        land.project(&mut trial);
        let et = land.energy(&trial);
        if et <= e - 1e-4 * tau * norm * norm {
            return Ok((trial, et, norm));
        }
        tau *= opts.armijo_factor;
    }
    Ok((x.to_vec(), e, norm))
}

/// Deforms `path` downhill. A sweep moves every interior node above the
/// endpoint level, then redistributes all nodes; it is kept only if the
/// largest node energy does not rise, otherwise the step cap is halved and
/// the sweep is retried. Nodes at or below the endpoint level stay put, so the
/// part of the path beyond the pass cannot run away.
pub fn deform<L: Landscape>(
    mut path: MpPath,
    land: &L,
    opts: &DeformOptions,
) -> Result<Deformation> {
    let p = path.nodes.len();
    let floor = path.energies[0].max(path.energies[p - 1]);
    let mut history: Vec<SweepRecord> = Vec::new();
    let zero = vec![0.0; path.nodes[0].len()];
    let mut shrink = 1.0;
    for sweep in 1..=opts.max_sweeps {
        let peak = path.peak_index();
        let cap = shrink * opts.step_cap * path.length(land) / (p - 1) as f64;
        let moved: Vec<Result<(Vec<f64>, f64, f64)>> = (1..p - 1)
            .into_par_iter()
            .map(|j| {
                if j == peak || path.energies[j] > floor {
                    armijo_step(land, &path.nodes[j], path.energies[j], opts, cap)
                } else {
                    Ok((path.nodes[j].clone(), path.energies[j], f64::NAN))
                }
            })
            .collect();
        let mut trial = path.clone();
        let mut peak_grad = f64::NAN;
        for (j, m) in (1..p - 1).zip(moved) {
            let (x, e, g) = m?;
            if j == peak {
                peak_grad = g;
            }
            trial.nodes[j] = x;
            trial.energies[j] = e;
        }
        if peak == 0 || peak == p - 1 {
            peak_grad = land.descent(&path.nodes[peak])?.1;
        }
        let candidate = reparametrize(land, &trial);
        if candidate.max_energy() <= path.max_energy() {
            path = candidate;
            shrink = (2.0 * shrink).min(1.0);
        } else {
            shrink *= 0.5;
        }
        let max_energy = path.max_energy();
        history.push(SweepRecord {
            sweep,
            max_energy,
            peak_grad_norm: peak_grad,
        });
        let scale = land.distance(&path.nodes[peak], &zero).max(1.0);
        if peak_grad <= opts.grad_tol * scale {
            return Ok(Deformation {
                path,
                history,
                stop: StopReason::Gradient,
            });
        }
        if history.len() > opts.stagnation_window {
            let old = history[history.len() - 1 - opts.stagnation_window].max_energy;
            if old - max_energy <= opts.stagnation_tol * max_energy.abs().max(1.0) {
                return Ok(Deformation {
                    path,
                    history,
                    stop: StopReason::Stagnation,
                });
            }
        }
    }
    log::warn!(
        "path deformation exhausted its budget of {} sweeps",
        opts.max_sweeps
    );
    Ok(Deformation {
        path,
        history,
        stop: StopReason::Budget,
    })
}

/// The same curve resampled at `2P - 1` nodes.
pub fn refine_path<L: Landscape>(land: &L, path: &MpPath) -> MpPath {
    resample(land, &path.nodes, 2 * path.len() - 1)
}

/// [`deform`], then up to `doublings` rounds of [`refine_path`] and
/// deformation while the peak gradient has not met its tolerance. Sweeps of
/// all rounds are numbered consecutively.
pub fn deform_refining<L: Landscape>(
    path: MpPath,
    land: &L,
    opts: &DeformOptions,
    doublings: usize,
) -> Result<Deformation> {
    let mut out = deform(path, land, opts)?;
    for _ in 0..doublings {
        if out.stop == StopReason::Gradient {
            break;
        }
        let next = deform(refine_path(land, &out.path), land, opts)?;
        let offset = out.history.len();
        out.history.extend(next.history.iter().map(|r| SweepRecord {
            sweep: r.sweep + offset,
            ..*r
        }));
        out.path = next.path;
        out.stop = next.stop;
    }
    Ok(out)
}
