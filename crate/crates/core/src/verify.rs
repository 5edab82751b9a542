//! Checks on a computed field: the weak supersolution inequality, the
//! pointwise residual, finite energy, positivity on balls and the Harnack
//! ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Domain, DomainKind, Field};
use crate::error::{Error, Result};
use crate::functional::{Functional, POSITIVITY_FLOOR};

/// Relative tolerance of every weak inequality check.
pub const WEAK_TOL: f64 = 1e-6;

/// A nonnegative test function.
#[derive(Clone, Debug)]
pub enum TestFunction {
    /// The nodal hat function of one node.
    Hat(usize),
    Profile(Field),
}

/// Every nodal hat followed by `bumps` random bumps.
pub fn default_test_set(domain: &Domain, bumps: usize, seed: u64) -> Vec<TestFunction> {
    let mut out: Vec<TestFunction> = (0..domain.len()).map(TestFunction::Hat).collect();
    out.extend(
        random_bumps(domain, bumps, seed)
            .into_iter()
            .map(TestFunction::Profile),
    );
    out
}

/// Bumps `(1 - d²/ρ²)²` with random centers and radii `ρ ∈ [3h, R/4]`.
/// On the radial grid a bump is a shell around a random radius.
pub fn random_bumps(domain: &Domain, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = domain.max_ball_radius();
    let h = domain.spacing();
    let specs: Vec<(Vec<f64>, f64)> = (0..count)
        .map(|_| {
            let center = match domain.kind() {
                DomainKind::RadialEuclidean => vec![rng.gen_range(0.0..reach)],
                DomainKind::FlatTorus => (0..domain.dimension())
                    .map(|_| rng.gen_range(0.0..2.0 * reach))
                    .collect(),
            };
            let rho = rng.gen_range(3.0 * h..(0.25 * reach).max(3.0 * h * 1.001));
            (center, rho)
        })
        .collect();
    specs
        .into_iter()
        .map(|(c, rho)| bump(domain, &c, rho))
        .collect()
}

fn bump(domain: &Domain, center: &[f64], rho: f64) -> Field {
    let period = 2.0 * domain.max_ball_radius();
    let values = (0..domain.len())
        .map(|i| {
            let d2: f64 = match domain.kind() {
                DomainKind::RadialEuclidean => (domain.radii()[i] - center[0]).powi(2),
                DomainKind::FlatTorus => domain
                    .position(i)
                    .iter()
                    .zip(center)
                    .map(|(x, c)| {
                        let d = (x - c).abs() % period;
                        d.min(period - d).powi(2)
                    })
                    .sum(),
            };
            let s = 1.0 - d2 / (rho * rho);
            if s > 0.0 {
                s * s
            } else {
                0.0
            }
        })
        .collect();
    Field::from_raw(domain.id(), values)
}

/// Pointwise `-Δu + Vu - B|u|^{2*-2}u`, the singular right-hand side (ε-form
/// `Au/(ε+u²)^{2*/2+1}`, or `A/u^{2*+1}` for `ε = 0`, `+∞` where `u` vanishes
/// on `supp A`), and the sum of the magnitudes of all terms.
struct Terms {
    lhs: Vec<f64>,
    singular: Vec<f64>,
    magnitude: Vec<f64>,
}

fn terms(f: &Functional<'_>, u: &[f64], eps: f64) -> Terms {
    let c = f.coefficients();
    let p = f.two_star();
    let lap = f.domain().laplacian_values(u);
    let n = u.len();
    let (mut lhs, mut singular, mut magnitude) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let x = u[i];
        let (v, b, a) = (c.v().values()[i], c.b().values()[i], c.a().values()[i]);
        let crit = b * x.abs().powf(p - 2.0) * x;
        lhs[i] = -lap[i] + v * x - crit;
        singular[i] = if !c.supp_a()[i] {
            0.0
        } else if eps > 0.0 {
            a * x / (eps + x * x).powf(0.5 * p + 1.0)
        } else if x < POSITIVITY_FLOOR {
            f64::INFINITY
        } else {
            a / x.powf(p + 1.0)
        };
        magnitude[i] = lap[i].abs()
            + (v * x).abs()
            + crit.abs()
            + if singular[i].is_finite() {
                singular[i]
            } else {
                0.0
            };
    }
    Terms {
        lhs,
        singular,
        magnitude,
    }
}

fn check_nonnegative(u: &[f64]) -> Result<()> {
    match u.iter().position(|x| *x < 0.0) {
        Some(i) => Err(Error::Precondition(format!(
            "u is negative at node {i} ({:e})",
            u[i]
        ))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SupersolutionOutcome {
    /// Smallest `⟨u,φ⟩ - ∫B|u|^{2*-2}uφ - ∫_{supp A} (singular) φ` over the test set.
    pub margin: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Index of the test function attaining the margin.
    pub worst: usize,
    /// False when `u` vanishes somewhere on `supp A` in the limit form.
    pub integrable: bool,
    pub diagnosis: Option<String>,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Evaluates the weak inequality on every test function. `eps > 0` tests the
/// regularized equation, `eps = 0` the singular one.
pub fn supersolution_test(
    f: &Functional<'_>,
    u: &Field,
    tests: &[TestFunction],
    eps: f64,
) -> Result<SupersolutionOutcome> {
    let d = f.domain();
    d.check(u)?;
    check_nonnegative(u.values())?;
    if !(eps >= 0.0) {
        return Err(Error::Parameter(format!(
            "ε must be nonnegative, got {eps}"
        )));
    }
    let t = terms(f, u.values(), eps);
    let w = d.weights();
    let pairs: Vec<(f64, f64)> = tests
        .par_iter()
        .map(|phi| match phi {
            TestFunction::Hat(i) => (
                w[*i] * (t.lhs[*i] - t.singular[*i]),
                w[*i] * t.magnitude[*i],
            ),
            TestFunction::Profile(p) => {
                let (mut value, mut scale) = (0.0, 0.0);
                for (i, x) in p.values().iter().enumerate() {
                    if *x > 0.0 {
                        value += w[i] * x * (t.lhs[i] - t.singular[i]);
                        scale += w[i] * x * t.magnitude[i];
                    }
                }
                (value, scale)
            }
        })
        .collect();
    let scale = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let (mut worst, mut margin) = (0, f64::INFINITY);
    for (k, (v, _)) in pairs.iter().enumerate() {
        if *v < margin {
            margin = *v;
            worst = k;
        }
    }
    let zero_node = t.singular.iter().position(|s| s.is_infinite());
    let integrable = zero_node.is_none();
    let diagnosis = zero_node.map(|i| {
        format!(
            "u = {:e} at node {i} inside supp A: the singular integral diverges",
            u.values()[i]
        )
    });
    let tolerance = WEAK_TOL * scale;
    Ok(SupersolutionOutcome {
        margin,
        scale,
        tolerance,
        pass: integrable && margin >= -tolerance,
        worst,
        integrable,
        diagnosis,
        values: pairs.into_iter().map(|p| p.0).collect(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Residual {
    /// `(∫ r²)^{1/2}` of the pointwise residual `r`.
    pub norm: f64,
    /// The same norm of the sum of the magnitudes of all terms.
    pub scale: f64,
    pub relative: f64,
}

/// Weighted L² norm of `-Δu + Vu - B|u|^{2*-2}u - (singular)`.
pub fn solution_residual(f: &Functional<'_>, u: &Field, eps: f64) -> Result<Residual> {
    let d = f.domain();
    d.check(u)?;
    check_nonnegative(u.values())?;
    let t = terms(f, u.values(), eps);
    if let Some(i) = t.singular.iter().position(|s| s.is_infinite()) {
        return Err(Error::Precondition(format!(
            "u vanishes at node {i} inside supp A"
        )));
    }
    let w = d.weights();
    let mut norm = 0.0;
    let mut scale = 0.0;
    for (i, wi) in w.iter().enumerate() {
        norm += wi * (t.lhs[i] - t.singular[i]).powi(2);
        scale += wi * t.magnitude[i].powi(2);
    }
    let (norm, scale) = (norm.sqrt(), scale.sqrt());
    Ok(Residual {
        norm,
        scale,
        relative: if scale > 0.0 { norm / scale } else { norm },
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FiniteEnergy {
    /// `∫ |B| |u|^{2*}`.
    pub critical_part: f64,
    /// `∫_{supp A} A / |u|^{2*}`, `+∞` when `u` vanishes on `supp A`.
    pub singular_part: f64,
    pub both_finite: bool,
}

pub fn finite_energy(f: &Functional<'_>, u: &Field) -> Result<FiniteEnergy> {
    f.domain().check(u)?;
    let critical_part = f.critical_abs_integral(u.values());
    let singular_part = f.singular_mass(u.values(), 0.0);
    Ok(FiniteEnergy {
        critical_part,
        singular_part,
        both_finite: critical_part.is_finite() && singular_part.is_finite(),
    })
}

/// A closed geodesic ball given by its center node and radius.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
}

impl Ball {
    pub fn mask(&self, domain: &Domain) -> Vec<bool> {
        domain.ball_mask(self.center, self.radius)
    }
}

/// Overlapping balls of radius `R/8` covering the domain, `R` the largest
/// geodesic ball radius; centers sit on a lattice of spacing `R/8`.
pub fn default_balls(domain: &Domain) -> Vec<Ball> {
    let radius = domain.max_ball_radius() / 8.0;
    match domain.kind() {
        DomainKind::RadialEuclidean => (0..=8)
            .map(|k| Ball {
                center: domain.node_near_radius(k as f64 * radius),
                radius,
            })
            .collect(),
        DomainKind::FlatTorus => {
            let n = domain.spec().nodes;
            let dim = domain.dimension();
            let per_axis = (2.0 * domain.max_ball_radius() / radius).round() as usize;
            let axis: Vec<usize> = (0..per_axis)
                .map(|k| ((k as f64 * radius / domain.spacing()).round() as usize) % n)
                .collect();
            let mut centers = vec![0usize];
            for _ in 0..dim {
                centers = centers
                    .iter()
                    .flat_map(|c| axis.iter().map(move |a| c * n + a))
                    .collect();
            }
            centers.sort_unstable();
            centers.dedup();
            centers
                .into_iter()
                .map(|center| Ball { center, radius })
                .collect()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PositivityReport {
    pub min_value: f64,
    pub per_ball_min: Vec<f64>,
    /// Balls whose minimum is at or below the positivity floor.
    pub offending: Vec<usize>,
    pub pass: bool,
}

pub fn positivity_check(domain: &Domain, u: &Field, balls: &[Ball]) -> Result<PositivityReport> {
    domain.check(u)?;
    let v = u.values();
    let per_ball_min: Vec<f64> = balls
        .par_iter()
        .map(|b| {
            (0..v.len())
                .filter(|j| {
                    domain.node_distance(b.center, *j) <= b.radius + 1e-12 * domain.spacing()
                })
                .map(|j| v[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let offending: Vec<usize> = per_ball_min
        .iter()
        .enumerate()
        .filter(|(_, m)| **m <= POSITIVITY_FLOOR)
        .map(|(k, _)| k)
        .collect();
    Ok(PositivityReport {
        min_value: u.min(),
        pass: offending.is_empty(),
        per_ball_min,
        offending,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HarnackProbe {
    pub q: f64,
    pub center: usize,
    pub radius: f64,
    /// `(∫_{B(R/8)} u^q)^{1/q}`.
    pub lhs: f64,
    /// `inf_{B(R/16)} u`.
    pub rhs_inf: f64,
    /// `lhs / rhs_inf`, `+∞` when the infimum vanishes.
    pub ratio: f64,
    /// Smallest hat value of `-Δu + du` on `B(R)`.
    pub hypothesis_margin: f64,
    /// With an infinite ratio: whether `u` vanishes on all of `B(R)`, as the
    /// strong minimum principle predicts.
    pub vanishes_on_ball: Option<bool>,
}

/// Both sides of the Harnack inequality for `u` on `B(center, R)`, after
/// checking `-Δu + du >= 0` there against every nodal hat.
pub fn harnack_probe(
    domain: &Domain,
    u: &Field,
    d: &[f64],
    center: usize,
    radius: f64,
    q: f64,
) -> Result<HarnackProbe> {
    domain.check(u)?;
    check_nonnegative(u.values())?;
    if !(q > 0.0) || !(radius > 0.0) || d.len() != u.len() {
        return Err(Error::Parameter(format!(
            "need q > 0, R > 0 and one d per node, got q = {q}, R = {radius}"
        )));
    }
    let v = u.values();
    let w = domain.weights();
    let lap = domain.laplacian_values(v);
    let dist: Vec<f64> = (0..v.len())
        .map(|j| domain.node_distance(center, j))
        .collect();
    let slack = 1e-12 * domain.spacing();
    let (mut margin, mut scale) = (f64::INFINITY, 0.0f64);
    for j in 0..v.len() {
        if dist[j] <= radius + slack {
            margin = margin.min(w[j] * (-lap[j] + d[j] * v[j]));
            scale = scale.max(w[j] * (lap[j].abs() + (d[j] * v[j]).abs()));
        }
    }
    if margin < -WEAK_TOL * scale {
        return Err(Error::Hypothesis(format!(
            "-Δu + du reaches {margin:e} on B(R), below -{:e}",
            WEAK_TOL * scale
        )));
    }
    let mut integral = 0.0;
    let mut rhs_inf = f64::INFINITY;
    for j in 0..v.len() {
        if dist[j] <= radius / 8.0 + slack {
            integral += w[j] * v[j].powf(q);
        }
        if dist[j] <= radius / 16.0 + slack {
            rhs_inf = rhs_inf.min(v[j]);
        }
    }
    let lhs = integral.powf(1.0 / q);
    let ratio = if rhs_inf > POSITIVITY_FLOOR {
        lhs / rhs_inf
    } else {
        f64::INFINITY
    };
    let vanishes_on_ball = ratio
        .is_infinite()
        .then(|| (0..v.len()).all(|j| dist[j] > radius + slack || v[j] <= POSITIVITY_FLOOR));
    Ok(HarnackProbe {
        q,
        center,
        radius,
        lhs,
        rhs_inf,
        ratio,
        hypothesis_margin: margin,
        vanishes_on_ball,
    })
}

/// Solutions of `(-Δ + d) u = f` for random nonnegative `f`, each a sum of
/// three bumps whose centers and radii are drawn in physical units, so the
/// same seed gives the same family on every resolution.
pub fn supersolution_family(
    domain: &Domain,
    d: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Field>> {
    if d.len() != domain.len() {
        return Err(Error::Parameter("one d per node required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = domain.max_ball_radius();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut rhs = vec![0.0; domain.len()];
        for _ in 0..3 {
            let center: Vec<f64> = match domain.kind() {
                DomainKind::RadialEuclidean => vec![rng.gen_range(0.0..0.5 * reach)],
                DomainKind::FlatTorus => (0..domain.dimension())
                    .map(|_| rng.gen_range(0.0..2.0 * reach))
                    .collect(),
            };
            let rho = rng.gen_range(0.1 * reach..0.4 * reach);
            let amp = rng.gen_range(0.5..2.0);
            for (r, b) in rhs.iter_mut().zip(bump(domain, &center, rho).values()) {
                *r += amp * b;
            }
        }
        let u = domain.solve_shifted(d, &rhs)?;
        // the discrete inverse of an M-matrix is nonnegative; clear roundoff
        out.push(Field::new(
            domain,
            u.into_iter().map(|x| x.max(0.0)).collect(),
        )?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct HarnackSummary {
    pub q: f64,
    pub ratios: Vec<f64>,
    /// Largest observed ratio: the empirical Harnack constant.
    pub constant_estimate: f64,
}

/// Probes every member of `family` on `B(center, R)`.
pub fn harnack_family(
    domain: &Domain,
    family: &[Field],
    d: &[f64],
    center: usize,
    radius: f64,
    q: f64,
) -> Result<HarnackSummary> {
    let ratios: Vec<f64> = family
        .iter()
        .map(|u| harnack_probe(domain, u, d, center, radius, q).map(|p| p.ratio))
        .collect::<Result<_>>()?;
    let constant_estimate = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(HarnackSummary {
        q,
        ratios,
        constant_estimate,
    })
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub bumps: usize,
    pub seed: u64,
    pub q: f64,
    /// Size of the supersolution family behind the Harnack constant.
    pub family: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            bumps: 50,
            seed: 0,
            q: 0.5,
            family: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HarnackReport {
    pub q: f64,
    pub ratio: f64,
    /// Largest ratio over `u` and a family of generated supersolutions.
    pub constant_estimate: f64,
    pub probe: HarnackProbe,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VerifyVerdicts {
    /// The weak inequality with the singular term `A/u^{2*+1}`.
    pub supersolution: bool,
    /// The weak inequality of the regularized equation at the run's ε.
    pub regularized_supersolution: bool,
    pub finite_energy: bool,
    pub positivity: bool,
    pub harnack: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub eps: f64,
    pub supersolution_margin: f64,
    pub supersolution: SupersolutionOutcome,
    pub regularized: SupersolutionOutcome,
    /// Residual of the singular equation; absent when `u` vanishes on `supp A`.
    pub residual_norm: Option<f64>,
    pub regularized_residual: Residual,
    pub finite_energy: FiniteEnergy,
    pub positivity: PositivityReport,
    pub harnack: Option<HarnackReport>,
    pub harnack_failure: Option<String>,
    pub verdicts: VerifyVerdicts,
}

/// Runs every check on `u`, which is meant to solve the problem regularized
/// at `eps` (pass `eps = 0` for a field claimed to solve the singular one).
pub fn verify_solution(
    f: &Functional<'_>,
    u: &Field,
    eps: f64,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let d = f.domain();
    let tests = default_test_set(d, opts.bumps, opts.seed);
    let supersolution = supersolution_test(f, u, &tests, 0.0)?;
    let regularized = if eps > 0.0 {
        supersolution_test(f, u, &tests, eps)?
    } else {
        supersolution.clone()
    };
    let residual_norm = solution_residual(f, u, 0.0).ok().map(|r| r.norm);
    let regularized_residual = solution_residual(f, u, eps)?;
    let finite_energy = finite_energy(f, u)?;
    let positivity = positivity_check(d, u, &default_balls(d))?;
    // -Δu + (V + B₋ u^{2*-2}) u >= 0 holds for any nonnegative supersolution
    let p = f.two_star();
    let c = f.coefficients();
    let potential: Vec<f64> = (0..d.len())
        .map(|i| {
            c.v().values()[i] + (-c.b().values()[i]).max(0.0) * u.values()[i].abs().powf(p - 2.0)
        })
        .collect();
    let (center, radius) = (d.node_near_radius(0.0), d.max_ball_radius());
    let (harnack, harnack_failure) = match harnack_probe(d, u, &potential, center, radius, opts.q) {
        Ok(probe) => {
            let family = supersolution_family(d, &potential, opts.family, opts.seed)?;
            let summary = harnack_family(d, &family, &potential, center, radius, opts.q)?;
            let report = HarnackReport {
                q: opts.q,
                ratio: probe.ratio,
                constant_estimate: summary.constant_estimate.max(probe.ratio),
                probe,
            };
            (Some(report), None)
        }
        Err(e @ Error::Hypothesis(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let verdicts = VerifyVerdicts {
        supersolution: supersolution.pass,
        regularized_supersolution: regularized.pass,
        finite_energy: finite_energy.both_finite,
        positivity: positivity.pass,
        harnack: harnack.as_ref().is_some_and(|h| h.ratio.is_finite()),
    };
    Ok(VerificationReport {
        eps,
        supersolution_margin: supersolution.margin,
        supersolution,
        regularized,
        residual_norm,
        regularized_residual,
        finite_energy,
        positivity,
        harnack,
        harnack_failure,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSet;
    use crate::domain::DomainSpec;
    use approx::assert_relative_eq;

    fn torus() -> Domain {
        Domain::build(&DomainSpec::torus(3, 8, 1.0)).unwrap()
    }

    #[test]
    fn constant_is_positive_everywhere() {
        let d = torus();
        let r = positivity_check(&d, &d.constant(1.0), &default_balls(&d)).unwrap();
        assert!(r.pass && r.per_ball_min.iter().all(|m| *m == 1.0));
        let mut v = vec![1.0; d.len()];
        v[37] = 0.0;
        let r = positivity_check(&d, &d.field(v).unwrap(), &default_balls(&d)).unwrap();
        assert!(!r.pass && !r.offending.is_empty());
        for k in &r.offending {
            assert!(
                d.node_distance(default_balls(&d)[*k].center, 37)
                    <= default_balls(&d)[*k].radius + 1e-12
            );
        }
    }

    #[test]
    fn harnack_of_constant() {
        let d = torus();
        let probe = harnack_probe(&d, &d.constant(2.0), &vec![0.3; d.len()], 0, 0.5, 0.5).unwrap();
        let vol: f64 = d
            .ball_mask(0, 0.5 / 8.0)
            .iter()
            .zip(d.weights())
            .filter(|(m, _)| **m)
            .map(|(_, w)| w)
            .sum();
        assert_relative_eq!(probe.ratio, vol.powf(2.0), max_relative = 1e-12);
        assert!(probe.hypothesis_margin >= 0.0);
    }

    #[test]
    fn harnack_hypothesis_failure() {
        let d = torus();
        let u = d
            .field_from_positions(|x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).cos())
            .unwrap();
        assert!(matches!(
            harnack_probe(&d, &u, &vec![0.0; d.len()], 0, 0.5, 0.5),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn zero_on_support_fails_integrability() {
        let d = torus();
        let c = CoefficientSet::new(&d, d.constant(1.0), d.constant(1.0), d.constant(1.0)).unwrap();
        let f = Functional::new(&d, &c).unwrap();
        let mut v = vec![1.0; d.len()];
        v[5] = 0.0;
        let out =
            supersolution_test(&f, &d.field(v).unwrap(), &default_test_set(&d, 5, 1), 0.0).unwrap();
        assert!(!out.integrable && !out.pass && out.diagnosis.is_some());
        assert!(supersolution_test(&f, &d.constant(-1.0), &[TestFunction::Hat(0)], 0.0).is_err());
    }

    #[test]
    fn family_members_are_supersolutions() {
        let d = torus();
        let dd = vec![0.5; d.len()];
        for u in supersolution_family(&d, &dd, 4, 3).unwrap() {
            assert!(u.min() > 0.0);
            assert!(harnack_probe(&d, &u, &dd, 0, 0.5, 0.5)
                .unwrap()
                .ratio
                .is_finite());
        }
    }
}
