//! Explicit mountain-pass constants, the three existence conditions on
//! `(ψ, K, Θ)`, the `|B|_∞` variant, and the nonexistence detector.

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{support_mask, ApproxSequence, CoefficientSet};
use crate::domain::{Domain, DomainSpec, Field};
use crate::error::{Error, Result};
use crate::functional::{estimate_sobolev, Functional, SobolevEstimate};
use crate::mountain_pass::find_t2;

pub use crate::functional::two_star;

/// Slack for the `≤ 2` test, which holds with equality at the optimum.
const THETA_K_SLACK: f64 = 1e-12;

/// The comparison curves `Φ(t) = t²/2 - S b₊ t^{2*}/2*` and
/// `Ψ(t) = t²/2 + S b₋ t^{2*}/2*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Curves {
    pub s: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    pub dimension: usize,
    pub two_star: f64,
}

impl Curves {
    pub fn new(s: f64, b_plus: f64, b_minus: f64, dimension: usize) -> Result<Self> {
        if !(b_plus > 0.0) {
            return Err(Error::ConditionB(format!("b₊ = {b_plus} must be positive")));
        }
        if !(s > 0.0) || b_minus < 0.0 {
            return Err(Error::Parameter(format!(
                "need S > 0 and b₋ >= 0, got S = {s}, b₋ = {b_minus}"
            )));
        }
        Ok(Self {
            s,
            b_plus,
            b_minus,
            dimension,
            two_star: two_star(dimension)?,
        })
    }

    pub fn phi(&self, t: f64) -> f64 {
        0.5 * t * t - self.s * self.b_plus * t.powf(self.two_star) / self.two_star
    }

    pub fn psi(&self, t: f64) -> f64 {
        0.5 * t * t + self.s * self.b_minus * t.powf(self.two_star) / self.two_star
    }

    /// Maximizer of `Φ`: `(S b₊)^{-(N-2)/4}`.
    pub fn t0(&self) -> f64 {
        (self.s * self.b_plus).powf(-(self.dimension as f64 - 2.0) / 4.0)
    }

    /// `Φ(t₀) = 1 / (N (S b₊)^{N/2 - 1})`.
    pub fn phi_t0(&self) -> f64 {
        let n = self.dimension as f64;
        1.0 / (n * (self.s * self.b_plus).powf(0.5 * n - 1.0))
    }
}

/// Left-hand side `NΘ² + (N-2) r Θ^{2*} + (N-2) K / Θ^{2*}` of the `(K, Θ)` condition.
pub fn theta_k_lhs(dimension: usize, b_ratio: f64, k: f64, theta: f64) -> f64 {
    let n = dimension as f64;
    let p = 2.0 * n / (n - 2.0);
    let tp = theta.powf(p);
    n * theta * theta + (n - 2.0) * b_ratio * tp + (n - 2.0) * k / tp
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KTheta {
    pub k: f64,
    pub theta: f64,
    pub lhs_min: f64,
    pub feasible: bool,
}

/// Largest `K` for which the `(K, Θ)` condition is satisfiable, with the
/// minimizing `Θ`.
pub fn optimal_k_theta(dimension: usize, b_ratio: f64) -> Result<KTheta> {
    let n = dimension as f64;
    two_star(dimension)?;
    if !(b_ratio >= 0.0) {
        return Err(Error::Parameter(format!(
            "b ratio must be nonnegative, got {b_ratio}"
        )));
    }
    if b_ratio == 0.0 {
        let k = (1.0 / (n - 1.0)).powf(2.0 * (n - 1.0) / (n - 2.0));
        let theta = k.powf((n - 2.0) / (4.0 * (n - 1.0)));
        let lhs_min = 2.0 * (n - 1.0) * k.powf((n - 2.0) / (2.0 * (n - 1.0)));
        return Ok(KTheta {
            k,
            theta,
            lhs_min,
            feasible: true,
        });
    }
    let (mut lo, mut hi) = (0.0, optimal_k_theta(dimension, 0.0)?.k);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if minimize_theta(dimension, b_ratio, mid).1 <= 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (theta, lhs_min) = minimize_theta(dimension, b_ratio, lo);
    Ok(KTheta {
        k: lo,
        theta,
        lhs_min,
        feasible: lo > 0.0 && lhs_min <= 2.0,
    })
}

/// Golden-section minimization of the left-hand side over `Θ ∈ (1e-6, 1 - 1e-6)`.
pub fn minimize_theta(dimension: usize, b_ratio: f64, k: f64) -> (f64, f64) {
    let f = |t: f64| theta_k_lhs(dimension, b_ratio, k, t);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (1e-6, 1.0 - 1e-6);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Comparison constant of the earlier literature, `(1/(2(N-1)))^{N/(N-2)} / (N-2)`.
pub fn hebey_k(dimension: usize) -> f64 {
    let n = dimension as f64;
    (1.0 / (2.0 * (n - 1.0))).powf(n / (n - 2.0)) / (n - 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Verdicts {
    #[serde(rename = "B_plus_condition")]
    pub b_plus_condition: bool,
    #[serde(rename = "psiK")]
    pub psi_k: bool,
    #[serde(rename = "ThetaK")]
    pub theta_k: bool,
    #[serde(rename = "ThetaK_alt")]
    pub theta_k_alt: bool,
}

impl Verdicts {
    pub fn main_route(&self) -> bool {
        self.b_plus_condition && self.psi_k && self.theta_k
    }

    pub fn any_route(&self) -> bool {
        self.main_route() || (self.b_plus_condition && self.theta_k_alt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Main,
    Alternative,
}

/// The constants the mountain-pass solve runs with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Geometry {
    pub route: Route,
    pub curves: Curves,
    pub k: f64,
    pub theta: f64,
    pub t0: f64,
    pub phi_t0: f64,
    pub t1: f64,
    pub t2: f64,
    pub singular_mass: f64,
}

impl Geometry {
    /// `Ψ(t₂) + ∫A/|ψ|^{2*} / (2* t₁^{2*})`, the level bound of the segment path.
    pub fn level_bound(&self) -> f64 {
        self.curves.psi(self.t2)
            + self.singular_mass / (self.curves.two_star * self.t1.powf(self.curves.two_star))
    }

    /// The same bound written through `(S b₊)^{N/2} / (2* Θ^{2*})`, as used for
    /// the uniform estimate along the coefficient sequence.
    pub fn sequence_bound(&self) -> f64 {
        let c = &self.curves;
        let n = c.dimension as f64;
        0.5 * self.t2 * self.t2
            + c.s * c.b_minus * self.t2.powf(c.two_star) / c.two_star
            + (c.s * c.b_plus).powf(0.5 * n) / (c.two_star * self.theta.powf(c.two_star))
                * self.singular_mass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    #[serde(rename = "S")]
    pub s: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    pub two_star: f64,
    pub t0: f64,
    pub phi_t0: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "Theta")]
    pub theta: f64,
    pub t1: f64,
    pub t2: Option<f64>,
    pub singular_mass: f64,
    pub verdicts: Verdicts,
    pub nonexistence_flag: bool,
    #[serde(rename = "hebey_K")]
    pub hebey_k: f64,
    pub theta_k_lhs: f64,
    pub b_sup_abs: f64,
    pub critical_mass: f64,
    pub route: Option<Route>,
}

impl AdmissibilityReport {
    pub fn feasible(&self) -> bool {
        self.verdicts.any_route() && !self.nonexistence_flag
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConditionOptions {
    /// Use this `K` instead of the optimal one.
    pub k: Option<f64>,
    /// Use this `Θ` instead of the optimal one.
    pub theta: Option<f64>,
}

/// Normalizes `ψ` to `‖ψ‖ = 1`.
pub fn normalize_psi(f: &Functional<'_>, psi: &Field) -> Result<Field> {
    let n = f.norm(psi)?;
    if !(n > 0.0) {
        return Err(Error::Normalization("ψ has zero norm".into()));
    }
    Ok(psi.scaled(1.0 / n))
}

/// Evaluates the conditions for a given `S`. `t2` is left unset.
pub fn check_conditions(
    f: &Functional<'_>,
    psi: &Field,
    s: f64,
    opts: &ConditionOptions,
) -> Result<(AdmissibilityReport, Option<Geometry>)> {
    let psi = normalize_psi(f, psi)?;
    let c = f.coefficients();
    let n = f.domain().dimension();
    let p = f.two_star();
    let mask = support_mask(&psi);
    let (b_plus, b_minus) = c.b_bounds(&mask);
    let b_abs = b_plus.max(b_minus);
    let critical_mass = f.critical_integral(psi.values());
    let singular_mass = f.singular_mass(psi.values(), 0.0);
    let b_plus_condition = b_abs.is_finite() && critical_mass > 0.0;

    let hebey = hebey_k(n);
    let mut report = AdmissibilityReport {
        s,
        b_plus,
        b_minus,
        two_star: p,
        t0: f64::NAN,
        phi_t0: f64::NAN,
        k: f64::NAN,
        theta: f64::NAN,
        t1: f64::NAN,
        t2: None,
        singular_mass,
        verdicts: Verdicts {
            b_plus_condition,
            psi_k: false,
            theta_k: false,
            theta_k_alt: false,
        },
        nonexistence_flag: false,
        hebey_k: hebey,
        theta_k_lhs: f64::NAN,
        b_sup_abs: b_abs,
        critical_mass,
        route: None,
    };
    if b_plus <= 0.0 {
        return Ok((report, None));
    }

    let ratio = b_minus / b_plus;
    let opt = optimal_k_theta(n, ratio)?;
    let k = opts.k.unwrap_or(opt.k);
    let theta = opts.theta.unwrap_or(if opts.k.is_some() {
        minimize_theta(n, ratio, k).0
    } else {
        opt.theta
    });
    let curves = Curves::new(s, b_plus, b_minus, n)?;
    let lhs = theta_k_lhs(n, ratio, k, theta);
    report.t0 = curves.t0();
    report.phi_t0 = curves.phi_t0();
    report.k = k;
    report.theta = theta;
    report.t1 = theta * report.t0;
    report.theta_k_lhs = lhs;
    report.verdicts.psi_k = singular_mass <= k / (b_plus * s).powi(n as i32 - 1);
    report.verdicts.theta_k = lhs <= 2.0 * (1.0 + THETA_K_SLACK);

    let alt = optimal_k_theta(n, 1.0)?;
    let alt_k = opts.k.unwrap_or(alt.k);
    let alt_theta = opts.theta.unwrap_or(if opts.k.is_some() {
        minimize_theta(n, 1.0, alt_k).0
    } else {
        alt.theta
    });
    let alt_lhs = theta_k_lhs(n, 1.0, alt_k, alt_theta);
    report.verdicts.theta_k_alt = singular_mass <= alt_k / (b_abs * s).powi(n as i32 - 1)
        && alt_lhs <= 2.0 * (1.0 + THETA_K_SLACK);

    let geometry = if report.verdicts.main_route() {
        Some(Geometry {
            route: Route::Main,
            curves,
            k,
            theta,
            t0: report.t0,
            phi_t0: report.phi_t0,
            t1: report.t1,
            t2: f64::NAN,
            singular_mass,
        })
    } else if b_plus_condition && report.verdicts.theta_k_alt {
        let curves = Curves::new(s, b_abs, b_abs, n)?;
        Some(Geometry {
            route: Route::Alternative,
            curves,
            k: alt_k,
            theta: alt_theta,
            t0: curves.t0(),
            phi_t0: curves.phi_t0(),
            t1: alt_theta * curves.t0(),
            t2: f64::NAN,
            singular_mass,
        })
    } else {
        None
    };
    report.route = geometry.map(|g| g.route);
    Ok((report, geometry))
}

/// Everything the solver needs from the admissibility stage.
#[derive(Clone, Debug)]
pub struct Admissibility {
    pub report: AdmissibilityReport,
    pub geometry: Option<Geometry>,
    pub psi: Field,
    pub sobolev: SobolevEstimate,
}

#[derive(Clone, Debug)]
pub struct AssessOptions {
    pub conditions: ConditionOptions,
    /// Largest ε of the schedule; `t₂` serves every `ε <= eps0`.
    pub eps0: f64,
    pub seed: u64,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self {
            conditions: ConditionOptions::default(),
            eps0: 1.0,
            seed: 0,
        }
    }
}

/// Estimates `S`, checks the conditions, and locates `t₂` when they hold.
/// With a coefficient sequence, `first` is its first member and `t₂` is
/// chosen to serve every index.
pub fn assess(
    f: &Functional<'_>,
    psi: &Field,
    opts: &AssessOptions,
    first: Option<&ApproxSequence>,
) -> Result<Admissibility> {
    let sobolev = estimate_sobolev(f, Some(psi), opts.seed)?;
    let (mut report, mut geometry) = check_conditions(f, psi, sobolev.s, &opts.conditions)?;
    let psi = normalize_psi(f, psi)?;
    if let Some(g) = geometry.as_mut() {
        g.t2 = find_t2(f, &psi, g, opts.eps0, first)?;
        report.t2 = Some(g.t2);
    }
    Ok(Admissibility {
        report,
        geometry,
        psi,
        sobolev,
    })
}

/// Per-probe singular masses on the base and the enlarged domain.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeEvidence {
    pub label: String,
    pub mass_base: f64,
    pub mass_enlarged: f64,
    pub growth: f64,
    pub diverges: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonexistenceEvidence {
    pub flag: bool,
    pub base: DomainSpec,
    pub enlarged: DomainSpec,
    /// Growth factor counted as divergence: `7/8 · 2^N`, the volume ratio
    /// under doubling with a margin.
    pub threshold: f64,
    pub probes: Vec<ProbeEvidence>,
}

/// Compares `∫A/|v|^{2*}` for every probe on the base domain and on the
/// enlarged one (twice the radius, or twice the resolution on the torus).
/// The flag is raised only if every probe diverges; it is a witness, never
/// a proof.
pub fn detect_nonexistence<F>(base: &DomainSpec, build: F) -> Result<NonexistenceEvidence>
where
    F: Fn(&Domain) -> Result<(CoefficientSet, Vec<(String, Field)>)> + Sync,
{
    let enlarged = base.enlarged();
    let specs = [base.clone(), enlarged.clone()];
    let masses: Vec<Result<Vec<(String, f64)>>> = specs
        .par_iter()
        .map(|spec| {
            let d = Domain::build(spec)?;
            let (c, probes) = build(&d)?;
            let f = Functional::new(&d, &c)?;
            Ok(probes
                .into_iter()
                .map(|(label, v)| (label, f.singular_mass(v.values(), 0.0)))
                .collect())
        })
        .collect();
    let mut masses = masses.into_iter();
    let small = masses.next().expect("two domains")?;
    let large = masses.next().expect("two domains")?;
    let threshold = 0.875 * 2f64.powi(base.dimension as i32);
    let probes: Vec<ProbeEvidence> = small
        .into_iter()
        .zip(large)
        .map(|((label, a), (_, b))| {
            let growth = if a > 0.0 { b / a } else { f64::INFINITY };
            let diverges = !a.is_finite() || !b.is_finite() || growth >= threshold;
            ProbeEvidence {
                label,
                mass_base: a,
                mass_enlarged: b,
                growth,
                diverges,
            }
        })
        .collect();
    let flag = !probes.is_empty() && probes.iter().all(|p| p.diverges);
    Ok(NonexistenceEvidence {
        flag,
        base: base.clone(),
        enlarged,
        threshold,
        probes,
    })
}

/// Default probe family: the supplied `ψ`, polynomial tails of several
/// powers, and a Gaussian.
pub fn default_probes(domain: &Domain, psi: &Field) -> Vec<(String, Field)> {
    let reach = domain.max_ball_radius();
    let mut out = vec![("psi".to_string(), psi.clone())];
    for p in [0.5, 1.0, 2.0] {
        if let Ok(v) = domain.radial_field(|r| (1.0 + r * r).powf(-p)) {
            out.push((format!("poly{p}"), v));
        }
    }
    if let Ok(v) = domain.radial_field(|r| (-(r * r) / (0.25 * reach * reach)).exp()) {
        out.push(("gaussian".into(), v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn closed_forms_n3() {
        let kt = optimal_k_theta(3, 0.0).unwrap();
        assert_relative_eq!(kt.k, 0.0625, max_relative = 1e-15);
        assert_relative_eq!(kt.theta, 0.5f64.sqrt(), max_relative = 1e-15);
        assert!((theta_k_lhs(3, 0.0, kt.k, kt.theta) - 2.0).abs() < 1e-12);
        assert_relative_eq!(hebey_k(3), 0.015625, max_relative = 1e-15);
    }

    #[test]
    fn curves_closed_forms() {
        let c = Curves::new(1.0, 1.0, 0.0, 3).unwrap();
        assert_relative_eq!(c.t0(), 1.0);
        assert_relative_eq!(c.phi_t0(), 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(c.phi(c.t0()), c.phi_t0(), max_relative = 1e-14);
        assert_eq!(c.psi(1.7), 0.5 * 1.7 * 1.7);
        assert!(matches!(
            Curves::new(1.0, 0.0, 0.0, 3),
            Err(Error::ConditionB(_))
        ));
    }

    #[test]
    fn feasible_k_shrinks_with_ratio() {
        let mut prev = optimal_k_theta(3, 0.0).unwrap().k;
        for r in [1.0, 10.0, 100.0] {
            let kt = optimal_k_theta(3, r).unwrap();
            assert!(kt.feasible && kt.k < prev && kt.lhs_min <= 2.0);
            prev = kt.k;
        }
    }

    proptest! {
        #[test]
        fn optimum_is_feasibility_boundary(n in 3usize..=5, bump in 1e-6f64..1.0) {
            let kt = optimal_k_theta(n, 0.0).unwrap();
            prop_assert!((theta_k_lhs(n, 0.0, kt.k, kt.theta) - 2.0).abs() < 1e-12);
            prop_assert!(kt.k > hebey_k(n));
            let (_, m) = minimize_theta(n, 0.0, kt.k * (1.0 + bump));
            prop_assert!(m > 2.0);
            prop_assert!(kt.theta < (2.0 / n as f64).sqrt());
        }

        #[test]
        fn phi_monotone_pieces(s in 0.01f64..10.0, b in 0.01f64..10.0, n in 3usize..=5) {
            let c = Curves::new(s, b, 0.0, n).unwrap();
            let t0 = c.t0();
            let mut prev = c.phi(0.0);
            for i in 1..=1000 {
                let v = c.phi(t0 * i as f64 / 1000.0);
                prop_assert!(v >= prev - 1e-12 * prev.abs().max(1e-300));
                prev = v;
            }
            for i in 1..=1000 {
                let v = c.phi(t0 * (1.0 + 2.0 * i as f64 / 1000.0));
                prop_assert!(v <= prev + 1e-12 * prev.abs());
                prev = v;
            }
        }
    }
}
