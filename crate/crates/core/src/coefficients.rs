//! Coefficient data `(A, B, V)`, the candidate profile `ψ`, the two example
//! families, and the monotone truncation sequences `(A_n, B_{n,±})`.

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Field};
use crate::error::{Error, Result};

/// Relative threshold defining the numerical support of a grid function.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CoefficientSet {
    a: Field,
    b: Field,
    v: Field,
    supp_a: Vec<bool>,
}

impl CoefficientSet {
    /// Validates `A >= 0`, `A ≢ 0` and `B_+ ≢ 0`. Coercivity of `-Δ + V` is
    /// only reported, see [`CoefficientSet::check_assumptions`].
    pub fn new(domain: &Domain, a: Field, b: Field, v: Field) -> Result<Self> {
        for f in [&a, &b, &v] {
            domain.check(f)?;
        }
        if a.values().iter().any(|x| *x < 0.0) {
            return Err(Error::Spec("A must be nonnegative".into()));
        }
        if a.values().iter().all(|x| *x == 0.0) {
            return Err(Error::Spec("A vanishes identically".into()));
        }
        if b.values().iter().all(|x| *x <= 0.0) {
            return Err(Error::Spec(
                "positive part of B vanishes identically".into(),
            ));
        }
        let supp_a = a.values().iter().map(|x| *x > 0.0).collect();
        Ok(Self { a, b, v, supp_a })
    }

    pub fn a(&self) -> &Field {
        &self.a
    }

    pub fn b(&self) -> &Field {
        &self.b
    }

    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn supp_a(&self) -> &[bool] {
        &self.supp_a
    }

    /// `(sup B_+, sup B_-)` over the nodes selected by `mask`.
    pub fn b_bounds(&self, mask: &[bool]) -> (f64, f64) {
        let mut plus: f64 = 0.0;
        let mut minus: f64 = 0.0;
        for (b, m) in self.b.values().iter().zip(mask) {
            if *m {
                plus = plus.max(b.max(0.0));
                minus = minus.max((-b).max(0.0));
            }
        }
        (plus, minus)
    }

    /// Global `|B|_∞`.
    pub fn b_sup_abs(&self) -> f64 {
        self.b.values().iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Fails with a support error unless `ψ > 0` on every node of `supp A`.
    pub fn check_support(&self, psi: &Field) -> Result<()> {
        if psi.domain_id() != self.a.domain_id() {
            return Err(Error::DomainMismatch("ψ lives on another domain".into()));
        }
        match self
            .supp_a
            .iter()
            .zip(psi.values())
            .position(|(s, p)| *s && *p <= 0.0)
        {
            Some(i) => Err(Error::Support(format!(
                "ψ vanishes at node {i} inside supp A"
            ))),
            None => Ok(()),
        }
    }

    pub fn check_assumptions(&self, domain: &Domain) -> Result<AssumptionReport> {
        domain.check(&self.a)?;
        let a_pass =
            self.a.values().iter().all(|x| *x >= 0.0) && self.a.values().iter().any(|x| *x > 0.0);
        let b_pass = self.b.values().iter().any(|x| *x > 0.0);
        let v_essinf = self.v.min();
        let bounded = self.v.values().iter().all(|x| x.is_finite());
        let (v_pass, v_rayleigh) = if v_essinf > 0.0 && bounded {
            (true, None)
        } else {
            let lambda =
                smallest_rayleigh_quotient(domain, self.v.values())? - truncation_shift(domain)?;
            (lambda > 0.0, Some(lambda))
        };
        let n = domain.dimension() as f64;
        let p = 2.0 * n / (n + 2.0);
        let a_norm = domain
            .integrate_values(
                &self
                    .a
                    .values()
                    .iter()
                    .map(|x| x.powf(p))
                    .collect::<Vec<_>>(),
            )
            .powf(1.0 / p);
        Ok(AssumptionReport {
            a_pass,
            b_pass,
            v_pass,
            v_essinf,
            v_rayleigh,
            a_dual_norm: a_norm,
        })
    }

    /// Replaces `A` (used by the manufactured-solution construction).
    pub fn with_a(&self, domain: &Domain, a: Field) -> Result<Self> {
        Self::new(domain, a, self.b.clone(), self.v.clone())
    }

    /// Scales `A` by `factor > 0`.
    pub fn scale_a(&self, domain: &Domain, factor: f64) -> Result<Self> {
        self.with_a(domain, self.a.scaled(factor))
    }

    /// Scales `B` by `factor > 0`.
    pub fn scale_b(&self, domain: &Domain, factor: f64) -> Result<Self> {
        Self::new(
            domain,
            self.a.clone(),
            self.b.scaled(factor),
            self.v.clone(),
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub a_pass: bool,
    pub b_pass: bool,
    pub v_pass: bool,
    pub v_essinf: f64,
    /// Smallest discrete Rayleigh quotient of `-Δ + V` minus that of `-Δ`
    /// alone, computed only when `essinf V > 0` does not already settle
    /// coercivity. The subtraction removes the spectral gap created by the
    /// artificial Dirichlet wall of the truncated radial grid (it is zero on
    /// the torus).
    pub v_rayleigh: Option<f64>,
    /// Discrete `L^{2N/(N+2)}` norm of `A`, recorded but not gated on.
    pub a_dual_norm: f64,
}

/// Smallest eigenvalue of `-Δ + V` (weighted inner product) by shifted
/// inverse iteration.
pub fn smallest_rayleigh_quotient(domain: &Domain, v: &[f64]) -> Result<f64> {
    let shift = v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let diag: Vec<f64> = v.iter().map(|x| x - shift).collect();
    let rayleigh = |x: &[f64]| {
        let num = domain.dirichlet_values(x, x)
            + domain.integrate_values(
                &x.iter()
                    .zip(v)
                    .map(|(xi, vi)| vi * xi * xi)
                    .collect::<Vec<_>>(),
            );
        num / domain.integrate_values(&x.iter().map(|xi| xi * xi).collect::<Vec<_>>())
    };
    let mut x: Vec<f64> = (0..domain.len())
        .map(|i| 1.0 + 0.1 * ((i * 37 % 11) as f64))
        .collect();
    let mut lambda = rayleigh(&x);
    for _ in 0..500 {
        let y = domain.solve_shifted(&diag, &x)?;
        let norm = domain
            .integrate_values(&y.iter().map(|t| t * t).collect::<Vec<_>>())
            .sqrt();
        x = y.into_iter().map(|t| t / norm).collect();
        let next = rayleigh(&x);
        let done = (next - lambda).abs() <= 1e-12 * next.abs().max(1e-12);
        lambda = next;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// Bottom of the discrete spectrum of `-Δ` alone.
pub fn truncation_shift(domain: &Domain) -> Result<f64> {
    match domain.kind() {
        crate::domain::DomainKind::FlatTorus => Ok(0.0),
        crate::domain::DomainKind::RadialEuclidean => {
            smallest_rayleigh_quotient(domain, &vec![0.0; domain.len()])
        }
    }
}

/// Mask of the numerical support `{|f| > 1e-12 max|f|}`.
pub fn support_mask(f: &Field) -> Vec<bool> {
    let peak = f.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    f.values()
        .iter()
        .map(|x| x.abs() > SUPPORT_THRESHOLD * peak)
        .collect()
}

/// Parameters of the exponentially decaying family on `R^N`:
/// `A = θ e^{-a r}` (plus an optional integrable spike at the origin),
/// `B ≡ b`, `V ≡ v`, `ψ = (1 + r²)^{-p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentialParams {
    pub theta: f64,
    pub decay: f64,
    pub b: f64,
    pub v: f64,
    pub psi_power: f64,
    /// Height of the spike `h (r_s / r)^s` added to `A` on `r < r_s`.
    pub spike_height: f64,
    pub spike_exponent: f64,
    pub spike_radius: f64,
}

impl Default for ExponentialParams {
    fn default() -> Self {
        Self {
            theta: 2e-5,
            decay: 4.0,
            b: 1.0,
            v: 1.0,
            psi_power: 1.0,
            spike_height: 0.0,
            spike_exponent: 2.0,
            spike_radius: 1.0,
        }
    }
}

/// Builds the exponentially decaying family and its polynomial-decay `ψ`.
pub fn build_example_rn(
    domain: &Domain,
    params: &ExponentialParams,
) -> Result<(CoefficientSet, Field)> {
    let n = domain.dimension() as f64;
    if !(params.psi_power > n / 4.0) {
        return Err(Error::Parameter(format!(
            "ψ power {} leaves H¹ (need > N/4)",
            params.psi_power
        )));
    }
    if !(params.decay >= 0.0) {
        return Err(Error::Parameter("decay rate must be nonnegative".into()));
    }
    if params.spike_height != 0.0 && !(params.spike_exponent < n && params.spike_radius > 0.0) {
        return Err(Error::Parameter(
            "spike must be integrable (exponent < N) with positive radius".into(),
        ));
    }
    let p = *params;
    let a = domain.radial_field(|r| {
        let spike = if p.spike_height != 0.0 && r < p.spike_radius {
            p.spike_height * (p.spike_radius / r).powf(p.spike_exponent)
        } else {
            0.0
        };
        p.theta * (-p.decay * r).exp() + spike
    })?;
    let b = domain.constant(p.b);
    let v = domain.constant(p.v);
    let psi = domain.radial_field(|r| (1.0 + r * r).powf(-p.psi_power))?;
    Ok((CoefficientSet::new(domain, a, b, v)?, psi))
}

/// Parameters of the compactly supported family: `A ≡ a` on the ball of
/// radius `r_inner`, `ψ` a plateau cutoff equal to 1 there and vanishing
/// beyond `r_outer`, `B` piecewise constant on the inner ball, the shell and
/// the exterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalBumpParams {
    pub a: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    pub b_inner: f64,
    pub b_shell: f64,
    pub b_outer: f64,
    pub v: f64,
}

impl Default for LocalBumpParams {
    fn default() -> Self {
        Self {
            a: 1e-4,
            r_inner: 1.0,
            r_outer: 2.0,
            b_inner: 1.0,
            b_shell: 1.0,
            b_outer: 1.0,
            v: 1.0,
        }
    }
}

/// Plateau cutoff: 1 on `[0, r1]`, `cos²` transition, 0 beyond `r2`.
pub fn plateau_cutoff(r: f64, r1: f64, r2: f64) -> f64 {
    if r <= r1 {
        1.0
    } else if r >= r2 {
        0.0
    } else {
        let c = (0.5 * std::f64::consts::PI * (r - r1) / (r2 - r1)).cos();
        c * c
    }
}

pub fn build_example_local(
    domain: &Domain,
    params: &LocalBumpParams,
) -> Result<(CoefficientSet, Field)> {
    if !(params.r_inner > 0.0 && params.r_outer > params.r_inner) {
        return Err(Error::Parameter("need 0 < r_inner < r_outer".into()));
    }
    let psi = domain.radial_field(|r| plateau_cutoff(r, params.r_inner, params.r_outer))?;
    build_local_with_psi(domain, params, psi)
}

/// Same family with a caller-supplied `ψ`; fails when `ψ` does not cover `supp A`.
pub fn build_local_with_psi(
    domain: &Domain,
    params: &LocalBumpParams,
    psi: Field,
) -> Result<(CoefficientSet, Field)> {
    let p = params.clone();
    let a = domain.radial_field(|r| if r <= p.r_inner { p.a } else { 0.0 })?;
    let b = domain.radial_field(|r| {
        if r <= p.r_inner {
            p.b_inner
        } else if r <= p.r_outer {
            p.b_shell
        } else {
            p.b_outer
        }
    })?;
    let v = domain.constant(p.v);
    let set = CoefficientSet::new(domain, a, b, v)?;
    set.check_support(&psi)?;
    Ok((set, psi))
}

/// One member of the truncated coefficient sequence.
#[derive(Clone, Debug)]
pub struct ApproxSequence {
    pub index: usize,
    pub a_n: Field,
    pub b_plus_n: Field,
    pub b_minus_n: Field,
    pub strict: bool,
}

impl ApproxSequence {
    /// The truncated problem `(A_n, B_{n,+} - B_{n,-}, V)`.
    pub fn coefficients(&self, domain: &Domain, target: &CoefficientSet) -> Result<CoefficientSet> {
        let b = self.b_plus_n.add_scaled(-1.0, &self.b_minus_n)?;
        CoefficientSet::new(domain, self.a_n.clone(), b, target.v.clone())
    }
}

/// `A_n = min(A, n) 1{radius <= n unit}`, `B_{n,±} = min(B_±, n)`, with the
/// minus part further scaled by `1 - 1/n` when `strict` is set.
pub fn approx_step(
    domain: &Domain,
    c: &CoefficientSet,
    n: usize,
    unit: f64,
    strict: bool,
) -> Result<ApproxSequence> {
    if n == 0 {
        return Err(Error::Parameter("approximation index starts at 1".into()));
    }
    let level = n as f64;
    let reach = level * unit;
    let a_n: Vec<f64> =
        c.a.values()
            .iter()
            .zip(domain.radii())
            .map(|(a, r)| if *r <= reach { a.min(level) } else { 0.0 })
            .collect();
    let deficit = if strict { 1.0 - 1.0 / level } else { 1.0 };
    let b_plus: Vec<f64> = c.b.values().iter().map(|b| b.max(0.0).min(level)).collect();
    let b_minus: Vec<f64> =
        c.b.values()
            .iter()
            .map(|b| (-b).max(0.0).min(level) * deficit)
            .collect();
    let id = c.a.domain_id();
    Ok(ApproxSequence {
        index: n,
        a_n: Field::from_raw(id, a_n),
        b_plus_n: Field::from_raw(id, b_plus),
        b_minus_n: Field::from_raw(id, b_minus),
        strict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn radial(m: usize, r: f64) -> Domain {
        Domain::build(&DomainSpec::radial(3, m, r)).unwrap()
    }

    #[test]
    fn rn_family_validates() {
        let d = radial(400, 20.0);
        let (c, psi) = build_example_rn(&d, &ExponentialParams::default()).unwrap();
        assert!(psi.min() > 0.0);
        assert!(c.check_support(&psi).is_ok());
        let bad = ExponentialParams {
            theta: 0.0,
            ..Default::default()
        };
        assert!(matches!(build_example_rn(&d, &bad), Err(Error::Spec(_))));
        let bad = ExponentialParams {
            b: -1.0,
            ..Default::default()
        };
        assert!(matches!(build_example_rn(&d, &bad), Err(Error::Spec(_))));
    }

    #[test]
    fn local_family_support() {
        let d = radial(400, 4.0);
        let p = LocalBumpParams::default();
        let (c, psi) = build_example_local(&d, &p).unwrap();
        c.check_support(&psi).unwrap();
        let holed = d
            .radial_field(|r| {
                if r < 0.5 {
                    0.0
                } else {
                    plateau_cutoff(r, 1.0, 2.0)
                }
            })
            .unwrap();
        assert!(matches!(
            build_local_with_psi(&d, &p, holed),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn truncation_caps_height() {
        let d = radial(100, 10.0);
        let a = d.constant(5.0);
        let c = CoefficientSet::new(&d, a, d.constant(1.0), d.constant(1.0)).unwrap();
        let s = approx_step(&d, &c, 1, 100.0, false).unwrap();
        assert!(s.a_n.values().iter().all(|x| *x == 1.0));
        let s = approx_step(&d, &c, 5, 100.0, false).unwrap();
        assert_eq!(s.a_n.values(), c.a().values());
    }

    #[test]
    fn coercivity_by_essinf_and_eigen() {
        let d = radial(60, 3.0);
        let c = CoefficientSet::new(&d, d.constant(1.0), d.constant(1.0), d.constant(1.0)).unwrap();
        let rep = c.check_assumptions(&d).unwrap();
        assert!(rep.a_pass && rep.b_pass && rep.v_pass && rep.v_rayleigh.is_none());
    }

    fn dense_smallest(d: &Domain, v: &[f64]) -> f64 {
        // the strong-form operator is similar to W^{1/2} L W^{-1/2}, which is symmetric
        let m = d.len();
        let w = d.weights();
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let lap = d.laplacian_values(&e);
            for i in 0..m {
                let lij = -lap[i] + if i == j { v[i] } else { 0.0 };
                mat[(i, j)] = w[i].sqrt() * lij / w[j].sqrt();
            }
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    #[test]
    fn rayleigh_matches_dense_eigensolve() {
        let d = radial(40, 2.0);
        let v: Vec<f64> = d
            .radii()
            .iter()
            .map(|r| if *r < 0.5 { -0.1 } else { 0.3 })
            .collect();
        let est = smallest_rayleigh_quotient(&d, &v).unwrap();
        let oracle = dense_smallest(&d, &v);
        assert!(
            (est - oracle).abs() < 1e-8 * oracle.abs().max(1.0),
            "{est} vs {oracle}"
        );
        let margin = oracle - dense_smallest(&d, &vec![0.0; d.len()]);
        let c =
            CoefficientSet::new(&d, d.constant(1.0), d.constant(1.0), d.field(v).unwrap()).unwrap();
        let rep = c.check_assumptions(&d).unwrap();
        assert_eq!(rep.v_pass, margin > 0.0);
        assert!((rep.v_rayleigh.unwrap() - margin).abs() < 1e-8);

        let t = Domain::build(&DomainSpec::torus(3, 4, 1.0)).unwrap();
        let v: Vec<f64> = (0..t.len())
            .map(|i| if i == 0 { -5.0 } else { 0.2 })
            .collect();
        let est = smallest_rayleigh_quotient(&t, &v).unwrap();
        let oracle = dense_smallest(&t, &v);
        assert!(
            (est - oracle).abs() < 1e-8 * oracle.abs().max(1.0),
            "{est} vs {oracle}"
        );
    }

    proptest! {
        #[test]
        fn approx_monotone_in_n(seed in 0u64..1000, strict in any::<bool>()) {
            let d = radial(50, 10.0);
            let a: Vec<f64> = (0..50).map(|i| ((i as u64 * 31 + seed) % 17) as f64 * 0.7).collect();
            let b: Vec<f64> = (0..50).map(|i| ((i as u64 * 13 + seed) % 23) as f64 - 9.0).collect();
            let mut a = a;
            a[0] = 1.0;
            let c = CoefficientSet::new(&d, d.field(a).unwrap(), d.field(b).unwrap(), d.constant(1.0)).unwrap();
            let mut prev = approx_step(&d, &c, 1, 1.0, strict).unwrap();
            for n in 2..=14 {
                let next = approx_step(&d, &c, n, 1.0, strict).unwrap();
                for i in 0..50 {
                    prop_assert!(next.a_n.values()[i] >= prev.a_n.values()[i]);
                    prop_assert!(next.a_n.values()[i] <= c.a().values()[i]);
                    prop_assert!(next.b_plus_n.values()[i] >= prev.b_plus_n.values()[i]);
                    prop_assert!(next.b_minus_n.values()[i] >= prev.b_minus_n.values()[i]);
                    prop_assert!(next.b_minus_n.values()[i] <= (-c.b().values()[i]).max(0.0));
                }
                prev = next;
            }
            if !strict {
                prop_assert_eq!(prev.a_n.values(), c.a().values());
                let seq = prev.coefficients(&d, &c).unwrap();
                prop_assert_eq!(seq.b().values(), c.b().values());
            }
        }

        #[test]
        fn constant_potential_coercivity(v in -3.0f64..3.0) {
            prop_assume!(v.abs() > 1e-6);
            for d in [radial(30, 2.0), Domain::build(&DomainSpec::torus(3, 4, 1.0)).unwrap()] {
                let c = CoefficientSet::new(&d, d.constant(1.0), d.constant(1.0), d.constant(v)).unwrap();
                let rep = c.check_assumptions(&d).unwrap();
                prop_assert_eq!(rep.v_pass, v > 0.0);
            }
        }
    }
}
