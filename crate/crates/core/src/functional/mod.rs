//! The V-weighted Hilbert structure, the energies `I` and `I_ε`, their
//! derivatives, and the embedding constant estimator.

mod sobolev;

pub use sobolev::{estimate_sobolev, sobolev_ratio, SobolevEstimate};

use serde::Serialize;

use crate::coefficients::CoefficientSet;
use crate::domain::{Domain, Field};
use crate::error::{Error, Result};

/// Below this magnitude `u` counts as zero inside `supp A` when `ε = 0`.
pub const POSITIVITY_FLOOR: f64 = 1e-30;

/// Critical exponent `2N / (N - 2)`.
pub fn two_star(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Dimension(format!(
            "critical exponent needs N >= 3, got {n}"
        )));
    }
    Ok(2.0 * n as f64 / (n as f64 - 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub quadratic: f64,
    pub critical: f64,
    /// `+∞` when `ε = 0` and `u` vanishes somewhere on `supp A`.
    pub singular: f64,
    pub total: f64,
    pub epsilon: f64,
}

impl EnergyBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// The energy landscape for fixed coefficients on a fixed grid.
#[derive(Clone, Copy, Debug)]
pub struct Functional<'a> {
    domain: &'a Domain,
    coeffs: &'a CoefficientSet,
    p: f64,
}

impl<'a> Functional<'a> {
    pub fn new(domain: &'a Domain, coeffs: &'a CoefficientSet) -> Result<Self> {
        domain.check(coeffs.a())?;
        Ok(Self {
            domain,
            coeffs,
            p: two_star(domain.dimension())?,
        })
    }

    pub fn domain(&self) -> &'a Domain {
        self.domain
    }

    pub fn coefficients(&self) -> &'a CoefficientSet {
        self.coeffs
    }

    pub fn two_star(&self) -> f64 {
        self.p
    }

    pub(crate) fn inner_values(&self, u: &[f64], v: &[f64]) -> f64 {
        let potential: f64 = self
            .domain
            .weights()
            .iter()
            .zip(self.coeffs.v().values())
            .zip(u.iter().zip(v))
            .map(|((w, vv), (a, b))| w * vv * a * b)
            .sum();
        self.domain.dirichlet_values(u, v) + potential
    }

    /// `⟨u, v⟩ = ∫ ∇u∇v + V u v`.
    pub fn inner(&self, u: &Field, v: &Field) -> Result<f64> {
        self.domain.check(u)?;
        self.domain.check(v)?;
        Ok(self.inner_values(u.values(), v.values()))
    }

    pub(crate) fn norm_sq_values(&self, u: &[f64]) -> Result<f64> {
        let q = self.inner_values(u, u);
        if q < 0.0 {
            return Err(Error::Coercivity(format!("negative squared norm {q:e}")));
        }
        Ok(q)
    }

    pub fn norm(&self, u: &Field) -> Result<f64> {
        self.domain.check(u)?;
        Ok(self.norm_sq_values(u.values())?.sqrt())
    }

    /// `∫ B |u|^{2*}`.
    pub fn critical_integral(&self, u: &[f64]) -> f64 {
        let p = self.p;
        self.domain
            .weights()
            .iter()
            .zip(self.coeffs.b().values())
            .zip(u)
            .map(|((w, b), x)| w * b * x.abs().powf(p))
            .sum()
    }

    /// `∫ |B| |u|^{2*}`.
    pub fn critical_abs_integral(&self, u: &[f64]) -> f64 {
        let p = self.p;
        self.domain
            .weights()
            .iter()
            .zip(self.coeffs.b().values())
            .zip(u)
            .map(|((w, b), x)| w * b.abs() * x.abs().powf(p))
            .sum()
    }

    /// `∫_{supp A} A / (ε + u²)^{2*/2}`; for `ε = 0` this is `∫ A / |u|^{2*}`,
    /// returned as `+∞` once `|u|` drops below the positivity floor on `supp A`.
    pub fn singular_mass(&self, u: &[f64], eps: f64) -> f64 {
        let half = 0.5 * self.p;
        let mut acc = 0.0;
        for ((w, a), (x, s)) in self
            .domain
            .weights()
            .iter()
            .zip(self.coeffs.a().values())
            .zip(u.iter().zip(self.coeffs.supp_a()))
        {
            if !*s {
                continue;
            }
            if eps == 0.0 && x.abs() < POSITIVITY_FLOOR {
                return f64::INFINITY;
            }
            acc += w * a / (eps + x * x).powf(half);
        }
        acc
    }

    /// `I_ε(u)`; `ε = 0` evaluates the unregularized energy.
    pub fn energy(&self, u: &Field, eps: f64) -> Result<EnergyBreakdown> {
        self.domain.check(u)?;
        self.energy_values(u.values(), eps)
    }

    pub(crate) fn energy_values(&self, u: &[f64], eps: f64) -> Result<EnergyBreakdown> {
        if !(eps >= 0.0) {
            return Err(Error::Parameter(format!(
                "ε must be nonnegative, got {eps}"
            )));
        }
        let quadratic = 0.5 * self.norm_sq_values(u)?;
        let critical = self.critical_integral(u) / self.p;
        let singular = self.singular_mass(u, eps) / self.p;
        Ok(EnergyBreakdown {
            quadratic,
            critical,
            singular,
            total: quadratic - critical + singular,
            epsilon: eps,
        })
    }

    pub(crate) fn energy_total(&self, u: &[f64], eps: f64) -> f64 {
        self.energy_values(u, eps)
            .map(|e| e.total)
            .unwrap_or(f64::INFINITY)
    }

    /// Pointwise (strong-form) gradient
    /// `-Δu + Vu - B|u|^{2*-2}u - A u / (ε + u²)^{2*/2 + 1}`, so that
    /// `I_ε'(u)(v) = integrate(g v)`. Its value at node `i` times the node
    /// weight is `I_ε'(u)` tested against the nodal hat function `e_i`.
    pub fn gradient(&self, u: &Field, eps: f64) -> Result<Field> {
        self.domain.check(u)?;
        let g = self.gradient_values(u.values(), eps)?;
        Field::new(self.domain, g)
    }

    pub(crate) fn gradient_values(&self, u: &[f64], eps: f64) -> Result<Vec<f64>> {
        if !(eps > 0.0) {
            return Err(Error::Parameter(format!("gradient needs ε > 0, got {eps}")));
        }
        let k = 0.5 * self.p + 1.0;
        let lap = self.domain.laplacian_values(u);
        Ok(lap
            .iter()
            .zip(u)
            .zip(
                self.coeffs
                    .v()
                    .values()
                    .iter()
                    .zip(self.coeffs.b().values()),
            )
            .zip(self.coeffs.a().values())
            .map(|(((l, x), (v, b)), a)| {
                -l + v * x - b * x.abs().powf(self.p - 2.0) * x - a * x / (eps + x * x).powf(k)
            })
            .collect())
    }

    /// `I_ε'(u)(v)`.
    pub fn directional(&self, u: &Field, v: &Field, eps: f64) -> Result<f64> {
        self.domain.check(v)?;
        let g = self.gradient(u, eps)?;
        Ok(self.domain.integrate_values(
            &g.values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| a * b)
                .collect::<Vec<_>>(),
        ))
    }

    /// Diagonal of the second variation beyond `-Δ`:
    /// `V - (2*-1)B|u|^{2*-2} - A(ε - (2k-1)u²)/(ε + u²)^{k+1}`, `k = 2*/2 + 1`.
    pub(crate) fn hessian_diag(&self, u: &[f64], eps: f64) -> Vec<f64> {
        let k = 0.5 * self.p + 1.0;
        u.iter()
            .zip(
                self.coeffs
                    .v()
                    .values()
                    .iter()
                    .zip(self.coeffs.b().values()),
            )
            .zip(self.coeffs.a().values())
            .map(|((x, (v, b)), a)| {
                let s = eps + x * x;
                v - (self.p - 1.0) * b * x.abs().powf(self.p - 2.0)
                    - a * (eps - (2.0 * k - 1.0) * x * x) / s.powf(k + 1.0)
            })
            .collect()
    }

    /// `(-Δ + V)^{-1} g`: the representative of `I_ε'(u)` in the V-inner product.
    pub(crate) fn riesz(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.domain.solve_shifted(self.coeffs.v().values(), g)
    }

    /// Riesz representative of the gradient and the dual norm `‖I_ε'(u)‖`.
    pub fn riesz_gradient(&self, u: &Field, eps: f64) -> Result<(Field, f64)> {
        let g = self.gradient(u, eps)?;
        let r = self.riesz(g.values())?;
        let norm = self.inner_values(&r, &r).max(0.0).sqrt();
        Ok((Field::from_raw(self.domain.id(), r), norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_example_rn, ExponentialParams};
    use crate::domain::DomainSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn torus_setup() -> (Domain, CoefficientSet) {
        let d = Domain::build(&DomainSpec::torus(3, 8, 1.0)).unwrap();
        let a = d
            .field_from_positions(|x| 0.5 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin())
            .unwrap();
        let b = d
            .field_from_positions(|x| 1.0 - 1.5 * (2.0 * std::f64::consts::PI * x[1]).cos())
            .unwrap();
        let c = CoefficientSet::new(&d, a, b, d.constant(1.0)).unwrap();
        (d, c)
    }

    #[test]
    fn two_star_values() {
        assert_eq!(two_star(3).unwrap(), 6.0);
        assert_eq!(two_star(4).unwrap(), 4.0);
        assert_eq!(two_star(6).unwrap(), 3.0);
        assert!(two_star(2).is_err());
    }

    #[test]
    fn zero_field_energy() {
        let (d, c) = torus_setup();
        let f = Functional::new(&d, &c).unwrap();
        let e = f.energy(&d.constant(0.0), 1.0).unwrap();
        assert_relative_eq!(
            e.total,
            d.integrate(c.a()).unwrap() / 6.0,
            max_relative = 1e-14
        );
        assert!(f
            .gradient(&d.constant(0.0), 1.0)
            .unwrap()
            .values()
            .iter()
            .all(|g| *g == 0.0));
        assert!(f.gradient(&d.constant(0.0), 0.0).is_err());
        assert_eq!(
            f.energy(&d.constant(0.0), 0.0).unwrap().singular,
            f64::INFINITY
        );
    }

    #[test]
    fn norm_definition() {
        let (d, c) = torus_setup();
        let f = Functional::new(&d, &c).unwrap();
        let u = d
            .field_from_positions(|x| x[0] * (1.0 - x[2]) + 0.2)
            .unwrap();
        let direct =
            d.dirichlet_energy(&u, &u).unwrap() + d.integrate(&u.map(|x| x * x).unwrap()).unwrap();
        assert_relative_eq!(f.norm(&u).unwrap().powi(2), direct, max_relative = 1e-14);
        assert_relative_eq!(
            f.norm(&u.scaled(3.0)).unwrap(),
            3.0 * f.norm(&u).unwrap(),
            max_relative = 1e-14
        );
        assert_eq!(f.norm(&d.constant(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn regularized_energy_converges_to_limit() {
        let d = Domain::build(&DomainSpec::radial(3, 200, 10.0)).unwrap();
        let (c, psi) = build_example_rn(&d, &ExponentialParams::default()).unwrap();
        let f = Functional::new(&d, &c).unwrap();
        let limit = f.energy(&psi, 0.0).unwrap().total;
        let mut prev_gap = f64::INFINITY;
        for k in 0..=8 {
            let eps = 10f64.powi(-k);
            let gap = limit - f.energy(&psi, eps).unwrap().total;
            assert!(gap >= 0.0 && gap <= prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-6 * limit.abs());
    }

    proptest! {
        #[test]
        fn breakdown_reconstructs_and_is_monotone(seed in 0u64..500) {
            let (d, c) = torus_setup();
            let f = Functional::new(&d, &c).unwrap();
            let u: Vec<f64> = (0..d.len()).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0) - 0.5).collect();
            let u = d.field(u).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let limit = f.energy(&u, 0.0).unwrap();
            for k in 0..12 {
                let eps = 4f64.powi(-k);
                let e = f.energy(&u, eps).unwrap();
                prop_assert!((e.total - (e.quadratic - e.critical + e.singular)).abs() <= 1e-14 * e.total.abs().max(1.0));
                prop_assert!(e.singular >= 0.0 && e.quadratic >= 0.0);
                prop_assert!(e.total >= prev - 1e-14 * e.total.abs().max(1.0));
                if limit.is_finite() { prop_assert!(e.total <= limit.total); }
                prev = e.total;
            }
        }

        #[test]
        fn inner_is_bilinear(alpha in -3.0f64..3.0, seed in 0u64..100) {
            let (d, c) = torus_setup();
            let f = Functional::new(&d, &c).unwrap();
            let mk = |s: u64| d.field((0..d.len()).map(|i| ((i as u64 * 7919 + s) % 97) as f64 / 97.0).collect()).unwrap();
            let (u, v, w) = (mk(seed), mk(seed + 13), mk(seed + 29));
            let lhs = f.inner(&u, &v.scaled(alpha).add_scaled(1.0, &w).unwrap()).unwrap();
            let rhs = alpha * f.inner(&u, &v).unwrap() + f.inner(&u, &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs()).max(1.0));
            prop_assert!((f.inner(&u, &v).unwrap() - f.inner(&v, &u).unwrap()).abs() <= 1e-14 * lhs.abs().max(1.0));
        }
    }
}
