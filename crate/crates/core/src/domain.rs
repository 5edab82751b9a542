//! Discrete geometries: the radial reduction of `R^N` and the flat torus `T^N`.
//!
//! Both geometries carry per-node volume weights and a conservative
//! second-order Laplacian whose discrete integration by parts against
//! [`Domain::dirichlet_energy`] is exact:
//!
//! ```text
//! dirichlet_energy(u, v) = -integrate(v * laplacian(u))
//! ```
//!
//! The radial grid is cell centred, `r_i = (i + 1/2) h`, with exact shell
//! volumes as weights. The flux through `r = 0` vanishes (reflection,
//! `u'(0) = 0`) and a homogeneous Dirichlet value is imposed at `r = R_max`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{minres, solve_tridiagonal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    #[serde(alias = "radial")]
    RadialEuclidean,
    #[serde(alias = "torus")]
    FlatTorus,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::RadialEuclidean => write!(f, "radial-euclidean"),
            DomainKind::FlatTorus => write!(f, "flat-torus"),
        }
    }
}

/// Grid description. For the torus `nodes` is the per-axis count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dimension: usize,
    pub nodes: usize,
    pub extent: f64,
}

impl DomainSpec {
    pub fn radial(dimension: usize, nodes: usize, r_max: f64) -> Self {
        Self {
            kind: DomainKind::RadialEuclidean,
            dimension,
            nodes,
            extent: r_max,
        }
    }

    pub fn torus(dimension: usize, nodes_per_axis: usize, length: f64) -> Self {
        Self {
            kind: DomainKind::FlatTorus,
            dimension,
            nodes: nodes_per_axis,
            extent: length,
        }
    }

    /// Same geometry with the extent doubled at fixed spacing (radial) or
    /// the resolution doubled at fixed extent (torus).
    pub fn enlarged(&self) -> Self {
        match self.kind {
            DomainKind::RadialEuclidean => Self {
                nodes: self.nodes * 2,
                extent: self.extent * 2.0,
                ..self.clone()
            },
            DomainKind::FlatTorus => self.refined(),
        }
    }

    /// Same extent, twice the resolution.
    pub fn refined(&self) -> Self {
        Self {
            nodes: self.nodes * 2,
            ..self.clone()
        }
    }
}

/// Area of the unit sphere `S^{n-1}` in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    // |S^{k+1}| = 2 pi |S^{k-1}| / k, starting from |S^0| = 2 and |S^1| = 2 pi
    let (mut even, mut odd) = (2.0, 2.0 * PI);
    let k_target = n - 1;
    if k_target == 0 {
        return even;
    }
    let mut k = 1;
    while k < k_target {
        let next = 2.0 * PI * even / k as f64;
        even = odd;
        odd = next;
        k += 1;
    }
    odd
}

#[derive(Clone)]
struct PeriodicSolver {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// 1D symbol of the periodic three-point stencil, `(2 - 2 cos(2 pi k / n)) / h^2`
    symbol: Vec<f64>,
}

impl PeriodicSolver {
    fn new(n: usize, dim: usize, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let symbol = (0..n)
            .map(|k| (2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos()) / (h * h))
            .collect();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            symbol,
        }
    }

    fn transform(&self, data: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let total = data.len();
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, slot) in line.iter().enumerate() {
                        data[base + k * stride] = *slot;
                    }
                }
            }
        }
    }

    /// Solves `(-Δ + shift) x = rhs` exactly.
    fn solve(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        let n = self.n;
        for (idx, z) in data.iter_mut().enumerate() {
            let mut rem = idx;
            let mut lambda = shift;
            for _ in 0..self.dim {
                lambda += self.symbol[rem % n];
                rem /= n;
            }
            *z = if lambda.abs() > 0.0 {
                *z / lambda
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / rhs.len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }
}

/// A discretized geometry. Immutable after construction.
#[derive(Clone)]
pub struct Domain {
    spec: DomainSpec,
    spacing: f64,
    weights: Vec<f64>,
    radii: Vec<f64>,
    /// Radial face conductances `|S^{N-1}| r_{i+1/2}^{N-1} / h` between nodes `i` and `i + 1`.
    conductance: Vec<f64>,
    /// Radial conductance to the Dirichlet boundary value at `R_max`.
    boundary_conductance: f64,
    periodic: Option<PeriodicSolver>,
    id: u64,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("spec", &self.spec)
            .field("spacing", &self.spacing)
            .field("id", &self.id)
            .finish()
    }
}

impl Domain {
    pub fn build(spec: &DomainSpec) -> Result<Self> {
        if spec.dimension < 3 {
            return Err(Error::Dimension(format!(
                "dimension {} < 3",
                spec.dimension
            )));
        }
        if spec.nodes == 0 {
            return Err(Error::Spec("grid size must be positive".into()));
        }
        if !(spec.extent.is_finite() && spec.extent > 0.0) {
            return Err(Error::Spec(format!(
                "extent must be positive, got {}",
                spec.extent
            )));
        }
        let n_dim = spec.dimension;
        let id = domain_hash(spec);
        match spec.kind {
            DomainKind::RadialEuclidean => {
                let m = spec.nodes;
                let h = spec.extent / m as f64;
                let omega = unit_sphere_area(n_dim);
                let scale = omega / n_dim as f64 * h.powi(n_dim as i32);
                let weights = (0..m)
                    .map(|i| {
                        scale
                            * (((i + 1) as f64).powi(n_dim as i32) - (i as f64).powi(n_dim as i32))
                    })
                    .collect();
                let radii = (0..m).map(|i| (i as f64 + 0.5) * h).collect();
                let conductance = (0..m - 1)
                    .map(|i| omega * ((i + 1) as f64 * h).powi(n_dim as i32 - 1) / h)
                    .collect();
                let boundary_conductance = omega * spec.extent.powi(n_dim as i32 - 1) / (0.5 * h);
                Ok(Self {
                    spec: spec.clone(),
                    spacing: h,
                    weights,
                    radii,
                    conductance,
                    boundary_conductance,
                    periodic: None,
                    id,
                })
            }
            DomainKind::FlatTorus => {
                let n = spec.nodes;
                let total = n
                    .checked_pow(n_dim as u32)
                    .filter(|t| *t <= 1 << 26)
                    .ok_or_else(|| Error::Spec(format!("torus grid {n}^{n_dim} too large")))?;
                let h = spec.extent / n as f64;
                let w = h.powi(n_dim as i32);
                let mut domain = Self {
                    spec: spec.clone(),
                    spacing: h,
                    weights: vec![w; total],
                    radii: Vec::new(),
                    conductance: Vec::new(),
                    boundary_conductance: 0.0,
                    periodic: Some(PeriodicSolver::new(n, n_dim, h)),
                    id,
                };
                domain.radii = (0..total)
                    .map(|i| domain.torus_distance_to_origin(i))
                    .collect();
                Ok(domain)
            }
        }
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn kind(&self) -> DomainKind {
        self.spec.kind
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stable identifier derived from the grid specification.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Distance of each node from the origin (the radial coordinate, or the
    /// periodic distance to the node at the torus origin).
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Analytic volume of the truncated geometry.
    pub fn analytic_volume(&self) -> f64 {
        let n = self.spec.dimension;
        match self.spec.kind {
            DomainKind::RadialEuclidean => {
                unit_sphere_area(n) * self.spec.extent.powi(n as i32) / n as f64
            }
            DomainKind::FlatTorus => self.spec.extent.powi(n as i32),
        }
    }

    /// Largest radius for which balls are geodesic balls of the geometry.
    pub fn max_ball_radius(&self) -> f64 {
        match self.spec.kind {
            DomainKind::RadialEuclidean => self.spec.extent,
            DomainKind::FlatTorus => 0.5 * self.spec.extent,
        }
    }

    fn torus_index(&self, i: usize) -> Vec<usize> {
        let n = self.spec.nodes;
        let d = self.spec.dimension;
        let mut idx = vec![0; d];
        let mut rem = i;
        for a in (0..d).rev() {
            idx[a] = rem % n;
            rem /= n;
        }
        idx
    }

    fn torus_distance_to_origin(&self, i: usize) -> f64 {
        let n = self.spec.nodes;
        self.torus_index(i)
            .into_iter()
            .map(|k| {
                let k = k.min(n - k) as f64 * self.spacing;
                k * k
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Geodesic distance between two nodes. On the radial grid nodes stand
    /// for spheres, so the distance is that of their radii.
    pub fn node_distance(&self, i: usize, j: usize) -> f64 {
        match self.spec.kind {
            DomainKind::RadialEuclidean => (self.radii[i] - self.radii[j]).abs(),
            DomainKind::FlatTorus => {
                let n = self.spec.nodes;
                let (mut a, mut b) = (i, j);
                let mut sum = 0.0;
                for _ in 0..self.spec.dimension {
                    let d = (a % n).abs_diff(b % n);
                    let d = d.min(n - d) as f64 * self.spacing;
                    sum += d * d;
                    a /= n;
                    b /= n;
                }
                sum.sqrt()
            }
        }
    }

    /// Node mask of the closed geodesic ball around `center` (an interval of
    /// radii on the radial grid).
    pub fn ball_mask(&self, center: usize, radius: f64) -> Vec<bool> {
        (0..self.len())
            .map(|j| self.node_distance(center, j) <= radius + 1e-12 * self.spacing)
            .collect()
    }

    /// Index of the node nearest to radius `r` (radial) or the origin node (torus, `r` ignored).
    pub fn node_near_radius(&self, r: f64) -> usize {
        match self.spec.kind {
            DomainKind::RadialEuclidean => {
                ((r / self.spacing - 0.5).round().max(0.0) as usize).min(self.len() - 1)
            }
            DomainKind::FlatTorus => 0,
        }
    }

    pub(crate) fn check(&self, field: &Field) -> Result<()> {
        if field.domain_id != self.id || field.values.len() != self.len() {
            return Err(Error::DomainMismatch(format!(
                "field of length {} (domain {:016x}) used on domain {:016x} with {} nodes",
                field.values.len(),
                field.domain_id,
                self.id,
                self.len()
            )));
        }
        Ok(())
    }

    pub fn integrate(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        Ok(self.integrate_values(&f.values))
    }

    pub(crate) fn integrate_values(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn apply_laplacian(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Ok(Field {
            domain_id: self.id,
            values: self.laplacian_values(&u.values),
        })
    }

    pub(crate) fn laplacian_values(&self, u: &[f64]) -> Vec<f64> {
        match self.spec.kind {
            DomainKind::RadialEuclidean => {
                let m = u.len();
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let right = if i + 1 < m {
                        self.conductance[i] * (u[i + 1] - u[i])
                    } else {
                        -self.boundary_conductance * u[i]
                    };
                    let left = if i > 0 {
                        self.conductance[i - 1] * (u[i] - u[i - 1])
                    } else {
                        0.0
                    };
                    out[i] = (right - left) / self.weights[i];
                }
                out
            }
            DomainKind::FlatTorus => {
                let n = self.spec.nodes;
                let d = self.spec.dimension;
                let inv_h2 = 1.0 / (self.spacing * self.spacing);
                let mut out = vec![0.0; u.len()];
                for axis in 0..d {
                    let stride = n.pow((d - 1 - axis) as u32);
                    let block = stride * n;
                    for (i, o) in out.iter_mut().enumerate() {
                        let k = (i / stride) % n;
                        let base = i - k * stride;
                        let up = base + ((k + 1) % n) * stride;
                        let down = base + ((k + n - 1) % n) * stride;
                        debug_assert!(up < base + block);
                        *o += (u[up] + u[down] - 2.0 * u[i]) * inv_h2;
                    }
                }
                out
            }
        }
    }

    pub fn dirichlet_energy(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.dirichlet_values(&u.values, &v.values))
    }

    pub(crate) fn dirichlet_values(&self, u: &[f64], v: &[f64]) -> f64 {
        match self.spec.kind {
            DomainKind::RadialEuclidean => {
                let m = u.len();
                let interior: f64 = (0..m - 1)
                    .map(|i| self.conductance[i] * (u[i + 1] - u[i]) * (v[i + 1] - v[i]))
                    .sum();
                interior + self.boundary_conductance * u[m - 1] * v[m - 1]
            }
            DomainKind::FlatTorus => {
                let n = self.spec.nodes;
                let d = self.spec.dimension;
                let factor = self.spacing.powi(d as i32 - 2);
                let mut acc = 0.0;
                for axis in 0..d {
                    let stride = n.pow((d - 1 - axis) as u32);
                    for i in 0..u.len() {
                        let k = (i / stride) % n;
                        let up = i - k * stride + ((k + 1) % n) * stride;
                        acc += (u[up] - u[i]) * (v[up] - v[i]);
                    }
                }
                factor * acc
            }
        }
    }

    /// Solves `(-Δ + diag) x = rhs` in strong (pointwise) form. `diag` may be
    /// indefinite; the system must be nonsingular.
    pub(crate) fn solve_shifted(&self, diag: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        match self.spec.kind {
            DomainKind::RadialEuclidean => {
                // symmetric weighted form: (K + W D) x = W rhs
                let m = rhs.len();
                let mut main = vec![0.0; m];
                for i in 0..m {
                    let left = if i > 0 { self.conductance[i - 1] } else { 0.0 };
                    let right = if i + 1 < m {
                        self.conductance[i]
                    } else {
                        self.boundary_conductance
                    };
                    main[i] = left + right + self.weights[i] * diag[i];
                }
                let off: Vec<f64> = self.conductance.iter().map(|c| -c).collect();
                let b: Vec<f64> = rhs.iter().zip(&self.weights).map(|(r, w)| r * w).collect();
                solve_tridiagonal(&off, &main, &off, &b)
            }
            DomainKind::FlatTorus => {
                let solver = self
                    .periodic
                    .as_ref()
                    .expect("torus carries a periodic solver");
                let first = diag[0];
                let constant = diag
                    .iter()
                    .all(|d| (d - first).abs() <= 1e-14 * first.abs().max(1e-300));
                if constant && first > 0.0 {
                    return Ok(solver.solve(first, rhs));
                }
                let shift =
                    (diag.iter().map(|d| d.abs()).sum::<f64>() / diag.len() as f64).max(1e-8);
                let apply = |x: &[f64]| {
                    let mut y = self.laplacian_values(x);
                    for ((yi, xi), di) in y.iter_mut().zip(x).zip(diag) {
                        *yi = -*yi + di * xi;
                    }
                    y
                };
                let sol = minres(apply, |r| solver.solve(shift, r), rhs, 1e-13, 2000)?;
                Ok(sol.x)
            }
        }
    }

    /// Node positions as coordinate vectors (the radius on the radial grid).
    pub fn position(&self, i: usize) -> Vec<f64> {
        match self.spec.kind {
            DomainKind::RadialEuclidean => vec![self.radii[i]],
            DomainKind::FlatTorus => self
                .torus_index(i)
                .into_iter()
                .map(|k| k as f64 * self.spacing)
                .collect(),
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<Field> {
        Field::new(self, values)
    }

    pub fn constant(&self, c: f64) -> Field {
        Field {
            domain_id: self.id,
            values: vec![c; self.len()],
        }
    }

    /// Field whose value at each node is `f(radius)`.
    pub fn radial_field(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self, self.radii.iter().map(|&r| f(r)).collect())
    }

    /// Field whose value at each node is `f(position)`.
    pub fn field_from_positions(&self, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
        Field::new(
            self,
            (0..self.len()).map(|i| f(&self.position(i))).collect(),
        )
    }
}

fn domain_hash(spec: &DomainSpec) -> u64 {
    let canonical = format!(
        "{}|{}|{}|{:016x}",
        spec.kind,
        spec.dimension,
        spec.nodes,
        spec.extent.to_bits()
    );
    let digest = Sha256::digest(canonical.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// A grid function living on a particular [`Domain`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    domain_id: u64,
    values: Vec<f64>,
}

impl Field {
    pub fn new(domain: &Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DomainMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite field value at node {i}"
            )));
        }
        Ok(Self {
            domain_id: domain.id,
            values,
        })
    }

    pub(crate) fn from_raw(domain_id: u64, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { domain_id, values }
    }

    pub fn domain_id(&self) -> u64 {
        self.domain_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            domain_id: self.domain_id,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("map produced non-finite values".into()));
        }
        Ok(Self {
            domain_id: self.domain_id,
            values,
        })
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Field) -> Result<Self> {
        if other.domain_id != self.domain_id || other.len() != self.len() {
            return Err(Error::DomainMismatch(
                "fields live on different domains".into(),
            ));
        }
        Ok(Self {
            domain_id: self.domain_id,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(
            unit_sphere_area(5),
            8.0 * PI * PI / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn radial_ball_volume() {
        let d = Domain::build(&DomainSpec::radial(3, 1000, 20.0)).unwrap();
        let total: f64 = d.weights().iter().sum();
        assert_relative_eq!(total, 4.0 * PI / 3.0 * 8000.0, max_relative = 1e-12);
        assert!(d.weights().iter().all(|w| *w > 0.0));
        for n in [4, 5] {
            let d = Domain::build(&DomainSpec::radial(n, 777, 3.5)).unwrap();
            let total: f64 = d.weights().iter().sum();
            assert_relative_eq!(total, d.analytic_volume(), max_relative = 1e-12);
        }
    }

    #[test]
    fn torus_weights_uniform() {
        let d = Domain::build(&DomainSpec::torus(3, 16, 1.0)).unwrap();
        assert_eq!(d.len(), 4096);
        assert!(d
            .weights()
            .iter()
            .all(|w| (*w - 1.0 / 4096.0).abs() < 1e-18));
        let total: f64 = d.weights().iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            Domain::build(&DomainSpec::radial(2, 10, 1.0)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            Domain::build(&DomainSpec::radial(3, 0, 1.0)),
            Err(Error::Spec(_))
        ));
        assert!(matches!(
            Domain::build(&DomainSpec::torus(3, 8, -1.0)),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn radial_laplacian_of_quadratic() {
        let r_max = 20.0;
        let d = Domain::build(&DomainSpec::radial(3, 1000, r_max)).unwrap();
        let u = d.radial_field(|r| r_max * r_max - r * r).unwrap();
        let lap = d.apply_laplacian(&u).unwrap();
        for &v in &lap.values()[..999] {
            assert_relative_eq!(v, -6.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn torus_laplacian_cosine_mode() {
        let n = 32;
        let d = Domain::build(&DomainSpec::torus(3, n, 1.0)).unwrap();
        let u = d.field_from_positions(|x| (2.0 * PI * x[0]).cos()).unwrap();
        let lap = d.apply_laplacian(&u).unwrap();
        let h = 1.0 / n as f64;
        let symbol = 2.0 * (1.0 - (2.0 * PI * h).cos()) / (h * h);
        for (l, v) in lap.values().iter().zip(u.values()) {
            assert!((l + symbol * v).abs() < 1e-9);
        }
        assert!(d
            .apply_laplacian(&d.constant(3.0))
            .unwrap()
            .values()
            .iter()
            .all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn shifted_solves_invert_operator() {
        for spec in [
            DomainSpec::radial(3, 200, 5.0),
            DomainSpec::torus(3, 8, 2.0),
        ] {
            let d = Domain::build(&spec).unwrap();
            let x: Vec<f64> = (0..d.len())
                .map(|i| ((i * 7 % 13) as f64 * 0.37).sin())
                .collect();
            for diag in [
                vec![1.5; d.len()],
                (0..d.len())
                    .map(|i| 0.5 + (i % 5) as f64 * 0.1 - 1.2)
                    .collect(),
            ] {
                let mut rhs = d.laplacian_values(&x);
                for ((r, xi), di) in rhs.iter_mut().zip(&x).zip(&diag) {
                    *r = -*r + di * xi;
                }
                let sol = d.solve_shifted(&diag, &rhs).unwrap();
                let err = sol
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-8, "{spec:?}: {err}");
            }
        }
    }

    #[test]
    fn ball_masks() {
        let d = Domain::build(&DomainSpec::torus(3, 8, 1.0)).unwrap();
        let mask = d.ball_mask(0, 0.125);
        assert_eq!(mask.iter().filter(|m| **m).count(), 7);
        let d = Domain::build(&DomainSpec::radial(3, 10, 1.0)).unwrap();
        assert_eq!(d.ball_mask(5, 0.1).iter().filter(|m| **m).count(), 3);
    }

    #[test]
    fn domain_mismatch_detected() {
        let a = Domain::build(&DomainSpec::radial(3, 10, 1.0)).unwrap();
        let b = Domain::build(&DomainSpec::radial(3, 10, 2.0)).unwrap();
        assert!(matches!(
            a.integrate(&b.constant(1.0)),
            Err(Error::DomainMismatch(_))
        ));
    }
}
