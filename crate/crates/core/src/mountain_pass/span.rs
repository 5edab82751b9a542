//! `I_ε` restricted to a two-dimensional span, in coefficient coordinates.

use super::Landscape;
use crate::domain::Field;
use crate::error::{Error, Result};
use crate::functional::Functional;

/// `(α, β) ↦ I_ε(α e₀ + β e₁)` with the Gram metric of the `V`-inner product.
#[derive(Clone, Debug)]
pub struct SpanLandscape<'a> {
    functional: Functional<'a>,
    eps: f64,
    basis: [Vec<f64>; 2],
    gram: [[f64; 2]; 2],
    det: f64,
}

impl<'a> SpanLandscape<'a> {
    pub fn new(functional: Functional<'a>, eps: f64, e0: &Field, e1: &Field) -> Result<Self> {
        let basis = [e0.values().to_vec(), e1.values().to_vec()];
        let mut gram = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                gram[i][j] = functional.inner_values(&basis[i], &basis[j]);
            }
        }
        let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
        if !(det > 0.0) {
            return Err(Error::Parameter("span basis is degenerate".into()));
        }
        Ok(Self {
            functional,
            eps,
            basis,
            gram,
            det,
        })
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        self.basis[0]
            .iter()
            .zip(&self.basis[1])
            .map(|(a, b)| x[0] * a + x[1] * b)
            .collect()
    }

    pub fn gram(&self) -> [[f64; 2]; 2] {
        self.gram
    }
}

impl Landscape for SpanLandscape<'_> {
    fn energy(&self, x: &[f64]) -> f64 {
        self.functional.energy_total(&self.embed(x), self.eps)
    }

    fn descent(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let g = self.functional.gradient_values(&self.embed(x), self.eps)?;
        let w = self.functional.domain().weights();
        let c: Vec<f64> = self
            .basis
            .iter()
            .map(|e| e.iter().zip(&g).zip(w).map(|((a, b), wi)| a * b * wi).sum())
            .collect();
        let gm = &self.gram;
        let r = vec![
            (gm[1][1] * c[0] - gm[0][1] * c[1]) / self.det,
            (gm[0][0] * c[1] - gm[1][0] * c[0]) / self.det,
        ];
        let norm = (r[0] * c[0] + r[1] * c[1]).max(0.0).sqrt();
        Ok((r, norm))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = [a[0] - b[0], a[1] - b[1]];
        let g = &self.gram;
        (g[0][0] * d[0] * d[0] + 2.0 * g[0][1] * d[0] * d[1] + g[1][1] * d[1] * d[1])
            .max(0.0)
            .sqrt()
    }
}
