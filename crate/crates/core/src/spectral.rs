//! Cosine eigenbasis of the Neumann operator A = a ∂²/∂x² + c on (0, L).
//!
//! λ_k = -a (kπ/L)² + c,   ξ_0 = 1/√L,   ξ_k = √(2/L) cos(kπx/L).
//!
//! Restriction to a subregion ω enters only through the Gram matrix
//! G_jk = ∫_ω ξ_j ξ_k dx, which realizes p_ω = χ*_ω χ_ω in modal coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], 8 points.
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

pub const DEFAULT_PANELS: usize = 64;

/// Composite 8-point Gauss-Legendre rule on an interval.
#[derive(Debug, Clone)]
pub struct CompositeGauss {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CompositeGauss {
    pub fn new(a: f64, b: f64, panels: usize) -> Self {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(8 * panels);
        let mut weights = Vec::with_capacity(8 * panels);
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * width;
            for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
                nodes.push(mid + 0.5 * width * x);
                weights.push(0.5 * width * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    diffusivity: f64,
    reaction: f64,
    length: f64,
    eigenvalues: Vec<f64>,
    adjoint_eigenvalues: Vec<f64>,
    self_adjoint: bool,
    quadrature: CompositeGauss,
}

impl SpectralBasis {
    pub fn new(diffusivity: f64, reaction: f64, length: f64, n_modes: usize) -> Result<Self> {
        if !(diffusivity > 0.0) || !diffusivity.is_finite() {
            return domain(format!("diffusivity must be positive, got {diffusivity}"));
        }
        if !reaction.is_finite() {
            return domain("reaction coefficient must be finite");
        }
        if !(length > 0.0) || !length.is_finite() {
            return domain(format!("domain length must be positive, got {length}"));
        }
        if n_modes == 0 {
            return domain("at least one mode is required");
        }
        let eigenvalues: Vec<f64> = (0..n_modes)
            .map(|k| {
                let q = k as f64 * PI / length;
                -diffusivity * q * q + reaction
            })
            .collect();
        Ok(Self {
            diffusivity,
            reaction,
            length,
            adjoint_eigenvalues: eigenvalues.clone(),
            eigenvalues,
            self_adjoint: true,
            quadrature: CompositeGauss::new(0.0, length, DEFAULT_PANELS),
        })
    }

    /// Replaces the adjoint spectrum. Any difference from the primal spectrum
    /// marks the basis as non-self-adjoint, which the adjoint solver rejects.
    pub fn with_adjoint_eigenvalues(mut self, adjoint: Vec<f64>) -> Result<Self> {
        if adjoint.len() != self.eigenvalues.len() {
            return shape(format!(
                "adjoint spectrum has {} entries, basis has {} modes",
                adjoint.len(),
                self.eigenvalues.len()
            ));
        }
        self.self_adjoint = adjoint == self.eigenvalues;
        self.adjoint_eigenvalues = adjoint;
        Ok(self)
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn reaction(&self) -> f64 {
        self.reaction
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn adjoint_eigenvalues(&self) -> &[f64] {
        &self.adjoint_eigenvalues
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }

    pub fn quadrature(&self) -> &CompositeGauss {
        &self.quadrature
    }

    pub fn eigenfunction(&self, k: usize, x: f64) -> f64 {
        if k == 0 {
            1.0 / self.length.sqrt()
        } else {
            (2.0 / self.length).sqrt() * (k as f64 * PI * x / self.length).cos()
        }
    }

    /// Coefficients (f, ξ_k) by composite Gauss-Legendre quadrature.
    pub fn project(&self, f: impl Fn(f64) -> f64) -> SpectralField {
        let q = &self.quadrature;
        let fx: Vec<f64> = q.nodes().iter().map(|&x| f(x)).collect();
        let coefficients = (0..self.n_modes())
            .map(|k| {
                q.nodes()
                    .iter()
                    .zip(q.weights())
                    .zip(&fx)
                    .map(|((&x, &w), &v)| w * v * self.eigenfunction(k, x))
                    .sum()
            })
            .collect();
        SpectralField { coefficients }
    }

    pub fn synthesize(&self, field: &SpectralField, points: &[f64]) -> Result<Vec<f64>> {
        self.check_field(field)?;
        points
            .iter()
            .map(|&x| {
                if !(0.0..=self.length).contains(&x) {
                    return domain(format!("point {x} lies outside [0, {}]", self.length));
                }
                Ok(self.synthesize_at(&field.coefficients, x))
            })
            .collect()
    }

    pub(crate) fn synthesize_at(&self, coefficients: &[f64], x: f64) -> f64 {
        coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * self.eigenfunction(k, x))
            .sum()
    }

    /// G_jk = ∫_ω ξ_j ξ_k dx from closed-form cosine integrals.
    pub fn region_gram(&self, region: Region) -> Result<RegionGram> {
        if region.right > self.length * (1.0 + 1e-14) {
            return domain(format!(
                "region [{}, {}] exceeds the domain (0, {})",
                region.left, region.right, self.length
            ));
        }
        let n = self.n_modes();
        let l = self.length;
        let (a, b) = (region.left, region.right);
        // ∫_a^b cos(mπx/L) dx
        let cos_int = |m: usize| -> f64 {
            if m == 0 {
                b - a
            } else {
                let q = m as f64 * PI / l;
                ((q * b).sin() - (q * a).sin()) / q
            }
        };
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            for k in j..n {
                let v = match (j, k) {
                    (0, 0) => (b - a) / l,
                    (0, k) => 2f64.sqrt() / l * cos_int(k),
                    (j, k) => (cos_int(k - j) + cos_int(j + k)) / l,
                };
                data[j * n + k] = v;
                data[k * n + j] = v;
            }
        }
        Ok(RegionGram { region, n, data })
    }

    pub(crate) fn check_field(&self, field: &SpectralField) -> Result<()> {
        if field.len() != self.n_modes() {
            return shape(format!(
                "field has {} coefficients, basis has {} modes",
                field.len(),
                self.n_modes()
            ));
        }
        Ok(())
    }
}

/// Modal coefficient vector of a spatial function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub coefficients: Vec<f64>,
}

impl SpectralField {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zeros(n_modes: usize) -> Self {
        Self {
            coefficients: vec![0.0; n_modes],
        }
    }

    pub fn unit(n_modes: usize, k: usize) -> Self {
        let mut f = Self::zeros(n_modes);
        f.coefficients[k] = 1.0;
        f
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a * b).sum()
    }

    /// L²(Ω) norm; orthonormality makes it the Euclidean coefficient norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Subinterval ω = [left, right] of the spatial domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub left: f64,
    pub right: f64,
}

impl Region {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) {
            return domain("region bounds must be finite");
        }
        if left < 0.0 {
            return domain(format!("region starts at {left}, below 0"));
        }
        if !(left < right) {
            return domain(format!("region [{left}, {right}] has no positive length"));
        }
        Ok(Self { left, right })
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.left..=self.right).contains(&x)
    }
}

/// Symmetric Gram matrix of the basis restricted to a region.
#[derive(Debug, Clone)]
pub struct RegionGram {
    region: Region,
    n: usize,
    data: Vec<f64>,
}

impl RegionGram {
    pub fn region(&self) -> Region {
        self.region
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.n + k]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn apply_slice(&self, c: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.data[j * self.n..(j + 1) * self.n];
            *o = row.iter().zip(c).map(|(g, v)| g * v).sum();
        }
    }

    pub(crate) fn quad_form_slice(&self, c: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| {
                let row = &self.data[j * self.n..(j + 1) * self.n];
                c[j] * row.iter().zip(c).map(|(g, v)| g * v).sum::<f64>()
            })
            .sum()
    }

    fn check(&self, field: &SpectralField) -> Result<()> {
        if field.len() != self.n {
            return shape(format!(
                "field has {} coefficients, Gram matrix is {}x{}",
                field.len(),
                self.n,
                self.n
            ));
        }
        Ok(())
    }

    /// p_ω φ in modal coordinates: G·c.
    pub fn apply_p_omega(&self, field: &SpectralField) -> Result<SpectralField> {
        self.check(field)?;
        let mut out = vec![0.0; self.n];
        self.apply_slice(&field.coefficients, &mut out);
        Ok(SpectralField::new(out))
    }

    /// ‖χ_ω φ‖_{L²(ω)} = √(cᵀ G c).
    pub fn region_l2_norm(&self, field: &SpectralField) -> Result<f64> {
        self.check(field)?;
        let q = self.quad_form_slice(&field.coefficients);
        let scale = field.dot(field).max(1.0);
        if q < -1e-12 * scale {
            return Err(Error::Consistency(format!(
                "region quadratic form is negative ({q:e})"
            )));
        }
        Ok(q.max(0.0).sqrt())
    }
}
