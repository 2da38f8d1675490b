//! Nodal coefficient vectors living on a [`TriMesh`](crate::TriMesh).

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Nodal values of a piecewise-linear scalar function, one per mesh vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Field((0..n).map(f).collect())
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field(self.0.iter().map(|v| a * v).collect())
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(x, y)| x + a * y).collect())
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

/// One 2D vector per vertex: displacements and coordinate gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexField(pub Vec<[f64; 2]>);

impl VertexField {
    pub fn zeros(n: usize) -> Self {
        VertexField(vec![[0.0; 2]; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> [f64; 2]) -> Self {
        VertexField((0..n).map(f).collect())
    }

    pub fn scaled(&self, a: f64) -> VertexField {
        VertexField(self.0.iter().map(|v| [a * v[0], a * v[1]]).collect())
    }

    /// Euclidean pairing `sum_v a_v . b_v`.
    pub fn dot(&self, other: &VertexField) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.0
            .iter()
            .fold(0.0, |m, v| m.max((v[0] * v[0] + v[1] * v[1]).sqrt()))
    }

    /// Interleaved `[x0, y0, x1, y1, ...]` layout.
    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| [v[0], v[1]]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        VertexField(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }
}

impl Deref for VertexField {
    type Target = [[f64; 2]];
    fn deref(&self) -> &[[f64; 2]] {
        &self.0
    }
}

impl DerefMut for VertexField {
    fn deref_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.0
    }
}
