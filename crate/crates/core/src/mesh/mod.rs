//! Triangle meshes with fixed connectivity whose vertex coordinates are the
//! shape-optimization variables.

mod generate;
mod io;

use std::collections::HashMap;

use sha2::{Digest, Sha256};

pub use generate::{gen_rounded_square, gen_unit_disk};
pub use io::{parse_mesh, read_mesh, write_mesh, MeshFile};

use crate::error::{check_len, Error, Result};
use crate::field::VertexField;

/// Default threshold below which a deformation counts as tangled.
pub const DEFAULT_TANGLE_TOL: f64 = 1e-3;

/// Tag used by the generators for the Dirichlet boundary.
pub const OUTER_TAG: &str = "outer";

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: String,
}

/// A 2D triangle mesh. Construction validates orientation and topology;
/// connectivity never changes afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    fixed: Vec<bool>,
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl TriMesh {
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        fixed: Vec<bool>,
    ) -> Result<Self> {
        let nv = vertices.len();
        check_len("fixed vertex mask", nv, fixed.len())?;
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidMesh(format!("vertices[{i}]: non-finite coordinate")));
            }
        }

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangles[{t}]: vertex index {bad} out of range (vertex count {nv})"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangles[{t}]: repeated vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangles[{t}]: non-positive orientation (signed area {area:.3e})"
                )));
            }
            for k in 0..3 {
                *edge_count
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default() += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge ({}, {}) shared by {c} triangles",
                e.0, e.1
            )));
        }

        let mut seen = HashMap::new();
        for (k, be) in boundary_edges.iter().enumerate() {
            let [a, b] = be.vertices;
            if a >= nv || b >= nv {
                return Err(Error::InvalidMesh(format!(
                    "boundary_edges[{k}]: vertex index out of range (vertex count {nv})"
                )));
            }
            let key = edge_key(a, b);
            match edge_count.get(&key) {
                Some(1) => {}
                Some(c) => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary_edges[{k}]: edge ({a}, {b}) belongs to {c} triangles"
                    )))
                }
                None => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary_edges[{k}]: edge ({a}, {b}) is not a mesh edge"
                    )))
                }
            }
            if seen.insert(key, k).is_some() {
                return Err(Error::InvalidMesh(format!("boundary_edges[{k}]: duplicate edge")));
            }
        }
        let open = edge_count.values().filter(|&&c| c == 1).count();
        if open != boundary_edges.len() {
            return Err(Error::InvalidMesh(format!(
                "{open} topological boundary edges but {} tagged",
                boundary_edges.len()
            )));
        }

        Ok(TriMesh {
            vertices,
            triangles,
            boundary_edges,
            fixed,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn fixed_vertices(&self) -> &[bool] {
        &self.fixed
    }

    /// Triangle corner coordinates.
    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Returns a copy with a new frozen-vertex mask.
    pub fn with_fixed(&self, fixed: Vec<bool>) -> Result<TriMesh> {
        check_len("fixed vertex mask", self.num_vertices(), fixed.len())?;
        let mut m = self.clone();
        m.fixed = fixed;
        Ok(m)
    }

    /// Vertices on any tagged boundary edge; these carry homogeneous
    /// Dirichlet conditions.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for be in &self.boundary_edges {
            mask[be.vertices[0]] = true;
            mask[be.vertices[1]] = true;
        }
        mask
    }

    /// Unique undirected edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| edge_key(t[k], t[(k + 1) % 3])))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Minimum over triangles of deformed/original signed area for `x -> x + d(x)`.
    pub fn min_jacobian_ratio(&self, d: &VertexField) -> Result<f64> {
        check_len("displacement", self.num_vertices(), d.len())?;
        let moved = |v: usize| [self.vertices[v][0] + d[v][0], self.vertices[v][1] + d[v][1]];
        Ok(self
            .triangles
            .iter()
            .map(|tri| {
                let before = signed_area(
                    self.vertices[tri[0]],
                    self.vertices[tri[1]],
                    self.vertices[tri[2]],
                );
                signed_area(moved(tri[0]), moved(tri[1]), moved(tri[2])) / before
            })
            .fold(f64::INFINITY, f64::min))
    }

    /// Moves vertices by `d`, rejecting tangling at [`DEFAULT_TANGLE_TOL`].
    pub fn apply_displacement(&self, d: &VertexField) -> Result<TriMesh> {
        self.apply_displacement_with(d, DEFAULT_TANGLE_TOL)
    }

    pub fn apply_displacement_with(&self, d: &VertexField, tangle_tol: f64) -> Result<TriMesh> {
        let ratio = self.min_jacobian_ratio(d)?;
        if !(ratio > tangle_tol) {
            return Err(Error::Tangled {
                ratio,
                threshold: tangle_tol,
            });
        }
        let mut m = self.clone();
        for (v, dv) in m.vertices.iter_mut().zip(d.iter()) {
            v[0] += dv[0];
            v[1] += dv[1];
        }
        Ok(m)
    }

    /// Applies an affine map `x -> a x + b` to all vertices.
    pub fn map_affine(&self, a: [[f64; 2]; 2], b: [f64; 2]) -> Result<TriMesh> {
        let d = VertexField::from_fn(self.num_vertices(), |v| {
            let x = self.vertices[v];
            [
                a[0][0] * x[0] + a[0][1] * x[1] + b[0] - x[0],
                a[1][0] * x[0] + a[1][1] * x[1] + b[1] - x[1],
            ]
        });
        self.apply_displacement_with(&d, 0.0)
    }

    pub fn scaled(&self, s: f64) -> Result<TriMesh> {
        self.map_affine([[s, 0.0], [0.0, s]], [0.0, 0.0])
    }

    /// Finds the triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let eps = 1e-12;
        self.triangles.iter().enumerate().find_map(|(t, tri)| {
            let [a, b, c] = [
                self.vertices[tri[0]],
                self.vertices[tri[1]],
                self.vertices[tri[2]],
            ];
            let area = signed_area(a, b, c);
            let l0 = signed_area(p, b, c) / area;
            let l1 = signed_area(a, p, c) / area;
            let l2 = 1.0 - l0 - l1;
            (l0 >= -eps && l1 >= -eps && l2 >= -eps).then_some((t, [l0, l1, l2]))
        })
    }

    /// Short hex digest identifying coordinates and connectivity.
    pub fn checksum(&self) -> String {
        let json = serde_json::to_string(&MeshFile::from(self)).expect("mesh serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
