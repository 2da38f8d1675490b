//! P1 finite-element discretization of the cubic-quintic Allen-Cahn problem
//!
//! ```text
//! F(u, lambda) = -0.25 lap u - lambda u - u^3 + u^5 = 0   in Omega,   u = 0 on the boundary
//! ```
//!
//! together with every derivative needed by Newton, the Moore-Spence system
//! and the discrete adjoint shape gradient.
//!
//! Two interfaces are provided. The vertex-indexed functions ([`residual`],
//! [`jacobian_u`], ...) act on full-length fields and treat Dirichlet vertices
//! with identity rows and columns. [`Discretization`] additionally exposes the
//! same operators restricted to the free (non-Dirichlet) degrees of freedom,
//! which is what the solvers work with.

mod shape_derivative;

pub use shape_derivative::coordinate_gradient;

use crate::error::{check_len, Result};
use crate::field::Field;
use crate::mesh::TriMesh;
use crate::sparse::SparseMatrix;

/// Coefficient of the Laplacian.
pub const DIFFUSION: f64 = 0.25;

const NONE: usize = usize::MAX;

/// Symmetric 7-point rule, exact for polynomials of degree 5 on triangles.
/// Barycentric points and weights relative to the triangle area.
pub(crate) const QUADRATURE: [([f64; 3], f64); 7] = {
    const C: f64 = 1.0 / 3.0;
    const A1: f64 = 0.05971587178976982;
    const B1: f64 = 0.4701420641051151;
    const W1: f64 = 0.1323941527885062;
    const A2: f64 = 0.7974269853530873;
    const B2: f64 = 0.10128650732345634;
    const W2: f64 = 0.12593918054482714;
    [
        ([C, C, C], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Affine element data: area and constant basis gradients.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Element {
    pub area: f64,
    pub grad: [[f64; 2]; 3],
}

impl Element {
    pub fn new(x: [[f64; 2]; 3]) -> Self {
        let det = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
        let grad = [
            [(x[1][1] - x[2][1]) / det, (x[2][0] - x[1][0]) / det],
            [(x[2][1] - x[0][1]) / det, (x[0][0] - x[2][0]) / det],
            [(x[0][1] - x[1][1]) / det, (x[1][0] - x[0][0]) / det],
        ];
        Element {
            area: 0.5 * det,
            grad,
        }
    }

    pub fn stiffness(&self) -> [[f64; 3]; 3] {
        let g = &self.grad;
        let mut k = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] = self.area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        k
    }

    pub fn mass(&self) -> [[f64; 3]; 3] {
        let mut m = [[self.area / 12.0; 3]; 3];
        for (a, row) in m.iter_mut().enumerate() {
            row[a] = self.area / 6.0;
        }
        m
    }

    /// `int c(x) psi_a psi_b` with `c` sampled at the quadrature points.
    pub fn weighted_mass(&self, c: &[f64; 7]) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (q, (l, w)) in QUADRATURE.iter().enumerate() {
            let s = w * self.area * c[q];
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] += s * l[a] * l[b];
                }
            }
        }
        m
    }

    /// `int c(x) psi_a`
    pub fn weighted_load(&self, c: &[f64; 7]) -> [f64; 3] {
        let mut r = [0.0; 3];
        for (q, (l, w)) in QUADRATURE.iter().enumerate() {
            let s = w * self.area * c[q];
            for a in 0..3 {
                r[a] += s * l[a];
            }
        }
        r
    }

    /// Gradient of the P1 function with local nodal values `v`.
    pub fn gradient(&self, v: [f64; 3]) -> [f64; 2] {
        let g = &self.grad;
        [
            v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
            v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
        ]
    }
}

/// Values of the P1 function with local nodal values `v` at the quadrature points.
pub(crate) fn at_quadrature(v: [f64; 3]) -> [f64; 7] {
    let mut out = [0.0; 7];
    for (q, (l, _)) in QUADRATURE.iter().enumerate() {
        out[q] = l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
    }
    out
}

/// Fixed CSR sparsity with, per element, the value slot of each local pair.
#[derive(Clone, Debug)]
struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    slots: Vec<[usize; 9]>,
}

impl Pattern {
    /// `dofs[e][a]` is the global index of local node `a`, or `NONE` if excluded.
    fn new(n: usize, dofs: &[[usize; 3]]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for d in dofs {
            for &i in d.iter().filter(|&&i| i != NONE) {
                rows[i].extend(d.iter().copied().filter(|&j| j != NONE));
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let slots = dofs
            .iter()
            .map(|d| {
                let mut s = [NONE; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        let (i, j) = (d[a], d[b]);
                        if i != NONE && j != NONE {
                            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                            s[3 * a + b] = row_ptr[i] + row.binary_search(&j).expect("pattern entry");
                        }
                    }
                }
                s
            })
            .collect();
        Pattern {
            n,
            row_ptr,
            col_idx,
            slots,
        }
    }

    fn assemble(&self, mut local: impl FnMut(usize) -> [[f64; 3]; 3]) -> SparseMatrix {
        let mut values = vec![0.0; self.col_idx.len()];
        for (e, s) in self.slots.iter().enumerate() {
            let m = local(e);
            for a in 0..3 {
                for b in 0..3 {
                    let p = s[3 * a + b];
                    if p != NONE {
                        values[p] += m[a][b];
                    }
                }
            }
        }
        SparseMatrix::from_csr(self.n, self.row_ptr.clone(), self.col_idx.clone(), values)
    }
}

/// Per-mesh assembly context: element geometry, Dirichlet bookkeeping,
/// sparsity patterns and the constant Gram matrices on the free block.
#[derive(Clone, Debug)]
pub struct Discretization {
    mesh: TriMesh,
    elements: Vec<Element>,
    dirichlet: Vec<bool>,
    free: Vec<usize>,
    free_index: Vec<usize>,
    full_pattern: Pattern,
    free_pattern: Pattern,
    stiffness_free: SparseMatrix,
    mass_free: SparseMatrix,
    gram_free: SparseMatrix,
}

impl Discretization {
    pub fn new(mesh: &TriMesh) -> Self {
        let elements: Vec<Element> = (0..mesh.num_triangles())
            .map(|t| Element::new(mesh.triangle_coords(t)))
            .collect();
        let dirichlet = mesh.dirichlet_mask();
        let mut free_index = vec![NONE; mesh.num_vertices()];
        let mut free = Vec::new();
        for (v, &d) in dirichlet.iter().enumerate() {
            if !d {
                free_index[v] = free.len();
                free.push(v);
            }
        }
        let full_pattern = Pattern::new(mesh.num_vertices(), mesh.triangles());
        let free_dofs: Vec<[usize; 3]> = mesh
            .triangles()
            .iter()
            .map(|t| t.map(|v| free_index[v]))
            .collect();
        let free_pattern = Pattern::new(free.len(), &free_dofs);
        let stiffness_free = free_pattern.assemble(|e| elements[e].stiffness());
        let mass_free = free_pattern.assemble(|e| elements[e].mass());
        let gram_free = stiffness_free
            .add(1.0, &mass_free, 1.0)
            .expect("same dimension");
        Discretization {
            mesh: mesh.clone(),
            elements,
            dirichlet,
            free,
            free_index,
            full_pattern,
            free_pattern,
            stiffness_free,
            mass_free,
            gram_free,
        }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub(crate) fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Vertex index of each free degree of freedom.
    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    /// Free-dof values of a vertex field.
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&v| f[v]).collect()
    }

    /// Vertex field from free-dof values, zero on Dirichlet vertices.
    pub fn extend(&self, x: &[f64]) -> Field {
        let mut f = Field::zeros(self.num_vertices());
        for (k, &v) in self.free.iter().enumerate() {
            f[v] = x[k];
        }
        f
    }

    fn local(&self, f: &[f64], e: usize) -> [f64; 3] {
        self.mesh.triangles()[e].map(|v| f[v])
    }

    /// Element-wise residual on a vertex field, accumulated into a vertex vector.
    fn residual_vertices(&self, u: &[f64], lambda: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.num_vertices()];
        for (e, el) in self.elements.iter().enumerate() {
            let ue = self.local(u, e);
            let k = el.stiffness();
            let m = el.mass();
            let c = at_quadrature(ue).map(|x| -x * x * x + x.powi(5));
            let load = el.weighted_load(&c);
            let tri = self.mesh.triangles()[e];
            for a in 0..3 {
                let mut s = load[a];
                for b in 0..3 {
                    s += (DIFFUSION * k[a][b] - lambda * m[a][b]) * ue[b];
                }
                r[tri[a]] += s;
            }
        }
        r
    }

    fn jacobian_local(&self, u: &[f64], lambda: f64, e: usize) -> [[f64; 3]; 3] {
        let el = &self.elements[e];
        let c = at_quadrature(self.local(u, e)).map(|x| -3.0 * x * x + 5.0 * x.powi(4));
        let (k, m, g) = (el.stiffness(), el.mass(), el.weighted_mass(&c));
        let mut out = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                out[a][b] = DIFFUSION * k[a][b] - lambda * m[a][b] + g[a][b];
            }
        }
        out
    }

    fn second_derivative_local(&self, u: &[f64], phi: &[f64], e: usize) -> [[f64; 3]; 3] {
        let uq = at_quadrature(self.local(u, e));
        let pq = at_quadrature(self.local(phi, e));
        let mut c = [0.0; 7];
        for q in 0..7 {
            c[q] = (-6.0 * uq[q] + 20.0 * uq[q].powi(3)) * pq[q];
        }
        self.elements[e].weighted_mass(&c)
    }

    // ---- free-dof operators ----

    /// Residual on the free block; `u` holds free-dof values.
    pub fn residual_free(&self, u: &[f64], lambda: f64) -> Vec<f64> {
        self.restrict(&self.residual_vertices(&self.extend(u), lambda))
    }

    pub fn jacobian_free(&self, u: &[f64], lambda: f64) -> SparseMatrix {
        let uf = self.extend(u);
        self.free_pattern.assemble(|e| self.jacobian_local(&uf, lambda, e))
    }

    /// `d/du (F_u(u) phi)` on the free block.
    pub fn second_derivative_free(&self, u: &[f64], phi: &[f64]) -> SparseMatrix {
        let (uf, pf) = (self.extend(u), self.extend(phi));
        self.free_pattern
            .assemble(|e| self.second_derivative_local(&uf, &pf, e))
    }

    /// `F_lambda = -M u` on the free block.
    pub fn residual_lambda_free(&self, u: &[f64]) -> Vec<f64> {
        self.mass_free.mul_vec(u).into_iter().map(|x| -x).collect()
    }

    pub fn stiffness_free(&self) -> &SparseMatrix {
        &self.stiffness_free
    }

    pub fn mass_free(&self) -> &SparseMatrix {
        &self.mass_free
    }

    /// `K + M` on the free block, the Gram matrix of the U-inner product.
    pub fn gram_free(&self) -> &SparseMatrix {
        &self.gram_free
    }

    pub fn h1_inner_free(&self, a: &[f64], b: &[f64]) -> f64 {
        self.gram_free.bilinear(a, b)
    }

    pub fn h1_norm_free(&self, a: &[f64]) -> f64 {
        self.h1_inner_free(a, a).max(0.0).sqrt()
    }

    // ---- vertex-indexed operators ----

    fn check(&self, f: &[f64]) -> Result<()> {
        check_len("field", self.num_vertices(), f.len())
    }

    fn dirichlet_identity(&self, m: SparseMatrix, diag: f64) -> SparseMatrix {
        let n = m.dim();
        let mut values = m.values().to_vec();
        for i in 0..n {
            for p in m.row_ptr()[i]..m.row_ptr()[i + 1] {
                let j = m.col_idx()[p];
                if self.dirichlet[i] || self.dirichlet[j] {
                    values[p] = if i == j { diag } else { 0.0 };
                }
            }
        }
        SparseMatrix::from_csr(n, m.row_ptr().to_vec(), m.col_idx().to_vec(), values)
    }

    pub fn residual(&self, u: &Field, lambda: f64) -> Result<Field> {
        self.check(u)?;
        let mut r = self.residual_vertices(u, lambda);
        for (v, &d) in self.dirichlet.iter().enumerate() {
            if d {
                r[v] = u[v];
            }
        }
        Ok(Field(r))
    }

    pub fn jacobian_u(&self, u: &Field, lambda: f64) -> Result<SparseMatrix> {
        self.check(u)?;
        let m = self.full_pattern.assemble(|e| self.jacobian_local(u, lambda, e));
        Ok(self.dirichlet_identity(m, 1.0))
    }

    pub fn residual_lambda(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let r = self.residual_lambda_free(&self.restrict(u));
        Ok(self.extend(&r))
    }

    pub fn second_derivative_matrix(&self, u: &Field, phi: &Field) -> Result<SparseMatrix> {
        self.check(u)?;
        self.check(phi)?;
        let m = self
            .full_pattern
            .assemble(|e| self.second_derivative_local(u, phi, e));
        Ok(self.dirichlet_identity(m, 0.0))
    }

    pub fn mixed_derivative_action(&self, phi: &Field) -> Result<Field> {
        self.residual_lambda(phi)
    }

    /// `(M, K)` over all vertices, without boundary conditions.
    pub fn gram_matrices(&self) -> (SparseMatrix, SparseMatrix) {
        (
            self.full_pattern.assemble(|e| self.elements[e].mass()),
            self.full_pattern.assemble(|e| self.elements[e].stiffness()),
        )
    }

    /// `a^T (K + M) b` over all vertices.
    pub fn h1_inner(&self, a: &Field, b: &Field) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let mut s = 0.0;
        for (e, el) in self.elements.iter().enumerate() {
            let (ae, be) = (self.local(a, e), self.local(b, e));
            let (k, m) = (el.stiffness(), el.mass());
            for i in 0..3 {
                for j in 0..3 {
                    s += ae[i] * (k[i][j] + m[i][j]) * be[j];
                }
            }
        }
        Ok(s)
    }

    pub fn h1_norm(&self, a: &Field) -> Result<f64> {
        Ok(self.h1_inner(a, a)?.max(0.0).sqrt())
    }

    /// `int u dx`
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.elements
            .iter()
            .enumerate()
            .map(|(e, el)| el.area * self.local(u, e).iter().sum::<f64>() / 3.0)
            .sum()
    }

    /// Index map from vertices to free dofs (`None` on Dirichlet vertices).
    pub fn free_index(&self, v: usize) -> Option<usize> {
        (self.free_index[v] != NONE).then_some(self.free_index[v])
    }
}

pub fn residual(mesh: &TriMesh, u: &Field, lambda: f64) -> Result<Field> {
    Discretization::new(mesh).residual(u, lambda)
}

pub fn jacobian_u(mesh: &TriMesh, u: &Field, lambda: f64) -> Result<SparseMatrix> {
    Discretization::new(mesh).jacobian_u(u, lambda)
}

pub fn residual_lambda(mesh: &TriMesh, u: &Field) -> Result<Field> {
    Discretization::new(mesh).residual_lambda(u)
}

pub fn second_derivative_matrix(mesh: &TriMesh, u: &Field, phi: &Field) -> Result<SparseMatrix> {
    Discretization::new(mesh).second_derivative_matrix(u, phi)
}

pub fn mixed_derivative_action(mesh: &TriMesh, phi: &Field) -> Result<Field> {
    Discretization::new(mesh).mixed_derivative_action(phi)
}

pub fn gram_matrices(mesh: &TriMesh) -> (SparseMatrix, SparseMatrix) {
    Discretization::new(mesh).gram_matrices()
}

pub fn h1_inner(mesh: &TriMesh, a: &Field, b: &Field) -> Result<f64> {
    Discretization::new(mesh).h1_inner(a, b)
}

pub fn h1_norm(mesh: &TriMesh, a: &Field) -> Result<f64> {
    Discretization::new(mesh).h1_norm(a)
}
