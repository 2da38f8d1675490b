//! Shape optimization of a branch point: the objective `(lambda - lambda*)^2`,
//! its discrete-adjoint gradient with respect to vertex coordinates, Riesz
//! smoothing of that gradient, and the descent loop.

mod integral;
mod optimize;

pub use integral::{domain_integral, domain_integral_gradient};
pub use optimize::{
    optimize, optimize_with, taylor_test, HistoryEntry, OptimizeOptions, OptimizeReport, RejectReason, ShapeIterate,
    TaylorReport,
};

use serde::{Deserialize, Serialize};

use crate::assembly::Discretization;
use crate::error::{check_len, Error, Result};
use crate::field::{Field, VertexField};
use crate::mesh::TriMesh;
use crate::moore_spence::{adjoint_solve, BranchPointState, FreeState};
use crate::sparse::{LuFactorization, SparseMatrix};

pub fn objective(state: &BranchPointState, target: f64) -> f64 {
    (state.lambda - target).powi(2)
}

/// Derivative of the objective with respect to every vertex coordinate, with
/// the state constrained to the Moore-Spence system. Zero on fixed vertices.
pub fn shape_gradient(mesh: &TriMesh, state: &BranchPointState, target: f64) -> Result<VertexField> {
    let d = Discretization::new(mesh);
    shape_gradient_on(&d, state, target)
}

pub(crate) fn shape_gradient_on(d: &Discretization, state: &BranchPointState, target: f64) -> Result<VertexField> {
    let s = FreeState::from_state(d, state)?;
    let n = d.num_free();
    let mut rhs = vec![0.0; 2 * n + 1];
    rhs[n] = -2.0 * (state.lambda - target);
    if rhs[n] == 0.0 {
        return Ok(VertexField::zeros(d.num_vertices()));
    }
    let psi = adjoint_solve(d, &s, &rhs)?;
    d.coordinate_gradient(&state.u, state.lambda, &state.phi, &psi)
}

/// Inner product used to turn the shape derivative into a displacement.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerProductSpec {
    /// `int DV : DW + V . W`
    #[default]
    H1Vector,
    /// `int 2 mu eps(V) : eps(W) + lambda div V div W + V . W`
    LinearElasticity { mu: f64, lambda: f64 },
}

impl InnerProductSpec {
    pub fn elasticity() -> Self {
        InnerProductSpec::LinearElasticity { mu: 1.0, lambda: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InnerProductSpec::H1Vector => Ok(()),
            InnerProductSpec::LinearElasticity { mu, lambda } => {
                if mu > 0.0 && lambda >= 0.0 && mu.is_finite() && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "elasticity parameters must satisfy mu > 0, lambda >= 0 (got {mu}, {lambda})"
                    )))
                }
            }
        }
    }
}

/// Gram matrix of the inner product on vector P1 fields, with the two
/// components of vertex `v` at rows `2v` and `2v + 1`.
pub fn riesz_matrix(mesh: &TriMesh, ip: &InnerProductSpec) -> Result<SparseMatrix> {
    ip.validate()?;
    let (mu, lam, frob) = match *ip {
        InnerProductSpec::H1Vector => (0.0, 0.0, 1.0),
        InnerProductSpec::LinearElasticity { mu, lambda } => (mu, lambda, 0.0),
    };
    let mut t = Vec::with_capacity(36 * mesh.num_triangles());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let el = crate::assembly::Element::new(mesh.triangle_coords(e));
        let (k, m) = (el.stiffness(), el.mass());
        let g = el.grad;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..2 {
                    for dd in 0..2 {
                        let mut v = el.area * (mu * (g[a][dd] * g[b][c]) + lam * g[a][c] * g[b][dd]);
                        if c == dd {
                            v += frob * k[a][b] + mu * k[a][b] + m[a][b];
                        }
                        t.push((2 * tri[a] + c, 2 * tri[b] + dd, v));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(2 * mesh.num_vertices(), &t)
}

/// Solves `(dT, V)_ip = -<g, V>` for all `V` vanishing on fixed vertices.
pub fn riesz_update(mesh: &TriMesh, g: &VertexField, ip: &InnerProductSpec) -> Result<VertexField> {
    check_len("gradient", mesh.num_vertices(), g.len())?;
    let keep: Vec<usize> = (0..mesh.num_vertices())
        .filter(|&v| !mesh.fixed_vertices()[v])
        .flat_map(|v| [2 * v, 2 * v + 1])
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyFreeSet);
    }
    let a = riesz_matrix(mesh, ip)?.submatrix(&keep);
    let flat = g.to_flat();
    let rhs: Vec<f64> = keep.iter().map(|&i| -flat[i]).collect();
    let x = LuFactorization::new(&a)?.solve(&rhs)?;
    let mut out = vec![0.0; flat.len()];
    for (&i, v) in keep.iter().zip(x) {
        out[i] = v;
    }
    Ok(VertexField::from_flat(&out))
}

/// Rejects updates whose new state has moved away from the previous one:
/// true iff `||u_prev - u_new||_U <= C ||u_new||_U` on `mesh_new`.
pub fn accept_step(u_prev: &Field, u_new: &Field, mesh_new: &TriMesh, c: f64) -> Result<bool> {
    let d = Discretization::new(mesh_new);
    Ok(d.h1_norm(&u_prev.sub(u_new))? <= c * d.h1_norm(u_new)?)
}
