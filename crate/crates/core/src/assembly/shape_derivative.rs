//! Derivatives of the Moore-Spence residual with respect to vertex coordinates.
//!
//! Nodal values are attached to vertices and move with them. For a vertex
//! perturbation `V = psi_a e_c` on one element,
//!
//! ```text
//! d/dX_ac int A grad p . grad q = int A [ (grad p . grad q) d_c psi_a
//!                                       - d_c p (grad psi_a . grad q)
//!                                       - (grad p . grad psi_a) d_c q ]
//! d/dX_ac int G(p, q, ...)      = (int G) d_c psi_a
//! ```

use super::{at_quadrature, Discretization, Element, DIFFUSION};
use crate::error::{check_len, Result};
use crate::field::{Field, VertexField};
use crate::mesh::TriMesh;

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Adds the coordinate derivative of `coef * int grad p . grad q` on one element.
fn add_gradient_term(el: &Element, coef: f64, gp: [f64; 2], gq: [f64; 2], out: &mut [[f64; 2]; 3]) {
    let pq = dot2(gp, gq);
    for a in 0..3 {
        let ga = el.grad[a];
        let (aq, ap) = (dot2(ga, gq), dot2(ga, gp));
        for c in 0..2 {
            out[a][c] += coef * el.area * (pq * ga[c] - gp[c] * aq - ap * gq[c]);
        }
    }
}

/// Adjoint-weighted coordinate derivative of the Moore-Spence residual.
///
/// `adjoint` is the stacked free-dof vector `(psi_u, psi_phi, psi_l)` of length
/// `2 N_free + 1`; the result is `sum_v adjoint . dR/dX_v`, zero on fixed vertices.
pub fn coordinate_gradient(
    mesh: &TriMesh,
    u: &Field,
    lambda: f64,
    phi: &Field,
    adjoint: &[f64],
) -> Result<VertexField> {
    Discretization::new(mesh).coordinate_gradient(u, lambda, phi, adjoint)
}

impl Discretization {
    pub fn coordinate_gradient(
        &self,
        u: &Field,
        lambda: f64,
        phi: &Field,
        adjoint: &[f64],
    ) -> Result<VertexField> {
        let nf = self.num_free();
        check_len("u", self.num_vertices(), u.len())?;
        check_len("phi", self.num_vertices(), phi.len())?;
        check_len("adjoint", 2 * nf + 1, adjoint.len())?;
        let psi_u = self.extend(&adjoint[..nf]);
        let psi_p = self.extend(&adjoint[nf..2 * nf]);
        let psi_l = adjoint[2 * nf];

        let mesh = self.mesh();
        let mut g = VertexField::zeros(self.num_vertices());
        for (e, el) in self.elements().iter().enumerate() {
            let tri = mesh.triangles()[e];
            let ue = tri.map(|v| u[v]);
            let pe = tri.map(|v| phi[v]);
            let au = tri.map(|v| psi_u[v]);
            let ap = tri.map(|v| psi_p[v]);

            let mut local = [[0.0; 2]; 3];
            let (gu, gp) = (el.gradient(ue), el.gradient(pe));
            add_gradient_term(el, DIFFUSION, gu, el.gradient(au), &mut local);
            add_gradient_term(el, DIFFUSION, gp, el.gradient(ap), &mut local);
            add_gradient_term(el, psi_l, gp, gp, &mut local);

            let (uq, pq, auq, apq) = (
                at_quadrature(ue),
                at_quadrature(pe),
                at_quadrature(au),
                at_quadrature(ap),
            );
            let mut integrand = [0.0; 7];
            for q in 0..7 {
                let x = uq[q];
                integrand[q] = (-lambda * x - x.powi(3) + x.powi(5)) * auq[q]
                    + (-lambda - 3.0 * x * x + 5.0 * x.powi(4)) * pq[q] * apq[q]
                    + psi_l * pq[q] * pq[q];
            }
            let total: f64 = el.weighted_load(&integrand).iter().sum();
            for a in 0..3 {
                for c in 0..2 {
                    local[a][c] += total * el.grad[a][c];
                }
            }
            for a in 0..3 {
                g[tri[a]][0] += local[a][0];
                g[tri[a]][1] += local[a][1];
            }
        }
        for (v, &fixed) in mesh.fixed_vertices().iter().enumerate() {
            if fixed {
                g[v] = [0.0, 0.0];
            }
        }
        Ok(g)
    }
}
