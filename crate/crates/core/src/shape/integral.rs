//! Domain integrals `J = int f dx` of a fixed function and their shape derivative
//! `dJ(V) = int grad f . V + f div V dx`.

use crate::assembly::{Element, QUADRATURE};
use crate::field::VertexField;
use crate::mesh::TriMesh;

fn quadrature_points(x: &[[f64; 2]; 3]) -> impl Iterator<Item = ([f64; 3], [f64; 2], f64)> + '_ {
    QUADRATURE.iter().map(move |&(l, w)| {
        let p = [
            l[0] * x[0][0] + l[1] * x[1][0] + l[2] * x[2][0],
            l[0] * x[0][1] + l[1] * x[1][1] + l[2] * x[2][1],
        ];
        (l, p, w)
    })
}

pub fn domain_integral(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| {
            let x = mesh.triangle_coords(t);
            let area = mesh.triangle_area(t);
            quadrature_points(&x).map(|(_, p, w)| w * area * f(p)).sum::<f64>()
        })
        .sum()
}

/// Coefficients of `dJ(V)` in the vertex basis, zero on fixed vertices.
pub fn domain_integral_gradient(
    mesh: &TriMesh,
    f: impl Fn([f64; 2]) -> f64,
    grad_f: impl Fn([f64; 2]) -> [f64; 2],
) -> VertexField {
    let mut g = VertexField::zeros(mesh.num_vertices());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let x = mesh.triangle_coords(t);
        let el = Element::new(x);
        let mut integral_f = 0.0;
        for (l, p, w) in quadrature_points(&x) {
            let s = w * el.area;
            let gf = grad_f(p);
            integral_f += s * f(p);
            for a in 0..3 {
                g[tri[a]][0] += s * gf[0] * l[a];
                g[tri[a]][1] += s * gf[1] * l[a];
            }
        }
        for a in 0..3 {
            g[tri[a]][0] += integral_f * el.grad[a][0];
            g[tri[a]][1] += integral_f * el.grad[a][1];
        }
    }
    for (v, &fixed) in mesh.fixed_vertices().iter().enumerate() {
        if fixed {
            g[v] = [0.0, 0.0];
        }
    }
    g
}
