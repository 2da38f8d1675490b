use std::f64::consts::PI;

use super::{signed_area, BoundaryEdge, TriMesh, OUTER_TAG};
use crate::error::{Error, Result};

fn outer_loop(ids: &[usize]) -> Vec<BoundaryEdge> {
    (0..ids.len())
        .map(|k| BoundaryEdge {
            vertices: [ids[k], ids[(k + 1) % ids.len()]],
            tag: OUTER_TAG.into(),
        })
        .collect()
}

fn orient(vertices: &[[f64; 2]], tris: &mut [[usize; 3]]) {
    for t in tris.iter_mut() {
        if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
}

/// Unit disk from concentric rings of radius `k/n`, ring `k` holding `6k`
/// equally spaced points. The resulting mesh has the six-fold symmetry of
/// the hexagonal lattice and all boundary points exactly on the circle.
pub fn gen_unit_disk(h: f64) -> Result<TriMesh> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "disk edge length must lie in (0, 1), got {h}"
        )));
    }
    let n = (1.0 / h).ceil() as usize;
    let ring_start = |k: usize| if k == 0 { 0 } else { 1 + 3 * k * (k - 1) };
    let ring_len = |k: usize| if k == 0 { 1 } else { 6 * k };

    let mut vertices = vec![[0.0, 0.0]];
    for k in 1..=n {
        let r = k as f64 / n as f64;
        for j in 0..6 * k {
            let theta = 2.0 * PI * j as f64 / (6 * k) as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut tris = Vec::with_capacity(6 * n * n);
    for k in 1..=n {
        let outer = |m: usize| ring_start(k) + m % ring_len(k);
        let inner = |m: usize| ring_start(k - 1) + m % ring_len(k - 1);
        for s in 0..6 {
            let o = |m: usize| outer(s * k + m);
            let i = |m: usize| inner(s * (k - 1) + m);
            for m in 0..k {
                tris.push([i(m), o(m), o(m + 1)]);
                if m + 1 < k {
                    tris.push([i(m), o(m + 1), i(m + 1)]);
                }
            }
        }
    }
    orient(&vertices, &mut tris);

    let boundary: Vec<usize> = (0..ring_len(n)).map(|j| ring_start(n) + j).collect();
    let nv = vertices.len();
    TriMesh::new(vertices, tris, outer_loop(&boundary), vec![false; nv])
}

/// Point on the boundary of the rounded square (half edge `a`, radius `r`)
/// corresponding to `b` on the boundary of `[-1, 1]^2`. Each side of the
/// reference square maps linearly in arclength onto the path between the
/// midpoints of the adjacent corner arcs.
fn rounded_boundary(b: [f64; 2], a: f64, r: f64) -> [f64; 2] {
    // rotate so that `b` lies on the side x = 1
    let quarter = if b[0].abs() >= b[1].abs() {
        if b[0] > 0.0 {
            0
        } else {
            2
        }
    } else if b[1] > 0.0 {
        1
    } else {
        3
    };
    let rot = |p: [f64; 2], q: usize| {
        (0..q).fold(p, |p, _| [-p[1], p[0]])
    };
    let t = rot(b, (4 - quarter) % 4)[1];

    let c = a - r;
    let arc = r * PI / 4.0;
    let len = 2.0 * c + 2.0 * arc;
    let sigma = 0.5 * (t + 1.0) * len;
    let p = if sigma < arc {
        let th = -PI / 4.0 + sigma / r;
        [c + r * th.cos(), -c + r * th.sin()]
    } else if sigma <= arc + 2.0 * c {
        [a, -c + (sigma - arc)]
    } else {
        let th = (sigma - arc - 2.0 * c) / r;
        [c + r * th.cos(), c + r * th.sin()]
    };
    rot(p, quarter)
}

/// Square of side `edge` centered at the origin with corner fillets of radius
/// `r`, from a structured grid mapped ray-wise onto the rounded outline. Cell
/// diagonals point toward the corners so the mesh keeps the square's
/// reflection symmetries.
pub fn gen_rounded_square(edge: f64, r: f64, h: f64) -> Result<TriMesh> {
    if !(r > 0.0 && 2.0 * r < edge && edge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "rounded square needs 0 < 2r < edge, got edge {edge}, r {r}"
        )));
    }
    if !(h > 0.0 && h < r) {
        return Err(Error::InvalidArgument(format!(
            "rounded square edge length must lie in (0, r = {r}), got {h}"
        )));
    }
    let a = 0.5 * edge;
    let n = 2 * (edge / (2.0 * h)).ceil() as usize;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / n as f64;

    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (coord(i), coord(j));
            let rho = x.abs().max(y.abs());
            if rho == 0.0 {
                vertices.push([0.0, 0.0]);
            } else {
                let p = rounded_boundary([x / rho, y / rho], a, r);
                vertices.push([rho * p[0], rho * p[1]]);
            }
        }
    }

    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            let toward_corner = (2 * i + 1 < n) == (2 * j + 1 < n);
            if toward_corner {
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            } else {
                tris.push([p00, p10, p01]);
                tris.push([p10, p11, p01]);
            }
        }
    }
    orient(&vertices, &mut tris);

    let mut boundary = Vec::with_capacity(4 * n);
    boundary.extend((0..n).map(|i| idx(i, 0)));
    boundary.extend((0..n).map(|j| idx(n, j)));
    boundary.extend((0..n).map(|i| idx(n - i, n)));
    boundary.extend((0..n).map(|j| idx(0, n - j)));
    let nv = vertices.len();
    TriMesh::new(vertices, tris, outer_loop(&boundary), vec![false; nv])
}
