//! Smallest-magnitude eigenpairs of the symmetric pencil `A x = mu B x` by
//! shift-invert subspace iteration (shift 0) with B-orthonormalization and
//! Rayleigh-Ritz projection.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, norm2, LuFactorization, SparseMatrix};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Converged when `||A x - mu B x|| <= tol * ||x||` for every requested pair.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_iter: 600,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    /// B-normalized: `x^T B x = 1`.
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// The `n` solutions of `A x = mu B x` with smallest `|mu|`, sorted by `|mu|`.
pub fn smallest_eigenpairs(a: &SparseMatrix, b: &SparseMatrix, n: usize) -> Result<Vec<Eigenpair>> {
    smallest_eigenpairs_with(a, b, n, &EigenOptions::default())
}

pub fn smallest_eigenpairs_with(
    a: &SparseMatrix,
    b: &SparseMatrix,
    n: usize,
    opts: &EigenOptions,
) -> Result<Vec<Eigenpair>> {
    let dim = a.dim();
    check_len("eigen pencil", dim, b.dim())?;
    if n == 0 || n > dim {
        return Err(Error::InvalidArgument(format!(
            "requested {n} eigenpairs of a {dim}x{dim} pencil"
        )));
    }
    let p = (2 * n).max(n + 4).min(dim);
    let lu = LuFactorization::new(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    let mut residuals = vec![f64::INFINITY; n];
    for _ in 0..opts.max_iter {
        let mut y: Vec<Vec<f64>> = basis
            .iter()
            .map(|x| lu.solve(&b.mul_vec(x)))
            .collect::<Result<_>>()?;
        b_orthonormalize(&mut y, b, &mut rng);

        let ay: Vec<Vec<f64>> = y.iter().map(|v| a.mul_vec(v)).collect();
        let by: Vec<Vec<f64>> = y.iter().map(|v| b.mul_vec(v)).collect();
        let proj = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i])));
        let eig = SymmetricEigen::new(proj);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| {
            let (vi, vj) = (eig.eigenvalues[i], eig.eigenvalues[j]);
            vi.abs().total_cmp(&vj.abs()).then(vi.total_cmp(&vj))
        });

        let combine = |src: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; dim];
            for (k, v) in src.iter().enumerate() {
                let c = eig.eigenvectors[(k, col)];
                out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
            }
            out
        };

        let mut pairs = Vec::with_capacity(n);
        let mut next_basis = Vec::with_capacity(p);
        for (rank, &col) in order.iter().enumerate() {
            let x = combine(&y, col);
            if rank < n {
                let mu = eig.eigenvalues[col];
                let ax = combine(&ay, col);
                let bx = combine(&by, col);
                let r: Vec<f64> = ax.iter().zip(&bx).map(|(p, q)| p - mu * q).collect();
                let res = norm2(&r);
                residuals[rank] = res / norm2(&x);
                pairs.push(Eigenpair {
                    value: mu,
                    vector: x.clone(),
                    residual: res,
                });
            }
            next_basis.push(x);
        }
        basis = next_basis;
        if residuals.iter().all(|&r| r <= opts.tol) {
            return Ok(pairs);
        }
    }
    Err(Error::EigenNoConvergence {
        iterations: opts.max_iter,
        residuals,
    })
}

/// Two passes of modified Gram-Schmidt in the B inner product; collapsed
/// vectors are replaced by fresh random ones.
fn b_orthonormalize(vs: &mut [Vec<f64>], b: &SparseMatrix, rng: &mut ChaCha8Rng) {
    let mut bvs: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for i in 0..vs.len() {
        for attempt in 0..3 {
            let scale0 = b.bilinear(&vs[i], &vs[i]).max(0.0).sqrt();
            for _ in 0..2 {
                for j in 0..i {
                    let c = dot(&bvs[j], &vs[i]);
                    let (head, tail) = vs.split_at_mut(i);
                    tail[0].iter_mut().zip(&head[j]).for_each(|(x, y)| *x -= c * y);
                }
            }
            let bv = b.mul_vec(&vs[i]);
            let nrm = dot(&vs[i], &bv).max(0.0).sqrt();
            if nrm > 1e-10 * scale0 && nrm > 0.0 {
                vs[i].iter_mut().for_each(|x| *x /= nrm);
                bvs.push(bv.into_iter().map(|x| x / nrm).collect());
                break;
            }
            assert!(attempt < 2, "could not extend B-orthonormal basis");
            vs[i].iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
    }
}
