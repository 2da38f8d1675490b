use log::debug;

use crate::assembly::Discretization;
use crate::error::{check_len, Error, Result};
use crate::field::Field;
use crate::mesh::TriMesh;
use crate::sparse::{dot, norm2, LuFactorization, SparseMatrix};

/// Distances below this (U-norm) count as hitting a deflated solution.
const DEFLATION_SINGULAR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    /// Converged when the free-block residual 2-norm is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    /// Free-dof values.
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Shifted deflation `m(u) = prod_i (1 / ||u - u_i||_U^2 + 1)` and `grad log m`.
fn deflation(g: &SparseMatrix, u: &[f64], deflated: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let mut m = 1.0;
    let mut grad = vec![0.0; u.len()];
    for (i, ui) in deflated.iter().enumerate() {
        let e: Vec<f64> = u.iter().zip(ui).map(|(a, b)| a - b).collect();
        let ge = g.mul_vec(&e);
        let d2 = dot(&e, &ge);
        if !(d2.sqrt() > DEFLATION_SINGULAR) {
            return Err(Error::DeflationSingularity { index: i });
        }
        let factor = 1.0 / d2 + 1.0;
        m *= factor;
        let c = -2.0 / (d2 * d2) / factor;
        grad.iter_mut().zip(&ge).for_each(|(gr, x)| *gr += c * x);
    }
    Ok((m, grad))
}

/// Damped Newton on the free block, optionally deflating known solutions.
///
/// The merit function for backtracking is `m(u) ||F(u)||`; convergence is
/// declared on the undeflated residual.
pub fn newton_free(
    d: &Discretization,
    u0: &[f64],
    lambda: f64,
    opts: &NewtonOptions,
    deflated: &[Vec<f64>],
) -> Result<NewtonResult> {
    check_len("initial guess", d.num_free(), u0.len())?;
    let g = d.gram_free();
    let merit = |u: &[f64], fnorm: f64| -> Result<f64> {
        if deflated.is_empty() {
            Ok(fnorm)
        } else {
            Ok(deflation(g, u, deflated)?.0 * fnorm)
        }
    };

    let mut u = u0.to_vec();
    let mut f = d.residual_free(&u, lambda);
    let mut fnorm = norm2(&f);
    for it in 0..=opts.max_iter {
        if !fnorm.is_finite() {
            break;
        }
        if fnorm <= opts.tol {
            if !deflated.is_empty() {
                deflation(g, &u, deflated)?;
            }
            return Ok(NewtonResult {
                u,
                iterations: it,
                residual: fnorm,
            });
        }
        if it == opts.max_iter {
            break;
        }

        let lu = LuFactorization::new(&d.jacobian_free(&u, lambda))?;
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let mut step = lu.solve(&neg)?;
        if !deflated.is_empty() {
            let (_, grad_log) = deflation(g, &u, deflated)?;
            let denom = 1.0 - dot(&grad_log, &step);
            if denom.abs() < 1e-14 {
                break;
            }
            step.iter_mut().for_each(|s| *s /= denom);
        }

        let current = merit(&u, fnorm)?;
        let mut alpha = 1.0;
        for h in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            let ft = d.residual_free(&trial, lambda);
            let fn_t = norm2(&ft);
            let mt = merit(&trial, fn_t)?;
            if mt < current || h == opts.max_halvings {
                u = trial;
                f = ft;
                fnorm = fn_t;
                break;
            }
            alpha *= 0.5;
        }
        debug!("newton it {it}: |F| = {fnorm:.3e}, alpha = {alpha}");
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: fnorm,
    })
}

/// Solves `F(u, lambda) = 0` from `u0` by Newton with backtracking, deflating
/// the solutions in `deflation_set`.
pub fn newton(
    mesh: &TriMesh,
    u0: &Field,
    lambda: f64,
    tol: f64,
    maxit: usize,
    deflation_set: &[Field],
) -> Result<Field> {
    let d = Discretization::new(mesh);
    check_len("initial guess", d.num_vertices(), u0.len())?;
    let deflated: Vec<Vec<f64>> = deflation_set
        .iter()
        .map(|f| {
            check_len("deflated solution", d.num_vertices(), f.len())?;
            Ok(d.restrict(f))
        })
        .collect::<Result<_>>()?;
    let opts = NewtonOptions {
        tol,
        max_iter: maxit,
        ..NewtonOptions::default()
    };
    let res = newton_free(&d, &d.restrict(u0), lambda, &opts, &deflated)?;
    Ok(d.extend(&res.u))
}
