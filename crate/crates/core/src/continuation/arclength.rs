use log::{debug, warn};

use super::{Branch, Diagnostic, FoldPoint, Sample};
use crate::assembly::Discretization;
use crate::error::{check_len, Error, Result};
use crate::field::Field;
use crate::mesh::TriMesh;
use crate::sparse::{norm2, LuFactorization};

#[derive(Clone, Debug)]
pub struct ArclengthOptions {
    /// Corrector tolerance on the residual and on the arclength constraint.
    pub tol: f64,
    pub max_corrector: usize,
    pub max_halvings: usize,
    /// Stop once lambda leaves this interval.
    pub lambda_window: Option<(f64, f64)>,
    /// Stop once the U-norm of u drops below this value.
    pub min_norm: Option<f64>,
    pub fold_lambda_tol: f64,
    pub fold_slope_tol: f64,
    pub diagnostic: Diagnostic,
}

impl Default for ArclengthOptions {
    fn default() -> Self {
        ArclengthOptions {
            tol: 1e-10,
            max_corrector: 12,
            max_halvings: 8,
            lambda_window: None,
            min_norm: None,
            fold_lambda_tol: 1e-4,
            fold_slope_tol: 1e-3,
            diagnostic: Diagnostic::H1Norm,
        }
    }
}

/// A point `(u, lambda)` of the extended space, `u` on the free block.
#[derive(Clone, Debug)]
struct Point {
    u: Vec<f64>,
    lambda: f64,
}

struct Tracer<'a> {
    d: &'a Discretization,
    opts: &'a ArclengthOptions,
}

impl Tracer<'_> {
    fn inner(&self, a: &Point, b: &Point) -> f64 {
        self.d.h1_inner_free(&a.u, &b.u) + a.lambda * b.lambda
    }

    fn diff(a: &Point, b: &Point) -> Point {
        Point {
            u: a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect(),
            lambda: a.lambda - b.lambda,
        }
    }

    fn axpy(a: &Point, s: f64, t: &Point) -> Point {
        Point {
            u: a.u.iter().zip(&t.u).map(|(x, y)| x + s * y).collect(),
            lambda: a.lambda + s * t.lambda,
        }
    }

    fn normalized(&self, p: Point) -> Point {
        let n = self.inner(&p, &p).sqrt();
        Point {
            u: p.u.iter().map(|x| x / n).collect(),
            lambda: p.lambda / n,
        }
    }

    /// Factorization of `[[F_u, F_lambda], [(W tau)^T, tau_lambda]]` at `y`.
    fn bordered(&self, y: &Point, tau: &Point) -> Result<LuFactorization> {
        let j = self.d.jacobian_free(&y.u, y.lambda);
        let fl = self.d.residual_lambda_free(&y.u);
        let row = self.d.gram_free().mul_vec(&tau.u);
        LuFactorization::new(&j.bordered(&fl, &row, tau.lambda)?)
    }

    /// Unit tangent at `y` oriented so that `<tau, t> > 0`.
    fn tangent(&self, y: &Point, tau: &Point) -> Result<Point> {
        let n = self.d.num_free();
        let mut rhs = vec![0.0; n + 1];
        rhs[n] = 1.0;
        let z = self.bordered(y, tau)?.solve(&rhs)?;
        Ok(self.normalized(Point {
            u: z[..n].to_vec(),
            lambda: z[n],
        }))
    }

    /// Newton on `F = 0`, `<tau, y - anchor> = sigma` from `anchor + sigma tau`.
    fn correct(&self, anchor: &Point, tau: &Point, sigma: f64) -> Option<Point> {
        let n = self.d.num_free();
        let mut y = Self::axpy(anchor, sigma, tau);
        for it in 0..=self.opts.max_corrector {
            let f = self.d.residual_free(&y.u, y.lambda);
            let c = self.inner(tau, &Self::diff(&y, anchor)) - sigma;
            let fnorm = norm2(&f);
            if !fnorm.is_finite() {
                return None;
            }
            if fnorm <= self.opts.tol && c.abs() <= self.opts.tol {
                return Some(y);
            }
            if it == self.opts.max_corrector {
                debug!("corrector stalled at |F| = {fnorm:.3e}");
                return None;
            }
            let lu = self.bordered(&y, tau).ok()?;
            let mut rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            rhs.push(-c);
            let dz = lu.solve(&rhs).ok()?;
            y.u.iter_mut().zip(&dz[..n]).for_each(|(a, b)| *a += b);
            y.lambda += dz[n];
        }
        None
    }

    /// Bisects along the chord from `a` to `b` for the point where the tangent's
    /// lambda component vanishes.
    fn locate_fold(&self, a: &Point, b: &Point) -> Option<Point> {
        let chord = Self::diff(b, a);
        let len = self.inner(&chord, &chord).sqrt();
        let tau = self.normalized(chord);
        let slope = |p: &Point| self.tangent(p, &tau).ok().map(|t| t.lambda);
        let s_lo = slope(a)?.signum();
        if slope(b)?.signum() == s_lo {
            return None;
        }
        let (mut lo, mut hi) = ((0.0, a.clone()), (len, b.clone()));
        for _ in 0..60 {
            let mid = 0.5 * (lo.0 + hi.0);
            let p = self.correct(a, &tau, mid)?;
            let s = slope(&p)?;
            if s.signum() == s_lo {
                lo = (mid, p);
            } else {
                hi = (mid, p);
            }
            if (hi.1.lambda - lo.1.lambda).abs() <= self.opts.fold_lambda_tol && s.abs() <= self.opts.fold_slope_tol {
                break;
            }
        }
        let (sl, sh) = (slope(&lo.1)?.abs(), slope(&hi.1)?.abs());
        Some(if sl <= sh { lo.1 } else { hi.1 })
    }

    fn sample(&self, p: &Point, is_fold: bool) -> Sample {
        let u = self.d.extend(&p.u);
        Sample {
            lambda: p.lambda,
            diagnostic: self.opts.diagnostic.evaluate(self.d, &u),
            u,
            is_fold,
        }
    }

    fn trace(&self, start: Point, ds: f64, n_steps: usize) -> Result<Branch> {
        let mut branch = Branch::default();
        let orient = Point {
            u: vec![0.0; start.u.len()],
            lambda: ds.signum(),
        };
        let mut t = self.tangent(&start, &orient)?;
        let mut y = start;
        branch.samples.push(self.sample(&y, false));
        let h_max = ds.abs();
        let mut h = h_max;

        for step in 0..n_steps {
            let mut next = None;
            for _ in 0..=self.opts.max_halvings {
                if let Some(p) = self.correct(&y, &t, h) {
                    next = Some(p);
                    break;
                }
                h *= 0.5;
            }
            let Some(y_new) = next else {
                warn!("arclength corrector failed at lambda = {:.6} after {step} steps", y.lambda);
                branch.terminated_early = true;
                break;
            };
            let secant = self.normalized(Self::diff(&y_new, &y));
            if secant.lambda.signum() != t.lambda.signum() && t.lambda != 0.0 && secant.lambda != 0.0 {
                match self.locate_fold(&y, &y_new) {
                    Some(f) => {
                        debug!("fold at lambda = {:.8}", f.lambda);
                        let s = self.sample(&f, true);
                        branch.fold_points.push(FoldPoint {
                            lambda: s.lambda,
                            u: s.u.clone(),
                        });
                        branch.samples.push(s);
                    }
                    None => warn!("secant changed direction near lambda = {:.6} but no fold was isolated", y.lambda),
                }
            }
            branch.samples.push(self.sample(&y_new, false));
            t = secant;
            y = y_new;
            h = (1.5 * h).min(h_max);

            if let Some((lo, hi)) = self.opts.lambda_window {
                if y.lambda < lo || y.lambda > hi {
                    break;
                }
            }
            if let Some(m) = self.opts.min_norm {
                if self.d.h1_norm_free(&y.u) < m {
                    break;
                }
            }
        }
        Ok(branch)
    }
}

/// Pseudo-arclength continuation from free-dof data.
pub(crate) fn arclength_free(
    d: &Discretization,
    u0: &[f64],
    lambda0: f64,
    ds: f64,
    n_steps: usize,
    opts: &ArclengthOptions,
) -> Result<Branch> {
    if !(ds != 0.0 && ds.is_finite()) {
        return Err(Error::InvalidArgument(format!("arclength step must be nonzero, got {ds}")));
    }
    check_len("initial solution", d.num_free(), u0.len())?;
    let r = norm2(&d.residual_free(u0, lambda0));
    if !(r <= opts.tol.max(1e-8)) {
        return Err(Error::InvalidArgument(format!(
            "starting point is not a solution (residual {r:.3e})"
        )));
    }
    Tracer { d, opts }.trace(
        Point {
            u: u0.to_vec(),
            lambda: lambda0,
        },
        ds,
        n_steps,
    )
}

/// Traces the solution branch through `(u0, lambda0)` for `n_steps` steps of
/// arclength `|ds|`, initially moving in the direction of `sign(ds)` in lambda.
pub fn arclength_continue(mesh: &TriMesh, u0: &Field, lambda0: f64, ds: f64, n_steps: usize) -> Result<Branch> {
    arclength_continue_with(mesh, u0, lambda0, ds, n_steps, &ArclengthOptions::default())
}

pub fn arclength_continue_with(
    mesh: &TriMesh,
    u0: &Field,
    lambda0: f64,
    ds: f64,
    n_steps: usize,
    opts: &ArclengthOptions,
) -> Result<Branch> {
    let d = Discretization::new(mesh);
    check_len("initial solution", d.num_vertices(), u0.len())?;
    arclength_free(&d, &d.restrict(u0), lambda0, ds, n_steps, opts)
}
