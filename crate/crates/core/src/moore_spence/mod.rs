//! The Moore-Spence augmented system
//!
//! ```text
//! F(u, lambda)          = 0
//! F_u(u, lambda) phi    = 0
//! (phi, phi)_U - 1      = 0
//! ```
//!
//! whose isolated solutions are simple singular points of `F`, its Newton
//! solver, and eigenpair-seeded initialization.
//!
//! On the trivial branch `u = 0` the first equation holds identically and the
//! full bordered Jacobian has the kernel `(phi, 0, 0)`. States whose `u` is
//! exactly zero are therefore solved on the reduced system in `(lambda, phi)`,
//! which is the full system restricted to that branch.

use std::thread;

use log::info;
use serde::{Deserialize, Serialize};

use crate::assembly::Discretization;
use crate::error::{check_len, Error, Result};
use crate::field::Field;
use crate::mesh::TriMesh;
use crate::sparse::{norm2, smallest_eigenpairs_with, EigenOptions, LuFactorization, SparseMatrix};

/// A solution `(u, lambda, phi)` of the augmented system on a given mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPointState {
    pub u: Field,
    pub lambda: f64,
    pub phi: Field,
}

#[derive(Clone, Debug)]
pub struct MsOptions {
    /// Converged when the stacked residual 2-norm is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for MsOptions {
    fn default() -> Self {
        MsOptions {
            tol: 1e-9,
            max_iter: 30,
            max_halvings: 8,
        }
    }
}

/// Free-dof representation of a branch-point state.
#[derive(Clone, Debug)]
pub struct FreeState {
    pub u: Vec<f64>,
    pub lambda: f64,
    pub phi: Vec<f64>,
}

impl FreeState {
    pub fn from_state(d: &Discretization, s: &BranchPointState) -> Result<Self> {
        check_len("u", d.num_vertices(), s.u.len())?;
        check_len("phi", d.num_vertices(), s.phi.len())?;
        Ok(FreeState {
            u: d.restrict(&s.u),
            lambda: s.lambda,
            phi: d.restrict(&s.phi),
        })
    }

    pub fn to_state(&self, d: &Discretization) -> BranchPointState {
        BranchPointState {
            u: d.extend(&self.u),
            lambda: self.lambda,
            phi: d.extend(&self.phi),
        }
    }

    /// On the trivial branch exactly.
    pub fn is_trivial(&self) -> bool {
        self.u.iter().all(|&x| x == 0.0)
    }
}

/// Stacked residual `[F; F_u phi; (phi, phi)_U - 1]` on the free block.
pub fn residual_free(d: &Discretization, s: &FreeState) -> Vec<f64> {
    let mut r = d.residual_free(&s.u, s.lambda);
    r.extend(d.jacobian_free(&s.u, s.lambda).mul_vec(&s.phi));
    r.push(d.h1_inner_free(&s.phi, &s.phi) - 1.0);
    r
}

/// Bordered Jacobian with rows `(u-eq, phi-eq, norm-eq)` and columns
/// `(du, dlambda, dphi)`.
pub fn jacobian_free(d: &Discretization, s: &FreeState) -> SparseMatrix {
    let n = d.num_free();
    let fu = d.jacobian_free(&s.u, s.lambda);
    let fl = d.residual_lambda_free(&s.u);
    let fuu = d.second_derivative_free(&s.u, &s.phi);
    let ful = d.residual_lambda_free(&s.phi);
    let gphi = d.gram_free().mul_vec(&s.phi);

    let mut t = Vec::with_capacity(3 * fu.nnz() + 4 * n);
    for (i, j, v) in fu.triplets() {
        t.push((i, j, v));
        t.push((n + i, n + 1 + j, v));
    }
    for (i, j, v) in fuu.triplets() {
        t.push((n + i, j, v));
    }
    for i in 0..n {
        t.push((i, n, fl[i]));
        t.push((n + i, n, ful[i]));
        t.push((2 * n, n + 1 + i, 2.0 * gphi[i]));
    }
    SparseMatrix::from_triplets(2 * n + 1, &t).expect("block indices in range")
}

/// Jacobian of the trivial-branch system in `(lambda, phi)`: rows
/// `(phi-eq, norm-eq)`, columns `(dlambda, dphi)`.
fn reduced_jacobian(d: &Discretization, s: &FreeState) -> SparseMatrix {
    let n = d.num_free();
    let fu = d.jacobian_free(&s.u, s.lambda);
    let ful = d.residual_lambda_free(&s.phi);
    let gphi = d.gram_free().mul_vec(&s.phi);
    let mut t: Vec<_> = fu.triplets().into_iter().map(|(i, j, v)| (i, j + 1, v)).collect();
    for i in 0..n {
        t.push((i, 0, ful[i]));
        t.push((n, i + 1, 2.0 * gphi[i]));
    }
    SparseMatrix::from_triplets(n + 1, &t).expect("block indices in range")
}

/// Flips `phi` so that its largest-magnitude coefficient is positive.
fn fix_sign(phi: &mut [f64]) {
    let mut best = 0.0f64;
    for &x in phi.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        phi.iter_mut().for_each(|x| *x = -*x);
    }
}

#[derive(Clone, Debug)]
pub struct MsReport {
    pub state: FreeState,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton with residual-monotone backtracking on the augmented system.
pub fn solve_free(d: &Discretization, guess: &FreeState, opts: &MsOptions) -> Result<MsReport> {
    let n = d.num_free();
    check_len("u", n, guess.u.len())?;
    check_len("phi", n, guess.phi.len())?;
    let phi_norm = d.h1_norm_free(&guess.phi);
    if !(phi_norm >= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "initial phi has U-norm {phi_norm:.3e} < 0.1"
        )));
    }
    let trivial = guess.is_trivial();
    let mut s = guess.clone();
    let mut r = residual_free(d, &s);
    let mut rnorm = norm2(&r);

    for it in 0..=opts.max_iter {
        if !rnorm.is_finite() {
            break;
        }
        if rnorm <= opts.tol {
            fix_sign(&mut s.phi);
            return Ok(MsReport {
                state: s,
                iterations: it,
                residual: rnorm,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let (du, dl, dphi) = if trivial {
            let rhs: Vec<f64> = r[n..].iter().map(|x| -x).collect();
            let z = LuFactorization::new(&reduced_jacobian(d, &s))?.solve(&rhs)?;
            (vec![0.0; n], z[0], z[1..].to_vec())
        } else {
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let z = LuFactorization::new(&jacobian_free(d, &s))?.solve(&rhs)?;
            (z[..n].to_vec(), z[n], z[n + 1..].to_vec())
        };

        let mut alpha = 1.0;
        for h in 0..=opts.max_halvings {
            let trial = FreeState {
                u: s.u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect(),
                lambda: s.lambda + alpha * dl,
                phi: s.phi.iter().zip(&dphi).map(|(a, b)| a + alpha * b).collect(),
            };
            let rt = residual_free(d, &trial);
            let rn = norm2(&rt);
            if rn < rnorm || h == opts.max_halvings {
                s = trial;
                r = rt;
                rnorm = rn;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: rnorm,
    })
}

/// Solves `J^T psi = rhs` for the augmented system at a converged state, where
/// `rhs` is indexed by unknowns `(u, lambda, phi)` and `psi` by equations.
pub fn adjoint_solve(d: &Discretization, s: &FreeState, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = d.num_free();
    check_len("adjoint rhs", 2 * n + 1, rhs.len())?;
    if s.is_trivial() {
        // the u-equation drops out; its multiplier is chosen zero
        let psi_red = LuFactorization::new(&reduced_jacobian(d, s))?.solve_transpose(&rhs[n..])?;
        let mut psi = vec![0.0; n];
        psi.extend(psi_red);
        Ok(psi)
    } else {
        LuFactorization::new(&jacobian_free(d, s))?.solve_transpose(rhs)
    }
}

pub fn ms_residual(mesh: &TriMesh, s: &BranchPointState) -> Result<Vec<f64>> {
    let d = Discretization::new(mesh);
    Ok(residual_free(&d, &FreeState::from_state(&d, s)?))
}

pub fn ms_jacobian(mesh: &TriMesh, s: &BranchPointState) -> Result<SparseMatrix> {
    let d = Discretization::new(mesh);
    Ok(jacobian_free(&d, &FreeState::from_state(&d, s)?))
}

pub fn ms_solve(mesh: &TriMesh, guess: &BranchPointState, tol: f64, maxit: usize) -> Result<BranchPointState> {
    let d = Discretization::new(mesh);
    let opts = MsOptions {
        tol,
        max_iter: maxit,
        ..MsOptions::default()
    };
    let rep = solve_free(&d, &FreeState::from_state(&d, guess)?, &opts)?;
    Ok(rep.state.to_state(&d))
}

/// One seeded solve of the initialization.
#[derive(Clone, Debug)]
pub struct Candidate {
    /// Eigenvalue `mu` of the seeding eigenproblem.
    pub mu: f64,
    pub outcome: std::result::Result<(FreeState, f64), String>,
}

/// Seeds `n` Moore-Spence solves from the smallest-magnitude eigenpairs of
/// `F_u(u~, lambda~) x = mu M x` and returns every candidate in eigen order.
pub fn initialize_candidates(
    d: &Discretization,
    u_seed: &[f64],
    lambda_seed: f64,
    n: usize,
    opts: &MsOptions,
) -> Result<Vec<Candidate>> {
    if n == 0 {
        return Err(Error::InvalidArgument("ms_initialize needs n >= 1".into()));
    }
    check_len("seed u", d.num_free(), u_seed.len())?;
    let r = norm2(&d.residual_free(u_seed, lambda_seed));
    if !(r <= opts.tol.max(1e-8)) {
        return Err(Error::InvalidArgument(format!(
            "seed is not a solution at lambda = {lambda_seed} (residual {r:.3e})"
        )));
    }
    let eig_opts = EigenOptions {
        tol: 1e-10,
        ..EigenOptions::default()
    };
    let pairs = smallest_eigenpairs_with(&d.jacobian_free(u_seed, lambda_seed), d.mass_free(), n, &eig_opts)?;

    let candidates = thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|p| {
                scope.spawn(move || {
                    let scale = d.h1_norm_free(&p.vector);
                    let guess = FreeState {
                        u: u_seed.to_vec(),
                        lambda: lambda_seed,
                        phi: p.vector.iter().map(|x| x / scale).collect(),
                    };
                    let outcome = solve_free(d, &guess, opts)
                        .map(|rep| (rep.state, rep.residual))
                        .map_err(|e| e.to_string());
                    Candidate { mu: p.value, outcome }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("candidate solve panicked"))
            .collect::<Vec<_>>()
    });
    Ok(candidates)
}

/// Picks the candidate nearest to `u_seed` in the U-norm; ties go to the
/// lambda nearest `lambda_seed`, then to the smaller lambda.
pub fn select_candidate<'a>(
    d: &Discretization,
    u_seed: &[f64],
    lambda_seed: f64,
    candidates: &'a [Candidate],
) -> Option<&'a FreeState> {
    let scored: Vec<(f64, &FreeState)> = candidates
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok())
        .map(|(s, _)| {
            let diff: Vec<f64> = u_seed.iter().zip(&s.u).map(|(a, b)| a - b).collect();
            (d.h1_norm_free(&diff), s)
        })
        .collect();
    let best = scored.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    scored
        .into_iter()
        .filter(|(dist, _)| *dist <= best + 1e-8 * (1.0 + best))
        .map(|(_, s)| s)
        .min_by(|a, b| {
            let (da, db) = ((a.lambda - lambda_seed).abs(), (b.lambda - lambda_seed).abs());
            if (da - db).abs() <= 1e-10 * (1.0 + da.max(db)) {
                a.lambda.total_cmp(&b.lambda)
            } else {
                da.total_cmp(&db)
            }
        })
}

pub fn initialize_free(
    d: &Discretization,
    u_seed: &[f64],
    lambda_seed: f64,
    n: usize,
    opts: &MsOptions,
) -> Result<FreeState> {
    let candidates = initialize_candidates(d, u_seed, lambda_seed, n, opts)?;
    for (i, c) in candidates.iter().enumerate() {
        match &c.outcome {
            Ok((s, r)) => info!(
                "candidate {i}: mu = {:.6e} -> lambda = {:.10}, residual {r:.2e}",
                c.mu, s.lambda
            ),
            Err(e) => info!("candidate {i}: mu = {:.6e} failed: {e}", c.mu),
        }
    }
    let chosen = select_candidate(d, u_seed, lambda_seed, &candidates)
        .ok_or(Error::AllCandidatesFailed(n))?
        .clone();
    info!("selected branch point at lambda = {:.10}", chosen.lambda);
    Ok(chosen)
}

/// Locates a branch point near the solution `(u~, lambda~)` from `n` seeded
/// Moore-Spence solves.
pub fn ms_initialize(mesh: &TriMesh, u_seed: &Field, lambda_seed: f64, n: usize) -> Result<BranchPointState> {
    let d = Discretization::new(mesh);
    check_len("seed u", d.num_vertices(), u_seed.len())?;
    let s = initialize_free(&d, &d.restrict(u_seed), lambda_seed, n, &MsOptions::default())?;
    Ok(s.to_state(&d))
}

#[cfg(test)]
mod tests;
