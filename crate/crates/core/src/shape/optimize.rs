use std::collections::VecDeque;
use std::fmt;

use log::{debug, info, warn};
use serde::Serialize;

use super::{objective, riesz_matrix, shape_gradient_on, InnerProductSpec};
use crate::assembly::Discretization;
use crate::error::{check_len, Error, Result};
use crate::field::VertexField;
use crate::mesh::{TriMesh, DEFAULT_TANGLE_TOL};
use crate::moore_spence::{residual_free, solve_free, BranchPointState, FreeState, MsOptions};
use crate::sparse::{dot, norm2, LuFactorization, SparseMatrix};

#[derive(Clone, Debug)]
pub struct OptimizeOptions {
    /// Constant of the branch-switch rejection rule.
    pub c_accept: f64,
    /// Minimum deformed/original area ratio of an admissible update.
    pub tangle_tol: f64,
    pub inner_product: InnerProductSpec,
    pub initial_step: f64,
    pub max_step: f64,
    pub step_growth: f64,
    pub step_floor: f64,
    /// Cap on trial steps, accepted or not.
    pub max_iter: usize,
    pub ms: MsOptions,
    /// Memory of the quasi-Newton variant; `None` is plain steepest descent.
    pub lbfgs_memory: Option<usize>,
    pub taylor_check: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            c_accept: 0.1,
            tangle_tol: DEFAULT_TANGLE_TOL,
            inner_product: InnerProductSpec::default(),
            initial_step: 1.0,
            max_step: 1.0,
            step_growth: 1.5,
            step_floor: 1e-8,
            max_iter: 200,
            ms: MsOptions::default(),
            lbfgs_memory: None,
            taylor_check: true,
        }
    }
}

impl OptimizeOptions {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.c_accept > 0.0) {
            return bad("c_accept must be positive");
        }
        if !(self.tangle_tol >= 0.0 && self.tangle_tol < 1.0) {
            return bad("tangle_tol must lie in [0, 1)");
        }
        if !(self.step_floor > 0.0 && self.initial_step >= self.step_floor && self.max_step >= self.initial_step) {
            return bad("step lengths must satisfy 0 < step_floor <= initial_step <= max_step");
        }
        if !(self.step_growth >= 1.0) {
            return bad("step_growth must be at least 1");
        }
        if self.lbfgs_memory == Some(0) {
            return bad("lbfgs_memory must be at least 1");
        }
        self.inner_product.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The displacement would invert or crush a triangle.
    Tangled,
    /// The Moore-Spence solve on the moved mesh failed.
    SolveFailed,
    /// The new state is too far from the previous one.
    BranchSwitch,
    NoDecrease,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Tangled => "tangled",
            RejectReason::SolveFailed => "solve_failed",
            RejectReason::BranchSwitch => "branch_switch",
            RejectReason::NoDecrease => "no_decrease",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// Objective of the trial state, NaN when no state was computed.
    pub objective: f64,
    pub lambda: f64,
    pub step: f64,
    pub accepted: bool,
    pub reason: Option<RejectReason>,
}

#[derive(Clone, Debug)]
pub struct ShapeIterate {
    pub mesh: TriMesh,
    pub state: BranchPointState,
    pub objective_value: f64,
    pub step_length: f64,
    pub history: Vec<HistoryEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorReport {
    pub steps: Vec<f64>,
    pub remainders: Vec<f64>,
    /// `remainders[k] / remainders[k + 1]`
    pub ratios: Vec<f64>,
}

impl TaylorReport {
    /// Observed order of the remainder on the finest level.
    pub fn rate(&self) -> f64 {
        self.ratios.last().map_or(f64::NAN, |r| r.log2())
    }
}

#[derive(Debug)]
pub struct OptimizeReport {
    pub iterate: ShapeIterate,
    pub converged: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub taylor: Option<TaylorReport>,
    /// Why the loop stopped short of the tolerance.
    pub failure: Option<Error>,
}

/// Objective after moving `mesh` by `s w` and re-solving from `state`.
fn perturbed_objective(
    mesh: &TriMesh,
    state: &BranchPointState,
    target: f64,
    w: &VertexField,
    s: f64,
    ms: &MsOptions,
) -> Result<f64> {
    let moved = mesh.apply_displacement_with(&w.scaled(s), 0.0)?;
    let d = Discretization::new(&moved);
    let rep = solve_free(&d, &FreeState::from_state(&d, state)?, ms)?;
    Ok((rep.state.lambda - target).powi(2))
}

/// Taylor remainders `|J(s w) - J - s <g, w>|` for `s = s0, s0/2, ...` over
/// `levels` halvings, with `J(s w)` re-solved on the moved mesh.
pub fn taylor_test(
    mesh: &TriMesh,
    state: &BranchPointState,
    target: f64,
    direction: &VertexField,
    s0: f64,
    levels: usize,
    ms: &MsOptions,
) -> Result<TaylorReport> {
    check_len("direction", mesh.num_vertices(), direction.len())?;
    let d = Discretization::new(mesh);
    let g = shape_gradient_on(&d, state, target)?;
    let j0 = objective(state, target);
    let slope = g.dot(direction);
    let mut steps = Vec::new();
    let mut remainders = Vec::new();
    for k in 0..=levels {
        let s = s0 / f64::powi(2.0, k as i32);
        let j = perturbed_objective(mesh, state, target, direction, s, ms)?;
        steps.push(s);
        remainders.push((j - j0 - s * slope).abs());
    }
    let ratios = remainders.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(TaylorReport {
        steps,
        remainders,
        ratios,
    })
}

/// Riesz map on the movable coordinates of one mesh.
struct Riesz {
    keep: Vec<usize>,
    gram: SparseMatrix,
    lu: Option<LuFactorization>,
}

impl Riesz {
    fn new(mesh: &TriMesh, ip: &InnerProductSpec) -> Result<Self> {
        let keep: Vec<usize> = (0..mesh.num_vertices())
            .filter(|&v| !mesh.fixed_vertices()[v])
            .flat_map(|v| [2 * v, 2 * v + 1])
            .collect();
        let gram = riesz_matrix(mesh, ip)?.submatrix(&keep);
        let lu = if keep.is_empty() {
            None
        } else {
            Some(LuFactorization::new(&gram)?)
        };
        Ok(Riesz { keep, gram, lu })
    }

    fn restrict(&self, g: &VertexField) -> Vec<f64> {
        let flat = g.to_flat();
        self.keep.iter().map(|&i| flat[i]).collect()
    }

    fn extend(&self, x: &[f64], n: usize) -> VertexField {
        let mut flat = vec![0.0; 2 * n];
        for (&i, &v) in self.keep.iter().zip(x) {
            flat[i] = v;
        }
        VertexField::from_flat(&flat)
    }

    /// Representative `r` with `(r, V) = <g, V>`.
    fn represent(&self, g: &[f64]) -> Result<Vec<f64>> {
        match &self.lu {
            Some(lu) => lu.solve(g),
            None => Ok(Vec::new()),
        }
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.gram.bilinear(a, b)
    }
}

/// Limited-memory BFGS on the movable coordinates in the Riesz metric.
struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>, riesz: &Riesz) {
        let sy = riesz.inner(&s, &y);
        if !(sy > 1e-12 * riesz.inner(&s, &s).sqrt() * riesz.inner(&y, &y).sqrt()) {
            debug!("skipping quasi-Newton pair with s.y = {sy:.3e}");
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `-H r` by the two-loop recursion.
    fn direction(&self, r: &[f64], riesz: &Riesz) -> Vec<f64> {
        let mut q = r.to_vec();
        let mut alpha = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * riesz.inner(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alpha.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = riesz.inner(s, y) / riesz.inner(y, y);
            q.iter_mut().for_each(|x| *x *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alpha.into_iter().rev()) {
            let b = rho * riesz.inner(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter().map(|x| -x).collect()
    }
}

pub fn optimize(
    mesh0: &TriMesh,
    state0: &BranchPointState,
    target: f64,
    eps: f64,
    opts: &OptimizeOptions,
) -> Result<(TriMesh, BranchPointState, Vec<HistoryEntry>)> {
    let report = optimize_with(mesh0, state0, target, eps, opts, |_| {})?;
    match report.failure {
        Some(e) => Err(e),
        None => {
            let it = report.iterate;
            Ok((it.mesh, it.state, it.history))
        }
    }
}

/// Drives the branch point towards `lambda = target` until the objective is at
/// most `eps`, calling `on_accept` after every accepted update.
///
/// Invalid input is an error. Stopping at the step floor or the iteration cap
/// is reported in [`OptimizeReport::failure`] together with the last accepted
/// iterate.
pub fn optimize_with(
    mesh0: &TriMesh,
    state0: &BranchPointState,
    target: f64,
    eps: f64,
    opts: &OptimizeOptions,
    mut on_accept: impl FnMut(&ShapeIterate),
) -> Result<OptimizeReport> {
    opts.validate()?;
    if !(target.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target {target} must be finite and tolerance {eps} non-negative"
        )));
    }
    let nv = mesh0.num_vertices();
    let mut d = Discretization::new(mesh0);
    let mut free = FreeState::from_state(&d, state0)?;
    let r0 = norm2(&residual_free(&d, &free));
    if !(r0 <= opts.ms.tol.max(1e-8)) {
        return Err(Error::InvalidArgument(format!(
            "initial state does not solve the Moore-Spence system (residual {r0:.3e})"
        )));
    }

    let mut it = ShapeIterate {
        mesh: mesh0.clone(),
        state: state0.clone(),
        objective_value: objective(state0, target),
        step_length: opts.initial_step,
        history: Vec::new(),
    };
    let mut report = OptimizeReport {
        iterate: it.clone(),
        converged: false,
        accepted_steps: 0,
        rejected_steps: 0,
        taylor: None,
        failure: None,
    };
    if it.objective_value <= eps {
        report.converged = true;
        return Ok(report);
    }

    let mut grad = shape_gradient_on(&d, &it.state, target)?;
    let mut riesz = Riesz::new(&it.mesh, &opts.inner_product)?;
    let mut rep = riesz.represent(&riesz.restrict(&grad))?;

    if opts.taylor_check && !rep.is_empty() {
        let dir = riesz.extend(&rep.iter().map(|x| -x).collect::<Vec<_>>(), nv);
        let scale = dir.max_norm();
        if scale > 0.0 {
            let t = taylor_test(&it.mesh, &it.state, target, &dir.scaled(1.0 / scale), 1e-2, 4, &opts.ms)?;
            let floor = 1e-13 * (1.0 + it.objective_value);
            let rate = t.rate();
            info!("taylor remainders {:?}, rate {rate:.3}", t.remainders);
            if t.remainders.last().copied().unwrap_or(0.0) > floor && !(rate >= 1.5) {
                report.failure = Some(Error::GradientCheck { rate });
                report.taylor = Some(t);
                return Ok(report);
            }
            report.taylor = Some(t);
        }
    }

    let mut lbfgs = opts.lbfgs_memory.map(|m| Lbfgs {
        memory: m,
        pairs: VecDeque::new(),
    });
    let mut trials = 0usize;
    let mut step = opts.initial_step;

    while it.objective_value > eps {
        if trials >= opts.max_iter {
            report.failure = Some(Error::IterationCap(opts.max_iter));
            break;
        }
        if step < opts.step_floor {
            report.failure = Some(Error::StepFloor { floor: opts.step_floor });
            break;
        }
        trials += 1;

        let mut dir: Vec<f64> = match &lbfgs {
            Some(l) => l.direction(&rep, &riesz),
            None => rep.iter().map(|x| -x).collect(),
        };
        if let Some(l) = lbfgs.as_mut() {
            if !(dot(&dir, &riesz.restrict(&grad)) < 0.0) {
                warn!("quasi-Newton direction is not a descent direction; resetting memory");
                l.pairs.clear();
                dir = rep.iter().map(|x| -x).collect();
            }
        }
        let disp = riesz.extend(&dir, nv).scaled(step);

        let mut entry = HistoryEntry {
            iteration: trials,
            objective: f64::NAN,
            lambda: f64::NAN,
            step,
            accepted: false,
            reason: None,
        };
        let outcome = (|| -> std::result::Result<(TriMesh, Discretization, FreeState), RejectReason> {
            let moved = it
                .mesh
                .apply_displacement_with(&disp, opts.tangle_tol)
                .map_err(|_| RejectReason::Tangled)?;
            let dn = Discretization::new(&moved);
            let guess = FreeState::from_state(&dn, &it.state).map_err(|_| RejectReason::SolveFailed)?;
            let solved = solve_free(&dn, &guess, &opts.ms).map_err(|e| {
                debug!("trial solve failed: {e}");
                RejectReason::SolveFailed
            })?;
            Ok((moved, dn, solved.state))
        })();

        let accepted = match outcome {
            Err(reason) => {
                entry.reason = Some(reason);
                None
            }
            Ok((moved, dn, s_new)) => {
                let j_new = (s_new.lambda - target).powi(2);
                entry.objective = j_new;
                entry.lambda = s_new.lambda;
                let diff: Vec<f64> = free.u.iter().zip(&s_new.u).map(|(a, b)| a - b).collect();
                if !(dn.h1_norm_free(&diff) <= opts.c_accept * dn.h1_norm_free(&s_new.u)) {
                    entry.reason = Some(RejectReason::BranchSwitch);
                    None
                } else if !(j_new < it.objective_value) {
                    entry.reason = Some(RejectReason::NoDecrease);
                    None
                } else {
                    Some((moved, dn, s_new, j_new))
                }
            }
        };

        match accepted {
            None => {
                debug!("trial {trials} rejected ({}), step {step:.3e}", entry.reason.unwrap());
                report.rejected_steps += 1;
                it.history.push(entry);
                step *= 0.5;
                it.step_length = step;
            }
            Some((moved, dn, s_new, j_new)) => {
                entry.accepted = true;
                it.history.push(entry);
                report.accepted_steps += 1;
                d = dn;
                it.state = s_new.to_state(&d);
                free = s_new;
                it.mesh = moved;
                it.objective_value = j_new;
                info!(
                    "step {} accepted: lambda = {:.12}, J = {j_new:.3e}, s = {step:.3e}",
                    report.accepted_steps, it.state.lambda
                );

                let old_rep = rep;
                grad = shape_gradient_on(&d, &it.state, target)?;
                riesz = Riesz::new(&it.mesh, &opts.inner_product)?;
                rep = riesz.represent(&riesz.restrict(&grad))?;
                if let Some(l) = lbfgs.as_mut() {
                    let s_vec: Vec<f64> = dir.iter().map(|x| step * x).collect();
                    let y: Vec<f64> = rep.iter().zip(&old_rep).map(|(a, b)| a - b).collect();
                    l.push(s_vec, y, &riesz);
                }
                step = (step * opts.step_growth).min(opts.max_step);
                it.step_length = step;
                on_accept(&it);
            }
        }
    }
    report.converged = report.failure.is_none();
    report.iterate = it;
    Ok(report)
}
