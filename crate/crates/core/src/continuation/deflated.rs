use log::{debug, info, warn};

use super::arclength::arclength_free;
use super::newton::newton_free;
use super::{ArclengthOptions, Birth, Branch, Diagnostic, Diagram, NewtonOptions, Sample};
use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::moore_spence::{self, FreeState, MsOptions};
use crate::sparse::{smallest_eigenpairs_with, EigenOptions};

/// Arclength pass that joins branch pieces through their folds.
#[derive(Clone, Debug)]
pub struct ComplementOptions {
    pub ds: f64,
    pub max_steps: usize,
    /// Tracing stops when the U-norm of u falls below this value.
    pub min_norm: f64,
}

impl Default for ComplementOptions {
    fn default() -> Self {
        ComplementOptions {
            ds: 0.05,
            max_steps: 400,
            min_norm: 1e-2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DcOptions {
    pub newton: NewtonOptions,
    /// Iteration cap for discovery solves from seeds.
    pub seed_max_iter: usize,
    /// Amplitude of the eigenfunction perturbations of the trivial branch.
    pub seed_eps: f64,
    /// Eigenpairs of the trivial-branch linearization computed per step.
    pub n_modes: usize,
    /// Only modes with `|mu|` below this value seed new searches.
    pub seed_window: f64,
    pub diagnostic: Diagnostic,
    pub complement: Option<ComplementOptions>,
    pub ms: MsOptions,
}

impl Default for DcOptions {
    fn default() -> Self {
        DcOptions {
            newton: NewtonOptions::default(),
            seed_max_iter: 25,
            seed_eps: 1e-2,
            n_modes: 4,
            seed_window: 0.5,
            diagnostic: Diagnostic::H1Norm,
            complement: Some(ComplementOptions::default()),
            ms: MsOptions::default(),
        }
    }
}

struct Track {
    samples: Vec<(f64, Vec<f64>)>,
    active: bool,
    trivial: bool,
}

struct Sweep<'a> {
    d: &'a Discretization,
    opts: &'a DcOptions,
    max_branches: usize,
    tracks: Vec<Track>,
}

impl Sweep<'_> {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let e: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.d.h1_norm_free(&e)
    }

    fn is_new(&self, u: &[f64], found: &[Vec<f64>]) -> bool {
        let scale = 1.0 + self.d.h1_norm_free(u);
        found.iter().all(|f| self.dist(u, f) > 1e-6 * scale)
    }

    /// Registers `u` and its Z2 partner `-u` as new branches.
    fn add_pair(&mut self, lambda: f64, u: Vec<f64>, found: &mut Vec<Vec<f64>>) {
        for cand in [u.clone(), u.iter().map(|x| -x).collect::<Vec<f64>>()] {
            if self.tracks.len() >= self.max_branches {
                return;
            }
            if self.is_new(&cand, found) {
                info!("new branch {} at lambda = {lambda:.4}", self.tracks.len());
                found.push(cand.clone());
                self.tracks.push(Track {
                    samples: vec![(lambda, cand)],
                    active: true,
                    trivial: false,
                });
            }
        }
    }

    fn try_discover(&mut self, seed: &[f64], lambda: f64, found: &mut Vec<Vec<f64>>) {
        if self.tracks.len() >= self.max_branches {
            return;
        }
        let opts = NewtonOptions {
            max_iter: self.opts.seed_max_iter,
            ..self.opts.newton.clone()
        };
        match newton_free(self.d, seed, lambda, &opts, found) {
            Ok(res) if self.d.h1_norm_free(&res.u) > 1e-8 => self.add_pair(lambda, res.u, found),
            Ok(_) => {}
            Err(e) => debug!("discovery solve at lambda = {lambda:.4} failed: {e}"),
        }
    }

    fn step(&mut self, lambda: f64, prev_lambda: Option<f64>, births: &mut Vec<(f64, Vec<f64>)>) -> Result<()> {
        let nf = self.d.num_free();
        let mut found: Vec<Vec<f64>> = Vec::new();
        let previous: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|t| t.samples.last().map_or_else(|| vec![0.0; nf], |s| s.1.clone()))
            .collect();

        for k in 0..self.tracks.len() {
            if !self.tracks[k].active {
                continue;
            }
            if self.tracks[k].trivial {
                let zero = vec![0.0; nf];
                self.tracks[k].samples.push((lambda, zero.clone()));
                found.push(zero);
                continue;
            }
            let prev = &previous[k];
            match newton_free(self.d, prev, lambda, &self.opts.newton, &found) {
                Ok(res) => {
                    let norm = self.d.h1_norm_free(&res.u);
                    let jump = self.dist(&res.u, prev);
                    if norm > 1e-8 && jump <= self.d.h1_norm_free(prev) {
                        found.push(res.u.clone());
                        self.tracks[k].samples.push((lambda, res.u));
                    } else {
                        debug!("branch {k} left its path at lambda = {lambda:.4}");
                        self.tracks[k].active = false;
                    }
                }
                Err(e) => {
                    debug!("branch {k} ends at lambda = {lambda:.4}: {e}");
                    self.tracks[k].active = false;
                }
            }
        }

        // partners of continued solutions
        let continued: Vec<Vec<f64>> = found.clone();
        for u in continued.iter().filter(|u| u.iter().any(|&x| x != 0.0)) {
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            if self.is_new(&neg, &found) && self.tracks.len() < self.max_branches {
                found.push(neg.clone());
                self.tracks.push(Track {
                    samples: vec![(lambda, neg)],
                    active: true,
                    trivial: false,
                });
            }
        }

        // discovery from the previous step's solutions
        for prev in previous.iter().filter(|u| u.iter().any(|&x| x != 0.0)) {
            self.try_discover(prev, lambda, &mut found);
        }

        // discovery from eigenfunction perturbations of the trivial branch
        let fu0 = self.d.jacobian_free(&vec![0.0; nf], lambda);
        let n_modes = self.opts.n_modes.min(nf);
        let eig_opts = EigenOptions {
            tol: 1e-9,
            ..EigenOptions::default()
        };
        let pairs = smallest_eigenpairs_with(&fu0, self.d.mass_free(), n_modes, &eig_opts)?;
        for p in &pairs {
            if let Some(pl) = prev_lambda {
                if p.value <= 0.0 && p.value > -(lambda - pl) {
                    births.push((lambda + p.value, p.vector.clone()));
                }
            }
            if p.value.abs() < self.opts.seed_window {
                let scale = self.opts.seed_eps / self.d.h1_norm_free(&p.vector);
                for sign in [1.0, -1.0] {
                    let seed: Vec<f64> = p.vector.iter().map(|x| sign * scale * x).collect();
                    self.try_discover(&seed, lambda, &mut found);
                }
            }
        }
        Ok(())
    }

    fn to_branch(&self, t: &Track) -> Branch {
        Branch {
            samples: t
                .samples
                .iter()
                .map(|(l, u)| {
                    let u = self.d.extend(u);
                    Sample {
                        lambda: *l,
                        diagnostic: self.opts.diagnostic.evaluate(self.d, &u),
                        u,
                        is_fold: false,
                    }
                })
                .collect(),
            fold_points: Vec::new(),
            terminated_early: false,
        }
    }
}

fn refine_births(d: &Discretization, raw: Vec<(f64, Vec<f64>)>, ms: &MsOptions) -> Vec<Birth> {
    let mut located: Vec<(f64, bool)> = raw
        .into_iter()
        .map(|(estimate, phi)| {
            let scale = d.h1_norm_free(&phi);
            let guess = FreeState {
                u: vec![0.0; d.num_free()],
                lambda: estimate,
                phi: phi.iter().map(|x| x / scale).collect(),
            };
            match moore_spence::solve_free(d, &guess, ms) {
                Ok(rep) => (rep.state.lambda, true),
                Err(e) => {
                    warn!("birth near lambda = {estimate:.6} not refined: {e}");
                    (estimate, false)
                }
            }
        })
        .collect();
    located.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut births: Vec<Birth> = Vec::new();
    for (lambda, refined) in located {
        match births.last_mut() {
            Some(b) if (b.lambda - lambda).abs() <= 1e-6 * (1.0 + lambda.abs()) => {
                b.multiplicity += 1;
                b.refined &= refined;
            }
            _ => births.push(Birth {
                lambda,
                multiplicity: 1,
                refined,
            }),
        }
    }
    births
}

/// Linear interpolation of a traced path at `lambda` between consecutive samples.
fn path_distance(d: &Discretization, path: &[Sample], lambda: f64, u: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for w in path.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (lo, hi) = (a.lambda.min(b.lambda), a.lambda.max(b.lambda));
        if lambda < lo || lambda > hi || hi == lo {
            continue;
        }
        let s = (lambda - a.lambda) / (b.lambda - a.lambda);
        let interp: Vec<f64> = d
            .restrict(&a.u)
            .iter()
            .zip(d.restrict(&b.u))
            .map(|(x, y)| x + s * (y - x))
            .collect();
        let e: Vec<f64> = interp.iter().zip(u).map(|(x, y)| x - y).collect();
        best = best.min(d.h1_norm_free(&e));
    }
    best
}

/// Traces each nontrivial branch back from its first sample and merges the
/// branch pieces that the path runs into.
fn complement(
    d: &Discretization,
    mut branches: Vec<Branch>,
    window: (f64, f64),
    c: &ComplementOptions,
    diagnostic: &Diagnostic,
    newton_tol: f64,
) -> Vec<Branch> {
    let opts = ArclengthOptions {
        tol: newton_tol,
        lambda_window: Some(window),
        min_norm: Some(c.min_norm),
        diagnostic: diagnostic.clone(),
        ..ArclengthOptions::default()
    };
    let mut absorbed = vec![false; branches.len()];
    for b in 0..branches.len() {
        if absorbed[b] || branches[b].is_trivial() {
            continue;
        }
        let first = branches[b].samples[0].clone();
        let path = match arclength_free(d, &d.restrict(&first.u), first.lambda, -c.ds.abs(), c.max_steps, &opts) {
            Ok(p) => p,
            Err(e) => {
                warn!("arclength complement of branch {b} failed: {e}");
                continue;
            }
        };
        let mut path = path;
        path.samples
            .retain(|s| s.lambda >= window.0 - 1e-12 && s.lambda <= window.1 + 1e-12);
        let fold_at = path.samples.iter().position(|s| s.is_fold);
        let mut partner = None;
        if let Some(f) = fold_at {
            for (k, other) in branches.iter().enumerate() {
                if k == b || absorbed[k] || other.is_trivial() {
                    continue;
                }
                let s0 = &other.samples[0];
                let u0 = d.restrict(&s0.u);
                let tol = 0.05 * d.h1_norm_free(&u0) + 1e-3;
                if path_distance(d, &path.samples[f..], s0.lambda, &u0) <= tol {
                    partner = Some(k);
                    break;
                }
            }
        }

        let end_lambda = path.samples.last().map(|s| s.lambda).unwrap_or(first.lambda);
        let mut merged = Vec::new();
        if let Some(k) = partner {
            absorbed[k] = true;
            let beyond: Vec<Sample> = branches[k]
                .samples
                .iter()
                .filter(|s| s.lambda > end_lambda)
                .cloned()
                .collect();
            merged.extend(beyond.into_iter().rev());
            info!("branch {k} joined to branch {b} through a fold");
        }
        merged.extend(path.samples.iter().skip(1).rev().cloned());
        merged.append(&mut branches[b].samples);
        branches[b].samples = merged;
        branches[b].fold_points.extend(path.fold_points);
    }
    branches
        .into_iter()
        .zip(absorbed)
        .filter(|(_, a)| !a)
        .map(|(b, _)| b)
        .collect()
}

pub fn deflated_continuation(
    mesh: &TriMesh,
    lambda_start: f64,
    lambda_end: f64,
    dlambda: f64,
    max_branches: usize,
) -> Result<Diagram> {
    deflated_continuation_with(mesh, lambda_start, lambda_end, dlambda, max_branches, &DcOptions::default())
}

/// Sweeps lambda from `lambda_start` to `lambda_end`, continuing known branches
/// and discovering new ones by deflation, then locates the bifurcations off
/// the trivial branch.
pub fn deflated_continuation_with(
    mesh: &TriMesh,
    lambda_start: f64,
    lambda_end: f64,
    dlambda: f64,
    max_branches: usize,
    opts: &DcOptions,
) -> Result<Diagram> {
    if !(dlambda > 0.0 && dlambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda step must be positive, got {dlambda}")));
    }
    if !(lambda_end >= lambda_start) {
        return Err(Error::InvalidArgument(format!(
            "lambda range [{lambda_start}, {lambda_end}] is empty"
        )));
    }
    if max_branches == 0 {
        return Err(Error::InvalidArgument("max_branches must be at least 1".into()));
    }
    let d = Discretization::new(mesh);
    if d.num_free() == 0 {
        return Err(Error::EmptyFreeSet);
    }

    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let l = lambda_start + k as f64 * dlambda;
        if l >= lambda_end - 1e-12 * dlambda {
            grid.push(lambda_end);
            break;
        }
        grid.push(l);
        k += 1;
    }

    let mut sweep = Sweep {
        d: &d,
        opts,
        max_branches,
        tracks: vec![Track {
            samples: Vec::new(),
            active: true,
            trivial: true,
        }],
    };
    // the trivial track starts empty; its first sample is added by the first step
    let mut raw_births = Vec::new();
    let mut prev = None;
    for &lambda in &grid {
        sweep.step(lambda, prev, &mut raw_births)?;
        prev = Some(lambda);
    }

    let mut branches: Vec<Branch> = sweep.tracks.iter().map(|t| sweep.to_branch(t)).collect();
    if let Some(c) = &opts.complement {
        branches = complement(
            &d,
            branches,
            (lambda_start, lambda_end),
            c,
            &opts.diagnostic,
            opts.newton.tol,
        );
    }
    let births = refine_births(&d, raw_births, &opts.ms);
    info!(
        "diagram: {} branches, births at {:?}",
        branches.len(),
        births.iter().map(|b| b.lambda).collect::<Vec<_>>()
    );
    Ok(Diagram {
        branches,
        lambda_range: (lambda_start, lambda_end),
        diagnostic: opts.diagnostic.clone(),
        births,
    })
}
