use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use branchctl::assembly::Discretization;
use branchctl::continuation::{deflated_continuation_with, newton_free, DcOptions, NewtonOptions};
use branchctl::mesh::{gen_rounded_square, gen_unit_disk, write_mesh};
use branchctl::moore_spence::{initialize_free, BranchPointState, MsOptions};
use branchctl::shape::{objective, optimize_with, OptimizeOptions};
use branchctl::sparse::smallest_eigenpairs;
use branchctl::TriMesh;

use crate::config::{BranchSelector, RunConfig};
use crate::svg;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) => m,
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn solver<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Solver(e.to_string())
}

fn io<E: std::fmt::Display>(what: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Solver(format!("cannot write {}: {e}", what.display()))
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub lambda_final: Option<f64>,
    pub objective_final: Option<f64>,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub wall_time_s: f64,
}

impl Summary {
    fn empty(start: Instant) -> Self {
        Summary {
            lambda_final: None,
            objective_final: None,
            iterations: 0,
            accepted_steps: 0,
            rejected_steps: 0,
            wall_time_s: start.elapsed().as_secs_f64(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(solver)?;
    fs::write(path, text + "\n").map_err(io(path))
}

/// Summary for commands that produce a single file: written beside it.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    out.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Outcome {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(io(p)),
        _ => Ok(()),
    }
}

fn newton_options(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions {
        tol: cfg.solver.newton_tol,
        max_iter: cfg.solver.newton_max_iter,
        ..NewtonOptions::default()
    }
}

fn ms_options(cfg: &RunConfig) -> MsOptions {
    MsOptions {
        tol: cfg.solver.ms_tol,
        max_iter: cfg.solver.ms_max_iter,
        ..MsOptions::default()
    }
}

/// Validated config, built mesh and prepared output directory.
struct Prepared {
    cfg: RunConfig,
    mesh: TriMesh,
    out: PathBuf,
}

fn prepare(cfg: RunConfig, needs_target: bool) -> Result<Prepared, Failure> {
    cfg.validate().map_err(Failure::Config)?;
    if needs_target {
        cfg.require_target().map_err(Failure::Config)?;
    }
    let mesh = cfg.build_mesh().map_err(Failure::Config)?;
    let out = cfg.output.clone();
    fs::create_dir_all(&out).map_err(io(&out))?;
    info!(
        "mesh: {} vertices, {} triangles, checksum {}",
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.checksum()
    );
    Ok(Prepared { cfg, mesh, out })
}

pub struct MeshRequest {
    pub disk: bool,
    pub h: f64,
    pub edge: f64,
    pub radius: f64,
    pub out: PathBuf,
}

pub fn mesh(req: &MeshRequest) -> Outcome {
    let start = Instant::now();
    if !(req.h > 0.0 && req.h.is_finite()) {
        return Err(Failure::Config(format!("--h must be positive, got {}", req.h)));
    }
    let mesh = if req.disk {
        gen_unit_disk(req.h)
    } else {
        gen_rounded_square(req.edge, req.radius, req.h)
    }
    .map_err(|e| Failure::Config(e.to_string()))?;
    ensure_parent(&req.out)?;
    write_mesh(&mesh, &req.out).map_err(io(&req.out))?;
    info!(
        "wrote {} ({} vertices, {} triangles)",
        req.out.display(),
        mesh.num_vertices(),
        mesh.num_triangles()
    );
    write_json(&sidecar(&req.out), &Summary::empty(start))
}

#[derive(Serialize)]
struct BirthRecord {
    lambda: f64,
    multiplicity: usize,
    refined: bool,
}

pub fn diagram(cfg: RunConfig) -> Outcome {
    let start = Instant::now();
    let Prepared { cfg, mesh, out } = prepare(cfg, false)?;
    write_json(&out.join("config.json"), &cfg)?;
    let dc = &cfg.diagram;
    let opts = DcOptions {
        newton: newton_options(&cfg),
        diagnostic: dc.diagnostic.to_diagnostic(),
        complement: if dc.arclength { DcOptions::default().complement } else { None },
        ms: ms_options(&cfg),
        ..DcOptions::default()
    };
    let diagram = deflated_continuation_with(&mesh, dc.lambda_start, dc.lambda_end, dc.dlambda, dc.max_branches, &opts)
        .map_err(solver)?;
    let csv_path = out.join("diagram.csv");
    diagram.write_csv(&csv_path).map_err(io(&csv_path))?;
    let births: Vec<BirthRecord> = diagram
        .births
        .iter()
        .map(|b| BirthRecord {
            lambda: b.lambda,
            multiplicity: b.multiplicity,
            refined: b.refined,
        })
        .collect();
    write_json(&out.join("births.json"), &births)?;
    let first = diagram.first_birth();
    info!(
        "{} branches, births {:?}",
        diagram.branches.len(),
        births.iter().map(|b| b.lambda).collect::<Vec<_>>()
    );
    let steps = ((dc.lambda_end - dc.lambda_start) / dc.dlambda).ceil() as usize;
    let summary = Summary {
        lambda_final: first,
        objective_final: first.zip(cfg.target).map(|(l, t)| (l - t).powi(2)),
        iterations: steps,
        ..Summary::empty(start)
    };
    write_json(&out.join("summary.json"), &summary)
}

/// Solution at the seed parameter selected by the config.
fn seed_solution(cfg: &RunConfig, d: &Discretization) -> Result<Vec<f64>, Failure> {
    let lambda = cfg.seed.lambda;
    match cfg.seed.branch {
        BranchSelector::Trivial => Ok(vec![0.0; d.num_free()]),
        BranchSelector::Mode { index, amplitude } => {
            let zero = vec![0.0; d.num_free()];
            let pairs = smallest_eigenpairs(&d.jacobian_free(&zero, lambda), d.mass_free(), index + 1).map_err(solver)?;
            let v = &pairs[index].vector;
            let peak = v.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
            let guess: Vec<f64> = v.iter().map(|x| amplitude * x / peak).collect();
            let r = newton_free(d, &guess, lambda, &newton_options(cfg), &[]).map_err(solver)?;
            if r.u.iter().all(|x| x.abs() < 1e-8) {
                warn!("mode seed collapsed onto the trivial branch");
            }
            Ok(r.u)
        }
    }
}

fn locate_state(cfg: &RunConfig, mesh: &TriMesh) -> Result<BranchPointState, Failure> {
    let d = Discretization::new(mesh);
    let u = seed_solution(cfg, &d)?;
    let s = initialize_free(&d, &u, cfg.seed.lambda, cfg.seed.n, &ms_options(cfg)).map_err(solver)?;
    Ok(s.to_state(&d))
}

pub fn locate(cfg: RunConfig) -> Outcome {
    let start = Instant::now();
    let Prepared { cfg, mesh, out } = prepare(cfg, false)?;
    write_json(&out.join("config.json"), &cfg)?;
    let state = locate_state(&cfg, &mesh)?;
    info!("branch point at lambda = {:.10}", state.lambda);
    write_json(&out.join("state.json"), &state)?;
    let summary = Summary {
        lambda_final: Some(state.lambda),
        objective_final: cfg.target.map(|t| objective(&state, t)),
        ..Summary::empty(start)
    };
    write_json(&out.join("summary.json"), &summary)
}

fn write_snapshot(out: &Path, k: usize, mesh: &TriMesh, state: &BranchPointState) -> Outcome {
    let m = out.join(format!("mesh_{k}.json"));
    write_mesh(mesh, &m).map_err(io(&m))?;
    write_json(&out.join(format!("state_{k}.json")), state)
}

pub fn optimize(cfg: RunConfig) -> Outcome {
    let start = Instant::now();
    let Prepared { cfg, mesh, out } = prepare(cfg, true)?;
    let target = cfg.require_target().map_err(Failure::Config)?;
    let o = &cfg.optimizer;
    let opts = OptimizeOptions {
        c_accept: cfg.c,
        tangle_tol: o.tangle_tol,
        inner_product: cfg.inner_product.clone(),
        initial_step: o.initial_step,
        step_floor: o.step_floor,
        max_iter: o.max_iter,
        ms: ms_options(&cfg),
        lbfgs_memory: o.lbfgs_memory,
        taylor_check: o.taylor_check,
        ..OptimizeOptions::default()
    };
    write_json(&out.join("config.json"), &cfg)?;

    let state0 = locate_state(&cfg, &mesh)?;
    info!(
        "initial branch point at lambda = {:.10}, objective {:.3e}",
        state0.lambda,
        objective(&state0, target)
    );
    write_snapshot(&out, 0, &mesh, &state0)?;

    let mut k = 0;
    let mut snapshot_error = None;
    let report = optimize_with(&mesh, &state0, target, cfg.eps, &opts, |it| {
        k += 1;
        info!("step {k}: lambda = {:.10}, objective {:.3e}", it.state.lambda, it.objective_value);
        if snapshot_error.is_none() {
            snapshot_error = write_snapshot(&out, k, &it.mesh, &it.state).err();
        }
    })
    .map_err(solver)?;
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    if let Some(t) = &report.taylor {
        info!("taylor ratios {:?}, rate {:.3}", t.ratios, t.rate());
    }

    let it = &report.iterate;
    let hist_path = out.join("history.csv");
    let mut w = csv::Writer::from_path(&hist_path).map_err(io(&hist_path))?;
    w.write_record(["iteration", "objective", "step", "accepted", "reason"])
        .map_err(io(&hist_path))?;
    for h in &it.history {
        let reason = h.reason.map(|r| r.to_string()).unwrap_or_default();
        w.write_record([
            h.iteration.to_string(),
            h.objective.to_string(),
            h.step.to_string(),
            h.accepted.to_string(),
            reason,
        ])
        .map_err(io(&hist_path))?;
    }
    w.flush().map_err(io(&hist_path))?;

    let final_mesh = out.join("final_mesh.json");
    write_mesh(&it.mesh, &final_mesh).map_err(io(&final_mesh))?;
    write_json(&out.join("final_state.json"), &it.state)?;
    let summary = Summary {
        lambda_final: Some(it.state.lambda),
        objective_final: Some(it.objective_value),
        iterations: it.history.len(),
        accepted_steps: report.accepted_steps,
        rejected_steps: report.rejected_steps,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    match report.failure {
        Some(e) => Err(Failure::Solver(format!(
            "optimizer stopped at lambda = {} (objective {:.3e}): {e}",
            it.state.lambda, it.objective_value
        ))),
        None => {
            info!(
                "converged to lambda = {:.10} after {} accepted steps",
                it.state.lambda, report.accepted_steps
            );
            Ok(())
        }
    }
}

pub fn plot(input: &Path, out: &Path) -> Outcome {
    let start = Instant::now();
    let text = fs::read_to_string(input).map_err(|e| Failure::Config(format!("cannot read {}: {e}", input.display())))?;
    let doc = svg::render_csv(&text).map_err(Failure::Config)?;
    ensure_parent(out)?;
    fs::write(out, doc).map_err(io(out))?;
    write_json(&sidecar(out), &Summary::empty(start))
}
