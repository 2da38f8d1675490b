//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits with a failure status if any criterion fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use branchctl::assembly::{self, Discretization};
use branchctl::continuation::{
    arclength_continue_with, deflated_continuation_with, newton_free, ArclengthOptions, DcOptions, NewtonOptions,
};
use branchctl::mesh::{gen_rounded_square, gen_unit_disk};
use branchctl::moore_spence::{initialize_free, ms_initialize, ms_jacobian, ms_residual, BranchPointState, MsOptions};
use branchctl::shape::{
    accept_step, domain_integral, domain_integral_gradient, optimize_with, riesz_update, shape_gradient, taylor_test,
    InnerProductSpec, OptimizeOptions,
};
use branchctl::{Field, TriMesh, VertexField};

const J01: f64 = 2.404825557695773;
const J31: f64 = 6.380161895923984;

type Check = Result<String, String>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn phi_normalized(mesh: &TriMesh, s: &BranchPointState) -> std::result::Result<f64, String> {
    let n = assembly::h1_norm(mesh, &s.phi).map_err(fail)?;
    Ok((n * n - 1.0).abs())
}

fn branch_point_error(h: f64) -> std::result::Result<(f64, f64), String> {
    let mesh = gen_unit_disk(h).map_err(fail)?;
    let s = ms_initialize(&mesh, &Field::zeros(mesh.num_vertices()), 1.3, 5).map_err(fail)?;
    if phi_normalized(&mesh, &s)? > 1e-9 {
        return Err("phi not normalized".into());
    }
    let exact = 0.25 * J01 * J01;
    Ok((s.lambda, (s.lambda - exact).abs() / exact))
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let (l1, e1) = branch_point_error(0.05)?;
    let (_, e2) = branch_point_error(0.025)?;
    let secs = t.elapsed().as_secs_f64();
    check(
        e1 <= 0.01 && e1 / e2 >= 3.0 && secs <= 60.0,
        format!(
            "lambda = {l1:.6} (rel. error {e1:.2e}); h/2 reduces error by {:.2}; {secs:.1} s",
            e1 / e2
        ),
    )
}

fn criterion_2() -> Check {
    let mesh = gen_unit_disk(0.05).map_err(fail)?;
    let s = ms_initialize(&mesh, &Field::zeros(mesh.num_vertices()), 9.5, 5).map_err(fail)?;
    let exact = 0.25 * J31 * J31;
    let rel = (s.lambda - exact).abs() / exact;
    check(
        rel <= 0.02 && phi_normalized(&mesh, &s)? <= 1e-9,
        format!("lambda = {:.5}, reference {exact:.5}, rel. error {rel:.2e}", s.lambda),
    )
}

fn criterion_3() -> Check {
    let mesh = gen_rounded_square(2.0, 0.1, 0.05).map_err(fail)?;
    let opts = DcOptions {
        complement: None,
        ..DcOptions::default()
    };
    let diagram = deflated_continuation_with(&mesh, 0.0, 6.0, 0.1, 12, &opts).map_err(fail)?;
    let births: Vec<f64> = diagram.births.iter().map(|b| b.lambda).collect();
    let reference = [1.2337, 3.0843, 4.9348];
    if births.len() < 3 {
        return Err(format!("only {} births found: {births:?}", births.len()));
    }
    let errs: Vec<f64> = reference
        .iter()
        .zip(&births)
        .map(|(r, b)| (b - r).abs() / r)
        .collect();
    check(
        errs.iter().all(|&e| e <= 0.08),
        format!(
            "births {:.4?} (multiplicities {:?}), rel. errors {:.2?}",
            &births[..3],
            diagram.births.iter().take(3).map(|b| b.multiplicity).collect::<Vec<_>>(),
            errs
        ),
    )
}

fn first_branch_point(h: f64) -> std::result::Result<(TriMesh, BranchPointState), String> {
    let mesh = gen_unit_disk(h).map_err(fail)?;
    let s = ms_initialize(&mesh, &Field::zeros(mesh.num_vertices()), 1.3, 5).map_err(fail)?;
    Ok((mesh, s))
}

fn criterion_4() -> Check {
    let t = Instant::now();
    let (mesh, state) = first_branch_point(0.05)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let w = VertexField::from_fn(mesh.num_vertices(), |_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let report = taylor_test(&mesh, &state, 3.0, &w, 1e-3, 4, &MsOptions::default()).map_err(fail)?;
        ratios.extend(report.ratios);
    }
    let secs = t.elapsed().as_secs_f64();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    check(
        lo >= 3.5 && hi <= 4.5 && secs <= 300.0,
        format!("{} contraction factors in [{lo:.3}, {hi:.3}]; {secs:.1} s", ratios.len()),
    )
}

fn criterion_5() -> Check {
    let f = |p: [f64; 2]| p[0] * p[0] + 2.25 * p[1] * p[1] - 1.0;
    let grad = |p: [f64; 2]| [2.0 * p[0], 4.5 * p[1]];
    let mesh = gen_unit_disk(0.05).map_err(fail)?;
    let j0 = domain_integral(&mesh, f);
    let g = domain_integral_gradient(&mesh, f, grad);
    let dt = riesz_update(&mesh, &g, &InnerProductSpec::H1Vector).map_err(fail)?;
    let moved = mesh.apply_displacement(&dt.scaled(0.5)).map_err(fail)?;
    let j1 = domain_integral(&moved, f);
    check(
        (j0 + 0.59).abs() <= 0.05 && (j1 + 1.01).abs() <= 0.05,
        format!("J: {j0:.4} -> {j1:.4}"),
    )
}

struct ControlRun {
    mesh: TriMesh,
    lambda: f64,
}

fn control(target: f64, eps: f64, h: f64) -> std::result::Result<(ControlRun, String, bool), String> {
    let t = Instant::now();
    let (mesh, state) = first_branch_point(h)?;
    let mut worst_phi = 0.0f64;
    let report = optimize_with(&mesh, &state, target, eps, &OptimizeOptions::default(), |it| {
        if let Ok(e) = phi_normalized(&it.mesh, &it.state) {
            worst_phi = worst_phi.max(e);
        }
    })
    .map_err(fail)?;
    let secs = t.elapsed().as_secs_f64();
    let it = &report.iterate;
    let accepted: Vec<f64> = it.history.iter().filter(|h| h.accepted).map(|h| h.objective).collect();
    let monotone = accepted.windows(2).all(|w| w[1] <= w[0]);
    let ok = report.failure.is_none()
        && it.objective_value <= eps
        && report.accepted_steps <= 60
        && monotone
        && worst_phi <= 1e-9
        && secs <= 900.0;
    let detail = format!(
        "lambda* = {target}: J = {:.2e} after {} accepted / {} rejected steps, lambda = {:.9}{}; {secs:.1} s",
        it.objective_value,
        report.accepted_steps,
        report.rejected_steps,
        it.state.lambda,
        report.failure.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
    );
    Ok((
        ControlRun {
            mesh: it.mesh.clone(),
            lambda: it.state.lambda,
        },
        detail,
        ok,
    ))
}

fn criteria_6_7() -> Vec<(&'static str, Check)> {
    let (run, detail, ok) = match control(3.0, 1e-10, 0.07) {
        Ok(r) => r,
        Err(e) => return vec![("6", Err(e.clone())), ("7", Err(e))],
    };
    let c6 = check(ok, detail);
    let c7 = (|| {
        let opts = DcOptions::default();
        let diagram = deflated_continuation_with(&run.mesh, 0.0, 3.5, 0.1, 8, &opts).map_err(fail)?;
        let birth = diagram.first_birth().ok_or("no birth found")?;
        let rel = (birth - 3.0).abs() / 3.0;
        check(
            rel <= 0.01 && diagram.nontrivial_branches().count() >= 2,
            format!(
                "first birth {birth:.6} (optimized lambda {:.6}), {} nontrivial branches",
                run.lambda,
                diagram.nontrivial_branches().count()
            ),
        )
    })();
    vec![("6", c6), ("7", c7)]
}

fn extended_control() -> Check {
    match control(20.0, 1e-11, 0.07) {
        Ok((_, detail, ok)) => check(ok, detail),
        Err(e) => Err(e),
    }
}

fn criterion_8() -> Check {
    let mesh = gen_unit_disk(0.07).map_err(fail)?;
    let d = Discretization::new(&mesh);
    let k = d.stiffness_free().scale(assembly::DIFFUSION);
    let mode = branchctl::sparse::smallest_eigenpairs(&k, d.mass_free(), 1).map_err(fail)?[0]
        .vector
        .clone();
    let peak = mode.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
    let seed: Vec<f64> = mode.iter().map(|x| 1.2 * x / peak).collect();
    let u = d.extend(&newton_free(&d, &seed, 2.0, &NewtonOptions::default(), &[]).map_err(fail)?.u);
    let flip = accept_step(&u, &u.scaled(-1.0), &mesh, 0.1).map_err(fail)?;
    let collapse = accept_step(&u, &Field::zeros(u.len()), &mesh, 0.1).map_err(fail)?;
    let same = accept_step(&u, &u, &mesh, 0.1).map_err(fail)?;

    // push one interior vertex across the opposite edge of a triangle
    let t = (0..mesh.num_triangles())
        .find(|&t| mesh.triangles()[t].iter().all(|&v| !d.dirichlet_mask()[v]))
        .ok_or("no interior triangle")?;
    let [a, b, c] = mesh.triangles()[t];
    let x = mesh.vertices();
    let mid = [0.5 * (x[b][0] + x[c][0]), 0.5 * (x[b][1] + x[c][1])];
    let mut disp = VertexField::zeros(mesh.num_vertices());
    disp[a] = [2.0 * (mid[0] - x[a][0]), 2.0 * (mid[1] - x[a][1])];
    let ratio = mesh.min_jacobian_ratio(&disp).map_err(fail)?;
    check(
        !flip && !collapse && same && ratio < 0.0 && mesh.apply_displacement(&disp).is_err(),
        format!("flip accepted: {flip}, collapse accepted: {collapse}, flipped-triangle ratio {ratio:.3}"),
    )
}

fn criterion_9() -> Check {
    let mesh = gen_unit_disk(0.05).map_err(fail)?;
    let d = Discretization::new(&mesh);
    let k = d.stiffness_free().scale(assembly::DIFFUSION);
    let mode = branchctl::sparse::smallest_eigenpairs(&k, d.mass_free(), 1).map_err(fail)?[0]
        .vector
        .clone();
    let peak = mode.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
    let seed: Vec<f64> = mode.iter().map(|x| 1.2 * x / peak).collect();
    let u = newton_free(&d, &seed, 2.0, &NewtonOptions::default(), &[]).map_err(fail)?.u;
    let opts = ArclengthOptions {
        lambda_window: Some((0.0, 3.0)),
        min_norm: Some(1e-2),
        ..ArclengthOptions::default()
    };
    let branch = arclength_continue_with(&mesh, &d.extend(&u), 2.0, -0.05, 400, &opts).map_err(fail)?;
    let birth = 0.25 * J01 * J01;
    if branch.fold_points.len() != 1 {
        return Err(format!("{} folds flagged", branch.fold_points.len()));
    }
    let fold = &branch.fold_points[0];
    // independent location of the same fold from the augmented system
    let s = initialize_free(&d, &d.restrict(&fold.u), fold.lambda, 1, &MsOptions::default()).map_err(fail)?;
    let bordered_ok = ms_jacobian(&mesh, &s.to_state(&d))
        .and_then(|j| branchctl::sparse::LuFactorization::new(&j))
        .is_ok();
    let dl = (fold.lambda - s.lambda).abs();
    check(
        fold.lambda < birth && dl <= 1e-4 && bordered_ok && s.u.iter().any(|&x| x != 0.0),
        format!(
            "fold at lambda = {:.6}, augmented-system fold {:.6}, |dlambda| = {dl:.1e}",
            fold.lambda, s.lambda
        ),
    )
}

fn fd_order(f: impl Fn(f64) -> f64) -> f64 {
    (f(1e-3) / f(5e-4)).log2()
}

fn criterion_10() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    let mesh = gen_unit_disk(0.1).map_err(fail)?;
    let d = Discretization::new(&mesh);
    let nv = mesh.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mask = d.dirichlet_mask().to_vec();
    let u = Field::from_fn(nv, |i| if mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) });
    let v = Field::from_fn(nv, |i| if mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) });

    // oddness and the trivial branch
    let r = assembly::residual(&mesh, &u, 1.7).map_err(fail)?;
    let rm = assembly::residual(&mesh, &u.scaled(-1.0), 1.7).map_err(fail)?;
    let odd = r.axpy(1.0, &rm).max_abs();
    let triv = assembly::residual(&mesh, &Field::zeros(nv), 1.7).map_err(fail)?.max_abs();
    ok &= odd <= 1e-12 && triv == 0.0;
    notes.push(format!("oddness {odd:.1e}"));

    // residual -> jacobian -> second derivative, central differences
    let j = assembly::jacobian_u(&mesh, &u, 1.7).map_err(fail)?;
    let jv = j.mul_vec(&v);
    let o1 = fd_order(|e| {
        let p = assembly::residual(&mesh, &u.axpy(e, &v), 1.7).unwrap();
        let m = assembly::residual(&mesh, &u.axpy(-e, &v), 1.7).unwrap();
        norm(&p.sub(&m).scaled(0.5 / e).sub(&Field(jv.clone())))
    });
    let h = assembly::second_derivative_matrix(&mesh, &u, &v).map_err(fail)?;
    let hv = h.mul_vec(&v);
    let o2 = fd_order(|e| {
        let p = assembly::jacobian_u(&mesh, &u.axpy(e, &v), 1.7).unwrap().mul_vec(&v);
        let m = assembly::jacobian_u(&mesh, &u.axpy(-e, &v), 1.7).unwrap().mul_vec(&v);
        let fd: Vec<f64> = p.iter().zip(&m).zip(&hv).map(|((a, b), c)| (a - b) / (2.0 * e) - c).collect();
        norm(&fd)
    });
    // augmented system
    let s = BranchPointState {
        u: u.scaled(0.3),
        lambda: 1.7,
        phi: v.clone(),
    };
    let dir_u = Field::from_fn(nv, |i| if mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) });
    let dir_p = Field::from_fn(nv, |i| if mask[i] { 0.0 } else { rng.gen_range(-1.0..1.0) });
    let dir_l = 0.7;
    let jm = ms_jacobian(&mesh, &s).map_err(fail)?;
    let mut dir = d.restrict(&dir_u);
    dir.push(dir_l);
    dir.extend(d.restrict(&dir_p));
    let jd = jm.mul_vec(&dir);
    let o3 = fd_order(|e| {
        let at = |e: f64| BranchPointState {
            u: s.u.axpy(e, &dir_u),
            lambda: s.lambda + e * dir_l,
            phi: s.phi.axpy(e, &dir_p),
        };
        let p = ms_residual(&mesh, &at(e)).unwrap();
        let m = ms_residual(&mesh, &at(-e)).unwrap();
        let fd: Vec<f64> = p.iter().zip(&m).zip(&jd).map(|((a, b), c)| (a - b) / (2.0 * e) - c).collect();
        norm(&fd)
    });
    ok &= o1 > 1.8 && o2 > 1.8 && o3 > 1.8;
    notes.push(format!("FD orders {o1:.2}/{o2:.2}/{o3:.2}"));

    // shape gradient against a central difference of the objective
    let (bm, bs) = first_branch_point(0.1)?;
    let g = shape_gradient(&bm, &bs, 3.0).map_err(fail)?;
    let w = VertexField::from_fn(bm.num_vertices(), |_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
    let t = taylor_test(&bm, &bs, 3.0, &w, 2e-3, 2, &MsOptions::default()).map_err(fail)?;
    ok &= t.rate() > 1.8 && g.max_norm() > 0.0;
    notes.push(format!("Taylor order {:.2}", t.rate()));

    // dilation covariance of the first two births
    let scale = 0.8;
    let opts = DcOptions {
        complement: None,
        ..DcOptions::default()
    };
    let unit = deflated_continuation_with(&mesh, 0.0, 4.0, 0.1, 6, &opts).map_err(fail)?;
    let small = deflated_continuation_with(&mesh.scaled(scale).map_err(fail)?, 0.0, 6.5, 0.1, 6, &opts).map_err(fail)?;
    let pairs: Vec<(f64, f64)> = unit
        .births
        .iter()
        .zip(&small.births)
        .take(2)
        .map(|(a, b)| (a.lambda, b.lambda * scale * scale))
        .collect();
    let cov = pairs.len() == 2 && pairs.iter().all(|(a, b)| (a - b).abs() <= 0.01 * a);
    ok &= cov;
    notes.push(format!("dilation births {pairs:.4?}"));

    // normalization of converged augmented-system states
    let mut worst = 0.0f64;
    for guess in [1.3, 3.5, 6.0] {
        let st = ms_initialize(&mesh, &Field::zeros(nv), guess, 5).map_err(fail)?;
        worst = worst.max(phi_normalized(&mesh, &st)?);
    }
    let ms_d = Discretization::new(&mesh);
    let mode = branchctl::sparse::smallest_eigenpairs(
        &ms_d.stiffness_free().scale(assembly::DIFFUSION),
        ms_d.mass_free(),
        1,
    )
    .map_err(fail)?[0]
        .vector
        .clone();
    let peak = mode.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
    let seed: Vec<f64> = mode.iter().map(|x| 1.2 * x / peak).collect();
    let un = newton_free(&ms_d, &seed, 1.3, &NewtonOptions::default(), &[]).map_err(fail)?.u;
    let st = initialize_free(&ms_d, &un, 1.3, 3, &MsOptions::default()).map_err(fail)?;
    worst = worst.max(phi_normalized(&mesh, &st.to_state(&ms_d))?);
    ok &= worst <= 1e-9;
    notes.push(format!("max |phi norm^2 - 1| {worst:.1e}"));

    check(ok, notes.join("; "))
}

type Job = fn() -> Vec<(&'static str, Check)>;

const NAMES: [(&str, &str); 11] = [
    ("1", "branch point on the disk, O(h^2) convergence"),
    ("2", "higher branch point on the disk"),
    ("3", "rounded-square birth spectrum"),
    ("4", "shape-gradient Taylor test"),
    ("5", "one smoothed descent step on a domain integral"),
    ("6", "control to lambda* = 3"),
    ("7", "diagram on the optimized mesh"),
    ("8", "rejection rules and tangling"),
    ("9", "fold detection along the first branch"),
    ("10", "invariant suites"),
    ("6x", "extended control to lambda* = 20 (informational)"),
];

fn main() {
    let start = Instant::now();
    // timed alone so that its runtime bound is not distorted by the others
    let mut results = vec![("1", criterion_1())];
    let jobs: Vec<Job> = vec![
        || vec![("2", criterion_2())],
        || vec![("3", criterion_3())],
        || vec![("4", criterion_4())],
        || vec![("5", criterion_5())],
        criteria_6_7,
        || vec![("8", criterion_8())],
        || vec![("9", criterion_9())],
        || vec![("10", criterion_10())],
        || vec![("6x", extended_control())],
    ];
    results.extend(std::thread::scope(|scope| {
        let handles: Vec<_> = jobs.iter().map(|job| scope.spawn(job)).collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().unwrap_or_else(|_| vec![("?", Err("criterion panicked".into()))]))
            .collect::<Vec<_>>()
    }));
    results.sort_by_key(|(id, _)| NAMES.iter().position(|(n, _)| n == id).unwrap_or(usize::MAX));

    let gating = |id: &str| id != "6x";
    let mut failed = 0;
    for (id, res) in &results {
        let name = NAMES.iter().find(|(n, _)| n == id).map_or("unknown", |(_, s)| *s);
        let (tag, detail) = match res {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += usize::from(gating(id));
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} [{tag}] {name}: {detail}");
    }
    println!(
        "acceptance: {} of {} gating criteria passed in {:.1} s",
        results.iter().filter(|(id, r)| gating(id) && r.is_ok()).count(),
        results.iter().filter(|(id, _)| gating(id)).count(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
