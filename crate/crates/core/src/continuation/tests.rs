use super::*;
use crate::assembly::DIFFUSION;
use crate::error::Error;
use crate::mesh::{gen_unit_disk, TriMesh};
use crate::sparse::{norm2, smallest_eigenpairs};
use crate::testing::J01;

fn disk() -> TriMesh {
    gen_unit_disk(0.1).unwrap()
}

/// First Dirichlet mode scaled so that its peak value is `amplitude`.
fn first_mode(d: &Discretization, amplitude: f64) -> Vec<f64> {
    let k = d.stiffness_free().scale(DIFFUSION);
    let v = smallest_eigenpairs(&k, d.mass_free(), 1).unwrap()[0].vector.clone();
    let i = v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
    let s = amplitude / v[i];
    v.iter().map(|x| s * x).collect()
}

fn first_birth(d: &Discretization) -> f64 {
    let k = d.stiffness_free().scale(DIFFUSION);
    smallest_eigenpairs(&k, d.mass_free(), 1).unwrap()[0].value
}

#[test]
fn newton_stays_trivial_below_first_eigenvalue() {
    let mesh = disk();
    let zero = Field::zeros(mesh.num_vertices());
    let u = newton(&mesh, &zero, 1.0, 1e-10, 50, &[]).unwrap();
    assert_eq!(u.max_abs(), 0.0);

    let err = newton(&mesh, &zero, 1.0, 1e-10, 50, std::slice::from_ref(&zero)).unwrap_err();
    assert!(matches!(err, Error::DeflationSingularity { .. }));

    let d = Discretization::new(&mesh);
    let small = d.extend(&first_mode(&d, 1e-2));
    assert!(newton(&mesh, &small, 1.0, 1e-10, 50, &[zero]).is_err());
}

#[test]
fn newton_finds_nontrivial_solution_above_first_eigenvalue() {
    let mesh = disk();
    let d = Discretization::new(&mesh);
    let seed = first_mode(&d, 1.2);
    let u = newton(&mesh, &d.extend(&seed), 2.0, 1e-10, 50, &[Field::zeros(mesh.num_vertices())]).unwrap();
    let uf = d.restrict(&u);
    assert!(norm2(&d.residual_free(&uf, 2.0)) <= 1e-10);
    assert!(d.h1_norm_free(&uf) > 0.1);
    // same sign pattern as the positive first mode
    assert!(uf.iter().all(|&x| x >= -1e-12));

    let neg = u.scaled(-1.0);
    assert!(norm2(&d.residual_free(&d.restrict(&neg), 2.0)) <= 1e-10);
}

#[test]
fn deflation_rejects_known_solution_and_finds_partner() {
    let mesh = disk();
    let d = Discretization::new(&mesh);
    let opts = NewtonOptions::default();
    let u = newton_free(&d, &first_mode(&d, 1.2), 2.0, &opts, &[]).unwrap().u;
    let neg: Vec<f64> = u.iter().map(|x| -x).collect();
    let found = newton_free(&d, &first_mode(&d, -1.2), 2.0, &opts, &[vec![0.0; u.len()], u.clone()]).unwrap();
    let e: Vec<f64> = found.u.iter().zip(&neg).map(|(a, b)| a - b).collect();
    assert!(d.h1_norm_free(&e) < 1e-8);
}

#[test]
fn trivial_branch_has_no_folds() {
    let mesh = disk();
    let zero = Field::zeros(mesh.num_vertices());
    let b = arclength_continue(&mesh, &zero, 0.5, 0.1, 10).unwrap();
    assert_eq!(b.samples.len(), 11);
    assert!(b.fold_points.is_empty());
    assert!(!b.terminated_early);
    for (k, s) in b.samples.iter().enumerate() {
        assert!((s.lambda - (0.5 + 0.1 * k as f64)).abs() < 1e-9);
        assert_eq!(s.u.max_abs(), 0.0);
    }
    let back = arclength_continue(&mesh, &zero, 0.5, -0.1, 3).unwrap();
    assert!((back.samples.last().unwrap().lambda - 0.2).abs() < 1e-9);
}

#[test]
fn arclength_rejects_bad_input() {
    let mesh = disk();
    let zero = Field::zeros(mesh.num_vertices());
    assert!(matches!(
        arclength_continue(&mesh, &zero, 0.5, 0.0, 3),
        Err(Error::InvalidArgument(_))
    ));
    let d = Discretization::new(&mesh);
    let off = d.extend(&first_mode(&d, 0.3));
    assert!(arclength_continue(&mesh, &off, 2.0, 0.1, 3).is_err());
}

#[test]
fn backward_trace_finds_one_fold_below_birth() {
    let mesh = disk();
    let d = Discretization::new(&mesh);
    let u = newton_free(&d, &first_mode(&d, 1.2), 2.0, &NewtonOptions::default(), &[]).unwrap().u;
    let opts = ArclengthOptions {
        min_norm: Some(1e-2),
        lambda_window: Some((0.0, 3.0)),
        ..ArclengthOptions::default()
    };
    let b = arclength_continue_with(&mesh, &d.extend(&u), 2.0, -0.05, 400, &opts).unwrap();
    let birth = first_birth(&d);
    assert_eq!(b.fold_points.len(), 1);
    let fold = b.fold_points[0].lambda;
    assert!(fold < birth && fold > 0.5, "fold at {fold}, birth {birth}");
    assert_eq!(b.samples.iter().filter(|s| s.is_fold).count(), 1);
    // the trace ends on the small-amplitude branch approaching the birth
    let last = b.samples.last().unwrap();
    assert!((last.lambda - birth).abs() < 0.05, "{}", last.lambda);
    for s in &b.samples {
        assert!(norm2(&d.residual_free(&d.restrict(&s.u), s.lambda)) <= 1e-9);
    }
}

#[test]
fn deflated_continuation_disk() {
    let mesh = disk();
    let d = Discretization::new(&mesh);
    let diagram = deflated_continuation(&mesh, 0.0, 3.0, 0.1, 8).unwrap();
    let nontrivial: Vec<&Branch> = diagram.nontrivial_branches().collect();
    assert!(diagram.branches[0].is_trivial());
    assert_eq!(diagram.branches[0].samples.len(), 31);
    assert_eq!(nontrivial.len(), 2, "{:?}", diagram.births);

    let exact = 0.25 * J01 * J01;
    let birth = diagram.first_birth().unwrap();
    assert!((birth - first_birth(&d)).abs() < 1e-8);
    assert!((birth - exact).abs() / exact < 0.02);
    assert!(diagram.births[0].refined);

    // the pair is related by u -> -u and each carries its fold
    for b in &nontrivial {
        assert_eq!(b.fold_points.len(), 1);
        assert!(b.fold_points[0].lambda < birth);
        for s in &b.samples {
            let uf = d.restrict(&s.u);
            assert!(norm2(&d.residual_free(&uf, s.lambda)) <= 1e-9);
            let neg: Vec<f64> = uf.iter().map(|x| -x).collect();
            assert!(norm2(&d.residual_free(&neg, s.lambda)) <= 1e-9);
        }
    }
    let (a, b) = (&nontrivial[0].samples, &nontrivial[1].samples);
    let top = a.iter().map(|x| x.lambda).fold(f64::NEG_INFINITY, f64::max);
    assert!(top > 2.9 && top <= 3.0, "{top}");
    assert!(a.iter().all(|s| s.lambda >= 0.0));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x.lambda - y.lambda).abs() < 1e-8);
        assert!(x.u.axpy(1.0, &y.u).max_abs() < 1e-6);
    }

    let csv = diagram.to_csv();
    assert!(csv.starts_with("branch_id,lambda,diagnostic,is_fold\n"));
    assert_eq!(csv.lines().count(), 1 + diagram.branches.iter().map(|b| b.samples.len()).sum::<usize>());
}

#[test]
fn deflated_continuation_rejects_bad_ranges() {
    let mesh = disk();
    assert!(matches!(
        deflated_continuation(&mesh, 2.0, 1.0, 0.1, 4),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        deflated_continuation(&mesh, 0.0, 1.0, 0.0, 4),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn point_value_diagnostic_interpolates() {
    let mesh = disk();
    let d = Discretization::new(&mesh);
    let u = Field::from_fn(mesh.num_vertices(), |i| {
        let [x, y] = mesh.vertices()[i];
        1.0 + 2.0 * x - y
    });
    let v = Diagnostic::PointValue([0.3, -0.2]).evaluate(&d, &u);
    assert!((v - (1.0 + 0.6 + 0.2)).abs() < 1e-12);
    assert!(Diagnostic::PointValue([3.0, 0.0]).evaluate(&d, &u).is_nan());
}


