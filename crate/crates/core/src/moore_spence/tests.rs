use super::*;
use crate::continuation::{newton_free, NewtonOptions};
use crate::mesh::gen_unit_disk;
use crate::sparse::smallest_eigenpairs;
use crate::testing::{diff, norm, random_vec, rng, J01};

fn disk() -> (TriMesh, Discretization) {
    let mesh = gen_unit_disk(0.1).unwrap();
    let d = Discretization::new(&mesh);
    (mesh, d)
}

fn normalized(d: &Discretization, v: &[f64]) -> Vec<f64> {
    let n = d.h1_norm_free(v);
    v.iter().map(|x| x / n).collect()
}

/// A nontrivial solution of the disk problem at lambda = 2.
fn nontrivial_state(d: &Discretization) -> FreeState {
    let pairs = smallest_eigenpairs(d.stiffness_free(), d.mass_free(), 1).unwrap();
    let seed: Vec<f64> = pairs[0].vector.iter().map(|x| 0.5 * x).collect();
    let u = newton_free(d, &seed, 2.0, &NewtonOptions::default(), &[]).unwrap().u;
    let mut r = rng(5);
    FreeState {
        u,
        lambda: 2.0,
        phi: normalized(d, &random_vec(d.num_free(), &mut r)),
    }
}

#[test]
fn residual_vanishes_at_discrete_eigenpair() {
    let (_, d) = disk();
    let k = d.stiffness_free().scale(crate::assembly::DIFFUSION);
    let opts = crate::sparse::EigenOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let p = &crate::sparse::smallest_eigenpairs_with(&k, d.mass_free(), 1, &opts).unwrap()[0];
    let s = FreeState {
        u: vec![0.0; d.num_free()],
        lambda: p.value,
        phi: normalized(&d, &p.vector),
    };
    let r = residual_free(&d, &s);
    assert_eq!(r.len(), 2 * d.num_free() + 1);
    assert!(norm(&r) <= 1e-8, "{}", norm(&r));
}

#[test]
fn zero_phi_gives_minus_one_normalization() {
    let (mesh, d) = disk();
    let s = BranchPointState {
        u: Field::zeros(d.num_vertices()),
        lambda: 1.0,
        phi: Field::zeros(d.num_vertices()),
    };
    let r = ms_residual(&mesh, &s).unwrap();
    assert_eq!(*r.last().unwrap(), -1.0);
}

#[test]
fn no_kernel_at_lambda_zero() {
    let (_, d) = disk();
    let n = d.num_free();
    let phi = normalized(&d, &random_vec(n, &mut rng(1)));
    let s = FreeState {
        u: vec![0.0; n],
        lambda: 0.0,
        phi: phi.clone(),
    };
    let r = residual_free(&d, &s);
    let expected: Vec<f64> = d
        .stiffness_free()
        .mul_vec(&phi)
        .iter()
        .map(|x| crate::assembly::DIFFUSION * x)
        .collect();
    assert!(norm(&diff(&r[n..2 * n], &expected)) <= 1e-12 * norm(&expected));
    assert!(norm(&expected) > 0.1);
}

#[test]
fn jacobian_matches_central_differences() {
    let (_, d) = disk();
    let s = nontrivial_state(&d);
    let n = d.num_free();
    let j = jacobian_free(&d, &s);
    let mut r = rng(11);
    let pack = |s: &FreeState| {
        let mut v = s.u.clone();
        v.push(s.lambda);
        v.extend(&s.phi);
        v
    };
    let unpack = |v: &[f64]| FreeState {
        u: v[..n].to_vec(),
        lambda: v[n],
        phi: v[n + 1..].to_vec(),
    };
    let x0 = pack(&s);
    for _ in 0..10 {
        let dir = random_vec(2 * n + 1, &mut r);
        let exact = j.mul_vec(&dir);
        let err = |eps: f64| {
            let xp: Vec<f64> = x0.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
            let xm: Vec<f64> = x0.iter().zip(&dir).map(|(a, b)| a - eps * b).collect();
            let fd: Vec<f64> = residual_free(&d, &unpack(&xp))
                .iter()
                .zip(residual_free(&d, &unpack(&xm)))
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect();
            norm(&diff(&fd, &exact))
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 < 1e-4 * norm(&exact), "{e1}");
        assert!(e1 / e2 > 3.5, "order {}", (e1 / e2).log2());
    }
}

#[test]
fn jacobian_zero_blocks() {
    let (_, d) = disk();
    let n = d.num_free();
    let s = FreeState {
        u: vec![0.0; n],
        lambda: 1.0,
        phi: normalized(&d, &random_vec(n, &mut rng(2))),
    };
    let j = jacobian_free(&d, &s);
    for i in n..2 * n {
        assert!(j.row(i).filter(|&(c, _)| c < n).all(|(_, v)| v == 0.0));
    }
    let s = nontrivial_state(&d);
    let j = jacobian_free(&d, &s);
    assert_eq!(j.get(2 * n, n), 0.0);
}

#[test]
fn locates_first_disk_branch_point() {
    let (_, d) = disk();
    let s = initialize_free(&d, &vec![0.0; d.num_free()], 1.3, 5, &MsOptions::default()).unwrap();
    let exact = 0.25 * J01 * J01;
    assert!((s.lambda - exact).abs() / exact < 0.02, "{}", s.lambda);
    assert!(norm(&residual_free(&d, &s)) <= 1e-9);
    assert!((d.h1_norm_free(&s.phi).powi(2) - 1.0).abs() <= 1e-9);
    assert!(s.u.iter().all(|&x| x == 0.0));

    let k = d.stiffness_free().scale(crate::assembly::DIFFUSION);
    let eig = smallest_eigenpairs(&k, d.mass_free(), 1).unwrap()[0].value;
    assert!((s.lambda - eig).abs() <= 1e-8);
}

#[test]
fn selection_prefers_nearest_lambda() {
    let (_, d) = disk();
    let s = initialize_free(&d, &vec![0.0; d.num_free()], 3.5, 5, &MsOptions::default()).unwrap();
    let exact = 0.25 * 3.831705970207512f64.powi(2);
    assert!((s.lambda - exact).abs() / exact < 0.03, "{}", s.lambda);
}

#[test]
fn rejects_zero_candidates_and_degenerate_phi() {
    let (mesh, d) = disk();
    let zero = Field::zeros(d.num_vertices());
    assert!(matches!(ms_initialize(&mesh, &zero, 1.3, 0), Err(Error::InvalidArgument(_))));
    let guess = BranchPointState {
        u: zero.clone(),
        lambda: 1.4,
        phi: zero.clone(),
    };
    assert!(ms_solve(&mesh, &guess, 1e-9, 30).is_err());
    let short = BranchPointState {
        u: Field::zeros(3),
        lambda: 1.4,
        phi: zero,
    };
    assert!(matches!(ms_residual(&mesh, &short), Err(Error::SizeMismatch { .. })));
}

#[test]
fn sign_gauge_is_idempotent() {
    let (mesh, d) = disk();
    let s = ms_initialize(&mesh, &Field::zeros(d.num_vertices()), 1.3, 3).unwrap();
    let imax = s
        .phi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0;
    assert!(s.phi[imax] > 0.0);

    let mut flipped = s.clone();
    flipped.phi = flipped.phi.scaled(-1.0);
    for guess in [&s, &flipped] {
        let again = ms_solve(&mesh, guess, 1e-9, 30).unwrap();
        assert!((again.lambda - s.lambda).abs() <= 1e-10);
        assert!(again.phi.sub(&s.phi).max_abs() <= 1e-10);
    }
}

#[test]
fn adjoint_solves_transposed_system() {
    let (_, d) = disk();
    let s = initialize_free(&d, &vec![0.0; d.num_free()], 1.3, 3, &MsOptions::default()).unwrap();
    let n = d.num_free();
    let mut rhs = vec![0.0; 2 * n + 1];
    rhs[n] = 1.0;
    let psi = adjoint_solve(&d, &s, &rhs).unwrap();
    // on the trivial branch the u-equation multiplier drops out
    assert!(psi[..n].iter().all(|&x| x == 0.0));
    let jt = jacobian_free(&d, &s).transpose();
    let r = diff(&jt.mul_vec(&psi), &rhs);
    assert!(norm(&r) <= 1e-8, "{}", norm(&r));
}
