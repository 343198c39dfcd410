#![allow(dead_code)]

use afem_eigen::fem::CoefficientField;
use afem_eigen::hierarchy::Hierarchy;
use afem_eigen::jd::{smoother_apply, CoarseData, Preconditioner};
use afem_eigen::linalg::{dot, CsrMatrix};
use afem_eigen::mesh::{make_initial_mesh, region, DomainKind, DomainSpec, Mesh};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn initial(kind: DomainKind, n: usize) -> Mesh {
    make_initial_mesh(&DomainSpec::new(kind, n)).unwrap()
}

pub fn unit() -> CoefficientField {
    CoefficientField::constant(1.0).unwrap()
}

pub fn quadrants(mu: f64) -> CoefficientField {
    CoefficientField::from_regions([
        (region::Q1, 1.0),
        (region::Q2, mu),
        (region::Q3, mu),
        (region::Q4, 1.0),
    ])
    .unwrap()
}

/// Marks a random fraction of the triangles.
pub fn random_marks(rng: &mut ChaCha8Rng, mesh: &Mesh, fraction: f64) -> Vec<usize> {
    let nt = mesh.triangles().len();
    let mut ids: Vec<usize> = (0..nt).collect();
    ids.shuffle(rng);
    let k = ((nt as f64 * fraction).ceil() as usize).clamp(1, nt);
    ids.truncate(k);
    ids
}

/// A coarse mesh plus `levels - 1` random NVB refinements, stopping early
/// once the next level would push the total dof count past `max_total`.
pub fn random_hierarchy(rng: &mut ChaCha8Rng, levels: usize, max_total: usize) -> Hierarchy {
    let (kind, n, rho) = match rng.gen_range(0..4) {
        0 => (DomainKind::UnitSquare, rng.gen_range(2..=3), unit()),
        1 => (DomainKind::LShape, 2, unit()),
        2 => (DomainKind::Crack, 2, unit()),
        _ => (
            DomainKind::FourQuadrant,
            2,
            quadrants(10f64.powi(rng.gen_range(0..=8))),
        ),
    };
    let coarse = initial(kind, n);
    let mut h = Hierarchy::new(coarse, rho).unwrap();
    let mut total = h.finest().dof_count();
    let mut tries = 0;
    while h.levels().len() < levels && tries < 50 {
        tries += 1;
        let mesh = &h.finest().mesh;
        let fraction = rng.gen_range(0.1..0.6);
        let marks = random_marks(rng, mesh, fraction);
        let fine = mesh.nvb_refine(&marks).unwrap();
        if total + fine.dof_count() > max_total {
            continue;
        }
        total += fine.dof_count();
        h.push_level(fine).unwrap();
    }
    h
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            m[(r, c)] += v;
        }
    }
    m
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

/// Dense map from level `l` coefficients to finest-level coefficients.
pub fn level_to_finest(h: &Hierarchy, l: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(
        h.level(l).unwrap().dof_count(),
        h.level(l).unwrap().dof_count(),
    );
    for k in l + 1..h.levels().len() {
        p = dense(&h.levels()[k].prolongation.as_ref().unwrap().matrix) * p;
    }
    p
}

/// Generalized eigenpairs of `(a, m)` in ascending order, `m`-orthonormal,
/// through a Cholesky reduction.
pub fn generalized_eigen(a: &DMatrix<f64>, m: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let l = m.clone().cholesky().expect("mass matrix must be SPD").l();
    let linv = l.clone().try_inverse().unwrap();
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| linv.transpose() * eig.eigenvectors.column(i))
        .collect();
    (values, vectors)
}

/// Relative Frobenius distance between `B A~` (with `B` assembled column
/// by column from the preconditioner) and `I - E`, where
/// `E = (I - K_L) ... (I - K_0)` is built densely from the level operators.
pub fn preconditioner_oracle_defect(h: &Hierarchy, cd: &CoarseData, shift: f64, gamma: f64) -> f64 {
    let fine = h.finest();
    let n = fine.dof_count();
    let shifted = dense(&fine.ops.stiffness) - dense(&fine.ops.mass) * shift;

    let pre = Preconditioner::new(h, cd, shift, gamma).unwrap();
    let mut b = DMatrix::zeros(n, n);
    let mut e_i = vec![0.0; n];
    for i in 0..n {
        e_i[i] = 1.0;
        let col = pre.apply(&e_i).unwrap();
        e_i[i] = 0.0;
        b.set_column(i, &DVector::from_vec(col));
    }

    // coarse: constrained solve on the M_0-orthogonal complement of u_{1,0}
    let level0 = &h.levels()[0];
    let a0 = dense(&level0.ops.stiffness);
    let m0 = dense(&level0.ops.mass);
    let mut u0 = DVector::from_vec(cd.u_coarse.clone());
    u0 /= u0.dot(&(&m0 * &u0)).sqrt();
    let mu0 = &m0 * &u0;
    let n0 = u0.len();
    let proj = DMatrix::identity(n0, n0) - &u0 * mu0.transpose();
    let bordered = proj.transpose() * (&a0 - &m0 * shift) * &proj + &mu0 * mu0.transpose();
    let s0 = &proj * bordered.try_inverse().unwrap() * proj.transpose();

    let mut e = DMatrix::identity(n, n);
    for (l, level) in h.levels().iter().enumerate() {
        let s = if l == 0 {
            s0.clone()
        } else {
            let al = dense(&level.ops.stiffness);
            let ml = dense(&level.ops.mass);
            let mut s = DMatrix::zeros(level.dof_count(), level.dof_count());
            for &i in &level.smoothing_set {
                s[(i, i)] = gamma / (al[(i, i)] - shift * ml[(i, i)]);
            }
            s
        };
        let il = level_to_finest(h, l);
        let k = &il * s * il.transpose() * &shifted;
        e = (DMatrix::identity(n, n) - k) * e;
    }
    rel_diff(&(b * shifted), &(DMatrix::identity(n, n) - e))
}

/// Largest `|e^T S d - d^T S e| / (|e| |S d| + |d| |S e|)` over random pairs.
pub fn smoother_symmetry_defect(
    rng: &mut ChaCha8Rng,
    h: &Hierarchy,
    shift: f64,
    gamma: f64,
    pairs: usize,
) -> f64 {
    let mut worst = 0.0f64;
    for (l, level) in h.levels().iter().enumerate().skip(1) {
        let n = level.dof_count();
        for _ in 0..pairs {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sd = smoother_apply(level, l, shift, gamma, &d).unwrap();
            let se = smoother_apply(level, l, shift, gamma, &e).unwrap();
            let norm = |v: &[f64]| dot(v, v).sqrt();
            let scale = norm(&e) * norm(&sd) + norm(&d) * norm(&se);
            if scale > 0.0 {
                worst = worst.max((dot(&e, &sd) - dot(&d, &se)).abs() / scale);
            }
        }
    }
    worst
}
