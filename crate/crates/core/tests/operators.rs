mod common;

use afem_eigen::fem::{assemble, build_prolongation};
use afem_eigen::hierarchy::smoothing_set;
use afem_eigen::linalg::{dense_geneig, dot, solve_spd, CsrMatrix, Deflation, DenseMatrix};
use afem_eigen::mesh::DomainKind;
use common::{dense, initial, random_hierarchy, random_marks, rel_diff, unit};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn to_crate(m: &DMatrix<f64>) -> DenseMatrix {
    let mut data = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            data.push(m[(r, c)]);
        }
    }
    DenseMatrix::from_row_major(m.nrows(), m.ncols(), data).unwrap()
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    b.transpose() * &b + DMatrix::identity(n, n) * shift
}

/// Negative pivots of an unpivoted LDL^T of `a - sigma m` (Sylvester inertia).
fn count_below(a: &DMatrix<f64>, m: &DMatrix<f64>, sigma: f64) -> usize {
    let mut s = a - m * sigma;
    let n = s.nrows();
    let mut negative = 0;
    for k in 0..n {
        let d = s[(k, k)];
        if d < 0.0 {
            negative += 1;
        }
        for i in k + 1..n {
            let f = s[(i, k)] / d;
            for j in k + 1..n {
                s[(i, j)] -= f * s[(k, j)];
            }
        }
    }
    negative
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spmv_matches_dense_and_is_linear(seed in any::<u64>(), n in 1usize..30, density in 0.05f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if rng.gen_bool(density) {
                    triplets.push((r, c, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        // duplicates are summed
        if n > 0 {
            triplets.push((0, 0, 0.5));
        }
        let a = CsrMatrix::from_triplets(n, n, &triplets).unwrap();
        let d = dense(&a);
        let mut oracle = DMatrix::zeros(n, n);
        for &(r, c, v) in &triplets {
            oracle[(r, c)] += v;
        }
        prop_assert!(rel_diff(&d, &oracle) == 0.0);

        let x = random_vec(&mut rng, n);
        let y = random_vec(&mut rng, n);
        let (alpha, beta) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let ax = a.spmv(&x).unwrap();
        let expect = &oracle * DVector::from_vec(x.clone());
        for i in 0..n {
            prop_assert!((ax[i] - expect[i]).abs() <= 1e-13 * (1.0 + expect.amax()));
        }
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = a.spmv(&combo).unwrap();
        let ay = a.spmv(&y).unwrap();
        let scale = lhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((lhs[i] - alpha * ax[i] - beta * ay[i]).abs() <= 1e-13 * scale);
        }
        let at = a.spmv_transpose(&x).unwrap();
        let expect_t = oracle.transpose() * DVector::from_vec(x);
        for i in 0..n {
            prop_assert!((at[i] - expect_t[i]).abs() <= 1e-13 * (1.0 + expect_t.amax()));
        }
    }

    #[test]
    fn dense_geneig_agrees_with_inertia(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n, 0.1);
        let m = random_spd(&mut rng, n, 1.0);
        let eig = dense_geneig(&to_crate(&a), &to_crate(&m), n).unwrap();
        for (i, &lambda) in eig.values.iter().enumerate() {
            let delta = 1e-8 * lambda.abs().max(1.0);
            prop_assert!(count_below(&a, &m, lambda - delta) <= i);
            prop_assert!(count_below(&a, &m, lambda + delta) >= i + 1);
            let x = DVector::from_vec(eig.vectors[i].clone());
            let r = &a * &x - (&m * &x) * lambda;
            prop_assert!(r.amax() <= 1e-9 * (1.0 + lambda.abs()) * a.amax().max(1.0));
        }
        for i in 0..n {
            for j in 0..n {
                let xi = DVector::from_vec(eig.vectors[i].clone());
                let xj = DVector::from_vec(eig.vectors[j].clone());
                let g = xi.dot(&(&m * &xj));
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - target).abs() <= 1e-10);
            }
        }
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn deflated_solves_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let mesh = initial(DomainKind::UnitSquare, 3 + trial % 4);
        let ops = assemble(&mesh, &unit()).unwrap();
        let n = ops.dof_count();
        let w = random_vec(&mut rng, n);
        let rhs = random_vec(&mut rng, n);
        let deflation = Deflation::with_sparse_metric(&w, &ops.mass).unwrap();
        let x = solve_spd(&ops.stiffness, &rhs, Some(deflation.clone())).unwrap();

        let mx = ops.mass.spmv(&x).unwrap();
        let xnorm = dot(&x, &mx).sqrt();
        assert!(
            dot(&deflation.w, &mx).abs() <= 1e-12 * xnorm,
            "trial {trial}"
        );

        // A x - rhs must be a multiple of M w
        let ax = ops.stiffness.spmv(&x).unwrap();
        let r: Vec<f64> = ax.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let c = dot(&deflation.w, &r);
        let defect = r
            .iter()
            .zip(&deflation.mw)
            .map(|(ri, mi)| (ri - c * mi).abs())
            .fold(0.0, f64::max);
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(defect <= 1e-10 * scale, "trial {trial}: {defect:e}");
    }
}

#[test]
fn galerkin_nestedness_on_random_hierarchies() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let h = random_hierarchy(&mut rng, 4, 2000);
        for l in 1..h.levels().len() {
            let (coarse, fine) = (&h.levels()[l - 1], &h.levels()[l]);
            let p = dense(&fine.prolongation.as_ref().unwrap().matrix);
            for (fa, ca) in [
                (&fine.ops.stiffness, &coarse.ops.stiffness),
                (&fine.ops.mass, &coarse.ops.mass),
            ] {
                let galerkin = p.transpose() * dense(fa) * &p;
                let direct = dense(ca);
                let defect = (&galerkin - &direct).amax() / direct.amax();
                assert!(defect <= 1e-12, "level {l}: {defect:e}");
            }
            let v = DVector::from_vec(random_vec(&mut rng, coarse.dof_count()));
            let pv = &p * &v;
            let coarse_energy = v.dot(&(dense(&coarse.ops.stiffness) * &v));
            let fine_energy = pv.dot(&(dense(&fine.ops.stiffness) * &pv));
            assert!((coarse_energy - fine_energy).abs() <= 1e-12 * coarse_energy);
        }
    }
}

#[test]
fn restricted_duals_equal_coarse_pairings() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let h = random_hierarchy(&mut rng, 4, 2000);
        let finest_mass = &h.finest().ops.mass;
        for l in 0..h.levels().len() {
            let level = &h.levels()[l];
            let v = random_vec(&mut rng, level.dof_count());
            let fine_v = h.prolongate_to_finest(l, &v).unwrap();
            let fine_dual = finest_mass.spmv(&fine_v).unwrap();
            let restricted = h.restrict_dual(l, &fine_dual).unwrap();
            let direct = level.ops.mass.spmv(&v).unwrap();
            let scale = direct.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let defect = restricted
                .iter()
                .zip(&direct)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(
                defect <= 1e-13 * scale,
                "level {l}: {defect:e} vs {scale:e}"
            );
            let all = h.restrict_all(&fine_dual).unwrap();
            assert_eq!(all[l], restricted);
        }
    }
}

#[test]
fn smoothing_sets_match_prolongation_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for kind in [
        DomainKind::UnitSquare,
        DomainKind::LShape,
        DomainKind::Crack,
        DomainKind::FourQuadrant,
    ] {
        let mut coarse = initial(kind, 2);
        for _ in 0..5 {
            let marks = random_marks(&mut rng, &coarse, 0.2);
            let fine = coarse.nvb_refine(&marks).unwrap();
            let p = build_prolongation(&coarse, &fine).unwrap();
            let pd = dense(&p.matrix);
            // oracle: an old vertex is left alone iff its star (as vertex
            // triples) survived unchanged
            let star = |m: &afem_eigen::mesh::Mesh, v: usize| {
                let mut s: Vec<[usize; 3]> = m
                    .triangles()
                    .iter()
                    .filter(|t| t.vertices.contains(&v))
                    .map(|t| {
                        let mut k = t.vertices;
                        k.sort_unstable();
                        k
                    })
                    .collect();
                s.sort_unstable();
                s
            };
            let mut expected = Vec::new();
            let mut changed_hat = Vec::new();
            for v in fine.interior_vertices() {
                let f = fine.dof(v).unwrap();
                let old = v < coarse.vertices().len();
                if !old || star(&coarse, v) != star(&fine, v) {
                    expected.push(f);
                }
                let unit_column = old
                    && (0..pd.nrows())
                        .all(|r| pd[(r, coarse.dof(v).unwrap())] == if r == f { 1.0 } else { 0.0 });
                if !unit_column {
                    changed_hat.push(f);
                }
            }
            expected.sort_unstable();
            let mut got = smoothing_set(&coarse, &fine);
            got.sort_unstable();
            assert_eq!(got, expected);
            // every dof whose hat function actually changed is smoothed
            assert!(changed_hat.iter().all(|f| got.binary_search(f).is_ok()));
            coarse = fine;
        }
    }
}
