mod common;

use afem_eigen::afem::{problem_catalog, run_afem_observed, LevelView};
use afem_eigen::estimate::{
    estimate_robust, estimate_standard, mark, mark_items, IndicatorKind, Indicators, Marking,
    SingularNodes,
};
use afem_eigen::fem::assemble;
use afem_eigen::mesh::{DomainKind, Mesh};
use common::{dense, generalized_eigen, initial, quadrants, random_marks, unit};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn principal(mesh: &Mesh) -> (f64, Vec<f64>) {
    let ops = assemble(mesh, &unit()).unwrap();
    let (values, vectors) = generalized_eigen(&dense(&ops.stiffness), &dense(&ops.mass));
    (values[0], vectors[0].as_slice().to_vec())
}

/// `h_T^2 lambda^2 ||u||_T^2` from the closed-form P1 mass integral.
fn volume_terms(mesh: &Mesh, lambda: f64, u: &[f64]) -> Vec<f64> {
    (0..mesh.triangles().len())
        .map(|t| {
            let vals: Vec<f64> = mesh.triangles()[t]
                .vertices
                .iter()
                .map(|&v| mesh.dof(v).map_or(0.0, |d| u[d]))
                .collect();
            let sum: f64 = vals.iter().sum();
            let sq: f64 = vals.iter().map(|x| x * x).sum();
            let area = mesh.signed_area(t);
            let norm2 = area / 12.0 * (sq + sum * sum);
            let c = mesh.corners(t);
            let d = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
            let h = d(c[0], c[1]).max(d(c[1], c[2])).max(d(c[2], c[0]));
            h * h * lambda * lambda * norm2
        })
        .collect()
}

fn indicators(values: Vec<f64>) -> Indicators {
    let n = values.len();
    let total = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    Indicators {
        kind: IndicatorKind::Element,
        ids: (0..n).collect(),
        values,
        support: (0..n).map(|t| [t, t]).collect(),
        total,
    }
}

#[test]
fn unit_coefficient_estimators_agree_edgewise() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for kind in [
        DomainKind::UnitSquare,
        DomainKind::LShape,
        DomainKind::Crack,
    ] {
        let mut mesh = initial(kind, 2);
        for _ in 0..3 {
            let marks = random_marks(&mut rng, &mesh, 0.3);
            mesh = mesh.nvb_refine(&marks).unwrap();
        }
        let (lambda, u) = principal(&mesh);
        let standard = estimate_standard(&mesh, &unit(), lambda, &u).unwrap();
        let robust = estimate_robust(&mesh, &unit(), lambda, &u, &SingularNodes::Detect).unwrap();

        // standard counts each interior jump twice and each volume once;
        // robust counts each jump once and each volume once per interior edge
        let vol = volume_terms(&mesh, lambda, &u);
        let table = mesh.edge_table();
        let mut interior_edges = vec![0.0; mesh.triangles().len()];
        for adj in &table.triangles {
            if let [Some(a), Some(b)] = *adj {
                interior_edges[a] += 1.0;
                interior_edges[b] += 1.0;
            }
        }
        let vol_sum: f64 = vol.iter().sum();
        let weighted: f64 = vol.iter().zip(&interior_edges).map(|(v, k)| v * k).sum();
        let lhs = standard.total.powi(2) - vol_sum;
        let rhs = 2.0 * (robust.total.powi(2) - weighted);
        assert!(
            (lhs - rhs).abs() <= 1e-12 * standard.total.powi(2),
            "{kind:?}: {lhs} vs {rhs}"
        );
        assert!(lhs > 0.0);
    }
}

#[test]
fn indicators_scale_with_the_solution() {
    let mesh = initial(DomainKind::LShape, 2).refine_uniform();
    let (lambda, u) = principal(&mesh);
    let rho = quadrants(1e4);
    let fq = initial(DomainKind::FourQuadrant, 4);
    let ops = assemble(&fq, &rho).unwrap();
    let (fl, fvecs) = generalized_eigen(&dense(&ops.stiffness), &dense(&ops.mass));
    let fu = fvecs[0].as_slice().to_vec();
    for alpha in [-2.5, 0.3, 7.0] {
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let a = estimate_standard(&mesh, &unit(), lambda, &u).unwrap();
        let b = estimate_standard(&mesh, &unit(), lambda, &scaled).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((y - alpha.abs() * x).abs() <= 1e-13 * y.abs().max(1e-300));
        }
        let fscaled: Vec<f64> = fu.iter().map(|x| alpha * x).collect();
        let a = estimate_robust(&fq, &rho, fl[0], &fu, &SingularNodes::Detect).unwrap();
        let b = estimate_robust(&fq, &rho, fl[0], &fscaled, &SingularNodes::Detect).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((y - alpha.abs() * x).abs() <= 1e-13 * y.abs().max(1e-300));
        }
    }
}

#[test]
fn uniform_square_estimator_halves_per_refinement() {
    let mut mesh = initial(DomainKind::UnitSquare, 4);
    let mut points = Vec::new();
    for _ in 0..3 {
        let (lambda, u) = principal(&mesh);
        let eta = estimate_standard(&mesh, &unit(), lambda, &u).unwrap().total;
        points.push(((mesh.dof_count() as f64).ln(), eta.ln()));
        mesh = mesh.refine_uniform();
    }
    let n = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((-0.6..=-0.4).contains(&slope), "slope {slope}");
    for w in points.windows(2) {
        let ratio = (w[0].1 - w[1].1).exp();
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn high_contrast_indicators_live_in_the_soft_quadrants() {
    let mut spec = problem_catalog("fourquadrant", Some(1e8)).unwrap();
    spec.max_dof = 4000;
    let mut shares = Vec::new();
    let mut observer = |view: &LevelView| {
        let mesh = view.mesh;
        let table = mesh.edge_table();
        let (mut stiff, mut all) = (0.0, 0.0);
        for (&e, &v) in view.indicators.ids.iter().zip(&view.indicators.values) {
            let [a, b] = table.edges[e];
            let (p, q) = (mesh.point(a), mesh.point(b));
            let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            // strictly inside a rho = mu quadrant, away from the interfaces
            if (mid[0] > 0.5) == (mid[1] > 0.5)
                && (mid[0] - 0.5).abs().min((mid[1] - 0.5).abs()) > 0.05
            {
                stiff += v * v;
            }
            all += v * v;
        }
        shares.push(stiff / all);
        Ok(())
    };
    run_afem_observed(&spec, &mut observer).unwrap();
    // u is nearly zero where rho = 1e8, so those edges carry no error
    assert!(shares.len() > 3);
    assert!(shares.iter().all(|&s| s < 0.05), "{shares:?}");
    assert!(*shares.last().unwrap() < 1e-6, "{shares:?}");
}

proptest! {
    #[test]
    fn dorfler_set_is_minimal(values in proptest::collection::vec(0.0f64..10.0, 1..40), theta in 0.05f64..1.0) {
        let ind = indicators(values);
        let items = mark_items(&ind, Marking::Dorfler { theta }).unwrap();
        let target = theta * ind.total.powi(2);
        let sum = |set: &[usize]| set.iter().map(|&i| ind.values[i].powi(2)).sum::<f64>();
        if ind.total > 0.0 {
            prop_assert!(sum(&items) >= target * (1.0 - 1e-12));
            let without_smallest = &items[..items.len() - 1];
            prop_assert!(sum(without_smallest) < target);
        } else {
            prop_assert!(items.is_empty());
        }
        // marked items dominate every unmarked one
        let min_marked = items.iter().map(|&i| ind.values[i]).fold(f64::INFINITY, f64::min);
        for i in 0..ind.len() {
            if !items.contains(&i) {
                prop_assert!(ind.values[i] <= min_marked);
            }
        }
        let tris = mark(&ind, Marking::Dorfler { theta }).unwrap();
        prop_assert!(tris.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn maximum_marks_the_threshold_set(values in proptest::collection::vec(0.0f64..10.0, 0..40), theta in 0.01f64..1.0) {
        let ind = indicators(values);
        let mut items = mark_items(&ind, Marking::Maximum { theta }).unwrap();
        items.sort_unstable();
        let max = ind.values.iter().copied().fold(0.0, f64::max);
        let expect: Vec<usize> = (0..ind.len()).filter(|&i| ind.values[i] > 0.0 && ind.values[i] >= theta * max).collect();
        prop_assert_eq!(items, expect);
    }
}
