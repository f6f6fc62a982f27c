use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wild_euler::geometry::*;

fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn trace_free_sym(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let mut u = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
    u = (&u + u.transpose()) * 0.5;
    let tr = u.trace() / n as f64;
    u - DMatrix::identity(n, n) * tr
}

/// Random interior point built as a shrunken convex combination of vertices.
fn random_hull_point(rng: &mut ChaCha8Rng, h: f64) -> StatePoint {
    let k = rng.gen_range(2..6);
    let mut ws: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    let shrink = 0.95 * rng.gen::<f64>();
    ws.into_iter().fold(StatePoint::zeros(2), |acc, w| {
        let th = rng.gen::<f64>() * std::f64::consts::TAU;
        let b = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        acc.add(&StatePoint::vertex(b, &dv(&[h * th.cos(), h * th.sin()])).scaled(w * shrink))
    })
}

#[test]
fn constraint_set_examples() {
    let ctx = ConstraintContext::new(2, 1.0, 64).unwrap();
    let z = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5]);
    assert!(constraint_set_member(1.0, &dv(&[1.0, 0.0]), &dv(&[1.0, 0.0]), &z, &ctx, 1e-12));
    assert!(!constraint_set_member(0.0, &dv(&[0.0, 0.0]), &dv(&[0.0, 0.0]), &DMatrix::zeros(2, 2), &ctx, 1e-12));
    assert!(!constraint_set_member(1.0, &dv(&[0.0, 1.0]), &dv(&[1.0, 0.0]), &z, &ctx, 1e-12));
}

#[test]
fn symmetric_decomposition_of_zero_reconstructs() {
    // Hand-built decomposition: v = e1, e2, −e1, −e2 (by angle) with alternating
    // tracer signs, so opposite velocities share a sign and η cancels.
    let verts = [(1.0, [1.0, 0.0]), (-1.0, [0.0, 1.0]), (1.0, [-1.0, 0.0]), (-1.0, [0.0, -1.0])];
    let sum = verts
        .iter()
        .fold(StatePoint::zeros(2), |acc, (b, v)| acc.add(&StatePoint::vertex(*b, &dv(v)).scaled(0.25)));
    let max = sum.to_flat().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    assert!(max < 1e-15, "{max}");

    let ctx = ConstraintContext::new(2, 1.0, 64).unwrap();
    let dec = caratheodory_decompose(&StatePoint::zeros(2), &ctx).unwrap();
    assert!(dec.residual <= RECONSTRUCTION_TOL);
    assert!(dec.weights.len() <= tartar_dim(2) + 1);
    assert!((dec.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn shrunken_vertex_decomposes() {
    let ctx = ConstraintContext::new(2, 1.0, 64).unwrap();
    let p = StatePoint::vertex(1.0, &dv(&[0.6, 0.8])).scaled(0.99);
    let dec = caratheodory_decompose(&p, &ctx).unwrap();
    assert!(dec.weights.len() <= tartar_dim(2) + 1);
    assert!(dec.weights.iter().all(|&w| w > 0.0));
    let rec = dec.reconstruct(2).sub(&p);
    assert!(rec.to_tartar().iter().all(|x| x.abs() < 1e-8));

    let outside = StatePoint { b: 2.0, ..StatePoint::zeros(2) };
    assert!(matches!(
        caratheodory_decompose(&outside, &ctx),
        Err(GeometryError::DecompositionFailed { .. })
    ));
}

#[test]
fn wave_cone_examples() {
    let tol = Tolerances::default();
    let dir = StatePoint::vertex(1.0, &dv(&[1.0, 0.0]))
        .sub(&StatePoint::vertex(1.0, &dv(&[0.0, 1.0])))
        .scaled(0.5 * 0.3);
    let got = wave_cone_member(&dir, &tol).expect("difference of compatible vertices is in the cone");
    let expect = dv(&[1.0, 1.0, -1.0]).normalize();
    let aligned = got.xi.dot(&expect).abs();
    assert!((aligned - 1.0).abs() < 1e-10, "{aligned}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let entries: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() - 0.5).collect();
    let generic = StatePoint {
        b: 0.7,
        eta: dv(&[0.3, -0.9]),
        v: dv(&[0.4, 0.1]),
        z: trace_free_sym(2, &entries),
        q: 0.0,
    };
    assert!(wave_cone_member(&generic, &tol).is_none());
}

#[test]
fn segment_at_zero_meets_bound() {
    let ctx = ConstraintContext::new(2, 1.0, 64).unwrap();
    let tol = Tolerances::default();
    let p = StatePoint::zeros(2);
    let seg = segment_direction(&p, &ctx, 0.05, &tol).unwrap();
    let c = segment_constant(2);
    assert!((c - 1.0 / (28.0 * 2f64.sqrt())).abs() < 1e-16);
    assert!(seg.velocity_tracer_norm() >= 2.0 * c);
    let oracle = HullOracle::new(ctx).unwrap();
    assert!(oracle.interior_member(&p.add(&seg.dir), 0.025));
    assert!(oracle.interior_member(&p.sub(&seg.dir), 0.025));
    assert!(wave_cone_member(&seg.dir, &tol).is_some());
}

#[test]
fn segment_bound_on_random_interior_points() {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let margin = 0.01;
    for _ in 0..24 {
        let h = rng.gen_range(0.5..2.0);
        let ctx = ConstraintContext::new(2, h, 64).unwrap();
        let oracle = HullOracle::new(ctx).unwrap();
        let p = loop {
            let p = random_hull_point(&mut rng, h);
            if oracle.interior_member(&p, margin) {
                break p;
            }
        };
        let seg = segment_direction_with(&p, &oracle, margin, &tol).unwrap();
        assert!(seg.annihilation_residual() <= 1e-10);
        assert!((seg.xi.norm() - 1.0).abs() < 1e-12);
        assert_eq!(seg.dir.q, 0.0);
        let deficit = h * h + 1.0 - p.v.norm_squared() - p.b * p.b;
        assert!(seg.velocity_tracer_norm() >= segment_constant(2) * deficit);
        assert!(oracle.interior_member(&p.add(&seg.dir), 0.5 * margin));
        assert!(oracle.interior_member(&p.sub(&seg.dir), 0.5 * margin));
    }
}

#[test]
fn vertices_sit_on_energy_level() {
    let tol = Tolerances::default();
    for n in 2..=4 {
        for h in [0.5, 1.0, 2.0] {
            for v in sphere_net(n, h, min_net_size(n)) {
                let p = StatePoint::vertex(1.0, &v);
                let e = e_value(&p.v, &p.z, &tol).unwrap();
                assert!((e - 0.5 * h * h).abs() < 1e-12, "n={n} h={h} e={e}");
            }
        }
    }
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn e_dominates_kinetic_energy(n in 2usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let entries: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let u = trace_free_sym(n, &entries);
        let tol = Tolerances::default();
        let e = e_value(&v, &u, &tol).unwrap();
        prop_assert!(e >= 0.5 * v.norm_squared() - 1e-12);

        // Equality family u = v⊗v − |v|²/n I.
        let u_eq = &v * v.transpose() - DMatrix::identity(n, n) * (v.norm_squared() / n as f64);
        let e_eq = e_value(&v, &u_eq, &tol).unwrap();
        prop_assert!((e_eq - 0.5 * v.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn e_is_convex(a in vec_strategy(6), b in vec_strategy(6), t in 0.0..1.0f64) {
        let n = 2;
        let tol = Tolerances::default();
        let ua = trace_free_sym(n, &a[2..]);
        let ub = trace_free_sym(n, &b[2..]);
        let va = dv(&a[..2]);
        let vb = dv(&b[..2]);
        let vm = &va * t + &vb * (1.0 - t);
        let um = &ua * t + &ub * (1.0 - t);
        let lhs = e_value(&vm, &um, &tol).unwrap();
        let rhs = t * e_value(&va, &ua, &tol).unwrap() + (1.0 - t) * e_value(&vb, &ub, &tol).unwrap();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn xi_annihilates_difference_matrix(
        n in 2usize..5,
        seed in any::<u64>(),
        same_first in any::<bool>(),
        bj in prop::sample::select(vec![1.0, -1.0]),
        b1 in prop::sample::select(vec![1.0, -1.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h: f64 = rng.gen_range(0.5..2.0);
        let mut v1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut vj = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if same_first {
            vj[0] = v1[0];
        }
        v1 *= h / v1.norm();
        // Keep the first components equal after rescaling when requested.
        let scale = h / vj.norm();
        vj *= scale;
        if same_first {
            let rest = (h * h - v1[0] * v1[0]).max(0.0).sqrt();
            let tail_norm = vj.rows(1, n - 1).norm();
            vj[0] = v1[0];
            if tail_norm > 0.0 {
                let f = rest / tail_norm;
                for i in 1..n {
                    vj[i] *= f;
                }
            }
        }
        prop_assume!((&vj - &v1).amax() > 1e-9);
        let xi = xi_vector(&vj, &v1).unwrap();
        let m = difference_matrix(&vj, bj, &v1, b1);
        let res = (m * xi).amax();
        prop_assert!(res <= 1e-12, "residual {}", res);
    }
}
