use proptest::prelude::*;
use wild_euler::geometry::{flat_len, xi_vector, Layout, LambdaDirection, StatePoint};
use wild_euler::iteration::*;
use wild_euler::perturbation::{ball_volume, rescale_patch, CutoffSpec, PerturbationPatch};
use wild_euler::verification::{bump_tests, signed_rows};

fn grid(nx: usize) -> Grid {
    Grid::new(2, vec![1.0, 1.0], 1.0, nx, nx).unwrap()
}

fn small_config(nx: usize, iterations: usize, seed: u64) -> IterationConfig {
    IterationConfig {
        nx,
        nt: nx,
        max_iterations: iterations,
        deficit_target_fraction: 0.0,
        residual_tests: 4,
        seed,
        ..Default::default()
    }
}

#[test]
fn initial_deficit_examples() {
    let f = init_field(&IterationConfig::default()).unwrap();
    assert!((f.deficit - 2.0).abs() < 1e-12);
    assert_eq!(f.k, 1);
    assert!(f.data.iter().all(|&x| x == 0.0));
    let cfg = IterationConfig { h: HProfile::Constant { value: 2.0 }, ..Default::default() };
    assert!((init_field(&cfg).unwrap().deficit - 5.0).abs() < 1e-12);
    let cfg = IterationConfig { h: HProfile::Tabulated { values: vec![1.0, 0.5, -0.1] }, ..Default::default() };
    assert!(matches!(init_field(&cfg), Err(IterationError::Config(_))));
}

#[test]
fn deficit_of_saturated_and_half_saturated_fields() {
    let g = grid(16);
    let lay = Layout { n: 2 };
    let h = HProfile::Tabulated { values: vec![1.0, 1.5] };
    let mut f = SubsolutionField::zeros(g.clone(), &h).unwrap();
    for i in 0..g.node_count() {
        f.node_mut(i)[lay.b()] = 1.0;
    }
    // ‖h‖²|O_x| with the same midpoint quadrature as the field.
    let h2: f64 = f.h_profile.iter().map(|x| x * x).sum::<f64>() / g.nt as f64;
    assert!((deficit(&f) - h2).abs() < 1e-12);
    for i in 0..g.node_count() {
        let hv = f.h_at_node(i);
        let s = f.node_mut(i);
        s[lay.v()] = 0.6 * hv;
        s[lay.v() + 1] = -0.8 * hv;
    }
    assert!(deficit(&f).abs() < 1e-12);
}

#[test]
fn mollification_gap_shrinks_with_delta() {
    let g = grid(32);
    let mut f = SubsolutionField::zeros(g.clone(), &HProfile::default()).unwrap();
    for i in 0..g.node_count() {
        let y = g.coords(i);
        let r2: f64 = y.iter().map(|c| (c - 0.5) * (c - 0.5)).sum();
        f.node_mut(i)[0] = (-20.0 * r2).exp() * (6.0 * y[0]).sin();
    }
    let conv = Convolver::new(&g, 0.2);
    let gaps: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|&d| mollification_gap(&conv, &f, d).unwrap()).collect();
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "{gaps:?}");
    }
    // Below one cell the kernel is a single point mass.
    assert_eq!(mollification_gap(&conv, &f, 0.01).unwrap(), 0.0);
    assert!(conv.convolve_all(&f.data, f.stride(), &[0.3]).is_err());
}

#[test]
fn cover_concentrates_on_unsaturated_region() {
    let g = grid(32);
    let lay = Layout { n: 2 };
    let mut f = SubsolutionField::zeros(g.clone(), &HProfile::default()).unwrap();
    let hole = |y: &[f64]| y.iter().map(|c| (c - 0.5) * (c - 0.5)).sum::<f64>() < 0.3 * 0.3;
    for i in 0..g.node_count() {
        let y = g.coords(i);
        if !hole(&y) && !g.is_boundary(i) {
            let s = f.node_mut(i);
            s[lay.v()] = 0.95;
            s[lay.b()] = 0.95;
        }
    }
    f.deficit = deficit(&f);
    let cover = select_cover(&f, 0.25, 3).unwrap();
    // Independent check of the factor-2 inequality over the non-boundary nodes.
    let integral: f64 = (0..g.node_count())
        .filter(|&i| !g.is_boundary(i))
        .map(|i| f.deficit_density(i))
        .sum::<f64>()
        * g.cell_volume();
    let lhs: f64 = cover
        .balls
        .iter()
        .map(|b| {
            let s = &b.base;
            let dens = 2.0 - s[lay.v()].powi(2) - s[lay.v() + 1].powi(2) - s[lay.b()].powi(2);
            2.0 * dens * ball_volume(3, b.radius)
        })
        .sum();
    assert!(lhs >= integral - 1e-12, "{lhs} < {integral}");
    let inside = cover.balls.iter().filter(|b| hole(&b.center)).count();
    assert!(inside * 2 > cover.balls.len(), "{inside} of {}", cover.balls.len());

    assert!(matches!(select_cover(&f, 0.02, 3), Err(IterationError::Config(_))));
}

#[test]
fn one_step_on_zero_field() {
    let cfg = small_config(32, 1, 11);
    let out = run(&cfg).unwrap();
    assert_eq!(out.rows.len(), 2);
    let step = &out.steps[0];
    assert!(step.deficit_after < step.deficit_before);
    assert!(step.gain >= step.beta_rhs);
    assert!(step.delta_k < 0.5);
    assert!(step.proximity.iter().all(|&p| p < 0.5));
    let bank = OracleBank::new(2, &out.field.h_profile, cfg.vertex_net_size).unwrap();
    let inv = check_invariants(&out.field, &bank, margin_at(&cfg, 2));
    assert!(inv.ok(), "{inv:?}");
}

#[test]
fn zero_iterations_return_initial_state() {
    let out = run(&small_config(16, 0, 0)).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].k, 1);
    assert!((out.rows[0].deficit - 2.0).abs() < 1e-12);
    assert!(out.steps.is_empty());
}

#[test]
fn seeds_give_distinct_admissible_fields() {
    let a = run(&small_config(32, 2, 1)).unwrap();
    let b = run(&small_config(32, 2, 2)).unwrap();
    let dist: f64 = a.field.data.iter().zip(&b.field.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        * a.field.grid.cell_volume();
    let scale = a.field.saturated_energy().sqrt();
    assert!(dist.sqrt() / scale > 1e-2);
    let cfg = small_config(32, 2, 1);
    let bank = OracleBank::new(2, &a.field.h_profile, cfg.vertex_net_size).unwrap();
    for f in [&a.field, &b.field] {
        assert!(check_invariants(f, &bank, margin_at(&cfg, 3)).ok());
    }
}

#[test]
fn resume_reproduces_rows() {
    let full = run(&small_config(32, 3, 5)).unwrap();
    let first = run(&small_config(32, 1, 5)).unwrap();
    let rest = run_from(first.field, &small_config(32, 2, 5)).unwrap();
    assert_eq!(rest.field.data, full.field.data);
    assert_eq!(rest.rows[0].deficit, full.rows[1].deficit);
    assert_eq!(rest.rows.len(), 3);
    for (a, b) in rest.rows[1..].iter().zip(&full.rows[2..]) {
        assert_eq!((a.k, a.deficit, a.beta_slack, a.proximity_slack), (b.k, b.deficit, b.beta_slack, b.proximity_slack));
    }
}

#[test]
fn weak_residual_superposes_over_disjoint_patches() {
    let g = grid(32);
    let vj = nalgebra::DVector::from_vec(vec![1.0, 0.0]);
    let v1 = nalgebra::DVector::from_vec(vec![0.0, 1.0]);
    let dir = StatePoint::vertex(1.0, &vj).sub(&StatePoint::vertex(-1.0, &v1)).scaled(0.2);
    let xi = xi_vector(&vj, &v1).unwrap().normalize();
    let base = PerturbationPatch::new(LambdaDirection { dir, xi }, 4, CutoffSpec::new(), 1.0).unwrap();
    let p1 = rescale_patch(&base, &[0.3, 0.3, 0.5], 0.2).unwrap();
    let p2 = rescale_patch(&base, &[0.7, 0.65, 0.45], 0.2).unwrap();
    let mut f1 = SubsolutionField::zeros(g.clone(), &HProfile::default()).unwrap();
    let mut f2 = f1.clone();
    let mut buf = vec![0.0; flat_len(2)];
    for i in 0..g.node_count() {
        let y = g.coords(i);
        p1.eval(&y, &mut buf);
        f1.node_mut(i).copy_from_slice(&buf);
        p2.eval(&y, &mut buf);
        f2.node_mut(i).copy_from_slice(&buf);
    }
    let mut sum = f1.clone();
    sum.data.iter_mut().zip(&f2.data).for_each(|(a, b)| *a += b);
    for t in bump_tests(&g, 16, 9) {
        let (a, b, s) = (signed_rows(&f1, &t), signed_rows(&f2, &t), signed_rows(&sum, &t));
        for r in 0..4 {
            assert!((s[r] - a[r] - b[r]).abs() < 1e-14, "row {r}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn covers_are_disjoint_inside_and_sufficient(seed in any::<u64>()) {
        let g = grid(32);
        let f = SubsolutionField::zeros(g.clone(), &HProfile::default()).unwrap();
        let cover = select_cover(&f, 0.2, seed).unwrap();
        prop_assert!(cover.achieved >= cover.required);
        let h = g.spacing();
        for (i, a) in cover.balls.iter().enumerate() {
            prop_assert!(a.radius < 0.2);
            for ax in 0..3 {
                prop_assert!(a.center[ax] - a.radius >= 0.5 * h[ax] - 1e-12);
                prop_assert!(a.center[ax] + a.radius <= 1.0 - 0.5 * h[ax] + 1e-12);
            }
            for b in &cover.balls[i + 1..] {
                let d2: f64 = a.center.iter().zip(&b.center).map(|(x, y)| (x - y) * (x - y)).sum();
                prop_assert!(d2.sqrt() >= a.radius + b.radius);
            }
        }
    }
}
