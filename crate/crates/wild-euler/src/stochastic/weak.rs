use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fields::FlowFields;
use super::path::BrownianPath;
use super::{NoiseKind, StochasticError};
use crate::verification::{BumpTest, Equation, ResidualEntry, ResidualReport};

pub const DEFAULT_CHECKPOINTS: usize = 8;

/// Which terms enter the pathwise identity; the defaults are the Itô forms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakFormOptions {
    pub checkpoints: usize,
    /// Include the stochastic integral (ablation switch).
    pub ito_term: bool,
    /// Weight of the ∫∫ u·Δφ correction under transport noise.
    pub laplacian_weight: f64,
}

impl Default for WeakFormOptions {
    fn default() -> Self {
        Self { checkpoints: DEFAULT_CHECKPOINTS, ito_term: true, laplacian_weight: 0.5 }
    }
}

/// `count` seeded spatial bumps supported inside [0, L₁]×…×[0, L_n].
pub fn space_bump_tests(extent: &[f64], count: usize, seed: u64) -> Vec<BumpTest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
    (0..count)
        .map(|_| {
            let half_width: Vec<f64> = extent.iter().map(|l| l * rng.gen_range(0.15..0.35)).collect();
            let center = extent.iter().zip(&half_width).map(|(l, s)| rng.gen_range(*s..l - s)).collect();
            BumpTest { center, half_width, power: 4 }
        })
        .collect()
}

/// Spatial integrals of one test against one time slice.
struct SliceMoments {
    /// ∫ u_k φ.
    u: Vec<f64>,
    /// ∫ (flux of u_k)·∇φ.
    flux: Vec<f64>,
    /// ∫ u_k ∂_j φ, n² row-major.
    grad: Vec<f64>,
    /// ∫ u_k Δφ.
    lap: Vec<f64>,
    div: f64,
    b: f64,
    b_flux: f64,
    b_grad: Vec<f64>,
    b_lap: f64,
}

/// Test values at the nodes of one slice where the test or its gradient is nonzero.
struct Stencil {
    nodes: Vec<usize>,
    phi: Vec<f64>,
    /// n per node.
    grad: Vec<f64>,
    lap: Vec<f64>,
}

fn stencil(f: &FlowFields, test: &BumpTest) -> Stencil {
    let g = &f.grid;
    let n = g.n;
    let h = g.spacing();
    let mut st = Stencil { nodes: Vec::new(), phi: Vec::new(), grad: Vec::new(), lap: Vec::new() };
    let lo: Vec<usize> = (0..n)
        .map(|a| (((test.center[a] - test.half_width[a]) / h[a] - 0.5).floor().max(0.0)) as usize)
        .collect();
    let hi: Vec<usize> = (0..n)
        .map(|a| ((((test.center[a] + test.half_width[a]) / h[a] - 0.5).ceil() as usize) + 1).min(g.nx))
        .collect();
    if (0..n).any(|a| lo[a] >= hi[a]) {
        return st;
    }
    let mut grad = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut idx = lo.clone();
    loop {
        let mut node = 0;
        for a in (0..n).rev() {
            node = node * g.nx + idx[a];
            y[a] = (idx[a] as f64 + 0.5) * h[a];
        }
        let phi = test.jet(&y, &mut grad);
        if phi != 0.0 || grad.iter().any(|&x| x != 0.0) {
            st.nodes.push(node);
            st.phi.push(phi);
            st.grad.extend_from_slice(&grad);
            st.lap.push(test.laplacian(&y));
        }
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < hi[a] {
                break;
            }
            idx[a] = lo[a];
            a += 1;
            if a == n {
                return st;
            }
        }
    }
}

fn slice_moments(f: &FlowFields, st: &Stencil, it: usize) -> SliceMoments {
    let g = &f.grid;
    let n = g.n;
    let cell: f64 = g.spacing()[..n].iter().product();
    let mut m = SliceMoments {
        u: vec![0.0; n],
        flux: vec![0.0; n],
        grad: vec![0.0; n * n],
        lap: vec![0.0; n],
        div: 0.0,
        b: 0.0,
        b_flux: 0.0,
        b_grad: vec![0.0; n],
        b_lap: 0.0,
    };
    let per_slice = f.slice_nodes();
    for (s, &node) in st.nodes.iter().enumerate() {
        let (phi, lap) = (st.phi[s], st.lap[s]);
        let grad = &st.grad[s * n..(s + 1) * n];
        let gi = it * per_slice + node;
        let u = &f.velocity[gi * n..(gi + 1) * n];
        let b = f.tracer[gi];
        let p = f.pressure[gi];
        let u_grad: f64 = u.iter().zip(grad).map(|(a, b)| a * b).sum();
        for k in 0..n {
            m.u[k] += u[k] * phi;
            m.lap[k] += u[k] * lap;
            for j in 0..n {
                m.grad[k * n + j] += u[k] * grad[j];
            }
            m.flux[k] += match &f.relaxed {
                Some(r) => (0..n).map(|j| r.stress[gi * n * n + k * n + j] * grad[j]).sum::<f64>(),
                None => u[k] * u_grad + p * grad[k],
            };
        }
        m.div += u_grad;
        m.b += b * phi;
        m.b_lap += b * lap;
        for j in 0..n {
            m.b_grad[j] += b * grad[j];
        }
        m.b_flux += match &f.relaxed {
            Some(r) => r.tracer_flux[gi * n..(gi + 1) * n].iter().zip(grad).map(|(a, b)| a * b).sum::<f64>(),
            None => b * u_grad,
        };
    }
    for v in [&mut m.u, &mut m.flux, &mut m.grad, &mut m.lap, &mut m.b_grad] {
        v.iter_mut().for_each(|x| *x *= cell);
    }
    for x in [&mut m.div, &mut m.b, &mut m.b_flux, &mut m.b_lap] {
        *x *= cell;
    }
    m
}

/// Checkpoint sample indices: `count` uniform times ending at the last sample.
pub fn checkpoint_indices(nt: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count).map(|c| c * (nt - 1) / count).filter(|&i| i > 0).collect();
    out.dedup();
    out
}

/// Pathwise weak residuals with the default options.
pub fn spde_weak_residual(
    u: &FlowFields,
    path: Option<&BrownianPath>,
    kind: NoiseKind,
    gamma: f64,
    tests: &[BumpTest],
) -> Result<ResidualReport, StochasticError> {
    spde_weak_residual_with(u, path, kind, gamma, tests, &WeakFormOptions::default())
}

/// Residuals of the Itô weak identities between the first time sample t₀ and
/// each checkpoint t_c, for vector tests φ e_k and scalar tests φ:
///
/// ∫u_k(t_c)φ − ∫u_k(t₀)φ − ∫∫ F_k·∇φ − (noise terms), with
/// multiplicative noise terms (γ²/2)∫∫u_kφ − γ∫∫u_kφ dB and transport terms
/// w∫∫u_kΔφ + Σ_j∫∫u_k∂_jφ dB_j (likewise for the tracer under transport).
/// Time integrals are trapezoidal on the field samples; stochastic integrals
/// are left-point sums over the sample times. Sample times should be path
/// nodes (path step T/(2·nt) puts the cell centers on nodes): a linearly
/// interpolated B has too little quadratic variation and biases the Itô
/// correction.
pub fn spde_weak_residual_with(
    u: &FlowFields,
    path: Option<&BrownianPath>,
    kind: NoiseKind,
    gamma: f64,
    tests: &[BumpTest],
    opts: &WeakFormOptions,
) -> Result<ResidualReport, StochasticError> {
    u.validate()?;
    let g = &u.grid;
    let n = g.n;
    for (i, t) in tests.iter().enumerate() {
        let inside = t.center.len() == n
            && (0..n).all(|a| t.center[a] - t.half_width[a] >= 0.0 && t.center[a] + t.half_width[a] <= g.extent[a]);
        if !inside {
            return Err(StochasticError::TestSupport(i));
        }
    }
    let bdim = match kind {
        NoiseKind::None => 0,
        NoiseKind::Transport => n,
        NoiseKind::Multiplicative => 1,
    };
    let times: Vec<f64> = (0..g.nt).map(|i| g.time_of(i)).collect();
    let mut bvals = vec![0.0; bdim * g.nt];
    if bdim > 0 {
        let path = path.ok_or_else(|| StochasticError::Invalid(format!("{} noise needs a path", kind.as_str())))?;
        if path.dim != bdim {
            return Err(StochasticError::Invalid(format!("path dimension {} != {bdim}", path.dim)));
        }
        if g.t_final > path.t_final() * (1.0 + 1e-9) {
            return Err(StochasticError::Invalid("field horizon exceeds the path horizon".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            path.value_at(t, &mut bvals[i * bdim..(i + 1) * bdim]);
        }
    }
    if kind == NoiseKind::Multiplicative && !(gamma >= 0.0) {
        return Err(StochasticError::Invalid(format!("γ must be ≥ 0, got {gamma}")));
    }
    let dt = g.t_final / g.nt as f64;
    let cps = checkpoint_indices(g.nt, opts.checkpoints.max(1));

    let per_test: Vec<Vec<[f64; 3]>> = tests
        .par_iter()
        .map(|t| {
            let st = stencil(u, t);
            let mom: Vec<SliceMoments> = (0..g.nt).map(|it| slice_moments(u, &st, it)).collect();
            let db = |i: usize, j: usize| bvals[(i + 1) * bdim + j] - bvals[i * bdim + j];
            // Running sums up to each sample index.
            let mut acc = vec![0.0; n];
            let mut acc_b = 0.0;
            let mut rows = Vec::with_capacity(cps.len());
            let mut next = 0;
            for i in 0..g.nt - 1 {
                let (a, b) = (&mom[i], &mom[i + 1]);
                for k in 0..n {
                    let mut inc = 0.5 * (a.flux[k] + b.flux[k]) * dt;
                    match kind {
                        NoiseKind::None => {}
                        NoiseKind::Multiplicative => {
                            inc += 0.5 * gamma * gamma * 0.5 * (a.u[k] + b.u[k]) * dt;
                            if opts.ito_term {
                                inc -= gamma * a.u[k] * db(i, 0);
                            }
                        }
                        NoiseKind::Transport => {
                            inc += opts.laplacian_weight * 0.5 * (a.lap[k] + b.lap[k]) * dt;
                            if opts.ito_term {
                                inc += (0..n).map(|j| a.grad[k * n + j] * db(i, j)).sum::<f64>();
                            }
                        }
                    }
                    acc[k] += inc;
                }
                let mut inc_b = 0.5 * (a.b_flux + b.b_flux) * dt;
                if kind == NoiseKind::Transport {
                    inc_b += opts.laplacian_weight * 0.5 * (a.b_lap + b.b_lap) * dt;
                    if opts.ito_term {
                        inc_b += (0..n).map(|j| a.b_grad[j] * db(i, j)).sum::<f64>();
                    }
                }
                acc_b += inc_b;
                if next < cps.len() && cps[next] == i + 1 {
                    let c = i + 1;
                    let m = (0..n).fold(0.0_f64, |m, k| m.max((mom[c].u[k] - mom[0].u[k] - acc[k]).abs()));
                    let tr = (mom[c].b - mom[0].b - acc_b).abs();
                    rows.push([m, mom[c].div.abs(), tr]);
                    next += 1;
                }
            }
            rows
        })
        .collect();

    let mut entries = Vec::new();
    let (mut mm, mut md, mut mt) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (ti, rows) in per_test.iter().enumerate() {
        for (ci, r) in rows.iter().enumerate() {
            for (eq, val) in [Equation::Momentum, Equation::Divergence, Equation::Tracer].into_iter().zip(r) {
                entries.push(ResidualEntry { equation: eq, test_id: ti, checkpoint: Some(ci), residual: *val });
            }
            mm = mm.max(r[0]);
            md = md.max(r[1]);
            mt = mt.max(r[2]);
        }
    }
    Ok(ResidualReport { momentum: mm, divergence: md, tracer: mt, entries, grid: g.clone() })
}
