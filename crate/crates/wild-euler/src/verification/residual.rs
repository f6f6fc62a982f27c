use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Layout;
use crate::iteration::{deficit, Grid, SubsolutionField};

/// Tensor-product polynomial bump Π_a (1 − ((y_a − c_a)/s_a)²)^m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub power: i32,
}

impl BumpTest {
    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter().zip(&self.center).zip(&self.half_width).all(|((y, c), s)| (y - c).abs() < *s)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        if !self.contains(y) {
            return 0.0;
        }
        y.iter()
            .zip(&self.center)
            .zip(&self.half_width)
            .map(|((y, c), s)| (1.0 - ((y - c) / s).powi(2)).powi(self.power))
            .product()
    }

    /// Value and gradient.
    pub fn jet(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if !self.contains(y) {
            return 0.0;
        }
        let d = y.len();
        let m = self.power;
        let mut f = vec![0.0; d];
        let mut df = vec![0.0; d];
        for a in 0..d {
            let u = (y[a] - self.center[a]) / self.half_width[a];
            let base = 1.0 - u * u;
            f[a] = base.powi(m);
            df[a] = m as f64 * base.powi(m - 1) * (-2.0 * u / self.half_width[a]);
        }
        for a in 0..d {
            grad[a] = (0..d).map(|b| if b == a { df[b] } else { f[b] }).product();
        }
        f.iter().product()
    }

    /// Δφ.
    pub fn laplacian(&self, y: &[f64]) -> f64 {
        if !self.contains(y) {
            return 0.0;
        }
        let d = y.len();
        let m = self.power as f64;
        let mut f = vec![0.0; d];
        let mut f2 = vec![0.0; d];
        for a in 0..d {
            let s = self.half_width[a];
            let u = (y[a] - self.center[a]) / s;
            let base = 1.0 - u * u;
            f[a] = base.powi(self.power);
            f2[a] = m * (m - 1.0) * base.powi(self.power - 2) * 4.0 * u * u / (s * s)
                - m * base.powi(self.power - 1) * 2.0 / (s * s);
        }
        (0..d).map(|a| (0..d).map(|b| if b == a { f2[b] } else { f[b] }).product::<f64>()).sum()
    }
}

/// `count` seeded bumps with supports strictly inside the grid box.
pub fn bump_tests(grid: &Grid, count: usize, seed: u64) -> Vec<BumpTest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_0000);
    let lengths = grid.lengths();
    (0..count)
        .map(|_| {
            let half_width: Vec<f64> = lengths.iter().map(|l| l * rng.gen_range(0.15..0.35)).collect();
            let center = lengths
                .iter()
                .zip(&half_width)
                .map(|(l, s)| rng.gen_range(*s..l - s))
                .collect();
            BumpTest { center, half_width, power: 4 }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Momentum,
    Divergence,
    Tracer,
}

/// One (equation, test) residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub equation: Equation,
    pub test_id: usize,
    /// Checkpoint index for time-integrated identities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<usize>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub momentum: f64,
    pub divergence: f64,
    pub tracer: f64,
    pub entries: Vec<ResidualEntry>,
    pub grid: Grid,
}

impl ResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.momentum.max(self.divergence).max(self.tracer)
    }
}

fn node_range(grid: &Grid, t: &BumpTest) -> (Vec<usize>, Vec<usize>) {
    let h = grid.spacing();
    let shape = grid.shape();
    let lo = (0..h.len())
        .map(|a| (((t.center[a] - t.half_width[a]) / h[a] - 0.5).floor().max(0.0)) as usize)
        .collect();
    let hi = (0..h.len())
        .map(|a| ((((t.center[a] + t.half_width[a]) / h[a] - 0.5).ceil() as usize) + 1).min(shape[a]))
        .collect();
    (lo, hi)
}

/// Signed weak residuals ∫ U_row·∇φ of the n+2 rows of the matrix form
/// (momentum rows, divergence row, tracer row), by the midpoint rule.
pub fn signed_rows(field: &SubsolutionField, t: &BumpTest) -> Vec<f64> {
    let g = &field.grid;
    let n = g.n;
    let d = g.dim();
    let lay = Layout { n };
    let cell = g.cell_volume();
    let (lo, hi) = node_range(g, t);
    let mut rows = vec![0.0; n + 2];
    if (0..d).any(|a| lo[a] >= hi[a]) {
        return rows;
    }
    let mut grad = vec![0.0; d];
    let mut m = lo.clone();
    loop {
        let idx = g.linear_index(&m);
        let y = g.coords(idx);
        t.jet(&y, &mut grad);
        let s = field.node(idx);
        let q = s[lay.q()];
        for i in 0..n {
            let mut acc = s[lay.v() + i] * grad[n];
            for j in 0..n {
                acc += s[lay.z() + i * n + j] * grad[j];
            }
            acc += q * grad[i];
            rows[i] += acc * cell;
        }
        rows[n] += (0..n).map(|j| s[lay.v() + j] * grad[j]).sum::<f64>() * cell;
        rows[n + 1] += ((0..n).map(|j| s[lay.eta() + j] * grad[j]).sum::<f64>() + s[lay.b()] * grad[n]) * cell;

        let mut a = 0;
        loop {
            m[a] += 1;
            if m[a] < hi[a] {
                break;
            }
            m[a] = lo[a];
            a += 1;
            if a == d {
                return rows;
            }
        }
    }
}

/// Weak residuals |∫ U_row·∇φ| of the three equations for every test.
pub fn relaxed_system_residual(field: &SubsolutionField, tests: &[BumpTest]) -> ResidualReport {
    let n = field.grid.n;
    let per_test: Vec<[f64; 3]> = tests
        .par_iter()
        .map(|t| {
            let rows = signed_rows(field, t);
            let mom = rows[..n].iter().fold(0.0_f64, |x, r| x.max(r.abs()));
            [mom, rows[n].abs(), rows[n + 1].abs()]
        })
        .collect();
    let mut entries = Vec::with_capacity(3 * tests.len());
    for (i, r) in per_test.iter().enumerate() {
        for (eq, val) in [Equation::Momentum, Equation::Divergence, Equation::Tracer].into_iter().zip(r) {
            entries.push(ResidualEntry { equation: eq, test_id: i, checkpoint: None, residual: *val });
        }
    }
    let col = |k: usize| per_test.iter().fold(0.0_f64, |m, r| m.max(r[k]));
    ResidualReport { momentum: col(0), divergence: col(1), tracer: col(2), entries, grid: field.grid.clone() }
}

/// Pointwise distance of a field from the constraint levels |v| = h, |b| = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    /// sup over O of ||v| − h|.
    pub sup_gap_v: f64,
    /// sup over O of ||b| − 1|.
    pub sup_gap_b: f64,
    /// Mean of ||v| − h| over O.
    pub mean_gap_v: f64,
    /// Mean of ||b| − 1| over O.
    pub mean_gap_b: f64,
    pub deficit: f64,
}

pub fn constraint_saturation(field: &SubsolutionField) -> SaturationReport {
    let n = field.grid.n;
    let lay = Layout { n };
    let nodes = field.grid.node_count();
    let (mut sv, mut sb, mut mv, mut mb) = (0.0_f64, 0.0_f64, 0.0, 0.0);
    for i in 0..nodes {
        let s = field.node(i);
        let v = s[lay.v()..lay.v() + n].iter().map(|x| x * x).sum::<f64>().sqrt();
        let gv = (v - field.h_at_node(i)).abs();
        let gb = (s[lay.b()].abs() - 1.0).abs();
        sv = sv.max(gv);
        sb = sb.max(gb);
        mv += gv;
        mb += gb;
    }
    SaturationReport {
        sup_gap_v: sv,
        sup_gap_b: sb,
        mean_gap_v: mv / nodes as f64,
        mean_gap_b: mb / nodes as f64,
        deficit: deficit(field),
    }
}
