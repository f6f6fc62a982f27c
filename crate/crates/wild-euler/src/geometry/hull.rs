use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nnls::NnlsSystem;
use super::state::{e_value_raw, flat_len, tartar_dim, tartar_from_flat, Layout, StatePoint, Tolerances};
use super::GeometryError;

/// Residual below which a feasibility program counts as solved.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reconstruction tolerance of a Carathéodory decomposition.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// Number of net doublings tried before a decomposition is declared failed.
pub const MAX_NET_REFINEMENTS: usize = 4;

/// Time-slice data of the constraint set: dimension, energy level and net density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintContext {
    pub n: usize,
    pub h_t: f64,
    pub vertex_net_size: usize,
}

impl ConstraintContext {
    pub fn new(n: usize, h_t: f64, vertex_net_size: usize) -> Result<Self, GeometryError> {
        let ctx = Self { n, h_t, vertex_net_size };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.n < 2 {
            return Err(GeometryError::InvalidContext(format!("dimension n = {} < 2", self.n)));
        }
        if !(self.h_t > 0.0) || !self.h_t.is_finite() {
            return Err(GeometryError::InvalidContext(format!("h_t = {} must be positive", self.h_t)));
        }
        if self.vertex_net_size < min_net_size(self.n) {
            return Err(GeometryError::DegenerateNet {
                size: self.vertex_net_size,
                min: min_net_size(self.n),
            });
        }
        Ok(())
    }
}

/// Smallest sphere net accepted for dimension n.
pub const fn min_net_size(n: usize) -> usize {
    2 * n * n
}

/// Sample points of the sphere of radius `h` in ℝⁿ.
///
/// n = 2 uses equally spaced angles (nested under doubling), n = 3 a Fibonacci
/// lattice, n ≥ 4 the coordinate and diagonal directions padded with seeded
/// Gaussian directions.
pub fn sphere_net(n: usize, h: f64, size: usize) -> Vec<DVector<f64>> {
    let mut pts: Vec<DVector<f64>> = Vec::with_capacity(size);
    match n {
        2 => {
            for i in 0..size {
                let th = 2.0 * std::f64::consts::PI * i as f64 / size as f64;
                pts.push(DVector::from_vec(vec![th.cos(), th.sin()]));
            }
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for i in 0..size {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / size as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                pts.push(DVector::from_vec(vec![r * th.cos(), y, r * th.sin()]));
            }
        }
        _ => {
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut e = DVector::zeros(n);
                    e[i] = s;
                    pts.push(e);
                }
            }
            let r2 = std::f64::consts::FRAC_1_SQRT_2;
            for i in 0..n {
                for j in i + 1..n {
                    for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let mut e = DVector::zeros(n);
                        e[i] = si * r2;
                        e[j] = sj * r2;
                        pts.push(e);
                    }
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + n as u64);
            while pts.len() < size {
                let g: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let norm = g.norm();
                if norm > 1e-12 {
                    pts.push(g / norm);
                }
            }
            pts.truncate(size.max(2 * n * n));
        }
    }
    pts.into_iter().map(|p| p * h).collect()
}

/// One vertex of the constraint set: sign of the tracer and the velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct NetVertex {
    pub b: f64,
    pub v: DVector<f64>,
}

impl NetVertex {
    pub fn state(&self) -> StatePoint {
        StatePoint::vertex(self.b, &self.v)
    }
}

#[derive(Debug, Clone)]
struct NetLevel {
    vertices: Vec<NetVertex>,
    system: NnlsSystem,
}

impl NetLevel {
    fn build(n: usize, h: f64, size: usize) -> Self {
        let mut vertices = Vec::with_capacity(2 * size);
        for v in sphere_net(n, h, size) {
            for b in [1.0, -1.0] {
                vertices.push(NetVertex { b, v: v.clone() });
            }
        }
        let cols: Vec<Vec<f64>> = vertices
            .iter()
            .map(|vx| {
                let mut c = vx.state().to_tartar();
                c.push(1.0);
                c
            })
            .collect();
        let system = NnlsSystem::new(tartar_dim(n) + 1, &cols);
        Self { vertices, system }
    }

    fn solve(&self, coords: &[f64]) -> super::nnls::NnlsSolution {
        let mut y = coords.to_vec();
        y.push(1.0);
        self.system.solve(&y)
    }
}

/// Cached vertex nets for one time slice; answers membership queries.
#[derive(Debug, Clone)]
pub struct HullOracle {
    ctx: ConstraintContext,
    levels: Vec<NetLevel>,
}

impl HullOracle {
    pub fn new(ctx: ConstraintContext) -> Result<Self, GeometryError> {
        ctx.validate()?;
        let mut levels = Vec::new();
        // For n = 2 the angle nets are nested, so a quarter-size net is an inner
        // approximation of the full one and serves as a cheap first pass.
        let m = ctx.vertex_net_size;
        if ctx.n == 2 && m % 4 == 0 && m / 4 >= min_net_size(2) {
            levels.push(NetLevel::build(ctx.n, ctx.h_t, m / 4));
        }
        levels.push(NetLevel::build(ctx.n, ctx.h_t, m));
        Ok(Self { ctx, levels })
    }

    pub fn context(&self) -> &ConstraintContext {
        &self.ctx
    }

    /// Whether the tartar coordinates lie in the convex hull of the net.
    pub fn in_net_hull(&self, coords: &[f64]) -> bool {
        let tol = FEASIBILITY_TOL * self.ctx.h_t.max(1.0).powi(2);
        self.levels.iter().any(|l| l.solve(coords).residual <= tol)
    }

    /// Interior test on a flat node slice (layout `b, η, v, z, q`).
    pub fn interior_member_flat(&self, s: &[f64], margin: f64) -> bool {
        let n = self.ctx.n;
        debug_assert_eq!(s.len(), flat_len(n));
        let l = Layout { n };
        let h2 = self.ctx.h_t * self.ctx.h_t;
        if s[l.b()].abs() > 1.0 - margin {
            return false;
        }
        let e = e_value_raw(n, &s[l.v()..l.v() + n], &s[l.z()..l.z() + n * n]);
        if e > 0.5 * h2 - margin {
            return false;
        }
        let c = tartar_from_flat(n, s);
        let mut y = c.clone();
        for k in 0..c.len() {
            for sign in [1.0, -1.0] {
                y[k] = c[k] + sign * margin;
                if !self.in_net_hull(&y) {
                    return false;
                }
            }
            y[k] = c[k];
        }
        true
    }

    pub fn interior_member(&self, p: &StatePoint, margin: f64) -> bool {
        self.interior_member_flat(&p.to_flat(), margin)
    }
}

/// Membership in the constraint set within `tol`.
pub fn constraint_set_member(
    b: f64,
    eta: &DVector<f64>,
    v: &DVector<f64>,
    z: &nalgebra::DMatrix<f64>,
    ctx: &ConstraintContext,
    tol: f64,
) -> bool {
    let n = v.len();
    if (v.norm() - ctx.h_t).abs() > tol {
        return false;
    }
    if (b - 1.0).abs() > tol && (b + 1.0).abs() > tol {
        return false;
    }
    if (eta - v * b).norm() > tol {
        return false;
    }
    let target = v * v.transpose() - nalgebra::DMatrix::identity(n, n) * (v.norm_squared() / n as f64);
    (z - target).norm() <= tol
}

/// Interior membership of the hull of the constraint set times [−1, 1].
pub fn hull_interior_member(
    p: &StatePoint,
    ctx: &ConstraintContext,
    margin: f64,
    tol: &Tolerances,
) -> Result<bool, GeometryError> {
    if !(margin > 0.0) {
        return Err(GeometryError::InvalidMargin(margin));
    }
    p.validate(tol)?;
    if p.dim() != ctx.n {
        return Err(GeometryError::ShapeMismatch { n: ctx.n });
    }
    let oracle = HullOracle::new(*ctx)?;
    Ok(oracle.interior_member(p, margin))
}

/// Convex combination of constraint-set vertices reproducing a point.
#[derive(Debug, Clone)]
pub struct CaratheodoryDecomposition {
    /// Positive weights, sorted in decreasing order.
    pub weights: Vec<f64>,
    pub vertices: Vec<NetVertex>,
    /// Reconstruction residual in tartar coordinates.
    pub residual: f64,
    /// Net size at which the decomposition was found.
    pub net_size: usize,
}

impl CaratheodoryDecomposition {
    pub fn reconstruct(&self, n: usize) -> StatePoint {
        self.vertices
            .iter()
            .zip(&self.weights)
            .fold(StatePoint::zeros(n), |acc, (v, &w)| acc.add(&v.state().scaled(w)))
    }
}

/// Decompose the (b, η, v, z) part of `p` into at most N+1 vertices, refining
/// the net up to [`MAX_NET_REFINEMENTS`] times.
pub fn caratheodory_decompose(
    p: &StatePoint,
    ctx: &ConstraintContext,
) -> Result<CaratheodoryDecomposition, GeometryError> {
    ctx.validate()?;
    if p.dim() != ctx.n {
        return Err(GeometryError::ShapeMismatch { n: ctx.n });
    }
    let coords = p.to_tartar();
    let mut size = ctx.vertex_net_size;
    let mut best_residual = f64::INFINITY;
    for _ in 0..=MAX_NET_REFINEMENTS {
        let level = NetLevel::build(ctx.n, ctx.h_t, size);
        let sol = level.solve(&coords);
        best_residual = best_residual.min(sol.residual);
        if sol.residual <= FEASIBILITY_TOL * ctx.h_t.max(1.0).powi(2) {
            let mut items: Vec<(f64, NetVertex)> = sol
                .support
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|&(j, w)| (w, level.vertices[j].clone()))
                .collect();
            let total: f64 = items.iter().map(|x| x.0).sum();
            for it in &mut items {
                it.0 /= total;
            }
            items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            let dec = CaratheodoryDecomposition {
                weights: items.iter().map(|x| x.0).collect(),
                vertices: items.into_iter().map(|x| x.1).collect(),
                residual: 0.0,
                net_size: size,
            };
            let rec = dec.reconstruct(ctx.n).to_tartar();
            let residual = rec.iter().zip(&coords).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if residual <= RECONSTRUCTION_TOL * ctx.h_t.max(1.0).powi(2) {
                return Ok(CaratheodoryDecomposition { residual, ..dec });
            }
            best_residual = best_residual.min(residual);
        }
        size *= 2;
    }
    Err(GeometryError::DecompositionFailed { residual: best_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn ctx2() -> ConstraintContext {
        ConstraintContext::new(2, 1.0, 64).unwrap()
    }

    #[test]
    fn constraint_set_examples() {
        let c = ctx2();
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let z = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5]);
        assert!(constraint_set_member(1.0, &v, &v, &z, &c, 1e-12));
        let zero = DVector::zeros(2);
        assert!(!constraint_set_member(0.0, &zero, &zero, &DMatrix::zeros(2, 2), &c, 1e-12));
        let eta = DVector::from_vec(vec![0.0, 1.0]);
        assert!(!constraint_set_member(1.0, &eta, &v, &z, &c, 1e-12));
    }

    #[test]
    fn hull_examples() {
        let c = ctx2();
        let tol = Tolerances::default();
        assert!(hull_interior_member(&StatePoint::zeros(2), &c, 0.05, &tol).unwrap());
        let vx = StatePoint::vertex(1.0, &DVector::from_vec(vec![1.0, 0.0]));
        assert!(!hull_interior_member(&vx, &c, 1e-3, &tol).unwrap());
        // v = (1/2, 0), z = diag(−1/4, 1/4): λ_max(v⊗v − z) = 1/2, so e = h²/2.
        let mut r = StatePoint::zeros(2);
        r.v = DVector::from_vec(vec![0.5, 0.0]);
        r.z = DMatrix::from_row_slice(2, 2, &[-0.25, 0.0, 0.0, 0.25]);
        let er = e_value_raw(2, r.v.as_slice(), r.z.as_slice());
        assert!((er - 0.5).abs() < 1e-15);
        assert!(!hull_interior_member(&r, &c, 0.01, &tol).unwrap());
        assert!(matches!(
            hull_interior_member(&StatePoint::zeros(2), &c, 0.0, &tol),
            Err(GeometryError::InvalidMargin(_))
        ));
        let tiny = ConstraintContext { n: 2, h_t: 1.0, vertex_net_size: 4 };
        assert!(matches!(
            hull_interior_member(&StatePoint::zeros(2), &tiny, 0.05, &tol),
            Err(GeometryError::DegenerateNet { .. })
        ));
    }

    #[test]
    fn decomposition_of_zero() {
        let c = ctx2();
        let dec = caratheodory_decompose(&StatePoint::zeros(2), &c).unwrap();
        assert!(dec.vertices.len() <= tartar_dim(2) + 1);
        assert!((dec.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dec.residual < 1e-9);
    }

    #[test]
    fn decomposition_outside_fails() {
        let mut p = StatePoint::zeros(2);
        p.b = 2.0;
        assert!(matches!(
            caratheodory_decompose(&p, &ctx2()),
            Err(GeometryError::DecompositionFailed { .. })
        ));
    }
}
