use nalgebra::{DMatrix, DVector};

use super::hull::{caratheodory_decompose, ConstraintContext, HullOracle, MAX_NET_REFINEMENTS};
use super::state::{segment_constant, StatePoint, Tolerances};
use super::GeometryError;

/// A wave-cone element together with a unit annihilating vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaDirection {
    /// Direction in state space; `q` is always zero.
    pub dir: StatePoint,
    /// Unit vector in ℝⁿ⁺¹ (space components first, time last).
    pub xi: DVector<f64>,
}

impl LambdaDirection {
    /// Largest absolute entry of `matrix_form(dir)·ξ`.
    pub fn annihilation_residual(&self) -> f64 {
        (self.dir.matrix_form() * &self.xi).amax()
    }

    /// |(v̄, b̄)|, the amplitude entering the energy estimate.
    pub fn velocity_tracer_norm(&self) -> f64 {
        (self.dir.v.norm_squared() + self.dir.b * self.dir.b).sqrt()
    }
}

/// The matrix whose kernel defines the admissible ξ for a vertex pair.
///
/// Rows: (v_j⊗v_j − v_1⊗v_1 | v_j − v_1), ((v_j − v_1)ᵀ | 0),
/// ((b_j v_j − b_1 v_1)ᵀ | b_j − b_1).
pub fn difference_matrix(v_j: &DVector<f64>, b_j: f64, v_1: &DVector<f64>, b_1: f64) -> DMatrix<f64> {
    let n = v_j.len();
    let mut m = DMatrix::zeros(n + 2, n + 1);
    for i in 0..n {
        for k in 0..n {
            m[(i, k)] = v_j[i] * v_j[k] - v_1[i] * v_1[k];
        }
        m[(i, n)] = v_j[i] - v_1[i];
        m[(n, i)] = v_j[i] - v_1[i];
        m[(n + 1, i)] = b_j * v_j[i] - b_1 * v_1[i];
    }
    m[(n + 1, n)] = b_j - b_1;
    m
}

/// Explicit annihilating vector for a pair of distinct velocities.
///
/// When the first components agree the vector is (−1, 0, …, 0, v_1¹); otherwise
/// its space part is (s, 1, …, 1) with s fixed by orthogonality to v_j − v_1, and
/// its time part is −v_1·(s, 1, …, 1).
pub fn xi_vector(v_j: &DVector<f64>, v_1: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    let n = v_j.len();
    if v_1.len() != n || n < 2 {
        return Err(GeometryError::ShapeMismatch { n });
    }
    if (v_j - v_1).amax() == 0.0 {
        return Err(GeometryError::DegenerateDirection);
    }
    Ok(xi_for_pair(v_j, v_1))
}

/// Branch formula without the distinctness check. For coinciding velocities
/// (a pair differing only in the tracer sign) the first branch still
/// annihilates the difference matrix.
fn xi_for_pair(v_j: &DVector<f64>, v_1: &DVector<f64>) -> DVector<f64> {
    let n = v_j.len();
    let diff = v_j - v_1;
    let mut xi = DVector::zeros(n + 1);
    let d1 = diff[0];
    if d1 == 0.0 {
        xi[0] = -1.0;
        xi[n] = v_1[0];
    } else {
        let s: f64 = (1..n).map(|i| diff[i]).sum();
        xi[0] = -s / d1;
        for i in 1..n {
            xi[i] = 1.0;
        }
        let t: f64 = (1..n).map(|i| v_j[0] * v_1[i] - v_1[0] * v_j[i]).sum();
        xi[n] = -t / d1;
    }
    xi
}

/// Null vector of the assembled matrix when its smallest singular value is
/// below `tol.null`.
pub fn wave_cone_member(dir: &StatePoint, tol: &Tolerances) -> Option<LambdaDirection> {
    let m = dir.matrix_form();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref()?;
    let (idx, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    if smin > tol.null {
        return None;
    }
    let xi = v_t.row(idx).transpose().normalize();
    Some(LambdaDirection { dir: dir.clone(), xi })
}

/// Λ-segment through an interior point.
///
/// The endpoints `p ± dir` are re-verified at half the input margin: `p ± 2·dir`
/// is a convex combination of net vertices, so the half-margin is what
/// convexity guarantees.
pub fn segment_direction(
    p: &StatePoint,
    ctx: &ConstraintContext,
    margin: f64,
    tol: &Tolerances,
) -> Result<LambdaDirection, GeometryError> {
    let oracle = HullOracle::new(*ctx)?;
    segment_direction_with(p, &oracle, margin, tol)
}

/// As [`segment_direction`] with a prebuilt oracle for the membership checks.
pub fn segment_direction_with(
    p: &StatePoint,
    oracle: &HullOracle,
    margin: f64,
    tol: &Tolerances,
) -> Result<LambdaDirection, GeometryError> {
    let ctx = *oracle.context();
    p.validate(tol)?;
    if !(margin > 0.0) {
        return Err(GeometryError::InvalidMargin(margin));
    }
    if !oracle.interior_member(p, margin) {
        return Err(GeometryError::NotInterior);
    }
    let n = ctx.n;
    let deficit = (ctx.h_t * ctx.h_t + 1.0) - (p.v.norm_squared() + p.b * p.b);
    let bound = segment_constant(n) * deficit;

    let mut refine_ctx = ctx;
    let mut last_err = GeometryError::DecompositionFailed { residual: f64::NAN };
    for _ in 0..=MAX_NET_REFINEMENTS {
        let dec = caratheodory_decompose(p, &refine_ctx)?;
        if dec.vertices.len() < 2 {
            return Err(GeometryError::NotInterior);
        }
        let (l1, x1) = (dec.weights[0], &dec.vertices[0]);
        let mut j = 1;
        let mut best = f64::NEG_INFINITY;
        for (i, (w, x)) in dec.weights.iter().zip(&dec.vertices).enumerate().skip(1) {
            let score = w * w * ((&x.v - &x1.v).norm_squared() + (x.b - x1.b).powi(2));
            if score > best {
                best = score;
                j = i;
            }
        }
        let _ = l1;
        let (lj, xj) = (dec.weights[j], &dec.vertices[j]);
        let dir = xj.state().sub(&x1.state()).scaled(0.5 * lj);
        let xi = xi_for_pair(&xj.v, &x1.v).normalize();
        let cand = LambdaDirection { dir, xi };
        let scale = 1.0 + cand.dir.matrix_form().amax();
        if cand.annihilation_residual() > tol.null.max(1e-12) * scale {
            last_err = GeometryError::Internal(format!(
                "annihilation residual {:.3e}",
                cand.annihilation_residual()
            ));
        } else if cand.velocity_tracer_norm() < bound {
            last_err = GeometryError::BoundViolation {
                amplitude: cand.velocity_tracer_norm(),
                bound,
            };
        } else {
            let plus = p.add(&cand.dir);
            let minus = p.sub(&cand.dir);
            if oracle.interior_member(&plus, 0.5 * margin) && oracle.interior_member(&minus, 0.5 * margin) {
                return Ok(cand);
            }
            last_err = GeometryError::Internal("segment endpoint left the hull interior".into());
        }
        refine_ctx.vertex_net_size *= 2;
    }
    Err(last_err)
}
