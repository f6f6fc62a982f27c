use nalgebra::{DMatrix, DVector};

use super::cutoff::{norm, CutoffSpec};
use super::PerturbationError;
use crate::geometry::{flat_len, LambdaDirection, Layout, StatePoint};

/// Relative annihilation tolerance accepted when building a patch.
pub const ANNIHILATION_TOL: f64 = 1e-9;

/// Invertible A with A e₁ = f and A e_{n+1} = e_{n+1}; the middle columns
/// complete {f, e_{n+1}} by Gram–Schmidt over the spatial unit vectors.
pub fn coordinate_change(f: &DVector<f64>) -> Result<DMatrix<f64>, PerturbationError> {
    let d = f.len();
    if d < 3 {
        return Err(PerturbationError::Degenerate(format!("space–time dimension {d} < 3")));
    }
    let fnorm = f.norm();
    let mut f_perp = f.clone();
    f_perp[d - 1] = 0.0;
    if !(fnorm > 0.0) || f_perp.norm() <= 1e-12 * fnorm {
        return Err(PerturbationError::Degenerate("f is parallel to the time axis".into()));
    }
    let mut basis = vec![DVector::from_fn(d, |i, _| if i == d - 1 { 1.0 } else { 0.0 }), f_perp.normalize()];
    let mut middle = Vec::with_capacity(d - 2);
    for k in 0..d - 1 {
        if middle.len() == d - 2 {
            break;
        }
        let mut c = DVector::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 });
        for b in &basis {
            let proj = b.dot(&c);
            c -= b * proj;
        }
        if c.norm() > 1e-8 {
            let c = c.normalize();
            basis.push(c.clone());
            middle.push(c);
        }
    }
    let mut a = DMatrix::zeros(d, d);
    a.set_column(0, f);
    for (j, c) in middle.iter().enumerate() {
        a.set_column(j + 1, c);
    }
    a[(d - 1, d - 1)] = 1.0;
    Ok(a)
}

/// Precomputed linear data of a patch in the frame of A.
#[derive(Debug, Clone, PartialEq)]
struct Frame {
    d: usize,
    /// Unit oscillation direction f.
    f: Vec<f64>,
    /// A⁻¹, row-major.
    a_inv: Vec<f64>,
    /// M' = AᵀMA for the Euler block M, row-major; `None` when M = 0.
    m_prime: Option<Vec<f64>>,
    /// Ĝ = AᵀŴ for the tracer row Ŵ; `None` when Ŵ = 0.
    g_hat: Option<Vec<f64>>,
}

impl Frame {
    fn build(dir: &StatePoint, xi: &DVector<f64>) -> Result<Self, PerturbationError> {
        let n = dir.dim();
        let d = n + 1;
        let f = xi.normalize();
        let a = coordinate_change(&f)?;
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| PerturbationError::Degenerate("coordinate change is singular".into()))?;
        let full = dir.matrix_form();
        let m = full.rows(0, d).into_owned();
        let w = full.row(d).transpose();
        let m_prime = if m.amax() > 0.0 {
            Some(row_major(&(a.transpose() * &m * &a)))
        } else {
            None
        };
        let g_hat = if w.amax() > 0.0 {
            Some((a.transpose() * w).iter().copied().collect())
        } else {
            None
        };
        Ok(Self {
            d,
            f: f.iter().copied().collect(),
            a_inv: row_major(&a_inv),
            m_prime,
            g_hat,
        })
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r * c).map(|k| m[(k / c, k % c)]).collect()
}

/// Localized oscillatory field whose matrix form is row-wise divergence free
/// in space–time and close to the segment [−dir, dir].
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPatch {
    pub center: Vec<f64>,
    pub radius: f64,
    pub direction: LambdaDirection,
    pub frequency: u32,
    pub cutoff: CutoffSpec,
    pub epsilon: f64,
    pub phase: f64,
    frame: Frame,
}

impl PerturbationPatch {
    /// Patch on the unit ball at the origin for a Λ-direction.
    pub fn new(
        direction: LambdaDirection,
        frequency: u32,
        cutoff: CutoffSpec,
        epsilon: f64,
    ) -> Result<Self, PerturbationError> {
        let scale = 1.0 + direction.dir.matrix_form().amax();
        let res = direction.annihilation_residual();
        if res > ANNIHILATION_TOL * scale {
            return Err(PerturbationError::InvalidDirection(format!(
                "ξ does not annihilate the direction (residual {res:.3e})"
            )));
        }
        Self::new_unchecked(direction, frequency, cutoff, epsilon)
    }

    pub(crate) fn new_unchecked(
        direction: LambdaDirection,
        frequency: u32,
        cutoff: CutoffSpec,
        epsilon: f64,
    ) -> Result<Self, PerturbationError> {
        let n = direction.dir.dim();
        if direction.xi.len() != n + 1 {
            return Err(PerturbationError::InvalidDirection("ξ must have n+1 components".into()));
        }
        if n + 1 > 16 {
            return Err(PerturbationError::InvalidDirection(format!("dimension n = {n} exceeds 15")));
        }
        if frequency == 0 {
            return Err(PerturbationError::InvalidDirection("frequency must be at least 1".into()));
        }
        let frame = Frame::build(&direction.dir, &direction.xi)?;
        Ok(Self {
            center: vec![0.0; n + 1],
            radius: 1.0,
            direction,
            frequency,
            cutoff,
            epsilon,
            phase: 0.0,
            frame,
        })
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn n(&self) -> usize {
        self.frame.d - 1
    }

    /// Whether `y` lies in the closed support ball.
    pub fn contains(&self, y: &[f64]) -> bool {
        let r2: f64 = y.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        r2 < self.radius * self.radius
    }

    /// Flat state (`b, η, v, z, q`) of the field at the space–time point `y`.
    pub fn eval(&self, y: &[f64], out: &mut [f64]) {
        let d = self.frame.d;
        let mut local = [0.0; 16];
        let local = &mut local[..d];
        for i in 0..d {
            local[i] = (y[i] - self.center[i]) / self.radius;
        }
        self.eval_local(local, out);
    }

    pub fn eval_state(&self, y: &[f64]) -> StatePoint {
        let mut out = vec![0.0; flat_len(self.n())];
        self.eval(y, &mut out);
        StatePoint::from_flat(self.n(), &out)
    }

    /// Evaluation in the coordinates of the unit ball.
    pub fn eval_local(&self, y: &[f64], out: &mut [f64]) {
        let fr = &self.frame;
        let d = fr.d;
        let n = d - 1;
        out.iter_mut().for_each(|x| *x = 0.0);
        if norm(y) >= 1.0 {
            return;
        }
        let mut grad = [0.0; 16];
        let mut hess = [0.0; 256];
        let phi = self.cutoff.jet(y, &mut grad[..d], &mut hess[..d * d]);
        if phi == 0.0 && grad[..d].iter().all(|&g| g == 0.0) {
            return;
        }
        let nf = self.frequency as f64;
        let arg = nf * y.iter().zip(&fr.f).map(|(a, b)| a * b).sum::<f64>() + self.phase;
        let (s, c) = arg.sin_cos();

        // Φ = A⁻¹∇φ and Φ₂ = A⁻¹∇²φA⁻ᵀ.
        let mut big_phi = [0.0; 16];
        for k in 0..d {
            big_phi[k] = (0..d).map(|i| fr.a_inv[k * d + i] * grad[i]).sum();
        }
        let mut tmp = [0.0; 256];
        for k in 0..d {
            for j in 0..d {
                tmp[k * d + j] = (0..d).map(|i| fr.a_inv[k * d + i] * hess[i * d + j]).sum();
            }
        }
        // Q_kl = D_k D_l g with g = φ sin(N f·y + ϑ) and D = A⁻¹∇.
        let mut q = [0.0; 256];
        for k in 0..d {
            for l in 0..d {
                let phi2: f64 = (0..d).map(|j| tmp[k * d + j] * fr.a_inv[l * d + j]).sum();
                let mut v = phi2 * s;
                if l == 0 {
                    v += nf * c * big_phi[k];
                }
                if k == 0 {
                    v += nf * c * big_phi[l];
                }
                if k == 0 && l == 0 {
                    v -= nf * nf * phi * s;
                }
                q[k * d + l] = v;
            }
        }
        let inv_n2 = 1.0 / (nf * nf);
        let lay = Layout { n };

        if let Some(gh) = &fr.g_hat {
            let mut g = [0.0; 16];
            g[0] = inv_n2 * (1..d).map(|i| gh[i] * q[i]).sum::<f64>();
            for i in 1..d {
                g[i] = -inv_n2 * gh[i] * q[0];
            }
            // W = A⁻ᵀG.
            for i in 0..d {
                let w: f64 = (0..d).map(|k| fr.a_inv[k * d + i] * g[k]).sum();
                if i < n {
                    out[lay.eta() + i] = w;
                } else {
                    out[lay.b()] = w;
                }
            }
        }

        if let Some(mp) = &fr.m_prime {
            // P = M'Q, contraction M':Q.
            let mut p1 = [0.0; 16];
            let mut contraction = 0.0;
            for i in 0..d {
                p1[i] = (0..d).map(|k| mp[i * d + k] * q[k * d]).sum();
                for k in 0..d {
                    contraction += mp[i * d + k] * q[i * d + k];
                }
            }
            let mut h = [0.0; 256];
            for i in 0..d {
                for j in 0..d {
                    let mut v = mp[i * d + j] * q[0];
                    if j == 0 {
                        v -= p1[i];
                    }
                    if i == 0 {
                        v -= p1[j];
                    }
                    if i == 0 && j == 0 {
                        v += contraction;
                    }
                    h[i * d + j] = -inv_n2 * v;
                }
            }
            // U = A⁻ᵀHA⁻¹.
            let mut ha = [0.0; 256];
            for i in 0..d {
                for j in 0..d {
                    ha[i * d + j] = (0..d).map(|k| h[i * d + k] * fr.a_inv[k * d + j]).sum();
                }
            }
            let mut u = [0.0; 256];
            for i in 0..d {
                for j in 0..d {
                    u[i * d + j] = (0..d).map(|k| fr.a_inv[k * d + i] * ha[k * d + j]).sum();
                }
            }
            let tr = (0..n).map(|i| u[i * d + i]).sum::<f64>() / n as f64;
            for i in 0..n {
                out[lay.v() + i] = 0.5 * (u[i * d + n] + u[n * d + i]);
                for j in 0..n {
                    let sym = 0.5 * (u[i * d + j] + u[j * d + i]);
                    out[lay.z() + i * n + j] = sym - if i == j { tr } else { 0.0 };
                }
            }
            out[lay.q()] = tr;
        }
    }

    /// Leading term dir·φ(y)·sin(N f·y + ϑ) in local coordinates.
    pub fn leading_local(&self, y: &[f64]) -> StatePoint {
        let phi = self.cutoff.value(y);
        let arg = self.frequency as f64 * y.iter().zip(&self.frame.f).map(|(a, b)| a * b).sum::<f64>() + self.phase;
        self.direction.dir.scaled(phi * arg.sin())
    }
}

/// Tracer-only patch with oscillation along the first axis (A = I).
///
/// `w_hat` holds (η̂, b̂): its first entry must vanish and its last must not.
pub fn tracer_patch(
    w_hat: &DVector<f64>,
    frequency: u32,
    cutoff: CutoffSpec,
) -> Result<PerturbationPatch, PerturbationError> {
    let d = w_hat.len();
    if d < 3 {
        return Err(PerturbationError::InvalidDirection("Ŵ must have n+1 ≥ 3 entries".into()));
    }
    let scale = w_hat.amax();
    if w_hat[d - 1] == 0.0 {
        return Err(PerturbationError::InvalidDirection("last component of Ŵ must be nonzero".into()));
    }
    if w_hat[0].abs() > ANNIHILATION_TOL * scale {
        return Err(PerturbationError::InvalidDirection("first component of Ŵ must vanish".into()));
    }
    let n = d - 1;
    let mut dir = StatePoint::zeros(n);
    dir.b = w_hat[n];
    dir.eta = w_hat.rows(0, n).into_owned();
    let xi = DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 });
    PerturbationPatch::new(LambdaDirection { dir, xi }, frequency, cutoff, f64::INFINITY)
}

/// Euler-block patch for (v̄, z̄) oscillating along ξ.
pub fn euler_patch(
    v_bar: &DVector<f64>,
    z_bar: &DMatrix<f64>,
    xi: &DVector<f64>,
    frequency: u32,
    cutoff: CutoffSpec,
) -> Result<PerturbationPatch, PerturbationError> {
    let n = v_bar.len();
    if z_bar.shape() != (n, n) || xi.len() != n + 1 {
        return Err(PerturbationError::InvalidDirection("inconsistent shapes".into()));
    }
    let mut dir = StatePoint::zeros(n);
    dir.v = v_bar.clone();
    dir.z = z_bar.clone();
    let xi_norm = xi.norm();
    if !(xi_norm > 0.0) {
        return Err(PerturbationError::InvalidDirection("ξ must be nonzero".into()));
    }
    PerturbationPatch::new(LambdaDirection { dir, xi: xi / xi_norm }, frequency, cutoff, f64::INFINITY)
}

/// The field y ↦ patch((y − y₀)/r), as a patch on B_r(y₀) composed with the
/// existing placement.
pub fn rescale_patch(patch: &PerturbationPatch, y0: &[f64], r: f64) -> Result<PerturbationPatch, PerturbationError> {
    if !(r > 0.0) {
        return Err(PerturbationError::Degenerate(format!("radius {r} must be positive")));
    }
    let mut out = patch.clone();
    out.center = patch.center.iter().zip(y0).map(|(c, y)| y + r * c).collect();
    out.radius = patch.radius * r;
    Ok(out)
}
