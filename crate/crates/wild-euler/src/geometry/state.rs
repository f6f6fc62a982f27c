use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Numerical tolerances shared by the geometric predicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub sym: f64,
    pub tr: f64,
    pub null: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { sym: 1e-10, tr: 1e-10, null: 1e-10 }
    }
}

/// One sample of the relaxed state: tracer `b`, tracer flux `eta`,
/// velocity `v`, trace-free stress `z` and modified pressure `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePoint {
    pub b: f64,
    pub eta: DVector<f64>,
    pub v: DVector<f64>,
    pub z: DMatrix<f64>,
    pub q: f64,
}

/// Number of scalars in the flat per-node layout `b, η, v, z (row-major), q`.
pub const fn flat_len(n: usize) -> usize {
    2 + 2 * n + n * n
}

/// Dimension of the (b, η, v, z) space, n(n+5)/2.
pub const fn tartar_dim(n: usize) -> usize {
    n * (n + 5) / 2
}

/// Segment constant 1/(4N√2) for dimension n.
pub fn segment_constant(n: usize) -> f64 {
    1.0 / (4.0 * tartar_dim(n) as f64 * std::f64::consts::SQRT_2)
}

/// Offsets into the flat layout.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub n: usize,
}

impl Layout {
    pub const fn b(&self) -> usize {
        0
    }
    pub const fn eta(&self) -> usize {
        1
    }
    pub const fn v(&self) -> usize {
        1 + self.n
    }
    pub const fn z(&self) -> usize {
        1 + 2 * self.n
    }
    pub const fn q(&self) -> usize {
        1 + 2 * self.n + self.n * self.n
    }
    pub const fn len(&self) -> usize {
        flat_len(self.n)
    }
}

impl StatePoint {
    pub fn zeros(n: usize) -> Self {
        Self {
            b: 0.0,
            eta: DVector::zeros(n),
            v: DVector::zeros(n),
            z: DMatrix::zeros(n, n),
            q: 0.0,
        }
    }

    /// Validated constructor.
    pub fn new(
        b: f64,
        eta: DVector<f64>,
        v: DVector<f64>,
        z: DMatrix<f64>,
        q: f64,
        tol: &Tolerances,
    ) -> Result<Self, GeometryError> {
        let p = Self { b, eta, v, z, q };
        p.validate(tol)?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<(), GeometryError> {
        let n = self.v.len();
        if n < 2 || self.eta.len() != n || self.z.nrows() != n || self.z.ncols() != n {
            return Err(GeometryError::ShapeMismatch { n });
        }
        check_trace_free_symmetric(&self.z, tol)
    }

    /// Point of the constraint set determined by a sign and a velocity.
    pub fn vertex(b: f64, v: &DVector<f64>) -> Self {
        let n = v.len();
        let h2 = v.norm_squared();
        let z = v * v.transpose() - DMatrix::identity(n, n) * (h2 / n as f64);
        Self { b, eta: v * b, v: v.clone(), z, q: 0.0 }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            b: self.b * s,
            eta: &self.eta * s,
            v: &self.v * s,
            z: &self.z * s,
            q: self.q * s,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            b: self.b + o.b,
            eta: &self.eta + &o.eta,
            v: &self.v + &o.v,
            z: &self.z + &o.z,
            q: self.q + o.q,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scaled(-1.0))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(flat_len(n));
        out.push(self.b);
        out.extend(self.eta.iter());
        out.extend(self.v.iter());
        for i in 0..n {
            for j in 0..n {
                out.push(self.z[(i, j)]);
            }
        }
        out.push(self.q);
        out
    }

    pub fn from_flat(n: usize, s: &[f64]) -> Self {
        let l = Layout { n };
        Self {
            b: s[l.b()],
            eta: DVector::from_column_slice(&s[l.eta()..l.eta() + n]),
            v: DVector::from_column_slice(&s[l.v()..l.v() + n]),
            z: DMatrix::from_row_slice(n, n, &s[l.z()..l.z() + n * n]),
            q: s[l.q()],
        }
    }

    /// Orthonormal coordinates of the (b, η, v, z) part.
    pub fn to_tartar(&self) -> Vec<f64> {
        tartar_from_flat(self.dim(), &self.to_flat())
    }

    pub fn from_tartar(n: usize, c: &[f64], q: f64) -> Self {
        let mut flat = flat_from_tartar(n, c);
        let l = Layout { n };
        flat[l.q()] = q;
        Self::from_flat(n, &flat)
    }

    /// The (n+2)×(n+1) matrix whose row-wise space–time divergence is the
    /// relaxed linear system.
    pub fn matrix_form(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n + 2, n + 1);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.z[(i, j)];
            }
            m[(i, i)] += self.q;
            m[(i, n)] = self.v[i];
            m[(n, i)] = self.v[i];
            m[(n + 1, i)] = self.eta[i];
        }
        m[(n + 1, n)] = self.b;
        m
    }
}

pub(crate) fn check_trace_free_symmetric(z: &DMatrix<f64>, tol: &Tolerances) -> Result<(), GeometryError> {
    let n = z.nrows();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((z[(i, j)] - z[(j, i)]).abs());
        }
    }
    if asym > tol.sym {
        return Err(GeometryError::NotSymmetric(asym));
    }
    let tr = z.trace();
    if tr.abs() > tol.tr {
        return Err(GeometryError::NotTraceFree(tr));
    }
    Ok(())
}

/// Orthonormal coordinates of (b, η, v, z) from a flat node slice.
///
/// Off-diagonal entries use (eᵢeⱼᵀ + eⱼeᵢᵀ)/√2, the diagonal uses a Helmert basis
/// of the trace-free diagonal matrices.
pub fn tartar_from_flat(n: usize, s: &[f64]) -> Vec<f64> {
    let l = Layout { n };
    let mut out = Vec::with_capacity(tartar_dim(n));
    out.push(s[l.b()]);
    out.extend_from_slice(&s[l.eta()..l.eta() + n]);
    out.extend_from_slice(&s[l.v()..l.v() + n]);
    let z = &s[l.z()..l.z() + n * n];
    for i in 0..n {
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * 0.5 * (z[i * n + j] + z[j * n + i]));
        }
    }
    let mut partial = 0.0;
    for k in 1..n {
        partial += z[(k - 1) * n + (k - 1)];
        let kf = k as f64;
        out.push((partial - kf * z[k * n + k]) / (kf * (kf + 1.0)).sqrt());
    }
    out
}

/// Inverse of [`tartar_from_flat`]; `q` is left at zero.
pub fn flat_from_tartar(n: usize, c: &[f64]) -> Vec<f64> {
    let l = Layout { n };
    let mut s = vec![0.0; flat_len(n)];
    s[l.b()] = c[0];
    s[l.eta()..l.eta() + n].copy_from_slice(&c[1..1 + n]);
    s[l.v()..l.v() + n].copy_from_slice(&c[1 + n..1 + 2 * n]);
    let mut idx = 1 + 2 * n;
    for i in 0..n {
        for j in i + 1..n {
            let val = c[idx] / std::f64::consts::SQRT_2;
            s[l.z() + i * n + j] = val;
            s[l.z() + j * n + i] = val;
            idx += 1;
        }
    }
    for k in 1..n {
        let kf = k as f64;
        let coef = c[idx] / (kf * (kf + 1.0)).sqrt();
        for i in 0..k {
            s[l.z() + i * n + i] += coef;
        }
        s[l.z() + k * n + k] -= kf * coef;
        idx += 1;
    }
    s
}

/// (n/2)·λ_max(v⊗v − u) with validation of `u`.
pub fn e_value(v: &DVector<f64>, u: &DMatrix<f64>, tol: &Tolerances) -> Result<f64, GeometryError> {
    let n = v.len();
    if u.nrows() != n || u.ncols() != n {
        return Err(GeometryError::ShapeMismatch { n });
    }
    check_trace_free_symmetric(u, tol)?;
    Ok(e_value_raw(n, v.as_slice(), u.as_slice()))
}

/// Unchecked e-function on raw slices. `u` may be row- or column-major since
/// only its symmetric part enters.
pub fn e_value_raw(n: usize, v: &[f64], u: &[f64]) -> f64 {
    let nf = n as f64;
    if n == 2 {
        let a = v[0] * v[0] - u[0];
        let d = v[1] * v[1] - u[3];
        let c = v[0] * v[1] - 0.5 * (u[1] + u[2]);
        let lmax = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + c * c).sqrt();
        return 0.5 * nf * lmax;
    }
    let m = DMatrix::from_fn(n, n, |i, j| v[i] * v[j] - 0.5 * (u[i * n + j] + u[j * n + i]));
    let eig = nalgebra::SymmetricEigen::new(m);
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    0.5 * nf * lmax
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tartar_round_trip() {
        let n = 3;
        let z = DMatrix::from_row_slice(3, 3, &[0.3, 0.1, -0.2, 0.1, -0.5, 0.4, -0.2, 0.4, 0.2]);
        let p = StatePoint {
            b: 0.2,
            eta: DVector::from_vec(vec![0.1, 0.2, 0.3]),
            v: DVector::from_vec(vec![-0.1, 0.5, 0.0]),
            z: z.clone(),
            q: 0.0,
        };
        let c = p.to_tartar();
        assert_eq!(c.len(), tartar_dim(n));
        let back = StatePoint::from_tartar(n, &c, 0.0);
        assert!((back.z - z).abs().max() < 1e-14);
        // Orthonormality: Frobenius norm of z equals the Euclidean norm of its coordinates.
        let zc: f64 = c[1 + 2 * n..].iter().map(|x| x * x).sum();
        assert!((zc - p.z.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn e_value_examples() {
        let tol = Tolerances::default();
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let u = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5]);
        assert!((e_value(&v, &u, &tol).unwrap() - 0.5).abs() < 1e-15);
        assert!((e_value(&v, &DMatrix::zeros(2, 2), &tol).unwrap() - 1.0).abs() < 1e-15);
        let zero = DVector::zeros(2);
        assert_eq!(e_value(&zero, &DMatrix::zeros(2, 2), &tol).unwrap(), 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, -0.5]);
        assert!(matches!(e_value(&v, &bad, &tol), Err(GeometryError::NotSymmetric(_))));
        let bad_tr = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        assert!(matches!(e_value(&v, &bad_tr, &tol), Err(GeometryError::NotTraceFree(_))));
    }

    #[test]
    fn constants() {
        assert_eq!(tartar_dim(2), 7);
        assert_eq!(tartar_dim(3), 12);
        let c = segment_constant(2);
        assert!((c - 1.0 / (28.0 * 2f64.sqrt())).abs() < 1e-17);
    }
}
