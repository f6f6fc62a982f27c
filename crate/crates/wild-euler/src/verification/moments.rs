use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VerificationError;
use crate::geometry::ConstraintContext;

/// Gauss–Legendre nodes and weights on [−1, 1] (Golub–Welsch).
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::zeros(q, q);
    for k in 1..q {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Weighted points on the sphere of radius h in ℝⁿ; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub n: usize,
    pub h: f64,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Monte Carlo pairs per unit of quadrature order for n ≥ 4.
const MC_PAIRS_PER_ORDER: usize = 2048;

impl SphereQuadrature {
    /// n = 2: 2·order equispaced angles; n = 3: Gauss–Legendre in the polar
    /// cosine times 2·order azimuths; n ≥ 4: antipodal Monte Carlo samples
    /// whose weights are adjusted so that all second moments are exact.
    pub fn new(n: usize, h: f64, order: usize, seed: u64) -> Result<Self, VerificationError> {
        if n < 2 || !(h > 0.0) || order < 2 {
            return Err(VerificationError::Invalid(format!("need n ≥ 2, h > 0, order ≥ 2 (got {n}, {h}, {order})")));
        }
        let tau = 2.0 * std::f64::consts::PI;
        let (points, weights) = match n {
            2 => {
                let m = 2 * order;
                let pts = (0..m)
                    .map(|k| {
                        let a = tau * k as f64 / m as f64;
                        vec![h * a.cos(), h * a.sin()]
                    })
                    .collect();
                (pts, vec![1.0 / m as f64; m])
            }
            3 => {
                let (x, w) = gauss_legendre(order);
                let m = 2 * order;
                let mut pts = Vec::with_capacity(order * m);
                let mut wts = Vec::with_capacity(order * m);
                for (c, wc) in x.iter().zip(&w) {
                    let s = (1.0 - c * c).sqrt();
                    for k in 0..m {
                        let a = tau * (k as f64 + 0.5) / m as f64;
                        pts.push(vec![h * s * a.cos(), h * s * a.sin(), h * c]);
                        wts.push(0.5 * wc / m as f64);
                    }
                }
                (pts, wts)
            }
            _ => Self::control_variate_rule(n, h, order * MC_PAIRS_PER_ORDER, seed),
        };
        Ok(Self { n, h, points, weights })
    }

    fn control_variate_rule(n: usize, h: f64, pairs: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let r = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let p: Vec<f64> = g.iter().map(|x| h * x / r).collect();
            pts.push(p.iter().map(|x| -x).collect());
            pts.push(p);
        }
        let m = pts.len();
        // Constraints: Σw = 1 and Σw v_i v_j = δ_ij h²/n for i ≤ j, dropping
        // (n, n) which follows from |v| = h.
        let mut rows: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for j in i..n {
                if !(i == n - 1 && j == n - 1) {
                    rows.push((i, j));
                }
            }
        }
        let k = rows.len() + 1;
        let mut g = DMatrix::zeros(k, m);
        let mut target = DVector::zeros(k);
        target[0] = 1.0;
        for (c, p) in pts.iter().enumerate() {
            g[(0, c)] = 1.0;
            for (r, &(i, j)) in rows.iter().enumerate() {
                g[(r + 1, c)] = p[i] * p[j];
            }
        }
        for (r, &(i, j)) in rows.iter().enumerate() {
            if i == j {
                target[r + 1] = h * h / n as f64;
            }
        }
        let w0 = DVector::from_element(m, 1.0 / m as f64);
        let gram = &g * g.transpose();
        let lam = gram.lu().solve(&(target - &g * &w0)).expect("control-variate Gram matrix is regular");
        let w = w0 + g.transpose() * lam;
        (pts, w.as_slice().to_vec())
    }

    /// T(φ) = ∫ (v, v⊗v − (h²/n)I) φ(v) dν.
    pub fn moments(&self, phi: &dyn Fn(&[f64]) -> f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut vec = DVector::zeros(n);
        let mut mat = DMatrix::zeros(n, n);
        let iso = self.h * self.h / n as f64;
        for (p, w) in self.points.iter().zip(&self.weights) {
            let f = w * phi(p);
            for i in 0..n {
                vec[i] += f * p[i];
                for j in 0..n {
                    mat[(i, j)] += f * (p[i] * p[j] - if i == j { iso } else { 0.0 });
                }
            }
        }
        (vec, mat)
    }
}

/// T_t(φ) on the sphere of radius h_t with the rule of the given order.
pub fn moment_operator(
    phi: &dyn Fn(&[f64]) -> f64,
    ctx: &ConstraintContext,
    quad_order: usize,
) -> Result<(DVector<f64>, DMatrix<f64>), VerificationError> {
    let q = SphereQuadrature::new(ctx.n, ctx.h_t, quad_order, 0x5eed)?;
    Ok(q.moments(phi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurjectivityReport {
    pub n: usize,
    pub h: f64,
    pub rank: usize,
    pub expected_rank: usize,
    /// Images of the basis family as (vector part, upper triangle of the
    /// matrix part with off-diagonals scaled by √2).
    pub basis_images: Vec<Vec<f64>>,
    /// ∫v_i² dν.
    pub beta1: f64,
    /// ∫v_1²v_2² dν.
    pub beta2: f64,
    /// ∫(v_1² − h²/n)² dν.
    pub beta3: f64,
    /// Largest |trace| of a matrix image.
    pub max_trace: f64,
}

impl SurjectivityReport {
    pub fn full_rank(&self) -> bool {
        self.rank == self.expected_rank
    }
}

fn flatten(v: &DVector<f64>, m: &DMatrix<f64>) -> Vec<f64> {
    let n = v.len();
    let mut out = v.as_slice().to_vec();
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { m[(i, i)] } else { std::f64::consts::SQRT_2 * m[(i, j)] });
        }
    }
    out
}

/// Stacks T_t over {v_i}, {v_iv_j}_{i<j}, {v_i² − h²/n} and reports the
/// numerical rank together with the β constants.
pub fn surjectivity_check(ctx: &ConstraintContext, quad_order: usize) -> Result<SurjectivityReport, VerificationError> {
    let n = ctx.n;
    let h = ctx.h_t;
    let quad = SphereQuadrature::new(n, h, quad_order, 0x5eed)?;
    let iso = h * h / n as f64;
    let mut family: Vec<Box<dyn Fn(&[f64]) -> f64>> = Vec::new();
    for i in 0..n {
        family.push(Box::new(move |v: &[f64]| v[i]));
    }
    for i in 0..n {
        for j in i + 1..n {
            family.push(Box::new(move |v: &[f64]| v[i] * v[j]));
        }
    }
    for i in 0..n {
        family.push(Box::new(move |v: &[f64]| v[i] * v[i] - iso));
    }
    let mut images = Vec::with_capacity(family.len());
    let mut max_trace: f64 = 0.0;
    for phi in &family {
        let (v, m) = quad.moments(phi.as_ref());
        max_trace = max_trace.max(m.trace().abs());
        images.push(flatten(&v, &m));
    }
    let cols = images[0].len();
    let stacked = DMatrix::from_fn(images.len(), cols, |r, c| images[r][c]);
    let sv = stacked.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();

    let beta1 = quad.moments(&|v: &[f64]| v[0]).0[0];
    let beta2 = quad.moments(&|v: &[f64]| v[0] * v[1]).1[(0, 1)];
    let beta3 = quad.points.iter().zip(&quad.weights).map(|(p, w)| w * (p[0] * p[0] - iso).powi(2)).sum();
    Ok(SurjectivityReport {
        n,
        h,
        rank,
        expected_rank: n + n * (n + 1) / 2 - 1,
        basis_images: images,
        beta1,
        beta2,
        beta3,
        max_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let int = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((int(0) - 2.0).abs() < 1e-14);
        assert!((int(8) - 2.0 / 9.0).abs() < 1e-14);
        assert!(int(7).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_one() {
        for n in 2..=4 {
            let q = SphereQuadrature::new(n, 1.3, 4, 1).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(q.points.iter().all(|p| (p.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.3).abs() < 1e-12));
        }
    }
}
