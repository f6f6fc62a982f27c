use nalgebra::DMatrix;

use super::PerturbationError;

/// Disjoint family of balls in the frame of A whose images under A⁻ᵀ pack
/// the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCover {
    /// (center, radius) in the A-frame.
    pub balls: Vec<(Vec<f64>, f64)>,
    /// A⁻ᵀ, row-major, mapping the frame back to the original coordinates.
    pub map: Vec<f64>,
    /// Σ|A⁻ᵀB_{r_k}| / |B₁|.
    pub fraction: f64,
}

impl BallCover {
    /// Whether `y` (original coordinates) lies in one of the images.
    pub fn contains(&self, a: &DMatrix<f64>, y: &[f64]) -> bool {
        let d = y.len();
        // x = Aᵀy.
        let x: Vec<f64> = (0..d).map(|k| (0..d).map(|i| a[(i, k)] * y[i]).sum()).collect();
        self.balls.iter().any(|(c, r)| dist2(&x, c) < r * r)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy packing by balls of radius at most `max_radius` until the images
/// fill half of the unit ball or `budget` balls are used.
///
/// Containment uses |A⁻ᵀc| + r‖A⁻ᵀ‖₂ ≤ 1, which is sufficient and exact for
/// orthogonal A.
pub fn cover_by_balls(a: &DMatrix<f64>, max_radius: f64, budget: usize) -> Result<BallCover, PerturbationError> {
    let d = a.nrows();
    if a.ncols() != d || d == 0 {
        return Err(PerturbationError::Degenerate("A must be square".into()));
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax.max(1.0)) {
        return Err(PerturbationError::Degenerate(format!("A is near-singular (σ_min = {smin:.3e})")));
    }
    if !(max_radius > 0.0) {
        return Err(PerturbationError::Degenerate("max_radius must be positive".into()));
    }
    let b = a.transpose().try_inverse().expect("checked invertible");
    let b_norm = 1.0 / smin;
    let det_b = 1.0 / a.determinant().abs();
    let map: Vec<f64> = (0..d * d).map(|k| b[(k / d, k % d)]).collect();
    let image_norm = |x: &[f64]| -> f64 {
        (0..d)
            .map(|i| {
                let s: f64 = (0..d).map(|k| map[i * d + k] * x[k]).sum();
                s * s
            })
            .sum::<f64>()
            .sqrt()
    };
    // Aᵀ B₁ lies in the box |x_k| ≤ |A e_k|.
    let half: Vec<f64> = (0..d).map(|k| a.column(k).norm()).collect();

    let mut balls: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut fraction = 0.0;
    let mut r = max_radius.min(1.0 / b_norm);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    while fraction < 0.5 && balls.len() < budget && r > 1e-3 * max_radius {
        let step = 0.5 * r;
        let counts: Vec<usize> = half.iter().map(|h| (2.0 * h / step).ceil() as usize + 1).collect();
        idx.iter_mut().for_each(|i| *i = 0);
        'scan: loop {
            for k in 0..d {
                x[k] = -half[k] + idx[k] as f64 * step;
            }
            if image_norm(&x) + r * b_norm <= 1.0
                && balls.iter().all(|(c, rc)| dist2(&x, c) >= (r + rc) * (r + rc))
            {
                balls.push((x.clone(), r));
                fraction += det_b * r.powi(d as i32);
                if fraction >= 0.5 || balls.len() >= budget {
                    break 'scan;
                }
            }
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == d {
                    break 'scan;
                }
            }
        }
        r *= 0.7;
    }
    if fraction < 0.5 {
        return Err(PerturbationError::CoveringFailed { achieved: fraction });
    }
    Ok(BallCover { balls, map, fraction })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_reaches_half() {
        let cover = cover_by_balls(&DMatrix::identity(3, 3), 0.3, 20_000).unwrap();
        assert!(cover.fraction >= 0.5);
        for (i, (c, r)) in cover.balls.iter().enumerate() {
            assert!(c.iter().map(|x| x * x).sum::<f64>().sqrt() + r <= 1.0 + 1e-12);
            for (c2, r2) in &cover.balls[i + 1..] {
                assert!(dist2(c, c2).sqrt() >= r + r2 - 1e-12);
            }
        }
    }

    #[test]
    fn singular_frame_is_rejected() {
        let mut a = DMatrix::identity(3, 3);
        a[(2, 2)] = 1e-14;
        assert!(matches!(cover_by_balls(&a, 0.3, 100), Err(PerturbationError::Degenerate(_))));
    }
}
