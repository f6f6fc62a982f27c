//! Monotone piecewise-cubic Hermite interpolation along the time axis of
//! time-major data blocks.

use rayon::prelude::*;

use super::StochasticError;

/// Fritsch–Carlson slope at knot j of the series y.
fn slope(x: &[f64], y: &impl Fn(usize) -> f64, j: usize) -> f64 {
    let m = x.len();
    let h = |k: usize| x[k + 1] - x[k];
    let d = |k: usize| (y(k + 1) - y(k)) / h(k);
    if m == 2 {
        return d(0);
    }
    let edge = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if j == 0 {
        return edge(h(0), h(1), d(0), d(1));
    }
    if j == m - 1 {
        return edge(h(m - 2), h(m - 3), d(m - 2), d(m - 3));
    }
    let (d0, d1) = (d(j - 1), d(j));
    if d0 * d1 <= 0.0 {
        return 0.0;
    }
    let (h0, h1) = (h(j - 1), h(j));
    let w1 = 2.0 * h1 + h0;
    let w2 = h1 + 2.0 * h0;
    (w1 + w2) / (w1 / d0 + w2 / d1)
}

/// Interval index and offset of q; queries outside the knots use the end cubic.
fn locate(x: &[f64], q: f64) -> (usize, f64) {
    let m = x.len();
    let k = x.partition_point(|&v| v <= q).clamp(1, m - 1) - 1;
    (k, q - x[k])
}

fn eval(x: &[f64], y: &impl Fn(usize) -> f64, k: usize, s: f64) -> f64 {
    if s == 0.0 {
        return y(k);
    }
    let h = x[k + 1] - x[k];
    let t = s / h;
    let (y0, y1) = (y(k), y(k + 1));
    let (m0, m1) = (slope(x, y, k), slope(x, y, k + 1));
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * m1
}

/// Interpolates every component of time-major `data` (one block of `block`
/// values per knot) at the `targets`.
pub fn pchip_resample(knots: &[f64], data: &[f64], block: usize, targets: &[f64]) -> Result<Vec<f64>, StochasticError> {
    if knots.len() < 2 || data.len() != knots.len() * block {
        return Err(StochasticError::Invalid("resampling needs ≥ 2 knots and matching data".into()));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(StochasticError::Internal("interpolation knots are not strictly increasing".into()));
    }
    let mut out = vec![0.0; targets.len() * block];
    out.par_chunks_mut(block.max(1)).zip(targets.par_iter()).for_each(|(dst, &q)| {
        let (k, s) = locate(knots, q);
        for (c, d) in dst.iter_mut().enumerate() {
            let y = |j: usize| data[j * block + c];
            *d = eval(knots, &y, k, s);
        }
    });
    Ok(out)
}
