//! Lawson–Hanson non-negative least squares on a fixed column set.
//!
//! The column set (a vertex net) is fixed for many right-hand sides, so the
//! Gram matrix is precomputed once and every query works on the normal
//! equations restricted to the passive set.

/// Dense column set with a cached Gram matrix.
#[derive(Debug, Clone)]
pub struct NnlsSystem {
    rows: usize,
    cols: usize,
    /// Column-major storage, `cols` columns of length `rows`.
    a: Vec<f64>,
    gram: Vec<f64>,
}

/// Result of one NNLS solve.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    /// Sparse solution: (column index, coefficient > 0).
    pub support: Vec<(usize, f64)>,
    /// Euclidean residual ‖A x − y‖.
    pub residual: f64,
}

impl NnlsSystem {
    pub fn new(rows: usize, columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let mut a = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "column length mismatch");
            a.extend_from_slice(c);
        }
        let mut gram = vec![0.0; cols * cols];
        for i in 0..cols {
            for j in i..cols {
                let g: f64 = (0..rows).map(|r| a[i * rows + r] * a[j * rows + r]).sum();
                gram[i * cols + j] = g;
                gram[j * cols + i] = g;
            }
        }
        Self { rows, cols, a, gram }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.a[j * self.rows..(j + 1) * self.rows]
    }

    /// Solve min ‖A x − y‖ subject to x ≥ 0.
    pub fn solve(&self, y: &[f64]) -> NnlsSolution {
        assert_eq!(y.len(), self.rows);
        let n = self.cols;
        let aty: Vec<f64> = (0..n)
            .map(|j| self.column(j).iter().zip(y).map(|(a, b)| a * b).sum())
            .collect();
        let scale = aty.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale * (n as f64);

        let mut x = vec![0.0; n];
        let mut passive: Vec<usize> = Vec::with_capacity(self.rows + 2);
        let mut in_passive = vec![false; n];
        let mut w = aty.clone();
        let max_outer = 6 * self.rows + 30;
        let mut s = Vec::new();

        for _ in 0..max_outer {
            let mut best = None;
            let mut best_w = tol;
            for j in 0..n {
                if !in_passive[j] && w[j] > best_w {
                    best_w = w[j];
                    best = Some(j);
                }
            }
            let Some(j) = best else { break };
            passive.push(j);
            in_passive[j] = true;

            let mut inner = 0;
            loop {
                inner += 1;
                if !self.passive_ls(&passive, &aty, &mut s) {
                    // Newly added column is numerically dependent: drop it.
                    let dropped = passive.pop().unwrap();
                    in_passive[dropped] = false;
                    w[dropped] = 0.0;
                    break;
                }
                if s.iter().all(|&v| v > 0.0) || inner > 3 * self.rows + 10 {
                    for (k, &p) in passive.iter().enumerate() {
                        x[p] = s[k].max(0.0);
                    }
                    break;
                }
                let mut alpha = f64::INFINITY;
                for (k, &p) in passive.iter().enumerate() {
                    if s[k] <= 0.0 {
                        let d = x[p] - s[k];
                        if d > 0.0 {
                            alpha = alpha.min(x[p] / d);
                        }
                    }
                }
                if !alpha.is_finite() {
                    alpha = 0.0;
                }
                for (k, &p) in passive.iter().enumerate() {
                    x[p] += alpha * (s[k] - x[p]);
                }
                let mut k = 0;
                while k < passive.len() {
                    let p = passive[k];
                    if x[p] <= 1e-15 {
                        x[p] = 0.0;
                        in_passive[p] = false;
                        passive.swap_remove(k);
                    } else {
                        k += 1;
                    }
                }
                if passive.is_empty() {
                    break;
                }
            }
            for j2 in 0..n {
                let mut g = aty[j2];
                for &p in &passive {
                    g -= self.gram[j2 * n + p] * x[p];
                }
                w[j2] = if in_passive[j2] { 0.0 } else { g };
            }
        }

        let support: Vec<(usize, f64)> = passive
            .iter()
            .filter(|&&p| x[p] > 0.0)
            .map(|&p| (p, x[p]))
            .collect();
        let mut r = y.to_vec();
        for &(p, c) in &support {
            for (ri, ai) in r.iter_mut().zip(self.column(p)) {
                *ri -= c * ai;
            }
        }
        let residual = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        NnlsSolution { support, residual }
    }

    /// Least squares on the passive columns through a Cholesky factorisation
    /// of the Gram block. Returns false when the block is not positive definite.
    fn passive_ls(&self, passive: &[usize], aty: &[f64], out: &mut Vec<f64>) -> bool {
        let k = passive.len();
        let n = self.cols;
        let mut l = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let mut sum = self.gram[passive[i] * n + passive[j]];
                for m in 0..j {
                    sum -= l[i * k + m] * l[j * k + m];
                }
                if i == j {
                    let diag = self.gram[passive[i] * n + passive[i]];
                    if sum <= 1e-13 * diag.max(1e-300) {
                        return false;
                    }
                    l[i * k + i] = sum.sqrt();
                } else {
                    l[i * k + j] = sum / l[j * k + j];
                }
            }
        }
        out.clear();
        out.resize(k, 0.0);
        for i in 0..k {
            let mut sum = aty[passive[i]];
            for m in 0..i {
                sum -= l[i * k + m] * out[m];
            }
            out[i] = sum / l[i * k + i];
        }
        for i in (0..k).rev() {
            let mut sum = out[i];
            for m in i + 1..k {
                sum -= l[m * k + i] * out[m];
            }
            out[i] = sum / l[i * k + i];
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_nonnegative_combination() {
        let cols = vec![
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![-1.0, 0.0, 1.0],
            vec![0.0, -1.0, 1.0],
        ];
        let sys = NnlsSystem::new(3, &cols);
        let sol = sys.solve(&[0.2, 0.1, 1.0]);
        assert!(sol.residual < 1e-12, "{}", sol.residual);
        let total: f64 = sol.support.iter().map(|s| s.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_point_has_positive_residual() {
        let cols = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        let sys = NnlsSystem::new(3, &cols);
        let sol = sys.solve(&[-1.0, -1.0, 1.0]);
        assert!(sol.residual > 0.5);
    }
}
