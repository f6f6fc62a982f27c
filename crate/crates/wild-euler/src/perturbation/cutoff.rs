use serde::{Deserialize, Serialize};

/// Radial cutoff on the unit ball of ℝᵈ: equal to 1 for |y| ≤ ½, zero for
/// |y| ≥ 1, smooth in between.
///
/// The transition is the smooth step S(ρ) = 1/(1 + exp(1/(1−ρ) − 1/ρ)) on
/// ρ = 2|y| − 1, built from the exp(−1/x) kernel, so every derivative is
/// available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    /// Bound on max(|φ|, |∇φ|, |∇²φ|) over the ball.
    pub c2_norm: f64,
}

/// Radial profile value and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self::new()
    }
}

impl CutoffSpec {
    pub fn new() -> Self {
        // Hessian of a radial function has eigenvalues ψ'' and ψ'/r.
        let mut sup: f64 = 1.0;
        let m = 20_000;
        for i in 0..=m {
            let r = 0.5 + 0.5 * i as f64 / m as f64;
            let j = Self::radial(r);
            sup = sup.max(j.d1.abs()).max(j.d2.abs()).max(j.d1.abs() / r);
        }
        Self { c2_norm: sup }
    }

    /// Profile ψ(r) with ψ′ and ψ″.
    pub fn radial(r: f64) -> RadialJet {
        if r <= 0.5 {
            return RadialJet { value: 1.0, d1: 0.0, d2: 0.0 };
        }
        if r >= 1.0 {
            return RadialJet { value: 0.0, d1: 0.0, d2: 0.0 };
        }
        let rho = 2.0 * r - 1.0;
        let a = 1.0 - rho;
        let u = 1.0 / a - 1.0 / rho;
        if u > 700.0 {
            return RadialJet { value: 0.0, d1: 0.0, d2: 0.0 };
        }
        if u < -700.0 {
            return RadialJet { value: 1.0, d1: 0.0, d2: 0.0 };
        }
        let p = 1.0 / (1.0 + u.exp());
        let q = 1.0 / (1.0 + (-u).exp());
        let du = 1.0 / (a * a) + 1.0 / (rho * rho);
        let ddu = 2.0 / (a * a * a) - 2.0 / (rho * rho * rho);
        let s1 = -p * q * du;
        let s2 = (1.0 - 2.0 * p) * p * q * du * du - p * q * ddu;
        RadialJet { value: p, d1: 2.0 * s1, d2: 4.0 * s2 }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        Self::radial(norm(y)).value
    }

    /// Value, gradient and Hessian (row-major d×d) at `y`.
    pub fn jet(&self, y: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = y.len();
        let r = norm(y);
        let j = Self::radial(r);
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        if j.d1 == 0.0 && j.d2 == 0.0 {
            return j.value;
        }
        let inv = 1.0 / r;
        for i in 0..d {
            let yi = y[i] * inv;
            grad[i] = j.d1 * yi;
            for k in 0..d {
                let yk = y[k] * inv;
                let delta = if i == k { 1.0 } else { 0.0 };
                hess[i * d + k] = j.d2 * yi * yk + j.d1 * inv * (delta - yi * yk);
            }
        }
        j.value
    }
}

pub(crate) fn norm(y: &[f64]) -> f64 {
    y.iter().map(|x| x * x).sum::<f64>().sqrt()
}
