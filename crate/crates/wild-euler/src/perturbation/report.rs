use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cutoff::CutoffSpec;
use super::patch::{euler_patch, tracer_patch, PerturbationPatch};
use super::PerturbationError;
use crate::geometry::{flat_len, tartar_from_flat, xi_vector, Layout, StatePoint};

/// Sampling parameters of [`verify_patch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Samples per axis over the box [−1.1, 1.1]ᵈ around the patch.
    pub samples_per_axis: usize,
    /// Samples per axis for the divergence check.
    pub div_samples_per_axis: usize,
    /// Finite-difference step as a fraction of the local wavelength scale r/N.
    pub fd_step: f64,
    /// Accepted normalized divergence residual.
    pub div_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples_per_axis: 64, div_samples_per_axis: 20, fd_step: 1e-3, div_tol: 1e-5 }
    }
}

/// Measured properties of one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    /// Every sample outside the support ball evaluates to exactly zero.
    pub support_ok: bool,
    /// Largest distance from the field to the segment [−dir, dir].
    pub max_segment_distance: f64,
    /// ∫|v| / (|v̄|·|B|); `None` when v̄ = 0.
    pub alpha_measured_v: Option<f64>,
    /// ∫|b| / (|b̄|·|B|); `None` when b̄ = 0.
    pub alpha_measured_b: Option<f64>,
    /// Row-wise centered-difference divergence, normalized by N·|dir|/r.
    pub div_residual: f64,
    pub pass: bool,
}

/// Weighted Euclidean norm matching the orthonormal coordinates plus the
/// pressure direction qI.
fn state_norm2(n: usize, s: &[f64]) -> f64 {
    let t: f64 = tartar_from_flat(n, s).iter().map(|x| x * x).sum();
    let q = s[Layout { n }.q()];
    t + n as f64 * q * q
}

/// Distance from a flat state to the segment {τ·dir : |τ| ≤ 1}.
pub fn segment_distance(n: usize, s: &[f64], dir: &[f64]) -> f64 {
    let dd = state_norm2(n, dir);
    let tau = if dd > 0.0 {
        let sd = {
            let a = tartar_from_flat(n, s);
            let b = tartar_from_flat(n, dir);
            let q = Layout { n }.q();
            a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() + n as f64 * s[q] * dir[q]
        };
        (sd / dd).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let diff: Vec<f64> = s.iter().zip(dir).map(|(a, b)| a - tau * b).collect();
    state_norm2(n, &diff).sqrt()
}

fn grid_point(patch: &PerturbationPatch, m: usize, mut k: usize, y: &mut [f64]) {
    let d = y.len();
    for i in 0..d {
        let j = k % m;
        k /= m;
        y[i] = patch.center[i] + patch.radius * (-1.1 + 2.2 * (j as f64 + 0.5) / m as f64);
    }
}

/// Maximum normalized row-wise divergence residual of centered differences
/// with step `fd_step·r/N` over `m` samples per axis inside the support.
pub fn divergence_residual(patch: &PerturbationPatch, m: usize, fd_step: f64) -> f64 {
    let n = patch.n();
    let d = n + 1;
    let h = fd_step * patch.radius / patch.frequency as f64;
    let scale = patch.direction.dir.matrix_form().amax().max(1e-300) * patch.frequency as f64 / patch.radius;
    let total = m.pow(d as u32);
    (0..total)
        .into_par_iter()
        .map(|k| {
            let mut y = vec![0.0; d];
            grid_point(patch, m, k, &mut y);
            if !patch.contains(&y) {
                return 0.0;
            }
            let mut div = vec![0.0; n + 2];
            let mut plus = vec![0.0; flat_len(n)];
            let mut minus = vec![0.0; flat_len(n)];
            for j in 0..d {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] -= h;
                patch.eval(&yp, &mut plus);
                patch.eval(&ym, &mut minus);
                let mp = StatePoint::from_flat(n, &plus).matrix_form();
                let mm = StatePoint::from_flat(n, &minus).matrix_form();
                for (i, dv) in div.iter_mut().enumerate() {
                    *dv += (mp[(i, j)] - mm[(i, j)]) / (2.0 * h);
                }
            }
            div.iter().fold(0.0_f64, |a, x| a.max(x.abs())) / scale
        })
        .reduce(|| 0.0, f64::max)
}

/// Observed order of the centered-difference divergence residual as the
/// step shrinks through `steps` (least-squares slope in log–log scale).
pub fn divergence_order(patch: &PerturbationPatch, m: usize, steps: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .map(|&s| (s.ln(), divergence_residual(patch, m, s).max(1e-300).ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn unit_ball_volume(d: usize) -> f64 {
    // |B₁| in ℝᵈ via the recursion V_d = 2π/d · V_{d−2}.
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

/// Volume of the ball of radius r in ℝᵈ.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    unit_ball_volume(d) * r.powi(d as i32)
}

/// Support, segment-distance, α and divergence measurements on a sample grid.
pub fn verify_patch(patch: &PerturbationPatch, opts: &VerifyOptions) -> PatchReport {
    let n = patch.n();
    let d = n + 1;
    let lay = Layout { n };
    let m = opts.samples_per_axis;
    let dir = patch.direction.dir.to_flat();
    let cell = (2.2 * patch.radius / m as f64).powi(d as i32);

    #[derive(Default, Clone, Copy)]
    struct Acc {
        support_ok: bool,
        dist: f64,
        int_v: f64,
        int_b: f64,
    }
    let total = m.pow(d as u32);
    let acc = (0..total)
        .into_par_iter()
        .fold(
            || Acc { support_ok: true, ..Acc::default() },
            |mut acc, k| {
                let mut y = vec![0.0; d];
                let mut s = vec![0.0; flat_len(n)];
                grid_point(patch, m, k, &mut y);
                patch.eval(&y, &mut s);
                if !patch.contains(&y) {
                    if s.iter().any(|&x| x != 0.0) {
                        acc.support_ok = false;
                    }
                    return acc;
                }
                acc.dist = acc.dist.max(segment_distance(n, &s, &dir));
                let v2: f64 = s[lay.v()..lay.v() + n].iter().map(|x| x * x).sum();
                acc.int_v += v2.sqrt() * cell;
                acc.int_b += s[lay.b()].abs() * cell;
                acc
            },
        )
        .reduce(
            || Acc { support_ok: true, ..Acc::default() },
            |a, b| Acc {
                support_ok: a.support_ok && b.support_ok,
                dist: a.dist.max(b.dist),
                int_v: a.int_v + b.int_v,
                int_b: a.int_b + b.int_b,
            },
        );

    let vol = ball_volume(d, patch.radius);
    let vbar = patch.direction.dir.v.norm();
    let bbar = patch.direction.dir.b.abs();
    let alpha_v = (vbar > 0.0).then(|| acc.int_v / (vbar * vol));
    let alpha_b = (bbar > 0.0).then(|| acc.int_b / (bbar * vol));
    let zero_dir = dir.iter().all(|&x| x == 0.0);
    let div_residual = if zero_dir {
        0.0
    } else {
        divergence_residual(patch, opts.div_samples_per_axis, opts.fd_step)
    };
    let pass = acc.support_ok
        && acc.dist <= patch.epsilon
        && alpha_v.map_or(true, |a| a > 0.0)
        && alpha_b.map_or(true, |a| a > 0.0)
        && div_residual <= opts.div_tol;
    PatchReport {
        support_ok: acc.support_ok,
        max_segment_distance: acc.dist,
        alpha_measured_v: alpha_v,
        alpha_measured_b: alpha_b,
        div_residual,
        pass,
    }
}

/// Smallest power-of-two multiple of `start` whose patch stays within `eps`
/// of its segment, capped at `max_frequency`.
pub fn min_frequency(
    patch: &PerturbationPatch,
    eps: f64,
    start: u32,
    max_frequency: u32,
    opts: &VerifyOptions,
) -> Result<u32, PerturbationError> {
    let mut freq = start.max(1);
    loop {
        let mut p = patch.clone();
        p.frequency = freq;
        p.epsilon = eps;
        let rep = verify_patch(&p, &VerifyOptions { div_samples_per_axis: 2, ..*opts });
        if rep.max_segment_distance <= eps {
            return Ok(freq);
        }
        if freq >= max_frequency {
            return Err(PerturbationError::FrequencyCap { frequency: freq, distance: rep.max_segment_distance });
        }
        freq = (freq * 2).min(max_frequency);
    }
}

/// Measured lower constant in ∫_B|v| ≥ α|v̄||B| and ∫_B|b| ≥ α|b̄||B|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCalibration {
    pub n: usize,
    pub frequency: u32,
    pub alpha_v: f64,
    pub alpha_b: f64,
    /// min(α_v, α_b), the value entering β.
    pub alpha: f64,
}

/// Measures α on reference tracer and Euler patches of dimension n.
pub fn calibrate_alpha(
    n: usize,
    cutoff: CutoffSpec,
    frequency: u32,
    samples_per_axis: usize,
) -> Result<AlphaCalibration, PerturbationError> {
    let opts = VerifyOptions { samples_per_axis, div_samples_per_axis: 2, ..VerifyOptions::default() };
    let mut w = DVector::zeros(n + 1);
    w[n] = 1.0;
    let tracer = tracer_patch(&w, frequency, cutoff)?;
    let alpha_b = verify_patch(&tracer, &opts).alpha_measured_b.unwrap_or(0.0);

    let e = |i: usize| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
    let (vj, v1) = (e(0), e(1));
    let xi = xi_vector(&vj, &v1).map_err(PerturbationError::Geometry)?;
    let dir = StatePoint::vertex(1.0, &vj).sub(&StatePoint::vertex(1.0, &v1)).scaled(0.5);
    let euler = euler_patch(&dir.v, &dir.z, &xi, frequency, cutoff)?;
    let alpha_v = verify_patch(&euler, &opts).alpha_measured_v.unwrap_or(0.0);
    Ok(AlphaCalibration { n, frequency, alpha_v, alpha_b, alpha: alpha_v.min(alpha_b) })
}
