use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::field::{Grid, SubsolutionField};
use super::IterationError;

/// Unnormalized bump exp(−1/(1−s²)) for s < 1.
fn bump(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s2)).exp()
    }
}

/// Smallest integer ≥ m whose only prime factors are 2, 3 and 5.
fn fft_size(m: usize) -> usize {
    let mut k = m.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}

/// Zero-padded FFT convolution with the discrete normalized bump ρ_δ on a
/// fixed grid, for all δ up to `max_delta`.
pub struct Convolver {
    shape: Vec<usize>,
    pad: Vec<usize>,
    spacing: Vec<f64>,
    max_delta: f64,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl Convolver {
    pub fn new(grid: &Grid, max_delta: f64) -> Self {
        let shape = grid.shape();
        let spacing = grid.spacing();
        let pad: Vec<usize> = shape
            .iter()
            .zip(&spacing)
            .map(|(&s, &h)| fft_size(s + (max_delta / h).ceil() as usize + 1))
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = pad.iter().map(|&p| planner.plan_fft_forward(p)).collect();
        let inv = pad.iter().map(|&p| planner.plan_fft_inverse(p)).collect();
        Self { shape, pad, spacing, max_delta, fwd, inv }
    }

    pub fn max_delta(&self) -> f64 {
        self.max_delta
    }

    fn total(&self) -> usize {
        self.pad.iter().product()
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let d = self.pad.len();
        let mut stride = 1;
        for a in 0..d {
            let p = self.pad[a];
            let lines = buf.len() / p;
            let mut scratch = vec![Complex::new(0.0, 0.0); buf.len()];
            // Gather every line along axis a into a contiguous block.
            let mut li = 0;
            for outer in 0..buf.len() / (stride * p) {
                for inner in 0..stride {
                    let base = outer * stride * p + inner;
                    for j in 0..p {
                        scratch[li * p + j] = buf[base + j * stride];
                    }
                    li += 1;
                }
            }
            debug_assert_eq!(li, lines);
            if inverse {
                self.inv[a].process(&mut scratch);
            } else {
                self.fwd[a].process(&mut scratch);
            }
            let mut li = 0;
            for outer in 0..buf.len() / (stride * p) {
                for inner in 0..stride {
                    let base = outer * stride * p + inner;
                    for j in 0..p {
                        buf[base + j * stride] = scratch[li * p + j];
                    }
                    li += 1;
                }
            }
            stride *= p;
        }
    }

    /// Discrete kernel as (padded offsets, weight), normalized to unit sum.
    pub fn kernel(&self, delta: f64) -> Vec<(Vec<isize>, f64)> {
        let d = self.shape.len();
        if delta <= 0.0 {
            return vec![(vec![0; d], 1.0)];
        }
        let rad: Vec<isize> = self.spacing.iter().map(|h| (delta / h).floor() as isize).collect();
        let mut out = Vec::new();
        let mut o: Vec<isize> = rad.iter().map(|r| -r).collect();
        loop {
            let s2: f64 = (0..d).map(|a| (o[a] as f64 * self.spacing[a] / delta).powi(2)).sum();
            let w = if o.iter().all(|&x| x == 0) { bump(0.0) } else { bump(s2) };
            if w > 0.0 {
                out.push((o.clone(), w));
            }
            let mut a = 0;
            loop {
                o[a] += 1;
                if o[a] <= rad[a] {
                    break;
                }
                o[a] = -rad[a];
                a += 1;
                if a == d {
                    let total: f64 = out.iter().map(|x| x.1).sum();
                    out.iter_mut().for_each(|x| x.1 /= total);
                    return out;
                }
            }
        }
    }

    fn kernel_hat(&self, delta: f64) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.total()];
        for (o, w) in self.kernel(delta) {
            let mut idx = 0;
            let mut stride = 1;
            for a in 0..o.len() {
                let p = self.pad[a] as isize;
                idx += (o[a].rem_euclid(p) as usize) * stride;
                stride *= self.pad[a];
            }
            buf[idx].re += w;
        }
        self.transform(&mut buf, false);
        buf
    }

    fn embed(&self, data: &[f64], stride: usize, c0: usize, c1: Option<usize>) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.total()];
        let d = self.shape.len();
        let mut m = vec![0usize; d];
        let nodes = data.len() / stride;
        for node in 0..nodes {
            let mut r = node;
            for a in 0..d {
                m[a] = r % self.shape[a];
                r /= self.shape[a];
            }
            let mut idx = 0;
            let mut st = 1;
            for a in 0..d {
                idx += m[a] * st;
                st *= self.pad[a];
            }
            buf[idx] = Complex::new(data[node * stride + c0], c1.map_or(0.0, |c| data[node * stride + c]));
        }
        buf
    }

    fn extract(&self, buf: &[Complex<f64>], out: &mut [f64], stride: usize, c0: usize, c1: Option<usize>) {
        let d = self.shape.len();
        let scale = 1.0 / self.total() as f64;
        let nodes = out.len() / stride;
        let mut m = vec![0usize; d];
        for node in 0..nodes {
            let mut r = node;
            for a in 0..d {
                m[a] = r % self.shape[a];
                r /= self.shape[a];
            }
            let mut idx = 0;
            let mut st = 1;
            for a in 0..d {
                idx += m[a] * st;
                st *= self.pad[a];
            }
            out[node * stride + c0] = buf[idx].re * scale;
            if let Some(c) = c1 {
                out[node * stride + c] = buf[idx].im * scale;
            }
        }
    }

    /// data∗ρ_δ restricted to the grid, for every δ in `deltas`.
    pub fn convolve_all(&self, data: &[f64], stride: usize, deltas: &[f64]) -> Result<Vec<Vec<f64>>, IterationError> {
        if let Some(&bad) = deltas.iter().find(|&&dl| dl > self.max_delta * (1.0 + 1e-12) || dl < 0.0) {
            return Err(IterationError::Mollifier(format!(
                "δ = {bad} outside [0, {}]",
                self.max_delta
            )));
        }
        let point_mass: Vec<bool> = deltas.iter().map(|&dl| self.kernel(dl).len() == 1).collect();
        let hats: Vec<Vec<Complex<f64>>> = deltas
            .iter()
            .zip(&point_mass)
            .map(|(&dl, &pm)| if pm { Vec::new() } else { self.kernel_hat(dl) })
            .collect();
        let mut outs = vec![vec![0.0; data.len()]; deltas.len()];
        for (out, &pm) in outs.iter_mut().zip(&point_mass) {
            if pm {
                out.copy_from_slice(data);
            }
        }
        if point_mass.iter().all(|&pm| pm) {
            return Ok(outs);
        }
        let mut c = 0;
        while c < stride {
            let c1 = (c + 1 < stride).then_some(c + 1);
            let mut spec = self.embed(data, stride, c, c1);
            self.transform(&mut spec, false);
            for ((hat, out), &pm) in hats.iter().zip(outs.iter_mut()).zip(&point_mass) {
                if pm {
                    continue;
                }
                let mut prod: Vec<Complex<f64>> = spec.iter().zip(hat).map(|(a, b)| a * b).collect();
                self.transform(&mut prod, true);
                self.extract(&prod, out, stride, c, c1);
            }
            c += 2;
        }
        Ok(outs)
    }
}

/// L²(O) norm of node-major flat data.
pub fn l2_norm(data: &[f64], cell: f64) -> f64 {
    (data.iter().map(|x| x * x).sum::<f64>() * cell).sqrt()
}

/// ‖ω − ω∗ρ_δ‖_{L²(O)}.
pub fn mollification_gap(conv: &Convolver, field: &SubsolutionField, delta: f64) -> Result<f64, IterationError> {
    let out = conv.convolve_all(&field.data, field.stride(), &[delta])?;
    let diff: Vec<f64> = field.data.iter().zip(&out[0]).map(|(a, b)| a - b).collect();
    Ok(l2_norm(&diff, field.grid.cell_volume()))
}

/// Mollified field with a δ-collar of O set to zero, plus ‖ω − ω∗ρ_δ‖.
pub fn mollify(field: &SubsolutionField, delta: f64) -> Result<(SubsolutionField, f64), IterationError> {
    let lengths = field.grid.lengths();
    let min_len = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(delta >= 0.0) || delta >= 0.25 * min_len {
        return Err(IterationError::Mollifier(format!(
            "δ = {delta} too large for the support margin (limit {})",
            0.25 * min_len
        )));
    }
    if delta == 0.0 {
        return Ok((field.clone(), 0.0));
    }
    let conv = Convolver::new(&field.grid, delta);
    let mut out = field.clone();
    out.data = conv.convolve_all(&field.data, field.stride(), &[delta])?.remove(0);
    let gap = {
        let diff: Vec<f64> = field.data.iter().zip(&out.data).map(|(a, b)| a - b).collect();
        l2_norm(&diff, field.grid.cell_volume())
    };
    let g = &field.grid;
    for idx in 0..g.node_count() {
        let y = g.coords(idx);
        let near = y.iter().zip(&lengths).any(|(&c, &l)| c < delta || l - c < delta);
        if near || g.is_boundary(idx) {
            out.node_mut(idx).iter_mut().for_each(|x| *x = 0.0);
        }
    }
    out.deficit = super::field::deficit(&out);
    Ok((out, gap))
}
