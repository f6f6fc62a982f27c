use rayon::prelude::*;

use super::fields::FlowFields;
use super::path::{time_change, BrownianPath, TimeChange};
use super::pchip::pchip_resample;
use super::StochasticError;
use crate::iteration::Grid;

/// Relative slack when matching field horizons against the path horizon.
const HORIZON_TOL: f64 = 1e-9;

fn check_path(path: &BrownianPath, dim: usize, horizon: f64) -> Result<(), StochasticError> {
    if path.dim != dim {
        return Err(StochasticError::Invalid(format!("path dimension {} does not match the required {dim}", path.dim)));
    }
    if horizon > path.t_final() * (1.0 + HORIZON_TOL) {
        return Err(StochasticError::Invalid(format!("field horizon {horizon} exceeds the path horizon {}", path.t_final())));
    }
    Ok(())
}

/// Shifts every slice by ±B(t): out(t, x) = src(t, x + sign·B(t)), by
/// multilinear interpolation on the periodically padded box.
fn shift(fields: &FlowFields, path: &BrownianPath, sign: f64) -> Result<FlowFields, StochasticError> {
    fields.validate()?;
    let g = &fields.grid;
    let n = g.n;
    check_path(path, n, g.t_final)?;
    let h = g.spacing();
    let mut offsets = Vec::with_capacity(g.nt);
    let mut b = vec![0.0; n];
    for it in 0..g.nt {
        let t = g.time_of(it);
        path.value_at(t, &mut b);
        for a in 0..n {
            if b[a].abs() >= g.extent[a] {
                return Err(StochasticError::DomainExceeded { time: t, shift: b[a] });
            }
        }
        offsets.push(b.iter().zip(&h).map(|(s, hh)| sign * s / hh).collect::<Vec<f64>>());
    }
    let mut out = fields.clone();
    let per_slice = fields.slice_nodes();
    for (dst, from) in out.channels().into_iter().zip(fields.channel_data()) {
        let c = dst.comps;
        dst.data.par_chunks_mut(per_slice * c).zip(from.par_chunks(per_slice * c)).zip(&offsets).for_each(
            |((d, s), o)| shift_slice(d, s, c, g.nx, n, o),
        );
    }
    Ok(out)
}

fn shift_slice(dst: &mut [f64], src: &[f64], comps: usize, nx: usize, n: usize, offset: &[f64]) {
    let base: Vec<isize> = offset.iter().map(|o| o.floor() as isize).collect();
    let frac: Vec<f64> = offset.iter().zip(&base).map(|(o, b)| o - *b as f64).collect();
    let wrap = |i: isize| i.rem_euclid(nx as isize) as usize;
    let mut m = vec![0usize; n];
    for node in 0..nx.pow(n as u32) {
        let mut r = node;
        for a in 0..n {
            m[a] = r % nx;
            r /= nx;
        }
        for c in 0..comps {
            let mut acc = 0.0;
            for corner in 0..(1usize << n) {
                let mut w = 1.0;
                let mut idx = 0;
                let mut stride = 1;
                for a in 0..n {
                    let up = (corner >> a) & 1;
                    w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                    idx += wrap(m[a] as isize + base[a] + up as isize) * stride;
                    stride *= nx;
                }
                if w != 0.0 {
                    acc += w * src[idx * comps + c];
                }
            }
            dst[node * comps + c] = acc;
        }
    }
}

/// v(t, x) = u(t, x + B(t)); the pressure maps the same way.
pub fn transport_forward(u: &FlowFields, path: &BrownianPath) -> Result<FlowFields, StochasticError> {
    shift(u, path, 1.0)
}

/// u(t, x) = v(t, x − B(t)).
pub fn transport_inverse(v: &FlowFields, path: &BrownianPath) -> Result<FlowFields, StochasticError> {
    shift(v, path, -1.0)
}

fn scalar_at(path: &BrownianPath, t: f64) -> f64 {
    let mut b = [0.0];
    path.value_at(t, &mut b);
    b[0]
}

fn scale_slices(fields: &mut FlowFields, factor: impl Fn(usize, i32) -> f64 + Sync) {
    let per_slice = fields.slice_nodes();
    for ch in fields.channels() {
        if ch.power == 0 {
            continue;
        }
        let c = ch.comps;
        ch.data.par_chunks_mut(per_slice * c).enumerate().for_each(|(it, d)| {
            let f = factor(it, ch.power);
            d.iter_mut().for_each(|x| *x *= f);
        });
    }
}

fn resample(fields: &FlowFields, grid: Grid, knots: &[f64], targets: &[f64]) -> Result<FlowFields, StochasticError> {
    let per_slice = fields.slice_nodes();
    let mut out = fields.clone();
    out.grid = grid;
    for (dst, from) in out.channels().into_iter().zip(fields.channel_data()) {
        *dst.data = pchip_resample(knots, from, per_slice * dst.comps, targets)?;
    }
    Ok(out)
}

fn multiplicative_setup(path: &BrownianPath, gamma: f64) -> Result<TimeChange, StochasticError> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(StochasticError::Invalid(format!("γ must be ≥ 0, got {gamma}")));
    }
    time_change(path, gamma)
}

/// (v, p)(θ(t)) = (e^{γB(t)}u, e^{2γB(t)}π)(t), resampled onto a uniform
/// θ-grid over [0, θ(T)] by monotone cubic interpolation.
pub fn multiplicative_forward(u: &FlowFields, path: &BrownianPath, gamma: f64) -> Result<FlowFields, StochasticError> {
    u.validate()?;
    check_path(path, 1, u.grid.t_final)?;
    let tc = multiplicative_setup(path, gamma)?;
    if tc.is_identity() {
        return Ok(u.clone());
    }
    let g = &u.grid;
    let times: Vec<f64> = (0..g.nt).map(|i| g.time_of(i)).collect();
    let bs: Vec<f64> = times.iter().map(|&t| scalar_at(path, t)).collect();
    let mut scaled = u.clone();
    scale_slices(&mut scaled, |it, p| (p as f64 * gamma * bs[it]).exp());
    let knots: Vec<f64> = times.iter().map(|&t| tc.theta_at(t)).collect();
    let out_grid = Grid { t_final: tc.theta_at(g.t_final), ..g.clone() };
    let targets: Vec<f64> = (0..g.nt).map(|j| out_grid.time_of(j)).collect();
    resample(&scaled, out_grid, &knots, &targets)
}

/// u(t) = e^{−γB(t)} v(θ(t)), π(t) = e^{−2γB(t)} p(θ(t)) on a uniform t-grid
/// over [0, T] with θ(T) = the input horizon.
pub fn multiplicative_inverse(v: &FlowFields, path: &BrownianPath, gamma: f64) -> Result<FlowFields, StochasticError> {
    v.validate()?;
    check_path(path, 1, 0.0)?;
    let tc = multiplicative_setup(path, gamma)?;
    if tc.is_identity() {
        check_path(path, 1, v.grid.t_final)?;
        return Ok(v.clone());
    }
    let g = &v.grid;
    if g.t_final > tc.horizon() * (1.0 + HORIZON_TOL) {
        return Err(StochasticError::Invalid(format!("θ-horizon {} exceeds θ(T) = {}", g.t_final, tc.horizon())));
    }
    let knots: Vec<f64> = (0..g.nt).map(|j| g.time_of(j)).collect();
    let out_grid = Grid { t_final: tc.inverse(g.t_final.min(tc.horizon())), ..g.clone() };
    let times: Vec<f64> = (0..g.nt).map(|i| out_grid.time_of(i)).collect();
    let targets: Vec<f64> = times.iter().map(|&t| tc.theta_at(t)).collect();
    let mut out = resample(v, out_grid, &knots, &targets)?;
    let bs: Vec<f64> = times.iter().map(|&t| scalar_at(path, t)).collect();
    scale_slices(&mut out, |it, p| (-(p as f64) * gamma * bs[it]).exp());
    Ok(out)
}
