use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StochasticError;

/// Discrete Brownian sample on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub dim: usize,
    /// t_k = k·T/steps, k = 0..=steps.
    pub times: Vec<f64>,
    /// `dim` components per time, time-major; the first row is zero.
    pub values: Vec<f64>,
    /// `None` for injected or imported paths.
    pub seed: Option<u64>,
}

impl BrownianPath {
    /// Path from tabulated values on a uniform grid over [0, T].
    pub fn from_values(dim: usize, t_final: f64, values: Vec<f64>) -> Result<Self, StochasticError> {
        if dim == 0 || values.len() % dim != 0 || values.len() / dim < 2 {
            return Err(StochasticError::Invalid("path needs ≥ 2 samples of a positive dimension".into()));
        }
        if !(t_final > 0.0) {
            return Err(StochasticError::Invalid("path horizon must be positive".into()));
        }
        if values[..dim].iter().any(|&x| x != 0.0) {
            return Err(StochasticError::Invalid("path must start at 0".into()));
        }
        let steps = values.len() / dim - 1;
        let times = (0..=steps).map(|k| k as f64 * t_final / steps as f64).collect();
        Ok(Self { dim, times, values, seed: None })
    }

    /// Injected path B(s) = f(s) in every component.
    pub fn from_fn(dim: usize, t_final: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<Self, StochasticError> {
        let mut values = Vec::with_capacity(dim * (steps + 1));
        for k in 0..=steps {
            let t = k as f64 * t_final / steps.max(1) as f64;
            let b = if k == 0 { 0.0 } else { f(t) };
            values.extend(std::iter::repeat(b).take(dim));
        }
        Self::from_values(dim, t_final, values)
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self) -> f64 {
        self.t_final() / self.steps() as f64
    }

    pub fn at_step(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// B(t) by linear interpolation; t is clamped to [0, T].
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let s = (t / self.dt()).clamp(0.0, self.steps() as f64);
        let k = (s.floor() as usize).min(self.steps() - 1);
        let w = s - k as f64;
        let (a, b) = (self.at_step(k), self.at_step(k + 1));
        for c in 0..self.dim {
            out[c] = if w == 0.0 { a[c] } else { a[c] + w * (b[c] - a[c]) };
        }
    }

    /// Whether every sample is zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&x| x == 0.0)
    }

    /// CSV with header `t,B1,…,Bd`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), StochasticError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|c| format!("B{c}")));
        wr.write_record(&header)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:e}")];
            row.extend(self.at_step(k).iter().map(|x| format!("{x:e}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, StochasticError> {
        let mut rd = csv::Reader::from_reader(r);
        let dim = rd.headers()?.len().saturating_sub(1);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| StochasticError::Invalid(format!("bad path entry {s:?}: {e}")));
            times.push(parse(&rec[0])?);
            for c in 1..=dim {
                values.push(parse(&rec[c])?);
            }
        }
        let t_final = *times.last().ok_or_else(|| StochasticError::Invalid("empty path file".into()))?;
        let mut path = Self::from_values(dim, t_final, values)?;
        // Keep the stored times so export/import round-trips exactly.
        let uniform = times.iter().zip(&path.times).all(|(a, b)| (a - b).abs() <= 1e-12 * t_final.max(1.0));
        if times.len() != path.times.len() || !uniform {
            return Err(StochasticError::Invalid("path times must be uniform from 0".into()));
        }
        path.times = times;
        Ok(path)
    }
}

/// Seeded path with independent N(0, dt) increments per component.
pub fn sample_brownian(dim: usize, t_final: f64, dt: f64, seed: u64) -> Result<BrownianPath, StochasticError> {
    if !(dt > 0.0) || !(t_final > 0.0) || dim == 0 {
        return Err(StochasticError::Invalid(format!("need dt > 0, T > 0 and dim ≥ 1 (dt = {dt}, T = {t_final}, dim = {dim})")));
    }
    let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    let sd = (t_final / steps as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; dim * (steps + 1)];
    for k in 1..=steps {
        for c in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[k * dim + c] = values[(k - 1) * dim + c] + sd * z;
        }
    }
    let mut path = BrownianPath::from_values(dim, t_final, values)?;
    path.seed = Some(seed);
    Ok(path)
}

/// `count` independent paths; path i uses a seed derived from (seed, i),
/// so the result does not depend on scheduling.
pub fn sample_paths(count: usize, dim: usize, t_final: f64, dt: f64, seed: u64) -> Result<Vec<BrownianPath>, StochasticError> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_brownian(dim, t_final, dt, path_seed(seed, i as u64)))
        .collect()
}

fn path_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// θ(t) = ∫₀ᵗ e^{−γB(s)} ds on the path grid, with its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    pub gamma: f64,
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// θ′ = e^{−γB}.
    pub theta_prime: Vec<f64>,
}

impl TimeChange {
    /// θ(T).
    pub fn horizon(&self) -> f64 {
        *self.theta.last().unwrap()
    }

    /// True when θ is the identity map (γ = 0 or B ≡ 0).
    pub fn is_identity(&self) -> bool {
        self.theta_prime.iter().all(|&x| x == 1.0)
    }

    pub fn theta_at(&self, t: f64) -> f64 {
        if self.is_identity() {
            return t;
        }
        interp(&self.times, &self.theta, t)
    }

    pub fn theta_prime_at(&self, t: f64) -> f64 {
        interp(&self.times, &self.theta_prime, t)
    }

    /// t with θ(t) = θ, by the inverse table.
    pub fn inverse(&self, theta: f64) -> f64 {
        if self.is_identity() {
            return theta;
        }
        interp(&self.theta, &self.times, theta)
    }
}

/// Piecewise-linear interpolation on an increasing table, clamped at the ends.
fn interp(x: &[f64], y: &[f64], q: f64) -> f64 {
    let m = x.len();
    if q <= x[0] {
        return y[0];
    }
    if q >= x[m - 1] {
        return y[m - 1];
    }
    let k = x.partition_point(|&v| v <= q) - 1;
    let w = (q - x[k]) / (x[k + 1] - x[k]);
    y[k] + w * (y[k + 1] - y[k])
}

/// Trapezoidal time change of a one-dimensional path.
pub fn time_change(path: &BrownianPath, gamma: f64) -> Result<TimeChange, StochasticError> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(StochasticError::Invalid(format!("γ must be ≥ 0, got {gamma}")));
    }
    if path.dim != 1 {
        return Err(StochasticError::Invalid(format!("time change needs a scalar path, got dimension {}", path.dim)));
    }
    let theta_prime: Vec<f64> = path.values.iter().map(|&b| if gamma == 0.0 { 1.0 } else { (-gamma * b).exp() }).collect();
    let theta = if theta_prime.iter().all(|&x| x == 1.0) {
        path.times.clone()
    } else {
        let mut acc = 0.0;
        let mut theta = Vec::with_capacity(theta_prime.len());
        theta.push(0.0);
        for k in 1..theta_prime.len() {
            acc += 0.5 * (theta_prime[k - 1] + theta_prime[k]) * (path.times[k] - path.times[k - 1]);
            theta.push(acc);
        }
        theta
    };
    if theta.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(StochasticError::Internal("time change is not strictly increasing".into()));
    }
    Ok(TimeChange { gamma, times: path.times.clone(), theta, theta_prime })
}

/// h̃(t) = e^{−γB(t)}·h(t) for h sampled on the path times.
pub fn rescaled_profile(h: &[f64], path: &BrownianPath, gamma: f64) -> Result<Vec<f64>, StochasticError> {
    if h.len() != path.times.len() || path.dim != 1 {
        return Err(StochasticError::Invalid("h must be sampled on the times of a scalar path".into()));
    }
    if h.iter().any(|&x| !(x > 0.0)) {
        return Err(StochasticError::Invalid("h must be positive".into()));
    }
    if !(gamma >= 0.0) {
        return Err(StochasticError::Invalid(format!("γ must be ≥ 0, got {gamma}")));
    }
    Ok(h.iter().zip(&path.values).map(|(&h, &b)| if gamma == 0.0 { h } else { (-gamma * b).exp() * h }).collect())
}
