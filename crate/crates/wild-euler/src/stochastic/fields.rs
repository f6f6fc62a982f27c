use serde::{Deserialize, Serialize};

use super::StochasticError;
use crate::geometry::Layout;
use crate::iteration::{Grid, SubsolutionField};

/// Fluxes of the relaxed (linear) system, carried when the fields come from a
/// subsolution rather than an exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedFlux {
    /// Momentum flux z + qI in place of u⊗u + πI, n² per node (row-major).
    pub stress: Vec<f64>,
    /// Tracer flux η in place of b·u, n per node.
    pub tracer_flux: Vec<f64>,
}

/// Velocity, tracer and pressure samples on a space–time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFields {
    pub grid: Grid,
    /// n per node.
    pub velocity: Vec<f64>,
    pub tracer: Vec<f64>,
    pub pressure: Vec<f64>,
    pub relaxed: Option<RelaxedFlux>,
}

/// One data array with its components per node and its weight under the
/// multiplicative scaling (powers of e^{γB}).
pub(crate) struct Channel<'a> {
    pub data: &'a mut Vec<f64>,
    pub comps: usize,
    pub power: i32,
}

impl FlowFields {
    pub fn zeros(grid: Grid) -> Self {
        let nodes = grid.node_count();
        let n = grid.n;
        Self { velocity: vec![0.0; n * nodes], tracer: vec![0.0; nodes], pressure: vec![0.0; nodes], relaxed: None, grid }
    }

    /// Fields sampled from closures of (t, x): velocity into the slice, tracer
    /// and pressure returned.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, &[f64], &mut [f64]) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        let n = out.grid.n;
        for i in 0..out.grid.node_count() {
            let y = out.grid.coords(i);
            let (b, p) = f(y[n], &y[..n], &mut out.velocity[i * n..(i + 1) * n]);
            out.tracer[i] = b;
            out.pressure[i] = p;
        }
        out
    }

    /// Splits a subsolution into b, v, p = q − |v|²/n and the relaxed fluxes.
    pub fn from_subsolution(field: &SubsolutionField) -> Self {
        let n = field.grid.n;
        let lay = Layout { n };
        let nodes = field.grid.node_count();
        let mut out = Self::zeros(field.grid.clone());
        let mut stress = vec![0.0; n * n * nodes];
        let mut tracer_flux = vec![0.0; n * nodes];
        for i in 0..nodes {
            let s = field.node(i);
            let v = &s[lay.v()..lay.v() + n];
            out.velocity[i * n..(i + 1) * n].copy_from_slice(v);
            out.tracer[i] = s[lay.b()];
            let q = s[lay.q()];
            out.pressure[i] = q - v.iter().map(|x| x * x).sum::<f64>() / n as f64;
            tracer_flux[i * n..(i + 1) * n].copy_from_slice(&s[lay.eta()..lay.eta() + n]);
            let st = &mut stress[i * n * n..(i + 1) * n * n];
            st.copy_from_slice(&s[lay.z()..lay.z() + n * n]);
            for a in 0..n {
                st[a * n + a] += q;
            }
        }
        out.relaxed = Some(RelaxedFlux { stress, tracer_flux });
        out
    }

    pub fn slice_nodes(&self) -> usize {
        self.grid.nx.pow(self.grid.n as u32)
    }

    pub fn validate(&self) -> Result<(), StochasticError> {
        let nodes = self.grid.node_count();
        let n = self.grid.n;
        let ok = self.velocity.len() == n * nodes
            && self.tracer.len() == nodes
            && self.pressure.len() == nodes
            && self.relaxed.as_ref().map_or(true, |r| r.stress.len() == n * n * nodes && r.tracer_flux.len() == n * nodes);
        if ok {
            Ok(())
        } else {
            Err(StochasticError::Invalid("field arrays do not match the grid".into()))
        }
    }

    pub(crate) fn channels(&mut self) -> Vec<Channel<'_>> {
        let n = self.grid.n;
        let mut out = vec![
            Channel { data: &mut self.velocity, comps: n, power: 1 },
            Channel { data: &mut self.tracer, comps: 1, power: 0 },
            Channel { data: &mut self.pressure, comps: 1, power: 2 },
        ];
        if let Some(r) = self.relaxed.as_mut() {
            out.push(Channel { data: &mut r.stress, comps: n * n, power: 2 });
            out.push(Channel { data: &mut r.tracer_flux, comps: n, power: 1 });
        }
        out
    }

    /// Read-only view of the arrays in the order of `channels`.
    pub(crate) fn channel_data(&self) -> Vec<&[f64]> {
        let mut out = vec![self.velocity.as_slice(), self.tracer.as_slice(), self.pressure.as_slice()];
        if let Some(r) = &self.relaxed {
            out.push(&r.stress);
            out.push(&r.tracer_flux);
        }
        out
    }

    /// Largest entrywise difference over all arrays (∞ if the shapes differ).
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: &[f64], b: &[f64]| {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        };
        let mut m = d(&self.velocity, &other.velocity).max(d(&self.tracer, &other.tracer)).max(d(&self.pressure, &other.pressure));
        match (&self.relaxed, &other.relaxed) {
            (Some(a), Some(b)) => m = m.max(d(&a.stress, &b.stress)).max(d(&a.tracer_flux, &b.tracer_flux)),
            (None, None) => {}
            _ => m = f64::INFINITY,
        }
        m
    }

    /// Largest magnitude over all arrays.
    pub fn max_abs(&self) -> f64 {
        let mut m = [&self.velocity, &self.tracer, &self.pressure].iter().flat_map(|a| a.iter()).fold(0.0_f64, |m, x| m.max(x.abs()));
        if let Some(r) = &self.relaxed {
            m = r.stress.iter().chain(&r.tracer_flux).fold(m, |m, x| m.max(x.abs()));
        }
        m
    }
}
