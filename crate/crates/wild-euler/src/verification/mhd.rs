use serde::{Deserialize, Serialize};

use super::VerificationError;
use crate::geometry::Layout;
use crate::iteration::{Grid, SubsolutionField};

/// Planar fields lifted to three dimensions on `nz` layers of unit total
/// depth: u3 = (v₁, v₂, 0), B3 = (0, 0, b) and the MHD pressure π = p − b²/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhdFields {
    /// Planar space–time grid of the source fields.
    pub grid: Grid,
    pub nz: usize,
    /// Three components per node, node index (i₁, i₂, i₃, t) with i₁ fastest.
    pub u3: Vec<f64>,
    pub b3: Vec<f64>,
    pub pi3: Vec<f64>,
}

impl MhdFields {
    fn plane(&self) -> usize {
        self.grid.nx * self.grid.nx
    }

    /// ‖u3(t)‖² per time slice.
    pub fn slice_norms_u(&self) -> Vec<f64> {
        slice_norms(&self.u3, 3, self.plane() * self.nz, self.grid.cell_volume() / self.grid.spacing()[2] / self.nz as f64)
    }

    /// ‖B3(t)‖² per time slice.
    pub fn slice_norms_b(&self) -> Vec<f64> {
        slice_norms(&self.b3, 3, self.plane() * self.nz, self.grid.cell_volume() / self.grid.spacing()[2] / self.nz as f64)
    }
}

fn slice_norms(data: &[f64], comps: usize, nodes_per_slice: usize, cell: f64) -> Vec<f64> {
    data.chunks_exact(comps * nodes_per_slice)
        .map(|slice| slice.iter().map(|x| x * x).sum::<f64>() * cell)
        .collect()
}

/// ‖v(t)‖² per time slice of planar node-major data with `comps` components.
pub fn planar_slice_norms(grid: &Grid, data: &[f64], comps: usize) -> Vec<f64> {
    slice_norms(data, comps, grid.nx * grid.nx, grid.cell_volume() / grid.spacing()[2])
}

/// Lifts planar tracer `b`, velocity `v` (two per node) and Euler pressure
/// `p` to three dimensions.
pub fn mhd_embed(grid: &Grid, b: &[f64], v: &[f64], p: &[f64], nz: usize) -> Result<MhdFields, VerificationError> {
    let nodes = grid.node_count();
    if grid.n != 2 {
        return Err(VerificationError::Invalid(format!("embedding needs n = 2, got {}", grid.n)));
    }
    if b.len() != nodes || p.len() != nodes || v.len() != 2 * nodes || nz < 3 {
        return Err(VerificationError::Invalid("field sizes do not match the grid (or nz < 3)".into()));
    }
    let plane = grid.nx * grid.nx;
    let total = plane * nz * grid.nt;
    let mut u3 = vec![0.0; 3 * total];
    let mut b3 = vec![0.0; 3 * total];
    let mut pi3 = vec![0.0; total];
    for it in 0..grid.nt {
        for k in 0..nz {
            for i in 0..plane {
                let src = it * plane + i;
                let dst = (it * nz + k) * plane + i;
                u3[3 * dst] = v[2 * src];
                u3[3 * dst + 1] = v[2 * src + 1];
                b3[3 * dst + 2] = b[src];
                pi3[dst] = p[src] - 0.5 * b[src] * b[src];
            }
        }
    }
    Ok(MhdFields { grid: grid.clone(), nz, u3, b3, pi3 })
}

/// Embedding of a planar subsolution with p = q − |v|²/2.
pub fn mhd_embed_field(field: &SubsolutionField, nz: usize) -> Result<MhdFields, VerificationError> {
    if field.grid.n != 2 {
        return Err(VerificationError::Invalid(format!("embedding needs n = 2, got {}", field.grid.n)));
    }
    let lay = Layout { n: 2 };
    let nodes = field.grid.node_count();
    let mut b = Vec::with_capacity(nodes);
    let mut v = Vec::with_capacity(2 * nodes);
    let mut p = Vec::with_capacity(nodes);
    for i in 0..nodes {
        let s = field.node(i);
        b.push(s[lay.b()]);
        v.extend_from_slice(&s[lay.v()..lay.v() + 2]);
        p.push(s[lay.q()] - 0.5 * (s[lay.v()].powi(2) + s[lay.v() + 1].powi(2)));
    }
    mhd_embed(&field.grid, &b, &v, &p, nz)
}

/// Max |∂₁v₁ + ∂₂v₂| by centered differences over interior nodes.
pub fn divergence_2d(grid: &Grid, v: &[f64]) -> f64 {
    let nx = grid.nx;
    let h = grid.spacing();
    let plane = nx * nx;
    let mut worst: f64 = 0.0;
    for it in 0..grid.nt {
        for j in 1..nx - 1 {
            for i in 1..nx - 1 {
                let at = |ii: usize, jj: usize, c: usize| v[2 * (it * plane + jj * nx + ii) + c];
                let d = (at(i + 1, j, 0) - at(i - 1, j, 0)) / (2.0 * h[0]) + (at(i, j + 1, 1) - at(i, j - 1, 1)) / (2.0 * h[1]);
                worst = worst.max(d.abs());
            }
        }
    }
    worst
}

/// Max |∂₁w₁ + ∂₂w₂ + ∂₃w₃| by centered differences, periodic in x₃.
pub fn divergence_3d(fields: &MhdFields, w: &[f64]) -> f64 {
    let g = &fields.grid;
    let nx = g.nx;
    let nz = fields.nz;
    let h = g.spacing();
    let hz = 1.0 / nz as f64;
    let plane = nx * nx;
    let mut worst: f64 = 0.0;
    for it in 0..g.nt {
        for k in 0..nz {
            for j in 1..nx - 1 {
                for i in 1..nx - 1 {
                    let at = |ii: usize, jj: usize, kk: usize, c: usize| w[3 * ((it * nz + kk) * plane + jj * nx + ii) + c];
                    let (kp, km) = ((k + 1) % nz, (k + nz - 1) % nz);
                    let d = (at(i + 1, j, k, 0) - at(i - 1, j, k, 0)) / (2.0 * h[0])
                        + (at(i, j + 1, k, 1) - at(i, j - 1, k, 1)) / (2.0 * h[1])
                        + (at(i, j, kp, 2) - at(i, j, km, 2)) / (2.0 * hz);
                    worst = worst.max(d.abs());
                }
            }
        }
    }
    worst
}
