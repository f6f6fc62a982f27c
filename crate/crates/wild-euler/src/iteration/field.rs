use serde::{Deserialize, Serialize};

use super::IterationError;
use crate::geometry::{flat_len, Layout};

/// Energy profile h(t) on [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HProfile {
    Constant { value: f64 },
    /// Values at uniformly spaced times t_i = i·T/(len−1), linearly interpolated.
    Tabulated { values: Vec<f64> },
}

impl Default for HProfile {
    fn default() -> Self {
        Self::Constant { value: 1.0 }
    }
}

impl HProfile {
    pub fn validate(&self) -> Result<(), IterationError> {
        let ok = match self {
            Self::Constant { value } => *value > 0.0 && value.is_finite(),
            Self::Tabulated { values } => values.len() >= 2 && values.iter().all(|v| *v > 0.0 && v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(IterationError::Config("h profile must be positive (and tabulated with ≥ 2 samples)".into()))
        }
    }

    pub fn at(&self, t: f64, t_final: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Tabulated { values } => {
                let m = values.len() - 1;
                let s = (t / t_final).clamp(0.0, 1.0) * m as f64;
                let i = (s.floor() as usize).min(m - 1);
                let w = s - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }
}

/// Cell-centered grid on (0, L₁)×…×(0, L_n)×(0, T); axes are space first,
/// time last, and the first axis varies fastest in the linear node index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub extent: Vec<f64>,
    pub t_final: f64,
    pub nx: usize,
    pub nt: usize,
}

impl Grid {
    pub fn new(n: usize, extent: Vec<f64>, t_final: f64, nx: usize, nt: usize) -> Result<Self, IterationError> {
        if n < 2 || extent.len() != n {
            return Err(IterationError::Config(format!("need n ≥ 2 box extents, got {}", extent.len())));
        }
        if extent.iter().any(|l| !(*l > 0.0)) || !(t_final > 0.0) {
            return Err(IterationError::Config("box extents and T must be positive".into()));
        }
        if nx < 4 || nt < 4 {
            return Err(IterationError::Config("grid needs at least 4 cells per axis".into()));
        }
        Ok(Self { n, extent, t_final, nx, nt })
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nx; self.n];
        s.push(self.nt);
        s
    }

    /// Cell widths per axis.
    pub fn spacing(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.extent.iter().map(|l| l / self.nx as f64).collect();
        h.push(self.t_final / self.nt as f64);
        h
    }

    /// Lengths per axis (space extents then T).
    pub fn lengths(&self) -> Vec<f64> {
        let mut l = self.extent.clone();
        l.push(self.t_final);
        l
    }

    pub fn node_count(&self) -> usize {
        self.nx.pow(self.n as u32) * self.nt
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// |O| = T·|O_x|.
    pub fn volume(&self) -> f64 {
        self.t_final * self.space_volume()
    }

    pub fn space_volume(&self) -> f64 {
        self.extent.iter().product()
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for (a, s) in self.shape().into_iter().enumerate() {
            out[a] = idx % s;
            idx /= s;
        }
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let shape = self.shape();
        let mut idx = 0;
        for a in (0..shape.len()).rev() {
            idx = idx * shape[a] + multi[a];
        }
        idx
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut m = vec![0; self.dim()];
        self.multi_index(idx, &mut m);
        let h = self.spacing();
        m.iter().zip(&h).map(|(&i, &hh)| (i as f64 + 0.5) * hh).collect()
    }

    /// Time-slice index of a node.
    pub fn time_index(&self, idx: usize) -> usize {
        idx / self.nx.pow(self.n as u32)
    }

    pub fn time_of(&self, it: usize) -> f64 {
        (it as f64 + 0.5) * self.t_final / self.nt as f64
    }

    /// Whether the node touches the boundary layer of cells.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut m = vec![0; self.dim()];
        self.multi_index(idx, &mut m);
        m.iter().zip(self.shape()).any(|(&i, s)| i == 0 || i + 1 == s)
    }

    /// Linear indices of nodes strictly inside the ball.
    pub fn nodes_in_ball(&self, center: &[f64], r: f64) -> Vec<usize> {
        let h = self.spacing();
        let shape = self.shape();
        let d = self.dim();
        let lo: Vec<usize> = (0..d)
            .map(|a| (((center[a] - r) / h[a] - 0.5).ceil().max(0.0)) as usize)
            .collect();
        let hi: Vec<usize> = (0..d)
            .map(|a| ((((center[a] + r) / h[a] - 0.5).floor()) as isize).clamp(-1, shape[a] as isize - 1))
            .map(|x| (x + 1) as usize)
            .collect();
        let mut out = Vec::new();
        if (0..d).any(|a| lo[a] >= hi[a]) {
            return out;
        }
        let mut m = lo.clone();
        loop {
            let r2: f64 = (0..d).map(|a| ((m[a] as f64 + 0.5) * h[a] - center[a]).powi(2)).sum();
            if r2 < r * r {
                out.push(self.linear_index(&m));
            }
            let mut a = 0;
            loop {
                m[a] += 1;
                if m[a] < hi[a] {
                    break;
                }
                m[a] = lo[a];
                a += 1;
                if a == d {
                    return out;
                }
            }
        }
    }
}

/// Discretized subsolution: one flat state per node plus iteration metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionField {
    pub grid: Grid,
    /// Node-major samples in the flat layout `b, η, v, z, q`.
    pub data: Vec<f64>,
    /// h at each time slice.
    pub h_profile: Vec<f64>,
    pub k: usize,
    pub deficit: f64,
    /// Mollifier scales δ_1..δ_k chosen so far.
    pub deltas: Vec<f64>,
}

impl SubsolutionField {
    pub fn zeros(grid: Grid, h: &HProfile) -> Result<Self, IterationError> {
        h.validate()?;
        let h_profile: Vec<f64> = (0..grid.nt).map(|it| h.at(grid.time_of(it), grid.t_final)).collect();
        let data = vec![0.0; grid.node_count() * flat_len(grid.n)];
        let mut f = Self { grid, data, h_profile, k: 1, deficit: 0.0, deltas: Vec::new() };
        f.deficit = deficit(&f);
        Ok(f)
    }

    pub fn stride(&self) -> usize {
        flat_len(self.grid.n)
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        let s = self.stride();
        &self.data[idx * s..(idx + 1) * s]
    }

    pub fn node_mut(&mut self, idx: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.data[idx * s..(idx + 1) * s]
    }

    pub fn h_at_node(&self, idx: usize) -> f64 {
        self.h_profile[self.grid.time_index(idx)]
    }

    /// (‖v‖², ‖b‖²) by the midpoint rule.
    pub fn energies(&self) -> (f64, f64) {
        let n = self.grid.n;
        let lay = Layout { n };
        let cell = self.grid.cell_volume();
        let (mut ev, mut eb) = (0.0, 0.0);
        for node in self.data.chunks_exact(self.stride()) {
            ev += node[lay.v()..lay.v() + n].iter().map(|x| x * x).sum::<f64>();
            eb += node[lay.b()] * node[lay.b()];
        }
        (ev * cell, eb * cell)
    }

    /// ‖h‖²_{L²(0,T)}·|O_x| + |O|.
    pub fn saturated_energy(&self) -> f64 {
        let dt = self.grid.t_final / self.grid.nt as f64;
        let h2: f64 = self.h_profile.iter().map(|h| h * h * dt).sum();
        h2 * self.grid.space_volume() + self.grid.volume()
    }

    /// Pointwise deficit density (h² + 1) − (|v|² + b²).
    pub fn deficit_density(&self, idx: usize) -> f64 {
        let n = self.grid.n;
        let lay = Layout { n };
        let s = self.node(idx);
        let h = self.h_at_node(idx);
        let v2: f64 = s[lay.v()..lay.v() + n].iter().map(|x| x * x).sum();
        h * h + 1.0 - v2 - s[lay.b()] * s[lay.b()]
    }

    /// Whether all boundary-layer nodes vanish.
    pub fn support_ok(&self) -> bool {
        (0..self.grid.node_count()).all(|i| !self.grid.is_boundary(i) || self.node(i).iter().all(|&x| x == 0.0))
    }
}

/// D = (‖h‖²|O_x| + |O|) − (‖v‖² + ‖b‖²).
pub fn deficit(field: &SubsolutionField) -> f64 {
    let (ev, eb) = field.energies();
    field.saturated_energy() - ev - eb
}
