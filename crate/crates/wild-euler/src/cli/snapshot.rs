use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::geometry::flat_len;
use crate::iteration::{Grid, SubsolutionField};
use crate::stochastic::{FlowFields, NoiseKind, RelaxedFlux};
use crate::verification::MhdFields;

pub const MAGIC: &str = "wild-euler-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    /// Relaxed state (b, η, v, z, q) per node.
    Subsolution,
    /// Tracer, velocity, pressure and optionally the relaxed fluxes.
    Flow,
    /// Three-dimensional (u3, B3, π) on nz layers.
    Mhd,
}

/// One block of per-node scalars in storage order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub components: usize,
}

/// JSON description of the binary file next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub magic: String,
    pub version: u32,
    pub kind: SnapshotKind,
    pub grid: Grid,
    /// Nodes stored (space layers × time slices).
    pub nodes: usize,
    /// Node-major; each node stores the entries in this order.
    pub layout: Vec<LayoutEntry>,
    pub byte_order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deficit: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h_profile: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nz: Option<usize>,
}

impl Sidecar {
    fn new(kind: SnapshotKind, grid: &Grid, nodes: usize, layout: Vec<(&str, usize)>) -> Self {
        Self {
            magic: MAGIC.into(),
            version: VERSION,
            kind,
            grid: grid.clone(),
            nodes,
            layout: layout.into_iter().map(|(name, components)| LayoutEntry { name: name.into(), components }).collect(),
            byte_order: "little".into(),
            k: None,
            deficit: None,
            deltas: Vec::new(),
            h_profile: Vec::new(),
            noise: None,
            gamma: None,
            nz: None,
        }
    }

    pub fn stride(&self) -> usize {
        self.layout.iter().map(|e| e.components).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Subsolution(SubsolutionField),
    Flow { fields: FlowFields, noise: Option<NoiseKind>, gamma: Option<f64> },
    Mhd(MhdFields),
}

/// `dir/name.json` or `dir/name.bin` → `dir/name`.
pub fn snapshot_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_pair(stem: &Path, side: &Sidecar, data: &[f64]) -> Result<(), CliError> {
    debug_assert_eq!(data.len(), side.nodes * side.stride());
    let mut w = BufWriter::new(File::create(with_suffix(stem, "bin"))?);
    for x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    let mut j = BufWriter::new(File::create(with_suffix(stem, "json"))?);
    serde_json::to_writer_pretty(&mut j, side)?;
    j.write_all(b"\n")?;
    j.flush()?;
    Ok(())
}

pub fn write_subsolution(stem: &Path, f: &SubsolutionField) -> Result<(), CliError> {
    let n = f.grid.n;
    let mut side = Sidecar::new(
        SnapshotKind::Subsolution,
        &f.grid,
        f.grid.node_count(),
        vec![("b", 1), ("eta", n), ("v", n), ("z", n * n), ("q", 1)],
    );
    side.k = Some(f.k);
    side.deficit = Some(f.deficit);
    side.deltas = f.deltas.clone();
    side.h_profile = f.h_profile.clone();
    write_pair(stem, &side, &f.data)
}

pub fn write_flow(stem: &Path, f: &FlowFields, noise: Option<NoiseKind>, gamma: Option<f64>) -> Result<(), CliError> {
    f.validate()?;
    let n = f.grid.n;
    let mut layout = vec![("b", 1), ("v", n), ("p", 1)];
    if f.relaxed.is_some() {
        layout.push(("stress", n * n));
        layout.push(("tracer_flux", n));
    }
    let mut side = Sidecar::new(SnapshotKind::Flow, &f.grid, f.grid.node_count(), layout);
    side.noise = noise;
    side.gamma = gamma;
    let stride = side.stride();
    let mut data = Vec::with_capacity(stride * side.nodes);
    for i in 0..side.nodes {
        data.push(f.tracer[i]);
        data.extend_from_slice(&f.velocity[i * n..(i + 1) * n]);
        data.push(f.pressure[i]);
        if let Some(r) = &f.relaxed {
            data.extend_from_slice(&r.stress[i * n * n..(i + 1) * n * n]);
            data.extend_from_slice(&r.tracer_flux[i * n..(i + 1) * n]);
        }
    }
    write_pair(stem, &side, &data)
}

pub fn write_mhd(stem: &Path, m: &MhdFields) -> Result<(), CliError> {
    let nodes = m.pi3.len();
    let mut side = Sidecar::new(SnapshotKind::Mhd, &m.grid, nodes, vec![("u3", 3), ("b3", 3), ("pi", 1)]);
    side.nz = Some(m.nz);
    let mut data = Vec::with_capacity(7 * nodes);
    for i in 0..nodes {
        data.extend_from_slice(&m.u3[3 * i..3 * i + 3]);
        data.extend_from_slice(&m.b3[3 * i..3 * i + 3]);
        data.push(m.pi3[i]);
    }
    write_pair(stem, &side, &data)
}

fn format_err(msg: impl Into<String>) -> CliError {
    CliError::Format(msg.into())
}

fn expect_layout(side: &Sidecar, want: &[(&str, usize)]) -> Result<(), CliError> {
    let ok = side.layout.len() == want.len()
        && side.layout.iter().zip(want).all(|(e, (name, c))| e.name == *name && e.components == *c);
    if ok {
        Ok(())
    } else {
        Err(format_err(format!("layout {:?} does not match the {:?} layout", side.layout, side.kind)))
    }
}

/// Reads a snapshot given its stem or either of its two files.
pub fn read_snapshot(path: &Path) -> Result<Snapshot, CliError> {
    let stem = snapshot_stem(path);
    let text = std::fs::read_to_string(with_suffix(&stem, "json"))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| format_err(format!("sidecar: {e}")))?;
    if side.magic != MAGIC {
        return Err(format_err(format!("bad magic {:?}", side.magic)));
    }
    if side.version != VERSION {
        return Err(format_err(format!("unsupported version {}", side.version)));
    }
    if side.byte_order != "little" {
        return Err(format_err(format!("unsupported byte order {:?}", side.byte_order)));
    }
    let stride = side.stride();
    let expected = side.nodes * stride;
    let mut bytes = Vec::new();
    BufReader::new(File::open(with_suffix(&stem, "bin"))?).read_to_end(&mut bytes)?;
    if bytes.len() != 8 * expected {
        return Err(format_err(format!("data holds {} bytes, sidecar promises {}", bytes.len(), 8 * expected)));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let g = side.grid.clone();
    let n = g.n;
    match side.kind {
        SnapshotKind::Subsolution => {
            expect_layout(&side, &[("b", 1), ("eta", n), ("v", n), ("z", n * n), ("q", 1)])?;
            if side.nodes != g.node_count() || stride != flat_len(n) || side.h_profile.len() != g.nt {
                return Err(format_err("subsolution sidecar does not match its grid"));
            }
            let k = side.k.ok_or_else(|| format_err("subsolution sidecar lacks k"))?;
            let deficit = side.deficit.ok_or_else(|| format_err("subsolution sidecar lacks the deficit"))?;
            Ok(Snapshot::Subsolution(SubsolutionField { grid: g, data, h_profile: side.h_profile, k, deficit, deltas: side.deltas }))
        }
        SnapshotKind::Flow => {
            let relaxed = side.layout.len() == 5;
            let mut want = vec![("b", 1), ("v", n), ("p", 1)];
            if relaxed {
                want.extend([("stress", n * n), ("tracer_flux", n)]);
            }
            expect_layout(&side, &want)?;
            if side.nodes != g.node_count() {
                return Err(format_err("flow sidecar does not match its grid"));
            }
            let mut f = FlowFields::zeros(g);
            let mut r = RelaxedFlux { stress: Vec::new(), tracer_flux: Vec::new() };
            for (i, node) in data.chunks_exact(stride).enumerate() {
                f.tracer[i] = node[0];
                f.velocity[i * n..(i + 1) * n].copy_from_slice(&node[1..1 + n]);
                f.pressure[i] = node[1 + n];
                if relaxed {
                    r.stress.extend_from_slice(&node[2 + n..2 + n + n * n]);
                    r.tracer_flux.extend_from_slice(&node[2 + n + n * n..]);
                }
            }
            if relaxed {
                f.relaxed = Some(r);
            }
            Ok(Snapshot::Flow { fields: f, noise: side.noise, gamma: side.gamma })
        }
        SnapshotKind::Mhd => {
            expect_layout(&side, &[("u3", 3), ("b3", 3), ("pi", 1)])?;
            let nz = side.nz.ok_or_else(|| format_err("MHD sidecar lacks nz"))?;
            if side.nodes != g.nx * g.nx * nz * g.nt {
                return Err(format_err("MHD sidecar does not match its grid"));
            }
            let mut m = MhdFields { grid: g, nz, u3: Vec::new(), b3: Vec::new(), pi3: Vec::new() };
            for node in data.chunks_exact(7) {
                m.u3.extend_from_slice(&node[..3]);
                m.b3.extend_from_slice(&node[3..6]);
                m.pi3.push(node[6]);
            }
            Ok(Snapshot::Mhd(m))
        }
    }
}
