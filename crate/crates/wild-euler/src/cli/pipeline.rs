use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{HSpec, RunConfig};
use super::snapshot::{read_snapshot, write_flow, write_subsolution, Snapshot};
use super::CliError;
use crate::iteration::{run, run_from, ConvergenceRow, HProfile, RunOutput};
use crate::stochastic::{
    sample_brownian, space_bump_tests, time_change, BrownianPath, FlowFields, NoiseKind, NoiseRegistry, WeakFormOptions,
};
use crate::verification::{bump_tests, constraint_saturation, relaxed_system_residual, ResidualReport, SaturationReport};

pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const PATH_FILE: &str = "path.csv";
pub const RESIDUAL_FILE: &str = "residual.json";
pub const RPDE_SNAPSHOT: &str = "rpde";
pub const SPDE_SNAPSHOT: &str = "spde";
const CONFIG_ECHO: &str = "config.json";

/// Seed of the Brownian path for a run seed (kept apart from the
/// construction's own random stream).
pub fn path_seed(seed: u64) -> u64 {
    seed ^ 0xb10e_5eed_0000_0000
}

/// Profile of the random PDE on its own time axis [0, horizon]: h itself
/// without time change, h∘θ⁻¹ on a fine uniform θ-table otherwise.
pub fn random_profile(cfg: &RunConfig, path: Option<&BrownianPath>) -> Result<(HProfile, f64), CliError> {
    let user_h = |t: f64| -> f64 {
        match &cfg.h {
            HSpec::Constant(c) => *c,
            HSpec::Tabulated(v) => HProfile::Tabulated { values: v.clone() }.at(t, cfg.t_final),
            HSpec::Expression(_) => {
                let mut b = [0.0];
                if let Some(p) = path {
                    p.value_at(t, &mut b);
                }
                (cfg.gamma_value() * b[0]).exp()
            }
        }
    };
    match (cfg.noise, path) {
        (NoiseKind::Multiplicative, Some(p)) => {
            let tc = time_change(p, cfg.gamma_value())?;
            let horizon = tc.theta_at(cfg.t_final);
            if let HSpec::Constant(c) = cfg.h {
                return Ok((HProfile::Constant { value: c }, horizon));
            }
            let m = 4 * cfg.nt();
            let values = (0..=m).map(|i| user_h(tc.inverse(horizon * i as f64 / m as f64))).collect();
            Ok((HProfile::Tabulated { values }, horizon))
        }
        _ => {
            let profile = match &cfg.h {
                HSpec::Constant(c) => HProfile::Constant { value: *c },
                HSpec::Tabulated(v) => HProfile::Tabulated { values: v.clone() },
                HSpec::Expression(_) => return Err(CliError::Config("h expression needs multiplicative noise".into())),
            };
            Ok((profile, cfg.t_final))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ResidualFile<'a> {
    noise: NoiseKind,
    gamma: f64,
    seed: u64,
    alpha: f64,
    beta: f64,
    /// Relaxed system of the random PDE on its own time axis.
    rpde: &'a ResidualReport,
    saturation: &'a SaturationReport,
    /// Relaxed stochastic weak form of the inverse-transformed fields.
    #[serde(skip_serializing_if = "Option::is_none")]
    spde: Option<&'a ResidualReport>,
}

/// Artifacts and headline numbers of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub rows: Vec<ConvergenceRow>,
    pub rpde_residual: ResidualReport,
    pub spde_residual: Option<ResidualReport>,
    pub saturation: SaturationReport,
    pub horizon: f64,
}

fn write_rows(path: &Path, rows: &[ConvergenceRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Construct the random-PDE subsolution, transform it back when noise is
/// present, verify, and write every artifact into the output directory.
pub fn run_pipeline(cfg: &RunConfig, resume: Option<&Path>) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let registry = NoiseRegistry::default();
    let model = registry.get(cfg.noise.as_str())?;
    let gamma = cfg.gamma_value();
    std::fs::create_dir_all(&cfg.out_dir)?;

    // Path nodes at half the field's time step so cell-centre times are nodes.
    let path = match cfg.noise {
        NoiseKind::None => None,
        kind => Some(sample_brownian(kind.path_dim(cfg.n), cfg.t_final, 0.5 * cfg.t_final / cfg.nt() as f64, path_seed(cfg.seed))?),
    };
    let (profile, horizon) = random_profile(cfg, path.as_ref())?;
    let mut schedule = cfg.schedule()?;
    schedule.t_final = horizon;
    schedule.h = profile;

    let out: RunOutput = match resume {
        Some(p) => match read_snapshot(p)? {
            Snapshot::Subsolution(f) => {
                if f.grid != schedule.grid()? {
                    return Err(CliError::Config("resume snapshot grid differs from the configured run".into()));
                }
                run_from(f, &schedule)?
            }
            _ => return Err(CliError::Format("resume needs a subsolution snapshot".into())),
        },
        None => run(&schedule)?,
    };

    write_rows(&cfg.out_dir.join(CONVERGENCE_FILE), &out.rows)?;
    write_subsolution(&cfg.out_dir.join(RPDE_SNAPSHOT), &out.field)?;
    if let Some(p) = &path {
        p.write_csv(BufWriter::new(File::create(cfg.out_dir.join(PATH_FILE))?))?;
    }

    let tests = bump_tests(&out.field.grid, cfg.report_tests, cfg.seed);
    let rpde_residual = relaxed_system_residual(&out.field, &tests);
    let saturation = constraint_saturation(&out.field);
    let spde_residual = match &path {
        Some(p) => {
            let spde = model.to_stochastic(&FlowFields::from_subsolution(&out.field), Some(p), gamma)?;
            write_flow(&cfg.out_dir.join(SPDE_SNAPSHOT), &spde, Some(cfg.noise), cfg.gamma)?;
            let tests = space_bump_tests(&cfg.extent, cfg.report_tests, cfg.seed);
            let opts = WeakFormOptions { checkpoints: cfg.checkpoints, ..Default::default() };
            Some(model.weak_residual(&spde, Some(p), gamma, &tests, &opts)?)
        }
        None => None,
    };

    let report = ResidualFile {
        noise: cfg.noise,
        gamma,
        seed: cfg.seed,
        alpha: out.alpha,
        beta: out.beta,
        rpde: &rpde_residual,
        saturation: &saturation,
        spde: spde_residual.as_ref(),
    };
    let mut w = BufWriter::new(File::create(cfg.out_dir.join(RESIDUAL_FILE))?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(cfg.out_dir.join(CONFIG_ECHO))?);
    serde_json::to_writer_pretty(&mut w, cfg)?;
    w.write_all(b"\n")?;
    w.flush()?;

    Ok(RunSummary { out_dir: cfg.out_dir.clone(), rows: out.rows, rpde_residual, spde_residual, saturation, horizon })
}
