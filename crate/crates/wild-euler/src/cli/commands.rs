use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use super::config::{parse_config, Overrides, RunConfig};
use super::pipeline::{run_pipeline, CONVERGENCE_FILE};
use super::snapshot::{read_snapshot, write_flow, write_mhd, Snapshot};
use super::CliError;
use crate::geometry::ConstraintContext;
use crate::stochastic::{space_bump_tests, BrownianPath, FlowFields, NoiseKind, NoiseRegistry, WeakFormOptions};
use crate::verification::{
    bump_tests, constraint_saturation, divergence_2d, divergence_3d, mhd_embed, planar_slice_norms, relaxed_system_residual,
    surjectivity_check,
};

#[derive(Debug, Parser)]
#[command(name = "wild-euler", version, about = "Convex-integration constructions for Euler with a passive tracer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// Stochastic fields to the random PDE.
    Fwd,
    /// Random-PDE fields back to the stochastic equation.
    Inv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Construct, transform and verify; writes all artifacts to the output directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        noise: Option<NoiseKind>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["NX", "NT"])]
        resolution: Option<Vec<usize>>,
        /// Continue from a subsolution snapshot.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Residual and saturation report of a snapshot, as JSON on stdout.
    Verify {
        snapshot: PathBuf,
        /// Noise model for the weak form of flow snapshots (default: the sidecar's).
        #[arg(long)]
        noise: Option<NoiseKind>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        tests: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply a noise transform to a snapshot.
    Transform {
        snapshot: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long)]
        noise: NoiseKind,
        #[arg(long)]
        gamma: Option<f64>,
        /// Brownian path CSV (required unless the noise is `none`).
        #[arg(long)]
        path: Option<PathBuf>,
        /// Output snapshot stem.
        #[arg(long)]
        output: PathBuf,
    },
    /// Rank and β constants of the sphere moment operator.
    Moments {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 8)]
        quad_order: usize,
    },
    /// Lift a planar snapshot to the three-dimensional MHD fields.
    MhdEmbed {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 4)]
        nz: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_path(path: Option<&Path>, noise: NoiseKind) -> Result<Option<BrownianPath>, CliError> {
    match (noise, path) {
        (NoiseKind::None, _) => Ok(None),
        (_, Some(p)) => Ok(Some(BrownianPath::read_csv(BufReader::new(File::open(p)?))?)),
        (kind, None) => Err(CliError::Config(format!("{} noise needs --path", kind.as_str()))),
    }
}

fn flow_of(snap: Snapshot) -> Result<(FlowFields, Option<NoiseKind>, Option<f64>), CliError> {
    match snap {
        Snapshot::Subsolution(f) => Ok((FlowFields::from_subsolution(&f), None, None)),
        Snapshot::Flow { fields, noise, gamma } => Ok((fields, noise, gamma)),
        Snapshot::Mhd(_) => Err(CliError::Format("expected a planar subsolution or flow snapshot".into())),
    }
}

fn print_json(v: &serde_json::Value) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Runs one parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, out_dir, iterations, noise, gamma, resolution, resume } => {
            let mut cfg: RunConfig = match &config {
                Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
                None => parse_config("{}")?,
            };
            let resolution = resolution.map(|r| [r[0], r[1]]);
            cfg.apply(&Overrides { seed, out_dir, iterations, noise, gamma, resolution })?;
            let summary = run_pipeline(&cfg, resume.as_deref())?;
            let last = summary.rows.last().expect("a run has at least the initial row");
            println!(
                "k = {}  deficit = {:.6e}  rpde residual = {:.3e}{}  -> {}",
                last.k,
                last.deficit,
                summary.rpde_residual.max_residual(),
                summary.spde_residual.as_ref().map(|r| format!("  spde residual = {:.3e}", r.max_residual())).unwrap_or_default(),
                summary.out_dir.join(CONVERGENCE_FILE).display()
            );
            Ok(())
        }
        Command::Verify { snapshot, noise, gamma, path, tests, seed } => match read_snapshot(&snapshot)? {
            Snapshot::Subsolution(f) => {
                let t = bump_tests(&f.grid, tests, seed);
                print_json(&json!({
                    "kind": "subsolution",
                    "k": f.k,
                    "residual": relaxed_system_residual(&f, &t),
                    "saturation": constraint_saturation(&f),
                }))
            }
            Snapshot::Mhd(m) => print_json(&json!({
                "kind": "mhd",
                "div_u3": divergence_3d(&m, &m.u3),
                "div_b3": divergence_3d(&m, &m.b3),
                "slice_norms_u3": m.slice_norms_u(),
                "slice_norms_b3": m.slice_norms_b(),
            })),
            flow => {
                let (fields, side_noise, side_gamma) = flow_of(flow)?;
                let kind = noise.or(side_noise).unwrap_or(NoiseKind::None);
                let gamma = gamma.or(side_gamma).unwrap_or(0.0);
                let path = load_path(path.as_deref(), kind)?;
                let t = space_bump_tests(&fields.grid.extent, tests, seed);
                let registry = NoiseRegistry::default();
                let r = registry.get(kind.as_str())?.weak_residual(&fields, path.as_ref(), gamma, &t, &WeakFormOptions::default())?;
                print_json(&json!({ "kind": "flow", "noise": kind, "gamma": gamma, "residual": r }))
            }
        },
        Command::Transform { snapshot, direction, noise, gamma, path, output } => {
            let (fields, _, _) = flow_of(read_snapshot(&snapshot)?)?;
            if noise == NoiseKind::Multiplicative && !gamma.is_some_and(|g| g > 0.0) {
                return Err(CliError::Config("multiplicative noise requires --gamma > 0".into()));
            }
            let g = gamma.unwrap_or(0.0);
            let path = load_path(path.as_deref(), noise)?;
            let registry = NoiseRegistry::default();
            let model = registry.get(noise.as_str())?;
            let out = match direction {
                Direction::Fwd => model.to_random(&fields, path.as_ref(), g)?,
                Direction::Inv => model.to_stochastic(&fields, path.as_ref(), g)?,
            };
            write_flow(&output, &out, Some(noise), gamma)?;
            println!("wrote {} (horizon {:.6})", output.display(), out.grid.t_final);
            Ok(())
        }
        Command::Moments { n, h, quad_order } => {
            let ctx = ConstraintContext::new(n, h, crate::geometry::min_net_size(n))?;
            let r = surjectivity_check(&ctx, quad_order)?;
            println!("n = {n}  h = {h}  quad_order = {quad_order}");
            println!("rank = {}  expected = {}", r.rank, r.expected_rank);
            println!("beta1 = {:.12}", r.beta1);
            println!("beta2 = {:.12}", r.beta2);
            println!("beta3 = {:.12}", r.beta3);
            println!("max_trace = {:.3e}", r.max_trace);
            if r.full_rank() {
                Ok(())
            } else {
                Err(crate::verification::VerificationError::RankDeficient { rank: r.rank, expected: r.expected_rank }.into())
            }
        }
        Command::MhdEmbed { snapshot, nz, output } => {
            let (f, _, _) = flow_of(read_snapshot(&snapshot)?)?;
            let m = mhd_embed(&f.grid, &f.tracer, &f.velocity, &f.pressure, nz)?;
            let nu = planar_slice_norms(&f.grid, &f.velocity, 2);
            let nb = planar_slice_norms(&f.grid, &f.tracer, 1);
            let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            if let Some(o) = &output {
                write_mhd(o, &m)?;
            }
            print_json(&json!({
                "div_v2d": divergence_2d(&f.grid, &f.velocity),
                "div_u3": divergence_3d(&m, &m.u3),
                "div_b3": divergence_3d(&m, &m.b3),
                "norm_gap_u": gap(&m.slice_norms_u(), &nu),
                "norm_gap_b": gap(&m.slice_norms_b(), &nb),
            }))
        }
    }
}
