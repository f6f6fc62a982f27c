use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cover::{select_cover, CoverBall};
use super::field::{deficit, Grid, HProfile, SubsolutionField};
use super::mollify::{l2_norm, Convolver};
use super::IterationError;
use crate::geometry::{
    segment_constant, segment_direction_with, ConstraintContext, GeometryError, HullOracle, Layout, StatePoint,
    Tolerances,
};
use crate::perturbation::{calibrate_alpha, rescale_patch, CutoffSpec, PerturbationPatch};
use crate::verification::{bump_tests, relaxed_system_residual};

/// Parameters of the convex-integration schedule and its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterationConfig {
    pub n: usize,
    /// Box O_x = (0, L₁)×…×(0, L_n).
    pub extent: Vec<f64>,
    pub t_final: f64,
    /// Cells per space axis.
    pub nx: usize,
    /// Cells in time.
    pub nt: usize,
    pub h: HProfile,
    pub max_iterations: usize,
    /// The run stops once D_k ≤ fraction·D₁.
    pub deficit_target_fraction: f64,
    /// margin_k = max(margin0·2^{−k/2}, margin_min).
    pub margin0: f64,
    pub margin_min: f64,
    /// Upper bound on cover radii.
    pub r_max: f64,
    pub vertex_net_size: usize,
    /// Oscillation wavelength of the patches in grid cells.
    pub wavelength_cells: f64,
    /// ε_k = epsilon0·2^{−k}, recorded on every patch.
    pub epsilon0: f64,
    /// Halvings of a patch amplitude before its ball is skipped.
    pub max_halvings: u32,
    /// Fraction of 2^{−k} the mollified increments may use.
    pub proximity_safety: f64,
    /// Patch constant α; measured on reference patches when absent.
    pub alpha: Option<f64>,
    pub calibration_frequency: u32,
    pub calibration_samples: usize,
    /// Rejected steps retried with a fresh cover before the run aborts.
    pub max_retries: usize,
    /// Test functions for the per-k weak residual (0 disables it).
    pub residual_tests: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            n: 2,
            extent: vec![1.0, 1.0],
            t_final: 1.0,
            nx: 32,
            nt: 32,
            h: HProfile::default(),
            max_iterations: 5,
            deficit_target_fraction: 0.1,
            margin0: 0.05,
            margin_min: 1e-3,
            r_max: 0.2,
            vertex_net_size: 64,
            wavelength_cells: 5.0,
            epsilon0: 0.5,
            max_halvings: 10,
            proximity_safety: 0.9,
            alpha: None,
            calibration_frequency: 32,
            calibration_samples: 48,
            max_retries: 3,
            residual_tests: 8,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

impl IterationConfig {
    pub fn grid(&self) -> Result<Grid, IterationError> {
        Grid::new(self.n, self.extent.clone(), self.t_final, self.nx, self.nt)
    }

    pub fn validate(&self) -> Result<(), IterationError> {
        self.grid()?;
        self.h.validate()?;
        let bad = |msg: &str| Err(IterationError::Config(msg.into()));
        if !(self.margin0 > 0.0 && self.margin0 < 0.5) {
            return bad("margin0 must lie in (0, 0.5)");
        }
        if !(self.margin_min > 0.0 && self.margin_min <= self.margin0) {
            return bad("margin_min must lie in (0, margin0]");
        }
        if !(self.r_max > 0.0) {
            return bad("r_max must be positive");
        }
        if !(self.wavelength_cells >= 2.0) {
            return bad("wavelength_cells must be at least 2");
        }
        if !(self.epsilon0 > 0.0) {
            return bad("epsilon0 must be positive");
        }
        if !(self.proximity_safety > 0.0 && self.proximity_safety < 1.0) {
            return bad("proximity_safety must lie in (0, 1)");
        }
        if !(self.deficit_target_fraction >= 0.0 && self.deficit_target_fraction < 1.0) {
            return bad("deficit_target_fraction must lie in [0, 1)");
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad("alpha must be positive");
            }
        }
        if self.calibration_frequency == 0 || self.calibration_samples < 8 {
            return bad("calibration needs frequency ≥ 1 and ≥ 8 samples per axis");
        }
        ConstraintContext::new(self.n, 1.0, self.vertex_net_size)?;
        Ok(())
    }
}

/// β = α²C²/(8|O|) with C = 1/(4N√2).
pub fn beta_constant(alpha: f64, n: usize, volume: f64) -> f64 {
    let c = segment_constant(n);
    alpha * alpha * c * c / (8.0 * volume)
}

/// Hull margin in force at stage k.
pub fn margin_at(cfg: &IterationConfig, k: usize) -> f64 {
    (cfg.margin0 * 2f64.powf(-(k as f64) / 2.0)).max(cfg.margin_min)
}

/// The zero state on O with the configured grid and energy profile.
pub fn init_field(cfg: &IterationConfig) -> Result<SubsolutionField, IterationError> {
    cfg.validate()?;
    SubsolutionField::zeros(cfg.grid()?, &cfg.h)
}

/// One hull oracle per distinct energy level of the profile.
pub struct OracleBank {
    oracles: Vec<(f64, HullOracle)>,
}

impl OracleBank {
    pub fn new(n: usize, h_profile: &[f64], net: usize) -> Result<Self, IterationError> {
        let mut oracles: Vec<(f64, HullOracle)> = Vec::new();
        for &h in h_profile {
            if !oracles.iter().any(|(x, _)| *x == h) {
                oracles.push((h, HullOracle::new(ConstraintContext::new(n, h, net)?)?));
            }
        }
        Ok(Self { oracles })
    }

    pub fn get(&self, h: f64) -> &HullOracle {
        &self.oracles.iter().find(|(x, _)| *x == h).expect("energy level registered in the bank").1
    }
}

/// Result of [`check_invariants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub support_ok: bool,
    pub hull_violations: usize,
    pub nodes_checked: usize,
    pub margin: f64,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.support_ok && self.hull_violations == 0
    }
}

/// Support in O and hull membership of every node at `margin`.
pub fn check_invariants(field: &SubsolutionField, bank: &OracleBank, margin: f64) -> InvariantReport {
    let stride = field.stride();
    let zero = vec![0.0; stride];
    let zero_ok: Vec<(f64, bool)> = {
        let mut levels: Vec<f64> = field.h_profile.clone();
        levels.dedup();
        levels.into_iter().map(|h| (h, bank.get(h).interior_member_flat(&zero, margin))).collect()
    };
    let violations = (0..field.grid.node_count())
        .into_par_iter()
        .filter(|&i| {
            let s = field.node(i);
            let h = field.h_at_node(i);
            if s.iter().all(|&x| x == 0.0) {
                return !zero_ok.iter().find(|(x, _)| *x == h).map_or(false, |z| z.1);
            }
            !bank.get(h).interior_member_flat(s, margin)
        })
        .count();
    InvariantReport {
        support_ok: field.support_ok(),
        hull_violations: violations,
        nodes_checked: field.grid.node_count(),
        margin,
    }
}

/// Largest δ ∈ {0.9·2^{−k}·2^{−i}} with ‖ω − ω∗ρ_δ‖ < 2^{−k}.
pub fn choose_delta(conv: &Convolver, field: &SubsolutionField) -> Result<f64, IterationError> {
    let k = field.k;
    let bound = 2f64.powi(-(k as i32));
    let hmin = field.grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut cands = vec![0.9 * bound];
    while *cands.last().unwrap() >= hmin {
        let next = cands.last().unwrap() * 0.5;
        cands.push(next);
    }
    let outs = conv.convolve_all(&field.data, field.stride(), &cands)?;
    let cell = field.grid.cell_volume();
    for (delta, out) in cands.iter().zip(&outs) {
        let diff: Vec<f64> = field.data.iter().zip(out).map(|(a, b)| a - b).collect();
        if l2_norm(&diff, cell) < bound {
            return Ok(*delta);
        }
    }
    // Below one cell the discrete kernel is the identity.
    Ok(*cands.last().unwrap())
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub k: usize,
    pub balls: usize,
    pub skipped_balls: usize,
    pub mean_amplitude: f64,
    /// Global factor applied to the summed patches.
    pub scale: f64,
    pub deficit_before: f64,
    pub deficit_after: f64,
    /// (‖v_{k+1}‖²+‖b_{k+1}‖²) − (‖v_k‖²+‖b_k‖²).
    pub gain: f64,
    /// β·D_k².
    pub beta_rhs: f64,
    /// ‖(ω_{k+1} − ω_k)∗ρ_{δ_j}‖ for j = 1..k.
    pub proximity: Vec<f64>,
    pub proximity_bound: f64,
    pub delta_k: f64,
}

struct BallUpdate {
    nodes: Vec<usize>,
    values: Vec<f64>,
    amplitude: f64,
}

fn mix_seed(seed: u64, k: usize, salt: u64) -> u64 {
    let mut x = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

#[allow(clippy::too_many_arguments)]
fn ball_update(
    field: &SubsolutionField,
    ball: &CoverBall,
    cfg: &IterationConfig,
    bank: &OracleBank,
    margin_k: f64,
    margin_next: f64,
    eps_k: f64,
    phase: f64,
) -> Result<Option<BallUpdate>, IterationError> {
    let g = &field.grid;
    let n = g.n;
    let stride = field.stride();
    let lay = Layout { n };
    let p = StatePoint::from_flat(n, &ball.base);
    let oracle = bank.get(field.h_profile[ball.slice]);
    let dir = match segment_direction_with(&p, oracle, margin_k, &cfg.tolerances) {
        Ok(d) => d,
        Err(GeometryError::NotInterior | GeometryError::BoundViolation { .. } | GeometryError::Internal(_)) => {
            return Ok(None)
        }
        Err(GeometryError::DecompositionFailed { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if dir.velocity_tracer_norm() == 0.0 {
        return Ok(None);
    }
    let hmin = g.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let freq = ((2.0 * std::f64::consts::PI * ball.radius / (cfg.wavelength_cells * hmin)).floor() as u32).max(1);
    let base = PerturbationPatch::new(dir, freq, CutoffSpec::new(), eps_k)?.with_phase(phase);
    let patch = rescale_patch(&base, &ball.center, ball.radius)?;

    let nodes = g.nodes_in_ball(&ball.center, ball.radius);
    let mut values = vec![0.0; nodes.len() * stride];
    let mut cross = 0.0;
    for (i, &idx) in nodes.iter().enumerate() {
        let out = &mut values[i * stride..(i + 1) * stride];
        patch.eval(&g.coords(idx), out);
        let s = field.node(idx);
        cross += s[lay.b()] * out[lay.b()];
        cross += (0..n).map(|a| s[lay.v() + a] * out[lay.v() + a]).sum::<f64>();
    }
    if cross < 0.0 {
        values.iter_mut().for_each(|x| *x = -*x);
    }
    let mut amplitude = 1.0;
    let mut cand = vec![0.0; stride];
    for _ in 0..=cfg.max_halvings {
        let ok = nodes.iter().enumerate().all(|(i, &idx)| {
            let s = field.node(idx);
            for c in 0..stride {
                cand[c] = s[c] + amplitude * values[i * stride + c];
            }
            bank.get(field.h_at_node(idx)).interior_member_flat(&cand, margin_next)
        });
        if ok {
            values.iter_mut().for_each(|x| *x *= amplitude);
            return Ok(Some(BallUpdate { nodes, values, amplitude }));
        }
        amplitude *= 0.5;
    }
    Ok(None)
}

/// One stage of the schedule: choose δ_k, cover, add scaled patches, and
/// enforce the proximity and energy conditions.
pub fn iteration_step(
    field: &SubsolutionField,
    cfg: &IterationConfig,
    bank: &OracleBank,
    conv: &Convolver,
    beta: f64,
    attempt: u64,
) -> Result<(SubsolutionField, StepReport), IterationError> {
    let k = field.k;
    let bound = 2f64.powi(-(k as i32));
    let margin_k = margin_at(cfg, k);
    let margin_next = margin_at(cfg, k + 1);
    let eps_k = cfg.epsilon0 * bound;
    let delta_k = choose_delta(conv, field)?;
    let mut deltas = field.deltas.clone();
    deltas.push(delta_k);

    let cover = select_cover(field, cfg.r_max, mix_seed(cfg.seed, k, 2 * attempt))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, k, 2 * attempt + 1));
    let phases: Vec<f64> =
        (0..cover.balls.len()).map(|_| rng.gen_range(0.0..2.0 * std::f64::consts::PI)).collect();
    let updates: Vec<Option<BallUpdate>> = cover
        .balls
        .par_iter()
        .zip(phases.par_iter())
        .map(|(ball, &ph)| ball_update(field, ball, cfg, bank, margin_k, margin_next, eps_k, ph))
        .collect::<Result<_, _>>()?;

    let stride = field.stride();
    let mut inc = vec![0.0; field.data.len()];
    let mut used = 0usize;
    let mut amp_sum = 0.0;
    for u in updates.iter().flatten() {
        used += 1;
        amp_sum += u.amplitude;
        for (i, &idx) in u.nodes.iter().enumerate() {
            inc[idx * stride..(idx + 1) * stride].copy_from_slice(&u.values[i * stride..(i + 1) * stride]);
        }
    }
    if used == 0 {
        return Err(IterationError::StepRejected("no admissible patch in the cover".into()));
    }

    let cell = field.grid.cell_volume();
    let raw: Vec<f64> =
        conv.convolve_all(&inc, stride, &deltas)?.iter().map(|c| l2_norm(c, cell)).collect();
    let worst = raw.iter().cloned().fold(0.0, f64::max);
    let scale = if worst > 0.0 { (cfg.proximity_safety * bound / worst).min(1.0) } else { 1.0 };
    let proximity: Vec<f64> = raw.iter().map(|x| x * scale).collect();

    let mut next = field.clone();
    next.data.iter_mut().zip(&inc).for_each(|(a, b)| *a += scale * b);
    next.k = k + 1;
    next.deltas = deltas;
    next.deficit = deficit(&next);
    let gain = field.deficit - next.deficit;
    let beta_rhs = beta * field.deficit * field.deficit;

    if proximity.iter().any(|&p| p >= bound) {
        return Err(IterationError::StepRejected(format!("mollified proximity {proximity:?} ≥ {bound}")));
    }
    if gain < beta_rhs {
        return Err(IterationError::StepRejected(format!(
            "energy gain {gain:.4e} below β·D² = {beta_rhs:.4e}"
        )));
    }
    let report = StepReport {
        k,
        balls: cover.balls.len(),
        skipped_balls: cover.balls.len() - used,
        mean_amplitude: amp_sum / used as f64,
        scale,
        deficit_before: field.deficit,
        deficit_after: next.deficit,
        gain,
        beta_rhs,
        proximity,
        proximity_bound: bound,
        delta_k,
    };
    Ok((next, report))
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub deficit: f64,
    pub energy_v: f64,
    pub energy_b: f64,
    pub beta_slack: Option<f64>,
    pub proximity_slack: Option<f64>,
    pub residual_max: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub field: SubsolutionField,
    pub rows: Vec<ConvergenceRow>,
    pub steps: Vec<StepReport>,
    pub alpha: f64,
    pub beta: f64,
}

fn residual_of(field: &SubsolutionField, cfg: &IterationConfig) -> Option<f64> {
    (cfg.residual_tests > 0).then(|| {
        let tests = bump_tests(&field.grid, cfg.residual_tests, cfg.seed);
        relaxed_system_residual(field, &tests).max_residual()
    })
}

/// Initial state followed by up to `max_iterations` steps.
pub fn run(cfg: &IterationConfig) -> Result<RunOutput, IterationError> {
    let field = init_field(cfg)?;
    run_from(field, cfg)
}

/// Continues the schedule from an existing field (k ≥ 1).
pub fn run_from(field: SubsolutionField, cfg: &IterationConfig) -> Result<RunOutput, IterationError> {
    cfg.validate()?;
    if field.grid != cfg.grid()? {
        return Err(IterationError::Config("field grid does not match the configuration".into()));
    }
    let start = Instant::now();
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => calibrate_alpha(cfg.n, CutoffSpec::new(), cfg.calibration_frequency, cfg.calibration_samples)?.alpha,
    };
    let beta = beta_constant(alpha, cfg.n, field.grid.volume());
    let bank = OracleBank::new(cfg.n, &field.h_profile, cfg.vertex_net_size)?;
    let conv = Convolver::new(&field.grid, 0.9 * 0.5);
    let target = cfg.deficit_target_fraction * field.saturated_energy();

    let row = |f: &SubsolutionField, rep: Option<&StepReport>, t: &Instant| {
        let (ev, eb) = f.energies();
        ConvergenceRow {
            k: f.k,
            deficit: f.deficit,
            energy_v: ev,
            energy_b: eb,
            beta_slack: rep.map(|r| r.gain - r.beta_rhs),
            proximity_slack: rep.map(|r| r.proximity_bound - r.proximity.iter().cloned().fold(0.0, f64::max)),
            residual_max: residual_of(f, cfg),
            wall_time_s: t.elapsed().as_secs_f64(),
        }
    };

    let mut rows = vec![row(&field, None, &start)];
    let mut steps = Vec::new();
    let mut field = field;
    for _ in 0..cfg.max_iterations {
        if field.deficit <= target {
            break;
        }
        let mut attempt = 0;
        let (next, rep) = loop {
            match iteration_step(&field, cfg, &bank, &conv, beta, attempt) {
                Ok(x) => break x,
                Err(IterationError::StepRejected(reason)) => {
                    attempt += 1;
                    if attempt as usize > cfg.max_retries {
                        return Err(IterationError::RunAborted { k: field.k, reason });
                    }
                }
                Err(e) => return Err(e),
            }
        };
        rows.push(row(&next, Some(&rep), &start));
        steps.push(rep);
        field = next;
    }
    Ok(RunOutput { field, rows, steps, alpha, beta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_arithmetic() {
        let b = beta_constant(0.05, 2, 2.0);
        assert!((b - 9.96e-8).abs() < 0.01e-8, "{b}");
    }

    #[test]
    fn margins_follow_schedule() {
        let cfg = IterationConfig::default();
        assert!((margin_at(&cfg, 2) - 0.025).abs() < 1e-15);
        assert_eq!(margin_at(&cfg, 40), cfg.margin_min);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = IterationConfig { alpha: Some(-1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.alpha = None;
        cfg.h = HProfile::Tabulated { values: vec![1.0, -0.5] };
        assert!(init_field(&cfg).is_err());
    }
}
