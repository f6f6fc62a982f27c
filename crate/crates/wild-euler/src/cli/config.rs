use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CliError;
use crate::iteration::IterationConfig;
use crate::stochastic::NoiseKind;

/// The one supported profile expression: h(t) = e^{γB(t)}, for which the
/// stochastic velocity has unit speed.
pub const H_EXPRESSION: &str = "exp(gamma*B)";

/// Energy profile h on the original time axis [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HSpec {
    Constant(f64),
    /// Values at uniformly spaced times on [0, T].
    Tabulated(Vec<f64>),
    Expression(String),
}

impl Default for HSpec {
    fn default() -> Self {
        Self::Constant(1.0)
    }
}

impl HSpec {
    pub fn is_expression(&self) -> bool {
        matches!(self, Self::Expression(_))
    }
}

/// Top-level keys; `iteration` holds the schedule parameters.
const TOP_KEYS: &[&str] = &[
    "n", "T", "t_final", "extent", "h", "noise", "gamma", "resolution", "seed", "out_dir", "iterations",
    "report_tests", "checkpoints", "iteration",
];

/// IterationConfig keys that are set from the top level instead.
const RESERVED: &[&str] = &["n", "extent", "t_final", "nx", "nt", "h", "seed", "max_iterations"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n: usize,
    #[serde(alias = "T")]
    pub t_final: f64,
    /// Box O_x = (0, L₁)×…×(0, L_n).
    pub extent: Vec<f64>,
    pub h: HSpec,
    pub noise: NoiseKind,
    pub gamma: Option<f64>,
    /// [nx, nt].
    pub resolution: [usize; 2],
    pub seed: u64,
    pub out_dir: PathBuf,
    pub iterations: usize,
    /// Test functions for the final residual reports.
    pub report_tests: usize,
    /// Checkpoint times of the stochastic weak residual.
    pub checkpoints: usize,
    /// Overrides of the schedule parameters (see `IterationConfig`).
    pub iteration: Map<String, Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            t_final: 1.0,
            extent: vec![1.0, 1.0],
            h: HSpec::default(),
            noise: NoiseKind::None,
            gamma: None,
            resolution: [32, 32],
            seed: 0,
            out_dir: PathBuf::from("out"),
            iterations: 5,
            report_tests: 32,
            checkpoints: 8,
            iteration: Map::new(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub noise: Option<NoiseKind>,
    pub gamma: Option<f64>,
    pub resolution: Option<[usize; 2]>,
}

fn schedule_keys() -> Vec<String> {
    match serde_json::to_value(IterationConfig::default()) {
        Ok(Value::Object(m)) => m.keys().filter(|k| !RESERVED.contains(&k.as_str())).cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses and validates a JSON configuration; every unknown key is reported.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    let Value::Object(top) = &value else {
        return Err(CliError::Config("the configuration must be a JSON object".into()));
    };
    let mut unknown: Vec<String> = top.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())).cloned().collect();
    match top.get("iteration") {
        None => {}
        Some(Value::Object(it)) => {
            let known = schedule_keys();
            unknown.extend(it.keys().filter(|k| !known.contains(k)).map(|k| format!("iteration.{k}")));
        }
        Some(_) => return Err(CliError::Config("`iteration` must be an object".into())),
    }
    if top.contains_key("T") && top.contains_key("t_final") {
        return Err(CliError::Config("give either `T` or `t_final`, not both".into()));
    }
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(k) = o.iterations {
            self.iterations = k;
        }
        if let Some(k) = o.noise {
            self.noise = k;
        }
        if let Some(g) = o.gamma {
            self.gamma = Some(g);
        }
        if let Some(r) = o.resolution {
            self.resolution = r;
        }
        self.validate()
    }

    pub fn nx(&self) -> usize {
        self.resolution[0]
    }

    pub fn nt(&self) -> usize {
        self.resolution[1]
    }

    /// γ as used by the transforms (0 unless the noise is multiplicative).
    pub fn gamma_value(&self) -> f64 {
        match self.noise {
            NoiseKind::Multiplicative => self.gamma.unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Schedule parameters with the overrides applied; grid and profile
    /// fields are filled in by the pipeline.
    pub fn schedule(&self) -> Result<IterationConfig, CliError> {
        let mut base = match serde_json::to_value(IterationConfig::default())? {
            Value::Object(m) => m,
            _ => return Err(CliError::Config("iteration defaults are not an object".into())),
        };
        for (k, v) in &self.iteration {
            base.insert(k.clone(), v.clone());
        }
        let mut cfg: IterationConfig =
            serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Config(format!("iteration: {e}")))?;
        cfg.n = self.n;
        cfg.extent = self.extent.clone();
        cfg.t_final = self.t_final;
        cfg.nx = self.nx();
        cfg.nt = self.nt();
        cfg.seed = self.seed;
        cfg.max_iterations = self.iterations;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("T must be positive, got {}", self.t_final));
        }
        if self.extent.len() != self.n || !self.extent.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return bad(format!("extent must list {} positive lengths", self.n));
        }
        if self.nx() < 4 || self.nt() < 2 {
            return bad("resolution needs nx ≥ 4 and nt ≥ 2".into());
        }
        if self.checkpoints == 0 {
            return bad("checkpoints must be positive".into());
        }
        match (self.noise, self.gamma) {
            (NoiseKind::Multiplicative, None) => return bad("multiplicative noise requires gamma".into()),
            (NoiseKind::Multiplicative, Some(g)) if !(g > 0.0 && g.is_finite()) => {
                return bad(format!("multiplicative noise requires gamma > 0, got {g}"))
            }
            (_, Some(g)) if !(g >= 0.0 && g.is_finite()) => return bad(format!("gamma must be ≥ 0, got {g}")),
            _ => {}
        }
        match &self.h {
            HSpec::Constant(c) if !(*c > 0.0 && c.is_finite()) => return bad(format!("h must be positive, got {c}")),
            HSpec::Tabulated(v) if v.len() < 2 || !v.iter().all(|x| *x > 0.0 && x.is_finite()) => {
                return bad("tabulated h needs ≥ 2 positive values".into())
            }
            HSpec::Expression(e) => {
                let compact: String = e.chars().filter(|c| !c.is_whitespace()).collect();
                if compact != H_EXPRESSION {
                    return bad(format!("unsupported h expression {e:?} (only {H_EXPRESSION:?})"));
                }
                if self.noise != NoiseKind::Multiplicative {
                    return bad(format!("h = {H_EXPRESSION} needs multiplicative noise"));
                }
            }
            _ => {}
        }
        self.schedule()?.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_keys_exclude_reserved() {
        let keys = schedule_keys();
        assert!(keys.contains(&"r_max".to_string()));
        assert!(!keys.contains(&"nx".to_string()));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = parse_config("{}").unwrap();
        cfg.apply(&Overrides { seed: Some(9), resolution: Some([16, 8]), ..Default::default() }).unwrap();
        let s = cfg.schedule().unwrap();
        assert_eq!((s.seed, s.nx, s.nt), (9, 16, 8));
        assert!(cfg.apply(&Overrides { noise: Some(NoiseKind::Multiplicative), ..Default::default() }).is_err());
    }
}
