use std::collections::BTreeMap;

use super::fields::FlowFields;
use super::path::{time_change, BrownianPath};
use super::transform::{multiplicative_forward, multiplicative_inverse, transport_forward, transport_inverse};
use super::weak::{spde_weak_residual_with, WeakFormOptions};
use super::{NoiseKind, StochasticError};
use crate::verification::{BumpTest, ResidualReport};

/// One noise model: the map from SPDE fields to the random PDE and back, and
/// the pathwise weak identity the SPDE fields must satisfy.
pub trait NoiseTransform: Send + Sync {
    fn kind(&self) -> NoiseKind;

    fn name(&self) -> &'static str {
        self.kind().as_str()
    }

    /// Horizon of the random PDE for an SPDE horizon `t_final`.
    fn random_horizon(&self, t_final: f64, path: Option<&BrownianPath>, gamma: f64) -> Result<f64, StochasticError>;

    fn to_random(&self, spde: &FlowFields, path: Option<&BrownianPath>, gamma: f64) -> Result<FlowFields, StochasticError>;

    fn to_stochastic(&self, rpde: &FlowFields, path: Option<&BrownianPath>, gamma: f64) -> Result<FlowFields, StochasticError>;

    fn weak_residual(
        &self,
        spde: &FlowFields,
        path: Option<&BrownianPath>,
        gamma: f64,
        tests: &[BumpTest],
        opts: &WeakFormOptions,
    ) -> Result<ResidualReport, StochasticError> {
        spde_weak_residual_with(spde, path, self.kind(), gamma, tests, opts)
    }
}

fn need(path: Option<&BrownianPath>, kind: NoiseKind) -> Result<&BrownianPath, StochasticError> {
    path.ok_or_else(|| StochasticError::Invalid(format!("{} noise needs a Brownian path", kind.as_str())))
}

struct NoNoise;

impl NoiseTransform for NoNoise {
    fn kind(&self) -> NoiseKind {
        NoiseKind::None
    }

    fn random_horizon(&self, t_final: f64, _: Option<&BrownianPath>, _: f64) -> Result<f64, StochasticError> {
        Ok(t_final)
    }

    fn to_random(&self, spde: &FlowFields, _: Option<&BrownianPath>, _: f64) -> Result<FlowFields, StochasticError> {
        Ok(spde.clone())
    }

    fn to_stochastic(&self, rpde: &FlowFields, _: Option<&BrownianPath>, _: f64) -> Result<FlowFields, StochasticError> {
        Ok(rpde.clone())
    }
}

struct Transport;

impl NoiseTransform for Transport {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Transport
    }

    fn random_horizon(&self, t_final: f64, _: Option<&BrownianPath>, _: f64) -> Result<f64, StochasticError> {
        Ok(t_final)
    }

    fn to_random(&self, spde: &FlowFields, path: Option<&BrownianPath>, _: f64) -> Result<FlowFields, StochasticError> {
        transport_forward(spde, need(path, self.kind())?)
    }

    fn to_stochastic(&self, rpde: &FlowFields, path: Option<&BrownianPath>, _: f64) -> Result<FlowFields, StochasticError> {
        transport_inverse(rpde, need(path, self.kind())?)
    }
}

struct Multiplicative;

impl NoiseTransform for Multiplicative {
    fn kind(&self) -> NoiseKind {
        NoiseKind::Multiplicative
    }

    fn random_horizon(&self, t_final: f64, path: Option<&BrownianPath>, gamma: f64) -> Result<f64, StochasticError> {
        Ok(time_change(need(path, self.kind())?, gamma)?.theta_at(t_final))
    }

    fn to_random(&self, spde: &FlowFields, path: Option<&BrownianPath>, gamma: f64) -> Result<FlowFields, StochasticError> {
        multiplicative_forward(spde, need(path, self.kind())?, gamma)
    }

    fn to_stochastic(&self, rpde: &FlowFields, path: Option<&BrownianPath>, gamma: f64) -> Result<FlowFields, StochasticError> {
        multiplicative_inverse(rpde, need(path, self.kind())?, gamma)
    }
}

/// Noise models selectable by name.
pub struct NoiseRegistry {
    entries: BTreeMap<String, Box<dyn NoiseTransform>>,
}

impl Default for NoiseRegistry {
    fn default() -> Self {
        let mut r = Self { entries: BTreeMap::new() };
        r.register(Box::new(NoNoise));
        r.register(Box::new(Transport));
        r.register(Box::new(Multiplicative));
        r
    }
}

impl NoiseRegistry {
    /// Adds or replaces the entry under the model's name.
    pub fn register(&mut self, model: Box<dyn NoiseTransform>) {
        self.entries.insert(model.name().to_string(), model);
    }

    pub fn get(&self, name: &str) -> Result<&dyn NoiseTransform, StochasticError> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| StochasticError::UnknownNoise(name.into()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}
