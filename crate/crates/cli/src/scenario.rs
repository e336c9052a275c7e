//! Scenario files.
//!
//! ```json
//! {
//!   "kind": "bps",
//!   "lambda": 0.5,
//!   "phases": [{"p": 0.5, "mu": 2.0}, {"p": 0.5, "mu": 1.0}],
//!   "batch": {"n_bar": 2.0, "b_extra": 1.0},
//!   "sim": {"horizon": 100000, "replications": 20, "seed": 42}
//! }
//! ```
//!
//! `batch` is either `{"n_bar", "b_extra"}` or `{"pmf": [[size, p], …]}`; when
//! absent, every batch holds one job. TLPS scenarios carry `theta` instead of
//! `batch`.

use std::path::Path;

use psq::sim::{BatchLaw, SimConfig, SimScenario};
use psq::{BpsInput, HyperExp, Phase, TlpsModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Bps,
    Tlps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSpec {
    Pmf { pmf: Vec<(u32, f64)> },
    Moments { n_bar: f64, b_extra: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    pub lambda: f64,
    pub phases: Vec<Phase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimBlock>,
}

/// A scenario that has passed validation and the stability gate.
#[derive(Debug, Clone)]
pub enum Model {
    Bps {
        input: BpsInput,
        /// Explicit batch law, when the file gave a pmf.
        batch: Option<BatchLaw>,
    },
    Tlps {
        model: TlpsModel,
        theta: Option<f64>,
    },
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Malformed(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Malformed(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn jobsize(&self) -> Result<HyperExp, CliError> {
        Ok(HyperExp::new(self.phases.iter().map(|ph| (ph.p, ph.mu)))?)
    }

    /// Checks the fields and builds the analytic model.
    pub fn model(&self) -> Result<Model, CliError> {
        let law = self.jobsize()?;
        match self.kind {
            Kind::Bps => {
                if self.theta.is_some() {
                    return Err(CliError::Malformed("bps scenario takes no theta".into()));
                }
                let (n_bar, b_extra, batch) = match &self.batch {
                    None => (1.0, 0.0, None),
                    Some(BatchSpec::Moments { n_bar, b_extra }) => (*n_bar, *b_extra, None),
                    Some(BatchSpec::Pmf { pmf }) => {
                        let law = BatchLaw::new(pmf.clone())?;
                        let (n, b) = law.stats();
                        (n, b, Some(law))
                    }
                };
                let input = BpsInput::new(self.lambda, n_bar, b_extra, law)?;
                Ok(Model::Bps { input, batch })
            }
            Kind::Tlps => {
                if self.batch.is_some() {
                    return Err(CliError::Malformed("tlps scenario takes no batch".into()));
                }
                if let Some(t) = self.theta {
                    if !(t >= 0.0 && t.is_finite()) {
                        return Err(CliError::Malformed(format!("theta = {t} must be >= 0")));
                    }
                }
                Ok(Model::Tlps {
                    model: TlpsModel::new(self.lambda, law)?,
                    theta: self.theta,
                })
            }
        }
    }
}

/// Overrides for the `sim` block taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct SimOverrides {
    pub horizon: Option<usize>,
    pub warmup: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub theta: Option<f64>,
}

impl Model {
    /// Simulation config for this model, the scenario's `sim` block and the
    /// command-line overrides (which win).
    pub fn sim_config(
        &self,
        block: Option<&SimBlock>,
        o: &SimOverrides,
    ) -> Result<SimConfig, CliError> {
        let block = block.cloned().unwrap_or_default();
        let horizon = o.horizon.or(block.horizon).ok_or_else(|| {
            CliError::Malformed("no horizon: add a sim block or pass --horizon".into())
        })?;
        let scenario = match self {
            Model::Bps { input, batch } => SimScenario::Bps {
                lambda: input.lambda,
                batch: match batch {
                    Some(b) => b.clone(),
                    None => BatchLaw::realizing(input.n_bar, input.b_extra)?,
                },
                service: input.service.clone(),
            },
            Model::Tlps { model, theta } => SimScenario::Tlps {
                lambda: model.lambda,
                jobsize: model.jobsize.clone(),
                theta: o.theta.or(*theta).ok_or_else(|| {
                    CliError::Malformed("tlps simulation needs theta (scenario or --theta)".into())
                })?,
            },
        };
        let mut cfg = SimConfig::new(scenario, horizon);
        if let Some(w) = o.warmup.or(block.warmup) {
            cfg.warmup = w;
        }
        if let Some(r) = o.replications.or(block.replications) {
            cfg.replications = r;
        }
        if let Some(s) = o.seed.or(block.seed) {
            cfg.seed = s;
        }
        cfg.size_bins = block.bins.unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }
}
