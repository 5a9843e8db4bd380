//! Experiment files: landscape, solver, initial perturbation, outputs,
//! optional sweep and verification settings.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Scheme, SolverConfig};
use crate::energy::{
    find_narrow_critical, generate_dataset, make_quadratic, split_embed, Dataset, EnergyModel,
    Neuron, QuadraticMorseBottSpec, SplitPlan, SplitSlot, TwoLayerTanh,
};
use crate::error::{Error, Result};
use crate::linalg::random_unit_vector;
use crate::manifold::ManifoldContext;
use crate::verify::VerifyOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub landscape: LandscapeConfig,
    pub solver: SolverConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepEntry>,
    #[serde(default)]
    pub verify: VerifyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LandscapeConfig {
    Quadratic(QuadraticMorseBottSpec),
    TwoLayerTanh(TanhLandscapeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhLandscapeConfig {
    pub width: usize,
    pub teacher: Vec<Neuron>,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    /// Absolute threshold for zero eigenvalues; relative `1e-8 · max|λ|`
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n: usize,
}

fn default_critical_tol() -> f64 {
    1e-12
}

/// The narrow network and how its neurons are spread over the wide slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Starting point of the narrow critical-point search, one entry per
    /// narrow neuron.
    pub narrow_init: Vec<Neuron>,
    #[serde(default = "default_critical_tol")]
    pub critical_tol: f64,
    /// For each narrow neuron, the wide slots it occupies and the fraction
    /// of its output weight each receives.
    pub assignments: Vec<Vec<SplitSlot>>,
}

fn default_perturbation() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Distance of the start from the saddle, along a uniformly random
    /// direction of the full parameter space.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    pub seed: u64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

/// Overrides applied to the base solver for one trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// A built landscape: the model, its saddle point and the critical manifold
/// through it.
pub struct Landscape {
    pub model: Box<dyn EnergyModel>,
    pub saddle: DVector<f64>,
    pub manifold: ManifoldContext,
    pub dataset: Option<Dataset>,
}

fn scheme_name(s: &Scheme) -> &'static str {
    match s {
        Scheme::Euler => "euler",
        Scheme::HeavyBall => "heavy_ball",
        Scheme::Nesterov => "nesterov",
        Scheme::Continuous { .. } => "continuous",
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        for (label, cfg) in self.runs() {
            cfg.validate()
                .map_err(|e| Error::config(format!("sweep entry `{label}`: {e}")))?;
        }
        if !(self.init.perturbation.is_finite() && self.init.perturbation >= 0.0) {
            return Err(Error::config(
                "init.perturbation must be finite and non-negative",
            ));
        }
        let mut labels: Vec<String> = self.runs().into_iter().map(|(l, _)| l).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("sweep labels must be unique"));
        }
        match &self.landscape {
            LandscapeConfig::Quadratic(spec) => spec.validate(),
            LandscapeConfig::TwoLayerTanh(t) => {
                if t.width == 0 || t.teacher.is_empty() || t.dataset.n == 0 {
                    return Err(Error::config(
                        "two_layer_tanh needs width >= 1, a teacher and dataset.n >= 1",
                    ));
                }
                SplitPlan {
                    width: t.width,
                    assignments: t.split.assignments.clone(),
                }
                .validate(t.split.narrow_init.len())
            }
        }
    }

    /// `(label, solver)` per trajectory: the base solver alone when there is
    /// no sweep, otherwise one entry per sweep item.
    pub fn runs(&self) -> Vec<(String, SolverConfig)> {
        if self.sweep.is_empty() {
            return vec![("run".to_string(), self.solver.clone())];
        }
        self.sweep
            .iter()
            .map(|e| {
                let mut cfg = self.solver.clone();
                if let Some(k) = e.k {
                    cfg.k = k;
                }
                if let Some(s) = e.scheme {
                    cfg.scheme = s;
                }
                if let Some(g) = e.gamma {
                    cfg.gamma = g;
                }
                let label = e.label.clone().unwrap_or_else(|| {
                    let mut l = format!("{}_k{}", scheme_name(&cfg.scheme), cfg.k);
                    if cfg.gamma != 0.0 && cfg.scheme == Scheme::HeavyBall {
                        l.push_str(&format!("_gamma{}", cfg.gamma));
                    }
                    l
                });
                (label, cfg)
            })
            .collect()
    }

    pub fn dataset(&self) -> Result<Option<Dataset>> {
        match &self.landscape {
            LandscapeConfig::Quadratic(_) => Ok(None),
            LandscapeConfig::TwoLayerTanh(t) => {
                generate_dataset(t.dataset.seed, t.dataset.n, &t.teacher).map(Some)
            }
        }
    }

    pub fn build_landscape(&self) -> Result<Landscape> {
        match &self.landscape {
            LandscapeConfig::Quadratic(spec) => {
                let q = make_quadratic(spec.clone())?;
                let manifold = ManifoldContext::classify(&q, q.manifold(), None)?;
                Ok(Landscape {
                    saddle: manifold.spec.anchor().clone(),
                    manifold,
                    model: Box::new(q),
                    dataset: None,
                })
            }
            LandscapeConfig::TwoLayerTanh(t) => {
                let dataset = generate_dataset(t.dataset.seed, t.dataset.n, &t.teacher)?;
                let narrow = TwoLayerTanh::new(t.split.narrow_init.len(), &dataset)?;
                let init = TwoLayerTanh::pack(&t.split.narrow_init);
                let critical = find_narrow_critical(&narrow, &init, t.split.critical_tol)?;
                let plan = SplitPlan {
                    width: t.width,
                    assignments: t.split.assignments.clone(),
                };
                let (saddle, spec) = split_embed(&narrow, &critical, &plan)?;
                let wide = TwoLayerTanh::new(t.width, &dataset)?;
                let manifold = ManifoldContext::classify(&wide, spec, t.zero_tol)?;
                Ok(Landscape {
                    saddle,
                    manifold,
                    model: Box::new(wide),
                    dataset: Some(dataset),
                })
            }
        }
    }

    pub fn initial_point(&self, saddle: &DVector<f64>) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.init.seed);
        saddle + random_unit_vector(&mut rng, saddle.len()) * self.init.perturbation
    }

    /// Seed for verification: `verify.seed`, else `init.seed`.
    pub fn verify_seed(&self) -> u64 {
        self.verify.seed.unwrap_or(self.init.seed)
    }
}
