//! Independent oracles and numerical checks of the local convergence theory.
//!
//! Each check returns a [`VerificationReport`] that records its seed and,
//! when it fails, the inputs needed to replay the offending sample.

mod checks;
mod oracles;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use checks::{
    alignment_tail, check_all, check_theorem, log_slope, tube_bounds, AlignmentTail, TubeBounds,
};
pub use oracles::{
    fd_gradient, fd_hessian, quadratic_recursion_oracle, relative_error, relative_error_vec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckName {
    #[serde(rename = "descent_3_4")]
    Descent,
    #[serde(rename = "stability_3_5")]
    Stability,
    #[serde(rename = "onestep_3_6")]
    OneStep,
    #[serde(rename = "rate_3_7")]
    Rate,
    #[serde(rename = "alignment_3_8")]
    Alignment,
}

impl CheckName {
    pub const ALL: [CheckName; 5] = [
        CheckName::Descent,
        CheckName::Stability,
        CheckName::OneStep,
        CheckName::Rate,
        CheckName::Alignment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckName::Descent => "descent_3_4",
            CheckName::Stability => "stability_3_5",
            CheckName::OneStep => "onestep_3_6",
            CheckName::Rate => "rate_3_7",
            CheckName::Alignment => "alignment_3_8",
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = CheckName::ALL.iter().map(|c| c.as_str()).collect();
                Error::config(format!("unknown check `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check's hypotheses were not met (for example a run left the tube).
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: CheckName,
    pub status: CheckStatus,
    pub measured: BTreeMap<String, f64>,
    pub threshold: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    /// Inputs of the first offending sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<serde_json::Value>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    /// Records a measured value. JSON has no encoding for non-finite
    /// numbers, so those go into the note instead.
    pub fn measure(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.measured.insert(key.to_string(), value);
        } else {
            if !self.note.is_empty() {
                self.note.push_str("; ");
            }
            self.note.push_str(&format!("{key} = {value}"));
        }
    }

    /// One JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report fields are plain data")
    }
}

fn default_delta() -> f64 {
    0.1
}
fn default_descent_samples() -> usize {
    1000
}
fn default_stability_runs() -> usize {
    20
}
fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    200.0
}
fn default_stability_tol() -> f64 {
    1e-8
}
fn default_trajectories() -> usize {
    5
}
fn default_constant_samples() -> usize {
    200
}
fn default_start_radius() -> f64 {
    0.05
}
fn default_alignment_threshold() -> f64 {
    1e-6
}
fn default_rate_slack() -> f64 {
    0.1
}
fn default_c_slack() -> f64 {
    2.0
}
fn default_r_floor() -> f64 {
    1e-8
}
fn default_tie_tol() -> f64 {
    1e-6
}

/// Sampling and tolerance knobs shared by the checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Tube radius used for sampling and for the tube-exit test.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Radius of the manifold patch sampled around the anchor; defaults to
    /// `delta`.
    #[serde(default)]
    pub patch_radius: Option<f64>,
    /// Indices to test; defaults to every `k` in `[s, s+m]` for the descent
    /// check and to the solver's `k` elsewhere.
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    #[serde(default = "default_descent_samples")]
    pub descent_samples: usize,
    #[serde(default = "default_stability_runs")]
    pub stability_runs: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_stability_tol")]
    pub stability_grad_tol: f64,
    /// Discrete trajectories per check for the one-step, rate and alignment
    /// checks.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_constant_samples")]
    pub constant_samples: usize,
    /// Distance of discrete starting points from the manifold.
    #[serde(default = "default_start_radius")]
    pub start_radius: f64,
    #[serde(default = "default_alignment_threshold")]
    pub alignment_threshold: f64,
    #[serde(default = "default_rate_slack")]
    pub rate_slack: f64,
    /// Multiplier on the Monte-Carlo estimate of the quadratic coefficient.
    #[serde(default = "default_c_slack")]
    pub c_slack: f64,
    /// Distances below this are excluded from fits.
    #[serde(default = "default_r_floor")]
    pub r_floor: f64,
    /// Relative gap below which `|λ_s|` and `|λ_{s+m+1}|` count as tied.
    #[serde(default = "default_tie_tol")]
    pub tie_tol: f64,
    /// Seed for experiment files; library callers pass the seed directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}
