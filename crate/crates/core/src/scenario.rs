//! TOML scenario files.
//!
//! ```toml
//! name = "collision4"
//! formula = "G[20,80](norm(x1 - x2) >= 1)"
//!
//! [params]
//! delta = 0.1
//! eta = 0.01
//! L = 100
//! Lprime = 100
//! seed = 7
//!
//! [[robots]]
//! id = 1
//! dim = 2
//! x0 = [0.0, 0.0]
//! xf = "random"
//! workspace = { lo = [0.0, 0.0], hi = [10.0, 10.0] }
//! ```
//!
//! Omitted parameters take the [`PlannerParams`] defaults.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::descent::Workspace;
use crate::expr::RobotId;
use crate::formula::{parse, ParseError};
use crate::planner::{PlanError, PlannerParams, Problem, RobotSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("formula: {0}")]
    Formula(#[from] ParseError),
    #[error("{0}")]
    Invalid(String),
}

impl From<PlanError> for ScenarioError {
    fn from(e: PlanError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FinalState {
    Given(Vec<f64>),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotEntry {
    pub id: usize,
    pub dim: usize,
    pub x0: Vec<f64>,
    pub xf: FinalState,
    pub workspace: WorkspaceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSpec {
    pub delta: f64,
    pub eta: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "Lprime")]
    pub l_prime: usize,
    pub epsilon: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Delta")]
    pub resolution: f64,
    pub budget: usize,
    pub max_branches: usize,
    pub guard: f64,
    pub slack: f64,
    pub max_step: f64,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        let p = PlannerParams::default();
        ParamsSpec {
            delta: p.delta,
            eta: p.eta,
            l: p.l,
            l_prime: p.l_prime,
            epsilon: p.epsilon,
            seed: p.seed,
            m: p.m,
            resolution: p.resolution,
            budget: p.budget,
            max_branches: p.max_branches,
            guard: p.guard,
            slack: p.slack,
            max_step: p.max_step,
        }
    }
}

impl From<&ParamsSpec> for PlannerParams {
    fn from(p: &ParamsSpec) -> Self {
        PlannerParams {
            l: p.l,
            l_prime: p.l_prime,
            delta: p.delta,
            eta: p.eta,
            epsilon: p.epsilon,
            seed: p.seed,
            m: p.m,
            resolution: p.resolution,
            budget: p.budget,
            max_branches: p.max_branches,
            guard: p.guard,
            slack: p.slack,
            max_step: p.max_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub formula: String,
    #[serde(default)]
    pub params: ParamsSpec,
    pub robots: Vec<RobotEntry>,
    /// Hex SHA-256 of the source text.
    #[serde(skip)]
    pub hash: String,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let mut s: Scenario = toml::from_str(text)?;
        s.hash = sha256_hex(text.as_bytes());
        Ok(s)
    }

    /// Parse and validate into a planning problem; `xf = "random"` draws the
    /// final state from the workspace.
    pub fn to_problem(&self) -> Result<Problem, ScenarioError> {
        let formula = parse(&self.formula)?;
        let params = PlannerParams::from(&self.params);
        let mut robots: Vec<RobotSpec> = Vec::with_capacity(self.robots.len());
        for r in &self.robots {
            let id = RobotId(r.id);
            let workspace = Workspace {
                lo: r.workspace.lo.clone(),
                hi: r.workspace.hi.clone(),
            };
            let xf = match &r.xf {
                FinalState::Given(v) => v.clone(),
                FinalState::Keyword(k) if k == "random" => {
                    if workspace.lo.len() != r.dim || workspace.hi.len() != r.dim {
                        return Err(ScenarioError::Invalid(format!("robot {}: workspace does not match dim", r.id)));
                    }
                    Problem::random_final_state(params.seed, id, &workspace)
                }
                FinalState::Keyword(k) => {
                    return Err(ScenarioError::Invalid(format!(
                        "robot {}: xf must be a vector or \"random\", got \"{k}\"",
                        r.id
                    )))
                }
            };
            robots.push(RobotSpec {
                id,
                dim: r.dim,
                x0: r.x0.clone(),
                xf,
                workspace,
            });
        }
        let mut ids: Vec<usize> = self.robots.iter().map(|r| r.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ScenarioError::Invalid("robot ids must be unique".into()));
        }
        robots.sort_by_key(|r| r.id);
        Ok(Problem::new(formula, robots, params)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
