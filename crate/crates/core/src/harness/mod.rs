//! Scenario files, runs, and trace checking.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "honest-k1"
//! seed = 1
//! allow_infeasible = true      # run even if the async feasibility check fails
//! clients = ["alice", "bob"]
//!
//! [params]                     # alpha and beta default to 1/3 and 2/3
//! n = 25
//! f = 3
//! m = 5
//! k1 = 1
//! k2 = 4
//! mu = 0.5
//!
//! [sim]                        # every key optional
//! horizon = 100
//! step_cap = 5000000
//!
//! [[funds]]
//! name = "alice-genesis"
//! owner = "alice"
//! balance = 6000
//!
//! [[workload]]
//! action = "pay"               # pay | seller-settle | buyer-settle | propagate
//! at = 0
//! buyer = "alice"
//! fund = "alice-genesis"
//! seller = "bob"
//!
//! [strategy]
//! kind = "passive"
//! ```
//!
//! Unknown keys are rejected everywhere.

mod check;

use serde::{Deserialize, Serialize};

pub use check::{
    check_requirements, strict_secrecy_violations, Finding, FundSummary, MissingSetup, RequirementReport, Verdict,
};

use crate::params::{check_feasible_async, ParamsError, QuorumParams};
use crate::protocol::PartyId;
use crate::simnet::strategies::StrategySpec;
use crate::simnet::{FundSpec, Intent, Scenario, SimConfig, Simulation, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub n: usize,
    pub f: usize,
    pub m: usize,
    pub k1: usize,
    pub k2: usize,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl ParamsSection {
    pub fn build(&self) -> Result<QuorumParams, ParamsError> {
        QuorumParams::new(
            self.n,
            self.f,
            self.m,
            self.k1,
            self.k2,
            self.alpha.unwrap_or(1.0 / 3.0),
            self.beta.unwrap_or(2.0 / 3.0),
            self.mu,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FundEntry {
    pub name: String,
    pub owner: String,
    pub balance: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorkItem {
    Pay { at: u64, buyer: String, fund: String, seller: String },
    SellerSettle { at: u64, seller: String },
    BuyerSettle { at: u64, buyer: String, fund: String },
    Propagate { at: u64, client: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_infeasible: bool,
    pub clients: Vec<String>,
    pub params: ParamsSection,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub funds: Vec<FundEntry>,
    #[serde(default)]
    pub workload: Vec<WorkItem>,
    #[serde(default = "passive")]
    pub strategy: StrategySpec,
}

fn passive() -> StrategySpec {
    StrategySpec::Passive {}
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("params: {0}")]
    Params(#[from] ParamsError),
    #[error("parameters fail the async feasibility check ({0}); set allow_infeasible = true to run anyway")]
    Infeasible(String),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.into() }
}

/// A config resolved into what the simulator consumes.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub strategy: StrategySpec,
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    pub fn client_id(&self, name: &str) -> Option<PartyId> {
        self.clients.iter().position(|c| c == name).map(|i| self.params.n + i)
    }

    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let params = self.params.build()?;
        let mut warnings = Vec::new();
        let report = check_feasible_async(&params);
        if !report.all_pass() {
            let failed: Vec<&str> = report.conditions.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if !self.allow_infeasible {
                return Err(ConfigError::Infeasible(failed.join(", ")));
            }
            warnings.push(format!(
                "feasibility override: {} fails {}; probabilistic guarantees are not claimed for this size",
                self.name,
                failed.join(", ")
            ));
        }
        if !report.proven_regime {
            warnings.push("alpha/beta differ from 1/3, 2/3".into());
        }
        if self.sim.latency_min == 0 || self.sim.latency_min > self.sim.latency_max {
            return Err(field("sim.latency_min", "must satisfy 1 <= latency_min <= latency_max"));
        }
        for (i, c) in self.clients.iter().enumerate() {
            if self.clients[..i].contains(c) {
                return Err(field(format!("clients[{i}]"), format!("duplicate client `{c}`")));
            }
        }

        let who =
            |f: String, name: &str| self.client_id(name).ok_or_else(|| field(f, format!("unknown client `{name}`")));
        let mut funds = Vec::new();
        for (i, fd) in self.funds.iter().enumerate() {
            if self.funds[..i].iter().any(|g| g.name == fd.name) {
                return Err(field(format!("funds[{i}].name"), format!("duplicate fund `{}`", fd.name)));
            }
            if fd.balance == 0 {
                return Err(field(format!("funds[{i}].balance"), "must be positive"));
            }
            funds.push(FundSpec {
                name: fd.name.clone(),
                owner: who(format!("funds[{i}].owner"), &fd.owner)?,
                balance: fd.balance,
            });
        }
        let fund = |f: String, name: &str| {
            self.funds.iter().position(|g| g.name == name).ok_or_else(|| field(f, format!("unknown fund `{name}`")))
        };

        let mut intents = Vec::new();
        for (i, w) in self.workload.iter().enumerate() {
            let at = |k: &str| format!("workload[{i}].{k}");
            intents.push(match w {
                WorkItem::Pay { at: t, buyer, fund: fd, seller } => Intent::Pay {
                    at: *t,
                    buyer: who(at("buyer"), buyer)?,
                    fund: fund(at("fund"), fd)?,
                    seller: who(at("seller"), seller)?,
                },
                WorkItem::SellerSettle { at: t, seller } => {
                    Intent::SellerSettle { at: *t, seller: who(at("seller"), seller)? }
                }
                WorkItem::BuyerSettle { at: t, buyer, fund: fd } => {
                    Intent::BuyerSettle { at: *t, buyer: who(at("buyer"), buyer)?, fund: fund(at("fund"), fd)? }
                }
                WorkItem::Propagate { at: t, client, message } => {
                    Intent::Propagate { at: *t, client: who(at("client"), client)?, message: message.clone() }
                }
            });
        }
        // names in the strategy must resolve too
        self.strategy.build(|s| self.client_id(s)).map_err(|e| field("strategy", e))?;

        Ok(Prepared {
            scenario: Scenario { params, clients: self.clients.clone(), funds, intents, config: self.sim.clone() },
            strategy: self.strategy.clone(),
            warnings,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub report: RequirementReport,
    pub warnings: Vec<String>,
}

/// Runs `config` with `seed` (the config's own seed when `None`).
pub fn run_scenario(config: &ScenarioConfig, seed: Option<u64>) -> Result<RunOutcome, ConfigError> {
    let prepared = config.prepare()?;
    let mut strategy = prepared.strategy.build(|s| config.client_id(s)).map_err(|e| field("strategy", e))?;
    let mut sim = Simulation::new(&prepared.scenario, strategy.name(), seed.unwrap_or(config.seed))?;
    sim.run(strategy.as_mut());
    let trace = sim.into_trace();
    let report = check_requirements(&trace).expect("simulations start with a setup record");
    Ok(RunOutcome { trace, report, warnings: prepared.warnings })
}

const BUNDLED: &[(&str, &str)] = &[
    ("honest-k1", include_str!("../../scenarios/honest-k1.toml")),
    ("honest-settle-all", include_str!("../../scenarios/honest-settle-all.toml")),
    ("double-spend-greedy", include_str!("../../scenarios/double-spend-greedy.toml")),
    ("corrupt-seller-flip", include_str!("../../scenarios/corrupt-seller-flip.toml")),
    ("erase-after-buyer-settle", include_str!("../../scenarios/erase-after-buyer-settle.toml")),
    ("propagate-race", include_str!("../../scenarios/propagate-race.toml")),
    ("over-k1-abort", include_str!("../../scenarios/over-k1-abort.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    bundled_source(name).map(|s| ScenarioConfig::from_toml(s).expect("bundled scenarios parse"))
}
