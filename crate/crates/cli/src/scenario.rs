//! Scenario files: one strict JSON document per run.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use prodnet::economy::{CategoryMap, EconomySpec, ProductionNetwork, ProductivityModel};
use prodnet::game::{Schedule, TiePolicy};
use prodnet::policy::TradePolicy;
use prodnet::replicate::{build_clustered_network, ReplicateGame};
use prodnet::risk::{Disruption, SpatialRisk};
use prodnet::Partition;

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Category (1-based) of each base firm.
    pub categories: Vec<usize>,
    pub consumption_shares: Vec<f64>,
    /// One row per base firm: labor share, then one share per category.
    pub requirements: Vec<Vec<f64>>,
    #[serde(default)]
    pub productivity: ProductivitySpec,
    /// Firm-by-firm spending shares of the (replicated) economy.
    #[serde(default)]
    pub network: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub replicate: Option<ReplicateSpec>,
    #[serde(default)]
    pub risk: Option<RiskSpec>,
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductivityKind {
    #[default]
    Constant,
    HicksNeutral,
    Power,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Levels {
    Uniform(f64),
    PerFirm(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductivitySpec {
    #[serde(default)]
    pub kind: ProductivityKind,
    /// Productivity level, one number or one per base firm; defaults to 1.
    #[serde(default)]
    pub lambda: Option<Levels>,
    /// Diversification exponent of the power family.
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateSpec {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Homogeneous,
    Distance,
    CategoryDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSpec {
    pub kind: RiskKind,
    pub r: f64,
    pub rho: f64,
    pub disruption: Disruption,
    /// Also enumerate every disruption scenario on each clustered network.
    #[serde(default)]
    pub exact: bool,
}

impl RiskSpec {
    pub fn spatial(&self) -> SpatialRisk {
        match self.kind {
            RiskKind::Homogeneous => SpatialRisk::Homogeneous(self.r),
            RiskKind::Distance => SpatialRisk::Distance(self.r),
            RiskKind::CategoryDistance => SpatialRisk::CategoryDistance(self.r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    #[default]
    Country,
    Firm,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default)]
    pub pairs: PairKind,
    #[serde(default)]
    pub prevented: Vec<[usize; 2]>,
    #[serde(default)]
    pub catalyzed: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    RoundRobin,
    Random,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub tie_policy: TiePolicy,
    #[serde(default)]
    pub seed: u64,
    /// Profit share imposed on every firm for game commands; `null` keeps
    /// the requirements as written.
    #[serde(default = "default_epsilon")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
    #[serde(default)]
    pub random_starts: usize,
    #[serde(default = "default_link_cap")]
    pub risk_link_cap: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_max_rounds() -> usize {
    100
}

fn default_epsilon() -> Option<f64> {
    Some(1e-3)
}

fn default_n_cap() -> usize {
    6
}

fn default_link_cap() -> usize {
    prodnet::risk::DEFAULT_LINK_CAP
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_rounds: default_max_rounds(),
            tie_policy: TiePolicy::default(),
            seed: 0,
            epsilon: default_epsilon(),
            schedule: ScheduleKind::default(),
            n_cap: default_n_cap(),
            random_starts: 0,
            risk_link_cap: default_link_cap(),
        }
    }
}

impl SolverSpec {
    pub fn schedule(&self, seed: u64) -> Schedule {
        match self.schedule {
            ScheduleKind::RoundRobin => Schedule::RoundRobin,
            ScheduleKind::Random => Schedule::Random(seed),
        }
    }
}

/// A failure to load a scenario, with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ScenarioError {}

fn field_error(path: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError {
        path: path.into(),
        message: message.into(),
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub economy: EconomySpec,
    pub replicate: Option<ReplicateGame>,
    pub network: ProductionNetwork,
    pub risk: Option<RiskSpec>,
    pub policy: Option<TradePolicy>,
    pub solver: SolverSpec,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| field_error("", format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        field_error(&path, with_suggestion(&inner))
    })?;
    build(file)
}

/// Appends a "did you mean" hint to serde's unknown-field message.
fn with_suggestion(message: &str) -> String {
    let Some(rest) = message.strip_prefix("unknown field `") else {
        return message.to_string();
    };
    let Some((field, tail)) = rest.split_once('`') else {
        return message.to_string();
    };
    let expected: Vec<&str> = tail.split('`').skip(1).step_by(2).collect();
    let best = expected
        .iter()
        .map(|c| (strsim::levenshtein(field, c), *c))
        .filter(|&(d, c)| d <= 2.max(c.len() / 3))
        .min();
    match best {
        Some((_, c)) => format!("{message}; did you mean `{c}`?"),
        None => message.to_string(),
    }
}

fn check_sum(path: &str, values: &[f64], target: f64) -> Result<(), ScenarioError> {
    let total: f64 = values.iter().sum();
    if (total - target).abs() > SUM_TOL {
        return Err(field_error(path, format!("shares sum to {total}, expected {target}")));
    }
    Ok(())
}

fn build(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let m = file.categories.len();
    if m == 0 {
        return Err(field_error("categories", "at least one firm is required"));
    }
    let num_categories = file.categories.iter().copied().max().unwrap_or(0);
    if let Some(k) = file.categories.iter().position(|&c| c == 0) {
        return Err(field_error(&format!("categories[{k}]"), "categories are numbered from 1"));
    }
    if file.consumption_shares.len() != m {
        return Err(field_error(
            "consumption_shares",
            format!("{} entries for {m} firms", file.consumption_shares.len()),
        ));
    }
    check_sum("consumption_shares", &file.consumption_shares, 1.0)?;
    if file.requirements.len() != m {
        return Err(field_error(
            "requirements",
            format!("{} rows for {m} firms", file.requirements.len()),
        ));
    }
    for (i, row) in file.requirements.iter().enumerate() {
        let path = format!("requirements[{i}]");
        if row.len() != num_categories + 1 {
            return Err(field_error(
                &path,
                format!("{} entries, expected labor plus {num_categories} categories", row.len()),
            ));
        }
        let total: f64 = row.iter().sum();
        if total > 1.0 + SUM_TOL {
            return Err(field_error(&path, format!("shares sum to {total}, more than 1")));
        }
    }
    let productivity = productivity_model(&file.productivity, m)?;
    let cats = CategoryMap::new(num_categories, file.categories.clone())
        .map_err(|e| field_error("categories", e.to_string()))?;
    let b = DMatrix::from_fn(m, num_categories + 1, |i, l| file.requirements[i][l]);
    let base = EconomySpec::new(file.consumption_shares.clone(), b, productivity, cats)
        .map_err(|e| field_error("", e.to_string()))?;

    let replicate = match file.replicate {
        Some(ReplicateSpec { n }) => Some(
            ReplicateGame::new(base.clone(), n).map_err(|e| field_error("replicate", e.to_string()))?,
        ),
        None => None,
    };
    let economy = replicate.as_ref().map_or_else(|| base.clone(), |r| r.economy().clone());
    let network = match (&file.network, &replicate) {
        (Some(rows), _) => {
            let net = ProductionNetwork::from_rows(rows).map_err(|e| field_error("network", e.to_string()))?;
            if net.num_firms() != economy.num_firms() {
                return Err(field_error(
                    "network",
                    format!("{} rows for {} firms", net.num_firms(), economy.num_firms()),
                ));
            }
            net.check_admissible(&economy)
                .map_err(|e| field_error("network", e.to_string()))?;
            net
        }
        (None, Some(rep)) => build_clustered_network(rep, &Partition::islands(rep.n()))
            .map_err(|e| field_error("replicate", e.to_string()))?
            .network,
        (None, None) => ProductionNetwork::uniform(&economy),
    };

    if let Some(risk) = &file.risk {
        if !(0.0..=1.0).contains(&risk.r) {
            return Err(field_error("risk.r", format!("{} not in [0, 1]", risk.r)));
        }
        if !(0.0..1.0).contains(&risk.rho) {
            return Err(field_error("risk.rho", format!("{} not in [0, 1)", risk.rho)));
        }
    }
    let policy = match &file.policy {
        Some(p) => Some(trade_policy(p, replicate.as_ref(), economy.num_firms())?),
        None => None,
    };
    let solver = file.solver;
    if !(solver.tol > 0.0) {
        return Err(field_error("solver.tol", "must be positive"));
    }
    if let Some(eps) = solver.epsilon {
        if !(0.0..1.0).contains(&eps) {
            return Err(field_error("solver.epsilon", format!("{eps} not in [0, 1)")));
        }
    }
    Ok(Scenario {
        economy,
        replicate,
        network,
        risk: file.risk,
        policy,
        solver,
    })
}

fn productivity_model(spec: &ProductivitySpec, m: usize) -> Result<ProductivityModel, ScenarioError> {
    let levels = match &spec.lambda {
        None => vec![1.0; m],
        Some(Levels::Uniform(x)) => vec![*x; m],
        Some(Levels::PerFirm(v)) => {
            if v.len() != m {
                return Err(field_error(
                    "productivity.lambda",
                    format!("{} levels for {m} firms", v.len()),
                ));
            }
            v.clone()
        }
    };
    if let Some(k) = levels.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(field_error(&format!("productivity.lambda[{k}]"), "levels must be positive"));
    }
    match spec.kind {
        ProductivityKind::Constant => {
            if spec.theta.is_some() {
                return Err(field_error("productivity.theta", "only the power family takes an exponent"));
            }
            Ok(ProductivityModel::Constant { levels })
        }
        ProductivityKind::HicksNeutral => {
            if spec.lambda.is_some() || spec.theta.is_some() {
                return Err(field_error("productivity", "the Hicks-neutral model takes no parameters"));
            }
            Ok(ProductivityModel::HicksNeutral)
        }
        ProductivityKind::Power => {
            let exponent = spec
                .theta
                .ok_or_else(|| field_error("productivity.theta", "required for the power family"))?;
            Ok(ProductivityModel::Power { levels, exponent })
        }
    }
}

fn trade_policy(
    spec: &PolicySpec,
    rep: Option<&ReplicateGame>,
    m: usize,
) -> Result<TradePolicy, ScenarioError> {
    let zero_based = |field: &str, pairs: &[[usize; 2]], limit: usize| {
        pairs
            .iter()
            .enumerate()
            .map(|(k, &[a, b])| {
                if a == 0 || b == 0 || a > limit || b > limit {
                    Err(field_error(
                        &format!("policy.{field}[{k}]"),
                        format!("entries must lie in 1..={limit}"),
                    ))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let result = match spec.pairs {
        PairKind::Country => {
            let rep = rep.ok_or_else(|| field_error("policy.pairs", "country pairs need a replicate block"))?;
            let prevented = zero_based("prevented", &spec.prevented, rep.n())?;
            let catalyzed = zero_based("catalyzed", &spec.catalyzed, rep.n())?;
            TradePolicy::from_country_pairs(rep, &prevented, &catalyzed)
        }
        PairKind::Firm => {
            let prevented = zero_based("prevented", &spec.prevented, m)?;
            let catalyzed = zero_based("catalyzed", &spec.catalyzed, m)?;
            TradePolicy::new(prevented, catalyzed)
        }
    };
    result.map_err(|e| field_error("policy", e.to_string()))
}
