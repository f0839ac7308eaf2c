//! Cobb-Douglas network economies and their general equilibrium.
//!
//! Firms are indexed `0..m`. Categories are indexed `1..=L`; index `0` is
//! labor, so requirement rows have `L + 1` entries with the labor share first.
//! Node `0` of the flow matrix is the household and firm `i` sits at node
//! `i + 1`.
//!
//! Equilibrium revenues come from the resolvent `v = (I - Ã_M)^{-1} a₀` with the
//! price of labor fixed to one. Prices then follow from the log-linear cost
//! system `(I - A) log p = ε∘log v - u`, where `u` is the entropy-corrected
//! productivity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::linalg::{self, xlogx};

/// Absolute tolerance for share sums (consumption shares, category budgets).
pub const SHARE_TOL: f64 = 1e-12;

/// Assignment of firms to goods categories, plus optional country labels for
/// replicate economies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    num_categories: usize,
    /// Category of each firm, in `1..=num_categories`.
    firm_category: Vec<usize>,
    /// Country (replication index, 0-based) of each firm.
    country: Option<Vec<usize>>,
}

impl CategoryMap {
    pub fn new(num_categories: usize, firm_category: Vec<usize>) -> Result<Self> {
        if let Some((i, &c)) = firm_category
            .iter()
            .enumerate()
            .find(|(_, &c)| c == 0 || c > num_categories)
        {
            return Err(ModelError::InvalidEconomy(format!(
                "firm {i} has category {c}, expected 1..={num_categories}"
            )));
        }
        Ok(Self {
            num_categories,
            firm_category,
            country: None,
        })
    }

    pub fn with_countries(mut self, country: Vec<usize>) -> Result<Self> {
        if country.len() != self.firm_category.len() {
            return Err(ModelError::Dimension(format!(
                "{} country labels for {} firms",
                country.len(),
                self.firm_category.len()
            )));
        }
        self.country = Some(country);
        Ok(self)
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn num_firms(&self) -> usize {
        self.firm_category.len()
    }

    pub fn category(&self, firm: usize) -> usize {
        self.firm_category[firm]
    }

    pub fn country(&self, firm: usize) -> Option<usize> {
        self.country.as_ref().map(|c| c[firm])
    }

    pub fn num_countries(&self) -> Option<usize> {
        self.country
            .as_ref()
            .map(|c| c.iter().max().map_or(0, |m| m + 1))
    }

    /// Firms producing goods of `category`, ascending.
    pub fn firms_in(&self, category: usize) -> Vec<usize> {
        (0..self.firm_category.len())
            .filter(|&i| self.firm_category[i] == category)
            .collect()
    }
}

/// How a firm's productivity depends on its own input mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProductivityModel {
    /// `λ_i = λ₀_i`, independent of suppliers.
    Constant { levels: Vec<f64> },
    /// `λ_i = λ̄(a_i) = 1 / Π_{j∈M} a_ij^{a_ij}`.
    HicksNeutral,
    /// `λ_i = λ₀_i · λ̄(a_i)^θ`.
    Power { levels: Vec<f64>, exponent: f64 },
}

impl ProductivityModel {
    pub fn constant(m: usize, level: f64) -> Self {
        Self::Constant {
            levels: vec![level; m],
        }
    }

    pub fn power(m: usize, level: f64, exponent: f64) -> Self {
        Self::Power {
            levels: vec![level; m],
            exponent,
        }
    }

    /// Exponent on the Hicks-neutral factor: 0 for constant, 1 for Hicks-neutral.
    pub fn diversification_exponent(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::HicksNeutral => 1.0,
            Self::Power { exponent, .. } => *exponent,
        }
    }

    fn level(&self, firm: usize) -> f64 {
        match self {
            Self::Constant { levels } | Self::Power { levels, .. } => levels[firm],
            Self::HicksNeutral => 1.0,
        }
    }

    pub(crate) fn validate(&self, m: usize) -> Result<()> {
        match self {
            Self::Constant { levels } | Self::Power { levels, .. } => {
                if levels.len() != m {
                    return Err(ModelError::Dimension(format!(
                        "{} productivity levels for {m} firms",
                        levels.len()
                    )));
                }
                if let Some(l) = levels.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
                    return Err(ModelError::InvalidEconomy(format!(
                        "productivity level {l} must be positive"
                    )));
                }
            }
            Self::HicksNeutral => {}
        }
        if let Self::Power { exponent, .. } = self {
            if !(*exponent >= 0.0) || !exponent.is_finite() {
                return Err(ModelError::InvalidEconomy(format!(
                    "diversification exponent {exponent} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// `log λ_i(a_i)`, where `row` holds the firm-to-firm shares `a_ij, j ∈ M`.
    pub fn log_productivity(&self, firm: usize, row: &[f64]) -> f64 {
        self.level(firm).ln() + self.diversification_exponent() * log_hicks_neutral(row)
    }

    /// Coefficient `c` in `∂ log λ_i / ∂ a_ij = -c (log a_ij + 1)`.
    pub(crate) fn entropy_sensitivity(&self) -> f64 {
        self.diversification_exponent()
    }
}

/// `log λ̄(a_i) = -Σ_{j∈M} a_ij log a_ij`.
pub fn log_hicks_neutral(row: &[f64]) -> f64 {
    -row.iter().map(|&a| xlogx(a)).sum::<f64>()
}

/// The immutable problem instance: household shares, requirements, productivity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EconomySpec {
    consumption: Vec<f64>,
    /// `m × (L+1)` requirement matrix, labor in column 0.
    #[serde(serialize_with = "linalg::serialize_rows")]
    requirements: DMatrix<f64>,
    productivity: ProductivityModel,
    categories: CategoryMap,
}

impl EconomySpec {
    pub fn new(
        consumption: Vec<f64>,
        requirements: DMatrix<f64>,
        productivity: ProductivityModel,
        categories: CategoryMap,
    ) -> Result<Self> {
        let m = consumption.len();
        if m == 0 {
            return Err(ModelError::InvalidEconomy("economy has no firms".into()));
        }
        if categories.num_firms() != m {
            return Err(ModelError::Dimension(format!(
                "category map covers {} firms, consumption covers {m}",
                categories.num_firms()
            )));
        }
        if requirements.nrows() != m || requirements.ncols() != categories.num_categories() + 1 {
            return Err(ModelError::Dimension(format!(
                "requirements are {}x{}, expected {m}x{}",
                requirements.nrows(),
                requirements.ncols(),
                categories.num_categories() + 1
            )));
        }
        for (j, &a) in consumption.iter().enumerate() {
            if a < 0.0 || !a.is_finite() {
                return Err(ModelError::NegativeShare {
                    location: format!("consumption_shares[{j}]"),
                    value: a,
                });
            }
        }
        let total: f64 = consumption.iter().sum();
        if (total - 1.0).abs() > SHARE_TOL {
            return Err(ModelError::InvalidEconomy(format!(
                "consumption shares sum to {total}, expected 1"
            )));
        }
        for i in 0..m {
            let mut sum = 0.0;
            for l in 0..requirements.ncols() {
                let b = requirements[(i, l)];
                if b < 0.0 || !b.is_finite() {
                    return Err(ModelError::NegativeShare {
                        location: format!("requirements[{i}][{l}]"),
                        value: b,
                    });
                }
                sum += b;
            }
            if sum > 1.0 + SHARE_TOL {
                return Err(ModelError::InvalidEconomy(format!(
                    "requirements of firm {i} sum to {sum} > 1"
                )));
            }
        }
        productivity.validate(m)?;
        Ok(Self {
            consumption,
            requirements,
            productivity,
            categories,
        })
    }

    pub fn num_firms(&self) -> usize {
        self.consumption.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.num_categories()
    }

    pub fn consumption(&self) -> &[f64] {
        &self.consumption
    }

    pub fn consumption_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.consumption)
    }

    pub fn requirements(&self) -> &DMatrix<f64> {
        &self.requirements
    }

    pub fn requirement(&self, firm: usize, category: usize) -> f64 {
        self.requirements[(firm, category)]
    }

    pub fn labor_share(&self, firm: usize) -> f64 {
        self.requirements[(firm, 0)]
    }

    /// Profit share `ε_i = 1 - Σ_ℓ b_iℓ`, clamped at zero against rounding.
    pub fn epsilon(&self, firm: usize) -> f64 {
        (1.0 - self.requirements.row(firm).sum()).max(0.0)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        (0..self.num_firms()).map(|i| self.epsilon(i)).collect()
    }

    pub fn productivity(&self) -> &ProductivityModel {
        &self.productivity
    }

    pub fn categories(&self) -> &CategoryMap {
        &self.categories
    }

    pub fn with_productivity(&self, productivity: ProductivityModel) -> Result<Self> {
        productivity.validate(self.num_firms())?;
        Ok(Self {
            productivity,
            ..self.clone()
        })
    }

    /// Rescales every requirement row proportionally so that each firm keeps a
    /// profit share of exactly `epsilon`.
    pub fn with_profit_share(&self, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(ModelError::InvalidParameter {
                name: "epsilon",
                reason: format!("{epsilon} not in [0, 1)"),
            });
        }
        let mut b = self.requirements.clone();
        for i in 0..b.nrows() {
            let s = b.row(i).sum();
            if s <= 0.0 {
                return Err(ModelError::InvalidEconomy(format!(
                    "firm {i} has no requirements to rescale"
                )));
            }
            let scale = (1.0 - epsilon) / s;
            for l in 0..b.ncols() {
                b[(i, l)] *= scale;
            }
        }
        Ok(Self {
            requirements: b,
            ..self.clone()
        })
    }
}

/// The firms' joint strategy profile: `a_ij` is firm `i`'s spending share on
/// good `j`. Labor shares live in the economy's requirements.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProductionNetwork {
    #[serde(serialize_with = "linalg::serialize_rows")]
    shares: DMatrix<f64>,
}

impl ProductionNetwork {
    pub fn new(shares: DMatrix<f64>) -> Result<Self> {
        if shares.nrows() != shares.ncols() {
            return Err(ModelError::Dimension(format!(
                "network matrix is {}x{}",
                shares.nrows(),
                shares.ncols()
            )));
        }
        for i in 0..shares.nrows() {
            for j in 0..shares.ncols() {
                let a = shares[(i, j)];
                if a < 0.0 || !a.is_finite() {
                    return Err(ModelError::NegativeShare {
                        location: format!("network[{i}][{j}]"),
                        value: a,
                    });
                }
            }
        }
        Ok(Self { shares })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != m) {
            return Err(ModelError::Dimension(format!(
                "network row of length {} in a {m}-firm network",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    /// Every firm splits each category budget evenly over that category's firms.
    pub fn uniform(econ: &EconomySpec) -> Self {
        let m = econ.num_firms();
        let cats = econ.categories();
        let mut a = DMatrix::zeros(m, m);
        for l in 1..=econ.num_categories() {
            let firms = cats.firms_in(l);
            if firms.is_empty() {
                continue;
            }
            for i in 0..m {
                let share = econ.requirement(i, l) / firms.len() as f64;
                for &j in &firms {
                    a[(i, j)] = share;
                }
            }
        }
        Self { shares: a }
    }

    pub fn num_firms(&self) -> usize {
        self.shares.nrows()
    }

    pub fn shares(&self) -> &DMatrix<f64> {
        &self.shares
    }

    pub fn share(&self, i: usize, j: usize) -> f64 {
        self.shares[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.shares.row(i).iter().copied().collect()
    }

    pub fn with_row(&self, i: usize, row: &[f64]) -> Result<Self> {
        if row.len() != self.num_firms() {
            return Err(ModelError::Dimension(format!(
                "row of length {} for {} firms",
                row.len(),
                self.num_firms()
            )));
        }
        let mut shares = self.shares.clone();
        for (j, &a) in row.iter().enumerate() {
            shares[(i, j)] = a;
        }
        Self::new(shares)
    }

    pub(crate) fn check_shape(&self, econ: &EconomySpec) -> Result<()> {
        if self.num_firms() != econ.num_firms() {
            return Err(ModelError::Dimension(format!(
                "network has {} firms, economy has {}",
                self.num_firms(),
                econ.num_firms()
            )));
        }
        Ok(())
    }

    /// Moves an admissible network of `from` to `to`, scaling each firm's
    /// spend on a category to the new requirement and keeping the split
    /// across suppliers.
    pub fn rescaled(&self, from: &EconomySpec, to: &EconomySpec) -> Result<Self> {
        self.check_admissible(from)?;
        self.check_shape(to)?;
        if from.categories() != to.categories() {
            return Err(ModelError::InvalidEconomy("category maps differ".into()));
        }
        let cats = to.categories();
        let shares = DMatrix::from_fn(self.num_firms(), self.num_firms(), |i, j| {
            let l = cats.category(j);
            let old = from.requirement(i, l);
            if old > 0.0 {
                self.shares[(i, j)] * to.requirement(i, l) / old
            } else {
                0.0
            }
        });
        let net = Self::new(shares)?;
        net.check_admissible(to)?;
        Ok(net)
    }

    /// Checks `Σ_{j∈M_ℓ} a_ij = b_iℓ` for every firm and category.
    pub fn check_admissible(&self, econ: &EconomySpec) -> Result<()> {
        self.check_shape(econ)?;
        let cats = econ.categories();
        for i in 0..self.num_firms() {
            let mut per_category = vec![0.0; econ.num_categories() + 1];
            for j in 0..self.num_firms() {
                per_category[cats.category(j)] += self.shares[(i, j)];
            }
            for (l, &s) in per_category.iter().enumerate().skip(1) {
                let b = econ.requirement(i, l);
                if (s - b).abs() > SHARE_TOL {
                    return Err(ModelError::Inadmissible(format!(
                        "firm {i} spends {s} on category {l}, requirement is {b}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Column-stochastic matrix of equilibrium money flows over `N = {0} ∪ M`.
/// Column `k` holds how node `k` disposes of its revenue.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    matrix: DMatrix<f64>,
}

impl FlowMatrix {
    /// Wraps an arbitrary non-negative column-stochastic matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(ModelError::Dimension(format!(
                "flow matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(x) = matrix.iter().find(|x| !(**x >= 0.0)) {
            return Err(ModelError::NegativeShare {
                location: "flow matrix".into(),
                value: *x,
            });
        }
        let flow = Self { matrix };
        if flow.max_column_sum_error() > SHARE_TOL {
            return Err(ModelError::InvalidEconomy(
                "flow matrix columns must sum to 1".into(),
            ));
        }
        Ok(flow)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row-stochastic transition matrix `Ãᵀ` of the associated Markov chain.
    pub fn transition(&self) -> DMatrix<f64> {
        self.matrix.transpose()
    }

    /// The firm block `Ã_M`.
    pub fn firm_block(&self) -> DMatrix<f64> {
        let n = self.num_nodes();
        self.matrix.view((1, 1), (n - 1, n - 1)).into_owned()
    }

    pub fn max_column_sum_error(&self) -> f64 {
        (0..self.num_nodes())
            .map(|c| (self.matrix.column(c).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds `Ã` with `Ã[j+1, i+1] = a_ij + ε_i a₀_j`, `Ã[0, i+1] = a_i0` and
/// `Ã[j+1, 0] = a₀_j`.
pub fn build_flow_matrix(econ: &EconomySpec, net: &ProductionNetwork) -> Result<FlowMatrix> {
    net.check_admissible(econ)?;
    Ok(flow_matrix_unchecked(econ, net))
}

pub(crate) fn flow_matrix_unchecked(econ: &EconomySpec, net: &ProductionNetwork) -> FlowMatrix {
    let m = econ.num_firms();
    let a0 = econ.consumption();
    let mut t = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        t[(0, i + 1)] = econ.labor_share(i);
        let eps = econ.epsilon(i);
        for j in 0..m {
            t[(j + 1, i + 1)] = net.share(i, j) + eps * a0[j];
        }
    }
    for j in 0..m {
        t[(j + 1, 0)] = a0[j];
    }
    FlowMatrix { matrix: t }
}

/// Pass/fail per modelling assumption plus a direct ergodicity check of `Ã`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Every consumption share is strictly positive.
    pub household_consumes_all: bool,
    /// Every firm has a strictly positive labor share.
    pub all_firms_use_labor: bool,
    /// Some firm has a positive non-labor requirement.
    pub some_intermediate_input: bool,
    pub strongly_connected: bool,
    /// Period of the chain (gcd of cycle lengths); 0 when not strongly connected.
    pub period: usize,
    pub ergodic: bool,
}

impl AssumptionReport {
    pub fn assumptions_hold(&self) -> bool {
        self.household_consumes_all && self.all_firms_use_labor && self.some_intermediate_input
    }

    /// The solver needs ergodicity, not the (sufficient) assumptions.
    pub fn solver_eligible(&self) -> bool {
        self.ergodic
    }
}

pub fn validate_assumptions(econ: &EconomySpec, net: &ProductionNetwork) -> Result<AssumptionReport> {
    net.check_shape(econ)?;
    let m = econ.num_firms();
    let household_consumes_all = econ.consumption().iter().all(|&a| a > 0.0);
    let all_firms_use_labor = (0..m).all(|i| econ.labor_share(i) > 0.0);
    let some_intermediate_input =
        (0..m).any(|i| (1..=econ.num_categories()).any(|l| econ.requirement(i, l) > 0.0));
    let flow = flow_matrix_unchecked(econ, net);
    let (strongly_connected, period) = chain_structure(flow.matrix());
    Ok(AssumptionReport {
        household_consumes_all,
        all_firms_use_labor,
        some_intermediate_input,
        strongly_connected,
        period,
        ergodic: strongly_connected && period == 1,
    })
}

/// Strong connectivity and period of the chain whose transitions `k -> j`
/// are the positive entries `flow[j, k]`.
fn chain_structure(flow: &DMatrix<f64>) -> (bool, usize) {
    let n = flow.nrows();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|k| (0..n).filter(|&j| flow[(j, k)] > 0.0).collect())
        .collect();
    let pred: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&k| flow[(j, k)] > 0.0).collect())
        .collect();
    let reach = |adj: &Vec<Vec<usize>>| -> Vec<Option<usize>> {
        let mut level = vec![None; n];
        level[0] = Some(0);
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            let lu = level[u].expect("queued nodes have a level");
            for &w in &adj[u] {
                if level[w].is_none() {
                    level[w] = Some(lu + 1);
                    queue.push_back(w);
                }
            }
        }
        level
    };
    let forward = reach(&succ);
    let backward = reach(&pred);
    let connected = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);
    if !connected {
        return (false, 0);
    }
    let mut g = 0usize;
    for u in 0..n {
        for &w in &succ[u] {
            let lu = forward[u].expect("connected");
            let lw = forward[w].expect("connected");
            let diff = (lu + 1).abs_diff(lw);
            g = gcd(g, diff);
        }
    }
    (true, g)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution `μ` of the chain (`Ã μ = μ`, `Σ μ = 1`) by a direct
/// solve with the last balance equation replaced by the normalisation.
pub fn stationary_distribution(flow: &FlowMatrix) -> Result<DVector<f64>> {
    let n = flow.num_nodes();
    let mut sys = linalg::identity_minus(flow.matrix());
    for c in 0..n {
        sys[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    linalg::solve(&sys, &rhs, "stationary distribution")
}

/// Residual diagnostics attached to every solved equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResiduals {
    /// `max_j |v_j - a₀_j - a₀_j Σ ε_i v_i - Σ_i a_ij v_i|`.
    pub balance: f64,
    /// `|Σ_i a_i0 v_i - 1|`.
    pub labor: f64,
    /// `max_j |Σ_k x_kj - y_j| / y_j` over goods and labor.
    pub market_clearing: f64,
    /// `max_i |log y_i - log f_i(x_i)|`, checks prices against technologies.
    pub production: f64,
}

/// Output of the general-equilibrium solver, with `p₀ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub revenues: Vec<f64>,
    pub household_revenue: f64,
    pub prices: Vec<f64>,
    pub outputs: Vec<f64>,
    /// `(m+1) × (m+1)`, row = buyer (0 household), column = good (0 labor).
    pub allocation: Vec<Vec<f64>>,
    pub profits: Vec<f64>,
    /// Exact log-welfare of the household.
    pub log_welfare: f64,
    /// Simplified welfare `a₀ᵀ (I - A)^{-1} u`.
    pub welfare: f64,
    pub residuals: EquilibriumResiduals,
}

/// Equilibrium revenues `v = (I - Ã_M)^{-1} a₀`.
pub fn equilibrium_revenues(econ: &EconomySpec, net: &ProductionNetwork) -> Result<DVector<f64>> {
    let flow = flow_matrix_unchecked(econ, net);
    let block = flow.firm_block();
    linalg::solve(
        &linalg::identity_minus(&block),
        &econ.consumption_vector(),
        "I - Ã_M",
    )
}

pub fn solve_equilibrium(econ: &EconomySpec, net: &ProductionNetwork) -> Result<EquilibriumResult> {
    solve_equilibrium_shifted(econ, net, None)
}

/// Solves the equilibrium with productivities scaled by `exp(log_shift_i)`.
/// Used for disruption scenarios.
pub fn solve_equilibrium_shifted(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    log_shift: Option<&[f64]>,
) -> Result<EquilibriumResult> {
    net.check_admissible(econ)?;
    let report = validate_assumptions(econ, net)?;
    if !report.ergodic {
        return Err(ModelError::NotErgodic {
            strongly_connected: report.strongly_connected,
            period: report.period,
        });
    }
    let m = econ.num_firms();
    let a0 = econ.consumption();
    let eps = econ.epsilons();
    let a = net.shares();

    let v = equilibrium_revenues(econ, net)?;
    let household_revenue = 1.0 + (0..m).map(|i| eps[i] * v[i]).sum::<f64>();

    let u = entropy_corrected_productivity(econ, net, log_shift);
    let ima = linalg::identity_minus(a);
    let rhs = DVector::from_fn(m, |i, _| eps[i] * v[i].ln() - u[i]);
    let log_p = linalg::solve(&ima, &rhs, "I - A")?;
    let prices: Vec<f64> = log_p.iter().map(|x| x.exp()).collect();
    let outputs: Vec<f64> = (0..m).map(|i| v[i] / prices[i]).collect();

    let mut allocation = vec![vec![0.0; m + 1]; m + 1];
    for j in 0..m {
        allocation[0][j + 1] = a0[j] * household_revenue / prices[j];
    }
    for i in 0..m {
        allocation[i + 1][0] = econ.labor_share(i) * v[i];
        for j in 0..m {
            allocation[i + 1][j + 1] = a[(i, j)] * v[i] / prices[j];
        }
    }
    let profits: Vec<f64> = (0..m).map(|i| eps[i] * v[i]).collect();

    let mut balance: f64 = 0.0;
    for j in 0..m {
        let inflow = a0[j] * household_revenue + (0..m).map(|i| a[(i, j)] * v[i]).sum::<f64>();
        balance = balance.max((v[j] - inflow).abs());
    }
    let labor = ((0..m).map(|i| econ.labor_share(i) * v[i]).sum::<f64>() - 1.0).abs();
    let mut market_clearing: f64 = 0.0;
    for j in 0..=m {
        let demand: f64 = (0..=m).map(|k| allocation[k][j]).sum();
        let supply = if j == 0 { 1.0 } else { outputs[j - 1] };
        market_clearing = market_clearing.max((demand - supply).abs() / supply);
    }
    let mut production: f64 = 0.0;
    for i in 0..m {
        let shift = log_shift.map_or(0.0, |s| s[i]);
        let mut log_f = econ.productivity().log_productivity(i, &net.row(i)) + shift;
        let labor_share = econ.labor_share(i);
        if labor_share > 0.0 {
            log_f += labor_share * allocation[i + 1][0].ln();
        }
        for j in 0..m {
            if a[(i, j)] > 0.0 {
                log_f += a[(i, j)] * allocation[i + 1][j + 1].ln();
            }
        }
        production = production.max((outputs[i].ln() - log_f).abs());
    }

    let gateway = gateway_weights(econ, net)?;
    let welfare = gateway.dot(&u);
    let log_v = v.map(f64::ln);
    let d_log_v: f64 = (0..m).map(|i| gateway[i] * (-eps[i]) * log_v[i]).sum();
    let entropy0: f64 = a0.iter().map(|&x| xlogx(x)).sum();
    let log_welfare = household_revenue.ln() + entropy0 + welfare + d_log_v;

    Ok(EquilibriumResult {
        revenues: v.iter().copied().collect(),
        household_revenue,
        prices,
        outputs,
        allocation,
        profits,
        log_welfare,
        welfare,
        residuals: EquilibriumResiduals {
            balance,
            labor,
            market_clearing,
            production,
        },
    })
}

/// `u_i = log λ_i(a_i) + Σ_{j∈N} a_ij log a_ij` (+ optional log shift).
pub fn entropy_corrected_productivity(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    log_shift: Option<&[f64]>,
) -> DVector<f64> {
    let m = econ.num_firms();
    DVector::from_fn(m, |i, _| {
        let row = net.row(i);
        let entropy: f64 = row.iter().map(|&x| xlogx(x)).sum::<f64>() + xlogx(econ.labor_share(i));
        econ.productivity().log_productivity(i, &row) + entropy + log_shift.map_or(0.0, |s| s[i])
    })
}

/// Gateway weights `g = (I - A)^{-ᵀ} a₀`, i.e. `gᵀ = a₀ᵀ (I - A)^{-1}`.
pub fn gateway_weights(econ: &EconomySpec, net: &ProductionNetwork) -> Result<DVector<f64>> {
    let ima_t = linalg::identity_minus(net.shares()).transpose();
    linalg::solve(&ima_t, &econ.consumption_vector(), "(I - A)ᵀ")
}

/// Simplified welfare `W = a₀ᵀ (I - A)^{-1} u`.
pub fn simplified_welfare(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    log_shift: Option<&[f64]>,
) -> Result<f64> {
    net.check_shape(econ)?;
    let g = gateway_weights(econ, net)?;
    Ok(g.dot(&entropy_corrected_productivity(econ, net, log_shift)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareReport {
    pub entropy_corrected: Vec<f64>,
    /// Diagonal of `D = diag(Σ_j a_ij - 1) = -ε`.
    pub returns_diagonal: Vec<f64>,
    pub gateway: Vec<f64>,
    /// Closed form with the household-revenue constant.
    pub log_welfare: f64,
    /// `Σ_j a₀_j log x̄_0j` evaluated from the allocation.
    pub log_welfare_direct: f64,
    pub welfare: f64,
    /// `log v₀ + Σ a₀ log a₀`.
    pub constant_household_revenue: f64,
    /// `log p₀ + Σ a₀ log a₀` with `p₀ = 1`.
    pub constant_labor_price: f64,
}

pub fn compute_welfare(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    eq: &EquilibriumResult,
) -> Result<WelfareReport> {
    net.check_admissible(econ)?;
    let m = econ.num_firms();
    let a0 = econ.consumption();
    let u = entropy_corrected_productivity(econ, net, None);
    let g = gateway_weights(econ, net)?;
    let eps = econ.epsilons();
    let entropy0: f64 = a0.iter().map(|&x| xlogx(x)).sum();
    let welfare = g.dot(&u);
    let d_log_v: f64 = (0..m).map(|i| -g[i] * eps[i] * eq.revenues[i].ln()).sum();
    let constant_household_revenue = eq.household_revenue.ln() + entropy0;
    let log_welfare_direct: f64 = (0..m)
        .filter(|&j| a0[j] > 0.0)
        .map(|j| a0[j] * eq.allocation[0][j + 1].ln())
        .sum();
    Ok(WelfareReport {
        entropy_corrected: u.iter().copied().collect(),
        returns_diagonal: eps.iter().map(|e| -e).collect(),
        gateway: g.iter().copied().collect(),
        log_welfare: constant_household_revenue + welfare + d_log_v,
        log_welfare_direct,
        welfare,
        constant_household_revenue,
        constant_labor_price: entropy0,
    })
}

/// A partial derivative that may be infinite at a zero share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Partial {
    Finite(f64),
    NegInfinite,
    PosInfinite,
}

impl Partial {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Self::Finite(x) => Some(*x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkGradient {
    pub firm: usize,
    pub supplier: usize,
    pub category: usize,
    pub share: f64,
    /// `a₀ᵀ R U_ij R u + a₀ᵀ R u_ij` with `R = (I - A)^{-1}`.
    pub resolvent_form: Partial,
    /// `P_0i (Σ_k P_jk u_k + ∂u_i/∂a_ij)` from walk tables of `A`.
    pub walk_form: Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryKkt {
    pub firm: usize,
    pub category: usize,
    /// Spread of partials over suppliers with positive share.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub links: Vec<LinkGradient>,
    pub kkt: Vec<CategoryKkt>,
    /// Largest gap between the two derivative routes over finite partials.
    pub max_route_gap: f64,
}

/// Partial derivatives of `W` with respect to each supplier share that a firm
/// is required to choose, and the per-category first-order residuals.
pub fn welfare_first_order(econ: &EconomySpec, net: &ProductionNetwork) -> Result<GradientReport> {
    net.check_admissible(econ)?;
    let m = econ.num_firms();
    let a = net.shares();
    let u = entropy_corrected_productivity(econ, net, None);
    let resolvent = linalg::inverse(&linalg::identity_minus(a), "I - A")?;
    let a0 = econ.consumption_vector();
    // Route 1: a₀ᵀ R e_i e_jᵀ R u splits into a product.
    let left = resolvent.transpose() * &a0;
    let right = &resolvent * &u;

    // Route 2: walk tables of A read as a transition matrix.
    let walks = crate::walks::walk_tables_for_transition(a, &a0)?;

    let theta = econ.productivity().entropy_sensitivity();
    let cats = econ.categories();
    let mut links = Vec::new();
    let mut kkt = Vec::new();
    let mut max_route_gap: f64 = 0.0;
    for i in 0..m {
        for l in 1..=econ.num_categories() {
            if econ.requirement(i, l) <= 0.0 {
                continue;
            }
            let mut positive = Vec::new();
            for j in cats.firms_in(l) {
                let share = a[(i, j)];
                let (resolvent_form, walk_form) = if share > 0.0 {
                    let du = (1.0 - theta) * (share.ln() + 1.0);
                    let r1 = left[i] * right[j] + left[i] * du;
                    let reach: f64 = (0..m).map(|k| walks.total[(j, k)] * u[k]).sum();
                    let r2 = walks.household[i] * (reach + du);
                    max_route_gap = max_route_gap.max((r1 - r2).abs());
                    positive.push(r1);
                    (Partial::Finite(r1), Partial::Finite(r2))
                } else {
                    let coef = (1.0 - theta) * left[i];
                    let p = if coef > 0.0 {
                        Partial::NegInfinite
                    } else if coef < 0.0 {
                        Partial::PosInfinite
                    } else {
                        Partial::Finite(left[i] * right[j])
                    };
                    (p, p)
                };
                links.push(LinkGradient {
                    firm: i,
                    supplier: j,
                    category: l,
                    share,
                    resolvent_form,
                    walk_form,
                });
            }
            let residual = if positive.is_empty() {
                0.0
            } else {
                positive.iter().copied().fold(f64::MIN, f64::max)
                    - positive.iter().copied().fold(f64::MAX, f64::min)
            };
            kkt.push(CategoryKkt {
                firm: i,
                category: l,
                residual,
            });
        }
    }
    Ok(GradientReport {
        links,
        kkt,
        max_route_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn inst_a_flow_matrix_and_equilibrium() {
        let (econ, net) = instances::inst_a();
        let flow = build_flow_matrix(&econ, &net).unwrap();
        let t = flow.matrix();
        assert!((t[(0, 0)] - 0.0).abs() < 1e-15);
        assert!((t[(0, 1)] - 0.6).abs() < 1e-15);
        assert!((t[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((t[(1, 1)] - 0.4).abs() < 1e-15);
        let eq = solve_equilibrium(&econ, &net).unwrap();
        assert!((eq.revenues[0] - 5.0 / 3.0).abs() < 1e-12);
        assert!((eq.profits[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((eq.household_revenue - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inst_a_assumptions() {
        let (econ, net) = instances::inst_a();
        let r = validate_assumptions(&econ, &net).unwrap();
        assert!(r.household_consumes_all);
        assert!(r.all_firms_use_labor);
        assert!(!r.some_intermediate_input);
        assert!(r.ergodic && r.solver_eligible());
        assert!(!r.assumptions_hold());
    }

    #[test]
    fn inst_b_assumptions_and_solution() {
        let (econ, net) = instances::inst_b();
        let r = validate_assumptions(&econ, &net).unwrap();
        assert!(r.assumptions_hold() && r.ergodic);
        let eq = solve_equilibrium(&econ, &net).unwrap();
        assert!((eq.revenues[0] - 1.0).abs() < 1e-12);
        assert!((eq.revenues[1] - 1.0).abs() < 1e-12);
        assert!(eq.profits.iter().all(|p| p.abs() < 1e-15));
        let expected = 2.0 * (0.5 * 0.5f64.ln() + 0.2 * 0.2f64.ln() + 0.3 * 0.3f64.ln());
        assert!((eq.welfare - expected).abs() < 1e-12);
        assert!((eq.welfare - (-2.05930)).abs() < 1e-5);
    }

    #[test]
    fn household_must_consume_everything_for_condition_one() {
        let cats = CategoryMap::new(2, vec![1, 2]).unwrap();
        let b = DMatrix::from_row_slice(2, 3, &[0.5, 0.2, 0.3, 0.5, 0.3, 0.2]);
        let econ = EconomySpec::new(vec![1.0, 0.0], b, ProductivityModel::constant(2, 1.0), cats)
            .unwrap();
        let net = ProductionNetwork::uniform(&econ);
        let r = validate_assumptions(&econ, &net).unwrap();
        assert!(!r.household_consumes_all);
    }

    #[test]
    fn negative_shares_and_shape_errors() {
        let cats = CategoryMap::new(1, vec![1]).unwrap();
        let b = DMatrix::from_row_slice(1, 2, &[-0.1, 0.5]);
        let err = EconomySpec::new(vec![1.0], b, ProductivityModel::HicksNeutral, cats.clone());
        assert!(matches!(err, Err(ModelError::NegativeShare { .. })));
        let b = DMatrix::from_row_slice(1, 3, &[0.5, 0.1, 0.1]);
        let err = EconomySpec::new(vec![1.0], b, ProductivityModel::HicksNeutral, cats);
        assert!(matches!(err, Err(ModelError::Dimension(_))));
        assert!(ProductionNetwork::from_rows(&[vec![-0.2]]).is_err());
    }

    #[test]
    fn inadmissible_network_is_rejected() {
        let (econ, _) = instances::inst_b();
        let bad = ProductionNetwork::from_rows(&[vec![0.2, 0.2], vec![0.3, 0.2]]).unwrap();
        assert!(matches!(
            build_flow_matrix(&econ, &bad),
            Err(ModelError::Inadmissible(_))
        ));
    }

    #[test]
    fn non_ergodic_chain_is_refused() {
        // Firm 2 is never bought: the household does not consume it and
        // firm 1 does not source from it.
        let cats = CategoryMap::new(2, vec![1, 2]).unwrap();
        let b = DMatrix::from_row_slice(2, 3, &[0.6, 0.4, 0.0, 0.6, 0.2, 0.2]);
        let econ = EconomySpec::new(vec![1.0, 0.0], b, ProductivityModel::constant(2, 1.0), cats)
            .unwrap();
        let net = ProductionNetwork::uniform(&econ);
        let r = validate_assumptions(&econ, &net).unwrap();
        assert!(!r.strongly_connected);
        assert!(matches!(
            solve_equilibrium(&econ, &net),
            Err(ModelError::NotErgodic { .. })
        ));
    }

    #[test]
    fn periodic_chain_is_detected() {
        // Household -> firm -> household with no self-loop or profit leak.
        let cats = CategoryMap::new(1, vec![1]).unwrap();
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let econ =
            EconomySpec::new(vec![1.0], b, ProductivityModel::constant(1, 1.0), cats).unwrap();
        let net = ProductionNetwork::uniform(&econ);
        let r = validate_assumptions(&econ, &net).unwrap();
        assert!(r.strongly_connected);
        assert_eq!(r.period, 2);
        assert!(!r.ergodic);
    }

    #[test]
    fn hicks_neutral_u_is_labor_entropy() {
        let (econ, _) = instances::inst_b2(0.0);
        let econ = econ.economy().with_productivity(ProductivityModel::HicksNeutral).unwrap();
        let net = ProductionNetwork::uniform(&econ);
        let u = entropy_corrected_productivity(&econ, &net, None);
        for i in 0..econ.num_firms() {
            let b0 = econ.labor_share(i);
            assert!((u[i] - b0 * b0.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn price_system_matches_production_functions() {
        let (econ, net) = instances::inst_a();
        let eq = solve_equilibrium(&econ, &net).unwrap();
        // Single firm, labor only: y = λ x_10^{0.6}, p = v / y.
        let x10 = 0.6 * eq.revenues[0];
        let y = x10.powf(0.6);
        assert!((eq.outputs[0] - y).abs() < 1e-12);
        assert!(eq.residuals.production < 1e-12);
    }

    #[test]
    fn inst_a_welfare_routes_agree() {
        let (econ, net) = instances::inst_a();
        let eq = solve_equilibrium(&econ, &net).unwrap();
        let w = compute_welfare(&econ, &net, &eq).unwrap();
        assert!((w.log_welfare - w.log_welfare_direct).abs() < 1e-10);
        assert!((w.log_welfare - eq.log_welfare).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_constant_gap() {
        let (econ, net) = instances::inst_b();
        let eq = solve_equilibrium(&econ, &net).unwrap();
        let w = compute_welfare(&econ, &net, &eq).unwrap();
        let expected = 0.5f64.ln();
        assert!((w.log_welfare - w.welfare - expected).abs() < 1e-10);
        assert!((w.constant_labor_price - expected).abs() < 1e-15);
    }

    #[test]
    fn gradient_routes_agree_on_inst_b() {
        let (econ, net) = instances::inst_b();
        let g = welfare_first_order(&econ, &net).unwrap();
        assert!(g.max_route_gap < 1e-12);
        // One supplier per category: residuals vanish.
        assert!(g.kkt.iter().all(|k| k.residual.abs() < 1e-12));
    }

    #[test]
    fn zero_share_partial_is_flagged() {
        let (rep, _) = instances::inst_b2(0.0);
        let q = crate::partition::Partition::islands(2);
        let cs = crate::replicate::build_clustered_network(&rep, &q).unwrap();
        let g = welfare_first_order(rep.economy(), &cs.network).unwrap();
        let zero = g.links.iter().find(|l| l.share == 0.0).unwrap();
        assert_eq!(zero.resolvent_form, Partial::NegInfinite);
        assert!(g.kkt.iter().all(|k| k.residual.abs() < 1e-9));
    }

    #[test]
    fn profit_share_rescaling() {
        let (econ, _) = instances::inst_b();
        let e = econ.with_profit_share(1e-3).unwrap();
        for i in 0..2 {
            assert!((e.epsilon(i) - 1e-3).abs() < 1e-15);
            let before = econ.requirement(i, 1) / econ.requirement(i, 2);
            assert!((e.requirement(i, 1) / e.requirement(i, 2) - before).abs() < 1e-12);
        }
        assert!(econ.with_profit_share(1.0).is_err());
    }

    #[test]
    fn rescaled_network_keeps_supplier_split() {
        let (rep, islands) = instances::inst_b2(0.0);
        let from = rep.economy();
        let to = from.with_profit_share(1e-3).unwrap();
        let mut row = islands.row(0);
        row[3] = row[2] * 0.25;
        row[2] *= 0.75;
        let net = islands.with_row(0, &row).unwrap();
        let moved = net.rescaled(from, &to).unwrap();
        assert!((moved.share(0, 2) / moved.share(0, 3) - 3.0).abs() < 1e-12);
        moved.check_admissible(&to).unwrap();
        assert!(net.rescaled(&to, from).is_err());
    }
}
