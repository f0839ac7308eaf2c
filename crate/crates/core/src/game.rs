//! Best responses, Nash checks, best-response dynamics and the tree-weight
//! potential of the network formation game.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::economy::{self, EconomySpec, ProductionNetwork};
use crate::error::{ModelError, Result};
use crate::linalg;
use crate::oracles;
use crate::walks::{self, WalkTables};

/// Game operations need strictly positive profits to rank strategies.
pub const MIN_PROFIT_SHARE: f64 = 1e-6;
/// Relative tolerance under which two coefficients count as tied.
pub const TIE_TOL: f64 = 1e-12;
pub const DEFAULT_NASH_TOL: f64 = 1e-9;
pub const DEFAULT_TREE_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    UniformOverArgmax,
    /// Keep the incumbent split when it already sits on the argmax set.
    #[default]
    KeepCurrent,
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "seed")]
pub enum Schedule {
    RoundRobin,
    /// A fresh random firm order every round.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryChoice {
    pub category: usize,
    pub suppliers: Vec<usize>,
    /// Coefficient of each supplier: 1 for the firm itself, `D_ki` otherwise.
    pub coefficients: Vec<f64>,
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponseResult {
    pub firm: usize,
    pub row: Vec<f64>,
    pub categories: Vec<CategoryChoice>,
    pub profit: f64,
    pub incumbent_profit: f64,
}

impl BestResponseResult {
    pub fn gain(&self) -> f64 {
        self.profit - self.incumbent_profit
    }
}

fn check_firm(econ: &EconomySpec, firm: usize) -> Result<()> {
    let m = econ.num_firms();
    if firm >= m {
        return Err(ModelError::FirmOutOfRange { firm, m });
    }
    Ok(())
}

fn check_profit_share(econ: &EconomySpec, firm: usize) -> Result<()> {
    let epsilon = econ.epsilon(firm);
    if epsilon < MIN_PROFIT_SHARE {
        return Err(ModelError::Degenerate {
            firm,
            epsilon,
            minimum: MIN_PROFIT_SHARE,
        });
    }
    Ok(())
}

/// Profit of firm `i` if it switched to `row`, using the direct-walk column of
/// `i` (which the switch leaves untouched).
fn profit_with_row(econ: &EconomySpec, tables: &WalkTables, i: usize, row: &[f64]) -> f64 {
    let a0 = econ.consumption();
    let eps = econ.epsilon(i);
    let mut t = tables.transition.clone();
    for (k, &a) in row.iter().enumerate() {
        t[(i, k)] = a + eps * a0[k];
    }
    eps * walks::ratio_numerator(a0, &tables.direct, i) / walks::ratio_denominator(&t, &tables.direct, i)
}

pub fn best_response(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    firm: usize,
    tie: TiePolicy,
) -> Result<BestResponseResult> {
    check_firm(econ, firm)?;
    check_profit_share(econ, firm)?;
    net.check_admissible(econ)?;
    let tables = walks::walk_tables(econ, net)?;
    Ok(best_response_from_tables(econ, net, &tables, firm, tie))
}

fn best_response_from_tables(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    tables: &WalkTables,
    i: usize,
    tie: TiePolicy,
) -> BestResponseResult {
    let m = econ.num_firms();
    let current = net.row(i);
    let mut row = vec![0.0; m];
    let mut categories = Vec::new();
    for l in 1..=econ.num_categories() {
        let budget = econ.requirement(i, l);
        let suppliers = econ.categories().firms_in(l);
        if budget <= 0.0 || suppliers.is_empty() {
            continue;
        }
        let coefficients: Vec<f64> = suppliers
            .iter()
            .map(|&k| if k == i { 1.0 } else { tables.direct[(k, i)] })
            .collect();
        let best = coefficients.iter().copied().fold(f64::MIN, f64::max);
        let cutoff = best - TIE_TOL * best.abs().max(1.0);
        let argmax: Vec<usize> = suppliers
            .iter()
            .zip(&coefficients)
            .filter(|(_, &c)| c >= cutoff)
            .map(|(&k, _)| k)
            .collect();
        let on_argmax: f64 = argmax.iter().map(|&k| current[k]).sum();
        let keep = tie == TiePolicy::KeepCurrent && (on_argmax - budget).abs() <= economy::SHARE_TOL;
        if keep {
            for &k in &suppliers {
                row[k] = if argmax.contains(&k) { current[k] } else { 0.0 };
            }
        } else if tie == TiePolicy::LowestIndex {
            row[argmax[0]] = budget;
        } else {
            let share = budget / argmax.len() as f64;
            for &k in &argmax {
                row[k] = share;
            }
        }
        categories.push(CategoryChoice {
            category: l,
            suppliers,
            coefficients,
            argmax,
        });
    }
    let profit = profit_with_row(econ, tables, i, &row);
    let incumbent_profit = econ.epsilon(i) * tables.household[i];
    BestResponseResult {
        firm: i,
        row,
        categories,
        profit,
        incumbent_profit,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport {
    pub is_nash: bool,
    pub worst_firm: Option<usize>,
    pub max_gain: f64,
    pub tolerance: f64,
    pub gains: Vec<f64>,
}

pub fn is_nash(econ: &EconomySpec, net: &ProductionNetwork, tol: f64) -> Result<NashReport> {
    net.check_admissible(econ)?;
    let m = econ.num_firms();
    for i in 0..m {
        check_profit_share(econ, i)?;
    }
    let tables = walks::walk_tables(econ, net)?;
    let gains: Vec<f64> = (0..m)
        .map(|i| best_response_from_tables(econ, net, &tables, i, TiePolicy::KeepCurrent).gain())
        .collect();
    let (worst_firm, max_gain) = gains
        .iter()
        .enumerate()
        .fold((None, f64::MIN), |(bi, bg), (i, &g)| {
            if g > bg {
                (Some(i), g)
            } else {
                (bi, bg)
            }
        });
    let max_gain = if m == 0 { 0.0 } else { max_gain };
    Ok(NashReport {
        is_nash: max_gain <= tol,
        worst_firm,
        max_gain,
        tolerance: tol,
        gains,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsRound {
    pub order: Vec<usize>,
    pub changed_rows: usize,
    /// Largest entry change over the round.
    pub max_change: f64,
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsResult {
    pub terminal: ProductionNetwork,
    pub converged: bool,
    pub initial_potential: f64,
    pub rounds: Vec<DynamicsRound>,
    /// Potential never fell by more than a relative `1e-12` after any move.
    pub potential_monotone: bool,
}

pub fn best_response_dynamics(
    econ: &EconomySpec,
    start: &ProductionNetwork,
    schedule: Schedule,
    max_rounds: usize,
    tol: f64,
) -> Result<DynamicsResult> {
    start.check_admissible(econ)?;
    let m = econ.num_firms();
    for i in 0..m {
        check_profit_share(econ, i)?;
    }
    let mut rng = match schedule {
        Schedule::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Schedule::RoundRobin => None,
    };
    let mut net = start.clone();
    let initial_potential = potential(econ, &net)?;
    let mut last = initial_potential;
    let mut monotone = true;
    let mut rounds = Vec::new();
    let mut converged = false;
    for _ in 0..max_rounds {
        let mut order: Vec<usize> = (0..m).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut changed_rows = 0;
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let tables = walks::walk_tables(econ, &net)?;
            let br = best_response_from_tables(econ, &net, &tables, i, TiePolicy::KeepCurrent);
            let old = net.row(i);
            let change = linalg::max_abs_diff(&old, &br.row);
            if change > tol {
                changed_rows += 1;
            }
            max_change = max_change.max(change);
            if change > 0.0 {
                net = net.with_row(i, &br.row)?;
            }
            let phi = potential(econ, &net)?;
            if phi < last - 1e-12 * last.abs().max(1.0) {
                monotone = false;
            }
            last = phi;
        }
        rounds.push(DynamicsRound {
            order,
            changed_rows,
            max_change,
            potential: last,
        });
        if max_change <= tol {
            converged = true;
            break;
        }
    }
    Ok(DynamicsResult {
        terminal: net,
        converged,
        initial_potential,
        rounds,
        potential_monotone: monotone,
    })
}

/// Ordinal potential `1 / det(I - T)`, the reciprocal of the household-rooted
/// tree weight.
pub fn potential(econ: &EconomySpec, net: &ProductionNetwork) -> Result<f64> {
    let t = walks::transition_matrix(econ, net);
    let w0 = linalg::determinant(&linalg::identity_minus(&t));
    if !(w0 > 0.0) {
        return Err(ModelError::Singular("I - T has non-positive determinant".into()));
    }
    Ok(1.0 / w0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialReport {
    /// `w(T_r)` for every node `r` of `N`, household first.
    pub tree_weights: Vec<f64>,
    /// Same weights by explicit enumeration, when the node count allows it.
    pub enumerated_weights: Option<Vec<f64>>,
    pub enumeration_gap: Option<f64>,
    /// `1 / w(T_0)`.
    pub potential: f64,
    /// `1 / Σ_r w(T_r)`, reported for comparison.
    pub tree_sum_potential: f64,
    pub stationary: Vec<f64>,
    /// `max_r |μ_r - w(T_r) / Σ w|`.
    pub tree_theorem_gap: f64,
    /// Tree weights on the firm nodes alone, steps into the household dropped.
    pub firm_only_weights: Vec<f64>,
}

pub fn potential_value(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    enumeration_cap: usize,
) -> Result<PotentialReport> {
    let report = economy::validate_assumptions(econ, net)?;
    if !report.ergodic {
        return Err(ModelError::NotErgodic {
            strongly_connected: report.strongly_connected,
            period: report.period,
        });
    }
    let flow = economy::build_flow_matrix(econ, net)?;
    let tree_weights = tree_weights_by_determinant(&flow.transition());
    let total: f64 = tree_weights.iter().sum();
    let stationary = economy::stationary_distribution(&flow)?;
    let tree_theorem_gap = tree_weights
        .iter()
        .zip(stationary.iter())
        .map(|(w, mu)| (w / total - mu).abs())
        .fold(0.0, f64::max);
    let enumerated_weights = if flow.num_nodes() <= enumeration_cap.min(oracles::MAX_TREE_NODES) {
        Some(oracles::tree_enumeration_oracle(&flow, enumeration_cap)?)
    } else {
        None
    };
    let enumeration_gap = enumerated_weights
        .as_ref()
        .map(|e| linalg::max_abs_diff(e, &tree_weights));
    let t = walks::transition_matrix(econ, net);
    let firm_only_weights = tree_weights_by_determinant(&t);
    Ok(PotentialReport {
        potential: 1.0 / tree_weights[0],
        tree_sum_potential: 1.0 / total,
        tree_weights,
        enumerated_weights,
        enumeration_gap,
        stationary: stationary.iter().copied().collect(),
        tree_theorem_gap,
        firm_only_weights,
    })
}

/// Rooted in-tree weights by the all-minors matrix-tree theorem on the
/// out-degree Laplacian of a (sub)stochastic step matrix.
pub fn tree_weights_by_determinant(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut lap = -p.clone();
    for h in 0..n {
        let out: f64 = (0..n).filter(|&k| k != h).map(|k| p[(h, k)]).sum();
        lap[(h, h)] = out;
    }
    (0..n)
        .map(|r| linalg::determinant(&linalg::principal_minor(&lap, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::partition::Partition;
    use crate::replicate;

    #[test]
    fn inst_a_tree_weights() {
        let (econ, net) = instances::inst_a();
        let r = potential_value(&econ, &net, DEFAULT_TREE_CAP).unwrap();
        assert!((r.tree_weights[0] - 0.6).abs() < 1e-12);
        assert!((r.tree_weights[1] - 1.0).abs() < 1e-12);
        assert!((r.stationary[0] - 0.375).abs() < 1e-12);
        assert!((r.stationary[1] - 0.625).abs() < 1e-12);
        assert!(r.tree_theorem_gap < 1e-12);
        assert!(r.enumeration_gap.unwrap() < 1e-12);
        assert!((r.stationary[1] / r.stationary[0] - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn islands_are_nash_and_keep_own_supply() {
        let (rep, _) = instances::inst_b2(1e-3);
        let net = replicate::build_clustered_network(&rep, &Partition::islands(2))
            .unwrap()
            .network;
        let econ = rep.economy();
        let rep_nash = is_nash(econ, &net, DEFAULT_NASH_TOL).unwrap();
        assert!(rep_nash.is_nash, "{rep_nash:?}");
        let br = best_response(econ, &net, 0, TiePolicy::UniformOverArgmax).unwrap();
        assert_eq!(br.row[0], econ.requirement(0, 1));
        // Firm 0 (category 1, country 1) picks its category-2 supplier:
        // firm 2 is in the same country, firm 3 is abroad.
        let g2 = br.categories.iter().find(|c| c.category == 2).unwrap();
        assert!(g2.coefficients[0] > g2.coefficients[1]);
        assert!((br.row[2] - econ.requirement(0, 2)).abs() < 1e-15);
        assert_eq!(br.row[3], 0.0);
    }

    #[test]
    fn one_cross_country_link_breaks_nash() {
        let (rep, _) = instances::inst_b2(1e-3);
        let econ = rep.economy();
        let islands = replicate::build_clustered_network(&rep, &Partition::islands(2))
            .unwrap()
            .network;
        let mut row = islands.row(0);
        row.swap(2, 3);
        let net = islands.with_row(0, &row).unwrap();
        let r = is_nash(econ, &net, DEFAULT_NASH_TOL).unwrap();
        assert!(!r.is_nash);
        assert_eq!(r.worst_firm, Some(0));
        assert!(r.max_gain > 0.0);
    }

    #[test]
    fn exact_replicas_tie_and_split() {
        // Firm 0 buys category 2 from two identical firms.
        let cats = economy::CategoryMap::new(2, vec![1, 2, 2]).unwrap();
        let b = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.0, 0.4, 0.6, 0.0, 0.3, 0.6, 0.0, 0.3],
        );
        let econ = EconomySpec::new(
            vec![0.4, 0.3, 0.3],
            b,
            economy::ProductivityModel::constant(3, 1.0),
            cats,
        )
        .unwrap();
        let net = ProductionNetwork::from_rows(&[
            vec![0.0, 0.4, 0.0],
            vec![0.0, 0.3, 0.0],
            vec![0.0, 0.0, 0.3],
        ])
        .unwrap();
        let sym = ProductionNetwork::from_rows(&[
            vec![0.0, 0.2, 0.2],
            vec![0.0, 0.3, 0.0],
            vec![0.0, 0.0, 0.3],
        ])
        .unwrap();
        let br = best_response(&econ, &sym, 0, TiePolicy::UniformOverArgmax).unwrap();
        assert!((br.row[1] - 0.2).abs() < 1e-15 && (br.row[2] - 0.2).abs() < 1e-15);
        let low = best_response(&econ, &sym, 0, TiePolicy::LowestIndex).unwrap();
        assert_eq!(low.row, vec![0.0, 0.4, 0.0]);
        let keep = best_response(&econ, &net, 0, TiePolicy::KeepCurrent).unwrap();
        assert_eq!(keep.row, vec![0.0, 0.4, 0.0]);
    }

    #[test]
    fn degenerate_profit_share_is_rejected() {
        let (econ, net) = instances::inst_b();
        assert!(matches!(
            best_response(&econ, &net, 0, TiePolicy::KeepCurrent),
            Err(ModelError::Degenerate { .. })
        ));
        assert!(matches!(
            best_response(&econ, &net, 7, TiePolicy::KeepCurrent),
            Err(ModelError::FirmOutOfRange { .. })
        ));
    }

    #[test]
    fn simple_game_is_trivially_nash() {
        let (rep, _) = instances::inst_b2(1e-3);
        let base = rep.base().clone();
        let net = ProductionNetwork::uniform(&base);
        assert!(is_nash(&base, &net, DEFAULT_NASH_TOL).unwrap().is_nash);
    }

    #[test]
    fn dynamics_from_full_connection_reach_nash() {
        let (rep, _) = instances::inst_b2(1e-3);
        let econ = rep.economy();
        let start = ProductionNetwork::uniform(econ);
        let d = best_response_dynamics(econ, &start, Schedule::RoundRobin, 50, 1e-12).unwrap();
        assert!(d.converged);
        assert!(d.rounds.len() <= econ.num_firms());
        assert!(d.potential_monotone);
        assert!(is_nash(econ, &d.terminal, DEFAULT_NASH_TOL).unwrap().is_nash);
    }

    #[test]
    fn clustered_start_is_a_fixed_point() {
        let (rep, _) = instances::inst_b2(1e-3);
        let econ = rep.economy();
        for q in crate::partition::all_partitions(2) {
            let net = replicate::build_clustered_network(&rep, &q).unwrap().network;
            let d = best_response_dynamics(econ, &net, Schedule::Random(3), 10, 1e-12).unwrap();
            assert!(d.converged);
            assert_eq!(d.rounds[0].changed_rows, 0);
        }
    }
}
