//! Slow, independent reference computations used to cross-check the primary
//! routes. None of these reuse walk tables or the game engine.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::economy::{self, EconomySpec, FlowMatrix, ProductionNetwork};
use crate::error::{ModelError, Result};
use crate::partition::Partition;
use crate::replicate::{build_clustered_network, ReplicateGame};
use crate::policy::TradePolicy;

pub const MAX_TREE_NODES: usize = 8;
pub const MAX_WALK_LENGTH: usize = 25;
pub const MAX_GRID_POINTS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    pub tree_node_cap: usize,
    pub walk_length_cap: usize,
    pub grid_step: f64,
    pub partition_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tree_node_cap: MAX_TREE_NODES,
            walk_length_cap: MAX_WALK_LENGTH,
            grid_step: 0.05,
            partition_cap: 6,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(ModelError::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if self.tree_node_cap == 0 || self.tree_node_cap > MAX_TREE_NODES {
            return bad("tree_node_cap", "must be in 1..=8");
        }
        if self.walk_length_cap == 0 || self.walk_length_cap > MAX_WALK_LENGTH {
            return bad("walk_length_cap", "must be in 1..=25");
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return bad("grid_step", "must be in (0, 1]");
        }
        if self.partition_cap == 0 {
            return bad("partition_cap", "must be positive");
        }
        Ok(())
    }
}

/// Rooted in-tree weights `w(T_r)` by listing every parent assignment.
/// Steps follow the chain: node `x` moves to `y` with probability
/// `flow[y, x]`.
pub fn tree_enumeration_oracle(flow: &FlowMatrix, cap: usize) -> Result<Vec<f64>> {
    let n = flow.num_nodes();
    let limit = cap.min(MAX_TREE_NODES);
    if n > limit {
        return Err(ModelError::CapExceeded {
            cap: "tree_node_cap",
            value: n,
            limit,
        });
    }
    let step = |x: usize, y: usize| flow.matrix()[(y, x)];
    let mut weights = vec![0.0; n];
    for (root, weight) in weights.iter_mut().enumerate() {
        let others: Vec<usize> = (0..n).filter(|&x| x != root).collect();
        let choices: Vec<Vec<usize>> = others
            .iter()
            .map(|&x| (0..n).filter(|&y| y != x && step(x, y) > 0.0).collect())
            .collect();
        if choices.iter().any(Vec::is_empty) {
            continue;
        }
        let mut parent = vec![usize::MAX; n];
        let mut idx = vec![0usize; others.len()];
        'outer: loop {
            for (k, &x) in others.iter().enumerate() {
                parent[x] = choices[k][idx[k]];
            }
            if reaches_root(&parent, root) {
                *weight += others.iter().map(|&x| step(x, parent[x])).product::<f64>();
            }
            for k in 0..idx.len() {
                idx[k] += 1;
                if idx[k] < choices[k].len() {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
    }
    Ok(weights)
}

fn reaches_root(parent: &[usize], root: usize) -> bool {
    let n = parent.len();
    (0..n).all(|start| {
        let mut x = start;
        for _ in 0..n {
            if x == root {
                return true;
            }
            x = parent[x];
        }
        x == root
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDeviation {
    pub firm: usize,
    pub points: u64,
    pub incumbent_profit: f64,
    pub best_gain: f64,
    pub best_row: Vec<f64>,
    /// Best gain among grid rows that put less than the full own-category
    /// budget on the firm itself; `None` when no such row exists.
    pub best_gain_without_full_self_supply: Option<f64>,
}

/// Exhaustive search over rows whose per-category splits are multiples of
/// `step`, each profit taken from a fresh equilibrium solve.
pub fn grid_deviation_oracle(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    firm: usize,
    step: f64,
) -> Result<GridDeviation> {
    let m = econ.num_firms();
    if firm >= m {
        return Err(ModelError::FirmOutOfRange { firm, m });
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(ModelError::InvalidParameter {
            name: "grid_step",
            reason: format!("{step} not in (0, 1]"),
        });
    }
    let units = (1.0 / step).round() as usize;
    let mut blocks = Vec::new();
    let mut points: u64 = 1;
    for l in 1..=econ.num_categories() {
        let budget = econ.requirement(firm, l);
        let suppliers = econ.categories().firms_in(l);
        if budget <= 0.0 || suppliers.is_empty() {
            continue;
        }
        let splits = compositions(units, suppliers.len());
        points = points.saturating_mul(splits.len() as u64);
        if points > MAX_GRID_POINTS {
            return Err(ModelError::CapExceeded {
                cap: "grid_points",
                value: points.min(usize::MAX as u64) as usize,
                limit: MAX_GRID_POINTS as usize,
            });
        }
        blocks.push((l, budget, suppliers, splits));
    }
    let profit = |row: &[f64]| -> Result<f64> {
        let candidate = net.with_row(firm, row)?;
        let v = economy::equilibrium_revenues(econ, &candidate)?;
        Ok(econ.epsilon(firm) * v[firm])
    };
    let incumbent_profit = profit(&net.row(firm))?;
    let own_category = econ.categories().category(firm);
    let own_budget = econ.requirement(firm, own_category);
    let mut best_gain = f64::MIN;
    let mut best_row = net.row(firm);
    let mut best_short: Option<f64> = None;
    let mut idx = vec![0usize; blocks.len()];
    loop {
        let mut row = vec![0.0; m];
        for (k, (_, budget, suppliers, splits)) in blocks.iter().enumerate() {
            for (s, &j) in suppliers.iter().enumerate() {
                row[j] = budget * splits[idx[k]][s] as f64 / units as f64;
            }
        }
        let gain = profit(&row)? - incumbent_profit;
        if gain > best_gain {
            best_gain = gain;
            best_row = row.clone();
        }
        if own_budget > 0.0 && row[firm] < own_budget * (1.0 - 1e-12) {
            best_short = Some(best_short.map_or(gain, |b: f64| b.max(gain)));
        }
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < blocks[k].3.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }
    Ok(GridDeviation {
        firm,
        points,
        incumbent_profit,
        best_gain,
        best_row,
        best_gain_without_full_self_supply: best_short,
    })
}

/// All ways to write `total` as an ordered sum of `parts` non-negative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Partitions of `{0, .., n-1}` by recursive block insertion, in
/// restricted-growth order.
pub fn partition_enumerator(n: usize, cap: usize) -> Result<Vec<Partition>> {
    if n > cap {
        return Err(ModelError::CapExceeded {
            cap: "partition_cap",
            value: n,
            limit: cap,
        });
    }
    fn extend(prefix: &mut Vec<usize>, blocks: usize, n: usize, out: &mut Vec<Partition>) {
        if prefix.len() == n {
            out.push(Partition::from_labels(prefix.clone()).expect("built in growth order"));
            return;
        }
        for label in 0..=blocks {
            prefix.push(label);
            extend(prefix, blocks.max(label + 1), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), 0, n, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkSums {
    pub total: DMatrix<f64>,
    pub direct: DMatrix<f64>,
    pub max_length: usize,
    /// Bound on the weight of every omitted longer walk, per entry.
    pub tail_bound: f64,
}

/// Walk weights summed length by length up to `max_length`.
///
/// `layer[j][i]` holds the weight of walks of the current length from `j`
/// to `i`; the direct table keeps a second layer where the target may only
/// appear at the end.
pub fn walk_sum_oracle(t: &DMatrix<f64>, max_length: usize) -> Result<WalkSums> {
    if max_length > MAX_WALK_LENGTH {
        return Err(ModelError::CapExceeded {
            cap: "walk_length_cap",
            value: max_length,
            limit: MAX_WALK_LENGTH,
        });
    }
    let m = t.nrows();
    let rate = (0..m).map(|h| t.row(h).sum()).fold(0.0, f64::max);
    let mut total = DMatrix::identity(m, m);
    let mut layer = DMatrix::identity(m, m);
    for _ in 1..=max_length {
        let mut next = DMatrix::zeros(m, m);
        for j in 0..m {
            for k in 0..m {
                let w = t[(j, k)];
                if w == 0.0 {
                    continue;
                }
                for i in 0..m {
                    next[(j, i)] += w * layer[(k, i)];
                }
            }
        }
        total += &next;
        layer = next;
    }
    // Direct walks: avoid[j][i] = weight of walks j -> i of the current
    // length that do not visit i before the end.
    let mut direct = DMatrix::zeros(m, m);
    for i in 0..m {
        // hit[k] = weight of length-len walks from k reaching i first at the end.
        let mut hit = DVector::zeros(m);
        for k in 0..m {
            hit[k] = t[(k, i)];
        }
        let mut acc = hit.clone();
        for _ in 2..=max_length {
            let mut next = DVector::zeros(m);
            for k in 0..m {
                next[k] = (0..m)
                    .filter(|&h| h != i)
                    .map(|h| t[(k, h)] * hit[h])
                    .sum();
            }
            acc += &next;
            hit = next;
        }
        for j in 0..m {
            direct[(j, i)] = acc[j];
        }
    }
    let tail_bound = if rate < 1.0 {
        rate.powi(max_length as i32 + 1) / (1.0 - rate)
    } else {
        f64::INFINITY
    };
    Ok(WalkSums {
        total,
        direct,
        max_length,
        tail_bound,
    })
}

/// Sum of walk weights from `from` to `to` over every explicit step sequence
/// of length at most `max_length`. Exponential; for validating the layered
/// sums on tiny chains.
pub fn explicit_walk_sum(t: &DMatrix<f64>, from: usize, to: usize, max_length: usize) -> f64 {
    fn go(t: &DMatrix<f64>, at: usize, to: usize, left: usize, weight: f64) -> f64 {
        let mut s = if at == to { weight } else { 0.0 };
        if left == 0 {
            return s;
        }
        for k in 0..t.nrows() {
            let w = t[(at, k)];
            if w > 0.0 {
                s += go(t, k, to, left - 1, weight * w);
            }
        }
        s
    }
    go(t, from, to, max_length, 1.0)
}

/// Stationary vector of the flow chain by power iteration.
pub fn power_iteration_stationary(flow: &FlowMatrix, tol: f64, max_iter: usize) -> DVector<f64> {
    let n = flow.num_nodes();
    let a = flow.matrix();
    let mut mu = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iter {
        // Lazy step keeps convergence even for slowly mixing chains.
        let next = (a * &mu + &mu) * 0.5;
        let diff = (&next - &mu).abs().max();
        mu = next;
        if diff < tol {
            break;
        }
    }
    let s = mu.sum();
    mu / s
}

/// Compatible partitions by checking every partition's clustered network.
pub fn brute_force_compatible(
    rep: &ReplicateGame,
    policy: &TradePolicy,
    cap: usize,
) -> Result<Vec<Partition>> {
    let mut out = Vec::new();
    for q in partition_enumerator(rep.n(), cap)? {
        let net = build_clustered_network(rep, &q)?.network;
        let ok = policy.prevented().iter().all(|&(i, j)| net.share(i, j) == 0.0)
            && policy.catalyzed().iter().all(|&(i, j)| net.share(i, j) > 0.0);
        if ok {
            out.push(q);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::partition::bell;

    #[test]
    fn inst_a_trees() {
        let (econ, net) = instances::inst_a();
        let flow = economy::build_flow_matrix(&econ, &net).unwrap();
        let w = tree_enumeration_oracle(&flow, MAX_TREE_NODES).unwrap();
        assert!((w[0] - 0.6).abs() < 1e-15);
        assert!((w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_four_node_chain() {
        let flow = FlowMatrix::from_matrix(DMatrix::from_element(4, 4, 0.25)).unwrap();
        let w = tree_enumeration_oracle(&flow, MAX_TREE_NODES).unwrap();
        for x in &w {
            assert!((x - w[0]).abs() < 1e-15);
        }
        // 16 rooted trees on 4 labelled nodes, each of weight 0.25^3.
        assert!((w[0] - 16.0 * 0.25f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn enumerator_counts() {
        for n in 0..=6 {
            assert_eq!(partition_enumerator(n, 6).unwrap().len() as u64, bell(n));
        }
        assert!(partition_enumerator(7, 6).is_err());
    }

    #[test]
    fn explicit_and_layered_walks_agree() {
        let t = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.1, 0.0, 0.3, 0.2, 0.25, 0.05, 0.1]);
        let layered = walk_sum_oracle(&t, 6).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                let e = explicit_walk_sum(&t, j, i, 6);
                assert!((e - layered.total[(j, i)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(OracleConfig::default().validate().is_ok());
        let bad = OracleConfig {
            tree_node_cap: 9,
            ..OracleConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_on_singleton_categories_is_flat() {
        let (rep, _) = instances::inst_b2(1e-3);
        let base = rep.base().clone();
        let net = ProductionNetwork::uniform(&base);
        let g = grid_deviation_oracle(&base, &net, 0, 0.05).unwrap();
        assert_eq!(g.points, 1);
        assert!(g.best_gain.abs() < 1e-15);
    }
}
