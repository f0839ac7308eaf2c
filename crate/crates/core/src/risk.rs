//! Random link disruptions.
//!
//! Each live link `(i, j)` (with `a_ij > 0`) fails independently with
//! probability `r_ij`. A firm hit by the failed set `K` loses a factor
//! `(1 - ρ)^{φ_i(K)}` of productivity, which shifts `u_i` by
//! `φ_i(K) log(1 - ρ)` and leaves revenues untouched.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::economy::{self, EconomySpec, ProductionNetwork, ProductivityModel};
use crate::error::{ModelError, Result};
use crate::linalg::{self, CompensatedSum};
use crate::partition::{all_partitions, Partition};
use crate::replicate::{self, ReplicateGame};

pub const DEFAULT_LINK_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disruption {
    /// Smallest disrupted weight per category.
    Min,
    /// All disrupted weights.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "r")]
pub enum SpatialRisk {
    Homogeneous(f64),
    /// `r (|c(i) - c(j)| + 1) / n` over countries.
    Distance(f64),
    /// `r (|ℓ - ℓ'| + 1) / n` over categories.
    CategoryDistance(f64),
}

impl SpatialRisk {
    pub fn base_rate(&self) -> f64 {
        match *self {
            Self::Homogeneous(r) | Self::Distance(r) | Self::CategoryDistance(r) => r,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Self::Homogeneous(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    /// Failure probability of every ordered firm pair; only live links matter.
    pub rates: DMatrix<f64>,
    pub shock: f64,
    pub disruption: Disruption,
}

impl RiskModel {
    pub fn new(rates: DMatrix<f64>, shock: f64, disruption: Disruption) -> Result<Self> {
        if !(0.0..1.0).contains(&shock) {
            return Err(ModelError::InvalidParameter {
                name: "rho",
                reason: format!("{shock} not in [0, 1)"),
            });
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(ModelError::InvalidParameter {
                name: "r",
                reason: format!("disruption probability {r} not in [0, 1]"),
            });
        }
        Ok(Self {
            rates,
            shock,
            disruption,
        })
    }
}

pub fn build_risk_matrix(rep: &ReplicateGame, spatial: SpatialRisk) -> Result<DMatrix<f64>> {
    let r = spatial.base_rate();
    if !(0.0..=1.0).contains(&r) {
        return Err(ModelError::InvalidParameter {
            name: "r",
            reason: format!("{r} not in [0, 1]"),
        });
    }
    let m = rep.economy().num_firms();
    let n = rep.n() as f64;
    Ok(DMatrix::from_fn(m, m, |i, j| match spatial {
        SpatialRisk::Homogeneous(_) => r,
        SpatialRisk::Distance(_) => {
            r * (rep.country_of(i).abs_diff(rep.country_of(j)) + 1) as f64 / n
        }
        SpatialRisk::CategoryDistance(_) => {
            r * (rep.category_of(i).abs_diff(rep.category_of(j)) + 1) as f64 / n
        }
    }))
}

/// Homogeneous rates for an arbitrary economy.
pub fn homogeneous_rates(m: usize, r: f64) -> DMatrix<f64> {
    DMatrix::from_element(m, m, r)
}

/// `φ_i(K)` for firm `i`, where `disrupted[i][j]` marks `(i, j) ∈ K`.
pub fn disruption_exponent(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    disrupted: &dyn Fn(usize, usize) -> bool,
    disruption: Disruption,
    firm: usize,
) -> f64 {
    let cats = econ.categories();
    let mut per_category = vec![f64::INFINITY; econ.num_categories() + 1];
    let mut sum = 0.0;
    for j in 0..econ.num_firms() {
        let a = net.share(firm, j);
        if a > 0.0 && disrupted(firm, j) {
            sum += a;
            let c = cats.category(j);
            per_category[c] = per_category[c].min(a);
        }
    }
    match disruption {
        Disruption::Sum => sum,
        Disruption::Min => per_category.iter().filter(|x| x.is_finite()).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LiveLink {
    firm: usize,
    supplier: usize,
    weight: f64,
    rate: f64,
    /// Index of the (firm, category) slot the link belongs to.
    slot: usize,
}

/// Live links in row-major order, plus the firm owning each slot.
fn live_links(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    rates: &DMatrix<f64>,
) -> (Vec<LiveLink>, Vec<usize>) {
    let cats = econ.categories();
    let mut slots: Vec<(usize, usize)> = Vec::new();
    let mut links = Vec::new();
    for i in 0..econ.num_firms() {
        for j in 0..econ.num_firms() {
            let a = net.share(i, j);
            if a <= 0.0 {
                continue;
            }
            let key = (i, cats.category(j));
            let slot = slots.iter().position(|&s| s == key).unwrap_or_else(|| {
                slots.push(key);
                slots.len() - 1
            });
            links.push(LiveLink {
                firm: i,
                supplier: j,
                weight: a,
                rate: rates[(i, j)],
                slot,
            });
        }
    }
    let slot_firm = slots.iter().map(|&(i, _)| i).collect();
    (links, slot_firm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedWelfare {
    pub live_links: usize,
    pub scenarios: u64,
    /// `W` without disruptions.
    pub baseline_welfare: f64,
    pub expected_welfare: f64,
    pub baseline_log_welfare: f64,
    pub expected_log_welfare: f64,
    /// `|Σ P(K) - 1|`.
    pub probability_error: f64,
    /// Largest change in revenues or profits over the re-solved scenarios.
    pub invariance_gap: f64,
    pub invariance_checked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactOptions {
    pub link_cap: usize,
    /// Scenarios re-solved from scratch to confirm revenues do not move.
    pub invariance_samples: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            link_cap: DEFAULT_LINK_CAP,
            invariance_samples: 8,
        }
    }
}

/// Expected welfare by enumerating every subset of live links.
pub fn expected_welfare_exact(
    econ: &EconomySpec,
    net: &ProductionNetwork,
    risk: &RiskModel,
    options: &ExactOptions,
) -> Result<ExpectedWelfare> {
    net.check_admissible(econ)?;
    let m = econ.num_firms();
    if risk.rates.nrows() != m || risk.rates.ncols() != m {
        return Err(ModelError::Dimension(format!(
            "risk matrix is {}x{}, economy has {m} firms",
            risk.rates.nrows(),
            risk.rates.ncols()
        )));
    }
    let (links, slot_firm) = live_links(econ, net, &risk.rates);
    let e = links.len();
    if e > options.link_cap || e >= 63 {
        return Err(ModelError::CapExceeded {
            cap: "link_cap",
            value: e,
            limit: options.link_cap,
        });
    }
    let eq = economy::solve_equilibrium(econ, net)?;
    let gateway = economy::gateway_weights(econ, net)?;

    // Scenario probabilities as the product of two half-tables.
    let lo_bits = e / 2;
    let hi_bits = e - lo_bits;
    let half_table = |offset: usize, bits: usize| -> Vec<f64> {
        (0..1usize << bits)
            .map(|mask| {
                (0..bits)
                    .map(|b| {
                        let r = links[offset + b].rate;
                        if mask >> b & 1 == 1 {
                            r
                        } else {
                            1.0 - r
                        }
                    })
                    .product()
            })
            .collect()
    };
    let lo = half_table(0, lo_bits);
    let hi = half_table(lo_bits, hi_bits);

    let num_slots = slot_firm.len();
    let mut slot_min = vec![f64::INFINITY; num_slots];
    let mut total_prob = CompensatedSum::default();
    let mut expected_shift = CompensatedSum::default();
    let scenarios = 1u64 << e;
    for mask in 0..scenarios {
        let p = lo[(mask as usize) & ((1 << lo_bits) - 1)] * hi[(mask >> lo_bits) as usize];
        total_prob.add(p);
        if p == 0.0 {
            continue;
        }
        let exposure = match risk.disruption {
            Disruption::Sum => (0..e)
                .filter(|&b| mask >> b & 1 == 1)
                .map(|b| gateway[links[b].firm] * links[b].weight)
                .sum::<f64>(),
            Disruption::Min => {
                slot_min.fill(f64::INFINITY);
                for b in (0..e).filter(|&b| mask >> b & 1 == 1) {
                    let s = links[b].slot;
                    slot_min[s] = slot_min[s].min(links[b].weight);
                }
                slot_min
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.is_finite())
                    .map(|(s, x)| gateway[slot_firm[s]] * x)
                    .sum::<f64>()
            }
        };
        expected_shift.add(p * exposure);
    }
    let log_shock = (1.0 - risk.shock).ln();
    let shift = log_shock * expected_shift.value();

    // Re-solve a spread of scenarios with shifted productivity.
    let mut invariance_gap: f64 = 0.0;
    let samples = options.invariance_samples.min(scenarios as usize);
    let stride = if samples > 1 { (scenarios - 1) / (samples as u64 - 1) } else { 1 };
    for s in 0..samples as u64 {
        let mask = (s * stride).min(scenarios - 1);
        let disrupted = |i: usize, j: usize| -> bool {
            links
                .iter()
                .enumerate()
                .any(|(b, l)| mask >> b & 1 == 1 && l.firm == i && l.supplier == j)
        };
        let log_shift: Vec<f64> = (0..m)
            .map(|i| log_shock * disruption_exponent(econ, net, &disrupted, risk.disruption, i))
            .collect();
        let shocked = economy::solve_equilibrium_shifted(econ, net, Some(&log_shift))?;
        invariance_gap = invariance_gap
            .max(linalg::max_abs_diff(&shocked.revenues, &eq.revenues))
            .max(linalg::max_abs_diff(&shocked.profits, &eq.profits));
    }

    Ok(ExpectedWelfare {
        live_links: e,
        scenarios,
        baseline_welfare: eq.welfare,
        expected_welfare: eq.welfare + shift,
        baseline_log_welfare: eq.log_welfare,
        expected_log_welfare: eq.log_welfare + shift,
        probability_error: (total_prob.value() - 1.0).abs(),
        invariance_gap,
        invariance_checked: samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteredRisk {
    pub partition: Partition,
    /// `Φ_{i,ℓ}` per firm and 1-based category.
    pub expected_exposure: Vec<Vec<f64>>,
    pub baseline_welfare: f64,
    pub expected_welfare: f64,
}

/// Expected welfare of a clustered network from the per-category expected
/// exposures and the aggregate gateway weights `Q_ℓ / n`.
pub fn expected_welfare_clustered(
    rep: &ReplicateGame,
    q: &Partition,
    rates: &DMatrix<f64>,
    shock: f64,
    disruption: Disruption,
) -> Result<ClusteredRisk> {
    if rep.economy().productivity() != &ProductivityModel::HicksNeutral {
        return Err(ModelError::Precondition(
            "clustered risk formula needs Hicks-neutral productivity".into(),
        ));
    }
    RiskModel::new(rates.clone(), shock, disruption)?;
    let table = replicate::cluster_inverse_table(rep, q)?;
    let econ = rep.economy();
    let m = econ.num_firms();
    let l = rep.num_categories();
    let n = rep.n() as f64;
    let mut exposure = vec![vec![0.0; l + 1]; m];
    for (i, row) in exposure.iter_mut().enumerate() {
        let own = rep.category_of(i);
        let c = rep.country_of(i);
        let block: Vec<usize> = (0..rep.n()).filter(|&d| q.same_block(c, d)).collect();
        let mk = block.len() as f64;
        for (cat, slot) in row.iter_mut().enumerate().skip(1) {
            let b = rep.base_requirement(own, cat);
            if b <= 0.0 {
                continue;
            }
            *slot = if cat == own {
                rates[(i, i)] * b
            } else {
                let r: Vec<f64> = block.iter().map(|&d| rates[(i, rep.firm(cat, d))]).collect();
                match disruption {
                    Disruption::Min => b * (1.0 - r.iter().map(|x| 1.0 - x).product::<f64>()) / mk,
                    Disruption::Sum => b / mk * r.iter().sum::<f64>(),
                }
            };
        }
    }
    let log_shock = (1.0 - shock).ln();
    let mut baseline = 0.0;
    let mut risk_term = 0.0;
    for (i, row) in exposure.iter().enumerate() {
        let g = table.aggregate[rep.category_of(i) - 1] / n;
        let b0 = econ.labor_share(i);
        baseline += g * linalg::xlogx(b0);
        risk_term += g * log_shock * row.iter().sum::<f64>();
    }
    Ok(ClusteredRisk {
        partition: q.clone(),
        expected_exposure: exposure,
        baseline_welfare: baseline,
        expected_welfare: baseline + risk_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOrdering {
    /// Full connection best, islands worst.
    FullBest,
    AllEqual,
    /// Islands best, full connection worst.
    IslandsBest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskPartitionEntry {
    pub partition: Partition,
    pub expected_welfare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskScan {
    pub entries: Vec<RiskPartitionEntry>,
    pub argmax: Partition,
    pub argmin: Partition,
    pub expected: ExpectedOrdering,
    pub ordering_holds: bool,
    pub spread: f64,
}

pub fn expected_ordering(spatial: SpatialRisk, disruption: Disruption) -> ExpectedOrdering {
    match (disruption, spatial.is_homogeneous()) {
        (Disruption::Min, _) => ExpectedOrdering::FullBest,
        (Disruption::Sum, true) => ExpectedOrdering::AllEqual,
        (Disruption::Sum, false) => ExpectedOrdering::IslandsBest,
    }
}

/// Expected welfare over every clustered network, checked against the
/// ordering predicted for the disruption and risk kinds.
pub fn risk_partition_scan(
    rep: &ReplicateGame,
    spatial: SpatialRisk,
    shock: f64,
    disruption: Disruption,
    partition_cap: usize,
    tol: f64,
) -> Result<RiskScan> {
    let n = rep.n();
    if n > partition_cap {
        return Err(ModelError::CapExceeded {
            cap: "partition_cap",
            value: n,
            limit: partition_cap,
        });
    }
    let rates = build_risk_matrix(rep, spatial)?;
    let mut entries = Vec::new();
    for q in all_partitions(n) {
        let w = expected_welfare_clustered(rep, &q, &rates, shock, disruption)?;
        entries.push(RiskPartitionEntry {
            partition: q,
            expected_welfare: w.expected_welfare,
        });
    }
    let by = |cmp: fn(f64, f64) -> bool| -> Partition {
        let mut best = &entries[0];
        for e in &entries[1..] {
            if cmp(e.expected_welfare, best.expected_welfare) {
                best = e;
            }
        }
        best.partition.clone()
    };
    let argmax = by(|a, b| a > b);
    let argmin = by(|a, b| a < b);
    let values: Vec<f64> = entries.iter().map(|e| e.expected_welfare).collect();
    let hi = values.iter().copied().fold(f64::MIN, f64::max);
    let lo = values.iter().copied().fold(f64::MAX, f64::min);
    let full = entries[0].expected_welfare;
    let islands = entries.last().expect("non-empty").expected_welfare;
    let expected = expected_ordering(spatial, disruption);
    let ordering_holds = match expected {
        ExpectedOrdering::FullBest => full >= hi - tol && islands <= lo + tol,
        ExpectedOrdering::IslandsBest => islands >= hi - tol && full <= lo + tol,
        ExpectedOrdering::AllEqual => hi - lo <= tol,
    };
    Ok(RiskScan {
        entries,
        argmax,
        argmin,
        expected,
        ordering_holds,
        spread: hi - lo,
    })
}

/// `Σ_k k P(exactly k of the events occur)` by subset enumeration, against
/// `Σ p_j`.
pub fn expected_count_identity(p: &[f64]) -> Result<(f64, f64)> {
    if p.len() > 24 {
        return Err(ModelError::CapExceeded {
            cap: "identity_terms",
            value: p.len(),
            limit: 24,
        });
    }
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(ModelError::InvalidParameter {
            name: "p",
            reason: format!("{x} not in [0, 1]"),
        });
    }
    let mut lhs = CompensatedSum::default();
    for mask in 0u32..1 << p.len() {
        let prob: f64 = p
            .iter()
            .enumerate()
            .map(|(j, &x)| if mask >> j & 1 == 1 { x } else { 1.0 - x })
            .product();
        lhs.add(mask.count_ones() as f64 * prob);
    }
    Ok((lhs.value(), p.iter().sum()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceInequality {
    /// `(m/n) Σ_{i<j} |a_i - a_j| + (n/m) Σ_{i<j} |b_i - b_j|`.
    pub weighted_within: f64,
    /// `Σ_{i,j} |a_i - b_j|`.
    pub across: f64,
    /// Merged-cluster average `(S_a + S_b + S_ab) / (m + n)`.
    pub merged_average: f64,
    /// Split averages `S_a / n + S_b / m`.
    pub split_average: f64,
    /// The variant with ordered within-pair sums and the cross sum over
    /// `m + n`, which does not hold in general.
    pub ordered_lhs: f64,
    pub ordered_rhs: f64,
}

impl DistanceInequality {
    pub fn holds(&self, tol: f64) -> bool {
        self.weighted_within <= self.across + tol
    }

    pub fn merged_holds(&self, tol: f64) -> bool {
        self.merged_average + tol >= self.split_average
    }

    pub fn ordered_holds(&self, tol: f64) -> bool {
        self.ordered_lhs <= self.ordered_rhs + tol
    }
}

pub fn distance_inequality(a: &[f64], b: &[f64]) -> Result<DistanceInequality> {
    if a.is_empty() || b.is_empty() {
        return Err(ModelError::InvalidParameter {
            name: "a, b",
            reason: "both samples must be non-empty".into(),
        });
    }
    let pairs = |x: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                s += (x[i] - x[j]).abs();
            }
        }
        s
    };
    let (n, m) = (a.len() as f64, b.len() as f64);
    let sa = pairs(a);
    let sb = pairs(b);
    let sab: f64 = a.iter().flat_map(|x| b.iter().map(move |y| (x - y).abs())).sum();
    Ok(DistanceInequality {
        weighted_within: m / n * sa + n / m * sb,
        across: sab,
        merged_average: (sa + sb + sab) / (m + n),
        split_average: sa / n + sb / m,
        ordered_lhs: 2.0 * sa / n + 2.0 * sb / m,
        ordered_rhs: sab / (m + n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::partition::Partition;

    fn hicks(eps: f64) -> ReplicateGame {
        instances::inst_b2(eps)
            .0
            .with_productivity(ProductivityModel::HicksNeutral)
            .unwrap()
    }

    #[test]
    fn risk_matrices() {
        let rep = hicks(0.0);
        let h = build_risk_matrix(&rep, SpatialRisk::Homogeneous(0.1)).unwrap();
        assert!(h.iter().all(|&x| x == 0.1));
        let d = build_risk_matrix(&rep, SpatialRisk::Distance(0.1)).unwrap();
        assert!((d[(0, 2)] - 0.05).abs() < 1e-15);
        assert!((d[(0, 3)] - 0.1).abs() < 1e-15);
        assert!(build_risk_matrix(&rep, SpatialRisk::Homogeneous(1.5)).is_err());
    }

    #[test]
    fn exponents() {
        let rep = hicks(0.0);
        let econ = rep.economy();
        let full = replicate::build_clustered_network(&rep, &Partition::full(2))
            .unwrap()
            .network;
        let both_g2 = |i: usize, j: usize| i == 0 && (j == 2 || j == 3);
        let none = |_: usize, _: usize| false;
        let own = |i: usize, j: usize| i == 0 && j == 0;
        assert!((disruption_exponent(econ, &full, &both_g2, Disruption::Min, 0) - 0.15).abs() < 1e-15);
        assert!((disruption_exponent(econ, &full, &both_g2, Disruption::Sum, 0) - 0.30).abs() < 1e-15);
        assert_eq!(disruption_exponent(econ, &full, &none, Disruption::Min, 0), 0.0);
        assert_eq!(disruption_exponent(econ, &full, &none, Disruption::Sum, 0), 0.0);
        assert_eq!(disruption_exponent(econ, &full, &own, Disruption::Min, 0), 0.2);
        assert_eq!(disruption_exponent(econ, &full, &own, Disruption::Sum, 0), 0.2);
    }

    #[test]
    fn trivial_shocks_leave_welfare() {
        let rep = hicks(0.0);
        let net = replicate::build_clustered_network(&rep, &Partition::full(2))
            .unwrap()
            .network;
        let m = rep.economy().num_firms();
        for (r, rho) in [(0.1, 0.0), (0.0, 0.3)] {
            let risk = RiskModel::new(homogeneous_rates(m, r), rho, Disruption::Min).unwrap();
            let w = expected_welfare_exact(rep.economy(), &net, &risk, &ExactOptions::default())
                .unwrap();
            assert_eq!(w.expected_welfare, w.baseline_welfare);
        }
    }

    #[test]
    fn exact_matches_closed_form_on_islands() {
        let rep = hicks(0.0);
        let q = Partition::islands(2);
        let net = replicate::build_clustered_network(&rep, &q).unwrap().network;
        let rates = build_risk_matrix(&rep, SpatialRisk::Homogeneous(0.1)).unwrap();
        let risk = RiskModel::new(rates.clone(), 0.2, Disruption::Sum).unwrap();
        let exact = expected_welfare_exact(rep.economy(), &net, &risk, &ExactOptions::default())
            .unwrap();
        let closed = expected_welfare_clustered(&rep, &q, &rates, 0.2, Disruption::Sum).unwrap();
        assert!((exact.expected_welfare - closed.expected_welfare).abs() < 1e-9);
        assert!(exact.probability_error < 1e-10);
        assert!(exact.invariance_gap < 1e-12);
    }

    #[test]
    fn closed_form_min_exposure() {
        let rep = hicks(0.0);
        let rates = build_risk_matrix(&rep, SpatialRisk::Homogeneous(0.1)).unwrap();
        let c = expected_welfare_clustered(&rep, &Partition::full(2), &rates, 0.2, Disruption::Min)
            .unwrap();
        assert!((c.expected_exposure[0][2] - 0.0285).abs() < 1e-15);
        assert!((c.expected_exposure[0][1] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn identities() {
        let (l, r) = expected_count_identity(&[0.3, 0.5]).unwrap();
        assert!((l - 0.8).abs() < 1e-15 && (r - 0.8).abs() < 1e-15);
        let d = distance_inequality(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!((d.weighted_within, d.across), (2.0, 2.0));
        assert!(d.holds(0.0) && d.merged_holds(1e-15));
        assert!(!d.ordered_holds(0.0));
        let d = distance_inequality(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!((d.weighted_within, d.across), (0.0, 4.0));
    }
}
