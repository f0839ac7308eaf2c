//! Replicate economies: `n` copies of a one-firm-per-category economy whose
//! firms may source across copies ("countries").
//!
//! Firm `ℓ·n + c` (0-based category `ℓ`, 0-based country `c`) produces good
//! `ℓ + 1` in country `c`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::economy::{self, CategoryMap, EconomySpec, ProductionNetwork, ProductivityModel};
use crate::error::{ModelError, Result};
use crate::game::{self, NashReport, Schedule};
use crate::linalg;
use crate::partition::{all_partitions, bell, Partition};

pub const DEFAULT_PARTITION_CAP: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateGame {
    base: EconomySpec,
    /// `base_firm[ℓ]` is the base firm producing category `ℓ + 1`.
    base_firm: Vec<usize>,
    n: usize,
    economy: EconomySpec,
}

impl ReplicateGame {
    pub fn new(base: EconomySpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ModelError::InvalidParameter {
                name: "n",
                reason: "replication count must be at least 1".into(),
            });
        }
        let l = base.num_categories();
        let cats = base.categories();
        let mut base_firm = Vec::with_capacity(l);
        for c in 1..=l {
            match cats.firms_in(c).as_slice() {
                [f] => base_firm.push(*f),
                other => {
                    return Err(ModelError::Precondition(format!(
                        "base game must have one firm per category; category {c} has {}",
                        other.len()
                    )))
                }
            }
        }
        if base.num_firms() != l {
            return Err(ModelError::Precondition(
                "base game must have exactly one firm per category".into(),
            ));
        }
        let m = n * l;
        let mut consumption = vec![0.0; m];
        let mut requirements = DMatrix::zeros(m, l + 1);
        let mut category = vec![0; m];
        let mut country = vec![0; m];
        for (cat0, &bf) in base_firm.iter().enumerate() {
            for c in 0..n {
                let i = cat0 * n + c;
                consumption[i] = base.consumption()[bf] / n as f64;
                for col in 0..=l {
                    requirements[(i, col)] = base.requirement(bf, col);
                }
                category[i] = cat0 + 1;
                country[i] = c;
            }
        }
        let productivity = match base.productivity() {
            ProductivityModel::Constant { levels } => ProductivityModel::Constant {
                levels: replicate_levels(levels, &base_firm, n),
            },
            ProductivityModel::Power { levels, exponent } => ProductivityModel::Power {
                levels: replicate_levels(levels, &base_firm, n),
                exponent: *exponent,
            },
            ProductivityModel::HicksNeutral => ProductivityModel::HicksNeutral,
        };
        let categories = CategoryMap::new(l, category)?.with_countries(country)?;
        let economy = EconomySpec::new(consumption, requirements, productivity, categories)?;
        Ok(Self {
            base,
            base_firm,
            n,
            economy,
        })
    }

    pub fn base(&self) -> &EconomySpec {
        &self.base
    }

    pub fn economy(&self) -> &EconomySpec {
        &self.economy
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_categories(&self) -> usize {
        self.base.num_categories()
    }

    /// Firm index of 1-based `category` in 0-based `country`.
    pub fn firm(&self, category: usize, country: usize) -> usize {
        (category - 1) * self.n + country
    }

    pub fn category_of(&self, firm: usize) -> usize {
        firm / self.n + 1
    }

    pub fn country_of(&self, firm: usize) -> usize {
        firm % self.n
    }

    /// Base requirement `b_{ℓ,ℓ'}` between 1-based categories (`ℓ' = 0` is labor).
    pub fn base_requirement(&self, category: usize, input: usize) -> f64 {
        self.base.requirement(self.base_firm[category - 1], input)
    }

    pub fn base_consumption(&self, category: usize) -> f64 {
        self.base.consumption()[self.base_firm[category - 1]]
    }

    pub fn with_profit_share(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.base.with_profit_share(epsilon)?, self.n)
    }

    /// Same game with `model` given per base firm.
    pub fn with_productivity(&self, model: ProductivityModel) -> Result<Self> {
        Self::new(self.base.with_productivity(model)?, self.n)
    }

    pub fn with_replication(&self, n: usize) -> Result<Self> {
        Self::new(self.base.clone(), n)
    }

    fn check_partition(&self, q: &Partition) -> Result<()> {
        if q.n() != self.n {
            return Err(ModelError::InvalidPartition(format!(
                "partition of {} countries for a {}-fold replicate",
                q.n(),
                self.n
            )));
        }
        Ok(())
    }
}

fn replicate_levels(levels: &[f64], base_firm: &[usize], n: usize) -> Vec<f64> {
    base_firm
        .iter()
        .flat_map(|&bf| std::iter::repeat(levels[bf]).take(n))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStructure {
    pub partition: Partition,
    pub network: ProductionNetwork,
}

/// Own-category input entirely from the firm itself; every other category
/// bought evenly from that category's firms in the same cluster.
pub fn build_clustered_network(rep: &ReplicateGame, q: &Partition) -> Result<ClusterStructure> {
    rep.check_partition(q)?;
    let econ = rep.economy();
    let m = econ.num_firms();
    let l = rep.num_categories();
    let blocks = q.blocks();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        let own = rep.category_of(i);
        let block = &blocks[q.block_of(rep.country_of(i))];
        let size = block.len() as f64;
        for cat in 1..=l {
            let b = econ.requirement(i, cat);
            if cat == own {
                a[(i, i)] = b;
            } else {
                for &c in block {
                    a[(i, rep.firm(cat, c))] = b / size;
                }
            }
        }
    }
    let network = ProductionNetwork::new(a)?;
    network.check_admissible(econ)?;
    Ok(ClusterStructure {
        partition: q.clone(),
        network,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterNashEntry {
    pub epsilon: f64,
    pub report: NashReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterNashScan {
    pub partition: Partition,
    pub entries: Vec<ClusterNashEntry>,
    /// Largest grid value such that the network is Nash at it and every
    /// smaller grid value.
    pub threshold: Option<f64>,
}

pub fn verify_cluster_nash(
    rep: &ReplicateGame,
    q: &Partition,
    epsilon_grid: &[f64],
    tol: f64,
) -> Result<ClusterNashScan> {
    rep.check_partition(q)?;
    let mut grid: Vec<f64> = epsilon_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut entries = Vec::new();
    let mut threshold = None;
    let mut below_all_nash = true;
    for &eps in &grid {
        let scaled = rep.with_profit_share(eps)?;
        let net = build_clustered_network(&scaled, q)?.network;
        let report = game::is_nash(scaled.economy(), &net, tol)?;
        below_all_nash &= report.is_nash;
        if below_all_nash {
            threshold = Some(eps);
        }
        entries.push(ClusterNashEntry {
            epsilon: eps,
            report,
        });
    }
    Ok(ClusterNashScan {
        partition: q.clone(),
        entries,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterInverseTable {
    pub partition: Partition,
    /// `C = (I - B)^{-1}` over categories, labor excluded.
    pub category_inverse: Vec<Vec<f64>>,
    /// `Q_ℓ = Σ_ℓ' a₀_ℓ' C_ℓ'ℓ`.
    pub aggregate: Vec<f64>,
    /// `(I - A^Q)^{-1}` by direct inversion.
    pub direct: Vec<Vec<f64>>,
    /// Same matrix from the three-case closed form.
    pub closed_form: Vec<Vec<f64>>,
    pub closed_form_gap: f64,
    /// `C` recovered by summing direct entries over each cluster's category
    /// members, compared against `(I - B)^{-1}`.
    pub recovered_gap: f64,
    /// Largest violation of `c_ii - c_ij = 1 / (1 - b_ℓℓ)` over same-category
    /// pairs sharing a cluster.
    pub diagonal_gap: f64,
}

pub fn category_inverse(rep: &ReplicateGame) -> Result<DMatrix<f64>> {
    let l = rep.num_categories();
    let b = DMatrix::from_fn(l, l, |x, y| rep.base_requirement(x + 1, y + 1));
    linalg::inverse(&linalg::identity_minus(&b), "I - B")
}

pub fn cluster_inverse_table(rep: &ReplicateGame, q: &Partition) -> Result<ClusterInverseTable> {
    let cs = build_clustered_network(rep, q)?;
    let m = rep.economy().num_firms();
    let l = rep.num_categories();
    let c = category_inverse(rep)?;
    let direct = linalg::inverse(&linalg::identity_minus(cs.network.shares()), "I - A^Q")?;
    let mut closed = DMatrix::zeros(m, m);
    let mut diagonal_gap: f64 = 0.0;
    for i in 0..m {
        let (li, ci) = (rep.category_of(i), rep.country_of(i));
        let mk = q.block_size(ci) as f64;
        for j in 0..m {
            let (lj, cj) = (rep.category_of(j), rep.country_of(j));
            if !q.same_block(ci, cj) {
                continue;
            }
            let base = c[(li - 1, lj - 1)] / mk;
            let own = rep.base_requirement(li, li);
            closed[(i, j)] = if i == j {
                base + ((mk - 1.0) / mk) / (1.0 - own)
            } else if li == lj {
                base - (1.0 / mk) / (1.0 - own)
            } else {
                base
            };
            if li == lj && i != j {
                let gap = (direct[(i, i)] - direct[(i, j)] - 1.0 / (1.0 - own)).abs();
                diagonal_gap = diagonal_gap.max(gap);
            }
        }
    }
    let mut recovered_gap: f64 = 0.0;
    for i in 0..m {
        let (li, ci) = (rep.category_of(i), rep.country_of(i));
        for lj in 1..=l {
            let sum: f64 = (0..rep.n())
                .filter(|&cj| q.same_block(ci, cj))
                .map(|cj| direct[(i, rep.firm(lj, cj))])
                .sum();
            recovered_gap = recovered_gap.max((sum - c[(li - 1, lj - 1)]).abs());
        }
    }
    let aggregate = (0..l)
        .map(|x| (0..l).map(|y| rep.base_consumption(y + 1) * c[(y, x)]).sum())
        .collect();
    let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|r| m.row(r).iter().copied().collect())
            .collect()
    };
    let closed_form_gap = (&direct - &closed).abs().max();
    Ok(ClusterInverseTable {
        partition: q.clone(),
        category_inverse: to_rows(&c),
        aggregate,
        direct: to_rows(&direct),
        closed_form: to_rows(&closed),
        closed_form_gap,
        recovered_gap,
        diagonal_gap,
    })
}

/// `K = Σ_ℓ Q_ℓ (1 - b_ℓℓ - b_ℓ0)`, the slope of the islands-over-full welfare
/// gap in `log n` under constant productivity.
pub fn anarchy_constant(rep: &ReplicateGame) -> Result<f64> {
    let table = cluster_inverse_table(rep, &Partition::islands(rep.n()))?;
    Ok((1..=rep.num_categories())
        .map(|l| {
            table.aggregate[l - 1]
                * (1.0 - rep.base_requirement(l, l) - rep.base_requirement(l, 0))
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionWelfare {
    pub partition: Partition,
    pub welfare: f64,
    /// Passed the Nash check at the scan's profit share.
    pub nash: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsEquilibrium {
    pub seed: u64,
    pub converged: bool,
    pub nash: bool,
    pub welfare: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanOptions {
    pub partition_cap: usize,
    /// Profit share at which Nash is checked.
    pub nash_epsilon: f64,
    pub nash_tol: f64,
    pub random_starts: usize,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            partition_cap: DEFAULT_PARTITION_CAP,
            nash_epsilon: 1e-3,
            nash_tol: game::DEFAULT_NASH_TOL,
            random_starts: 0,
            seed: 0,
            max_rounds: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoAReport {
    pub n: usize,
    pub partitions: Vec<PartitionWelfare>,
    pub dynamics: Vec<DynamicsEquilibrium>,
    /// Extremes over verified equilibria (clustered ones plus dynamics
    /// fixed points that pass the Nash check).
    pub max_equilibrium_welfare: f64,
    pub min_equilibrium_welfare: f64,
    /// Best welfare over every clustered configuration, equilibrium or not.
    pub max_clustered_welfare: f64,
    pub welfare_gap: f64,
    pub welfare_gap_exp: f64,
    /// `max / min` when both share a sign; a ratio of log-welfares is not
    /// meaningful otherwise.
    pub welfare_ratio: Option<f64>,
    pub islands_welfare: f64,
    pub full_welfare: f64,
    pub anarchy_constant: f64,
    pub anarchy_constant_log_n: f64,
}

/// Welfare of every clustered network, computed with zero profit shares.
pub fn partition_welfare_scan(rep: &ReplicateGame, options: &ScanOptions) -> Result<PoAReport> {
    let n = rep.n();
    if n > options.partition_cap {
        return Err(ModelError::CapExceeded {
            cap: "partition_cap",
            value: n,
            limit: options.partition_cap,
        });
    }
    let exact = rep.with_profit_share(0.0)?;
    let strategic = rep.with_profit_share(options.nash_epsilon)?;
    let mut partitions = Vec::with_capacity(bell(n) as usize);
    for q in all_partitions(n) {
        let net = build_clustered_network(&exact, &q)?.network;
        let welfare = economy::simplified_welfare(exact.economy(), &net, None)?;
        let snet = build_clustered_network(&strategic, &q)?.network;
        let nash = game::is_nash(strategic.economy(), &snet, options.nash_tol)?.is_nash;
        partitions.push(PartitionWelfare {
            partition: q,
            welfare,
            nash,
        });
    }
    let mut dynamics = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.random_starts {
        let seed: u64 = rng.gen();
        let mut start_rng = ChaCha8Rng::seed_from_u64(seed);
        let start = crate::instances::random_network(&mut start_rng, strategic.economy());
        let run = game::best_response_dynamics(
            strategic.economy(),
            &start,
            Schedule::Random(seed),
            options.max_rounds,
            1e-12,
        )?;
        let nash = game::is_nash(strategic.economy(), &run.terminal, options.nash_tol)?.is_nash;
        // Map the terminal network back to zero profit shares.
        let scale = 1.0 / (1.0 - options.nash_epsilon);
        let shares = run.terminal.shares() * scale;
        let net = ProductionNetwork::new(shares)?;
        let welfare = economy::simplified_welfare(exact.economy(), &net, None)?;
        dynamics.push(DynamicsEquilibrium {
            seed,
            converged: run.converged,
            nash,
            welfare,
        });
    }
    let eq_values: Vec<f64> = partitions
        .iter()
        .filter(|p| p.nash)
        .map(|p| p.welfare)
        .chain(dynamics.iter().filter(|d| d.converged && d.nash).map(|d| d.welfare))
        .collect();
    let max_eq = eq_values.iter().copied().fold(f64::NAN, f64::max);
    let min_eq = eq_values.iter().copied().fold(f64::NAN, f64::min);
    let max_clustered = partitions
        .iter()
        .map(|p| p.welfare)
        .fold(f64::NAN, f64::max);
    let islands_welfare = partitions.last().expect("at least one partition").welfare;
    let full_welfare = partitions[0].welfare;
    let k = anarchy_constant(&exact)?;
    let welfare_ratio = (max_eq.signum() == min_eq.signum() && min_eq != 0.0).then(|| max_eq / min_eq);
    Ok(PoAReport {
        n,
        partitions,
        dynamics,
        max_equilibrium_welfare: max_eq,
        min_equilibrium_welfare: min_eq,
        max_clustered_welfare: max_clustered,
        welfare_gap: max_eq - min_eq,
        welfare_gap_exp: (max_eq - min_eq).exp(),
        welfare_ratio,
        islands_welfare,
        full_welfare,
        anarchy_constant: k,
        anarchy_constant_log_n: k * (n as f64).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnsToDiversification {
    Increasing,
    Decreasing,
    /// Both inequalities hold with equality: the Hicks-neutral case.
    HicksNeutralBoundary,
    Neither,
}

/// Samples pairs of non-negative input rows and tests the defining ratio
/// inequality in logs.
pub fn classify_returns_to_diversification(
    model: &ProductivityModel,
    sample_count: usize,
    seed: u64,
) -> ReturnsToDiversification {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut increasing = true;
    let mut decreasing = true;
    for _ in 0..sample_count {
        let len = rng.gen_range(1..=5);
        let mut x: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        let mut y: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        let hx = economy::log_hicks_neutral(&x);
        let hy = economy::log_hicks_neutral(&y);
        if hx < hy {
            std::mem::swap(&mut x, &mut y);
        }
        let h = economy::log_hicks_neutral(&x) - economy::log_hicks_neutral(&y);
        let lam = model.log_productivity(0, &x) - model.log_productivity(0, &y);
        let scale = TOL * h.abs().max(1.0);
        if lam < h - scale {
            increasing = false;
        }
        if lam > h + scale {
            decreasing = false;
        }
    }
    match (increasing, decreasing) {
        (true, true) => ReturnsToDiversification::HicksNeutralBoundary,
        (true, false) => ReturnsToDiversification::Increasing,
        (false, true) => ReturnsToDiversification::Decreasing,
        (false, false) => ReturnsToDiversification::Neither,
    }
}
