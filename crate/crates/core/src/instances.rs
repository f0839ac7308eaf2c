//! Worked instances and seeded random generators for tests and the CLI.

use nalgebra::DMatrix;
use rand::Rng;

use crate::economy::{CategoryMap, EconomySpec, ProductionNetwork, ProductivityModel};
use crate::replicate::{build_clustered_network, ReplicateGame};
use crate::partition::Partition;

/// One firm, labor share 0.6, no intermediate inputs.
pub fn inst_a() -> (EconomySpec, ProductionNetwork) {
    let cats = CategoryMap::new(1, vec![1]).expect("valid map");
    let b = DMatrix::from_row_slice(1, 2, &[0.6, 0.0]);
    let econ = EconomySpec::new(vec![1.0], b, ProductivityModel::constant(1, 1.0), cats)
        .expect("valid economy");
    let net = ProductionNetwork::uniform(&econ);
    (econ, net)
}

/// Two firms in two categories; labor 0.5, own input 0.2, other input 0.3.
pub fn inst_b() -> (EconomySpec, ProductionNetwork) {
    let cats = CategoryMap::new(2, vec![1, 2]).expect("valid map");
    let b = DMatrix::from_row_slice(2, 3, &[0.5, 0.2, 0.3, 0.5, 0.3, 0.2]);
    let econ = EconomySpec::new(vec![0.5, 0.5], b, ProductivityModel::constant(2, 1.0), cats)
        .expect("valid economy");
    let net = ProductionNetwork::uniform(&econ);
    (econ, net)
}

/// Two-fold replicate of [`inst_b`] with every profit share set to
/// `epsilon`, together with its islands network.
pub fn inst_b2(epsilon: f64) -> (ReplicateGame, ProductionNetwork) {
    let (base, _) = inst_b();
    let base = base.with_profit_share(epsilon).expect("epsilon in [0, 1)");
    let rep = ReplicateGame::new(base, 2).expect("simple base");
    let net = build_clustered_network(&rep, &Partition::islands(2))
        .expect("valid partition")
        .network;
    (rep, net)
}

/// Parameters for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub firms: usize,
    pub max_categories: usize,
    pub labor: (f64, f64),
    pub epsilon: (f64, f64),
}

impl RandomSpec {
    pub fn new(firms: usize) -> Self {
        Self {
            firms,
            max_categories: 3,
            labor: (0.1, 0.6),
            epsilon: (0.01, 0.2),
        }
    }
}

/// A random economy whose firms all use labor and keep a positive profit
/// share, with strictly positive consumption shares, plus a random
/// admissible network. Such instances are always ergodic.
pub fn random_instance<R: Rng>(rng: &mut R, spec: &RandomSpec) -> (EconomySpec, ProductionNetwork) {
    let m = spec.firms.max(1);
    let l = rng.gen_range(1..=spec.max_categories.clamp(1, m));
    let mut category: Vec<usize> = (0..m).map(|i| if i < l { i + 1 } else { rng.gen_range(1..=l) }).collect();
    shuffle(rng, &mut category);
    let cats = CategoryMap::new(l, category).expect("categories in range");
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut consumption: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let drift: f64 = 1.0 - consumption.iter().sum::<f64>();
    consumption[0] += drift;
    let mut b = DMatrix::zeros(m, l + 1);
    for i in 0..m {
        let labor = rng.gen_range(spec.labor.0..=spec.labor.1);
        let eps = rng.gen_range(spec.epsilon.0..=spec.epsilon.1);
        let rest = (1.0 - labor - eps).max(0.0);
        let weights: Vec<f64> = (0..l)
            .map(|_| if rng.gen_bool(0.8) { rng.gen_range(0.05..1.0) } else { 0.0 })
            .collect();
        let wsum: f64 = weights.iter().sum();
        b[(i, 0)] = labor;
        if wsum > 0.0 {
            for (k, w) in weights.iter().enumerate() {
                b[(i, k + 1)] = rest * w / wsum;
            }
        }
    }
    let productivity = match rng.gen_range(0..3) {
        0 => ProductivityModel::Constant {
            levels: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
        },
        1 => ProductivityModel::HicksNeutral,
        _ => ProductivityModel::Power {
            levels: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
            exponent: rng.gen_range(0.0..3.0),
        },
    };
    let econ = EconomySpec::new(consumption, b, productivity, cats).expect("valid economy");
    let net = random_network(rng, &econ);
    (econ, net)
}

/// Each firm splits every category budget over that category's firms with
/// random weights; some suppliers may get nothing.
pub fn random_network<R: Rng>(rng: &mut R, econ: &EconomySpec) -> ProductionNetwork {
    let m = econ.num_firms();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| random_row(rng, econ, i)).collect();
    ProductionNetwork::from_rows(&rows).expect("square")
}

pub fn random_row<R: Rng>(rng: &mut R, econ: &EconomySpec, firm: usize) -> Vec<f64> {
    let m = econ.num_firms();
    let mut row = vec![0.0; m];
    for l in 1..=econ.num_categories() {
        let budget = econ.requirement(firm, l);
        let suppliers = econ.categories().firms_in(l);
        if budget <= 0.0 || suppliers.is_empty() {
            continue;
        }
        let mut w: Vec<f64> = suppliers
            .iter()
            .map(|_| if rng.gen_bool(0.7) { rng.gen_range(0.01..1.0) } else { 0.0 })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            let k = rng.gen_range(0..w.len());
            w[k] = 1.0;
        }
        let total: f64 = w.iter().sum();
        for (&j, x) in suppliers.iter().zip(&w) {
            row[j] = budget * x / total;
        }
        // Absorb rounding so the category sum matches the budget exactly
        // enough for admissibility checks.
        let placed: f64 = suppliers.iter().map(|&j| row[j]).sum();
        let last = *suppliers.iter().rev().find(|&&j| row[j] > 0.0).expect("one supplier");
        row[last] += budget - placed;
    }
    row
}

fn shuffle<R: Rng, T>(rng: &mut R, v: &mut [T]) {
    use rand::seq::SliceRandom;
    v.shuffle(rng);
}

/// A network whose every positive share is at least `floor`, for finite
/// difference checks.
pub fn interior_network<R: Rng>(rng: &mut R, econ: &EconomySpec, floor: f64) -> ProductionNetwork {
    let m = econ.num_firms();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; m];
        for l in 1..=econ.num_categories() {
            let budget = econ.requirement(i, l);
            let suppliers = econ.categories().firms_in(l);
            if budget <= 0.0 {
                continue;
            }
            let k = suppliers.len() as f64;
            let slack = (budget - floor * k).max(0.0);
            let w: Vec<f64> = suppliers.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            let base = if slack > 0.0 { floor } else { budget / k };
            for (&j, x) in suppliers.iter().zip(&w) {
                row[j] = base + slack * x / total;
            }
        }
        rows.push(row);
    }
    ProductionNetwork::from_rows(&rows).expect("square")
}

/// A simple three-category game without profits.
pub fn three_category_base() -> EconomySpec {
    let cats = CategoryMap::new(3, vec![1, 2, 3]).expect("valid map");
    let b = DMatrix::from_row_slice(
        3,
        4,
        &[
            0.4, 0.2, 0.25, 0.15, //
            0.5, 0.1, 0.15, 0.25, //
            0.45, 0.2, 0.05, 0.3,
        ],
    );
    EconomySpec::new(vec![0.3, 0.3, 0.4], b, ProductivityModel::constant(3, 1.0), cats)
        .expect("valid economy")
}

/// A simple one-category game without profits.
pub fn one_category_base() -> EconomySpec {
    let cats = CategoryMap::new(1, vec![1]).expect("valid map");
    let b = DMatrix::from_row_slice(1, 2, &[0.6, 0.4]);
    EconomySpec::new(vec![1.0], b, ProductivityModel::constant(1, 1.0), cats)
        .expect("valid economy")
}
