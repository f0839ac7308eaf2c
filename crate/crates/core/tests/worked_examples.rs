use nalgebra::{DMatrix, DVector};

use prodnet::economy::{self, FlowMatrix};
use prodnet::game::{self, TiePolicy};
use prodnet::instances;
use prodnet::oracles;
use prodnet::partition::{all_partitions, Partition};
use prodnet::policy::{self, TradePolicy};
use prodnet::replicate::{self, ReplicateGame};
use prodnet::risk::{self, Disruption, ExpectedOrdering, SpatialRisk};
use prodnet::walks;
use prodnet::{xlogx, ProductivityModel};

/// `W = a₀ᵀ (I - A)^{-1} u` for unit productivity, from scratch.
fn welfare_by_hand(a0: &[f64], a: &DMatrix<f64>, labor: &[f64]) -> f64 {
    let m = a0.len();
    let u = DVector::from_fn(m, |i, _| (0..m).map(|j| xlogx(a[(i, j)])).sum::<f64>() + xlogx(labor[i]));
    let r = (DMatrix::identity(m, m) - a).try_inverse().unwrap();
    (DVector::from_column_slice(a0).transpose() * r * u)[(0, 0)]
}

#[test]
fn inst_b_partial_matches_central_difference() {
    let (econ, net) = instances::inst_b();
    let g = economy::welfare_first_order(&econ, &net).unwrap();
    let link = g.links.iter().find(|l| l.firm == 0 && l.supplier == 1).unwrap();
    let analytic = link.resolvent_form.finite().unwrap();
    let h = 1e-6;
    let at = |d: f64| {
        let mut a = net.shares().clone();
        a[(0, 1)] += d;
        welfare_by_hand(econ.consumption(), &a, &[0.5, 0.5])
    };
    assert!((welfare_by_hand(econ.consumption(), net.shares(), &[0.5, 0.5]) - (-2.05930)).abs() < 1e-5);
    let fd = (at(h) - at(-h)) / (2.0 * h);
    assert!((fd - analytic).abs() <= 1e-5 * analytic.abs());
}

#[test]
fn three_node_chain_trees() {
    let flow = FlowMatrix::from_matrix(DMatrix::from_row_slice(
        3,
        3,
        &[0.2, 0.5, 0.0, 0.8, 0.0, 0.3, 0.0, 0.5, 0.7],
    ))
    .unwrap();
    let enumerated = oracles::tree_enumeration_oracle(&flow, 8).unwrap();
    let det = game::tree_weights_by_determinant(&flow.transition());
    for (e, d) in enumerated.iter().zip(&det) {
        assert!((e - d).abs() < 1e-12);
    }
    // Path 0 - 1 - 2: the only tree into 0 uses 1 -> 0 and 2 -> 1.
    assert!((enumerated[0] - 0.5 * 0.3).abs() < 1e-15);
}

#[test]
fn grid_oracle_finds_the_analytic_deviation() {
    let (rep, islands) = instances::inst_b2(1e-3);
    let econ = rep.economy();
    let i = rep.firm(1, 0);
    let mut row = islands.row(i);
    let (home, away) = (rep.firm(2, 0), rep.firm(2, 1));
    row[away] = row[home] * 0.5;
    row[home] *= 0.5;
    let net = islands.with_row(i, &row).unwrap();
    let grid = oracles::grid_deviation_oracle(econ, &net, i, 0.05).unwrap();
    assert!(grid.best_gain > 0.0);
    let br = game::best_response(econ, &net, i, TiePolicy::KeepCurrent).unwrap();
    assert!(br.gain() > 0.0);
    let moved: Vec<usize> = (0..row.len()).filter(|&j| (grid.best_row[j] - row[j]).abs() > 1e-12).collect();
    assert!(moved.iter().all(|&j| rep.category_of(j) == 2));
    assert_eq!(br.row[home], econ.requirement(i, 2));
    assert!(!game::is_nash(econ, &net, 1e-9).unwrap().is_nash);
}

#[test]
fn home_supplier_has_larger_direct_weight() {
    let (rep, islands) = instances::inst_b2(1e-3);
    let tables = walks::walk_tables(rep.economy(), &islands).unwrap();
    let i = rep.firm(1, 0);
    let (home, away) = (rep.firm(2, 0), rep.firm(2, 1));
    assert!(tables.direct[(home, i)] > tables.direct[(away, i)]);
}

#[test]
fn replicate_layout() {
    let (base, _) = instances::inst_b();
    let rep = ReplicateGame::new(base.clone(), 2).unwrap();
    assert_eq!(rep.economy().num_firms(), 4);
    assert!(rep.economy().consumption().iter().all(|&x| (x - 0.25).abs() < 1e-15));
    assert_eq!(rep.category_of(2), 2);
    assert_eq!(rep.country_of(2), 0);
    let three = ReplicateGame::new(base, 3).unwrap();
    assert_eq!(three.economy().categories().firms_in(1), vec![0, 1, 2]);
    assert_eq!(three.economy().categories().firms_in(2), vec![3, 4, 5]);
}

#[test]
fn mixed_cluster_sizes_keep_category_budgets() {
    let rep = instances::inst_b2(0.0).0.with_replication(3).unwrap();
    let q = Partition::from_blocks(3, &[vec![0, 1], vec![2]]).unwrap();
    let net = replicate::build_clustered_network(&rep, &q).unwrap().network;
    for i in 0..6 {
        for l in 1..=2 {
            let spent: f64 = rep.economy().categories().firms_in(l).iter().map(|&j| net.share(i, j)).sum();
            assert!((spent - rep.economy().requirement(i, l)).abs() < 1e-15);
        }
    }
}

#[test]
fn risk_orderings_for_the_stated_cases() {
    let base = instances::inst_b().0.with_productivity(ProductivityModel::HicksNeutral).unwrap();
    for n in 2..=4 {
        let rep = ReplicateGame::new(base.clone(), n).unwrap();
        let min = risk::risk_partition_scan(&rep, SpatialRisk::Homogeneous(0.1), 0.2, Disruption::Min, 6, 1e-9).unwrap();
        assert!(min.argmax.is_full() && min.argmin.is_islands());
        let sum = risk::risk_partition_scan(&rep, SpatialRisk::Homogeneous(0.1), 0.2, Disruption::Sum, 6, 1e-9).unwrap();
        assert_eq!(sum.expected, ExpectedOrdering::AllEqual);
        assert!(sum.spread < 1e-9);
        let dist = risk::risk_partition_scan(&rep, SpatialRisk::Distance(0.1), 0.2, Disruption::Sum, 6, 1e-9).unwrap();
        assert!(dist.argmax.is_islands() && dist.argmin.is_full());
    }
}

#[test]
fn exact_enumeration_on_islands_sum() {
    let (base, _) = instances::inst_b();
    let rep = ReplicateGame::new(base.with_productivity(ProductivityModel::HicksNeutral).unwrap(), 2).unwrap();
    let q = Partition::islands(2);
    let net = replicate::build_clustered_network(&rep, &q).unwrap().network;
    let rates = risk::homogeneous_rates(4, 0.1);
    let model = risk::RiskModel::new(rates.clone(), 0.2, Disruption::Sum).unwrap();
    let exact = risk::expected_welfare_exact(rep.economy(), &net, &model, &risk::ExactOptions::default()).unwrap();
    let closed = risk::expected_welfare_clustered(&rep, &q, &rates, 0.2, Disruption::Sum).unwrap();
    assert!((exact.expected_welfare - closed.expected_welfare).abs() < 1e-9);
}

#[test]
fn two_country_policy_designs() {
    let rep = instances::inst_b2(0.0).0;
    let islands = policy::design_policy(&rep, &Partition::islands(2)).unwrap();
    assert_eq!((islands.prevented().len(), islands.catalyzed().len()), (1, 0));
    let full = policy::design_policy(&rep, &Partition::full(2)).unwrap();
    assert_eq!((full.prevented().len(), full.catalyzed().len()), (0, 1));
    let rep3 = rep.with_replication(3).unwrap();
    let target = Partition::from_blocks(3, &[vec![0, 1], vec![2]]).unwrap();
    let p = policy::design_policy(&rep3, &target).unwrap();
    assert_eq!((p.prevented().len(), p.catalyzed().len()), (1, 1));
    let c = policy::compatible_partitions(&rep3, &p, 6).unwrap();
    assert_eq!(c.partitions, vec![target]);
    let empty = policy::compatible_partitions(&rep3, &TradePolicy::default(), 6).unwrap();
    assert_eq!(empty.partitions, all_partitions(3));
}

#[test]
fn caps_are_reported_by_name() {
    let rep = instances::inst_b2(0.0).0.with_replication(7).unwrap();
    let err = policy::compatible_partitions(&rep, &TradePolicy::default(), 6).unwrap_err();
    assert!(err.to_string().contains("n_cap"));
    assert!(oracles::partition_enumerator(7, 6).is_err());
}
