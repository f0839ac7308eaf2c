use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prodnet::economy::{self, EconomySpec, ProductionNetwork};
use prodnet::game::{self, Schedule, TiePolicy};
use prodnet::instances::{self, RandomSpec};
use prodnet::oracles;
use prodnet::partition::{all_partitions, bell, Partition};
use prodnet::policy::{self, TradePolicy};
use prodnet::replicate::{self, ReplicateGame};
use prodnet::risk;
use prodnet::walks;

fn instance(seed: u64, max_firms: usize) -> (ChaCha8Rng, EconomySpec, ProductionNetwork) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=max_firms);
    let (econ, net) = instances::random_instance(&mut rng, &RandomSpec::new(m));
    (rng, econ, net)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn flow_matrix_is_column_stochastic(seed in any::<u64>()) {
        let (_, econ, net) = instance(seed, 8);
        let flow = economy::build_flow_matrix(&econ, &net).unwrap();
        prop_assert!(flow.max_column_sum_error() < 1e-12);
    }

    #[test]
    fn equilibrium_residuals_vanish(seed in any::<u64>()) {
        let (_, econ, net) = instance(seed, 8);
        let eq = economy::solve_equilibrium(&econ, &net).unwrap();
        prop_assert!(eq.residuals.balance < 1e-10);
        prop_assert!(eq.residuals.labor < 1e-10);
        prop_assert!(eq.residuals.market_clearing < 1e-9);
        let total_profit: f64 = eq.profits.iter().sum();
        prop_assert!((eq.household_revenue - 1.0 - total_profit).abs() < 1e-10);
    }

    #[test]
    fn direct_walks_ignore_own_row(seed in any::<u64>()) {
        let (mut rng, econ, net) = instance(seed, 6);
        let i = rng.gen_range(0..econ.num_firms());
        let moved = net.with_row(i, &instances::random_row(&mut rng, &econ, i)).unwrap();
        let before = walks::direct_walks_to(&walks::transition_matrix(&econ, &net), i).unwrap();
        let after = walks::direct_walks_to(&walks::transition_matrix(&econ, &moved), i).unwrap();
        for j in (0..econ.num_firms()).filter(|&j| j != i) {
            prop_assert!((before[j] - after[j]).abs() < 1e-12);
        }
        prop_assert!(before[i] < 1.0 && after[i] < 1.0);
    }

    #[test]
    fn inverse_profit_is_affine_in_own_row(seed in any::<u64>(), t in 0.0f64..1.0) {
        let (mut rng, econ, net) = instance(seed, 6);
        let i = rng.gen_range(0..econ.num_firms());
        let r0 = net.row(i);
        let r1 = instances::random_row(&mut rng, &econ, i);
        let mix: Vec<f64> = r0.iter().zip(&r1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let profit = |row: &[f64]| {
            economy::solve_equilibrium(&econ, &net.with_row(i, row).unwrap()).unwrap().profits[i]
        };
        let expected = (1.0 - t) / profit(&r0) + t / profit(&r1);
        prop_assert!(relative(1.0 / profit(&mix), expected) < 1e-9);
    }

    #[test]
    fn walk_sums_converge_to_tables(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=4);
        let mut spec = RandomSpec::new(m);
        spec.labor = (0.5, 0.7);
        let (econ, net) = instances::random_instance(&mut rng, &spec);
        let tables = walks::walk_tables(&econ, &net).unwrap();
        let sums = oracles::walk_sum_oracle(&tables.transition, oracles::MAX_WALK_LENGTH).unwrap();
        let slack = sums.tail_bound + 1e-12;
        prop_assert!((&sums.total - &tables.total).abs().max() <= slack);
        prop_assert!((&sums.direct - &tables.direct).abs().max() <= slack);
    }

    #[test]
    fn three_profit_routes_agree(seed in any::<u64>()) {
        let (_, econ, net) = instance(seed, 8);
        let eq = economy::solve_equilibrium(&econ, &net).unwrap();
        let p = walks::profit_via_walks(&econ, &net).unwrap();
        for i in 0..econ.num_firms() {
            prop_assert!((p.resolvent[i] - eq.profits[i]).abs() < 1e-9);
            prop_assert!((p.ratio[i] - eq.profits[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn potential_orders_unilateral_deviations(seed in any::<u64>()) {
        let (mut rng, econ, net) = instance(seed, 5);
        let i = rng.gen_range(0..econ.num_firms());
        let moved = net.with_row(i, &instances::random_row(&mut rng, &econ, i)).unwrap();
        let d_profit = economy::solve_equilibrium(&econ, &moved).unwrap().profits[i]
            - economy::solve_equilibrium(&econ, &net).unwrap().profits[i];
        let d_phi = game::potential(&econ, &moved).unwrap() - game::potential(&econ, &net).unwrap();
        if d_profit.abs() > 1e-10 {
            prop_assert_eq!(d_profit > 0.0, d_phi > 0.0);
        }
    }

    #[test]
    fn best_response_beats_random_rows(seed in any::<u64>()) {
        let (mut rng, econ, net) = instance(seed, 6);
        let i = rng.gen_range(0..econ.num_firms());
        let br = game::best_response(&econ, &net, i, TiePolicy::UniformOverArgmax).unwrap();
        let at_br = economy::solve_equilibrium(&econ, &net.with_row(i, &br.row).unwrap()).unwrap();
        prop_assert!(relative(at_br.profits[i], br.profit) < 1e-9);
        for _ in 0..5 {
            let row = instances::random_row(&mut rng, &econ, i);
            let other = economy::solve_equilibrium(&econ, &net.with_row(i, &row).unwrap()).unwrap();
            prop_assert!(other.profits[i] <= br.profit * (1.0 + 1e-12));
        }
        let own = econ.requirement(i, econ.categories().category(i));
        prop_assert_eq!(br.row[i], own);
    }

    #[test]
    fn dynamics_never_lower_the_potential(seed in any::<u64>()) {
        let (_, econ, net) = instance(seed, 6);
        let run = game::best_response_dynamics(&econ, &net, Schedule::Random(seed), 50, 1e-12).unwrap();
        prop_assert!(run.potential_monotone);
        if run.converged {
            prop_assert!(game::is_nash(&econ, &run.terminal, 1e-9).unwrap().is_nash);
        }
    }

    #[test]
    fn gradient_routes_agree(seed in any::<u64>()) {
        let (_, econ, net) = instance(seed, 6);
        let g = economy::welfare_first_order(&econ, &net).unwrap();
        prop_assert!(g.max_route_gap < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let (mut rng, econ, _) = instance(seed, 5);
        let net = instances::interior_network(&mut rng, &econ, 0.02);
        let g = economy::welfare_first_order(&econ, &net).unwrap();
        let h = 1e-6;
        for i in 0..econ.num_firms() {
            for l in 1..=econ.num_categories() {
                let s = econ.categories().firms_in(l);
                if s.len() < 2 || econ.requirement(i, l) <= 0.0 {
                    continue;
                }
                let (j, k) = (s[0], s[1]);
                let partial = |sup: usize| {
                    g.links.iter().find(|x| x.firm == i && x.supplier == sup).unwrap()
                        .resolvent_form.finite().unwrap()
                };
                let shifted = |d: f64| {
                    let mut row = net.row(i);
                    row[j] += d;
                    row[k] -= d;
                    economy::simplified_welfare(&econ, &net.with_row(i, &row).unwrap(), None).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let analytic = partial(j) - partial(k);
                prop_assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0));
            }
        }
    }

    #[test]
    fn partitions_are_canonical(labels in prop::collection::vec(0usize..4, 1..7)) {
        let p = Partition::canonical(&labels);
        prop_assert_eq!(Partition::from_blocks(p.n(), &p.blocks()).unwrap(), p.clone());
        for a in 0..labels.len() {
            for b in 0..labels.len() {
                prop_assert_eq!(p.same_block(a, b), labels[a] == labels[b]);
            }
        }
    }

    #[test]
    fn hicks_neutral_welfare_ignores_clusters(n in 1usize..5, pick in any::<prop::sample::Index>()) {
        let base = instances::three_category_base()
            .with_productivity(prodnet::ProductivityModel::HicksNeutral).unwrap();
        let rep = ReplicateGame::new(base, n).unwrap();
        let parts = all_partitions(n);
        let q = &parts[pick.index(parts.len())];
        let w = |q: &Partition| {
            let net = replicate::build_clustered_network(&rep, q).unwrap().network;
            economy::simplified_welfare(rep.economy(), &net, None).unwrap()
        };
        prop_assert!((w(q) - w(&Partition::full(n))).abs() < 1e-9);
    }

    #[test]
    fn cluster_inverse_matches_direct_inverse(n in 1usize..5, pick in any::<prop::sample::Index>()) {
        let rep = ReplicateGame::new(instances::three_category_base(), n).unwrap();
        let parts = all_partitions(n);
        let t = replicate::cluster_inverse_table(&rep, &parts[pick.index(parts.len())]).unwrap();
        prop_assert!(t.closed_form_gap < 1e-10);
        prop_assert!(t.recovered_gap < 1e-10);
    }

    #[test]
    fn policy_filter_matches_brute_force(n in 1usize..5, seed in any::<u64>()) {
        let rep = instances::inst_b2(0.0).0.with_replication(n).unwrap();
        let m = rep.economy().num_firms();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut links = Vec::new();
        for _ in 0..rng.gen_range(0..5) {
            let l = (rng.gen_range(0..m), rng.gen_range(0..m));
            if !links.contains(&l) {
                links.push(l);
            }
        }
        let cut = rng.gen_range(0..=links.len());
        let p = TradePolicy::new(links[..cut].to_vec(), links[cut..].to_vec()).unwrap();
        let fast = policy::compatible_partitions(&rep, &p, 6).unwrap();
        prop_assert_eq!(fast.partitions, oracles::brute_force_compatible(&rep, &p, 6).unwrap());
    }

    #[test]
    fn expected_count_is_sum_of_probabilities(p in prop::collection::vec(0.0f64..=1.0, 0..12)) {
        let (lhs, rhs) = risk::expected_count_identity(&p).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn corrected_distance_inequality_holds(
        a in prop::collection::vec(-10.0f64..10.0, 1..7),
        b in prop::collection::vec(-10.0f64..10.0, 1..7),
    ) {
        let d = risk::distance_inequality(&a, &b).unwrap();
        prop_assert!(d.holds(1e-9));
        prop_assert!(d.merged_holds(1e-9));
    }
}

#[test]
fn enumerator_sizes_are_bell_numbers() {
    for n in 0..=6 {
        assert_eq!(all_partitions(n).len() as u64, bell(n));
        assert_eq!(oracles::partition_enumerator(n, 6).unwrap(), all_partitions(n));
    }
}
