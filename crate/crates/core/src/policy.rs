//! Trade policies: firm-level links that must be absent (prevented) or
//! present (catalyzed) in a clustered equilibrium network.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::partition::{Partition, RestrictedGrowth};
use crate::replicate::{build_clustered_network, ReplicateGame};

pub const DEFAULT_POLICY_CAP: usize = 6;

/// An ordered firm pair `(buyer, supplier)`, 0-based.
pub type Link = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TradePolicy {
    prevented: BTreeSet<Link>,
    catalyzed: BTreeSet<Link>,
}

impl TradePolicy {
    pub fn new(
        prevented: impl IntoIterator<Item = Link>,
        catalyzed: impl IntoIterator<Item = Link>,
    ) -> Result<Self> {
        let prevented: BTreeSet<Link> = prevented.into_iter().collect();
        let catalyzed: BTreeSet<Link> = catalyzed.into_iter().collect();
        if let Some(l) = prevented.intersection(&catalyzed).next() {
            return Err(ModelError::InvalidParameter {
                name: "policy",
                reason: format!("link {l:?} is both prevented and catalyzed"),
            });
        }
        Ok(Self {
            prevented,
            catalyzed,
        })
    }

    /// Country pairs `(c, c')` become links from the category-1 firm of `c`
    /// to the category-2 firm of `c'`.
    pub fn from_country_pairs(
        rep: &ReplicateGame,
        prevented: &[(usize, usize)],
        catalyzed: &[(usize, usize)],
    ) -> Result<Self> {
        if rep.num_categories() < 2 {
            return Err(ModelError::Precondition(
                "country-pair policies need at least two categories".into(),
            ));
        }
        let n = rep.n();
        let map = |pairs: &[(usize, usize)]| -> Result<Vec<Link>> {
            pairs
                .iter()
                .map(|&(c, d)| {
                    if c >= n || d >= n {
                        Err(ModelError::InvalidParameter {
                            name: "policy",
                            reason: format!("country pair ({c}, {d}) outside 0..{n}"),
                        })
                    } else {
                        Ok((rep.firm(1, c), rep.firm(2, d)))
                    }
                })
                .collect()
        };
        Self::new(map(prevented)?, map(catalyzed)?)
    }

    pub fn prevented(&self) -> &BTreeSet<Link> {
        &self.prevented
    }

    pub fn catalyzed(&self) -> &BTreeSet<Link> {
        &self.catalyzed
    }

    fn check_range(&self, m: usize) -> Result<()> {
        for &(i, j) in self.prevented.iter().chain(&self.catalyzed) {
            if i >= m || j >= m {
                return Err(ModelError::FirmOutOfRange { firm: i.max(j), m });
            }
        }
        Ok(())
    }
}

pub fn is_compatible(q: &Partition, rep: &ReplicateGame, policy: &TradePolicy) -> Result<bool> {
    policy.check_range(rep.economy().num_firms())?;
    let net = build_clustered_network(rep, q)?.network;
    Ok(policy.prevented.iter().all(|&(i, j)| net.share(i, j) == 0.0)
        && policy.catalyzed.iter().all(|&(i, j)| net.share(i, j) > 0.0))
}

/// When a link is present in a clustered network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Presence {
    Always,
    Never,
    /// Exactly when the two countries share a cluster.
    SameBlock(usize, usize),
}

fn presence(rep: &ReplicateGame, (i, j): Link) -> Presence {
    let (li, lj) = (rep.category_of(i), rep.category_of(j));
    let b = rep.base_requirement(li, lj);
    if b <= 0.0 {
        return Presence::Never;
    }
    if i == j {
        return Presence::Always;
    }
    if li == lj {
        return Presence::Never;
    }
    let (ci, cj) = (rep.country_of(i), rep.country_of(j));
    if ci == cj {
        Presence::Always
    } else {
        Presence::SameBlock(ci, cj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infeasibility {
    /// The prevented link is present in every clustered network.
    PreventedAlwaysPresent { link: Link },
    /// The catalyzed link is absent from every clustered network.
    CatalyzedNeverPresent { link: Link },
    /// Catalyzed links merge two countries that a prevented link separates.
    Conflict { prevented: Link, countries: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compatibility {
    pub partitions: Vec<Partition>,
    pub certificate: Option<Infeasibility>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let p = self.0[x];
        if p == x {
            return x;
        }
        let r = self.find(p);
        self.0[x] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Partitions whose clustered network satisfies the policy, in
/// restricted-growth order.
pub fn compatible_partitions(
    rep: &ReplicateGame,
    policy: &TradePolicy,
    n_cap: usize,
) -> Result<Compatibility> {
    let n = rep.n();
    if n > n_cap {
        return Err(ModelError::CapExceeded {
            cap: "n_cap",
            value: n,
            limit: n_cap,
        });
    }
    policy.check_range(rep.economy().num_firms())?;
    let infeasible = |certificate| Compatibility {
        partitions: Vec::new(),
        certificate: Some(certificate),
    };
    let mut uf = UnionFind((0..n).collect());
    for &link in &policy.catalyzed {
        match presence(rep, link) {
            Presence::Never => return Ok(infeasible(Infeasibility::CatalyzedNeverPresent { link })),
            Presence::Always => {}
            Presence::SameBlock(c, d) => uf.union(c, d),
        }
    }
    let mut separations = Vec::new();
    for &link in &policy.prevented {
        match presence(rep, link) {
            Presence::Always => return Ok(infeasible(Infeasibility::PreventedAlwaysPresent { link })),
            Presence::Never => {}
            Presence::SameBlock(c, d) => {
                if uf.find(c) == uf.find(d) {
                    return Ok(infeasible(Infeasibility::Conflict {
                        prevented: link,
                        countries: (c, d),
                    }));
                }
                separations.push((c, d));
            }
        }
    }
    // Enumerate partitions of the merged groups only.
    let mut group_of = vec![usize::MAX; n];
    let mut groups = 0;
    for c in 0..n {
        let root = uf.find(c);
        if group_of[root] == usize::MAX {
            group_of[root] = groups;
            groups += 1;
        }
        group_of[c] = group_of[root];
    }
    let mut partitions: Vec<Partition> = RestrictedGrowth::new(groups)
        .filter(|g| {
            separations
                .iter()
                .all(|&(c, d)| !g.same_block(group_of[c], group_of[d]))
        })
        .map(|g| {
            let assignment: Vec<usize> = (0..n).map(|c| g.block_of(group_of[c])).collect();
            Partition::canonical(&assignment)
        })
        .collect();
    partitions.sort();
    Ok(Compatibility {
        partitions,
        certificate: None,
    })
}

/// A policy whose only compatible partition is `target`.
pub fn design_policy(rep: &ReplicateGame, target: &Partition) -> Result<TradePolicy> {
    if target.n() != rep.n() {
        return Err(ModelError::InvalidPartition(format!(
            "target has {} countries, game has {}",
            target.n(),
            rep.n()
        )));
    }
    let l = rep.num_categories();
    let (from, to) = (1..=l)
        .flat_map(|a| (1..=l).map(move |b| (a, b)))
        .find(|&(a, b)| a != b && rep.base_requirement(a, b) > 0.0)
        .ok_or_else(|| {
            ModelError::Precondition(
                "no cross-category requirement: every partition gives the same network".into(),
            )
        })?;
    let blocks = target.blocks();
    let mut catalyzed = Vec::new();
    for block in &blocks {
        for w in block.windows(2) {
            catalyzed.push((rep.firm(from, w[0]), rep.firm(to, w[1])));
        }
    }
    let mut prevented = Vec::new();
    for (k, a) in blocks.iter().enumerate() {
        for b in &blocks[k + 1..] {
            prevented.push((rep.firm(from, a[0]), rep.firm(to, b[0])));
        }
    }
    TradePolicy::new(prevented, catalyzed)
}
