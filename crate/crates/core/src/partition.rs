//! Set partitions of `{0, .., n-1}` encoded as restricted-growth strings.
//!
//! A restricted-growth string `s` has `s[0] = 0` and
//! `s[k] <= 1 + max(s[0..k])`; element `k` belongs to block `s[k]`. Blocks are
//! therefore numbered in order of their smallest element, which makes the
//! encoding canonical and lexicographic order a deterministic scan order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// A partition of `n` countries (0-based) into clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Builds a partition from a restricted-growth string.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let mut next = 0usize;
        for (k, &l) in labels.iter().enumerate() {
            if l > next {
                return Err(ModelError::InvalidPartition(format!(
                    "label {l} at position {k} is not restricted-growth"
                )));
            }
            if l == next {
                next += 1;
            }
        }
        Ok(Self { labels })
    }

    /// Builds a partition from arbitrary block lists (0-based members).
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut owner = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(ModelError::InvalidPartition(format!("block {b} is empty")));
            }
            for &c in block {
                if c >= n {
                    return Err(ModelError::InvalidPartition(format!(
                        "member {c} outside 0..{n}"
                    )));
                }
                if owner[c] != usize::MAX {
                    return Err(ModelError::InvalidPartition(format!(
                        "member {c} appears in more than one block"
                    )));
                }
                owner[c] = b;
            }
        }
        if let Some(c) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(ModelError::InvalidPartition(format!("member {c} is not covered")));
        }
        Ok(Self::canonical(&owner))
    }

    /// Relabels an arbitrary block assignment into restricted-growth form.
    pub fn canonical(assignment: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = assignment
            .iter()
            .map(|a| {
                let next = map.len();
                *map.entry(*a).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn islands(n: usize) -> Self {
        Self { labels: (0..n).collect() }
    }

    pub fn full(n: usize) -> Self {
        Self { labels: vec![0; n] }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn block_of(&self, member: usize) -> usize {
        self.labels[member]
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// Blocks ordered by smallest member, members ascending.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (c, &l) in self.labels.iter().enumerate() {
            blocks[l].push(c);
        }
        blocks
    }

    pub fn block_size(&self, member: usize) -> usize {
        let l = self.labels[member];
        self.labels.iter().filter(|&&x| x == l).count()
    }

    pub fn is_islands(&self) -> bool {
        self.num_blocks() == self.n()
    }

    pub fn is_full(&self) -> bool {
        self.num_blocks() <= 1
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (b, block) in self.blocks().iter().enumerate() {
            if b > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (k, c) in block.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", c + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

// Serialized as 1-based blocks, the form used in scenario files and reports.
impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks: Vec<Vec<usize>> = self
            .blocks()
            .into_iter()
            .map(|b| b.into_iter().map(|c| c + 1).collect())
            .collect();
        blocks.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks: Vec<Vec<usize>> = Vec::deserialize(d)?;
        let n: usize = blocks.iter().map(Vec::len).sum();
        let zero_based = blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|&c| {
                        c.checked_sub(1)
                            .ok_or_else(|| serde::de::Error::custom("countries are 1-based"))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Partition::from_blocks(n, &zero_based).map_err(serde::de::Error::custom)
    }
}

/// Lexicographic iterator over restricted-growth strings of length `n`.
#[derive(Debug, Clone)]
pub struct RestrictedGrowth {
    current: Option<Vec<usize>>,
    // prefix maxima: maxes[k] = max(s[0..=k])
    maxes: Vec<usize>,
}

impl RestrictedGrowth {
    pub fn new(n: usize) -> Self {
        Self {
            current: Some(vec![0; n]),
            maxes: vec![0; n],
        }
    }
}

impl Iterator for RestrictedGrowth {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let out = self.current.clone()?;
        let s = self.current.as_mut().expect("checked above");
        let n = s.len();
        // rightmost position that can still grow
        let mut k = n;
        while k > 1 {
            k -= 1;
            if s[k] <= self.maxes[k - 1] {
                s[k] += 1;
                self.maxes[k] = self.maxes[k - 1].max(s[k]);
                for t in k + 1..n {
                    s[t] = 0;
                    self.maxes[t] = self.maxes[k];
                }
                return Some(Partition { labels: out });
            }
        }
        self.current = None;
        Some(Partition { labels: out })
    }
}

/// Every partition of `{0, .., n-1}` in lexicographic restricted-growth order.
pub fn all_partitions(n: usize) -> Vec<Partition> {
    RestrictedGrowth::new(n).collect()
}

/// Bell number by the Bell triangle.
pub fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().expect("non-empty"));
        for &x in &row {
            let prev = *next.last().expect("non-empty");
            next.push(prev + x);
        }
        row = next;
    }
    row[0]
}
