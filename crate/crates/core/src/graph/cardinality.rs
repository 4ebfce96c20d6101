use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::graph::{EntityId, KnowledgeGraph, RelationId};

/// Side of a relation counted as "N" when the mean multiplicity reaches this.
pub const MANY_THRESHOLD: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-N")]
    OneToMany,
    #[serde(rename = "N-1")]
    ManyToOne,
    #[serde(rename = "N-N")]
    ManyToMany,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::OneToOne,
        Category::OneToMany,
        Category::ManyToOne,
        Category::ManyToMany,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::OneToOne => "1-1",
            Category::OneToMany => "1-N",
            Category::ManyToOne => "N-1",
            Category::ManyToMany => "N-N",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationCardinality {
    pub relation: RelationId,
    pub tails_per_head: f64,
    pub heads_per_tail: f64,
    pub category: Category,
}

pub fn classify_pairs(relation: RelationId, pairs: &[(EntityId, EntityId)]) -> RelationCardinality {
    let heads: HashSet<EntityId> = pairs.iter().map(|p| p.0).collect();
    let tails: HashSet<EntityId> = pairs.iter().map(|p| p.1).collect();
    let n = pairs.len() as f64;
    let tph = if heads.is_empty() {
        0.0
    } else {
        n / heads.len() as f64
    };
    let hpt = if tails.is_empty() {
        0.0
    } else {
        n / tails.len() as f64
    };
    let category = match (hpt >= MANY_THRESHOLD, tph >= MANY_THRESHOLD) {
        (false, false) => Category::OneToOne,
        (false, true) => Category::OneToMany,
        (true, false) => Category::ManyToOne,
        (true, true) => Category::ManyToMany,
    };
    RelationCardinality {
        relation,
        tails_per_head: tph,
        heads_per_tail: hpt,
        category,
    }
}

/// Categorizes over every known triplet of the relation (background and
/// task pools together).
pub fn classify_relation(graph: &KnowledgeGraph, relation: RelationId) -> RelationCardinality {
    classify_pairs(relation, &graph.pairs_by_relation[relation])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn hand_counted_cases() {
        let (a, b, c, d) = (0, 1, 2, 3);
        let one_n = classify_pairs(0, &[(a, b), (a, c)]);
        assert_eq!((one_n.tails_per_head, one_n.heads_per_tail), (2.0, 1.0));
        assert_eq!(one_n.category, Category::OneToMany);
        let n_one = classify_pairs(0, &[(a, b), (c, b)]);
        assert_eq!((n_one.tails_per_head, n_one.heads_per_tail), (1.0, 2.0));
        assert_eq!(n_one.category, Category::ManyToOne);
        // 3 triplets, heads {a, d}, tails {b, c}: both ratios exactly 1.5
        let nn = classify_pairs(0, &[(a, b), (a, c), (d, b)]);
        assert_eq!((nn.tails_per_head, nn.heads_per_tail), (1.5, 1.5));
        assert_eq!(nn.category, Category::ManyToMany);
        assert_eq!(classify_pairs(0, &[(a, b)]).category, Category::OneToOne);
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force_recount(pairs in prop::collection::vec((0usize..30, 0usize..30), 1..400)) {
            let mut pairs = pairs;
            pairs.sort();
            pairs.dedup();
            let c = classify_pairs(7, &pairs);
            let mut tails_of: BTreeMap<usize, usize> = BTreeMap::new();
            let mut heads_of: BTreeMap<usize, usize> = BTreeMap::new();
            for &(h, t) in &pairs {
                *tails_of.entry(h).or_default() += 1;
                *heads_of.entry(t).or_default() += 1;
            }
            let tph = tails_of.values().sum::<usize>() as f64 / tails_of.len() as f64;
            let hpt = heads_of.values().sum::<usize>() as f64 / heads_of.len() as f64;
            prop_assert!((c.tails_per_head - tph).abs() < 1e-12);
            prop_assert!((c.heads_per_tail - hpt).abs() < 1e-12);
            prop_assert!(c.tails_per_head >= 1.0 && c.heads_per_tail >= 1.0);
            let many_t = tph >= 1.5;
            let many_h = hpt >= 1.5;
            let expect = match (many_h, many_t) {
                (false, false) => Category::OneToOne,
                (false, true) => Category::OneToMany,
                (true, false) => Category::ManyToOne,
                (true, true) => Category::ManyToMany,
            };
            prop_assert_eq!(c.category, expect);
        }
    }
}
