use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::EntityId;
use crate::model::Net;
use crate::numeric::ops;

/// Mean sparse gate row over a task's support pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateProfile {
    pub relation: String,
    pub weights: Vec<f64>,
}

pub fn gate_profile(
    net: &Net,
    relation: &str,
    support: &[(EntityId, EntityId)],
) -> Result<GateProfile> {
    if !net.config.use_moe {
        return Err(Error::Config(
            "gate profiles need the expert mixture enabled".into(),
        ));
    }
    let meta = net.relation_meta_for(support)?;
    let rows = meta.gate_rows(net.config.num_experts);
    let weights = ops::mean_rows(rows.iter().map(Vec::as_slice))
        .ok_or_else(|| Error::Evaluation(format!("relation {relation} has no support pairs")))?;
    Ok(GateProfile {
        relation: relation.to_string(),
        weights,
    })
}

pub fn gates_csv(profiles: &[GateProfile]) -> String {
    let m = profiles.first().map_or(0, |p| p.weights.len());
    let mut out = String::from("relation");
    for i in 0..m {
        let _ = write!(out, ",expert_{i}");
    }
    out.push('\n');
    for p in profiles {
        out.push_str(&p.relation);
        for w in &p.weights {
            let _ = write!(out, ",{w:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_gates_csv(path: &Path, profiles: &[GateProfile]) -> Result<()> {
    std::fs::write(path, gates_csv(profiles)).map_err(|e| Error::io(path, e))
}

/// Zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (ops::l2_norm(a), ops::l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        ops::dot(a, b) / (na * nb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClusterSimilarity {
    pub intra: f64,
    pub inter: f64,
    pub intra_pairs: usize,
    pub inter_pairs: usize,
}

impl ClusterSimilarity {
    pub fn separated(&self) -> bool {
        self.intra_pairs > 0 && self.inter_pairs > 0 && self.intra > self.inter
    }
}

/// Mean pairwise cosine similarity of profiles within and across clusters.
/// Profiles without a cluster label are ignored.
pub fn cluster_similarity(
    profiles: &[GateProfile],
    clusters: &BTreeMap<String, usize>,
) -> ClusterSimilarity {
    let labeled: Vec<(&GateProfile, usize)> = profiles
        .iter()
        .filter_map(|p| clusters.get(&p.relation).map(|&c| (p, c)))
        .collect();
    let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0, 0);
    for (i, (a, ca)) in labeled.iter().enumerate() {
        for (b, cb) in &labeled[i + 1..] {
            let s = cosine(&a.weights, &b.weights);
            if ca == cb {
                intra += s;
                ni += 1;
            } else {
                inter += s;
                nx += 1;
            }
        }
    }
    ClusterSimilarity {
        intra: if ni > 0 { intra / ni as f64 } else { f64::NAN },
        inter: if nx > 0 { inter / nx as f64 } else { f64::NAN },
        intra_pairs: ni,
        inter_pairs: nx,
    }
}
