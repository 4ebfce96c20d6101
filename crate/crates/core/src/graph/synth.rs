//! Desk-scale knowledge graphs with planted relation clusters.
//!
//! Entities live at random points of a latent space. Each cluster owns a
//! translation vector; its relations use that translation plus per-relation
//! noise. A pair (h, t) is planted when t is the entity nearest
//! `h + translation` (or h the one nearest `t - translation` for 1-N), so the
//! cardinality profile comes from which heads are kept and how they group.
//! The output is a [`RawDataset`] in the on-disk layout the loader reads.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::dataset::NamedTriplet;
use crate::graph::{Category, KnowledgeGraph, RawDataset, TaskSplit};

pub const META_FILE: &str = "synth_meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CardinalityMix {
    pub one_to_one: f64,
    pub one_to_many: f64,
    pub many_to_one: f64,
    pub many_to_many: f64,
}

impl Default for CardinalityMix {
    fn default() -> Self {
        CardinalityMix {
            one_to_one: 0.25,
            one_to_many: 0.25,
            many_to_one: 0.25,
            many_to_many: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_entities: usize,
    pub num_clusters: usize,
    /// Task relations, spread round-robin over the clusters.
    pub num_relations: usize,
    pub triplets_per_relation: usize,
    pub latent_dim: usize,
    /// Norm of each cluster's planted translation.
    pub cluster_scale: f64,
    /// Per-relation deviation from the cluster translation, relative to
    /// `cluster_scale`. Zero makes a cluster's relations share one offset.
    pub relation_noise: f64,
    /// Multiplicity used on the "N" side of a relation.
    pub fanout: usize,
    pub cardinality: CardinalityMix,
    pub background_relations: usize,
    pub background_triplets_per_relation: usize,
    /// Candidate list length per task relation (true tails always included).
    pub candidates_per_relation: usize,
    pub dev_per_cluster: usize,
    pub test_per_cluster: usize,
    /// Also write `entity_embeddings.tsv` with the planted points plus noise.
    pub emit_embeddings: bool,
    pub embedding_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_entities: 200,
            num_clusters: 2,
            num_relations: 8,
            triplets_per_relation: 40,
            latent_dim: 8,
            cluster_scale: 1.0,
            relation_noise: 0.3,
            fanout: 3,
            cardinality: CardinalityMix::default(),
            background_relations: 6,
            background_triplets_per_relation: 150,
            candidates_per_relation: 60,
            dev_per_cluster: 1,
            test_per_cluster: 1,
            emit_embeddings: false,
            embedding_noise: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.num_clusters == 0 || self.num_relations == 0 {
            return err("need at least one cluster and one relation".into());
        }
        if self.num_clusters > self.num_relations {
            return err(format!(
                "{} clusters cannot be filled by {} relations",
                self.num_clusters, self.num_relations
            ));
        }
        let smallest = self.num_relations / self.num_clusters;
        let per_cluster_tasks = self.dev_per_cluster + self.test_per_cluster + 1;
        if smallest < per_cluster_tasks {
            return err(format!(
                "each cluster needs {per_cluster_tasks} relations (train + {} dev + {} test), smallest has {smallest}",
                self.dev_per_cluster, self.test_per_cluster
            ));
        }
        if self.latent_dim == 0 || self.fanout == 0 {
            return err("latent_dim and fanout must be positive".into());
        }
        if self.triplets_per_relation < 2 {
            return err("triplets_per_relation must be at least 2".into());
        }
        if self.num_entities < 2 * self.triplets_per_relation {
            return err(format!(
                "{} entities cannot host {} distinct triplets per relation",
                self.num_entities, self.triplets_per_relation
            ));
        }
        let m = &self.cardinality;
        let weights = [m.one_to_one, m.one_to_many, m.many_to_one, m.many_to_many];
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0
        {
            return err("cardinality mix weights must be non-negative with a positive sum".into());
        }
        if self.relation_noise < 0.0 || self.embedding_noise < 0.0 {
            return err("noise levels must be non-negative".into());
        }
        Ok(())
    }

    /// Deterministic category per relation index, proportional to the mix.
    fn profiles(&self) -> Vec<Category> {
        let m = &self.cardinality;
        let w = [m.one_to_one, m.one_to_many, m.many_to_one, m.many_to_many];
        let total: f64 = w.iter().sum();
        let n = self.num_relations;
        // largest-remainder apportionment
        let quotas: Vec<f64> = w.iter().map(|x| x / total * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut left = n - counts.iter().sum::<usize>();
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        let mut out = Vec::with_capacity(n);
        for (cat, count) in Category::ALL.into_iter().zip(counts) {
            out.extend(std::iter::repeat_n(cat, count));
        }
        // Grouped order: with round-robin cluster assignment each cluster
        // walks through the categories.
        out
    }
}

/// Generated dataset plus the planted ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub raw: RawDataset,
    pub meta: SynthMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    /// Task relation name → cluster index.
    pub clusters: BTreeMap<String, usize>,
    /// Task relation name → planted cardinality profile.
    pub profiles: BTreeMap<String, Category>,
    /// Task relation name → planted translation.
    pub offsets: BTreeMap<String, Vec<f64>>,
}

impl SynthMeta {
    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(META_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Parse {
                file: META_FILE.into(),
                message: e.to_string(),
            })
    }
}

impl SyntheticDataset {
    pub fn build(&self) -> Result<(KnowledgeGraph, TaskSplit)> {
        self.raw.build()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.raw.write(dir)?;
        let text = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        let path = dir.join(META_FILE);
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn shifted(x: &[f64], offset: &[f64], sign: f64) -> Vec<f64> {
    x.iter().zip(offset).map(|(a, b)| a + sign * b).collect()
}

/// Entities from `pool` ordered by distance to `target`, skipping `exclude`.
fn nearest(
    points: &[Vec<f64>],
    target: &[f64],
    pool: &[usize],
    exclude: &HashSet<usize>,
    k: usize,
) -> Vec<usize> {
    let mut cands: Vec<(f64, usize)> = pool
        .iter()
        .filter(|e| !exclude.contains(e))
        .map(|&e| (sq_dist(&points[e], target), e))
        .collect();
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    cands.into_iter().take(k).map(|c| c.1).collect()
}

/// `map[e]` is the entity nearest `e + sign * offset`, other than `e` itself.
fn translation_map(points: &[Vec<f64>], offset: &[f64], sign: f64) -> Vec<usize> {
    let all: Vec<usize> = (0..points.len()).collect();
    (0..points.len())
        .map(|e| {
            let skip: HashSet<usize> = [e].into();
            nearest(points, &shifted(&points[e], offset, sign), &all, &skip, 1)[0]
        })
        .collect()
}

/// Images hit by at least two sources under `map`, each with up to `fanout`
/// of its sources, in random order.
fn shared_images<R: Rng + ?Sized>(
    rng: &mut R,
    map: &[usize],
    fanout: usize,
) -> Vec<(usize, Vec<usize>)> {
    let mut preimages: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (src, &img) in map.iter().enumerate() {
        preimages.entry(img).or_default().push(src);
    }
    let mut groups: Vec<_> = preimages
        .into_iter()
        .filter(|(_, s)| s.len() >= 2)
        .collect();
    groups.shuffle(rng);
    for (_, srcs) in &mut groups {
        srcs.shuffle(rng);
        srcs.truncate(fanout);
    }
    groups
}

/// Star groups around fresh anchors: each anchor takes the `fanout` unused
/// entities nearest `anchor + sign * offset`. Returns (anchor, member) pairs.
fn anchored_groups<R: Rng + ?Sized>(
    rng: &mut R,
    points: &[Vec<f64>],
    offset: &[f64],
    sign: f64,
    used: &mut HashSet<usize>,
    want: usize,
    fanout: usize,
) -> Vec<(usize, usize)> {
    let all: Vec<usize> = (0..points.len()).collect();
    let mut out = Vec::new();
    for a in index::sample(rng, points.len(), points.len()) {
        if out.len() >= want {
            break;
        }
        if !used.insert(a) {
            continue;
        }
        for m in nearest(
            points,
            &shifted(&points[a], offset, sign),
            &all,
            used,
            fanout,
        ) {
            used.insert(m);
            out.push((a, m));
        }
    }
    out
}

fn relation_pairs<R: Rng + ?Sized>(
    rng: &mut R,
    points: &[Vec<f64>],
    offset: &[f64],
    category: Category,
    n_triplets: usize,
    fanout: usize,
) -> Vec<(usize, usize)> {
    let n = points.len();
    let all: Vec<usize> = (0..n).collect();
    let mut pairs = Vec::with_capacity(n_triplets);
    match category {
        Category::OneToOne => {
            let fwd = translation_map(points, offset, 1.0);
            let order = index::sample(rng, n, n).into_vec();
            let mut heads = HashSet::new();
            let mut tails = HashSet::new();
            for &h in &order {
                if pairs.len() == n_triplets {
                    break;
                }
                if tails.insert(fwd[h]) {
                    heads.insert(h);
                    pairs.push((h, fwd[h]));
                }
            }
            // too few distinct images: settle for the nearest free tail
            for &h in &order {
                if pairs.len() == n_triplets {
                    break;
                }
                if heads.contains(&h) {
                    continue;
                }
                let mut skip = tails.clone();
                skip.insert(h);
                if let Some(&t) =
                    nearest(points, &shifted(&points[h], offset, 1.0), &all, &skip, 1).first()
                {
                    tails.insert(t);
                    heads.insert(h);
                    pairs.push((h, t));
                }
            }
        }
        Category::ManyToOne => {
            let fwd = translation_map(points, offset, 1.0);
            let mut used = HashSet::new();
            for (t, hs) in shared_images(rng, &fwd, fanout) {
                if pairs.len() >= n_triplets {
                    break;
                }
                used.insert(t);
                for h in hs {
                    used.insert(h);
                    pairs.push((h, t));
                }
            }
            let missing = n_triplets.saturating_sub(pairs.len());
            for (t, h) in anchored_groups(rng, points, offset, -1.0, &mut used, missing, fanout) {
                pairs.push((h, t));
            }
        }
        Category::OneToMany => {
            let back = translation_map(points, offset, -1.0);
            let mut used = HashSet::new();
            for (h, ts) in shared_images(rng, &back, fanout) {
                if pairs.len() >= n_triplets {
                    break;
                }
                used.insert(h);
                for t in ts {
                    used.insert(t);
                    pairs.push((h, t));
                }
            }
            let missing = n_triplets.saturating_sub(pairs.len());
            pairs.extend(anchored_groups(
                rng, points, offset, 1.0, &mut used, missing, fanout,
            ));
        }
        Category::ManyToMany => {
            let groups = n_triplets.div_ceil(fanout);
            let heads = index::sample(rng, n, groups).into_vec();
            let head_set: HashSet<usize> = heads.iter().copied().collect();
            let mut pool = BTreeSet::new();
            for &h in &heads {
                let mut skip = head_set.clone();
                skip.extend(pool.iter().copied());
                if let Some(&t) =
                    nearest(points, &shifted(&points[h], offset, 1.0), &all, &skip, 1).first()
                {
                    pool.insert(t);
                }
            }
            let pool: Vec<usize> = pool.into_iter().collect();
            let none = HashSet::new();
            for &h in &heads {
                for t in nearest(
                    points,
                    &shifted(&points[h], offset, 1.0),
                    &pool,
                    &none,
                    fanout,
                ) {
                    pairs.push((h, t));
                }
            }
        }
    }
    pairs.truncate(n_triplets);
    pairs
}

pub fn entity_name(i: usize) -> String {
    format!("e{i:04}")
}

/// Builds a clustered dataset. Fully determined by `config` and the RNG state.
pub fn generate_synthetic<R: Rng + ?Sized>(
    config: &SynthConfig,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    config.validate()?;
    let dim = config.latent_dim;
    let unit = 1.0 / (dim as f64).sqrt();
    let points: Vec<Vec<f64>> = (0..config.num_entities)
        .map(|_| gaussian(rng, dim, unit))
        .collect();

    let cluster_offsets: Vec<Vec<f64>> = (0..config.num_clusters)
        .map(|_| {
            let v = gaussian(rng, dim, 1.0);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter()
                .map(|x| x / norm * config.cluster_scale)
                .collect()
        })
        .collect();

    let mut raw = RawDataset {
        ent2ids: Some(
            (0..config.num_entities)
                .map(|i| (entity_name(i), i))
                .collect(),
        ),
        ..Default::default()
    };

    for b in 0..config.background_relations {
        let name = format!("bg{b:02}");
        let offset = gaussian(rng, dim, config.cluster_scale * unit);
        let heads = index::sample(
            rng,
            config.num_entities,
            config
                .background_triplets_per_relation
                .min(config.num_entities),
        );
        let all: Vec<usize> = (0..config.num_entities).collect();
        for h in heads {
            let skip: HashSet<usize> = [h].into();
            let t = nearest(&points, &shifted(&points[h], &offset, 1.0), &all, &skip, 1)[0];
            raw.background
                .push([entity_name(h), name.clone(), entity_name(t)]);
        }
    }

    let profiles = config.profiles();
    let mut meta = SynthMeta {
        clusters: BTreeMap::new(),
        profiles: BTreeMap::new(),
        offsets: BTreeMap::new(),
    };
    let mut by_cluster: Vec<Vec<String>> = vec![Vec::new(); config.num_clusters];
    let noise_scale = config.relation_noise * config.cluster_scale * unit;
    for (i, &category) in profiles.iter().enumerate() {
        let cluster = i % config.num_clusters;
        let name = format!("c{cluster}_r{:02}", i / config.num_clusters);
        let offset: Vec<f64> = cluster_offsets[cluster]
            .iter()
            .zip(gaussian(rng, dim, noise_scale))
            .map(|(c, n)| c + n)
            .collect();
        let mut pairs = relation_pairs(
            rng,
            &points,
            &offset,
            category,
            config.triplets_per_relation,
            config.fanout,
        );
        pairs.shuffle(rng);
        let triplets: Vec<NamedTriplet> = pairs
            .iter()
            .map(|&(h, t)| [entity_name(h), name.clone(), entity_name(t)])
            .collect();

        let tails: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        let mut cands = tails.clone();
        let extra = config.candidates_per_relation.saturating_sub(tails.len());
        let others: Vec<usize> = (0..config.num_entities)
            .filter(|e| !tails.contains(e))
            .collect();
        for j in index::sample(rng, others.len(), extra.min(others.len())) {
            cands.insert(others[j]);
        }
        raw.candidates
            .insert(name.clone(), cands.into_iter().map(entity_name).collect());

        meta.clusters.insert(name.clone(), cluster);
        meta.profiles.insert(name.clone(), category);
        meta.offsets.insert(name.clone(), offset);
        by_cluster[cluster].push(name.clone());
        raw.train.insert(name, triplets);
    }

    // cluster-stratified split
    for names in &mut by_cluster {
        names.shuffle(rng);
        for (j, name) in names.iter().enumerate() {
            let target = if j < config.test_per_cluster {
                Some(&mut raw.test)
            } else if j < config.test_per_cluster + config.dev_per_cluster {
                Some(&mut raw.dev)
            } else {
                None
            };
            if let Some(target) = target {
                let trips = raw.train.remove(name).unwrap();
                target.insert(name.clone(), trips);
            }
        }
    }

    if config.emit_embeddings {
        raw.embeddings = Some(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let noisy = p
                        .iter()
                        .zip(gaussian(rng, dim, config.embedding_noise * unit))
                        .map(|(a, b)| a + b)
                        .collect();
                    (entity_name(i), noisy)
                })
                .collect(),
        );
    }

    Ok(SyntheticDataset { raw, meta })
}
