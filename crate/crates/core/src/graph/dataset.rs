use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Partition, TaskPool, TaskSplit, Triplet, Vocab};

pub const PATH_GRAPH: &str = "path_graph";
pub const CANDIDATES: &str = "rel2candidates.json";
pub const ENT2IDS: &str = "ent2ids.json";
pub const REL2IDS: &str = "rel2ids.json";
pub const EMBEDDINGS: &str = "entity_embeddings.tsv";

/// Required files of a dataset directory.
pub const DATASET_FILES: [&str; 5] = [
    PATH_GRAPH,
    "train_tasks.json",
    "dev_tasks.json",
    "test_tasks.json",
    CANDIDATES,
];

pub type NamedTriplet = [String; 3];

/// A dataset as names, exactly as it sits on disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawDataset {
    pub background: Vec<NamedTriplet>,
    pub train: BTreeMap<String, Vec<NamedTriplet>>,
    pub dev: BTreeMap<String, Vec<NamedTriplet>>,
    pub test: BTreeMap<String, Vec<NamedTriplet>>,
    pub candidates: BTreeMap<String, Vec<String>>,
    pub ent2ids: Option<BTreeMap<String, usize>>,
    pub rel2ids: Option<BTreeMap<String, usize>>,
    pub embeddings: Option<Vec<(String, Vec<f64>)>>,
}

/// Reads, validates, and indexes a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<(KnowledgeGraph, TaskSplit)> {
    RawDataset::read(dir)?.build()
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let text = read_text(dir, name)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: name.to_string(),
        message: e.to_string(),
    })
}

fn read_optional_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Option<T>> {
    if dir.join(name).exists() {
        read_json(dir, name).map(Some)
    } else {
        Ok(None)
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        file: name.to_string(),
        message: e.to_string(),
    })?;
    write_file(dir, name, &(text + "\n"))
}

impl RawDataset {
    pub fn read(dir: &Path) -> Result<Self> {
        // Report a missing required file before any parse error.
        for name in DATASET_FILES {
            if !dir.join(name).is_file() {
                return Err(Error::io(
                    dir.join(name),
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "required dataset file missing",
                    ),
                ));
            }
        }
        let mut background = Vec::new();
        for (lineno, line) in read_text(dir, PATH_GRAPH)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    file: PATH_GRAPH.into(),
                    message: format!(
                        "line {}: expected head<TAB>relation<TAB>tail, got {line:?}",
                        lineno + 1
                    ),
                });
            }
            background.push([
                parts[0].to_string(),
                parts[1].to_string(),
                parts[2].trim_end_matches('\r').to_string(),
            ]);
        }
        let embeddings = if dir.join(EMBEDDINGS).exists() {
            Some(parse_embeddings(&read_text(dir, EMBEDDINGS)?)?)
        } else {
            None
        };
        Ok(RawDataset {
            background,
            train: read_json(dir, Partition::Train.file_name())?,
            dev: read_json(dir, Partition::Dev.file_name())?,
            test: read_json(dir, Partition::Test.file_name())?,
            candidates: read_json(dir, CANDIDATES)?,
            ent2ids: read_optional_json(dir, ENT2IDS)?,
            rel2ids: read_optional_json(dir, REL2IDS)?,
            embeddings,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut graph = String::new();
        for [h, r, t] in &self.background {
            graph.push_str(&format!("{h}\t{r}\t{t}\n"));
        }
        write_file(dir, PATH_GRAPH, &graph)?;
        write_json(dir, Partition::Train.file_name(), &self.train)?;
        write_json(dir, Partition::Dev.file_name(), &self.dev)?;
        write_json(dir, Partition::Test.file_name(), &self.test)?;
        write_json(dir, CANDIDATES, &self.candidates)?;
        if let Some(m) = &self.ent2ids {
            write_json(dir, ENT2IDS, m)?;
        }
        if let Some(m) = &self.rel2ids {
            write_json(dir, REL2IDS, m)?;
        }
        if let Some(rows) = &self.embeddings {
            let mut text = String::new();
            for (name, v) in rows {
                text.push_str(name);
                for x in v {
                    text.push('\t');
                    text.push_str(&x.to_string());
                }
                text.push('\n');
            }
            write_file(dir, EMBEDDINGS, &text)?;
        }
        Ok(())
    }

    fn partitions(&self) -> [(Partition, &BTreeMap<String, Vec<NamedTriplet>>); 3] {
        [
            (Partition::Train, &self.train),
            (Partition::Dev, &self.dev),
            (Partition::Test, &self.test),
        ]
    }

    fn entity_vocab(&self) -> Result<Vocab> {
        match &self.ent2ids {
            Some(map) => vocab_from_ids(map, ENT2IDS),
            None => {
                let names: BTreeSet<&String> = self
                    .background
                    .iter()
                    .flat_map(|[h, _, t]| [h, t])
                    .collect();
                Ok(Vocab::from_names(names.into_iter().cloned().collect()))
            }
        }
    }

    /// Background relations, then inverses, then task relations.
    fn relation_vocab(&self) -> Result<(Vocab, usize)> {
        let background: BTreeSet<&String> = self.background.iter().map(|[_, r, _]| r).collect();
        let tasks: BTreeSet<&String> = self
            .partitions()
            .iter()
            .flat_map(|(_, p)| p.keys())
            .collect();
        let order = |names: BTreeSet<&String>| -> Result<Vec<String>> {
            let mut v: Vec<String> = names.into_iter().cloned().collect();
            if let Some(ids) = &self.rel2ids {
                for name in &v {
                    if !ids.contains_key(name) {
                        return Err(Error::Validation(format!(
                            "relation {name:?} is not listed in {REL2IDS}"
                        )));
                    }
                }
                v.sort_by_key(|n| ids[n]);
            }
            Ok(v)
        };
        let background = order(background)?;
        let tasks = order(tasks)?;
        let b = background.len();
        let mut names = background.clone();
        names.extend(background.iter().map(|r| format!("{r}_inv")));
        names.extend(tasks);
        let vocab = Vocab::from_names(names);
        if vocab.ids.len() != vocab.names.len() {
            return Err(Error::Validation(
                "relation names collide with generated inverse names (`<name>_inv`)".into(),
            ));
        }
        Ok((vocab, b))
    }

    /// Validates and indexes the dataset.
    pub fn build(&self) -> Result<(KnowledgeGraph, TaskSplit)> {
        let entities = self.entity_vocab()?;
        let (relations, num_bg) = self.relation_vocab()?;

        let entity = |name: &str, context: &dyn Fn() -> String| -> Result<usize> {
            entities
                .id(name)
                .ok_or_else(|| Error::Validation(format!("{}: unknown entity {name:?}", context())))
        };

        let mut background = Vec::with_capacity(self.background.len());
        let mut neighbor_index = vec![Vec::new(); entities.len()];
        let mut triplet_set = HashSet::new();
        let mut pairs_by_relation = vec![Vec::new(); relations.len()];
        for (lineno, [h, r, t]) in self.background.iter().enumerate() {
            let ctx = || format!("{PATH_GRAPH} line {}", lineno + 1);
            let head = entity(h, &ctx)?;
            let tail = entity(t, &ctx)?;
            let rel = relations.id(r).expect("background relation in vocab");
            let trip = Triplet::new(head, rel, tail);
            if triplet_set.insert(trip) {
                background.push(trip);
                pairs_by_relation[rel].push((head, tail));
                neighbor_index[head].push((rel, tail));
                neighbor_index[tail].push((rel + num_bg, head));
            }
        }

        let mut split = TaskSplit::default();
        let mut seen_relations: HashMap<usize, Partition> = HashMap::new();
        for (partition, tasks) in self.partitions() {
            let file = partition.file_name();
            let mut pool = TaskPool::new();
            for (rel_name, triplets) in tasks {
                let rel = relations.id(rel_name).expect("task relation in vocab");
                if rel < 2 * num_bg {
                    return Err(Error::Validation(format!(
                        "{file}: task relation {rel_name:?} also appears in {PATH_GRAPH}"
                    )));
                }
                if let Some(prev) = seen_relations.insert(rel, partition) {
                    return Err(Error::Validation(format!(
                        "task relation {rel_name:?} appears in both {} and {file}",
                        prev.file_name()
                    )));
                }
                let mut pairs = Vec::with_capacity(triplets.len());
                for (i, [h, r, t]) in triplets.iter().enumerate() {
                    let ctx =
                        || format!("{file} relation {rel_name:?} triplet #{i} [{h}, {r}, {t}]");
                    if r != rel_name {
                        return Err(Error::Validation(format!(
                            "{}: relation field does not match its key",
                            ctx()
                        )));
                    }
                    let head = entity(h, &ctx)?;
                    let tail = entity(t, &ctx)?;
                    if triplet_set.insert(Triplet::new(head, rel, tail)) {
                        pairs.push((head, tail));
                        pairs_by_relation[rel].push((head, tail));
                    }
                }
                pool.insert(rel, pairs);
            }
            match partition {
                Partition::Train => split.train = pool,
                Partition::Dev => split.dev = pool,
                Partition::Test => split.test = pool,
            }
        }

        let mut candidates = HashMap::new();
        for (partition, tasks) in self.partitions() {
            for rel_name in tasks.keys() {
                let rel = relations.id(rel_name).unwrap();
                let names = self.candidates.get(rel_name).ok_or_else(|| {
                    Error::Validation(format!(
                        "{CANDIDATES}: no candidate list for task relation {rel_name:?}"
                    ))
                })?;
                let mut seen = HashSet::new();
                let mut ids = Vec::with_capacity(names.len());
                for name in names {
                    let id = entity(name, &|| format!("{CANDIDATES} relation {rel_name:?}"))?;
                    if seen.insert(id) {
                        ids.push(id);
                    }
                }
                for &(h, t) in &split.pool(partition)[&rel] {
                    if !seen.contains(&t) {
                        return Err(Error::Validation(format!(
                            "{CANDIDATES}: relation {rel_name:?} candidates miss the true tail of query ({}, {})",
                            entities.name(h),
                            entities.name(t)
                        )));
                    }
                }
                candidates.insert(rel, Arc::<[usize]>::from(ids));
            }
        }

        let mut tail_counts = HashMap::new();
        for t in &triplet_set {
            *tail_counts.entry((t.head, t.relation)).or_insert(0) += 1;
        }

        let pretrained = match &self.embeddings {
            None => None,
            Some(rows) => Some(align_embeddings(rows, &entities)?),
        };

        Ok((
            KnowledgeGraph {
                entities,
                relations,
                num_background_relations: num_bg,
                background,
                neighbor_index,
                triplet_set,
                pairs_by_relation,
                candidates,
                tail_counts,
                pretrained,
            },
            split,
        ))
    }
}

fn vocab_from_ids(map: &BTreeMap<String, usize>, file: &str) -> Result<Vocab> {
    let mut names = vec![None; map.len()];
    for (name, &id) in map {
        match names.get_mut(id) {
            Some(slot @ None) => *slot = Some(name.clone()),
            Some(Some(other)) => {
                return Err(Error::Validation(format!(
                    "{file}: {name:?} and {other:?} share id {id}"
                )))
            }
            None => {
                return Err(Error::Validation(format!(
                    "{file}: id {id} of {name:?} is outside 0..{}",
                    map.len()
                )))
            }
        }
    }
    Ok(Vocab::from_names(
        names.into_iter().map(Option::unwrap).collect(),
    ))
}

fn parse_embeddings(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let name = parts.next().unwrap_or_default().to_string();
        let values = parts
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                file: EMBEDDINGS.into(),
                message: format!("line {}: {e}", lineno + 1),
            })?;
        if *dim.get_or_insert(values.len()) != values.len() || values.is_empty() {
            return Err(Error::Parse {
                file: EMBEDDINGS.into(),
                message: format!("line {}: inconsistent vector length", lineno + 1),
            });
        }
        rows.push((name, values));
    }
    Ok(rows)
}

fn align_embeddings(rows: &[(String, Vec<f64>)], entities: &Vocab) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Option<Vec<f64>>> = vec![None; entities.len()];
    for (name, v) in rows {
        let id = entities
            .id(name)
            .ok_or_else(|| Error::Validation(format!("{EMBEDDINGS}: unknown entity {name:?}")))?;
        out[id] = Some(v.clone());
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                Error::Validation(format!(
                    "{EMBEDDINGS}: no vector for entity {:?}",
                    entities.name(i)
                ))
            })
        })
        .collect()
}
