use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Index of a group inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(pub usize);

#[derive(Clone, Debug)]
pub struct ParamGroup {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
    /// Embedding tables: gradients touch few rows, and the optimizer only
    /// updates rows that received gradient.
    pub row_sparse: bool,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros_like(&value);
        ParamGroup {
            name: name.into(),
            value,
            grad,
            trainable: true,
            row_sparse: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    groups: Vec<ParamGroup>,
    by_name: HashMap<String, GroupId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, group: ParamGroup) -> Result<GroupId> {
        if self.by_name.contains_key(&group.name) {
            return Err(Error::Config(format!(
                "duplicate parameter group `{}`",
                group.name
            )));
        }
        let id = GroupId(self.groups.len());
        self.by_name.insert(group.name.clone(), id);
        self.groups.push(group);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<GroupId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, id: GroupId) -> &ParamGroup {
        &self.groups[id.0]
    }

    pub fn group_mut(&mut self, id: GroupId) -> &mut ParamGroup {
        &mut self.groups[id.0]
    }

    pub fn value(&self, id: GroupId) -> &Tensor {
        &self.groups[id.0].value
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    pub fn ids(&self) -> impl Iterator<Item = GroupId> {
        (0..self.groups.len()).map(GroupId)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.groups {
            g.grad.fill(0.0);
        }
    }

    pub fn grads_are_zero(&self) -> bool {
        self.groups
            .iter()
            .all(|g| g.grad.as_slice().iter().all(|&x| x == 0.0))
    }

    /// Adds a gradient buffer into the stored grads. Buffers are applied in
    /// the order the caller passes them, so reductions are reproducible.
    pub fn accumulate(&mut self, buf: &GradBuffer) {
        for (i, entry) in buf.entries.iter().enumerate() {
            let grad = self.groups[i].grad.as_mut_slice();
            match entry {
                GroupGrad::Empty => {}
                GroupGrad::Dense(d) => {
                    for (g, x) in grad.iter_mut().zip(d) {
                        *g += x;
                    }
                }
                GroupGrad::Rows { cols, rows } => {
                    for (r, vals) in rows {
                        let dst = &mut grad[r * cols..(r + 1) * cols];
                        for (g, x) in dst.iter_mut().zip(vals) {
                            *g += x;
                        }
                    }
                }
            }
        }
    }

    /// Order-sensitive 64-bit FNV-1a digest over names and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for g in &self.groups {
            eat(g.name.as_bytes());
            for v in g.value.as_slice() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    pub fn num_values(&self) -> usize {
        self.groups.iter().map(|g| g.value.len()).sum()
    }
}

#[derive(Clone, Debug)]
enum GroupGrad {
    Empty,
    Dense(Vec<f64>),
    Rows {
        cols: usize,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

/// Scratch gradients for one unit of work (typically one task), laid out to
/// mirror a [`ParamStore`]. Row-sparse groups are stored as a row map so a
/// worker never allocates a full embedding table.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    entries: Vec<GroupGrad>,
    shapes: Vec<(usize, usize, bool)>,
}

impl GradBuffer {
    pub fn for_store(store: &ParamStore) -> Self {
        GradBuffer {
            entries: vec![GroupGrad::Empty; store.len()],
            shapes: store
                .groups
                .iter()
                .map(|g| (g.value.rows(), g.value.cols(), g.row_sparse))
                .collect(),
        }
    }

    pub fn dense_mut(&mut self, id: GroupId) -> &mut [f64] {
        let (rows, cols, sparse) = self.shapes[id.0];
        debug_assert!(!sparse, "dense access to row-sparse group");
        let entry = &mut self.entries[id.0];
        if matches!(entry, GroupGrad::Empty) {
            *entry = GroupGrad::Dense(vec![0.0; rows * cols]);
        }
        match entry {
            GroupGrad::Dense(d) => d,
            _ => unreachable!(),
        }
    }

    /// Two distinct dense groups at once, e.g. a weight and its bias.
    pub fn dense_pair_mut(&mut self, a: GroupId, b: GroupId) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a, b, "dense_pair_mut needs distinct groups");
        self.dense_mut(a);
        self.dense_mut(b);
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        let (left, right) = self.entries.split_at_mut(hi);
        let (GroupGrad::Dense(x), GroupGrad::Dense(y)) = (&mut left[lo], &mut right[0]) else {
            unreachable!()
        };
        if a.0 < b.0 {
            (x, y)
        } else {
            (y, x)
        }
    }

    pub fn row_mut(&mut self, id: GroupId, row: usize) -> &mut [f64] {
        let (_, cols, sparse) = self.shapes[id.0];
        let entry = &mut self.entries[id.0];
        if matches!(entry, GroupGrad::Empty) {
            *entry = if sparse {
                GroupGrad::Rows {
                    cols,
                    rows: BTreeMap::new(),
                }
            } else {
                GroupGrad::Dense(vec![0.0; self.shapes[id.0].0 * cols])
            };
        }
        match entry {
            GroupGrad::Rows { cols, rows } => rows.entry(row).or_insert_with(|| vec![0.0; *cols]),
            GroupGrad::Dense(d) => &mut d[row * cols..(row + 1) * cols],
            GroupGrad::Empty => unreachable!(),
        }
    }

    /// Dense copy of one group's gradient (zeros if untouched).
    pub fn to_dense(&self, id: GroupId) -> Vec<f64> {
        let (rows, cols, _) = self.shapes[id.0];
        match &self.entries[id.0] {
            GroupGrad::Empty => vec![0.0; rows * cols],
            GroupGrad::Dense(d) => d.clone(),
            GroupGrad::Rows { rows: map, .. } => {
                let mut out = vec![0.0; rows * cols];
                for (r, vals) in map {
                    out[r * cols..(r + 1) * cols].copy_from_slice(vals);
                }
                out
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| match e {
            GroupGrad::Empty => true,
            GroupGrad::Dense(d) => d.iter().all(|x| x.is_finite()),
            GroupGrad::Rows { rows, .. } => rows.values().flatten().all(|x| x.is_finite()),
        })
    }

    pub fn is_touched(&self, id: GroupId) -> bool {
        !matches!(self.entries[id.0], GroupGrad::Empty)
    }
}
