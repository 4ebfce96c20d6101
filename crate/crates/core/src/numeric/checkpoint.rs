use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{AdamState, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedGroup {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Every parameter group, the optimizer state, and the run seed, as one JSON
/// document. `meta` carries whatever the owner needs to rebuild the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub groups: Vec<SavedGroup>,
    pub adam: Option<AdamState>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn capture(
        store: &ParamStore,
        adam: Option<&AdamState>,
        seed: u64,
        step: u64,
        meta: serde_json::Value,
    ) -> Self {
        Checkpoint {
            seed,
            step,
            groups: store
                .groups()
                .iter()
                .map(|g| SavedGroup {
                    name: g.name.clone(),
                    shape: g.value.shape().to_vec(),
                    values: g.value.as_slice().to_vec(),
                })
                .collect(),
            adam: adam.cloned(),
            meta,
        }
    }

    /// Copies saved values into a store with the same layout.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.groups.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter groups, model expects {}",
                self.groups.len(),
                store.len()
            )));
        }
        for (saved, group) in self.groups.iter().zip(store.groups_mut()) {
            if saved.name != group.name || saved.shape != group.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "group `{}` {:?} does not match model group `{}` {:?}",
                    saved.name,
                    saved.shape,
                    group.name,
                    group.value.shape()
                )));
            }
            group.value = Tensor::new(saved.shape.clone(), saved.values.clone())?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
