use mtm_autodiff::{Gradients, Tape, Tensor, Var};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Whether the L2 penalty applies (weight matrices only).
    pub decay: bool,
}

/// Ordered, named parameter tensors of one model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, decay: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.entries.iter().all(|p| p.name != name), "duplicate parameter {name}");
        self.entries.push(Param { name, tensor, decay });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Number of scalars that receive gradients.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|p| p.tensor.requires_grad)
            .map(|p| p.tensor.numel())
            .sum()
    }

    /// Copies values from `(name, shape, data)` triples; every parameter must
    /// be present with a matching shape.
    pub fn load<'s>(&mut self, values: impl IntoIterator<Item = (&'s str, &'s [usize], &'s [f64])>) -> Result<()> {
        let mut seen = vec![false; self.entries.len()];
        for (name, shape, data) in values {
            let id = self
                .find(name)
                .ok_or_else(|| CoreError::Checkpoint(format!("unexpected parameter {name}")))?;
            let p = &mut self.entries[id.0];
            if p.tensor.shape != shape || data.len() != p.tensor.numel() {
                return Err(CoreError::Checkpoint(format!(
                    "parameter {name}: shape {shape:?} does not match {:?}",
                    p.tensor.shape
                )));
            }
            p.tensor.data.copy_from_slice(data);
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(CoreError::Checkpoint(format!(
                "missing parameter {}",
                self.entries[missing].name
            )));
        }
        Ok(())
    }
}

/// A tape plus lazy binding of store parameters to leaf variables.
pub struct Graph<'a> {
    pub tape: Tape<'a>,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id));
        self.bound[id.0] = Some(v);
        v
    }

    /// Gradients of every bound trainable parameter.
    pub fn param_grads<'g>(&self, grads: &'g Gradients) -> Vec<(ParamId, &'g [f64])> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.and_then(|v| grads.get(v)).map(|g| (ParamId(i), g)))
            .collect()
    }
}
