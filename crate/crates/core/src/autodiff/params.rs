use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Gradients, Tensor, Trace, Var};
use crate::error::{DeaError, Result};

/// Named parameter matrices in a stable (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

/// Leaf handles of a [`ParamStore`] on one trace.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    /// Panics on unknown names; parameter names are fixed by the model code.
    pub fn get(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter {name} not bound"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Adds every parameter to `trace` as a differentiable leaf.
    pub fn bind(&self, trace: &mut Trace) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), trace.param(v.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Values in name order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.values().cloned().collect()
    }

    /// Associates existing records, given in name order, with the names.
    pub fn bind_vars(&self, vars: &[Var]) -> BoundParams {
        assert_eq!(vars.len(), self.params.len(), "one record per parameter");
        BoundParams {
            vars: self.params.keys().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    /// Adds every parameter as a constant (no gradient).
    pub fn bind_frozen(&self, trace: &mut Trace) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), trace.constant(v.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Per-parameter gradients, zero where a parameter did not reach the loss.
    pub fn collect_grads(&self, bound: &BoundParams, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.params
            .iter()
            .map(|(k, v)| {
                let g = bound
                    .try_get(k)
                    .map(|var| grads.get_or_zeros(var, v))
                    .unwrap_or_else(|| Array2::zeros(v.raw_dim()));
                (k.clone(), g)
            })
            .collect()
    }

    /// Union with `other`; names must not collide.
    pub fn merged(&self, other: &ParamStore) -> Result<ParamStore> {
        let mut out = self.clone();
        for (k, v) in &other.params {
            if out.params.insert(k.clone(), v.clone()).is_some() {
                return Err(DeaError::Contract(format!("duplicate parameter {k}")));
            }
        }
        Ok(out)
    }

    /// Parameters whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoredTensor {
    shape: [usize; 2],
    values: Vec<f64>,
}

/// Serialized model state: parameters plus free-form metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub meta: serde_json::Value,
    params: BTreeMap<String, StoredTensor>,
}

const FORMAT: &str = "dea-checkpoint";

impl Checkpoint {
    pub fn new(params: &ParamStore, meta: serde_json::Value) -> Self {
        let params = params
            .iter()
            .map(|(k, v)| {
                let (r, c) = v.dim();
                (
                    k.clone(),
                    StoredTensor {
                        shape: [r, c],
                        values: v.iter().copied().collect(),
                    },
                )
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: 1,
            meta,
            params,
        }
    }

    pub fn params(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (k, t) in &self.params {
            let value = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.values.clone())
                .map_err(|_| {
                    DeaError::Checkpoint(format!(
                        "parameter {k}: {} values do not fill shape {:?}",
                        t.values.len(),
                        t.shape
                    ))
                })?;
            store.insert(k.clone(), value);
        }
        Ok(store)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT || ck.version != 1 {
            return Err(DeaError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.params()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| DeaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DeaError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_mismatched_shape() {
        let text = r#"{"format":"dea-checkpoint","version":1,"meta":null,
            "params":{"w":{"shape":[2,2],"values":[1.0,2.0,3.0]}}}"#;
        assert!(matches!(Checkpoint::from_json(text), Err(DeaError::Checkpoint(_))));
    }

    #[test]
    fn file_round_trip() {
        let mut p = ParamStore::new();
        p.insert("a", Array2::from_elem((2, 3), 0.1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        Checkpoint::new(&p, serde_json::json!({"encoder": "gcn"})).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params().unwrap(), p);
        assert_eq!(back.meta["encoder"], "gcn");
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            raw in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 25),
        ) {
            let mut p = ParamStore::new();
            p.insert("x", Array2::from_shape_vec((rows, cols), raw[..rows * cols].to_vec()).unwrap());
            let back = Checkpoint::from_json(&Checkpoint::new(&p, serde_json::Value::Null).to_json().unwrap())
                .unwrap()
                .params()
                .unwrap();
            let (a, b) = (p.get("x").unwrap(), back.get("x").unwrap());
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
