use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// Named parameters under a common namespace; tape keys are
/// `"namespace.name"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    namespace: String,
    params: BTreeMap<String, Param>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    store: ParamStore,
}

impl ParamStore {
    pub fn new(namespace: &str) -> Self {
        Self {
            namespace: namespace.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn key(&self, name: &str) -> String {
        format!("{}.{name}", self.namespace)
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.params.insert(
            name.to_string(),
            Param {
                value,
                trainable: true,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.params[name].value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self.params.get_mut(name).expect("unknown parameter").value
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) {
        if let Some(p) = self.params.get_mut(name) {
            p.trainable = trainable;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn freeze(&mut self) {
        self.params.values_mut().for_each(|p| p.trainable = false);
    }

    pub fn unfreeze(&mut self) {
        self.params.values_mut().for_each(|p| p.trainable = true);
    }

    pub fn is_frozen(&self) -> bool {
        self.params.values().all(|p| !p.trainable)
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn bytes(&self) -> usize {
        self.params.values().map(|p| p.value.bytes()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            store: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let found = raw
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse("checkpoint lacks format_version".into()))?;
        if found != CHECKPOINT_FORMAT_VERSION as u64 {
            return Err(Error::SchemaVersion {
                artifact: "checkpoint",
                found: found as u32,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let ck: Checkpoint = serde_json::from_value(raw)?;
        for (name, p) in &ck.store.params {
            let expected: usize = p.value.shape().iter().product();
            if expected != p.value.len() {
                return Err(Error::Shape(format!("parameter {name} has inconsistent shape")));
            }
        }
        Ok(ck.store)
    }
}

/// Parameter gradients keyed by `"namespace.name"`.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub(crate) fn new(map: BTreeMap<String, Tensor>) -> Self {
        Self { map }
    }

    pub fn get(&self, key: &str) -> Option<&Tensor> {
        self.map.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.map.values().all(Tensor::is_finite)
    }

    pub fn norm(&self) -> f64 {
        self.map
            .values()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay applied to weight matrices only.
    #[serde(default)]
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam over the joint view of several stores. Frozen parameters are left
/// untouched and accumulate no moments.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, stores: &mut [&mut ParamStore], grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for store in stores.iter_mut() {
            let ns = store.namespace.clone();
            for (name, p) in store.params.iter_mut() {
                if !p.trainable {
                    continue;
                }
                let key = format!("{ns}.{name}");
                let Some(g) = grads.get(&key) else { continue };
                let len = p.value.len();
                let decay = if p.value.shape().len() >= 2 { c.lr * c.weight_decay } else { 0.0 };
                let m = self.m.entry(key.clone()).or_insert_with(|| vec![0.0; len]);
                let v = self.v.entry(key).or_insert_with(|| vec![0.0; len]);
                for (((w, gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                    *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *w -= c.lr * mhat / (vhat.sqrt() + c.eps) + decay * *w;
                }
            }
        }
        Ok(())
    }
}
