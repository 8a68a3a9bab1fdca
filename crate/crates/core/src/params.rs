//! Named, ordered parameter collections with versioned serialization.
//!
//! A [`ParamVector`] holds every learnable array of a model keyed by a stable
//! name. Iteration order is insertion order, which fixes the element order
//! used by checksums and optimizer state, so identical training runs produce
//! bitwise-identical checkpoints.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::value::{Shape, Value};

/// Current checkpoint format version.
const CHECKPOINT_VERSION: u32 = 1;

/// Ordered name -> array map. Two ParamVectors are arithmetic-compatible iff
/// they have identical names and shapes in identical order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    entries: IndexMap<String, Value>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an entry; name collisions are a configuration error.
    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<Value>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        self.entries.insert(name, value.into());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Value> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::usage(format!("unknown parameter {name:?}")))
    }

    pub fn set(&mut self, name: &str, value: Value) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(slot) if slot.shape() == value.shape() => {
                *slot = value;
                Ok(())
            }
            Some(slot) => Err(Error::config(format!(
                "shape mismatch for {name:?}: {} vs {}",
                slot.shape(),
                value.shape()
            ))),
            None => Err(Error::usage(format!("unknown parameter {name:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar elements.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Value::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Same names, same shapes, same order.
    pub fn compatible(&self, other: &ParamVector) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|((an, av), (bn, bv))| an == bn && av.shape() == bv.shape())
    }

    fn require_compatible(&self, other: &ParamVector, what: &str) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::config(format!("{what}: parameter vectors are not compatible")))
        }
    }

    /// Zero-filled vector with this one's names and shapes.
    pub fn zeros_like(&self) -> ParamVector {
        ParamVector {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
        }
    }

    /// self + c * other, entrywise; requires compatibility.
    pub fn add_scaled(&self, other: &ParamVector, c: f64) -> Result<ParamVector> {
        self.require_compatible(other, "add_scaled")?;
        let entries = self
            .entries
            .iter()
            .zip(other.entries.values())
            .map(|((k, a), b)| Ok((k.clone(), a.add_scaled(b, c)?)))
            .collect::<Result<IndexMap<_, _>>>()?;
        Ok(ParamVector { entries })
    }

    /// In-place self += other.
    pub fn accumulate(&mut self, other: &ParamVector) -> Result<()> {
        self.require_compatible(other, "accumulate")?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.accumulate(b)?;
        }
        Ok(())
    }

    /// In-place scale of every element.
    pub fn scale(&mut self, c: f64) {
        for v in self.entries.values_mut() {
            *v = v.map(|x| x * c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Value::is_finite)
    }

    /// Return the name of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(k, _)| k.as_str())
    }

    /// Hex SHA-256 over names, shapes, and little-endian element bytes.
    /// Equal checksums imply bitwise-equal contents.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, value) in &self.entries {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            match value.shape() {
                Shape::Scalar => hasher.update(b"s"),
                Shape::Vector(n) => {
                    hasher.update(b"v");
                    hasher.update((n as u64).to_le_bytes());
                }
                Shape::Matrix(r, c) => {
                    hasher.update(b"m");
                    hasher.update((r as u64).to_le_bytes());
                    hasher.update((c as u64).to_le_bytes());
                }
            }
            value.for_each(|x| hasher.update(x.to_le_bytes()));
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl FromIterator<(String, Value)> for ParamVector {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        ParamVector { entries: iter.into_iter().collect() }
    }
}

/// Versioned JSON checkpoint wrapper.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    params: ParamVector,
}

/// Serialize params to a versioned JSON string.
pub fn to_checkpoint_json(params: &ParamVector) -> Result<String> {
    serde_json::to_string(&Checkpoint { version: CHECKPOINT_VERSION, params: params.clone() })
        .map_err(|e| Error::Serde(e.to_string()))
}

/// Parse a versioned JSON checkpoint.
pub fn from_checkpoint_json(json: &str) -> Result<ParamVector> {
    let ckpt: Checkpoint =
        serde_json::from_str(json).map_err(|e| Error::Serde(e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::config(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok(ckpt.params)
}

/// Write a checkpoint file.
pub fn save_checkpoint(path: &std::path::Path, params: &ParamVector) -> Result<()> {
    let json = to_checkpoint_json(params)?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: &std::path::Path) -> Result<ParamVector> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    from_checkpoint_json(&json)
}
