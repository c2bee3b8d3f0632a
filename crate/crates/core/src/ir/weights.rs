//! Weight stores, deterministic initialization and the `SRBW1` file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "SRBW1" | u32 manifest length | manifest (UTF-8 lines) | f32 payload
//! ```
//!
//! The manifest holds `fingerprint <hex>`, `seed <u64>`, `scheme <name>`
//! and one `slot <name> <NxCxHxW> <byte offset>` line per tensor; offsets
//! are relative to the start of the payload.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Graph, IrError, LayerKind, Result};
use crate::tensor::{Shape, Tensor};

const MAGIC: &[u8; 5] = b"SRBW1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    KaimingUniform,
    KaimingNormal,
    Constant(f32),
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::KaimingUniform => f.write_str("kaiming_uniform"),
            InitScheme::KaimingNormal => f.write_str("kaiming_normal"),
            InitScheme::Constant(v) => write!(f, "constant({v})"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "kaiming_uniform" => Ok(InitScheme::KaimingUniform),
            "kaiming_normal" => Ok(InitScheme::KaimingNormal),
            "zeros" => Ok(InitScheme::Constant(0.0)),
            other => other
                .strip_prefix("constant(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|v| v.parse::<f32>().ok())
                .map(InitScheme::Constant)
                .ok_or_else(|| format!("unknown init scheme {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub slots: BTreeMap<String, Tensor>,
    pub seed: u64,
    pub scheme: InitScheme,
    pub fingerprint: String,
}

impl WeightStore {
    pub fn get(&self, slot: &str) -> Result<&Tensor> {
        self.slots.get(slot).ok_or_else(|| IrError::MissingSlot(slot.to_string()))
    }

    pub fn numel(&self) -> usize {
        self.slots.values().map(|t| t.shape().numel()).sum()
    }

    /// Checks fingerprint, slot set and slot shapes against `graph`.
    pub fn check_against(&self, graph: &Graph) -> Result<()> {
        let expected = graph.fingerprint();
        if self.fingerprint != expected {
            return Err(IrError::Fingerprint { expected, found: self.fingerprint.clone() });
        }
        let slots = graph.param_slots();
        for slot in &slots {
            let t = self.get(&slot.name)?;
            if t.shape() != slot.shape {
                return Err(IrError::SlotShape { slot: slot.name.clone(), expected: slot.shape, found: t.shape() });
            }
        }
        if self.slots.len() != slots.len() {
            let extra = self
                .slots
                .keys()
                .find(|k| !slots.iter().any(|s| &s.name == *k))
                .cloned()
                .unwrap_or_default();
            return Err(IrError::invalid(&extra, "weight store has a slot the graph does not use"));
        }
        Ok(())
    }
}

fn slot_seed(seed: u64, fingerprint: &str, slot: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(fingerprint.as_bytes());
    h.update([0u8]);
    h.update(slot.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Deterministic in `(seed, scheme, graph fingerprint)`. Kaiming schemes use
/// `fan_in = in/groups · k_h · k_w` and zero biases; `Constant(v)` fills
/// weights and biases with `v`. Learnable scales always start at their
/// declared init value.
pub fn init_weights(graph: &Graph, seed: u64, scheme: InitScheme) -> WeightStore {
    let fingerprint = graph.fingerprint();
    let mut slots = BTreeMap::new();
    for slot in graph.param_slots() {
        let node = graph.node(&slot.owner).expect("slot owner exists");
        let fan_in = match node.kind {
            LayerKind::Conv(p) => (p.in_channels / p.groups) * p.kernel.0 * p.kernel.1,
            LayerKind::Dense { in_features, .. } => in_features,
            _ => 1,
        };
        let tensor = match (&node.kind, scheme) {
            (LayerKind::Scale { init, .. }, _) => Tensor::full(slot.shape, *init),
            (_, InitScheme::Constant(v)) => Tensor::full(slot.shape, v),
            (_, _) if slot.name.ends_with(".bias") => Tensor::zeros(slot.shape),
            (_, InitScheme::KaimingUniform) => {
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(seed, &fingerprint, &slot.name));
                Tensor::from_fn(slot.shape, |_, _, _, _| rng.random_range(-bound..=bound))
            }
            (_, InitScheme::KaimingNormal) => {
                let std = (2.0 / fan_in as f64).sqrt() as f32;
                let normal = Normal::new(0.0f32, std).expect("positive std");
                let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(seed, &fingerprint, &slot.name));
                Tensor::from_fn(slot.shape, |_, _, _, _| normal.sample(&mut rng))
            }
        };
        slots.insert(slot.name, tensor);
    }
    WeightStore { slots, seed, scheme, fingerprint }
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    let mut manifest = format!(
        "fingerprint {}\nseed {}\nscheme {}\n",
        store.fingerprint, store.seed, store.scheme
    );
    let mut offset = 0usize;
    for (name, t) in &store.slots {
        manifest.push_str(&format!("slot {name} {} {offset}\n", t.shape()));
        offset += t.shape().numel() * 4;
    }
    let mut bytes = Vec::with_capacity(MAGIC.len() + 4 + manifest.len() + offset);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    bytes.extend_from_slice(manifest.as_bytes());
    for t in store.slots.values() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

fn format_err(detail: impl Into<String>) -> IrError {
    IrError::WeightFormat(detail.into())
}

/// Parses a weight file without checking it against a graph.
pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    parse_weights(&fs::read(path)?)
}

fn parse_weights(bytes: &[u8]) -> Result<WeightStore> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(format_err("missing SRBW1 magic"));
    }
    let len_bytes: [u8; 4] = bytes[MAGIC.len()..MAGIC.len() + 4].try_into().expect("4 bytes");
    let manifest_len = u32::from_le_bytes(len_bytes) as usize;
    let start = MAGIC.len() + 4;
    let manifest_end = start
        .checked_add(manifest_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| format_err(format!("manifest length {manifest_len} exceeds file size {}", bytes.len())))?;
    let manifest = std::str::from_utf8(&bytes[start..manifest_end])
        .map_err(|_| format_err("manifest is not UTF-8"))?;
    let payload = &bytes[manifest_end..];

    let mut fingerprint = None;
    let mut seed = None;
    let mut scheme = None;
    let mut slots = BTreeMap::new();
    let mut expected_end = 0usize;
    for (lineno, line) in manifest.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| format_err(format!("manifest line {}: {what}", lineno + 1));
        match fields.as_slice() {
            ["fingerprint", fp] => fingerprint = Some(fp.to_string()),
            ["seed", s] => seed = Some(s.parse::<u64>().map_err(|_| bad("bad seed"))?),
            ["scheme", s] => scheme = Some(s.parse::<InitScheme>().map_err(|e| bad(&e))?),
            ["slot", name, shape, offset] => {
                let shape: Shape = shape.parse().map_err(|_| bad("bad shape"))?;
                let offset: usize = offset.parse().map_err(|_| bad("bad offset"))?;
                let end = offset + shape.numel() * 4;
                if end > payload.len() {
                    return Err(bad(&format!("slot {name} runs past the payload (truncated file?)")));
                }
                let data = payload[offset..end]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                let tensor = Tensor::from_vec(shape, data).map_err(|e| bad(&e.to_string()))?;
                if slots.insert(name.to_string(), tensor).is_some() {
                    return Err(bad(&format!("duplicate slot {name}")));
                }
                expected_end = expected_end.max(end);
            }
            [] => {}
            _ => return Err(bad("unrecognized entry")),
        }
    }
    if expected_end != payload.len() {
        return Err(format_err(format!(
            "payload has {} bytes, manifest describes {expected_end}",
            payload.len()
        )));
    }
    Ok(WeightStore {
        slots,
        seed: seed.ok_or_else(|| format_err("manifest lacks seed"))?,
        scheme: scheme.ok_or_else(|| format_err("manifest lacks scheme"))?,
        fingerprint: fingerprint.ok_or_else(|| format_err("manifest lacks fingerprint"))?,
    })
}

/// Reads a weight file and checks it against `graph`.
pub fn load_weights(path: impl AsRef<Path>, graph: &Graph) -> Result<WeightStore> {
    let store = read_weights(path)?;
    store.check_against(graph)?;
    Ok(store)
}
