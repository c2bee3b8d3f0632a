//! Structural search over the krahaon space and the inverted-residual block
//! menu. Nothing here trains; candidates are ranked by counters only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{count_macs, count_params, receptive_field, ReceptiveField};
use crate::tensor::Shape;
use crate::zoo::{self, BlockChoice};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("requested {requested} samples from a space of {size}")]
    SampleTooLarge { requested: usize, size: usize },
    #[error("block menu depth {0} too large to enumerate")]
    DepthTooLarge(usize),
    #[error(transparent)]
    Zoo(#[from] zoo::ZooError),
}

pub type Result<T> = std::result::Result<T, SearchError>;

pub const X_CHOICES: [usize; 4] = [48, 64, 80, 96];
pub const N_X: (usize, usize) = (10, 30);
pub const N_Y: (usize, usize) = (0, 16);
pub const N_Z: (usize, usize) = (0, 16);

const fn span(r: (usize, usize)) -> usize {
    r.1 - r.0 + 1
}

/// Number of configs in the krahaon space.
pub const SPACE_SIZE: usize = X_CHOICES.len() * 2 * 2 * span(N_X) * span(N_Y) * span(N_Z);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SearchConfig {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub n_z: usize,
}

impl SearchConfig {
    pub const WINNER: SearchConfig = SearchConfig { x: 64, y: 16, z: 4, n_x: 19, n_y: 12, n_z: 3 };

    pub fn validate(&self) -> std::result::Result<(), String> {
        let in_range = |v: usize, r: (usize, usize)| v >= r.0 && v <= r.1;
        if !X_CHOICES.contains(&self.x) {
            return Err(format!("x={} not in {X_CHOICES:?}", self.x));
        }
        if self.y * 2 != self.x && self.y * 4 != self.x {
            return Err(format!("y={} must be x/2 or x/4", self.y));
        }
        if self.z * 2 != self.y && self.z * 4 != self.y {
            return Err(format!("z={} must be y/2 or y/4", self.z));
        }
        if !in_range(self.n_x, N_X) || !in_range(self.n_y, N_Y) || !in_range(self.n_z, N_Z) {
            return Err(format!("block counts ({}, {}, {}) out of range", self.n_x, self.n_y, self.n_z));
        }
        Ok(())
    }

    /// The config at position `index` of the enumeration order.
    pub fn at(index: usize) -> Option<SearchConfig> {
        if index >= SPACE_SIZE {
            return None;
        }
        let mut i = index;
        let mut digit = |radix: usize| {
            let d = i % radix;
            i /= radix;
            d
        };
        let n_z = N_Z.0 + digit(span(N_Z));
        let n_y = N_Y.0 + digit(span(N_Y));
        let n_x = N_X.0 + digit(span(N_X));
        let zdiv = [2, 4][digit(2)];
        let ydiv = [2, 4][digit(2)];
        let x = X_CHOICES[digit(X_CHOICES.len())];
        let y = x / ydiv;
        Some(SearchConfig { x, y, z: y / zdiv, n_x, n_y, n_z })
    }
}

impl std::fmt::Display for SearchConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x={} y={} z={} n_x={} n_y={} n_z={}", self.x, self.y, self.z, self.n_x, self.n_y, self.n_z)
    }
}

/// Every config of the krahaon space, in a fixed order.
pub fn enumerate_krahaon_space() -> impl Iterator<Item = SearchConfig> {
    (0..SPACE_SIZE).map(|i| SearchConfig::at(i).expect("index in range"))
}

/// `k` distinct configs drawn uniformly with a seeded generator.
pub fn sample(seed: u64, k: usize) -> Result<Vec<SearchConfig>> {
    if k > SPACE_SIZE {
        return Err(SearchError::SampleTooLarge { requested: k, size: SPACE_SIZE });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, SPACE_SIZE, k)
        .into_iter()
        .map(|i| SearchConfig::at(i).expect("index in range"))
        .collect())
}

/// Upper bounds; `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub max_params: Option<u64>,
    pub max_macs: Option<u64>,
    /// LR input shape the MAC count refers to.
    pub input_shape: Shape,
    pub max_rf: Option<u64>,
}

impl Constraints {
    pub fn unbounded(input_shape: Shape) -> Self {
        Constraints { max_params: None, max_macs: None, input_shape, max_rf: None }
    }

    fn admits(&self, c: &Candidate) -> bool {
        let within = |v: u64, limit: Option<u64>| limit.is_none_or(|l| v <= l);
        let rf_ok = match (c.rf, self.max_rf) {
            (_, None) => true,
            (ReceptiveField::Finite(v), Some(l)) => v <= l,
            (ReceptiveField::Global, Some(_)) => false,
        };
        within(c.params, self.max_params) && within(c.macs, self.max_macs) && rf_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: SearchConfig,
    pub params: u64,
    pub macs: u64,
    pub rf: ReceptiveField,
}

/// Builds every config, keeps those within `limits`, sorted by params then
/// MACs (ties keep input order).
pub fn filter_constraints(configs: &[SearchConfig], limits: &Constraints) -> Result<Vec<Candidate>> {
    let measured: Vec<Result<Candidate>> = configs
        .par_iter()
        .map(|cfg| {
            let g = zoo::build_krahaon(cfg)?;
            let macs = count_macs(&g, limits.input_shape).map_err(zoo::ZooError::from)?.total;
            Ok(Candidate { config: *cfg, params: count_params(&g).total, macs, rf: receptive_field(&g) })
        })
        .collect();
    let mut kept = Vec::new();
    for c in measured {
        let c = c?;
        if limits.admits(&c) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| (c.params, c.macs));
    Ok(kept)
}

/// One entry of the inverted-residual block menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMenuChoice {
    InvertedResidualT3,
    InvertedResidualT6,
    BasicResidual,
    BasicResidualLrelu,
}

impl BlockMenuChoice {
    pub const ALL: [BlockMenuChoice; 4] = [
        BlockMenuChoice::InvertedResidualT3,
        BlockMenuChoice::InvertedResidualT6,
        BlockMenuChoice::BasicResidual,
        BlockMenuChoice::BasicResidualLrelu,
    ];

    pub fn block(self) -> BlockChoice {
        match self {
            BlockMenuChoice::InvertedResidualT3 => BlockChoice::InvertedResidual { expand: 3 },
            BlockMenuChoice::InvertedResidualT6 => BlockChoice::InvertedResidual { expand: 6 },
            BlockMenuChoice::BasicResidual => BlockChoice::BasicResidual,
            BlockMenuChoice::BasicResidualLrelu => BlockChoice::BasicResidualLrelu,
        }
    }
}

/// Largest depth [`enumerate_block_menu`] accepts (4^8 = 65,536 layouts).
pub const MAX_MENU_DEPTH: usize = 8;

/// Every per-position menu assignment of length `depth`.
pub fn enumerate_block_menu(depth: usize) -> Result<impl Iterator<Item = Vec<BlockMenuChoice>>> {
    if depth > MAX_MENU_DEPTH {
        return Err(SearchError::DepthTooLarge(depth));
    }
    let total = 4usize.pow(depth as u32);
    Ok((0..total).map(move |mut i| {
        let mut v = vec![BlockMenuChoice::InvertedResidualT3; depth];
        for slot in v.iter_mut().rev() {
            *slot = BlockMenuChoice::ALL[i % 4];
            i /= 4;
        }
        v
    }))
}
