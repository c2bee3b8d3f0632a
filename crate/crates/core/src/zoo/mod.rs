//! Graph builders for the challenge architectures.
//!
//! Each builder takes its own config struct; [`ArchConfig`] wraps them all
//! so a config can be stored in a graph file and reloaded. Models are
//! registered under the ids in [`MODEL_IDS`].

pub mod blocks;

mod assr;
mod awsrn;
mod dilaresnet;
mod imdn;
mod invres;
mod krahaon;
mod msrresnet;
mod noucsr;
mod ppz;
mod recdense;
mod wmrn;

pub use assr::{build_assr, AssrConfig};
pub use awsrn::{build_awsrn, AwsrnConfig};
pub use dilaresnet::{build_dilaresnet, DilaResNetConfig};
pub use imdn::{build_imdn, imdb_block, ImdnConfig};
pub use invres::{build_inverted_residual, inverted_residual_block, BlockChoice, InvResConfig};
pub use krahaon::{build_krahaon, build_krahaon_layout};
pub use msrresnet::{build_msrresnet, MsrResNetConfig};
pub use noucsr::{build_noucsr, NoucsrConfig};
pub use ppz::{build_ppz, PpzConfig};
pub use recdense::{build_recurrent_dense, RecDenseConfig};
pub use wmrn::{build_wmrn, WmrnConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{Graph, IrError};
use crate::search::SearchConfig;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}

pub type Result<T> = std::result::Result<T, ZooError>;

pub(crate) fn invalid(detail: impl Into<String>) -> ZooError {
    ZooError::InvalidConfig(detail.into())
}

pub(crate) fn ensure(cond: bool, detail: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(ZooError::InvalidConfig(detail()))
    }
}

/// Registered model ids.
pub const MODEL_IDS: [&str; 13] = [
    "msrresnet",
    "imdn",
    "noucsr",
    "assr",
    "krahaon",
    "awsrn",
    "dilaresnet-t1",
    "dilaresnet-t2",
    "dilaresnet-t3",
    "recdense",
    "ppz",
    "invres",
    "wmrn",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ArchConfig {
    Msrresnet(MsrResNetConfig),
    Imdn(ImdnConfig),
    Noucsr(NoucsrConfig),
    Assr(AssrConfig),
    Krahaon(SearchConfig),
    Awsrn(AwsrnConfig),
    Dilaresnet(DilaResNetConfig),
    Recdense(RecDenseConfig),
    Ppz(PpzConfig),
    Invres(InvResConfig),
    Wmrn(WmrnConfig),
}

impl ArchConfig {
    /// Default config registered under `id`.
    pub fn default_for(id: &str) -> Result<ArchConfig> {
        Ok(match id {
            "msrresnet" => ArchConfig::Msrresnet(MsrResNetConfig::default()),
            "imdn" => ArchConfig::Imdn(ImdnConfig::default()),
            "noucsr" => ArchConfig::Noucsr(NoucsrConfig::default()),
            "assr" => ArchConfig::Assr(AssrConfig::default()),
            "krahaon" => ArchConfig::Krahaon(SearchConfig::WINNER),
            "awsrn" => ArchConfig::Awsrn(AwsrnConfig::default()),
            "dilaresnet-t1" => ArchConfig::Dilaresnet(DilaResNetConfig::track(1)?),
            "dilaresnet-t2" => ArchConfig::Dilaresnet(DilaResNetConfig::track(2)?),
            "dilaresnet-t3" => ArchConfig::Dilaresnet(DilaResNetConfig::track(3)?),
            "recdense" => ArchConfig::Recdense(RecDenseConfig::default()),
            "ppz" => ArchConfig::Ppz(PpzConfig::default()),
            "invres" => ArchConfig::Invres(InvResConfig::default()),
            "wmrn" => ArchConfig::Wmrn(WmrnConfig::default()),
            other => return Err(ZooError::UnknownModel(other.to_string())),
        })
    }

    /// Applies `key=value` overrides to the config's JSON form. Values are
    /// read as JSON when they parse, as strings otherwise.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<ArchConfig> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut value = serde_json::to_value(self).map_err(|e| invalid(e.to_string()))?;
        let obj = value.as_object_mut().expect("configs serialize to objects");
        for (k, v) in overrides {
            if k == "arch" {
                return Err(invalid("the arch field cannot be overridden"));
            }
            if !obj.contains_key(k) {
                return Err(invalid(format!("unknown config key {k:?}")));
            }
            let parsed = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.clone()));
            obj.insert(k.clone(), parsed);
        }
        serde_json::from_value(value).map_err(|e| invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<ArchConfig> {
        serde_json::from_str(s).map_err(|e| invalid(e.to_string()))
    }
}

/// Builds the graph described by `cfg`.
pub fn build(cfg: &ArchConfig) -> Result<Graph> {
    match cfg {
        ArchConfig::Msrresnet(c) => build_msrresnet(c),
        ArchConfig::Imdn(c) => build_imdn(c),
        ArchConfig::Noucsr(c) => build_noucsr(c),
        ArchConfig::Assr(c) => build_assr(c),
        ArchConfig::Krahaon(c) => build_krahaon(c),
        ArchConfig::Awsrn(c) => build_awsrn(c),
        ArchConfig::Dilaresnet(c) => build_dilaresnet(c),
        ArchConfig::Recdense(c) => build_recurrent_dense(c),
        ArchConfig::Ppz(c) => build_ppz(c),
        ArchConfig::Invres(c) => build_inverted_residual(c),
        ArchConfig::Wmrn(c) => build_wmrn(c),
    }
}

/// Builds the registered model `id` with optional config overrides.
pub fn build_model(id: &str, overrides: &[(String, String)]) -> Result<Graph> {
    build(&ArchConfig::default_for(id)?.with_overrides(overrides)?)
}

/// Reconstructs a graph from the config stored in it.
pub fn rebuild_from_config(graph: &Graph) -> Result<Graph> {
    let cfg = graph.config().ok_or_else(|| invalid("graph carries no config"))?;
    build(&ArchConfig::from_json(cfg)?)
}

pub(crate) fn attach(graph: Graph, cfg: ArchConfig) -> Graph {
    graph.with_config(cfg.to_json())
}

/// Parameter count reported for a registered model and the relative
/// tolerance the default build is held to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reported {
    pub team: &'static str,
    pub params: u64,
    pub tolerance: f64,
}

pub fn reported_params(id: &str) -> Option<Reported> {
    let r = |team, params| Some(Reported { team, params, tolerance: 0.10 });
    match id {
        "msrresnet" => Some(Reported { team: "Baseline", params: 1_517_571, tolerance: 0.0 }),
        "imdn" => r("rainbow", 893_936),
        "noucsr" => r("ZJUCSR2019", 1_227_340),
        "assr" => r("Alpha", 1_127_064),
        "krahaon" => r("krahaon_ai_cv", 1_461_735),
        "awsrn" => r("Rookie", 1_387_258),
        "dilaresnet-t1" => r("SRSTAR", 852_874),
        "dilaresnet-t2" => r("SRSTAR", 1_074_447),
        "dilaresnet-t3" => r("SRSTAR", 1_369_859),
        "recdense" => r("NPUCS_103", 910_467),
        "ppz" => r("PPZ", 818_432),
        "invres" => r("neptuneai", 1_204_227),
        "wmrn" => Some(Reported { team: "GUET-HMI", params: 536_005, tolerance: 0.15 }),
        _ => None,
    }
}

/// Signed relative difference `(actual - reported) / reported`.
pub fn relative_delta(actual: u64, reported: u64) -> f64 {
    (actual as f64 - reported as f64) / reported as f64
}
