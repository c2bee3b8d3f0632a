//! Scoring protocol: border-cropped PSNR, training losses, the best-of-N
//! timing harness, and per-track validation and ranking.

mod loss;
mod psnr;
mod timing;
mod track;

pub use loss::{loss, LossKind, LossSpec, DEFAULT_TV_LAMBDA};
pub use psnr::{mean_psnr, psnr, psnr_with, Psnr, PsnrChannel, PsnrOptions};
pub use timing::{time_model, time_workload, Environment, Timing, TimingOptions, Workload};
pub use track::{
    load_entries, parse_entries, rank_entries, table_fixture, validate_track, EntryRecord, Standing, Track,
    TrackRules, Verdict,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{Breakdown, IrError, ReceptiveField};
use crate::Shape;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown track {0}; expected 1, 2 or 3")]
    UnknownTrack(u8),
    #[error("entries contain no baseline row")]
    MissingBaseline,
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] IrError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrSummary {
    /// Mean over images with finite PSNR.
    pub mean_db: Option<f64>,
    pub images: usize,
    /// Images reconstructed exactly.
    pub infinite: usize,
}

impl PsnrSummary {
    pub fn from_values(values: &[Psnr]) -> Self {
        PsnrSummary {
            mean_db: mean_psnr(values),
            images: values.len(),
            infinite: values.iter().filter(|p| **p == Psnr::Infinite).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackVerdict {
    pub track: Track,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Everything `bench` measures for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub fingerprint: String,
    /// LR input shape the MAC count refers to.
    pub input_shape: Shape,
    pub params: Breakdown,
    pub macs: Breakdown,
    pub receptive_field: ReceptiveField,
    pub reported_params: Option<u64>,
    /// `(params - reported) / reported`.
    pub param_delta: Option<f64>,
    pub trials: Vec<f64>,
    pub best_avg_runtime: f64,
    pub images: usize,
    pub psnr: Option<PsnrSummary>,
    pub track_verdicts: Vec<TrackVerdict>,
    pub environment: Environment,
}

/// Inputs of [`bench`]. Images are in `[0, 255]`.
pub struct BenchInput<'a> {
    pub model: &'a str,
    pub graph: &'a crate::Graph,
    pub store: &'a crate::WeightStore,
    pub lr: &'a [crate::Tensor],
    /// Ground truth for PSNR, aligned with `lr`.
    pub hr: Option<&'a [crate::Tensor]>,
    pub timing: TimingOptions,
    /// Reference row for track verdicts; needs `hr` to score PSNR.
    pub baseline: Option<EntryRecord>,
    pub rules: TrackRules,
}

/// Counts, times and (optionally) scores one model.
pub fn bench(input: &BenchInput<'_>) -> Result<BenchReport> {
    use crate::data::{from_unit, to_unit};
    use crate::ir::{count_macs, count_params, forward, receptive_field};

    let first = input.lr.first().ok_or_else(|| EvalError::Invalid("bench needs at least one image".into()))?;
    input.store.check_against(input.graph)?;
    let params = count_params(input.graph);
    let macs = count_macs(input.graph, first.shape())?;
    let units: Vec<crate::Tensor> = input.lr.iter().map(to_unit).collect();
    let timing = time_model(input.graph, input.store, &units, &input.timing)?;

    let psnr = match input.hr {
        Some(hr) => {
            if hr.len() != units.len() {
                return Err(EvalError::Invalid(format!("{} HR images for {} LR images", hr.len(), units.len())));
            }
            let mut values = Vec::with_capacity(hr.len());
            for (x, gt) in units.iter().zip(hr) {
                let sr = from_unit(&forward(input.graph, input.store, x)?);
                values.push(psnr(&sr, gt, 4)?);
            }
            Some(PsnrSummary::from_values(&values))
        }
        None => None,
    };

    let mut track_verdicts = Vec::new();
    if let (Some(base), Some(db)) = (&input.baseline, psnr.as_ref().and_then(|p| p.mean_db)) {
        let entry = EntryRecord {
            team: input.model.to_string(),
            psnr: db,
            params: params.total,
            runtime_s: timing.best_avg_runtime,
            baseline: false,
        };
        for track in Track::ALL {
            track_verdicts.push(TrackVerdict { track, verdict: validate_track(&entry, base, track, &input.rules) });
        }
    }

    let reported = crate::zoo::reported_params(input.model).map(|r| r.params);
    Ok(BenchReport {
        model: input.model.to_string(),
        fingerprint: input.graph.fingerprint(),
        input_shape: first.shape(),
        param_delta: reported.map(|r| crate::zoo::relative_delta(params.total, r)),
        reported_params: reported,
        receptive_field: receptive_field(input.graph),
        params,
        macs,
        trials: timing.trials,
        best_avg_runtime: timing.best_avg_runtime,
        images: timing.images,
        psnr,
        track_verdicts,
        environment: timing.environment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{init_weights, InitScheme};
    use crate::{Shape, Tensor};

    #[test]
    fn bench_report_fields() {
        let g = crate::zoo::build_model("msrresnet", &[("blocks".into(), "2".into())]).unwrap();
        let store = init_weights(&g, 1, InitScheme::Constant(0.0));
        let lr = vec![Tensor::full(Shape::new(1, 3, 8, 8), 100.0); 2];
        let hr = vec![Tensor::full(Shape::new(1, 3, 32, 32), 100.0); 2];
        let base = table_fixture(Track::Parameters).into_iter().find(|e| e.baseline).unwrap();
        let r = bench(&BenchInput {
            model: "msrresnet",
            graph: &g,
            store: &store,
            lr: &lr,
            hr: Some(&hr),
            timing: TimingOptions::default(),
            baseline: Some(base),
            rules: TrackRules::default(),
        })
        .unwrap();
        assert_eq!(r.trials.len(), 3);
        assert_eq!(r.best_avg_runtime, r.trials.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(r.psnr.as_ref().unwrap().infinite, 2);
        assert!(r.track_verdicts.is_empty());
        assert!(r.param_delta.unwrap() < 0.0);
        let json = serde_json::to_string(&r).unwrap();
        let back: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
