use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub team: String,
    pub psnr: f64,
    pub params: u64,
    /// Average seconds per image.
    pub runtime_s: f64,
    #[serde(default)]
    pub baseline: bool,
}

impl EntryRecord {
    pub fn validate(&self) -> Result<()> {
        if self.params == 0 {
            return Err(EvalError::Invalid(format!("{}: params must be at least 1", self.team)));
        }
        if self.runtime_s.is_nan() || self.runtime_s <= 0.0 || !self.psnr.is_finite() {
            return Err(EvalError::Invalid(format!("{}: runtime must be positive and psnr finite", self.team)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Track {
    Parameters,
    Inference,
    Fidelity,
}

impl Track {
    pub const ALL: [Track; 3] = [Track::Parameters, Track::Inference, Track::Fidelity];

    pub fn number(self) -> u8 {
        match self {
            Track::Parameters => 1,
            Track::Inference => 2,
            Track::Fidelity => 3,
        }
    }
}

impl From<Track> for u8 {
    fn from(t: Track) -> u8 {
        t.number()
    }
}

impl TryFrom<u8> for Track {
    type Error = EvalError;
    fn try_from(n: u8) -> Result<Track> {
        match n {
            1 => Ok(Track::Parameters),
            2 => Ok(Track::Inference),
            3 => Ok(Track::Fidelity),
            other => Err(EvalError::UnknownTrack(other)),
        }
    }
}

impl std::fmt::Display for Track {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Slack allowed when comparing against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRules {
    /// PSNR may fall this many dB below the baseline.
    pub psnr_tolerance_db: f64,
    /// Runtime may exceed the baseline by this fraction.
    pub runtime_tolerance_rel: f64,
}

impl TrackRules {
    pub const fn strict() -> Self {
        TrackRules { psnr_tolerance_db: 0.0, runtime_tolerance_rel: 0.0 }
    }
}

impl Default for TrackRules {
    /// Calibrated so the published tables partition exactly.
    fn default() -> Self {
        TrackRules { psnr_tolerance_db: 0.01, runtime_tolerance_rel: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub ranked: bool,
    pub reasons: Vec<String>,
}

const EPS: f64 = 1e-9;

/// An entry is ranked when none of PSNR, parameters and runtime is worse
/// than the baseline (up to `rules`). Every violated constraint is listed.
pub fn validate_track(entry: &EntryRecord, baseline: &EntryRecord, _track: Track, rules: &TrackRules) -> Verdict {
    let mut reasons = Vec::new();
    if entry.psnr + rules.psnr_tolerance_db + EPS < baseline.psnr {
        reasons.push(format!("psnr {:.2} < {:.2}", entry.psnr, baseline.psnr));
    }
    if entry.params > baseline.params {
        reasons.push(format!("params {} > {}", entry.params, baseline.params));
    }
    if entry.runtime_s > baseline.runtime_s * (1.0 + rules.runtime_tolerance_rel) + EPS {
        reasons.push(format!("runtime {:.3} > {:.3}", entry.runtime_s, baseline.runtime_s));
    }
    Verdict { ranked: reasons.is_empty(), reasons }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standing {
    /// 1-based rank; `None` when unranked.
    pub rank: Option<usize>,
    #[serde(flatten)]
    pub entry: EntryRecord,
    pub reasons: Vec<String>,
}

fn compare(track: Track, a: &EntryRecord, b: &EntryRecord) -> Ordering {
    let params = a.params.cmp(&b.params);
    let runtime = a.runtime_s.total_cmp(&b.runtime_s);
    let psnr = b.psnr.total_cmp(&a.psnr);
    let primary = match track {
        Track::Parameters => params,
        Track::Inference => runtime,
        Track::Fidelity => psnr,
    };
    primary.then(params).then(runtime).then(psnr).then_with(|| a.team.cmp(&b.team))
}

/// Ranks the entries of one track: ranked rows by the track metric (ties by
/// params, runtime, PSNR, team), then unranked rows in the same order.
pub fn rank_entries(entries: &[EntryRecord], track: Track, rules: &TrackRules) -> Result<Vec<Standing>> {
    for e in entries {
        e.validate()?;
    }
    let baseline = entries.iter().find(|e| e.baseline).ok_or(EvalError::MissingBaseline)?;
    let mut rows: Vec<(Verdict, &EntryRecord)> =
        entries.iter().map(|e| (validate_track(e, baseline, track, rules), e)).collect();
    rows.sort_by(|(va, a), (vb, b)| vb.ranked.cmp(&va.ranked).then_with(|| compare(track, a, b)));
    let mut next = 1;
    Ok(rows
        .into_iter()
        .map(|(v, e)| {
            let rank = v.ranked.then(|| {
                next += 1;
                next - 1
            });
            Standing { rank, entry: e.clone(), reasons: v.reasons }
        })
        .collect())
}

pub fn parse_entries(json: &str) -> Result<Vec<EntryRecord>> {
    let entries: Vec<EntryRecord> = serde_json::from_str(json).map_err(|e| EvalError::Invalid(e.to_string()))?;
    for e in &entries {
        e.validate()?;
    }
    Ok(entries)
}

pub fn load_entries(path: impl AsRef<Path>) -> Result<Vec<EntryRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    parse_entries(&text)
}

/// The published results table for `track`.
pub fn table_fixture(track: Track) -> Vec<EntryRecord> {
    let json = match track {
        Track::Parameters => include_str!("../../fixtures/aim2019_track1.json"),
        Track::Inference => include_str!("../../fixtures/aim2019_track2.json"),
        Track::Fidelity => include_str!("../../fixtures/aim2019_track3.json"),
    };
    parse_entries(json).expect("shipped fixtures are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(track: Track) -> (Vec<String>, Vec<String>) {
        let s = rank_entries(&table_fixture(track), track, &TrackRules::default()).unwrap();
        let ranked = s.iter().filter(|r| r.rank.is_some()).map(|r| r.entry.team.clone()).collect();
        let unranked = s.iter().filter(|r| r.rank.is_none()).map(|r| r.entry.team.clone()).collect();
        (ranked, unranked)
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tables_reproduce() {
        let (r, u) = order(Track::Parameters);
        assert_eq!(r, names(&["rainbow", "Alpha", "ZJUCSR2019", "Rookie", "krahaon_ai_cv", "Baseline"]));
        let mut u = u;
        u.sort();
        assert_eq!(u, names(&["GUET-HMI", "NPUCS_103", "PPZ", "SRSTAR", "neptuneai"]));

        let (r, mut u) = order(Track::Inference);
        assert_eq!(r, names(&["rainbow", "ZJUCSR2019", "Alpha", "krahaon_ai_cv", "Rookie", "SRSTAR", "Baseline"]));
        u.sort();
        assert_eq!(u, names(&["GUET-HMI", "neptuneai"]));

        let (r, mut u) = order(Track::Fidelity);
        assert_eq!(r, names(&["krahaon_ai_cv", "Rookie", "rainbow", "ZJUCSR2019", "SRSTAR", "Alpha", "Baseline"]));
        u.sort();
        assert_eq!(u, names(&["GUET-HMI", "neptuneai"]));
    }

    #[test]
    fn verdict_examples() {
        let t2 = table_fixture(Track::Inference);
        let base = t2.iter().find(|e| e.baseline).unwrap();
        let nep = t2.iter().find(|e| e.team == "neptuneai").unwrap();
        let v = validate_track(nep, base, Track::Inference, &TrackRules::default());
        assert!(!v.ranked);
        assert_eq!(v.reasons, vec!["runtime 0.452 > 0.130".to_string()]);
        for t in Track::ALL {
            assert!(validate_track(base, base, t, &TrackRules::strict()).ranked);
        }
        let rainbow = &table_fixture(Track::Parameters)[0];
        assert!(validate_track(rainbow, base, Track::Parameters, &TrackRules::default()).ranked);
    }

    #[test]
    fn strict_rules_unrank_the_borderline_entry() {
        let s = rank_entries(&table_fixture(Track::Inference), Track::Inference, &TrackRules::strict()).unwrap();
        assert!(s.iter().any(|r| r.entry.team == "SRSTAR" && r.rank.is_none()));
    }

    #[test]
    fn baseline_alone_and_missing() {
        let base: Vec<EntryRecord> = table_fixture(Track::Parameters).into_iter().filter(|e| e.baseline).collect();
        let s = rank_entries(&base, Track::Parameters, &TrackRules::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].rank, Some(1));
        let rest: Vec<EntryRecord> = table_fixture(Track::Parameters).into_iter().filter(|e| !e.baseline).collect();
        assert!(matches!(rank_entries(&rest, Track::Parameters, &TrackRules::default()), Err(EvalError::MissingBaseline)));
        assert!(Track::try_from(4).is_err());
    }
}
