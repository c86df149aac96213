use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{det_curve, eer_from_curve, frr_at_far_from_curve, DetPoint};
use crate::error::{Error, Result};
use crate::verification::{PoseLabel, Protocol, ScoreSet, CHI2_EPSILON};

/// 0.1 %.
pub const DEFAULT_FAR_TARGET: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub variant: Option<String>,
    pub template_size: usize,
    pub distance: String,
    pub chi2_epsilon: f64,
    pub embedding_normalization: String,
    pub accept_rule: String,
    pub far_target: f64,
    pub subjects: usize,
}

impl ReportMetadata {
    pub fn new(variant: Option<String>, template_size: usize, far_target: f64, subjects: usize) -> Self {
        ReportMetadata {
            variant,
            template_size,
            distance: "chi2: sum((a-b)^2 / (a+b+eps))".into(),
            chi2_epsilon: CHI2_EPSILON,
            embedding_normalization: "none".into(),
            accept_rule: "distance <= threshold".into(),
            far_target,
            subjects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationReport {
    pub protocol: Protocol,
    pub combination: String,
    pub pose_a: PoseLabel,
    pub pose_b: PoseLabel,
    pub genuine_count: usize,
    pub impostor_count: usize,
    pub eer: f64,
    pub frr_at_far: f64,
    pub det: Vec<DetPoint>,
}

impl CombinationReport {
    pub fn from_scores(set: &ScoreSet, far_target: f64) -> Result<Self> {
        if !(far_target > 0.0 && far_target <= 1.0) {
            return Err(Error::InvalidInput(format!("FAR target must lie in (0, 1], got {far_target}")));
        }
        let (genuine, impostor) = (set.genuine(), set.impostor());
        let det = det_curve(&genuine, &impostor)?;
        Ok(CombinationReport {
            protocol: set.protocol,
            combination: set.combination(),
            pose_a: set.poses.0,
            pose_b: set.poses.1,
            genuine_count: genuine.len(),
            impostor_count: impostor.len(),
            eer: eer_from_curve(&det),
            frr_at_far: frr_at_far_from_curve(&det, far_target),
            det,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub combinations: Vec<CombinationReport>,
}

impl EvalReport {
    pub fn from_score_sets(metadata: ReportMetadata, sets: &[ScoreSet]) -> Result<Self> {
        let combinations = sets
            .iter()
            .map(|s| CombinationReport::from_scores(s, metadata.far_target))
            .collect::<Result<_>>()?;
        Ok(EvalReport { metadata, combinations })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("report json: {e}")))
    }
}

/// Two-column `far,frr` text for plotting.
pub fn write_det_csv<W: Write>(out: W, points: &[DetPoint]) -> Result<()> {
    let err = |e: csv::Error| Error::Output(format!("det csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["far", "frr"]).map_err(err)?;
    for p in points {
        w.write_record([p.far.to_string(), p.frr.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Output(format!("det csv: {e}")))
}

/// JSON has no infinities; the DET sentinels are written as `"-inf"` / `"inf"`.
pub(crate) mod signed_infinity {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad threshold {t:?}"))),
        }
    }
}
