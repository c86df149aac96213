use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{Pair, PairLabel, TemplateSet};
use super::{chi2_distance, PoseLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    SamePose,
    CrossPose,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::SamePose => "same-pose",
            Protocol::CrossPose => "cross-pose",
        }
    }

    pub fn combinations(self) -> [(PoseLabel, PoseLabel); 3] {
        use PoseLabel::*;
        match self {
            Protocol::SamePose => [(Frontal, Frontal), (ThreeQuarter, ThreeQuarter), (Profile, Profile)],
            Protocol::CrossPose => [(Frontal, ThreeQuarter), (ThreeQuarter, Profile), (Frontal, Profile)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub pair: Pair,
    pub subject_a: String,
    pub subject_b: String,
    pub distance: f64,
}

/// Distances for one pose combination under one protocol and template size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub protocol: Protocol,
    pub poses: (PoseLabel, PoseLabel),
    pub template_size: usize,
    pub pairs: Vec<ScoredPair>,
}

impl ScoreSet {
    /// Combination name such as `F-F` or `3/4-P`.
    pub fn combination(&self) -> String {
        format!("{}-{}", self.poses.0.short(), self.poses.1.short())
    }

    fn distances(&self, label: PairLabel) -> Vec<f64> {
        self.pairs.iter().filter(|p| p.pair.label == label).map(|p| p.distance).collect()
    }

    pub fn genuine(&self) -> Vec<f64> {
        self.distances(PairLabel::Genuine)
    }

    pub fn impostor(&self) -> Vec<f64> {
        self.distances(PairLabel::Impostor)
    }
}

/// χ² distance for every pair, in input order. Pairs are scored in parallel.
pub fn score_pairs(
    protocol: Protocol,
    poses: (PoseLabel, PoseLabel),
    pairs: &[Pair],
    templates: &TemplateSet,
) -> Result<ScoreSet> {
    let scored = pairs
        .par_iter()
        .map(|&pair| {
            let a = templates.get(pair.a)?;
            let b = templates.get(pair.b)?;
            Ok(ScoredPair {
                pair,
                subject_a: a.subject_id.clone(),
                subject_b: b.subject_id.clone(),
                distance: chi2_distance(a, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet {
        protocol,
        poses,
        template_size: templates.template_size(),
        pairs: scored,
    })
}

pub const SCORE_CSV_HEADER: [&str; 10] = [
    "protocol",
    "pose_a",
    "pose_b",
    "template_size",
    "subject_a",
    "template_a",
    "subject_b",
    "template_b",
    "label",
    "distance",
];

/// Writes one row per scored pair. Distances use the shortest decimal form
/// that reads back to the same `f64`.
pub fn write_scores_csv<W: Write>(out: W, set: &ScoreSet) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Output(format!("score csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_CSV_HEADER).map_err(csv_err)?;
    let size = set.template_size.to_string();
    for p in &set.pairs {
        w.write_record([
            set.protocol.as_str(),
            p.pair.a.pose.as_str(),
            p.pair.b.pose.as_str(),
            &size,
            &p.subject_a,
            &p.pair.a.index.to_string(),
            &p.subject_b,
            &p.pair.b.index.to_string(),
            p.pair.label.as_str(),
            &p.distance.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Output(format!("score csv: {e}")))?;
    Ok(())
}
