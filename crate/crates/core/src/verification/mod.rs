//! Templates, χ² matching and the same-pose / cross-pose pairing protocols.

mod protocol;
mod scores;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Embedding;

pub use protocol::{
    build_templates, cross_pose_pairs, gen_cross_pose_scores, gen_same_pose_scores, same_pose_pairs, Pair, PairLabel,
    TemplateKey, TemplateSet, IMAGES_PER_POSE, IMPOSTOR_NEIGHBOURS,
};
pub use scores::{score_pairs, write_scores_csv, Protocol, ScoreSet, ScoredPair, SCORE_CSV_HEADER};

/// Guard added to the χ² denominator.
pub const CHI2_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseLabel {
    Frontal,
    ThreeQuarter,
    Profile,
}

impl PoseLabel {
    pub const ALL: [PoseLabel; 3] = [PoseLabel::Frontal, PoseLabel::ThreeQuarter, PoseLabel::Profile];

    /// Manifest token.
    pub fn as_str(self) -> &'static str {
        match self {
            PoseLabel::Frontal => "frontal",
            PoseLabel::ThreeQuarter => "three_quarter",
            PoseLabel::Profile => "profile",
        }
    }

    /// Short label used in pose-combination names such as `F-3/4`.
    pub fn short(self) -> &'static str {
        match self {
            PoseLabel::Frontal => "F",
            PoseLabel::ThreeQuarter => "3/4",
            PoseLabel::Profile => "P",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PoseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoseLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frontal" => Ok(PoseLabel::Frontal),
            "three_quarter" => Ok(PoseLabel::ThreeQuarter),
            "profile" => Ok(PoseLabel::Profile),
            other => Err(Error::InvalidInput(format!(
                "unknown pose {other:?} (expected frontal, three_quarter or profile)"
            ))),
        }
    }
}

/// One image's descriptor with its place in the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub subject_id: String,
    pub pose: PoseLabel,
    /// Position of the image among its subject's images in this pose (0..10).
    pub image_index: usize,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject_id: String,
    pub pose: PoseLabel,
    pub template_index: usize,
    /// Number of member images (1 or 5).
    pub size: usize,
    pub vector: Vec<f32>,
}

/// Averages one or five embeddings into a template.
pub fn make_template(members: &[&Embedding], subject_id: &str, pose: PoseLabel, index: usize) -> Result<Template> {
    if members.len() != 1 && members.len() != 5 {
        return Err(Error::Protocol(format!(
            "a template takes 1 or 5 embeddings, got {}",
            members.len()
        )));
    }
    let dim = members[0].len();
    if let Some(m) = members.iter().find(|m| m.len() != dim) {
        return Err(Error::dim("template member length", dim, m.len()));
    }
    let mut sum = vec![0.0f64; dim];
    for m in members {
        for (s, &v) in sum.iter_mut().zip(m.values()) {
            *s += v as f64;
        }
    }
    let n = members.len() as f64;
    Ok(Template {
        subject_id: subject_id.to_string(),
        pose,
        template_index: index,
        size: members.len(),
        vector: sum.into_iter().map(|s| (s / n) as f32).collect(),
    })
}

/// Symmetric χ² distance `Σ (aᵢ−bᵢ)² / (aᵢ+bᵢ+ε)`, accumulated in `f64`.
pub fn chi2(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("template length", a.len(), b.len()));
    }
    let mut d = 0.0;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        if !(x >= 0.0 && y >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "χ² needs non-negative entries; entry {i} is ({x}, {y})"
            )));
        }
        let (x, y) = (x as f64, y as f64);
        d += (x - y) * (x - y) / (x + y + CHI2_EPSILON);
    }
    Ok(d)
}

pub fn chi2_distance(a: &Template, b: &Template) -> Result<f64> {
    chi2(&a.vector, &b.vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_members_give_same_vector() {
        let e = emb(&[0.5, 1.5, 0.0]);
        let t = make_template(&[&e, &e, &e, &e, &e], "s", PoseLabel::Frontal, 0).unwrap();
        assert_eq!(t.vector, e.values());
        assert_eq!(t.size, 5);
    }

    #[test]
    fn single_member_template_copies() {
        let e = emb(&[0.25, 3.0]);
        let t = make_template(&[&e], "s", PoseLabel::Profile, 7).unwrap();
        assert_eq!(t.vector, vec![0.25, 3.0]);
        assert_eq!(t.template_index, 7);
    }

    #[test]
    fn wrong_member_count_is_protocol_error() {
        let e = emb(&[1.0]);
        assert!(matches!(make_template(&[&e, &e], "s", PoseLabel::Frontal, 0), Err(Error::Protocol(_))));
        assert!(matches!(make_template(&[], "s", PoseLabel::Frontal, 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn chi2_hand_values() {
        let mut a = vec![0.0f32; 1000];
        let mut b = vec![0.0f32; 1000];
        a[0] = 1.0;
        b[1] = 1.0;
        assert!((chi2(&a, &b).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(chi2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chi2_rejects_negative_and_mismatch() {
        assert!(matches!(chi2(&[-1.0], &[0.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(chi2(&[f32::NAN], &[0.0]), Err(Error::InvalidInput(_))));
        assert!(chi2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pose_tokens_round_trip() {
        for p in PoseLabel::ALL {
            assert_eq!(p.as_str().parse::<PoseLabel>().unwrap(), p);
        }
        assert!("side".parse::<PoseLabel>().is_err());
    }
}
