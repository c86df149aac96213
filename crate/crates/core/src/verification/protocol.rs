use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::scores::{score_pairs, Protocol, ScoreSet};
use super::{make_template, EmbeddingRecord, PoseLabel, Template};
use crate::error::{Error, Result};
use crate::network::Embedding;

pub const IMAGES_PER_POSE: usize = 10;
/// Each enrolment template is compared against this many following subjects.
pub const IMPOSTOR_NEIGHBOURS: usize = 100;

/// Address of a template within the roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateKey {
    pub subject: usize,
    pub pose: PoseLabel,
    pub index: usize,
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject #{} {} template {}", self.subject, self.pose, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Genuine,
    Impostor,
}

impl PairLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PairLabel::Genuine => "genuine",
            PairLabel::Impostor => "impostor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pair {
    pub a: TemplateKey,
    pub b: TemplateKey,
    pub label: PairLabel,
}

/// All templates of a protocol-complete record set, addressed by [`TemplateKey`].
#[derive(Debug, Clone)]
pub struct TemplateSet {
    roster: Vec<String>,
    template_size: usize,
    templates: Vec<Template>,
}

impl TemplateSet {
    /// Subject ids in order of first appearance.
    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn template_size(&self) -> usize {
        self.template_size
    }

    pub fn per_pose(&self) -> usize {
        IMAGES_PER_POSE / self.template_size
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn get(&self, key: TemplateKey) -> Result<&Template> {
        if key.subject >= self.roster.len() || key.index >= self.per_pose() {
            return Err(Error::Lookup(key.to_string()));
        }
        let slot = (key.subject * PoseLabel::ALL.len() + key.pose.index()) * self.per_pose() + key.index;
        Ok(&self.templates[slot])
    }
}

fn template_count(template_size: usize) -> Result<usize> {
    match template_size {
        1 | 5 => Ok(IMAGES_PER_POSE / template_size),
        other => Err(Error::Protocol(format!("template size must be 1 or 5, got {other}"))),
    }
}

/// Groups records by subject and pose and averages them into templates.
///
/// Every subject must have exactly ten images (indices 0..10) in each pose.
/// Size-5 templates take images 0–4 and 5–9; size-1 template `k` is image `k`.
pub fn build_templates(records: &[EmbeddingRecord], template_size: usize) -> Result<TemplateSet> {
    let per_pose = template_count(template_size)?;
    let mut roster: Vec<String> = Vec::new();
    let mut position: HashMap<&str, usize> = HashMap::new();
    let mut slots: Vec<[[Option<&Embedding>; IMAGES_PER_POSE]; 3]> = Vec::new();
    for r in records {
        let s = *position.entry(&r.subject_id).or_insert_with(|| {
            roster.push(r.subject_id.clone());
            slots.push([[None; IMAGES_PER_POSE]; 3]);
            roster.len() - 1
        });
        if r.image_index >= IMAGES_PER_POSE {
            return Err(Error::Protocol(format!(
                "{} {} has image index {} (at most {} images per pose)",
                r.subject_id, r.pose, r.image_index, IMAGES_PER_POSE
            )));
        }
        let slot = &mut slots[s][r.pose.index()][r.image_index];
        if slot.is_some() {
            return Err(Error::Protocol(format!(
                "{} {} image {} appears twice",
                r.subject_id, r.pose, r.image_index
            )));
        }
        *slot = Some(&r.embedding);
    }

    let mut missing = Vec::new();
    for (s, poses) in slots.iter().enumerate() {
        for pose in PoseLabel::ALL {
            let have = poses[pose.index()].iter().filter(|e| e.is_some()).count();
            if have != IMAGES_PER_POSE {
                missing.push(format!("{}/{} ({have} of {IMAGES_PER_POSE} images)", roster[s], pose));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing));
    }

    let mut templates = Vec::with_capacity(roster.len() * 3 * per_pose);
    for (s, poses) in slots.iter().enumerate() {
        for pose in PoseLabel::ALL {
            let images: Vec<&Embedding> = poses[pose.index()].iter().map(|e| e.expect("checked above")).collect();
            for (k, members) in images.chunks(template_size).enumerate() {
                templates.push(make_template(members, &roster[s], pose, k)?);
            }
        }
    }
    Ok(TemplateSet {
        roster,
        template_size,
        templates,
    })
}

fn check_roster(subjects: usize) -> Result<()> {
    if subjects <= IMPOSTOR_NEIGHBOURS {
        return Err(Error::Protocol(format!(
            "impostor comparisons need at least {} subjects, got {subjects}",
            IMPOSTOR_NEIGHBOURS + 1
        )));
    }
    Ok(())
}

/// Template 0 of each subject in pose `a` against template 1 of the next
/// [`IMPOSTOR_NEIGHBOURS`] subjects (wrapping around the roster) in pose `b`.
fn impostor_pairs(subjects: usize, a: PoseLabel, b: PoseLabel, out: &mut Vec<Pair>) {
    for s in 0..subjects {
        for step in 1..=IMPOSTOR_NEIGHBOURS {
            out.push(Pair {
                a: TemplateKey { subject: s, pose: a, index: 0 },
                b: TemplateKey {
                    subject: (s + step) % subjects,
                    pose: b,
                    index: 1,
                },
                label: PairLabel::Impostor,
            });
        }
    }
}

/// Genuine pairs (every unordered pair of one subject's templates in `pose`)
/// followed by impostor pairs.
pub fn same_pose_pairs(subjects: usize, template_size: usize, pose: PoseLabel) -> Result<Vec<Pair>> {
    let per_pose = template_count(template_size)?;
    check_roster(subjects)?;
    let mut pairs = Vec::with_capacity(subjects * (per_pose * (per_pose - 1) / 2 + IMPOSTOR_NEIGHBOURS));
    for s in 0..subjects {
        for i in 0..per_pose {
            for j in i + 1..per_pose {
                pairs.push(Pair {
                    a: TemplateKey { subject: s, pose, index: i },
                    b: TemplateKey { subject: s, pose, index: j },
                    label: PairLabel::Genuine,
                });
            }
        }
    }
    impostor_pairs(subjects, pose, pose, &mut pairs);
    Ok(pairs)
}

/// Genuine pairs (every template of a subject in pose `a` against every one in
/// pose `b`) followed by impostor pairs.
pub fn cross_pose_pairs(subjects: usize, template_size: usize, a: PoseLabel, b: PoseLabel) -> Result<Vec<Pair>> {
    let per_pose = template_count(template_size)?;
    check_roster(subjects)?;
    if a == b {
        return Err(Error::Protocol(format!("cross-pose comparison needs two poses, got {a} twice")));
    }
    let mut pairs = Vec::with_capacity(subjects * (per_pose * per_pose + IMPOSTOR_NEIGHBOURS));
    for s in 0..subjects {
        for i in 0..per_pose {
            for j in 0..per_pose {
                pairs.push(Pair {
                    a: TemplateKey { subject: s, pose: a, index: i },
                    b: TemplateKey { subject: s, pose: b, index: j },
                    label: PairLabel::Genuine,
                });
            }
        }
    }
    impostor_pairs(subjects, a, b, &mut pairs);
    Ok(pairs)
}

/// Scores for F-F, 3/4-3/4 and P-P.
pub fn gen_same_pose_scores(records: &[EmbeddingRecord], template_size: usize) -> Result<Vec<ScoreSet>> {
    let set = build_templates(records, template_size)?;
    PoseLabel::ALL
        .iter()
        .map(|&p| {
            let pairs = same_pose_pairs(set.roster().len(), template_size, p)?;
            score_pairs(Protocol::SamePose, (p, p), &pairs, &set)
        })
        .collect()
}

/// Scores for F-3/4, 3/4-P and F-P.
pub fn gen_cross_pose_scores(records: &[EmbeddingRecord], template_size: usize) -> Result<Vec<ScoreSet>> {
    let set = build_templates(records, template_size)?;
    Protocol::CrossPose
        .combinations()
        .iter()
        .map(|&(a, b)| {
            let pairs = cross_pose_pairs(set.roster().len(), template_size, a, b)?;
            score_pairs(Protocol::CrossPose, (a, b), &pairs, &set)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn same_pose_counts_scale_with_roster() {
        let pairs = same_pose_pairs(150, 1, PoseLabel::Frontal).unwrap();
        let genuine = pairs.iter().filter(|p| p.label == PairLabel::Genuine).count();
        assert_eq!(genuine, 150 * 45);
        assert_eq!(pairs.len() - genuine, 150 * 100);
    }

    #[test]
    fn no_self_or_repeated_pairs() {
        for size in [1, 5] {
            let pairs = same_pose_pairs(101, size, PoseLabel::Profile).unwrap();
            let mut seen = HashSet::new();
            for p in &pairs {
                assert_ne!(p.a, p.b);
                let key = if p.a < p.b { (p.a, p.b) } else { (p.b, p.a) };
                assert!(seen.insert(key), "{key:?} repeated");
            }
        }
    }

    #[test]
    fn impostors_wrap_and_never_match_subject() {
        let pairs = cross_pose_pairs(101, 5, PoseLabel::Frontal, PoseLabel::Profile).unwrap();
        let last: Vec<usize> = pairs
            .iter()
            .filter(|p| p.label == PairLabel::Impostor && p.a.subject == 100)
            .map(|p| p.b.subject)
            .collect();
        assert_eq!(last, (0..100).collect::<Vec<_>>());
        for p in &pairs {
            match p.label {
                PairLabel::Genuine => assert_eq!(p.a.subject, p.b.subject),
                PairLabel::Impostor => {
                    assert_ne!(p.a.subject, p.b.subject);
                    assert_eq!((p.a.index, p.b.index), (0, 1));
                    assert_eq!((p.a.pose, p.b.pose), (PoseLabel::Frontal, PoseLabel::Profile));
                }
            }
        }
    }

    #[test]
    fn small_roster_and_bad_size_rejected() {
        assert!(matches!(same_pose_pairs(100, 1, PoseLabel::Frontal), Err(Error::Protocol(_))));
        assert!(matches!(same_pose_pairs(200, 2, PoseLabel::Frontal), Err(Error::Protocol(_))));
        assert!(matches!(
            cross_pose_pairs(200, 1, PoseLabel::Frontal, PoseLabel::Frontal),
            Err(Error::Protocol(_))
        ));
    }

    fn record(subject: &str, pose: PoseLabel, image_index: usize, value: f32) -> EmbeddingRecord {
        EmbeddingRecord {
            subject_id: subject.into(),
            pose,
            image_index,
            embedding: Embedding::new(vec![value, 1.0]).unwrap(),
        }
    }

    #[test]
    fn five_image_templates_split_in_halves() {
        let mut records = Vec::new();
        for pose in PoseLabel::ALL {
            for i in 0..10 {
                records.push(record("x", pose, i, i as f32));
            }
        }
        let set = build_templates(&records, 5).unwrap();
        let key = |index| TemplateKey {
            subject: 0,
            pose: PoseLabel::ThreeQuarter,
            index,
        };
        assert_eq!(set.get(key(0)).unwrap().vector, vec![2.0, 1.0]);
        assert_eq!(set.get(key(1)).unwrap().vector, vec![7.0, 1.0]);
        assert!(matches!(set.get(key(2)), Err(Error::Lookup(_))));
    }

    #[test]
    fn gaps_are_listed() {
        let mut records = Vec::new();
        for i in 0..9 {
            records.push(record("a", PoseLabel::Frontal, i, 0.0));
        }
        match build_templates(&records, 1) {
            Err(Error::Incomplete(slots)) => {
                assert_eq!(slots.len(), 3);
                assert!(slots[0].starts_with("a/frontal (9 of 10"));
            }
            other => panic!("expected incomplete, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_image_rejected() {
        let records = vec![record("a", PoseLabel::Frontal, 0, 0.0), record("a", PoseLabel::Frontal, 0, 1.0)];
        assert!(matches!(build_templates(&records, 1), Err(Error::Protocol(_))));
    }
}
