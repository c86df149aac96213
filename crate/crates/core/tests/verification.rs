mod common;

use std::collections::HashSet;

use common::{iid_records, one_hot_records, records_with, SUBJECTS};
use proptest::prelude::*;
use sfpn_core::metrics::{eer, frr_at_far};
use sfpn_core::verification::{
    build_templates, chi2, cross_pose_pairs, gen_cross_pose_scores, gen_same_pose_scores, make_template, same_pose_pairs,
    score_pairs, write_scores_csv, PairLabel, PoseLabel, Protocol, TemplateKey, SCORE_CSV_HEADER,
};
use sfpn_core::{Embedding, Error};

fn counts(sets: &[sfpn_core::verification::ScoreSet]) -> Vec<(String, usize, usize)> {
    sets.iter().map(|s| (s.combination(), s.genuine().len(), s.impostor().len())).collect()
}

#[test]
fn table_counts_for_368_subjects() {
    let records = one_hot_records(SUBJECTS);
    let same = |n: usize| vec![("F-F".into(), n, 36_800), ("3/4-3/4".into(), n, 36_800), ("P-P".into(), n, 36_800)];
    let cross = |n: usize| vec![("F-3/4".into(), n, 36_800), ("3/4-P".into(), n, 36_800), ("F-P".into(), n, 36_800)];
    assert_eq!(counts(&gen_same_pose_scores(&records, 1).unwrap()), same(16_560));
    assert_eq!(counts(&gen_same_pose_scores(&records, 5).unwrap()), same(368));
    assert_eq!(counts(&gen_cross_pose_scores(&records, 1).unwrap()), cross(36_800));
    assert_eq!(counts(&gen_cross_pose_scores(&records, 5).unwrap()), cross(1_472));
}

#[test]
fn pair_structure_invariants() {
    for size in [1, 5] {
        let mut lists = Vec::new();
        for pose in PoseLabel::ALL {
            lists.push((true, same_pose_pairs(SUBJECTS, size, pose).unwrap()));
        }
        for (a, b) in Protocol::CrossPose.combinations() {
            lists.push((false, cross_pose_pairs(SUBJECTS, size, a, b).unwrap()));
        }
        for (same_pose, pairs) in lists {
            let mut seen = HashSet::new();
            let mut neighbours = vec![HashSet::new(); SUBJECTS];
            for p in &pairs {
                assert_ne!(p.a, p.b, "self comparison");
                let key = if same_pose { (p.a.min(p.b), p.a.max(p.b)) } else { (p.a, p.b) };
                assert!(seen.insert(key), "repeated pair {key:?}");
                match p.label {
                    PairLabel::Genuine => assert_eq!(p.a.subject, p.b.subject),
                    PairLabel::Impostor => {
                        assert_ne!(p.a.subject, p.b.subject);
                        assert_eq!((p.a.index, p.b.index), (0, 1));
                        neighbours[p.a.subject].insert(p.b.subject);
                    }
                }
            }
            assert!(neighbours.iter().all(|n| n.len() == 100));
            let first_impostor = pairs.iter().position(|p| p.label == PairLabel::Impostor).unwrap();
            assert!(pairs[first_impostor..].iter().all(|p| p.label == PairLabel::Impostor));
        }
    }
}

#[test]
fn impostor_neighbours_wrap_around_the_roster() {
    let pairs = same_pose_pairs(SUBJECTS, 5, PoseLabel::Profile).unwrap();
    let last: Vec<usize> = pairs
        .iter()
        .filter(|p| p.label == PairLabel::Impostor && p.a.subject == SUBJECTS - 1)
        .map(|p| p.b.subject)
        .collect();
    assert_eq!(last, (0..100).collect::<Vec<_>>());
}

#[test]
fn generation_is_a_pure_function() {
    let records = iid_records(120, 4);
    let a = gen_cross_pose_scores(&records, 5).unwrap();
    let b = gen_cross_pose_scores(&records, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_hot_oracle_separates_perfectly() {
    let records = one_hot_records(SUBJECTS);
    for size in [1, 5] {
        let sets = [gen_same_pose_scores(&records, size).unwrap(), gen_cross_pose_scores(&records, size).unwrap()].concat();
        assert_eq!(sets.len(), 6);
        for set in &sets {
            assert!(set.genuine().iter().all(|&d| d == 0.0));
            assert!(set.impostor().iter().all(|&d| (d - 2.0).abs() < 1e-9));
            assert_eq!(eer(&set.genuine(), &set.impostor()).unwrap(), 0.0);
            assert_eq!(frr_at_far(&set.genuine(), &set.impostor(), 0.001).unwrap(), 0.0);
        }
    }
}

#[test]
fn identity_free_embeddings_give_chance_eer() {
    let records = iid_records(SUBJECTS, 17);
    let sets = [gen_same_pose_scores(&records, 1).unwrap(), gen_cross_pose_scores(&records, 1).unwrap()].concat();
    for set in &sets {
        let e = eer(&set.genuine(), &set.impostor()).unwrap();
        assert!((e - 0.5).abs() <= 0.05, "{}: {e}", set.combination());
    }
}

#[test]
fn incomplete_records_list_every_gap() {
    let mut records = one_hot_records(110);
    records.retain(|r| !(r.subject_id == common::subject_id(3) && r.pose == PoseLabel::Profile && r.image_index >= 8));
    records.retain(|r| !(r.subject_id == common::subject_id(7) && r.pose == PoseLabel::Frontal));
    match build_templates(&records, 5) {
        Err(Error::Incomplete(gaps)) => {
            assert_eq!(gaps.len(), 2);
            assert!(gaps[0].contains("n000003/profile (8 of 10"));
            assert!(gaps[1].contains("n000007/frontal (0 of 10"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn small_rosters_and_bad_sizes_rejected() {
    let records = one_hot_records(100);
    assert!(matches!(gen_same_pose_scores(&records, 1), Err(Error::Protocol(_))));
    let records = one_hot_records(101);
    assert!(gen_same_pose_scores(&records, 1).is_ok());
    assert!(matches!(gen_same_pose_scores(&records, 3), Err(Error::Protocol(_))));
    assert!(matches!(cross_pose_pairs(150, 1, PoseLabel::Profile, PoseLabel::Profile), Err(Error::Protocol(_))));
}

#[test]
fn duplicate_images_rejected() {
    let mut records = one_hot_records(101);
    records[1].image_index = 0;
    assert!(matches!(build_templates(&records, 1), Err(Error::Protocol(_))));
}

#[test]
fn templates_follow_image_partition() {
    let records = records_with(101, |s, pose, i| {
        let mut v = vec![0.0; 1000];
        v[0] = (s * 100 + pose.index() * 10 + i) as f32;
        v
    });
    let set = build_templates(&records, 5).unwrap();
    let key = |subject, pose, index| TemplateKey { subject, pose, index };
    // mean of images 0..5 and 5..10 of subject 2, profile
    assert_eq!(set.get(key(2, PoseLabel::Profile, 0)).unwrap().vector[0], 222.0);
    assert_eq!(set.get(key(2, PoseLabel::Profile, 1)).unwrap().vector[0], 227.0);
    assert!(matches!(set.get(key(2, PoseLabel::Profile, 2)), Err(Error::Lookup(_))));
    let singles = build_templates(&records, 1).unwrap();
    assert_eq!(singles.get(key(4, PoseLabel::ThreeQuarter, 7)).unwrap().vector[0], 417.0);
    assert_eq!(singles.roster()[4], common::subject_id(4));
}

#[test]
fn scoring_is_deterministic_and_length_preserving() {
    let records = iid_records(101, 3);
    let set = build_templates(&records, 5).unwrap();
    let pairs = cross_pose_pairs(101, 5, PoseLabel::Frontal, PoseLabel::Profile).unwrap();
    let a = score_pairs(Protocol::CrossPose, (PoseLabel::Frontal, PoseLabel::Profile), &pairs, &set).unwrap();
    let b = score_pairs(Protocol::CrossPose, (PoseLabel::Frontal, PoseLabel::Profile), &pairs, &set).unwrap();
    assert_eq!(a.pairs.len(), pairs.len());
    assert_eq!(a, b);
    assert!(a.pairs.iter().zip(&pairs).all(|(s, p)| s.pair == *p));

    let mut dangling = pairs.clone();
    dangling[0].b.subject = 500;
    let err = score_pairs(Protocol::CrossPose, (PoseLabel::Frontal, PoseLabel::Profile), &dangling, &set);
    assert!(matches!(err, Err(Error::Lookup(_))));
}

#[test]
fn identical_templates_score_zero() {
    let records = one_hot_records(101);
    let set = build_templates(&records, 1).unwrap();
    let pairs = same_pose_pairs(101, 1, PoseLabel::Frontal).unwrap();
    let scored = score_pairs(Protocol::SamePose, (PoseLabel::Frontal, PoseLabel::Frontal), &pairs[..45], &set).unwrap();
    assert!(scored.pairs.iter().all(|p| p.distance == 0.0));
}

#[test]
fn score_csv_rows() {
    let records = one_hot_records(101);
    let sets = gen_cross_pose_scores(&records, 5).unwrap();
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, &sets[2]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SCORE_CSV_HEADER.join(","));
    assert_eq!(lines.len(), 1 + 101 * 4 + 101 * 100);
    assert_eq!(lines[1], "cross-pose,frontal,profile,5,n000000,0,n000000,0,genuine,0");
    assert_eq!(lines[405], "cross-pose,frontal,profile,5,n000000,0,n000001,1,impostor,1.9999999998");
}

#[test]
fn chi2_examples() {
    let mut a = vec![0.0f32; 1000];
    let mut b = vec![0.0f32; 1000];
    a[0] = 1.0;
    b[1] = 1.0;
    assert!((chi2(&a, &b).unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(chi2(&a, &a).unwrap(), 0.0);
    b[1] = -1.0;
    assert!(matches!(chi2(&a, &b), Err(Error::InvalidInput(_))));
}

#[test]
fn template_arithmetic() {
    let e = |v: Vec<f32>| Embedding::new(v).unwrap();
    let x = e(vec![0.0, 2.0, 4.0]);
    let y = e(vec![2.0, 0.0, 4.0]);
    let pair = [&x, &y, &x, &y, &x];
    let t = make_template(&pair, "s", PoseLabel::Frontal, 0).unwrap();
    assert!((t.vector[0] - 0.8).abs() < 1e-6 && (t.vector[1] - 1.2).abs() < 1e-6 && t.vector[2] == 4.0);
    let same = make_template(&[&x; 5], "s", PoseLabel::Frontal, 0).unwrap();
    assert_eq!(same.vector, x.values());
    assert!(matches!(make_template(&[&x, &y], "s", PoseLabel::Frontal, 0), Err(Error::Protocol(_))));
}

fn non_negative(len: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(0.0f32..10.0, len)
}

proptest! {
    #[test]
    fn chi2_is_symmetric_and_non_negative(a in non_negative(64), b in non_negative(64)) {
        let ab = chi2(&a, &b).unwrap();
        prop_assert_eq!(ab, chi2(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(chi2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn template_mean_lies_within_member_bounds(members in prop::collection::vec(non_negative(16), 5)) {
        let embeddings: Vec<Embedding> = members.iter().map(|m| Embedding::new(m.clone()).unwrap()).collect();
        let refs: Vec<&Embedding> = embeddings.iter().collect();
        let t = make_template(&refs, "s", PoseLabel::Profile, 1).unwrap();
        for (i, v) in t.vector.iter().enumerate() {
            let lo = members.iter().map(|m| m[i]).fold(f32::INFINITY, f32::min);
            let hi = members.iter().map(|m| m[i]).fold(f32::NEG_INFINITY, f32::max);
            prop_assert!(*v >= lo && *v <= hi);
        }
    }
}
