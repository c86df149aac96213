//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfpn_core::verification::{EmbeddingRecord, PoseLabel};
use sfpn_core::{Embedding, ParamScope, Variant};

pub const SUBJECTS: usize = 368;

pub fn subject_id(s: usize) -> String {
    format!("n{s:06}")
}

/// `subjects × 3 poses × 10 images`, ordered by subject, then pose, then image.
pub fn records_with(subjects: usize, mut embed: impl FnMut(usize, PoseLabel, usize) -> Vec<f32>) -> Vec<EmbeddingRecord> {
    let mut out = Vec::with_capacity(subjects * 30);
    for s in 0..subjects {
        for pose in PoseLabel::ALL {
            for i in 0..10 {
                out.push(EmbeddingRecord {
                    subject_id: subject_id(s),
                    pose,
                    image_index: i,
                    embedding: Embedding::new(embed(s, pose, i)).unwrap(),
                });
            }
        }
    }
    out
}

/// Basis vector `s` for every image of subject `s`.
pub fn one_hot_records(subjects: usize) -> Vec<EmbeddingRecord> {
    assert!(subjects <= 1000);
    records_with(subjects, |s, _, _| {
        let mut v = vec![0.0; 1000];
        v[s] = 1.0;
        v
    })
}

/// Every image drawn independently from one distribution, whoever the subject.
pub fn iid_records(subjects: usize, seed: u64) -> Vec<EmbeddingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records_with(subjects, |_, _, _| (0..1000).map(|_| rng.gen_range(0.0..1.0)).collect())
}

/// FAR and FRR at threshold `t` by direct counting, accepting `d <= t`.
pub fn rates_at(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let far = impostor.iter().filter(|&&d| d <= t).count() as f64 / impostor.len() as f64;
    let frr = genuine.iter().filter(|&&d| d > t).count() as f64 / genuine.len() as f64;
    (far, frr)
}

/// O(n²) EER: sweep thresholds at the midpoints between consecutive distinct
/// pooled scores (plus both infinities), counting rates from scratch at each,
/// and intersect the piecewise-linear FAR-FRR path with the diagonal.
pub fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(pooled.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(f64::INFINITY);

    let path: Vec<(f64, f64)> = thresholds.iter().map(|&t| rates_at(genuine, impostor, t)).collect();
    diagonal_crossing(&path)
}

/// First meeting of a FAR-ascending `(far, frr)` polyline with FAR = FRR.
pub fn diagonal_crossing(path: &[(f64, f64)]) -> f64 {
    for (k, &(far, frr)) in path.iter().enumerate() {
        if far == frr {
            return far;
        }
        if far > frr {
            let (far0, frr0) = path[k - 1];
            let gap0 = frr0 - far0;
            let gap1 = frr - far;
            let t = gap0 / (gap0 - gap1);
            return far0 + t * (far - far0);
        }
    }
    unreachable!("a complete path ends at FAR 1, FRR 0")
}

/// (squeeze, expand 1×1, expand 3×3) per fire module, fire2 to fire9.
pub const FIRES: [(usize, usize, usize); 8] = [
    (16, 64, 64),
    (16, 64, 64),
    (32, 128, 128),
    (32, 128, 128),
    (48, 192, 192),
    (48, 192, 192),
    (64, 256, 256),
    (64, 256, 256),
];

/// Every weight and bias array of the full-size network as a list of lengths.
pub fn enumerate_arrays(variant: Variant, classes: usize, scope: ParamScope) -> Vec<usize> {
    let mut arrays = Vec::new();
    let conv3 = |arrays: &mut Vec<usize>, cin: usize, cout: usize| {
        if variant.use_dwc() {
            arrays.extend([cin * 3 * 3, cin, cout * cin, cout]);
        } else {
            arrays.extend([cout * cin * 3 * 3, cout]);
        }
    };
    conv3(&mut arrays, 3, 64);
    let mut cin = 64;
    for (s, e1, e3) in FIRES {
        arrays.extend([s * cin, s, e1 * s, e1]);
        conv3(&mut arrays, s, e3);
        cin = e1 + e3;
    }
    arrays.extend([1000 * cin, 1000]);
    if variant.use_gdc() {
        arrays.extend([1000 * 13 * 13, 1000]);
    }
    if scope == ParamScope::Full {
        arrays.extend([1000, 1000, classes * 1000, classes]);
    }
    arrays
}

pub fn oracle(variant: Variant, classes: usize, scope: ParamScope) -> usize {
    enumerate_arrays(variant, classes, scope).iter().sum()
}
