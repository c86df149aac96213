use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Init, Network, NetworkConfig};
use crate::tensor::{Shape, Tensor};

use super::{Dataset, TrainConfig};

/// Side length of toy images.
pub const TOY_IMAGE_SIZE: usize = 113;
pub const TOY_BATCH_SIZE: usize = 32;
/// Initial `bn10.gamma` of a toy network.
pub const TOY_BN10_GAMMA: f32 = 0.1;

/// Randomly initialised network for toy training, with `bn10.gamma` set to
/// [`TOY_BN10_GAMMA`].
pub fn toy_network(config: NetworkConfig, seed: u64) -> Result<Network<f32>> {
    let mut net = Network::build(config, Init::Random { seed })?;
    for p in net.params_mut().iter_mut().filter(|p| p.name == "bn10.gamma") {
        p.data.iter_mut().for_each(|v| *v = TOY_BN10_GAMMA);
    }
    Ok(net)
}

/// Training settings for the toy identification task. Every layer of a
/// randomly initialised network is new, so no layer gets a boosted rate.
pub fn toy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: TOY_BATCH_SIZE,
        seed,
        new_layers: Vec::new(),
        ..TrainConfig::default()
    }
}

/// Side length, in pixels, of the square cells of a class pattern.
const TOY_CELL: usize = 8;

/// Synthetic identification set. Each class owns a base colour and a fixed
/// blocky noise pattern; every image is that class pattern plus independent
/// per-pixel noise, clamped to `[0, 1]`. Samples are ordered class by class.
pub fn toy_dataset(classes: usize, per_class: usize, size: usize, seed: u64) -> Result<Dataset<f32>> {
    if classes < 2 || per_class == 0 || size == 0 {
        return Err(Error::InvalidInput("toy dataset needs >= 2 classes, >= 1 image per class, size >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = size.div_ceil(TOY_CELL);
    let patterns: Vec<Vec<f32>> = (0..classes)
        .map(|_| {
            let colour: [f32; 3] = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
            let grid: Vec<f32> = (0..3 * cells * cells).map(|_| rng.gen_range(-0.2f32..0.2)).collect();
            let mut pattern = Vec::with_capacity(3 * size * size);
            for (c, &base) in colour.iter().enumerate() {
                for y in 0..size {
                    for x in 0..size {
                        pattern.push(base + grid[(c * cells + y / TOY_CELL) * cells + x / TOY_CELL]);
                    }
                }
            }
            pattern
        })
        .collect();
    let mut data = Vec::with_capacity(classes * per_class * 3 * size * size);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (label, pattern) in patterns.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(pattern.iter().map(|&p| (p + rng.gen_range(-0.1f32..0.1)).clamp(0.0, 1.0)));
            labels.push(label);
        }
    }
    Ok(Dataset {
        images: Tensor::from_vec(Shape::new(classes * per_class, 3, size, size), data)?,
        labels,
        num_classes: classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Variant;

    #[test]
    fn dataset_is_seeded_and_ordered_by_class() {
        let a = toy_dataset(3, 4, 16, 7).unwrap();
        let b = toy_dataset(3, 4, 16, 7).unwrap();
        assert_eq!(a.images.data(), b.images.data());
        assert_eq!(a.labels, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
        assert_eq!(a.images.shape(), Shape::new(12, 3, 16, 16));
        assert!(a.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_ne!(toy_dataset(3, 4, 16, 8).unwrap().images.data(), a.images.data());
    }

    #[test]
    fn images_sit_closer_to_their_own_class_pattern() {
        let d = toy_dataset(4, 6, 24, 3).unwrap();
        let len = 3 * 24 * 24;
        let image = |i: usize| &d.images.data()[i * len..(i + 1) * len];
        let mean = |class: usize| -> Vec<f32> {
            (0..len).map(|k| (0..6).map(|j| image(class * 6 + j)[k]).sum::<f32>() / 6.0).collect()
        };
        let means: Vec<Vec<f32>> = (0..4).map(mean).collect();
        let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>();
        for i in 0..24 {
            let nearest = (0..4).min_by(|&a, &b| dist(image(i), &means[a]).total_cmp(&dist(image(i), &means[b]))).unwrap();
            assert_eq!(nearest, d.labels[i]);
        }
    }

    #[test]
    fn toy_network_sets_bn10_gamma() {
        let net = toy_network(NetworkConfig::tiny(Variant::Base), 0).unwrap();
        let gamma = net.param("bn10.gamma").unwrap();
        assert!(gamma.data.iter().all(|&g| g == TOY_BN10_GAMMA));
        assert!(net.param("bn10.beta").unwrap().data.iter().all(|&b| b == 0.0));
    }
}
