//! Test and training pipelines: resize the shorter side to 256, crop 224,
//! resize to 113, scale to [0, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::RawImage;
use crate::error::{Error, Result};
use crate::network::INPUT_SIZE;
use crate::tensor::{Shape, Tensor};

pub const RESIZE_SHORTER: usize = 256;
pub const CROP_SIZE: usize = 224;

/// Planar float image, `3 × height × width`.
#[derive(Debug, Clone, PartialEq)]
struct Planes {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Planes {
    fn from_raw(img: &RawImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut data = vec![0.0; 3 * w * h];
        for (i, px) in img.pixels().chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * w * h + i] = px[c] as f32;
            }
        }
        Planes { width: w, height: h, data }
    }

    fn resize(&self, width: usize, height: usize) -> Planes {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let xs = taps(self.width, width);
        let ys = taps(self.height, height);
        let mut data = vec![0.0; 3 * width * height];
        for c in 0..3 {
            let src = &self.data[c * self.width * self.height..(c + 1) * self.width * self.height];
            let dst = &mut data[c * width * height..(c + 1) * width * height];
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = src[y0 * self.width + x0] * (1.0 - fx) + src[y0 * self.width + x1] * fx;
                    let bottom = src[y1 * self.width + x0] * (1.0 - fx) + src[y1 * self.width + x1] * fx;
                    dst[oy * width + ox] = top * (1.0 - fy) + bottom * fy;
                }
            }
        }
        Planes { width, height, data }
    }

    fn crop(&self, x: usize, y: usize, size: usize) -> Planes {
        let mut data = Vec::with_capacity(3 * size * size);
        for c in 0..3 {
            let plane = &self.data[c * self.width * self.height..];
            for row in y..y + size {
                data.extend_from_slice(&plane[row * self.width + x..row * self.width + x + size]);
            }
        }
        Planes {
            width: size,
            height: size,
            data,
        }
    }
}

/// Source sample positions for a half-pixel-centred bilinear resize.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Size after scaling the shorter side to 256; the longer side is rounded
/// half up.
pub fn resized_dims(width: usize, height: usize) -> (usize, usize) {
    let scale = |long: usize, short: usize| (2 * long * RESIZE_SHORTER + short) / (2 * short);
    if width <= height {
        (RESIZE_SHORTER, scale(height, width))
    } else {
        (scale(width, height), RESIZE_SHORTER)
    }
}

/// Top-left corner of the centred 224 crop in an image of the given size.
pub fn center_crop_offset(width: usize, height: usize) -> (usize, usize) {
    ((width - CROP_SIZE) / 2, (height - CROP_SIZE) / 2)
}

/// Top-left corner drawn uniformly over all valid 224 crop positions.
pub fn random_crop_offset(width: usize, height: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.gen_range(0..=width - CROP_SIZE);
    let y = rng.gen_range(0..=height - CROP_SIZE);
    (x, y)
}

fn pipeline(img: &RawImage, offset: impl FnOnce(usize, usize) -> (usize, usize)) -> Result<Tensor> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidInput("cannot preprocess an empty image".into()));
    }
    let (w, h) = resized_dims(img.width(), img.height());
    let resized = Planes::from_raw(img).resize(w, h);
    let (x, y) = offset(w, h);
    let out = resized.crop(x, y, CROP_SIZE).resize(INPUT_SIZE, INPUT_SIZE);
    let data = out.data.into_iter().map(|v| (v / 255.0).clamp(0.0, 1.0)).collect();
    Tensor::from_vec(Shape::new(1, 3, INPUT_SIZE, INPUT_SIZE), data)
}

/// Evaluation pipeline with a centred crop.
pub fn preprocess_test(img: &RawImage) -> Result<Tensor> {
    pipeline(img, center_crop_offset)
}

/// Training pipeline with a seeded random crop.
pub fn preprocess_train(img: &RawImage, seed: u64) -> Result<Tensor> {
    pipeline(img, |w, h| random_crop_offset(w, h, seed))
}
