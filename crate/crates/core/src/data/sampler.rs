use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::ImagePair;
use super::image::ImageRGB;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Aligned LR/HR crops drawn from one source image.
#[derive(Debug, Clone)]
pub struct SamplePair<T: Real = f32> {
    pub lr_patch: Tensor<T>,
    pub hr_patch: Tensor<T>,
    pub source: usize,
    /// `(y, x)` of the LR crop.
    pub lr_corner: (usize, usize),
    /// `(y, x)` of the HR crop; always `scale × lr_corner`.
    pub hr_corner: (usize, usize),
}

/// Seeded uniform patch sampler. Batch `k` depends only on `(seed, k)`.
#[derive(Debug, Clone)]
pub struct PatchSampler {
    pairs: Vec<ImagePair>,
    /// Indices into the input list of the images large enough to sample.
    sources: Vec<usize>,
    patch: usize,
    scale: usize,
    seed: u64,
}

impl PatchSampler {
    /// Images whose LR side is shorter than `patch` are skipped with a warning.
    pub fn new(pairs: Vec<ImagePair>, patch: usize, scale: usize, seed: u64) -> Result<Self> {
        let mut sources = Vec::new();
        for (i, p) in pairs.iter().enumerate() {
            if p.lr.width() * scale != p.hr.width() || p.lr.height() * scale != p.hr.height() {
                return Err(Error::Data(format!("{}: LR/HR sizes disagree at ×{scale}", p.name)));
            }
            if p.lr.width() < patch || p.lr.height() < patch {
                log::warn!(
                    "skipping {}: {}×{} LR is smaller than the {patch}×{patch} patch",
                    p.name,
                    p.lr.width(),
                    p.lr.height()
                );
            } else {
                sources.push(i);
            }
        }
        if sources.is_empty() {
            return Err(Error::Data(format!("no image is large enough for {patch}×{patch} LR patches")));
        }
        Ok(PatchSampler { pairs, sources, patch, scale, seed })
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn pairs(&self) -> &[ImagePair] {
        &self.pairs
    }

    pub fn usable(&self) -> &[usize] {
        &self.sources
    }

    /// Source indices and LR corners of batch `step`.
    pub fn corners(&self, step: u64, batch: usize) -> Vec<(usize, (usize, usize))> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        (0..batch)
            .map(|_| {
                let src = self.sources[rng.gen_range(0..self.sources.len())];
                let lr = &self.pairs[src].lr;
                let y = rng.gen_range(0..=lr.height() - self.patch);
                let x = rng.gen_range(0..=lr.width() - self.patch);
                (src, (y, x))
            })
            .collect()
    }

    pub fn batch<T: Real>(&self, step: u64, batch: usize) -> Vec<SamplePair<T>> {
        let (p, r) = (self.patch, self.scale);
        self.corners(step, batch)
            .into_iter()
            .map(|(src, (y, x))| {
                let pair = &self.pairs[src];
                SamplePair {
                    lr_patch: crop_tensor(&pair.lr, y, x, p),
                    hr_patch: crop_tensor(&pair.hr, r * y, r * x, r * p),
                    source: src,
                    lr_corner: (y, x),
                    hr_corner: (r * y, r * x),
                }
            })
            .collect()
    }

    /// Batch `step` stacked into `[batch, 3, p, p]` / `[batch, 3, rp, rp]`.
    pub fn stacked<T: Real>(&self, step: u64, batch: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        let samples = self.batch::<T>(step, batch);
        let lr: Vec<_> = samples.iter().map(|s| s.lr_patch.clone()).collect();
        let hr: Vec<_> = samples.iter().map(|s| s.hr_patch.clone()).collect();
        Ok((Tensor::stack(&lr)?, Tensor::stack(&hr)?))
    }
}

/// One batch of `batch` pairs drawn with `seed`.
pub fn sample_patches<T: Real>(
    pairs: Vec<ImagePair>,
    patch: usize,
    scale: usize,
    batch: usize,
    seed: u64,
) -> Result<Vec<SamplePair<T>>> {
    Ok(PatchSampler::new(pairs, patch, scale, seed)?.batch(0, batch))
}

fn crop_tensor<T: Real>(img: &ImageRGB, y0: usize, x0: usize, p: usize) -> Tensor<T> {
    Tensor::from_fn([1, 3, p, p], |[_, c, y, x]| T::lit(img.pixel(x0 + x, y0 + y)[c] as f64))
}
