//! Feature providers standing in for frozen pretrained extractors.

use rand_distr::{Distribution, StandardNormal};

use super::model::FeatureBundle;
use super::tensor::Tensor;
use crate::raster::{downsample_mask, ChannelGrid, MaskError, MultiChannelMask};
use crate::seeding::derive_rng;

fn normal_vec(seed: u64, parts: &[&[u8]], n: usize) -> Vec<f32> {
    let mut rng = derive_rng(seed, parts);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn grid_tensor(grid: &ChannelGrid) -> Tensor {
    Tensor::new(
        &[grid.channels, grid.height * grid.width],
        grid.data.iter().map(|&v| v as f32).collect(),
    )
}

/// Segmentation guide `[C_s, H·W]`: per-cell class coverage fractions.
pub fn seg_features(mask: &MultiChannelMask, h: usize, w: usize) -> Result<Tensor, MaskError> {
    Ok(grid_tensor(&downsample_mask(mask, h as u32, w as u32)?))
}

/// Frozen pseudo-random visual features `[C_v, H·W]` keyed by patch id.
pub fn stub_visual_features(patch_id: &str, c_v: usize, h: usize, w: usize, seed: u64) -> Tensor {
    Tensor::new(
        &[c_v, h * w],
        normal_vec(seed, &[b"vhr", patch_id.as_bytes()], c_v * h * w),
    )
}

/// Lower-cased alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Bag-of-tokens question features `[D_q, 1]`: per-token N(0,1) vectors
/// summed and divided by √n, so every entry stays unit-variance.
pub fn stub_text_features(question: &str, d_q: usize, seed: u64) -> Tensor {
    let toks = tokens(question);
    let mut acc = vec![0f32; d_q];
    for t in &toks {
        for (a, v) in acc.iter_mut().zip(normal_vec(seed, &[b"tok", t.as_bytes()], d_q)) {
            *a += v;
        }
    }
    if !toks.is_empty() {
        let s = (toks.len() as f32).sqrt();
        acc.iter_mut().for_each(|a| *a /= s);
    }
    Tensor::new(&[d_q, 1], acc)
}

/// Visual features that see the scene: a fixed random projection of
/// per-cell class occupancy plus Gaussian noise.
#[derive(Debug, Clone)]
pub struct MaskVisualProvider {
    projection: Tensor,
    noise: f32,
    seed: u64,
}

impl MaskVisualProvider {
    pub fn new(c_v: usize, c_s: usize, noise: f32, seed: u64) -> Self {
        MaskVisualProvider {
            projection: Tensor::new(&[c_v, c_s], normal_vec(seed, &[b"projection"], c_v * c_s)),
            noise,
            seed,
        }
    }

    /// `guide` is `[C_s, H·W]`; noise is keyed by `key` so features are frozen.
    pub fn features(&self, guide: &Tensor, key: &str) -> Tensor {
        let occupied = guide.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let clean = self.projection.matmul(&occupied);
        let noise = normal_vec(self.seed, &[b"noise", key.as_bytes()], clean.len());
        let data = clean
            .data()
            .iter()
            .zip(noise)
            .map(|(&c, n)| c + self.noise * n)
            .collect();
        Tensor::new(clean.shape(), data)
    }
}

/// Which visual provider a pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VisualSource {
    /// Hash-keyed features independent of scene content.
    Stub,
    /// Occupancy projection with noise.
    #[default]
    Mask,
}

pub fn bundle(f_vhr: Tensor, f_q: Tensor, f_seg: Tensor) -> FeatureBundle {
    FeatureBundle { f_vhr, f_q, f_seg }
}
