//! Segmentation-guided attention VQA model.
//!
//! Spatial maps are stored as `[channels, H·W]` matrices with positions in
//! row-major order; vectors are columns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::autodiff::{Graph, Var};
use super::tensor::{Real, Tensor};
use crate::seeding::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("answer index {index} out of range for {k} outputs")]
    TargetOutOfRange { index: usize, k: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// How the glimpse is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    /// Glimpse from question and segmentation features.
    #[default]
    Guided,
    /// Fixed uniform glimpse: mean pooling, no attention parameters used.
    Uniform,
}

impl AttentionMode {
    pub fn code(self) -> u32 {
        match self {
            AttentionMode::Guided => 0,
            AttentionMode::Uniform => 1,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(AttentionMode::Guided),
            1 => Some(AttentionMode::Uniform),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub c_v: usize,
    pub d_q: usize,
    pub c_s: usize,
    pub h: usize,
    pub w: usize,
    pub att_dim: usize,
    pub mlp_hidden: usize,
    pub k: usize,
    pub dropout: f32,
    pub attention: AttentionMode,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            c_v: 64,
            d_q: 64,
            c_s: 16,
            h: 8,
            w: 8,
            att_dim: 250,
            mlp_hidden: 256,
            k: 1000,
            dropout: 0.5,
            attention: AttentionMode::Guided,
        }
    }
}

impl ModelDims {
    pub fn positions(&self) -> usize {
        self.h * self.w
    }
}

pub const PARAM_NAMES: [&str; 10] = [
    "text_w", "text_b", "seg_w", "seg_b", "att_w", "att_b", "mlp1_w", "mlp1_b", "mlp2_w", "mlp2_b",
];

/// Trainable parameters, in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub text_w: Tensor<T>,
    pub text_b: Tensor<T>,
    pub seg_w: Tensor<T>,
    pub seg_b: Tensor<T>,
    pub att_w: Tensor<T>,
    pub att_b: Tensor<T>,
    pub mlp1_w: Tensor<T>,
    pub mlp1_b: Tensor<T>,
    pub mlp2_w: Tensor<T>,
    pub mlp2_b: Tensor<T>,
}

pub fn param_shapes(d: &ModelDims) -> [[usize; 2]; 10] {
    let a = d.att_dim;
    [
        [a, d.d_q],
        [a, 1],
        [a, d.c_s],
        [a, 1],
        [1, 2 * a],
        [1, 1],
        [d.mlp_hidden, d.c_v + d.d_q],
        [d.mlp_hidden, 1],
        [d.k, d.mlp_hidden],
        [d.k, 1],
    ]
}

impl<T: Real> ModelParams<T> {
    pub fn from_tensors(mut t: Vec<Tensor<T>>) -> Self {
        assert_eq!(t.len(), 10);
        let mut next = || t.remove(0);
        ModelParams {
            text_w: next(),
            text_b: next(),
            seg_w: next(),
            seg_b: next(),
            att_w: next(),
            att_b: next(),
            mlp1_w: next(),
            mlp1_b: next(),
            mlp2_w: next(),
            mlp2_b: next(),
        }
    }

    pub fn zeros(dims: &ModelDims) -> Self {
        Self::from_tensors(param_shapes(dims).iter().map(|s| Tensor::zeros(s)).collect())
    }

    /// Uniform(−a, a) weights with a = √(6/(fan_in+fan_out)); zero biases.
    pub fn init(dims: &ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"init"]));
        let tensors = param_shapes(dims)
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if i % 2 == 1 {
                    return Tensor::zeros(s);
                }
                let a = (6.0 / (s[0] + s[1]) as f64).sqrt();
                Tensor::from_fn(s, |_| T::of(rng.random_range(-a..a)))
            })
            .collect();
        Self::from_tensors(tensors)
    }

    /// Sets the output layer to predict the log prior of `freqs` for every
    /// input: zero output weights, log-frequency bias.
    pub fn set_output_prior(&mut self, freqs: &[u64]) {
        assert_eq!(freqs.len(), self.mlp2_b.len());
        let total: u64 = freqs.iter().sum();
        self.mlp2_w = Tensor::zeros(self.mlp2_w.shape());
        for (b, &f) in self.mlp2_b.data_mut().iter_mut().zip(freqs) {
            *b = T::of(((f.max(1)) as f64 / total.max(1) as f64).ln());
        }
    }

    pub fn tensors(&self) -> [&Tensor<T>; 10] {
        [
            &self.text_w,
            &self.text_b,
            &self.seg_w,
            &self.seg_b,
            &self.att_w,
            &self.att_b,
            &self.mlp1_w,
            &self.mlp1_b,
            &self.mlp2_w,
            &self.mlp2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 10] {
        [
            &mut self.text_w,
            &mut self.text_b,
            &mut self.seg_w,
            &mut self.seg_b,
            &mut self.att_w,
            &mut self.att_b,
            &mut self.mlp1_w,
            &mut self.mlp1_b,
            &mut self.mlp2_w,
            &mut self.mlp2_b,
        ]
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams::from_tensors(self.tensors().iter().map(|t| t.cast()).collect())
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v = *v * s;
            }
        }
    }

    pub fn check_dims(&self, dims: &ModelDims) -> Result<(), ModelError> {
        for ((t, s), name) in self.tensors().iter().zip(param_shapes(dims)).zip(PARAM_NAMES) {
            if t.shape() != s {
                return Err(ModelError::Shape {
                    what: name,
                    expected: s.to_vec(),
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Visual, question and segmentation-guide features for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle<T: Real = f32> {
    /// `[C_v, H·W]`
    pub f_vhr: Tensor<T>,
    /// `[D_q, 1]`
    pub f_q: Tensor<T>,
    /// `[C_s, H·W]`
    pub f_seg: Tensor<T>,
}

impl<T: Real> FeatureBundle<T> {
    pub fn check(&self, dims: &ModelDims) -> Result<(), ModelError> {
        let n = dims.positions();
        for (what, t, expected) in [
            ("f_vhr", &self.f_vhr, [dims.c_v, n]),
            ("f_q", &self.f_q, [dims.d_q, 1]),
            ("f_seg", &self.f_seg, [dims.c_s, n]),
        ] {
            if [t.rows(), t.cols()] != expected {
                return Err(ModelError::Shape {
                    what,
                    expected: expected.to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            if !t.all_finite() {
                return Err(ModelError::NonFinite(what));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> FeatureBundle<U> {
        FeatureBundle {
            f_vhr: self.f_vhr.cast(),
            f_q: self.f_q.cast(),
            f_seg: self.f_seg.cast(),
        }
    }

    /// Same features with the segmentation guide zeroed.
    pub fn without_guide(&self) -> Self {
        FeatureBundle {
            f_seg: Tensor::zeros(self.f_seg.shape()),
            ..self.clone()
        }
    }
}

/// Dropout switch. Training masks are drawn from the given seed so a
/// forward pass is a pure function of its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    fn new(mode: Mode, rate: f32) -> Self {
        let rng = match mode {
            Mode::Train { seed } if rate > 0.0 => Some(ChaCha8Rng::seed_from_u64(derive_seed(seed, &[b"dropout"]))),
            _ => None,
        };
        Dropout { rate: rate as f64, rng }
    }

    /// Inverted dropout: survivors are scaled by 1/(1−d).
    fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: Var) -> Var {
        let Some(rng) = &mut self.rng else { return x };
        let keep = T::of(1.0 / (1.0 - self.rate));
        let shape = g.value(x).shape().to_vec();
        let rate = self.rate;
        let mask = Tensor::from_fn(&shape, |_| if rng.random::<f64>() < rate { T::zero() } else { keep });
        g.mul_const(x, mask)
    }
}

pub(crate) struct Forward {
    pub params: [Var; 10],
    pub glimpse: Var,
    pub attended: Var,
    pub logits: Var,
}

pub(crate) fn build<T: Real>(
    g: &mut Graph<T>,
    params: &ModelParams<T>,
    dims: &ModelDims,
    bundle: &FeatureBundle<T>,
    mode: Mode,
) -> Forward {
    let mut drop = Dropout::new(mode, dims.dropout);
    let p: Vec<Var> = params.tensors().iter().map(|t| g.leaf((*t).clone())).collect();
    let [text_w, text_b, seg_w, seg_b, att_w, att_b, mlp1_w, mlp1_b, mlp2_w, mlp2_b] = p[..] else {
        unreachable!()
    };
    let n = dims.positions();
    let f_q = g.leaf(bundle.f_q.clone());
    let f_vhr = g.leaf(bundle.f_vhr.clone());

    let glimpse = match dims.attention {
        AttentionMode::Guided => {
            let f_seg = g.leaf(bundle.f_seg.clone());
            let t = g.matmul(text_w, f_q);
            let t = g.add_col_bias(t, text_b);
            let t = drop.apply(g, t);
            let t = g.broadcast_cols(t, n);
            let s = g.matmul(seg_w, f_seg);
            let s = g.add_col_bias(s, seg_b);
            let s = drop.apply(g, s);
            let u = g.concat_rows(t, s);
            let u = g.relu(u);
            let logits = g.matmul(att_w, u);
            let logits = g.add_col_bias(logits, att_b);
            g.softmax_all(logits)
        }
        AttentionMode::Uniform => g.leaf(Tensor::full(&[1, n], T::of(1.0 / n as f64))),
    };
    let gt = g.transpose(glimpse);
    let attended = g.matmul(f_vhr, gt);
    let z = g.concat_rows(attended, f_q);
    let h = g.matmul(mlp1_w, z);
    let h = g.add_col_bias(h, mlp1_b);
    let h = g.relu(h);
    let h = drop.apply(g, h);
    let out = g.matmul(mlp2_w, h);
    let logits = g.add_col_bias(out, mlp2_b);
    Forward {
        params: [
            text_w, text_b, seg_w, seg_b, att_w, att_b, mlp1_w, mlp1_b, mlp2_w, mlp2_b,
        ],
        glimpse,
        attended,
        logits,
    }
}

fn checked<T: Real>(t: &Tensor<T>, what: &'static str) -> Result<(), ModelError> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what))
    }
}

/// Attended visual features `[C_v]` and the glimpse `[H, W]`.
pub fn attention_forward<T: Real>(
    params: &ModelParams<T>,
    dims: &ModelDims,
    bundle: &FeatureBundle<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
    bundle.check(dims)?;
    let mut g = Graph::new();
    let f = build(&mut g, params, dims, bundle, mode);
    let attended = g.value(f.attended).clone().reshape(&[dims.c_v]);
    let glimpse = g.value(f.glimpse).clone().reshape(&[dims.h, dims.w]);
    checked(&glimpse, "glimpse")?;
    checked(&attended, "attended")?;
    Ok((attended, glimpse))
}

/// Raw answer scores `[K]`.
pub fn predict<T: Real>(
    params: &ModelParams<T>,
    dims: &ModelDims,
    bundle: &FeatureBundle<T>,
    mode: Mode,
) -> Result<Tensor<T>, ModelError> {
    bundle.check(dims)?;
    let mut g = Graph::new();
    let f = build(&mut g, params, dims, bundle, mode);
    let logits = g.value(f.logits).clone().reshape(&[dims.k]);
    checked(&logits, "logits")?;
    Ok(logits)
}

/// Cross-entropy of one sample and its parameter gradients.
pub fn sample_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    dims: &ModelDims,
    bundle: &FeatureBundle<T>,
    target: usize,
    mode: Mode,
) -> Result<(T, ModelParams<T>), ModelError> {
    if target >= dims.k {
        return Err(ModelError::TargetOutOfRange {
            index: target,
            k: dims.k,
        });
    }
    bundle.check(dims)?;
    let mut g = Graph::new();
    let f = build(&mut g, params, dims, bundle, mode);
    let loss = g.cross_entropy(f.logits, target);
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(ModelError::NonFinite("loss"));
    }
    let grads = g.backward(loss);
    Ok((
        value,
        ModelParams::from_tensors(f.params.iter().map(|&v| grads.of(v, &g)).collect()),
    ))
}

/// Mean cross-entropy over a batch and its gradients. In training mode the
/// dropout masks of sample `i` are drawn from `(seed, i)`.
pub fn loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    dims: &ModelDims,
    batch: &[(&FeatureBundle<T>, usize)],
    mode: Mode,
) -> Result<(T, ModelParams<T>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total = T::zero();
    let mut acc = ModelParams::zeros(dims);
    for (i, (bundle, target)) in batch.iter().enumerate() {
        let (l, g) = sample_loss_and_grads(params, dims, bundle, *target, sample_mode(mode, i))?;
        total = total + l;
        acc.add_assign(&g);
    }
    let inv = T::of(1.0 / batch.len() as f64);
    acc.scale(inv);
    Ok((total * inv, acc))
}

pub(crate) fn sample_mode(mode: Mode, i: usize) -> Mode {
    match mode {
        Mode::Eval => Mode::Eval,
        Mode::Train { seed } => Mode::Train {
            seed: derive_seed(seed, &[b"sample", &(i as u64).to_le_bytes()]),
        },
    }
}
