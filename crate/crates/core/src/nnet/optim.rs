//! Adam with bias correction.

use super::model::{ModelDims, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(dims: &ModelDims, lr: f32) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ModelParams::zeros(dims),
            v: ModelParams::zeros(dims),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (ms, vs) = (self.m.tensors_mut(), self.v.tensors_mut());
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::tensor::Tensor;

    fn dims() -> ModelDims {
        ModelDims {
            c_v: 2,
            d_q: 2,
            c_s: 2,
            h: 1,
            w: 1,
            att_dim: 2,
            mlp_hidden: 2,
            k: 2,
            ..ModelDims::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let d = dims();
        let mut p = ModelParams::init(&d, 1);
        let before = p.clone();
        let mut opt = Adam::new(&d, 1e-2);
        opt.step(&mut p, &ModelParams::zeros(&d));
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let d = dims();
        let mut p = ModelParams::zeros(&d);
        let mut g = ModelParams::zeros(&d);
        g.mlp2_b = Tensor::new(&[2, 1], vec![3.0, -0.5]);
        let mut opt = Adam::new(&d, 1e-6);
        opt.step(&mut p, &g);
        let got = p.mlp2_b.data();
        assert!((got[0] + 1e-6).abs() < 1e-11);
        assert!((got[1] - 1e-6).abs() < 1e-11);
        assert_eq!(opt.steps(), 1);
    }
}
