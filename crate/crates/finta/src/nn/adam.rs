//! Adam optimizer with selectable weight-decay coupling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linalg::Scalar;
use super::{AutoencoderModel, Gradients};

/// Whether weight decay is applied directly to the parameters (shrinking
/// them by `lr * decay` per step, outside the adaptive scaling) or added to
/// the gradient as a coupled L2 term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    Decoupled,
    Coupled,
}

pub struct Adam<F: Scalar> {
    lr: F,
    beta1: f64,
    beta2: f64,
    eps: F,
    weight_decay: F,
    decay_mode: DecayMode,
    step_count: u32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(
        model: &AutoencoderModel<F>,
        learning_rate: f64,
        weight_decay: f64,
        decay_mode: DecayMode,
    ) -> Self {
        let shapes: Vec<usize> =
            model.param_tensors().iter().map(|(_, _, d)| d.len()).collect();
        Self {
            lr: F::from_f64(learning_rate),
            beta1: 0.9,
            beta2: 0.999,
            eps: F::from_f64(1e-8),
            weight_decay: F::from_f64(weight_decay),
            decay_mode,
            step_count: 0,
            m: shapes.iter().map(|&n| vec![F::ZERO; n]).collect(),
            v: shapes.iter().map(|&n| vec![F::ZERO; n]).collect(),
        }
    }

    /// One update over every parameter tensor.
    pub fn step(&mut self, model: &mut AutoencoderModel<F>, grads: &Gradients<F>) {
        self.step_count += 1;
        let bc1 = F::from_f64(1.0 / (1.0 - self.beta1.powi(self.step_count as i32)));
        let bc2 = F::from_f64(1.0 / (1.0 - self.beta2.powi(self.step_count as i32)));
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one_m_b1 = F::from_f64(1.0 - self.beta1);
        let one_m_b2 = F::from_f64(1.0 - self.beta2);
        let lr = self.lr;
        let eps = self.eps;
        let wd = self.weight_decay;
        let decay_mode = self.decay_mode;
        let shrink = F::ONE - lr * wd;

        let params = model.param_tensors_mut();
        let grad_slices = grads.flat_slices();
        debug_assert_eq!(params.len(), grad_slices.len());
        for ((theta, grad), (m, v)) in params
            .into_iter()
            .zip(grad_slices)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            theta
                .par_chunks_mut(4096)
                .zip(grad.par_chunks(4096))
                .zip(m.par_chunks_mut(4096).zip(v.par_chunks_mut(4096)))
                .for_each(|((tc, gc), (mc, vc))| {
                    for i in 0..tc.len() {
                        let mut g = gc[i];
                        if decay_mode == DecayMode::Coupled {
                            g = g + wd * tc[i];
                        }
                        mc[i] = b1 * mc[i] + one_m_b1 * g;
                        vc[i] = b2 * vc[i] + one_m_b2 * g * g;
                        let m_hat = mc[i] * bc1;
                        let v_hat = vc[i] * bc2;
                        if decay_mode == DecayMode::Decoupled {
                            tc[i] = tc[i] * shrink;
                        }
                        tc[i] = tc[i] - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                });
        }
    }
}
