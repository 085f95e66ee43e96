use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    argmax, cross_entropy, global_average_pool, relu_in_place, softmax, BatchNorm1d, BatchNormCache, Conv1d,
};
use crate::dataset::Standardization;
use crate::error::{Error, Result};
use crate::sampling::{purpose, stream};

/// Network shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub classes: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() || self.filters.len() != self.kernels.len() {
            return Err(Error::config(
                "filters",
                "filters and kernels must be non-empty and of equal length",
            ));
        }
        if self.input_channels == 0 || self.classes < 2 {
            return Err(Error::config(
                "classes",
                "need at least one input channel and two classes",
            ));
        }
        if self.filters.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::config("filters", "zero-sized layer"));
        }
        Ok(())
    }
}

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv1d,
    pub norm: BatchNorm1d,
}

/// Convolutional blocks, global average pooling and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnModel {
    pub architecture: Architecture,
    pub blocks: Vec<ConvBlock>,
    /// `[class][feature]`
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
    /// Input normalization applied by [`FcnModel::predict`].
    pub input_stats: Standardization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics.
    Train,
    /// Running statistics.
    Infer,
}

/// Output of one forward pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input of every block.
    inputs: Vec<Vec<f64>>,
    /// Batch-norm output before the ReLU, per block.
    pre_activations: Vec<Vec<f64>>,
    caches: Vec<Option<BatchNormCache>>,
    pooled: Vec<f64>,
    /// `[batch][class]`
    pub probabilities: Vec<f64>,
    pub batch: usize,
    pub len: usize,
}

impl ForwardPass {
    pub fn probabilities_of(&self, b: usize, classes: usize) -> &[f64] {
        &self.probabilities[b * classes..(b + 1) * classes]
    }

    /// Fraction of ReLU units with non-positive input, over all blocks.
    pub fn inactive_fraction(&self) -> f64 {
        let total: usize = self.pre_activations.iter().map(Vec::len).sum();
        let dead = self.pre_activations.iter().flatten().filter(|&&z| z <= 0.0).count();
        dead as f64 / total.max(1) as f64
    }
}

/// Gradients in [`FcnModel::parameters_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub class: usize,
}

impl FcnModel {
    /// Fan-in-scaled uniform kernels, Glorot head, zero biases, unit
    /// batch-norm scale.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = stream(seed, purpose::INIT, 0);
        let mut blocks = Vec::new();
        let mut cin = architecture.input_channels;
        for (&cout, &k) in architecture.filters.iter().zip(&architecture.kernels) {
            let mut conv = Conv1d::zeros(cin, cout, k);
            let bound = (6.0 / (cin * k) as f64).sqrt();
            for w in &mut conv.weight {
                *w = rng.random_range(-bound..bound);
            }
            blocks.push(ConvBlock {
                conv,
                norm: BatchNorm1d::new(cout, BN_MOMENTUM, BN_EPSILON),
            });
            cin = cout;
        }
        let classes = architecture.classes;
        let bound = (6.0 / (cin + classes) as f64).sqrt();
        let head_weight = (0..classes * cin).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self {
            input_stats: Standardization::identity(architecture.input_channels),
            head_bias: vec![0.0; classes],
            head_weight,
            blocks,
            architecture,
        })
    }

    pub fn classes(&self) -> usize {
        self.architecture.classes
    }

    fn features(&self) -> usize {
        self.blocks.last().unwrap().conv.out_channels
    }

    /// Trainable tensors: per block kernel, bias, BN scale, BN shift; then
    /// the head weight and bias.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.norm.gamma);
            out.push(&mut b.norm.beta);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn parameter_shapes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend([
                b.conv.weight.len(),
                b.conv.bias.len(),
                b.norm.gamma.len(),
                b.norm.beta.len(),
            ]);
        }
        out.extend([self.head_weight.len(), self.head_bias.len()]);
        out
    }

    /// Forward pass over standardized channel-major inputs.
    pub fn forward(&self, x: &[f64], batch: usize, len: usize, mode: Mode) -> Result<ForwardPass> {
        let c0 = self.architecture.input_channels;
        if len == 0 || batch == 0 || x.len() != batch * c0 * len {
            return Err(Error::DimensionMismatch(format!(
                "input of {} values for batch {batch}, {c0} channels, length {len}",
                x.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut pre = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.to_vec();
        for (k, block) in self.blocks.iter().enumerate() {
            let y = block.conv.forward(&h, batch, len);
            let (z, cache) = match mode {
                Mode::Train => {
                    let (z, c) = block.norm.forward_train(&y, batch, len);
                    (z, Some(c))
                }
                Mode::Infer => (block.norm.forward_infer(&y, batch, len), None),
            };
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::Instability {
                    step: 0,
                    context: format!("non-finite activation in convolutional block {}", k + 1),
                });
            }
            let mut a = z.clone();
            relu_in_place(&mut a);
            inputs.push(std::mem::replace(&mut h, a));
            pre.push(z);
            caches.push(cache);
        }
        let f = self.features();
        let classes = self.classes();
        let pooled = global_average_pool(&h, batch, f, len);
        let mut probabilities = Vec::with_capacity(batch * classes);
        for b in 0..batch {
            let g = &pooled[b * f..(b + 1) * f];
            let logits: Vec<f64> = (0..classes)
                .map(|c| {
                    self.head_bias[c]
                        + self.head_weight[c * f..(c + 1) * f]
                            .iter()
                            .zip(g)
                            .map(|(w, v)| w * v)
                            .sum::<f64>()
                })
                .collect();
            if !logits.iter().all(|v| v.is_finite()) {
                return Err(Error::Instability {
                    step: 0,
                    context: "non-finite logits in the classification head".into(),
                });
            }
            probabilities.extend(softmax(&logits));
        }
        Ok(ForwardPass {
            inputs,
            pre_activations: pre,
            caches,
            pooled,
            probabilities,
            batch,
            len,
        })
    }

    /// Mean cross-entropy of a forward pass.
    pub fn loss(&self, pass: &ForwardPass, labels: &[usize]) -> f64 {
        let classes = self.classes();
        labels
            .iter()
            .enumerate()
            .map(|(b, &g)| cross_entropy(pass.probabilities_of(b, classes), g))
            .sum::<f64>()
            / labels.len() as f64
    }

    /// Exact gradients of the mean cross-entropy of a training-mode pass.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        let (batch, len) = (pass.batch, pass.len);
        if labels.len() != batch {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for batch {batch}",
                labels.len()
            )));
        }
        let classes = self.classes();
        let f = self.features();
        let shapes = self.parameter_shapes();
        let mut grads: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
        let head = 4 * self.blocks.len();

        // softmax + cross-entropy
        let mut dlogits = pass.probabilities.clone();
        for (b, &g) in labels.iter().enumerate() {
            dlogits[b * classes + g] -= 1.0;
        }
        for v in &mut dlogits {
            *v /= batch as f64;
        }
        let mut dpooled = vec![0.0; batch * f];
        for b in 0..batch {
            let g = &pass.pooled[b * f..(b + 1) * f];
            for c in 0..classes {
                let d = dlogits[b * classes + c];
                grads[head + 1][c] += d;
                for k in 0..f {
                    grads[head][c * f + k] += d * g[k];
                    dpooled[b * f + k] += d * self.head_weight[c * f + k];
                }
            }
        }
        // pooling spreads evenly over time
        let mut da = vec![0.0; batch * f * len];
        for (k, &d) in dpooled.iter().enumerate() {
            da[k * len..(k + 1) * len].fill(d / len as f64);
        }
        for (k, block) in self.blocks.iter().enumerate().rev() {
            let z = &pass.pre_activations[k];
            for (d, &zv) in da.iter_mut().zip(z) {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            }
            let cache = pass.caches[k]
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("gradients need a training-mode forward pass".into()))?;
            let (gw, rest) = grads[4 * k..4 * k + 4].split_at_mut(1);
            let (gb, rest) = rest.split_at_mut(1);
            let (gg, gbeta) = rest.split_at_mut(1);
            let dy = block.norm.backward(&da, cache, batch, len, &mut gg[0], &mut gbeta[0]);
            let dx = block
                .conv
                .backward(&pass.inputs[k], &dy, batch, len, &mut gw[0], &mut gb[0], k > 0);
            if let Some(dx) = dx {
                da = dx;
            }
        }
        Ok(Gradients { tensors: grads })
    }

    /// Updates the batch-norm running statistics from a training pass.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        for (block, cache) in self.blocks.iter_mut().zip(&pass.caches) {
            if let Some(c) = cache {
                block.norm.update_running(c);
            }
        }
    }

    /// Classifies one raw L×N₀ record.
    pub fn predict(&self, record: &DMatrix<f64>) -> Result<Prediction> {
        if record.ncols() != self.architecture.input_channels {
            return Err(Error::DimensionMismatch(format!(
                "record has {} channels, model expects {}",
                record.ncols(),
                self.architecture.input_channels
            )));
        }
        let x = self.input_stats.apply_channel_major(record);
        let pass = self.forward(&x, 1, record.nrows(), Mode::Infer)?;
        let probabilities = pass.probabilities;
        Ok(Prediction {
            class: argmax(&probabilities),
            probabilities,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kernels: Vec<usize>) -> FcnModel {
        FcnModel::new(
            Architecture {
                input_channels: 2,
                filters: vec![3, 4, 3],
                kernels,
                classes: 5,
            },
            11,
        )
        .unwrap()
    }

    fn input(batch: usize, len: usize) -> Vec<f64> {
        (0..batch * 2 * len)
            .map(|k| ((k * 37 % 101) as f64 / 50.0 - 1.0) * 1.3)
            .collect()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = tiny(vec![3, 3, 3]);
        for mode in [Mode::Train, Mode::Infer] {
            let p = m.forward(&input(4, 8), 4, 8, mode).unwrap();
            for b in 0..4 {
                let s: f64 = p.probabilities_of(b, 5).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_head_is_uniform() {
        let mut m = tiny(vec![8, 5, 3]);
        m.head_weight.fill(0.0);
        let p = m.forward(&input(3, 8), 3, 8, Mode::Infer).unwrap();
        assert!(p.probabilities.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn shape_errors() {
        let m = tiny(vec![3, 3, 3]);
        assert!(m.forward(&input(2, 8), 3, 8, Mode::Train).is_err());
        assert!(m.predict(&DMatrix::zeros(8, 3)).is_err());
    }
}
