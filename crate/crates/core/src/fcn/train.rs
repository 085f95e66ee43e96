use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::layers::argmax;
use super::model::{Architecture, FcnModel, Mode};
use crate::dataset::{DatasetD, Instance, Standardization};
use crate::error::{Error, Result};
use crate::sampling::{purpose, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 500,
            adam: AdamConfig::default(),
            seed: 0,
            filters: vec![16, 32, 16],
            kernels: vec![8, 5, 3],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        self.adam.validate()
    }
}

/// Loss and accuracy histories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub iteration_loss: Vec<f64>,
    pub iteration_accuracy: Vec<f64>,
    pub epoch_train_loss: Vec<f64>,
    pub epoch_train_accuracy: Vec<f64>,
    pub epoch_validation_loss: Vec<f64>,
    pub epoch_validation_accuracy: Vec<f64>,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainingCurves {
    /// One row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_accuracy,validation_loss,validation_accuracy\n");
        for e in 0..self.epoch_train_loss.len() {
            let val = |v: &Vec<f64>| v.get(e).map_or(String::new(), |x| format!("{x:.6}"));
            s.push_str(&format!(
                "{},{:.6},{:.6},{},{}\n",
                e + 1,
                self.epoch_train_loss[e],
                self.epoch_train_accuracy[e],
                val(&self.epoch_validation_loss),
                val(&self.epoch_validation_accuracy)
            ));
        }
        s
    }

    /// One row per mini-batch iteration.
    pub fn iterations_csv(&self) -> String {
        let mut s = String::from("iteration,loss,accuracy\n");
        for (i, (l, a)) in self.iteration_loss.iter().zip(&self.iteration_accuracy).enumerate() {
            s.push_str(&format!("{},{l:.6},{a:.6}\n", i + 1));
        }
        s
    }
}

/// Standardized channel-major inputs and labels of a split.
pub struct PreparedSplit {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub channels: usize,
    pub len: usize,
}

impl PreparedSplit {
    pub fn new(instances: &[Instance], stats: &Standardization) -> Self {
        let (len, channels) = instances.first().map_or((0, 0), |i| i.record.shape());
        let mut inputs = Vec::with_capacity(instances.len() * len * channels);
        for inst in instances {
            inputs.extend(stats.apply_channel_major(&inst.record));
        }
        Self {
            inputs,
            labels: instances.iter().map(|i| i.label).collect(),
            channels,
            len,
        }
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    fn sample(&self, i: usize) -> &[f64] {
        let n = self.channels * self.len;
        &self.inputs[i * n..(i + 1) * n]
    }
}

/// Mean loss and accuracy in inference mode.
pub fn evaluate_split(model: &FcnModel, split: &PreparedSplit) -> Result<(f64, f64)> {
    const CHUNK: usize = 64;
    let classes = model.classes();
    let (mut loss, mut correct) = (0.0, 0usize);
    let n = split.channels * split.len;
    for start in (0..split.count()).step_by(CHUNK) {
        let end = (start + CHUNK).min(split.count());
        let pass = model.forward(&split.inputs[start * n..end * n], end - start, split.len, Mode::Infer)?;
        let labels = &split.labels[start..end];
        loss += model.loss(&pass, labels) * labels.len() as f64;
        for (b, &g) in labels.iter().enumerate() {
            if argmax(pass.probabilities_of(b, classes)) == g {
                correct += 1;
            }
        }
    }
    let count = split.count().max(1) as f64;
    Ok((loss / count, correct as f64 / count))
}

/// Mini-batch Adam training; keeps the weights of the epoch with the best
/// validation accuracy (ties broken by lower validation loss), or the last
/// epoch when there is no validation split.
pub fn train(dataset: &DatasetD, config: &TrainConfig) -> Result<(FcnModel, TrainingCurves)> {
    config.validate()?;
    if dataset.train == 0 {
        return Err(Error::Empty("dataset has no training instances".into()));
    }
    let (_, channels) = dataset.record_shape();
    let architecture = Architecture {
        input_channels: channels,
        filters: config.filters.clone(),
        kernels: config.kernels.clone(),
        classes: dataset.classes,
    };
    let mut model = FcnModel::new(architecture, config.seed)?;
    model.input_stats = dataset.stats.clone();
    let train_split = PreparedSplit::new(dataset.train_set(), &dataset.stats);
    let val_split = PreparedSplit::new(dataset.validation_set(), &dataset.stats);

    let mut adam = Adam::new(config.adam, &model.parameter_shapes());
    let mut curves = TrainingCurves::default();
    let mut best: Option<(f64, f64, FcnModel)> = None;
    let per = train_split.channels * train_split.len;
    let classes = model.classes();
    let mut order: Vec<usize> = (0..train_split.count()).collect();
    let mut batch_inputs = Vec::with_capacity(config.batch_size * per);
    let mut iteration = 0usize;
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, purpose::SHUFFLE, epoch as u32));
        let (mut epoch_loss, mut epoch_correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            iteration += 1;
            batch_inputs.clear();
            for &i in chunk {
                batch_inputs.extend_from_slice(train_split.sample(i));
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| train_split.labels[i]).collect();
            let pass = model.forward(&batch_inputs, chunk.len(), train_split.len, Mode::Train)?;
            let loss = model.loss(&pass, &labels);
            if !loss.is_finite() {
                return Err(Error::Instability {
                    step: iteration,
                    context: format!("training loss diverged in epoch {}", epoch + 1),
                });
            }
            let correct = labels
                .iter()
                .enumerate()
                .filter(|&(b, &g)| argmax(pass.probabilities_of(b, classes)) == g)
                .count();
            let grads = model.backward(&pass, &labels)?;
            model.update_running_stats(&pass);
            adam.update(model.parameters_mut(), &grads.tensors);
            curves.iteration_loss.push(loss);
            curves.iteration_accuracy.push(correct as f64 / chunk.len() as f64);
            epoch_loss += loss * chunk.len() as f64;
            epoch_correct += correct;
        }
        let n = train_split.count() as f64;
        curves.epoch_train_loss.push(epoch_loss / n);
        curves.epoch_train_accuracy.push(epoch_correct as f64 / n);
        if val_split.count() > 0 {
            let (vl, va) = evaluate_split(&model, &val_split)?;
            curves.epoch_validation_loss.push(vl);
            curves.epoch_validation_accuracy.push(va);
            let better = match &best {
                None => true,
                Some((ba, bl, _)) => va > *ba || (va == *ba && vl < *bl),
            };
            if better {
                best = Some((va, vl, model.clone()));
                curves.best_epoch = epoch;
            }
        } else {
            curves.best_epoch = epoch;
        }
    }
    let model = best.map_or(model, |(_, _, m)| m);
    Ok((model, curves))
}
