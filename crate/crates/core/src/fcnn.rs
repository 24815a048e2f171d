//! Feed-forward classifier shared by the document and relation stages:
//! each hidden layer is affine, batch norm, leaky ReLU and dropout; the
//! head is affine followed by softmax.

use ademiner_nn::layers::{self, Activation, Mode, BN_EPSILON};
use ademiner_nn::{softmax_in_place, xavier_uniform, Adam, Graph, ParamSet, Tensor, TrainConfig, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::{argmax, shuffled_batches, EpochLog, TrainReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcnnLayout {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub leaky_slope: f64,
}

impl FcnnLayout {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 || self.hidden.iter().any(|h| *h == 0) {
            return Err(Error::Config(format!("invalid network layout {self:?}")));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w
    }

    /// Expected tensor names and shapes.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let widths = self.widths();
        let mut out = Vec::new();
        for i in 0..self.hidden.len() {
            let (a, b) = (widths[i], widths[i + 1]);
            out.push((format!("layer{i}.w"), vec![a, b]));
            out.push((format!("layer{i}.b"), vec![1, b]));
            out.push((format!("layer{i}.gamma"), vec![1, b]));
            out.push((format!("layer{i}.beta"), vec![1, b]));
            out.push((format!("layer{i}.running_mean"), vec![b]));
            out.push((format!("layer{i}.running_var"), vec![b]));
        }
        let last = *widths.last().unwrap();
        out.push(("out.w".into(), vec![last, self.classes]));
        out.push(("out.b".into(), vec![1, self.classes]));
        out
    }
}

/// Labeled feature rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn rows(&self, idx: &[usize], dim: usize) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            data.extend_from_slice(&self.features[i]);
        }
        Tensor::new(vec![idx.len(), dim], data).expect("non-empty batch")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fcnn {
    layout: FcnnLayout,
    params: ParamSet,
}

/// Dev-set score used for checkpoint selection; higher is better.
pub type DevScore<'a> = &'a dyn Fn(&Fcnn, &Dataset) -> Result<f64>;

impl Fcnn {
    pub fn new(layout: FcnnLayout, seed: u64) -> Result<Self> {
        layout.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in layout.tensor_shapes() {
            let t = if name.ends_with(".w") {
                xavier_uniform(&mut rng, &shape, shape[0], shape[1])
            } else if name.ends_with("gamma") || name.ends_with("running_var") {
                Tensor::full(&shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            if name.contains("running_") {
                params.insert_buffer(name, t);
            } else {
                params.insert(name, t);
            }
        }
        Ok(Self { layout, params })
    }

    /// Restores a network from stored tensors, checking every shape.
    pub fn from_params(layout: FcnnLayout, mut params: ParamSet) -> Result<Self> {
        layout.validate()?;
        let shapes = layout.tensor_shapes();
        params.expect_shapes(shapes.iter().map(|(n, s)| (n.as_str(), s.clone())))?;
        if params.len() != shapes.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        for (name, _) in &shapes {
            params.set_trainable(name, !name.contains("running_"));
        }
        Ok(Self { layout, params })
    }

    pub fn layout(&self) -> &FcnnLayout {
        &self.layout
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_train(
        &mut self,
        g: &mut Graph,
        bound: &ademiner_nn::Bound,
        x: Var,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let slope = self.layout.leaky_slope;
        let mut h = x;
        for i in 0..self.layout.hidden.len() {
            let z = layers::dense(
                g,
                h,
                bound.get(&format!("layer{i}.w")),
                bound.get(&format!("layer{i}.b")),
                Activation::Linear,
            )?;
            let mut mean = self.params.tensor(&format!("layer{i}.running_mean")).data().to_vec();
            let mut var = self.params.tensor(&format!("layer{i}.running_var")).data().to_vec();
            let n = layers::batch_norm(
                g,
                z,
                bound.get(&format!("layer{i}.gamma")),
                bound.get(&format!("layer{i}.beta")),
                &mut mean,
                &mut var,
                Mode::Train,
            )?;
            self.params
                .get_mut(&format!("layer{i}.running_mean"))
                .unwrap()
                .data_mut()
                .copy_from_slice(&mean);
            self.params
                .get_mut(&format!("layer{i}.running_var"))
                .unwrap()
                .data_mut()
                .copy_from_slice(&var);
            let a = g.leaky_relu(n, slope as f32);
            h = layers::dropout(g, a, dropout, Mode::Train, rng)?;
        }
        Ok(layers::dense(
            g,
            h,
            bound.get("out.w"),
            bound.get("out.b"),
            Activation::Linear,
        )?)
    }

    /// Inference logits for `x[B × input_dim]` using running statistics.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.layout.input_dim {
            return Err(Error::Dimension {
                expected: self.layout.input_dim,
                actual: x.shape().last().copied().unwrap_or(0),
                context: "network input".into(),
            });
        }
        let slope = self.layout.leaky_slope as f32;
        let eps = BN_EPSILON as f32;
        let mut h = x.clone();
        for i in 0..self.layout.hidden.len() {
            let p = |s: &str| self.params.tensor(&format!("layer{i}.{s}")).data();
            let mut z = h.matmul(self.params.tensor(&format!("layer{i}.w")))?;
            let cols = z.cols();
            let (b, gamma, beta, mean, var) = (p("b"), p("gamma"), p("beta"), p("running_mean"), p("running_var"));
            for row in z.data_mut().chunks_mut(cols) {
                for j in 0..cols {
                    let v = row[j] + b[j];
                    let n = (v - mean[j]) / (var[j] + eps).sqrt() * gamma[j] + beta[j];
                    row[j] = if n >= 0.0 { n } else { slope * n };
                }
            }
            h = z;
        }
        let mut out = h.matmul(self.params.tensor("out.w"))?;
        let b = self.params.tensor("out.b").data().to_vec();
        let cols = out.cols();
        for row in out.data_mut().chunks_mut(cols) {
            for (v, bias) in row.iter_mut().zip(&b) {
                *v += bias;
            }
        }
        Ok(out)
    }

    pub fn predict_proba(&self, features: &[f32]) -> Result<Vec<f32>> {
        let x = Tensor::new(vec![1, features.len()], features.to_vec())?;
        let mut p = self.logits(&x)?.into_data();
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Class probabilities per row.
    pub fn predict_proba_batch(&self, features: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.layout.input_dim;
        let data = Dataset {
            features: features.to_vec(),
            labels: vec![0; features.len()],
        };
        for f in features {
            if f.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: f.len(),
                    context: "network input".into(),
                });
            }
        }
        let idx: Vec<usize> = (0..features.len()).collect();
        let logits = self.logits(&data.rows(&idx, dim))?;
        Ok(logits
            .data()
            .chunks(self.layout.classes)
            .map(|row| {
                let mut p = row.to_vec();
                softmax_in_place(&mut p);
                p
            })
            .collect())
    }

    pub fn predict(&self, features: &[Vec<f32>]) -> Result<Vec<usize>> {
        Ok(self.predict_proba_batch(features)?.iter().map(|p| argmax(p)).collect())
    }

    /// Mean cross-entropy on `data` in inference mode.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        let probs = self.predict_proba_batch(&data.features)?;
        let total: f64 = probs
            .iter()
            .zip(&data.labels)
            .map(|(p, &l)| -f64::from(p[l].max(f32::MIN_POSITIVE)).ln())
            .sum();
        Ok(total / data.len().max(1) as f64)
    }

    /// Adam training with the configured decay schedule. With a dev set the
    /// parameters from the epoch with the best `dev_score` are kept (the
    /// earliest on ties); otherwise the final parameters are kept.
    pub fn fit(
        &mut self,
        train: &Dataset,
        dev: Option<&Dataset>,
        config: &TrainConfig,
        class_weights: Option<&[f32]>,
        dev_score: DevScore<'_>,
    ) -> Result<TrainReport> {
        config.validate()?;
        if train.len() < 2 {
            return Err(Error::Training("need at least two training examples".into()));
        }
        let dim = self.layout.input_dim;
        if let Some(bad) = train.features.iter().find(|f| f.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                actual: bad.len(),
                context: "training features".into(),
            });
        }
        if let Some(w) = class_weights {
            if w.len() != self.layout.classes {
                return Err(Error::Config("one class weight per class required".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut adam = Adam::new();
        let mut report = TrainReport::default();
        let mut best: Option<(f64, ParamSet)> = None;

        for epoch in 0..config.epochs {
            let mut loss_sum = 0.0;
            let mut n_batches = 0;
            for batch in shuffled_batches(train.len(), config.batch_size, 2, &mut rng) {
                let mut g = Graph::new();
                let bound = self.params.bind(&mut g);
                let x = g.constant(train.rows(&batch, dim));
                let logits = self.forward_train(&mut g, &bound, x, config.dropout_rate, &mut rng)?;
                let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
                let weights: Option<Vec<f32>> = class_weights.map(|w| labels.iter().map(|&l| w[l]).collect());
                let loss = g.softmax_cross_entropy(logits, &labels, weights.as_deref())?;
                loss_sum += f64::from(g.value(loss).data()[0]);
                n_batches += 1;
                g.backward(loss)?;
                let grads = self.params.grads(&g, &bound);
                adam.step(&mut self.params, &grads, config, epoch)?;
            }
            let mut log = EpochLog {
                epoch,
                learning_rate: config.effective_lr(epoch),
                train_loss: loss_sum / n_batches as f64,
                dev_loss: None,
                dev_score: None,
            };
            if let Some(dev) = dev.filter(|d| !d.is_empty()) {
                let score = dev_score(self, dev)?;
                log.dev_loss = Some(self.loss(dev)?);
                log.dev_score = Some(score);
                if best.as_ref().map_or(true, |(s, _)| score > *s) {
                    best = Some((score, self.params.clone()));
                    report.selected_epoch = epoch;
                }
            } else {
                report.selected_epoch = epoch;
            }
            log::debug!(
                "epoch {epoch}: lr {:.6} train loss {:.5} dev loss {:?} dev score {:?}",
                log.learning_rate,
                log.train_loss,
                log.dev_loss,
                log.dev_score
            );
            report.epochs.push(log);
        }
        if let Some((_, params)) = best {
            self.params = params;
        }
        Ok(report)
    }
}
