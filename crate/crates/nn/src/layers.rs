//! Layers assembled from graph primitives: dense, LSTM, BiLSTM, batch
//! norm with running statistics, and inverted dropout.

use rand::Rng;

use crate::error::{shape_err, NnError, Result};
use crate::graph::{Graph, Var};
use crate::optim::check_dropout_rate;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the current batch in the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Linear,
    LeakyRelu(f64),
    Softmax,
}

/// `activation(x · w + b)`
pub fn dense<T: Scalar>(g: &mut Graph<T>, x: Var, w: Var, b: Var, activation: Activation) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    let z = g.add_row(xw, b)?;
    match activation {
        Activation::Linear => Ok(z),
        Activation::LeakyRelu(slope) => Ok(g.leaky_relu(z, T::from_f64_lossy(slope))),
        Activation::Softmax => g.softmax(z),
    }
}

/// Graph handles for one LSTM direction. Gate order in the packed
/// matrices is input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `D × 4H`
    pub w_x: Var,
    /// `H × 4H`
    pub w_h: Var,
    /// `1 × 4H`
    pub bias: Var,
    pub hidden: usize,
}

impl LstmWeights {
    pub fn new<T: Scalar>(g: &Graph<T>, w_x: Var, w_h: Var, bias: Var) -> Result<Self> {
        let (h, four_h) = g.value(w_h).expect_matrix("lstm")?;
        if four_h != 4 * h {
            return Err(shape_err("lstm", &[h, 4 * h], g.shape(w_h)));
        }
        let (_, xw) = g.value(w_x).expect_matrix("lstm")?;
        if xw != four_h {
            return Err(shape_err("lstm", g.shape(w_x), g.shape(w_h)));
        }
        if g.value(bias).len() != four_h {
            return Err(shape_err("lstm", g.shape(bias), &[1, four_h]));
        }
        Ok(Self {
            w_x,
            w_h,
            bias,
            hidden: h,
        })
    }

    pub fn input_dim<T: Scalar>(&self, g: &Graph<T>) -> usize {
        g.shape(self.w_x)[0]
    }
}

/// Validates an LSTM configuration before any tensors are allocated.
pub fn check_lstm_dims(input: usize, hidden: usize) -> Result<()> {
    if input == 0 || hidden == 0 {
        return Err(NnError::Config(format!(
            "LSTM dimensions must be positive, got input {input}, hidden {hidden}"
        )));
    }
    Ok(())
}

/// One LSTM step for a single `1×D` input row.
pub fn lstm_step<T: Scalar>(g: &mut Graph<T>, x: Var, state: (Var, Var), w: &LstmWeights) -> Result<(Var, Var)> {
    if !g.value(x).is_finite() {
        return Err(NnError::NonFinite("lstm input".into()));
    }
    let xw = g.matmul(x, w.w_x)?;
    cell(g, xw, state, w)
}

/// Gates from a precomputed `x · W_x` row.
fn cell<T: Scalar>(g: &mut Graph<T>, xw: Var, (h, c): (Var, Var), w: &LstmWeights) -> Result<(Var, Var)> {
    let hd = w.hidden;
    let hw = g.matmul(h, w.w_h)?;
    let z = g.add(xw, hw)?;
    let z = g.add_row(z, w.bias)?;
    let i = g.slice_cols(z, 0, hd)?;
    let i = g.sigmoid(i);
    let f = g.slice_cols(z, hd, 2 * hd)?;
    let f = g.sigmoid(f);
    let cand = g.slice_cols(z, 2 * hd, 3 * hd)?;
    let cand = g.tanh(cand);
    let o = g.slice_cols(z, 3 * hd, 4 * hd)?;
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs one direction over `seq[L×D]` from a zero state, returning `L×H`
/// with row `t` holding the hidden state after reading position `t`.
pub fn lstm_sequence<T: Scalar>(g: &mut Graph<T>, seq: Var, w: &LstmWeights, reverse: bool) -> Result<Var> {
    let (l, _) = g.value(seq).expect_matrix("lstm")?;
    if !g.value(seq).is_finite() {
        return Err(NnError::NonFinite("lstm input".into()));
    }
    let projected = g.matmul(seq, w.w_x)?;
    let mut h = g.constant(Tensor::zeros(&[1, w.hidden]));
    let mut c = g.constant(Tensor::zeros(&[1, w.hidden]));
    let mut outputs = vec![h; l];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..l).rev())
    } else {
        Box::new(0..l)
    };
    for t in order {
        let xw = g.gather_rows(projected, &[t])?;
        (h, c) = cell(g, xw, (h, c), w)?;
        outputs[t] = h;
    }
    g.concat_rows(&outputs)
}

/// Bidirectional LSTM: `[forward(t) ; backward(t)]` per position, `L×2H`.
pub fn bilstm<T: Scalar>(g: &mut Graph<T>, seq: Var, forward: &LstmWeights, backward: &LstmWeights) -> Result<Var> {
    if g.value(seq).expect_matrix("bilstm")?.0 == 0 {
        return Err(NnError::EmptySequence("bilstm"));
    }
    let fwd = lstm_sequence(g, seq, forward, false)?;
    let bwd = lstm_sequence(g, seq, backward, true)?;
    g.concat_cols(&[fwd, bwd])
}

/// Batch norm over rows of `x[B×D]`. Train mode normalizes with batch
/// statistics and folds them into the running averages; infer mode uses
/// the running averages.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    running_mean: &mut [T],
    running_var: &mut [T],
    mode: Mode,
) -> Result<Var> {
    let eps = T::from_f64_lossy(BN_EPSILON);
    match mode {
        Mode::Train => {
            let (y, moments) = g.batch_norm_train(x, gamma, beta, eps)?;
            if running_mean.len() != moments.mean.len() || running_var.len() != moments.var.len() {
                return Err(shape_err("batch_norm", g.shape(x), &[running_mean.len()]));
            }
            let m = T::from_f64_lossy(BN_MOMENTUM);
            for (r, b) in running_mean.iter_mut().zip(&moments.mean) {
                *r = (T::one() - m) * *r + m * *b;
            }
            for (r, b) in running_var.iter_mut().zip(&moments.var) {
                *r = (T::one() - m) * *r + m * *b;
            }
            Ok(y)
        }
        Mode::Infer => g.batch_norm_infer(x, gamma, beta, running_mean, running_var, eps),
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)`.
pub fn dropout<T: Scalar>(g: &mut Graph<T>, x: Var, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Var> {
    check_dropout_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x);
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask = (0..g.value(x).len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    g.mask_mul(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_lstm(g: &mut Graph<f64>, d: usize, h: usize) -> LstmWeights {
        let w_x = g.param(Tensor::zeros(&[d, 4 * h]));
        let w_h = g.param(Tensor::zeros(&[h, 4 * h]));
        let b = g.param(Tensor::zeros(&[1, 4 * h]));
        LstmWeights::new(g, w_x, w_h, b).unwrap()
    }

    #[test]
    fn zero_lstm_keeps_zero_state() {
        let mut g = Graph::<f64>::new();
        let w = zero_lstm(&mut g, 3, 4);
        let x = g.constant(Tensor::row(vec![1.0, -2.0, 5.0]).unwrap());
        let h = g.constant(Tensor::zeros(&[1, 4]));
        let c = g.constant(Tensor::zeros(&[1, 4]));
        let (h2, c2) = lstm_step(&mut g, x, (h, c), &w).unwrap();
        assert!(g.value(h2).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c2).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_rejects_non_finite_input_and_zero_state_size() {
        let mut g = Graph::<f64>::new();
        let w = zero_lstm(&mut g, 2, 2);
        let x = g.constant(Tensor::row(vec![f64::NAN, 0.0]).unwrap());
        let h = g.constant(Tensor::zeros(&[1, 2]));
        let c = g.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(lstm_step(&mut g, x, (h, c), &w), Err(NnError::NonFinite(_))));
        assert!(check_lstm_dims(10, 0).is_err());
        assert!(check_lstm_dims(10, 200).is_ok());
    }

    #[test]
    fn bilstm_shape_for_state_size_200() {
        let mut g = Graph::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mk = |g: &mut Graph<f32>| {
            let w_x = g.param(crate::params::uniform(&mut rng, &[5, 800], 0.1));
            let w_h = g.param(crate::params::uniform(&mut rng, &[200, 800], 0.1));
            let b = g.param(Tensor::zeros(&[1, 800]));
            LstmWeights::new(g, w_x, w_h, b).unwrap()
        };
        let fw = mk(&mut g);
        let bw = mk(&mut g);
        let seq = g.constant(Tensor::full(&[3, 5], 0.5));
        let out = bilstm(&mut g, seq, &fw, &bw).unwrap();
        assert_eq!(g.shape(out), &[3, 400]);
    }

    #[test]
    fn single_step_bilstm_is_concat_of_both_directions() {
        let mut g = Graph::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mk = |g: &mut Graph<f64>| {
            let w_x = g.param(crate::params::uniform(&mut rng, &[2, 12], 0.5));
            let w_h = g.param(crate::params::uniform(&mut rng, &[3, 12], 0.5));
            let b = g.param(crate::params::uniform(&mut rng, &[1, 12], 0.5));
            LstmWeights::new(g, w_x, w_h, b).unwrap()
        };
        let fw = mk(&mut g);
        let bw = mk(&mut g);
        let x = g.constant(Tensor::row(vec![0.3, -0.7]).unwrap());
        let out = bilstm(&mut g, x, &fw, &bw).unwrap();
        let zero = g.constant(Tensor::zeros(&[1, 3]));
        let (hf, _) = lstm_step(&mut g, x, (zero, zero), &fw).unwrap();
        let (hb, _) = lstm_step(&mut g, x, (zero, zero), &bw).unwrap();
        let mut expected = g.value(hf).data().to_vec();
        expected.extend_from_slice(g.value(hb).data());
        assert_eq!(g.value(out).data(), expected.as_slice());
    }

    #[test]
    fn leaky_relu_and_softmax_definitions() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::row(vec![-1.0, 2.0]).unwrap());
        let y = g.leaky_relu(x, DEFAULT_LEAKY_SLOPE);
        assert_eq!(g.value(y).data(), &[-0.01, 2.0]);
        let z = g.constant(Tensor::row(vec![0.0, 0.0]).unwrap());
        let s = g.softmax(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn dense_rejects_mismatched_weights() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let w = g.constant(Tensor::zeros(&[4, 2]));
        let b = g.constant(Tensor::zeros(&[1, 2]));
        assert!(matches!(
            dense(&mut g, x, w, b, Activation::Linear),
            Err(NnError::Shape { .. })
        ));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::full(&[4, 4], 3.0));
        let y = dropout(&mut g, x, 0.5, Mode::Infer, &mut rng).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let y = dropout(&mut g, x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(g.value(y), g.value(x));
        assert!(dropout(&mut g, x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::full(&[1, 100_000], 1.0));
        let y = dropout(&mut g, x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean: f64 = g.value(y).data().iter().map(|&v| v as f64).sum::<f64>() / 100_000.0;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    }

    #[test]
    fn batch_norm_updates_running_stats_in_train_mode_only() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
        let gamma = g.constant(Tensor::row(vec![1.0]).unwrap());
        let beta = g.constant(Tensor::row(vec![0.0]).unwrap());
        let (mut mean, mut var) = (vec![0.0], vec![1.0]);
        batch_norm(&mut g, x, gamma, beta, &mut mean, &mut var, Mode::Infer).unwrap();
        assert_eq!((mean[0], var[0]), (0.0, 1.0));
        batch_norm(&mut g, x, gamma, beta, &mut mean, &mut var, Mode::Train).unwrap();
        assert!((mean[0] - 0.2).abs() < 1e-12);
        assert!((var[0] - 1.0).abs() < 1e-12);
    }
}
