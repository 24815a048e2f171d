//! Central finite differences, used to check reverse-mode gradients.

/// Step used by the gradient checks.
pub const FD_STEP: f64 = 1e-3;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|)`.
///
/// Scaled by the largest gradient component rather than per element, so
/// coordinates whose true derivative is ~0 do not dominate. Returns 0
/// when both gradients vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}


/// Randomized finite-difference checks for every differentiable op.
///
/// Each case draws a random small shape, builds the op on an `f64` graph,
/// reduces the output with a fixed random projection and compares the
/// reverse-mode gradient of every input against [`central_difference`].
pub mod suite {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{central_difference, relative_error, FD_STEP};
    use crate::error::Result;
    use crate::graph::{Graph, Var};
    use crate::layers::{self, Activation, LstmWeights, Mode};
    use crate::tensor::Tensor;

    pub type Forward = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

    /// One randomized instance: inputs plus the function of them under test.
    pub struct Instance {
        pub inputs: Vec<Tensor<f64>>,
        pub forward: Forward,
    }

    pub struct OpCase {
        pub name: &'static str,
        pub sample: fn(&mut ChaCha8Rng) -> Instance,
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Values bounded away from zero, for kinked activations.
    fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| {
            let mag = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
    }

    /// Column entries at least 0.02 apart, so no perturbation of size
    /// `FD_STEP` can change which row holds the maximum.
    fn separated_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
        let mut data = vec![0.0; rows * cols];
        for c in 0..cols {
            let mut levels: Vec<usize> = (0..rows).collect();
            for i in (1..rows).rev() {
                levels.swap(i, rng.gen_range(0..=i));
            }
            for (r, level) in levels.into_iter().enumerate() {
                data[r * cols + c] = level as f64 * 0.05 + rng.gen_range(0.0..0.01) - 0.5;
            }
        }
        Tensor::matrix(rows, cols, data).unwrap()
    }

    fn dim(rng: &mut ChaCha8Rng, max: usize) -> usize {
        rng.gen_range(1..=max)
    }

    fn inst(inputs: Vec<Tensor<f64>>, forward: Forward) -> Instance {
        Instance { inputs, forward }
    }

    pub fn cases() -> Vec<OpCase> {
        vec![
            OpCase {
                name: "matmul",
                sample: |rng| {
                    let (m, k, n) = (dim(rng, 6), dim(rng, 6), dim(rng, 6));
                    inst(
                        vec![rand_tensor(rng, &[m, k]), rand_tensor(rng, &[k, n])],
                        Box::new(|g, v| g.matmul(v[0], v[1])),
                    )
                },
            },
            OpCase {
                name: "add/sub/mul",
                sample: |rng| {
                    let s = [dim(rng, 5), dim(rng, 5)];
                    inst(
                        vec![rand_tensor(rng, &s), rand_tensor(rng, &s), rand_tensor(rng, &s)],
                        Box::new(|g, v| {
                            let a = g.add(v[0], v[1])?;
                            let b = g.sub(a, v[2])?;
                            let c = g.mul(b, v[0])?;
                            Ok(g.scale(c, 1.5))
                        }),
                    )
                },
            },
            OpCase {
                name: "add_row",
                sample: |rng| {
                    let (m, n) = (dim(rng, 5), dim(rng, 5));
                    inst(
                        vec![rand_tensor(rng, &[m, n]), rand_tensor(rng, &[1, n])],
                        Box::new(|g, v| g.add_row(v[0], v[1])),
                    )
                },
            },
            OpCase {
                name: "sigmoid/tanh",
                sample: |rng| {
                    let s = [dim(rng, 4), dim(rng, 5)];
                    inst(
                        vec![rand_tensor(rng, &s).map_scaled(3.0)],
                        Box::new(|g, v| {
                            let a = g.sigmoid(v[0]);
                            let b = g.tanh(v[0]);
                            g.mul(a, b)
                        }),
                    )
                },
            },
            OpCase {
                name: "leaky_relu",
                sample: |rng| {
                    let s = [dim(rng, 4), dim(rng, 5)];
                    inst(
                        vec![away_from_zero(rng, &s)],
                        Box::new(|g, v| Ok(g.leaky_relu(v[0], layers::DEFAULT_LEAKY_SLOPE))),
                    )
                },
            },
            OpCase {
                name: "softmax",
                sample: |rng| {
                    let s = [dim(rng, 4), dim(rng, 5) + 1];
                    inst(
                        vec![rand_tensor(rng, &s).map_scaled(2.0)],
                        Box::new(|g, v| g.softmax(v[0])),
                    )
                },
            },
            OpCase {
                name: "concat/slice/gather",
                sample: |rng| {
                    let (m, a, b) = (dim(rng, 4), dim(rng, 4), dim(rng, 4));
                    inst(
                        vec![rand_tensor(rng, &[m, a]), rand_tensor(rng, &[m, b])],
                        Box::new(move |g, v| {
                            let cat = g.concat_cols(&[v[0], v[1]])?;
                            let stacked = g.concat_rows(&[cat, cat])?;
                            let rows = g.shape(stacked)[0];
                            let picked = g.gather_rows(stacked, &[rows - 1, 0, 0])?;
                            let cols = g.shape(picked)[1];
                            g.slice_cols(picked, cols / 3, cols)
                        }),
                    )
                },
            },
            OpCase {
                name: "conv1d",
                sample: |rng| {
                    let (l, c, f) = (dim(rng, 8), dim(rng, 5), dim(rng, 6));
                    let k = [1, 3, 5][rng.gen_range(0..3)];
                    inst(
                        vec![rand_tensor(rng, &[l, c]), rand_tensor(rng, &[k, c, f])],
                        Box::new(|g, v| g.conv1d(v[0], v[1])),
                    )
                },
            },
            OpCase {
                name: "max_pool_over_time",
                sample: |rng| {
                    let (l, f) = (dim(rng, 8), dim(rng, 6));
                    inst(
                        vec![separated_columns(rng, l, f)],
                        Box::new(|g, v| g.max_pool_rows(v[0])),
                    )
                },
            },
            OpCase {
                name: "batch_norm(train)",
                sample: |rng| {
                    let (b, d) = (dim(rng, 5) + 1, dim(rng, 5));
                    // normalization is ill-conditioned for near-constant
                    // columns; keep every column variance at least 0.1
                    let x = loop {
                        let x = rand_tensor(rng, &[b, d]);
                        let spread = (0..d).all(|c| {
                            let col: Vec<f64> = (0..b).map(|r| x.at(r, c)).collect();
                            let mean = col.iter().sum::<f64>() / b as f64;
                            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b as f64 >= 0.1
                        });
                        if spread {
                            break x;
                        }
                    };
                    inst(
                        vec![x, rand_tensor(rng, &[1, d]), rand_tensor(rng, &[1, d])],
                        Box::new(|g, v| Ok(g.batch_norm_train(v[0], v[1], v[2], 1e-5)?.0)),
                    )
                },
            },
            OpCase {
                name: "batch_norm(infer)",
                sample: |rng| {
                    let (b, d) = (dim(rng, 5), dim(rng, 5));
                    let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let var: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
                    inst(
                        vec![
                            rand_tensor(rng, &[b, d]),
                            rand_tensor(rng, &[1, d]),
                            rand_tensor(rng, &[1, d]),
                        ],
                        Box::new(move |g, v| g.batch_norm_infer(v[0], v[1], v[2], &mean, &var, 1e-5)),
                    )
                },
            },
            OpCase {
                name: "softmax_cross_entropy",
                sample: |rng| {
                    let (b, c) = (dim(rng, 5), dim(rng, 4) + 1);
                    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
                    let weights: Option<Vec<f64>> = rng
                        .gen_bool(0.5)
                        .then(|| (0..b).map(|_| rng.gen_range(0.1..2.0)).collect());
                    inst(
                        vec![rand_tensor(rng, &[b, c]).map_scaled(3.0)],
                        Box::new(move |g, v| g.softmax_cross_entropy(v[0], &labels, weights.as_deref())),
                    )
                },
            },
            OpCase {
                name: "dense",
                sample: |rng| {
                    let (b, i, o) = (dim(rng, 4), dim(rng, 5), dim(rng, 5) + 1);
                    let act = match rng.gen_range(0..3) {
                        0 => Activation::Linear,
                        1 => Activation::LeakyRelu(layers::DEFAULT_LEAKY_SLOPE),
                        _ => Activation::Softmax,
                    };
                    // keep leaky-relu pre-activations off the kink
                    let (x, w, bias) = loop {
                        let x = rand_tensor(rng, &[b, i]);
                        let w = rand_tensor(rng, &[i, o]);
                        let bias = rand_tensor(rng, &[1, o]);
                        let z = x.matmul(&w).unwrap();
                        let clear = z
                            .data()
                            .iter()
                            .enumerate()
                            .all(|(idx, &zv)| (zv + bias.data()[idx % o]).abs() > 0.05);
                        if clear || act != Activation::LeakyRelu(layers::DEFAULT_LEAKY_SLOPE) {
                            break (x, w, bias);
                        }
                    };
                    inst(
                        vec![x, w, bias],
                        Box::new(move |g, v| layers::dense(g, v[0], v[1], v[2], act)),
                    )
                },
            },
            OpCase {
                name: "lstm_step",
                sample: |rng| {
                    let (d, h) = (dim(rng, 5), dim(rng, 5));
                    inst(
                        vec![
                            rand_tensor(rng, &[1, d]),
                            rand_tensor(rng, &[1, h]),
                            rand_tensor(rng, &[1, h]),
                            rand_tensor(rng, &[d, 4 * h]),
                            rand_tensor(rng, &[h, 4 * h]),
                            rand_tensor(rng, &[1, 4 * h]),
                        ],
                        Box::new(|g, v| {
                            let w = LstmWeights::new(g, v[3], v[4], v[5])?;
                            let (h, c) = layers::lstm_step(g, v[0], (v[1], v[2]), &w)?;
                            g.concat_cols(&[h, c])
                        }),
                    )
                },
            },
            OpCase {
                name: "bilstm",
                sample: |rng| {
                    let (l, d, h) = (dim(rng, 4), dim(rng, 4), dim(rng, 3));
                    inst(
                        vec![
                            rand_tensor(rng, &[l, d]),
                            rand_tensor(rng, &[d, 4 * h]),
                            rand_tensor(rng, &[h, 4 * h]),
                            rand_tensor(rng, &[1, 4 * h]),
                            rand_tensor(rng, &[d, 4 * h]),
                            rand_tensor(rng, &[h, 4 * h]),
                            rand_tensor(rng, &[1, 4 * h]),
                        ],
                        Box::new(|g, v| {
                            let fw = LstmWeights::new(g, v[1], v[2], v[3])?;
                            let bw = LstmWeights::new(g, v[4], v[5], v[6])?;
                            layers::bilstm(g, v[0], &fw, &bw)
                        }),
                    )
                },
            },
            OpCase {
                name: "dropout(train)",
                sample: |rng| {
                    let s = [dim(rng, 4), dim(rng, 6)];
                    let mask_seed: u64 = rng.gen();
                    inst(
                        vec![rand_tensor(rng, &s)],
                        Box::new(move |g, v| {
                            // same seed on every evaluation, so the mask is fixed
                            let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
                            layers::dropout(g, v[0], 0.5, Mode::Train, &mut mask_rng)
                        }),
                    )
                },
            },
        ]
    }

    /// Relative error between reverse-mode and finite-difference gradients
    /// of a random projection of the instance output.
    pub fn check(instance: &Instance, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut probe = Graph::<f64>::new();
        let vars: Vec<Var> = instance.inputs.iter().map(|t| probe.constant(t.clone())).collect();
        let out = (instance.forward)(&mut probe, &vars)?;
        let projection: Vec<f64> = (0..probe.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = instance.inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = (instance.forward)(&mut g, &vars)?;
        let loss = g.dot_const(out, projection.clone())?;
        g.backward(loss)?;
        let analytic: Vec<f64> = vars
            .iter()
            .flat_map(|&v| {
                g.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; g.value(v).len()])
            })
            .collect();

        let flat: Vec<f64> = instance.inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
        let shapes: Vec<Vec<usize>> = instance.inputs.iter().map(|t| t.shape().to_vec()).collect();
        let eval = |x: &[f64]| -> f64 {
            let mut g = Graph::<f64>::new();
            let mut offset = 0;
            let vars: Vec<Var> = shapes
                .iter()
                .map(|s| {
                    let n: usize = s.iter().product();
                    let t = Tensor::new(s.clone(), x[offset..offset + n].to_vec()).unwrap();
                    offset += n;
                    g.constant(t)
                })
                .collect();
            let out = (instance.forward)(&mut g, &vars).expect("forward");
            g.value(out).data().iter().zip(&projection).map(|(a, b)| a * b).sum()
        };
        let numeric = central_difference(eval, &flat, FD_STEP);
        Ok(relative_error(&analytic, &numeric))
    }

    /// Worst relative error over `samples` random instances of `case`.
    pub fn worst_error(case: &OpCase, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let instance = (case.sample)(&mut rng);
            worst = worst.max(check(&instance, &mut rng)?);
        }
        Ok(worst)
    }

    trait Scaled {
        fn map_scaled(self, factor: f64) -> Self;
    }

    impl Scaled for Tensor<f64> {
        fn map_scaled(mut self, factor: f64) -> Self {
            self.data_mut().iter_mut().for_each(|v| *v *= factor);
            self
        }
    }
}
