//! Central finite-difference oracle shared by the gradient and acceptance
//! tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regdistill::distill::{distill_loss_and_grad, hard_loss_and_grad, LossTerms};
use regdistill::engine::{Architecture, LayerSpec, SequentialModel, Tensor};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that near-zero gradients are compared absolutely.
/// Central differences at `H` carry roughly 1e-10 of cancellation noise on
/// an O(1) loss, so components below this are checked to 1e-9 absolute.
pub const REL_FLOOR: f64 = 1e-5;
/// Minimum distance of any ReLU input from 0 and any pooling window's gap
/// between its top two entries; closer instances are resampled.
pub const KINK_MARGIN: f64 = 1e-3;
const ENTRIES_PER_TENSOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Hard,
    Distill,
}

pub fn architectures() -> Vec<(&'static str, Architecture)> {
    vec![
        (
            "dense",
            Architecture {
                input_shape: vec![5],
                layers: vec![LayerSpec::Dense { inputs: 5, outputs: 3 }],
            },
        ),
        (
            "dense-relu-dense",
            Architecture {
                input_shape: vec![4],
                layers: vec![
                    LayerSpec::Dense { inputs: 4, outputs: 6 },
                    LayerSpec::Relu,
                    LayerSpec::Dense { inputs: 6, outputs: 3 },
                ],
            },
        ),
        (
            "conv-relu-pool-flatten-dense",
            Architecture {
                input_shape: vec![2, 6, 6],
                layers: vec![
                    LayerSpec::Conv2d {
                        in_channels: 2,
                        out_channels: 3,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                    },
                    LayerSpec::Relu,
                    LayerSpec::MaxPool2x2,
                    LayerSpec::Flatten,
                    LayerSpec::Dense { inputs: 27, outputs: 3 },
                ],
            },
        ),
        (
            "strided-conv-flatten-dense",
            Architecture {
                input_shape: vec![1, 7, 7],
                layers: vec![
                    LayerSpec::Conv2d {
                        in_channels: 1,
                        out_channels: 2,
                        kernel: 3,
                        stride: 2,
                        padding: 0,
                    },
                    LayerSpec::Flatten,
                    LayerSpec::Dense { inputs: 18, outputs: 3 },
                ],
            },
        ),
    ]
}

pub struct Instance {
    pub model: SequentialModel,
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub teacher: Tensor,
    pub weights: Vec<f64>,
    pub contributing: Vec<bool>,
    pub terms: LossTerms,
}

impl Instance {
    pub fn loss_and_grad(&self, kind: LossKind, logits: &Tensor) -> (f64, Tensor) {
        match kind {
            LossKind::Hard => hard_loss_and_grad(logits, &self.labels, &self.contributing),
            LossKind::Distill => distill_loss_and_grad(
                &self.teacher,
                logits,
                &self.labels,
                &self.terms,
                &self.weights,
                &self.contributing,
            ),
        }
        .unwrap()
    }

    fn loss_at(&self, model: &SequentialModel, kind: LossKind) -> f64 {
        let logits = model.forward(&self.x).unwrap();
        self.loss_and_grad(kind, &logits).0
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// True when every ReLU input and every pooling window is far from a kink.
fn smooth(model: &SequentialModel, x: &Tensor) -> bool {
    let (_, trace) = model.forward_trace(x).unwrap();
    for (layer, input) in model.layers().iter().zip(trace.layer_inputs()) {
        match layer {
            LayerSpec::Relu => {
                if input.data().iter().any(|v| v.abs() < KINK_MARGIN) {
                    return false;
                }
            }
            LayerSpec::MaxPool2x2 => {
                let s = input.shape();
                let (h, w) = (s[2], s[3]);
                for plane in input.data().chunks(h * w) {
                    for i in (0..h - 1).step_by(2) {
                        for j in (0..w - 1).step_by(2) {
                            let mut win = [
                                plane[i * w + j],
                                plane[i * w + j + 1],
                                plane[(i + 1) * w + j],
                                plane[(i + 1) * w + j + 1],
                            ];
                            win.sort_by(|a, b| b.total_cmp(a));
                            if win[0] - win[1] < KINK_MARGIN {
                                return false;
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    true
}

/// Draws a random instance for `arch`, resampling until it is kink-free.
pub fn instance(arch: &Architecture, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 3;
    let classes = 3;
    loop {
        let init: u64 = rng.gen();
        let mut model = SequentialModel::new(arch.clone(), init).unwrap();
        for p in model.params_mut() {
            let scaled = uniform(&mut rng, p.shape(), 0.8);
            *p = scaled;
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&arch.input_shape);
        let x = uniform(&mut rng, &shape, 1.0);
        if !smooth(&model, &x) {
            continue;
        }
        let labels = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let teacher = uniform(&mut rng, &[batch, classes], 3.0);
        let weights = (0..batch).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let mut contributing: Vec<bool> = (0..batch).map(|_| rng.gen_bool(0.7)).collect();
        if !contributing.iter().any(|&c| c) {
            contributing[0] = true;
        }
        let terms = LossTerms {
            tau: rng.gen_range(0.5..25.0),
            lambda: rng.gen_range(0.0..1.0),
            tau_squared: rng.gen_bool(0.3),
        };
        return Instance {
            model,
            x,
            labels,
            teacher,
            weights,
            contributing,
            terms,
        };
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Parameter gradients from the sharded backward pass.
pub fn analytic_gradients(inst: &Instance, kind: LossKind) -> Vec<Tensor> {
    let (_, _, grads) = inst
        .model
        .sharded_gradients(&inst.x, 2, |logits| {
            let (loss, g) = inst.loss_and_grad(kind, logits);
            Ok((g, inst.contributing.clone(), loss))
        })
        .unwrap();
    grads
}

/// Largest relative error between `grads` and central differences of the
/// `kind` loss over a random subset of every parameter tensor.
pub fn max_error_against(inst: &Instance, kind: LossKind, grads: &[Tensor], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    let mut probe = inst.model.clone();
    for (p, grad) in grads.iter().enumerate() {
        let n = grad.len();
        let picks: Vec<usize> = if n <= ENTRIES_PER_TENSOR {
            (0..n).collect()
        } else {
            (0..ENTRIES_PER_TENSOR).map(|_| rng.gen_range(0..n)).collect()
        };
        for k in picks {
            let orig = probe.params()[p].data()[k];
            probe.params_mut()[p].data_mut()[k] = orig + H;
            let up = inst.loss_at(&probe, kind);
            probe.params_mut()[p].data_mut()[k] = orig - H;
            let down = inst.loss_at(&probe, kind);
            probe.params_mut()[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max(relative_error(grad.data()[k], numeric));
        }
    }
    worst
}

pub fn max_gradient_error(inst: &Instance, kind: LossKind, seed: u64) -> f64 {
    max_error_against(inst, kind, &analytic_gradients(inst, kind), seed)
}

/// Runs the oracle over `seeds` seeds for every architecture and both loss
/// forms. Returns failures as `(arch, loss, seed, error)`.
pub fn gradient_sweep(seeds: u64) -> Vec<(String, LossKind, u64, f64)> {
    let mut failures = Vec::new();
    for (name, arch) in architectures() {
        for seed in 0..seeds {
            let inst = instance(&arch, seed);
            for kind in [LossKind::Hard, LossKind::Distill] {
                let err = max_gradient_error(&inst, kind, seed);
                if err.is_nan() || err >= TOLERANCE {
                    failures.push((name.to_string(), kind, seed, err));
                }
            }
        }
    }
    failures
}
