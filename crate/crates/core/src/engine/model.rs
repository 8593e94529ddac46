use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::check_params;
use super::{EngineError, LayerSpec, Tensor};

/// Activations recorded by a forward pass, consumed by [`SequentialModel::backward_trace`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[i]` is the input seen by layer `i`.
    inputs: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn layer_inputs(&self) -> &[Tensor] {
        &self.inputs
    }
}

/// Architecture description: per-sample input shape plus the layer stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Validates layer compatibility and returns the per-layer output shapes.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, EngineError> {
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer
                .output_shape(&cur)
                .ok_or_else(|| EngineError::Dimension {
                    layer: i,
                    name: layer.to_string(),
                    expected: format!("input compatible with {layer}"),
                    found: cur.clone(),
                })?;
            out.push(cur.clone());
        }
        match out.last() {
            Some(last) if last.len() == 1 => Ok(out),
            Some(last) => Err(EngineError::NotLogits(last.clone())),
            None => Err(EngineError::EmptyModel),
        }
    }

    pub fn output_width(&self) -> Result<usize, EngineError> {
        Ok(self.shapes()?.last().expect("non-empty")[0])
    }
}

#[derive(Debug, Clone)]
pub struct SequentialModel {
    arch: Architecture,
    classes: usize,
    /// Weight and bias tensors of every parameterised layer, in layer order.
    params: Vec<Tensor>,
    /// `param_offsets[i]..param_offsets[i+1]` indexes the tensors of layer `i`.
    param_offsets: Vec<usize>,
    cache: Option<ForwardTrace>,
}

impl SequentialModel {
    /// Builds a model with uniform fan-in initialisation in `±sqrt(1/fan_in)`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, EngineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for layer in &arch.layers {
            let bound = match layer.fan_in() {
                0 => 0.0,
                f => (1.0 / f as f64).sqrt(),
            };
            for shape in layer.param_shapes() {
                let mut t = Tensor::zeros(&shape);
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-bound..=bound));
                params.push(t);
            }
        }
        Self::with_params(arch, params)
    }

    pub fn with_params(arch: Architecture, params: Vec<Tensor>) -> Result<Self, EngineError> {
        let classes = arch.output_width()?;
        let mut offsets = vec![0];
        for layer in &arch.layers {
            offsets.push(offsets.last().unwrap() + layer.param_shapes().len());
        }
        if *offsets.last().unwrap() != params.len() {
            return Err(EngineError::ParamCount {
                expected: *offsets.last().unwrap(),
                found: params.len(),
            });
        }
        for (i, layer) in arch.layers.iter().enumerate() {
            check_params(layer, &params[offsets[i]..offsets[i + 1]])?;
        }
        Ok(Self {
            arch,
            classes,
            params,
            param_offsets: offsets,
            cache: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.arch.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.arch.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    fn check_input(&self, batch: &Tensor) -> Result<(), EngineError> {
        if batch.shape().len() < 2 || batch.shape()[1..] != self.arch.input_shape[..] {
            return Err(EngineError::Dimension {
                layer: 0,
                name: self
                    .arch
                    .layers
                    .first()
                    .map_or("input".into(), ToString::to_string),
                expected: format!("[B, {:?}]", self.arch.input_shape),
                found: batch.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Pre-softmax logits of shape `[B, classes]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, EngineError> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (i, layer) in self.arch.layers.iter().enumerate() {
            x = layer.forward(self.layer_params(i), &x);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, batch: &Tensor) -> Result<(Tensor, ForwardTrace), EngineError> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.arch.layers.len());
        let mut x = batch.clone();
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let y = layer.forward(self.layer_params(i), &x);
            inputs.push(x);
            x = y;
        }
        Ok((x, ForwardTrace { inputs }))
    }

    /// Gradients of the loss with respect to every parameter tensor, given
    /// `∂L/∂logits` for the traced batch. Rows flagged inactive must have a
    /// zero logit gradient and are skipped.
    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        grad_logits: &Tensor,
        active: Option<&[bool]>,
    ) -> Result<Vec<Tensor>, EngineError> {
        let batch = trace.inputs.first().map_or(0, Tensor::rows);
        if grad_logits.shape() != [batch, self.classes] {
            return Err(EngineError::Dimension {
                layer: self.arch.layers.len(),
                name: "loss gradient".into(),
                expected: format!("[{batch}, {}]", self.classes),
                found: grad_logits.shape().to_vec(),
            });
        }
        let all = vec![true; batch];
        let active = active.unwrap_or(&all);
        let mut grads = self.zero_grads();
        let mut g = grad_logits.clone();
        for i in (0..self.arch.layers.len()).rev() {
            let range = self.param_offsets[i]..self.param_offsets[i + 1];
            let need_input = i > 0;
            let gin = self.arch.layers[i].backward(
                &self.params[range.clone()],
                &trace.inputs[i],
                &g,
                active,
                &mut grads[range],
                need_input,
            );
            match gin {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(grads)
    }

    /// Forward pass that keeps the activations for a later [`Self::backward`].
    pub fn forward_train(&mut self, batch: &Tensor) -> Result<Tensor, EngineError> {
        let (logits, trace) = self.forward_trace(batch)?;
        self.cache = Some(trace);
        Ok(logits)
    }

    /// Consumes the activations cached by the last [`Self::forward_train`].
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Vec<Tensor>, EngineError> {
        let trace = self.cache.take().ok_or(EngineError::BackwardWithoutForward)?;
        self.backward_trace(&trace, grad_logits, None)
    }

    /// Sharded forward/backward over a batch.
    ///
    /// The batch is cut into shards of `shard_size` rows; shards run in
    /// parallel and their gradients are summed in shard order, so the result
    /// does not depend on the number of worker threads. `loss_grad` maps the
    /// full batch logits to `∂L/∂logits` and a per-row activity mask.
    pub fn sharded_gradients<F, T>(
        &self,
        batch: &Tensor,
        shard_size: usize,
        loss_grad: F,
    ) -> Result<(Tensor, T, Vec<Tensor>), EngineError>
    where
        F: FnOnce(&Tensor) -> Result<(Tensor, Vec<bool>, T), EngineError>,
    {
        self.check_input(batch)?;
        let shards = shard_ranges(batch.rows(), shard_size);
        let traced: Vec<(Tensor, ForwardTrace)> = shards
            .par_iter()
            .map(|r| {
                let idx: Vec<usize> = r.clone().collect();
                self.forward_trace(&batch.select_rows(&idx)?)
            })
            .collect::<Result<_, _>>()?;
        let logits =
            Tensor::concat_rows(&traced.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>())?;
        let (grad_logits, active, extra) = loss_grad(&logits)?;
        let per_shard: Vec<Option<Vec<Tensor>>> = shards
            .par_iter()
            .zip(traced.par_iter())
            .map(|(r, (_, trace))| {
                let act = &active[r.clone()];
                if !act.iter().any(|&a| a) {
                    return Ok(None);
                }
                let idx: Vec<usize> = r.clone().collect();
                let g = grad_logits.select_rows(&idx)?;
                self.backward_trace(trace, &g, Some(act)).map(Some)
            })
            .collect::<Result<_, EngineError>>()?;
        let mut total = self.zero_grads();
        for shard in per_shard.into_iter().flatten() {
            for (acc, g) in total.iter_mut().zip(shard) {
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += v;
                }
            }
        }
        Ok((logits, extra, total))
    }

    fn layer_params(&self, i: usize) -> &[Tensor] {
        &self.params[self.param_offsets[i]..self.param_offsets[i + 1]]
    }
}

fn shard_ranges(rows: usize, shard: usize) -> Vec<std::ops::Range<usize>> {
    let shard = shard.max(1);
    (0..rows)
        .step_by(shard)
        .map(|s| s..(s + shard).min(rows))
        .collect()
}
