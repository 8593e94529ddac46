//! The fixed set of differentiable layers.
//!
//! Every kernel processes samples independently and in a fixed order, so the
//! output for one sample never depends on which other samples share its batch.

use serde::{Deserialize, Serialize};

use super::{EngineError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[serde(rename = "maxpool2x2")]
    MaxPool2x2,
    Relu,
    Flatten,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2x2 => "maxpool2x2",
            LayerSpec::Relu => "relu",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Per-sample output shape for a per-sample input shape, or `None` when
    /// the input is incompatible.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                (input == [inputs] && outputs > 0).then(|| vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let &[c, h, w] = input else { return None };
                if c != in_channels || kernel == 0 || stride == 0 || out_channels == 0 {
                    return None;
                }
                let ho = (h + 2 * padding).checked_sub(kernel)? / stride + 1;
                let wo = (w + 2 * padding).checked_sub(kernel)? / stride + 1;
                Some(vec![out_channels, ho, wo])
            }
            LayerSpec::MaxPool2x2 => {
                let &[c, h, w] = input else { return None };
                (h >= 2 && w >= 2).then(|| vec![c, h / 2, w / 2])
            }
            LayerSpec::Relu => Some(input.to_vec()),
            LayerSpec::Flatten => Some(vec![input.iter().product()]),
        }
    }

    /// Shapes of the weight and bias tensors, empty for parameter-free layers.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            _ => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }

    pub(crate) fn forward(&self, params: &[Tensor], x: &Tensor) -> Tensor {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                dense_forward(&params[0], &params[1], x, inputs, outputs)
            }
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => conv_forward(&params[0], &params[1], x, kernel, stride, padding),
            LayerSpec::MaxPool2x2 => pool_forward(x),
            LayerSpec::Relu => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| if *v < 0.0 { *v = 0.0 });
                y
            }
            LayerSpec::Flatten => {
                let b = x.rows();
                let w = x.row_len();
                x.clone().reshape(vec![b, w]).expect("flatten keeps length")
            }
        }
    }

    /// Backpropagates `grad_out` through the layer.
    ///
    /// Parameter gradients are accumulated into `param_grads`. Rows with
    /// `active[i] == false` are skipped; they must carry an all-zero
    /// `grad_out`, so skipping them changes no bit of the result. Returns the
    /// gradient with respect to the layer input when `need_input_grad`.
    pub(crate) fn backward(
        &self,
        params: &[Tensor],
        x: &Tensor,
        grad_out: &Tensor,
        active: &[bool],
        param_grads: &mut [Tensor],
        need_input_grad: bool,
    ) -> Option<Tensor> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => dense_backward(
                &params[0],
                x,
                grad_out,
                active,
                param_grads,
                inputs,
                outputs,
                need_input_grad,
            ),
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => conv_backward(
                &params[0],
                x,
                grad_out,
                active,
                param_grads,
                kernel,
                stride,
                padding,
                need_input_grad,
            ),
            LayerSpec::MaxPool2x2 => need_input_grad.then(|| pool_backward(x, grad_out, active)),
            LayerSpec::Relu => need_input_grad.then(|| {
                let mut g = grad_out.clone();
                for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                g
            }),
            LayerSpec::Flatten => need_input_grad.then(|| {
                grad_out
                    .clone()
                    .reshape(x.shape().to_vec())
                    .expect("flatten keeps length")
            }),
        }
    }
}

impl std::fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense({inputs}->{outputs})"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv2d({in_channels}->{out_channels}, k={kernel}, s={stride}, p={padding})"
            ),
            other => f.write_str(other.name()),
        }
    }
}

pub(crate) fn check_params(spec: &LayerSpec, params: &[Tensor]) -> Result<(), EngineError> {
    let shapes = spec.param_shapes();
    if shapes.len() != params.len()
        || shapes.iter().zip(params).any(|(s, p)| s.as_slice() != p.shape())
    {
        return Err(EngineError::ParamShape {
            layer: spec.to_string(),
        });
    }
    Ok(())
}

fn dense_forward(w: &Tensor, b: &Tensor, x: &Tensor, inputs: usize, outputs: usize) -> Tensor {
    let batch = x.rows();
    let mut y = Tensor::zeros(&[batch, outputs]);
    let wd = w.data();
    let bd = b.data();
    for s in 0..batch {
        let xs = x.row(s);
        let ys = y.row_mut(s);
        for o in 0..outputs {
            let wrow = &wd[o * inputs..(o + 1) * inputs];
            let mut acc = bd[o];
            for (wv, xv) in wrow.iter().zip(xs) {
                acc += wv * xv;
            }
            ys[o] = acc;
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    w: &Tensor,
    x: &Tensor,
    g: &Tensor,
    active: &[bool],
    grads: &mut [Tensor],
    inputs: usize,
    outputs: usize,
    need_input_grad: bool,
) -> Option<Tensor> {
    let batch = x.rows();
    let (gw, gb) = grads.split_at_mut(1);
    let gw = gw[0].data_mut();
    let gb = gb[0].data_mut();
    for s in (0..batch).filter(|&s| active[s]) {
        let xs = x.row(s);
        let gs = g.row(s);
        for o in 0..outputs {
            let go = gs[o];
            gb[o] += go;
            let row = &mut gw[o * inputs..(o + 1) * inputs];
            for (gwv, xv) in row.iter_mut().zip(xs) {
                *gwv += go * xv;
            }
        }
    }
    if !need_input_grad {
        return None;
    }
    let wd = w.data();
    let mut gx = Tensor::zeros(x.shape());
    for s in (0..batch).filter(|&s| active[s]) {
        let gs = g.row(s);
        let gxs = gx.row_mut(s);
        for (o, go) in gs.iter().enumerate() {
            let wrow = &wd[o * inputs..(o + 1) * inputs];
            for (gxv, wv) in gxs.iter_mut().zip(wrow) {
                *gxv += go * wv;
            }
        }
    }
    Some(gx)
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn new(weight: &Tensor, x: &Tensor, k: usize, stride: usize, pad: usize) -> Self {
        let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
        let o = weight.shape()[0];
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Self {
            c,
            h,
            w,
            o,
            ho,
            wo,
            stride,
            pad,
        }
    }

    /// Output positions along one axis for kernel offset `kk` that land inside
    /// the unpadded input, as a half-open range.
    fn valid(&self, kk: usize, extent: usize, out: usize) -> (usize, usize) {
        // input index = o * stride + kk - pad must lie in [0, extent)
        let lo = if kk >= self.pad {
            0
        } else {
            (self.pad - kk).div_ceil(self.stride)
        };
        let hi = if extent + self.pad > kk {
            ((extent + self.pad - kk - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn conv_forward(w: &Tensor, b: &Tensor, x: &Tensor, k: usize, stride: usize, pad: usize) -> Tensor {
    let g = ConvGeom::new(w, x, k, stride, pad);
    let batch = x.rows();
    let mut y = Tensor::zeros(&[batch, g.o, g.ho, g.wo]);
    let wd = w.data();
    let bd = b.data();
    let plane = g.ho * g.wo;
    for s in 0..batch {
        let xs = x.row(s);
        let ys = y.row_mut(s);
        for o in 0..g.o {
            let out = &mut ys[o * plane..(o + 1) * plane];
            out.iter_mut().for_each(|v| *v = bd[o]);
            for c in 0..g.c {
                let xin = &xs[c * g.h * g.w..(c + 1) * g.h * g.w];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = g.valid(kh, g.h, g.ho);
                    for kw in 0..k {
                        let wv = wd[((o * g.c + c) * k + kh) * k + kw];
                        let (ow_lo, ow_hi) = g.valid(kw, g.w, g.wo);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * stride + kh - pad;
                            let orow = &mut out[oh * g.wo..(oh + 1) * g.wo];
                            let irow = &xin[ih * g.w..(ih + 1) * g.w];
                            for ow in ow_lo..ow_hi {
                                orow[ow] += wv * irow[ow * stride + kw - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    w: &Tensor,
    x: &Tensor,
    gy: &Tensor,
    active: &[bool],
    grads: &mut [Tensor],
    k: usize,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Option<Tensor> {
    let g = ConvGeom::new(w, x, k, stride, pad);
    let batch = x.rows();
    let plane = g.ho * g.wo;
    let wd = w.data();
    let mut gx = need_input_grad.then(|| Tensor::zeros(x.shape()));
    let (gw, gb) = grads.split_at_mut(1);
    let gw = gw[0].data_mut();
    let gb = gb[0].data_mut();
    for s in (0..batch).filter(|&s| active[s]) {
        let xs = x.row(s);
        let gys = gy.row(s);
        for o in 0..g.o {
            let gout = &gys[o * plane..(o + 1) * plane];
            gb[o] += gout.iter().sum::<f64>();
            for c in 0..g.c {
                let xin = &xs[c * g.h * g.w..(c + 1) * g.h * g.w];
                for kh in 0..k {
                    let (oh_lo, oh_hi) = g.valid(kh, g.h, g.ho);
                    for kw in 0..k {
                        let (ow_lo, ow_hi) = g.valid(kw, g.w, g.wo);
                        let widx = ((o * g.c + c) * k + kh) * k + kw;
                        let mut acc = 0.0;
                        for oh in oh_lo..oh_hi {
                            let ih = oh * stride + kh - pad;
                            let grow = &gout[oh * g.wo..(oh + 1) * g.wo];
                            let irow = &xin[ih * g.w..(ih + 1) * g.w];
                            for ow in ow_lo..ow_hi {
                                acc += grow[ow] * irow[ow * stride + kw - pad];
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        if let Some(gx) = gx.as_mut() {
            let gxs = gx.row_mut(s);
            for o in 0..g.o {
                let gout = &gys[o * plane..(o + 1) * plane];
                for c in 0..g.c {
                    let gin = &mut gxs[c * g.h * g.w..(c + 1) * g.h * g.w];
                    for kh in 0..k {
                        let (oh_lo, oh_hi) = g.valid(kh, g.h, g.ho);
                        for kw in 0..k {
                            let (ow_lo, ow_hi) = g.valid(kw, g.w, g.wo);
                            let wv = wd[((o * g.c + c) * k + kh) * k + kw];
                            for oh in oh_lo..oh_hi {
                                let ih = oh * stride + kh - pad;
                                let grow = &gout[oh * g.wo..(oh + 1) * g.wo];
                                let irow = &mut gin[ih * g.w..(ih + 1) * g.w];
                                for ow in ow_lo..ow_hi {
                                    irow[ow * stride + kw - pad] += wv * grow[ow];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Flat input index of the winning element of each 2x2 window, first
/// maximum in row-major window order on ties.
fn pool_argmax(x: &Tensor, s: usize, c: usize, oh: usize, ow: usize) -> usize {
    let (h, w) = (x.shape()[2], x.shape()[3]);
    let xs = x.row(s);
    let base = c * h * w;
    let mut best = base + (2 * oh) * w + 2 * ow;
    for (dh, dw) in [(0, 1), (1, 0), (1, 1)] {
        let idx = base + (2 * oh + dh) * w + 2 * ow + dw;
        if xs[idx] > xs[best] {
            best = idx;
        }
    }
    best
}

fn pool_forward(x: &Tensor) -> Tensor {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[b, c, ho, wo]);
    for s in 0..b {
        for ch in 0..c {
            for oh in 0..ho {
                for ow in 0..wo {
                    let v = x.row(s)[pool_argmax(x, s, ch, oh, ow)];
                    y.row_mut(s)[(ch * ho + oh) * wo + ow] = v;
                }
            }
        }
    }
    y
}

fn pool_backward(x: &Tensor, gy: &Tensor, active: &[bool]) -> Tensor {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (h / 2, w / 2);
    let mut gx = Tensor::zeros(x.shape());
    for s in (0..b).filter(|&s| active[s]) {
        for ch in 0..c {
            for oh in 0..ho {
                for ow in 0..wo {
                    let idx = pool_argmax(x, s, ch, oh, ow);
                    gx.row_mut(s)[idx] += gy.row(s)[(ch * ho + oh) * wo + ow];
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_shapes() {
        let conv = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 6,
            kernel: 5,
            stride: 1,
            padding: 2,
        };
        assert_eq!(conv.output_shape(&[1, 28, 28]), Some(vec![6, 28, 28]));
        assert_eq!(conv.output_shape(&[3, 28, 28]), None);
        let strided = LayerSpec::Conv2d {
            in_channels: 2,
            out_channels: 1,
            kernel: 3,
            stride: 2,
            padding: 0,
        };
        assert_eq!(strided.output_shape(&[2, 7, 7]), Some(vec![1, 3, 3]));
        assert_eq!(strided.output_shape(&[2, 2, 2]), None);
    }

    #[test]
    fn conv_matches_naive_loop() {
        // 1 sample, 1 channel 3x3 input, 2x2 kernel, padding 1, stride 2
        let x = Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let w = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![1], vec![0.5]).unwrap();
        let y = conv_forward(&w, &b, &x, 2, 2, 1);
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        let mut expected = vec![];
        for oh in 0..2i64 {
            for ow in 0..2i64 {
                let mut acc = 0.5;
                for kh in 0..2i64 {
                    for kw in 0..2i64 {
                        let ih = oh * 2 + kh - 1;
                        let iw = ow * 2 + kw - 1;
                        if (0..3).contains(&ih) && (0..3).contains(&iw) {
                            acc += w.data()[(kh * 2 + kw) as usize] * x.data()[(ih * 3 + iw) as usize];
                        }
                    }
                }
                expected.push(acc);
            }
        }
        assert_eq!(y.data(), expected.as_slice());
    }

    #[test]
    fn pool_picks_window_max() {
        let x = Tensor::new(vec![1, 1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 0.0, 2.0, 1.0]).unwrap();
        let y = pool_forward(&x);
        assert_eq!(y.data(), &[5.0, 2.0]);
        let g = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 1.0]).unwrap();
        let gx = pool_backward(&x, &g, &[true]);
        // tie in the second window goes to its first element
        assert_eq!(gx.data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn spec_serializes_with_kind_tag() {
        let s = serde_json::to_string(&LayerSpec::MaxPool2x2).unwrap();
        assert_eq!(s, r#"{"kind":"maxpool2x2"}"#);
        let d: LayerSpec = serde_json::from_str(r#"{"kind":"dense","inputs":3,"outputs":2}"#).unwrap();
        assert_eq!(d, LayerSpec::Dense { inputs: 3, outputs: 2 });
    }
}
