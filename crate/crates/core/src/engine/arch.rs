//! Named architecture presets.
//!
//! `lenet5` and `alexnet` follow the usual small-image layouts. The `-half`
//! variants halve every channel and hidden width (rounding up); this is a
//! local convention for the student networks, not a published definition.

use super::{Architecture, EngineError, LayerSpec};

fn conv(in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels,
        out_channels,
        kernel,
        stride: 1,
        padding,
    }
}

fn dense(inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Dense { inputs, outputs }
}

fn scaled(width: usize, half: bool) -> usize {
    if half {
        width.div_ceil(2)
    } else {
        width
    }
}

/// Parses a preset name (`mlp:64,32`, `linear`, `lenet5`, `lenet5-half`,
/// `alexnet`, `alexnet-half`) into a concrete architecture.
pub fn build(name: &str, input_shape: &[usize], classes: usize) -> Result<Architecture, EngineError> {
    let unknown = || EngineError::UnknownArchitecture(name.to_string());
    let (base, half) = match name.strip_suffix("-half") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let layers = if base == "linear" || base.starts_with("mlp") {
        let hidden: Vec<usize> = match base.strip_prefix("mlp:") {
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| unknown()))
                .collect::<Result<_, _>>()?,
            None if base == "linear" => Vec::new(),
            None => return Err(unknown()),
        };
        mlp(input_shape, &hidden, classes, half)
    } else if base == "lenet5" {
        lenet5(input_shape, classes, half)?
    } else if base == "alexnet" {
        alexnet(input_shape, classes, half)?
    } else {
        return Err(unknown());
    };
    let arch = Architecture {
        input_shape: input_shape.to_vec(),
        layers,
    };
    arch.shapes()?;
    Ok(arch)
}

fn mlp(input_shape: &[usize], hidden: &[usize], classes: usize, half: bool) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    if input_shape.len() != 1 {
        layers.push(LayerSpec::Flatten);
    }
    let mut width: usize = input_shape.iter().product();
    for &h in hidden {
        let h = scaled(h, half);
        layers.push(dense(width, h));
        layers.push(LayerSpec::Relu);
        width = h;
    }
    layers.push(dense(width, classes));
    layers
}

fn image_dims(input_shape: &[usize], name: &str) -> Result<(usize, usize), EngineError> {
    match *input_shape {
        [c, h, w] if h == w => Ok((c, h)),
        _ => Err(EngineError::UnknownArchitecture(format!(
            "{name} needs a square CHW input, got {input_shape:?}"
        ))),
    }
}

fn lenet5(input_shape: &[usize], classes: usize, half: bool) -> Result<Vec<LayerSpec>, EngineError> {
    let (c, side) = image_dims(input_shape, "lenet5")?;
    let pad = if side == 28 { 2 } else { 0 };
    let (c1, c2) = (scaled(6, half), scaled(16, half));
    let (f1, f2) = (scaled(120, half), scaled(84, half));
    let s1 = (side + 2 * pad - 4) / 2;
    let s2 = (s1 - 4) / 2;
    Ok(vec![
        conv(c, c1, 5, pad),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        conv(c1, c2, 5, 0),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Flatten,
        dense(c2 * s2 * s2, f1),
        LayerSpec::Relu,
        dense(f1, f2),
        LayerSpec::Relu,
        dense(f2, classes),
    ])
}

fn alexnet(input_shape: &[usize], classes: usize, half: bool) -> Result<Vec<LayerSpec>, EngineError> {
    let (c, side) = image_dims(input_shape, "alexnet")?;
    let ch = [64, 192, 384, 256, 256].map(|w| scaled(w, half));
    let (f1, f2) = (scaled(1024, half), scaled(512, half));
    let s = side / 8;
    Ok(vec![
        conv(c, ch[0], 5, 2),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        conv(ch[0], ch[1], 5, 2),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        conv(ch[1], ch[2], 3, 1),
        LayerSpec::Relu,
        conv(ch[2], ch[3], 3, 1),
        LayerSpec::Relu,
        conv(ch[3], ch[4], 3, 1),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::Flatten,
        dense(ch[4] * s * s, f1),
        LayerSpec::Relu,
        dense(f1, f2),
        LayerSpec::Relu,
        dense(f2, classes),
    ])
}
