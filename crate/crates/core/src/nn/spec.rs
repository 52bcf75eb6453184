use std::fmt::Write;

use super::activation::HeadActivation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::Flat(n) => n,
            Shape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { units: usize },
    /// Zero-padded "same" convolution with a square kernel.
    Conv2D { filters: usize, kernel: usize, stride: usize },
    /// Non-overlapping average pooling.
    Pool2D { window: usize },
    Flatten,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadSpec {
    pub name: String,
    pub activation: HeadActivation,
}

impl HeadSpec {
    pub fn new(name: &str, activation: HeadActivation) -> Self {
        Self {
            name: name.to_string(),
            activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    pub heads: Vec<HeadSpec>,
}

impl NetworkSpec {
    /// Output shape after every layer, validating the stack on the way.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.heads.is_empty() {
            return Err(Error::invalid("a network needs at least one output head"));
        }
        if self.input_shape.size() == 0 {
            return Err(Error::invalid("input shape has zero size"));
        }
        let mut shape = self.input_shape;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Error::Shape(format!("layer {i} ({layer:?}): {msg}"));
            shape = match (*layer, shape) {
                (LayerSpec::Dense { units }, Shape::Flat(_)) => {
                    if units == 0 {
                        return Err(bad("zero units".into()));
                    }
                    Shape::Flat(units)
                }
                (LayerSpec::Dense { .. }, s) => return Err(bad(format!("needs flat input, got {s:?}"))),
                (
                    LayerSpec::Conv2D {
                        filters,
                        kernel,
                        stride,
                    },
                    Shape::Image { height, width, .. },
                ) => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("dimensions must be positive".into()));
                    }
                    Shape::Image {
                        height: height.div_ceil(stride),
                        width: width.div_ceil(stride),
                        channels: filters,
                    }
                }
                (
                    LayerSpec::Pool2D { window },
                    Shape::Image {
                        height,
                        width,
                        channels,
                    },
                ) => {
                    if window == 0 || height % window != 0 || width % window != 0 {
                        return Err(bad(format!("window {window} does not tile {height}x{width}")));
                    }
                    Shape::Image {
                        height: height / window,
                        width: width / window,
                        channels,
                    }
                }
                (LayerSpec::Conv2D { .. } | LayerSpec::Pool2D { .. }, s) => {
                    return Err(bad(format!("needs image input, got {s:?}")))
                }
                (LayerSpec::Flatten, s) => Shape::Flat(s.size()),
                (LayerSpec::Relu, s) => s,
            };
            out.push(shape);
        }
        if !matches!(shape, Shape::Flat(_)) {
            return Err(Error::Shape("the output heads need a flat input; add Flatten".into()));
        }
        Ok(out)
    }

    /// Canonical one-line description, used for checkpoint identity.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        match self.input_shape {
            Shape::Flat(n) => write!(s, "in=flat({n})"),
            Shape::Image {
                height,
                width,
                channels,
            } => write!(s, "in=image({height}x{width}x{channels})"),
        }
        .expect("write to string");
        for layer in &self.layers {
            s.push(';');
            match layer {
                LayerSpec::Dense { units } => write!(s, "dense({units})"),
                LayerSpec::Conv2D {
                    filters,
                    kernel,
                    stride,
                } => write!(s, "conv({filters},{kernel}x{kernel},s{stride})"),
                LayerSpec::Pool2D { window } => write!(s, "avgpool({window})"),
                LayerSpec::Flatten => write!(s, "flatten"),
                LayerSpec::Relu => write!(s, "relu"),
            }
            .expect("write to string");
        }
        s.push_str(";heads=");
        let heads: Vec<String> = self
            .heads
            .iter()
            .map(|h| format!("{}:{}", h.name, h.activation.as_str()))
            .collect();
        s.push_str(&heads.join(","));
        s
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }
}

/// `μ` (linear) and `σ²` (softplus).
pub fn mve_heads() -> Vec<HeadSpec> {
    vec![
        HeadSpec::new("mu", HeadActivation::Linear),
        HeadSpec::new("var", HeadActivation::Softplus),
    ]
}

/// `γ` (linear), `ν` (softplus), `α` (1 + softplus), `β` (softplus).
pub fn nig_heads() -> Vec<HeadSpec> {
    vec![
        HeadSpec::new("gamma", HeadActivation::Linear),
        HeadSpec::new("nu", HeadActivation::Softplus),
        HeadSpec::new("alpha", HeadActivation::SoftplusPlusOne),
        HeadSpec::new("beta", HeadActivation::Softplus),
    ]
}

pub fn build_mlp(inputs: usize, hidden: &[usize], heads: Vec<HeadSpec>) -> NetworkSpec {
    let layers = hidden
        .iter()
        .flat_map(|&units| [LayerSpec::Dense { units }, LayerSpec::Relu])
        .collect();
    NetworkSpec {
        input_shape: Shape::Flat(inputs),
        layers,
        heads,
    }
}

/// Two inputs `(m, x)`, two hidden layers of 64 ReLU units.
pub fn build_mlp_0d(heads: Vec<HeadSpec>) -> NetworkSpec {
    build_mlp(2, &[64, 64], heads)
}

/// Five-stage conv stack (kernel 5 then 3s, three 2×2 poolings) feeding a
/// dense head of `hidden` units twice. Filters are given per conv layer.
pub fn build_cnn(side: usize, filters: [usize; 5], hidden: usize, heads: Vec<HeadSpec>) -> NetworkSpec {
    let conv = |filters, kernel| LayerSpec::Conv2D {
        filters,
        kernel,
        stride: 1,
    };
    let pool = LayerSpec::Pool2D { window: 2 };
    NetworkSpec {
        input_shape: Shape::Image {
            height: side,
            width: side,
            channels: 1,
        },
        layers: vec![
            conv(filters[0], 5),
            LayerSpec::Relu,
            pool,
            conv(filters[1], 3),
            LayerSpec::Relu,
            pool,
            conv(filters[2], 3),
            LayerSpec::Relu,
            conv(filters[3], 3),
            LayerSpec::Relu,
            conv(filters[4], 3),
            LayerSpec::Relu,
            pool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { units: hidden },
            LayerSpec::Relu,
        ],
        heads,
    }
}

/// 32×32×1 input, filters 8, 16, 32, 32, 64, dense 64 → 64.
pub fn build_cnn_2d(heads: Vec<HeadSpec>) -> NetworkSpec {
    build_cnn(32, [8, 16, 32, 32, 64], 64, heads)
}
