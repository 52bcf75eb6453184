use ndarray::{Array2, ArrayView2, Zip};

use super::layers::{Conv, Dense, Pool};
use super::params::{ParamStore, Segment, SegmentKind};
use super::spec::{LayerSpec, NetworkSpec, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Layer {
    Dense(Dense),
    Conv(Conv),
    Pool(Pool),
    Flatten,
    Relu,
}

/// A validated [`NetworkSpec`] with its parameter layout resolved.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    head: Dense,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone)]
enum Cache {
    Input(Array2<f64>),
    Cols(Array2<f64>),
    Empty,
}

/// Activations recorded by [`Network::forward_train`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    caches: Vec<Cache>,
    head_input: Option<Array2<f64>>,
    head_pre: Option<Array2<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.caches.clear();
        self.head_input = None;
        self.head_pre = None;
    }
}

fn image_dims(shape: Shape) -> (usize, usize, usize) {
    match shape {
        Shape::Image {
            height,
            width,
            channels,
        } => (height, width, channels),
        Shape::Flat(_) => unreachable!("validated by NetworkSpec::shapes"),
    }
}

fn end_of(segments: &[Segment]) -> usize {
    segments.last().map_or(0, |s| s.offset + s.len)
}

/// Appends a weight segment followed by its bias segment.
fn push_segments(segments: &mut Vec<Segment>, weight_len: usize, fan_in: usize, bias_len: usize) {
    let offset = end_of(segments);
    segments.push(Segment {
        offset,
        len: weight_len,
        kind: SegmentKind::Weight { fan_in },
    });
    segments.push(Segment {
        offset: offset + weight_len,
        len: bias_len,
        kind: SegmentKind::Bias,
    });
}

fn dense_layer(inputs: usize, units: usize, segments: &mut Vec<Segment>) -> Dense {
    let w = end_of(segments);
    push_segments(segments, inputs * units, inputs, units);
    Dense {
        inputs,
        units,
        w,
        b: w + inputs * units,
    }
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut segments = Vec::new();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut shape = spec.input_shape;
        for (layer, &out_shape) in spec.layers.iter().zip(&shapes) {
            layers.push(match *layer {
                LayerSpec::Dense { units } => Layer::Dense(dense_layer(shape.size(), units, &mut segments)),
                LayerSpec::Conv2D {
                    filters,
                    kernel,
                    stride,
                } => {
                    let conv = Conv::new(image_dims(shape), filters, kernel, stride, end_of(&segments));
                    push_segments(&mut segments, conv.weight_len(), conv.fan_in(), filters);
                    Layer::Conv(conv)
                }
                LayerSpec::Pool2D { window } => {
                    let (height, width, channels) = image_dims(shape);
                    Layer::Pool(Pool {
                        height,
                        width,
                        channels,
                        window,
                    })
                }
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Relu => Layer::Relu,
            });
            shape = out_shape;
        }
        let head = dense_layer(shape.size(), spec.heads.len(), &mut segments);
        Ok(Self {
            spec,
            layers,
            head,
            segments,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        end_of(&self.segments)
    }

    pub fn input_size(&self) -> usize {
        self.spec.input_shape.size()
    }

    pub fn n_heads(&self) -> usize {
        self.spec.heads.len()
    }

    /// Parameters with seeded uniform fan-in weights and zero biases.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        ParamStore::init(self.segments.clone(), seed)
    }

    pub fn zero_params(&self) -> ParamStore {
        ParamStore::zeros(self.segments.clone())
    }

    fn check_params(&self, params: &ParamStore) -> Result<()> {
        if params.segments() != self.segments.as_slice() {
            return Err(Error::Shape(format!(
                "parameter store of {} values does not match this network ({})",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_size() {
            return Err(Error::Shape(format!(
                "batch rows have {} values, network expects {}",
                batch.ncols(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Head outputs, one row per example and one column per head.
    pub fn forward(&self, params: &ParamStore, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.run(params, batch, None)
    }

    /// Like [`forward`](Self::forward) but records what [`backward`](Self::backward) needs.
    pub fn forward_train(
        &self,
        params: &ParamStore,
        batch: ArrayView2<f64>,
        tape: &mut Tape,
    ) -> Result<Array2<f64>> {
        tape.clear();
        self.run(params, batch, Some(tape))
    }

    fn run(&self, params: &ParamStore, batch: ArrayView2<f64>, mut tape: Option<&mut Tape>) -> Result<Array2<f64>> {
        self.check_params(params)?;
        self.check_batch(&batch)?;
        let p = params.values.as_slice();
        let n = batch.nrows();
        let mut x = batch.as_standard_layout().into_owned();
        for layer in &self.layers {
            let (out, cache) = match layer {
                Layer::Dense(d) => (d.forward(p, &x), Cache::Input(x)),
                Layer::Conv(c) => {
                    let cols = c.im2col(&x);
                    (c.forward(p, &cols, n), Cache::Cols(cols))
                }
                Layer::Pool(pool) => (pool.forward(&x), Cache::Empty),
                Layer::Flatten => (x, Cache::Empty),
                Layer::Relu => (x.mapv(|v| v.max(0.0)), Cache::Input(x)),
            };
            if let Some(t) = tape.as_deref_mut() {
                t.caches.push(cache);
            }
            x = out;
        }
        let z = self.head.forward(p, &x);
        let mut out = z.clone();
        for (mut col, head) in out.columns_mut().into_iter().zip(&self.spec.heads) {
            col.mapv_inplace(|v| head.activation.apply(v));
        }
        if let Some(t) = tape {
            t.head_input = Some(x);
            t.head_pre = Some(z);
        }
        Ok(out)
    }

    /// Overwrites `params.grads` with `∂loss/∂θ` given `∂loss/∂head` for the
    /// batch recorded in `tape`, and returns `∂loss/∂input`.
    pub fn backward(
        &self,
        params: &mut ParamStore,
        tape: &Tape,
        head_grad: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_params(params)?;
        let (Some(z), Some(head_input)) = (&tape.head_pre, &tape.head_input) else {
            return Err(Error::BackwardBeforeForward);
        };
        if head_grad.dim() != z.dim() {
            return Err(Error::Shape(format!(
                "head gradient is {:?}, forward produced {:?}",
                head_grad.dim(),
                z.dim()
            )));
        }
        params.zero_grads();
        let p = params.values.as_slice();
        let g = params.grads.as_mut_slice();

        let mut dz = head_grad.as_standard_layout().into_owned();
        for ((mut dcol, zcol), head) in dz.columns_mut().into_iter().zip(z.columns()).zip(&self.spec.heads) {
            Zip::from(&mut dcol)
                .and(&zcol)
                .for_each(|d, &zv| *d *= head.activation.derivative(zv));
        }
        let mut dx = self.head.backward(p, g, head_input, &dz);

        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            dx = match (layer, cache) {
                (Layer::Dense(d), Cache::Input(x)) => d.backward(p, g, x, &dx),
                (Layer::Conv(c), Cache::Cols(cols)) => c.backward(p, g, cols, &dx),
                (Layer::Pool(pool), _) => pool.backward(&dx),
                (Layer::Flatten, _) => dx,
                (Layer::Relu, Cache::Input(x)) => {
                    Zip::from(&mut dx).and(x).for_each(|d, &xv| {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    dx
                }
                _ => unreachable!("cache kind follows layer kind"),
            };
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_cnn_2d, build_mlp, build_mlp_0d, mve_heads, nig_heads, HeadSpec};
    use crate::nn::HeadActivation;
    use ndarray::{array, Array2};

    #[test]
    fn mlp_parameter_count() {
        let net = Network::new(build_mlp_0d(mve_heads())).unwrap();
        assert_eq!(net.param_count(), 2 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
        let net = Network::new(build_mlp_0d(nig_heads())).unwrap();
        assert_eq!(net.param_count(), 2 * 64 + 64 + 64 * 64 + 64 + 64 * 4 + 4);
    }

    #[test]
    fn zero_network_outputs() {
        let spec = build_mlp(
            3,
            &[5],
            vec![
                HeadSpec::new("a", HeadActivation::Linear),
                HeadSpec::new("b", HeadActivation::Softplus),
                HeadSpec::new("c", HeadActivation::SoftplusPlusOne),
            ],
        );
        let net = Network::new(spec).unwrap();
        let params = net.zero_params();
        let out = net.forward(&params, array![[1.0, -2.0, 3.0], [9.0, 9.0, 9.0]].view()).unwrap();
        for row in out.rows() {
            assert_eq!(row[0], 0.0);
            assert!((row[1] - std::f64::consts::LN_2).abs() < 1e-15);
            assert!((row[2] - 1.0 - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_dense_gradient_is_the_input() {
        let spec = build_mlp(2, &[], vec![HeadSpec::new("y", HeadActivation::Linear)]);
        let net = Network::new(spec).unwrap();
        let mut params = net.init_params(1);
        let mut tape = Tape::new();
        let x = array![[0.7, -1.3]];
        net.forward_train(&params, x.view(), &mut tape).unwrap();
        net.backward(&mut params, &tape, array![[1.0]].view()).unwrap();
        assert_eq!(params.grads, vec![0.7, -1.3, 1.0]);
    }

    #[test]
    fn backward_before_forward_and_shape_errors() {
        let net = Network::new(build_mlp_0d(mve_heads())).unwrap();
        let mut params = net.init_params(0);
        let tape = Tape::new();
        let g = Array2::<f64>::zeros((4, 2));
        assert!(matches!(net.backward(&mut params, &tape, g.view()), Err(Error::BackwardBeforeForward)));
        assert!(matches!(net.forward(&params, Array2::zeros((4, 3)).view()), Err(Error::Shape(_))));

        let mut tape = Tape::new();
        net.forward_train(&params, Array2::zeros((4, 2)).view(), &mut tape).unwrap();
        assert!(matches!(
            net.backward(&mut params, &tape, Array2::zeros((3, 2)).view()),
            Err(Error::Shape(_))
        ));
        let other = Network::new(build_mlp_0d(nig_heads())).unwrap().init_params(0);
        assert!(net.forward(&other, Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let net = Network::new(build_mlp_0d(nig_heads())).unwrap();
        let mut params = net.init_params(2);
        let mut tape = Tape::new();
        let x = array![[0.3, 4.0], [1.1, 0.6]];
        net.forward_train(&params, x.view(), &mut tape).unwrap();
        net.backward(&mut params, &tape, Array2::zeros((2, 4)).view()).unwrap();
        assert!(params.grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn cnn_forward_is_finite_and_deterministic() {
        let net = Network::new(build_cnn_2d(mve_heads())).unwrap();
        let params = net.init_params(5);
        let batch = Array2::from_shape_fn((3, 1024), |(i, j)| ((i * 31 + j * 7) % 13) as f64 / 13.0);
        let a = net.forward(&params, batch.view()).unwrap();
        let b = net.forward(&params, batch.view()).unwrap();
        assert_eq!(a.dim(), (3, 2));
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(a.column(1).iter().all(|v| *v > 0.0));
        assert_eq!(a, b);
    }
}
