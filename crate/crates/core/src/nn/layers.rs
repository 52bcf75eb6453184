//! Layer kernels. Every tensor is a standard-layout `(batch, features)`
//! matrix; images are flattened channel-last.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub inputs: usize,
    pub units: usize,
    pub w: usize,
    pub b: usize,
}

impl Dense {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.units
    }

    fn weights<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.inputs, self.units), &p[self.w..self.w + self.weight_len()])
            .expect("segment matches layer shape")
    }

    fn bias<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.b..self.b + self.units])
    }

    pub fn forward(&self, p: &[f64], x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weights(p));
        out += &self.bias(p);
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        {
            let gw = &mut g[self.w..self.w + self.weight_len()];
            let mut gw = ArrayViewMut2::from_shape((self.inputs, self.units), gw).expect("segment shape");
            general_mat_mul(1.0, &x.t(), dy, 1.0, &mut gw);
        }
        let mut gb = ArrayViewMut1::from(&mut g[self.b..self.b + self.units]);
        gb += &dy.sum_axis(Axis(0));
        let mut dx = Array2::zeros((dy.nrows(), self.inputs));
        general_mat_mul(1.0, dy, &self.weights(p).t(), 0.0, &mut dx);
        dx
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_height: usize,
    pub out_width: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub w: usize,
    pub b: usize,
}

impl Conv {
    pub fn new(
        (height, width, channels): (usize, usize, usize),
        filters: usize,
        kernel: usize,
        stride: usize,
        w: usize,
    ) -> Self {
        let out_height = height.div_ceil(stride);
        let out_width = width.div_ceil(stride);
        let pad_h = ((out_height - 1) * stride + kernel).saturating_sub(height);
        let pad_w = ((out_width - 1) * stride + kernel).saturating_sub(width);
        let mut conv = Self {
            height,
            width,
            channels,
            filters,
            kernel,
            stride,
            out_height,
            out_width,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
            w,
            b: 0,
        };
        conv.b = w + conv.weight_len();
        conv
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    pub fn fan_in(&self) -> usize {
        self.patch_len()
    }

    pub fn weight_len(&self) -> usize {
        self.patch_len() * self.filters
    }

    fn weights<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.patch_len(), self.filters), &p[self.w..self.w + self.weight_len()])
            .expect("segment matches layer shape")
    }

    /// Calls `f(col_index, input_index)` for every in-bounds patch entry of
    /// output pixel `(oy, ox)`, one run of `channels` values at a time.
    #[inline]
    fn for_each_tap(&self, oy: usize, ox: usize, mut f: impl FnMut(usize, usize)) {
        for ky in 0..self.kernel {
            let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
            if iy < 0 || iy >= self.height as isize {
                continue;
            }
            for kx in 0..self.kernel {
                let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                if ix < 0 || ix >= self.width as isize {
                    continue;
                }
                let col = (ky * self.kernel + kx) * self.channels;
                let src = (iy as usize * self.width + ix as usize) * self.channels;
                f(col, src);
            }
        }
    }

    /// Patch matrix with one row per (example, output pixel).
    pub fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let rows_per = self.out_height * self.out_width;
        let patch = self.patch_len();
        let mut cols = Array2::<f64>::zeros((n * rows_per, patch));
        let xs = x.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("standard layout");
        let in_size = self.height * self.width * self.channels;
        let c = self.channels;
        for e in 0..n {
            let img = &xs[e * in_size..(e + 1) * in_size];
            for oy in 0..self.out_height {
                for ox in 0..self.out_width {
                    let row = (e * rows_per + oy * self.out_width + ox) * patch;
                    self.for_each_tap(oy, ox, |col, src| {
                        cs[row + col..row + col + c].copy_from_slice(&img[src..src + c]);
                    });
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, n: usize) -> Array2<f64> {
        let in_size = self.height * self.width * self.channels;
        let rows_per = self.out_height * self.out_width;
        let patch = self.patch_len();
        let c = self.channels;
        let mut dx = Array2::<f64>::zeros((n, in_size));
        let ds = dcols.as_slice().expect("standard layout");
        let xs = dx.as_slice_mut().expect("standard layout");
        for e in 0..n {
            let img = &mut xs[e * in_size..(e + 1) * in_size];
            for oy in 0..self.out_height {
                for ox in 0..self.out_width {
                    let row = (e * rows_per + oy * self.out_width + ox) * patch;
                    self.for_each_tap(oy, ox, |col, src| {
                        for k in 0..c {
                            img[src + k] += ds[row + col + k];
                        }
                    });
                }
            }
        }
        dx
    }

    pub fn forward(&self, p: &[f64], cols: &Array2<f64>, n: usize) -> Array2<f64> {
        let mut out = cols.dot(&self.weights(p));
        out += &ArrayView1::from(&p[self.b..self.b + self.filters]);
        out.into_shape_with_order((n, self.out_height * self.out_width * self.filters))
            .expect("rows regroup per example")
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], cols: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let n = dy.nrows();
        let dy = dy
            .view()
            .into_shape_with_order((n * self.out_height * self.out_width, self.filters))
            .expect("standard layout");
        {
            let mut gw = ArrayViewMut2::from_shape(
                (self.patch_len(), self.filters),
                &mut g[self.w..self.w + self.weight_len()],
            )
            .expect("segment shape");
            general_mat_mul(1.0, &cols.t(), &dy, 1.0, &mut gw);
        }
        let mut gb = ArrayViewMut1::from(&mut g[self.b..self.b + self.filters]);
        gb += &dy.sum_axis(Axis(0));
        let mut dcols = Array2::zeros((dy.nrows(), self.patch_len()));
        general_mat_mul(1.0, &dy, &self.weights(p).t(), 0.0, &mut dcols);
        self.col2im(&dcols, n)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Pool {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub window: usize,
}

impl Pool {
    fn out_dims(&self) -> (usize, usize) {
        (self.height / self.window, self.width / self.window)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (oh, ow) = self.out_dims();
        let c = self.channels;
        let inv = 1.0 / (self.window * self.window) as f64;
        let mut out = Array2::<f64>::zeros((x.nrows(), oh * ow * c));
        for (xi, mut oi) in x.outer_iter().zip(out.outer_iter_mut()) {
            let xs = xi.as_slice().expect("standard layout");
            let os = oi.as_slice_mut().expect("standard layout");
            for oy in 0..oh {
                for ox in 0..ow {
                    let dst = (oy * ow + ox) * c;
                    for dy in 0..self.window {
                        for dx in 0..self.window {
                            let src = ((oy * self.window + dy) * self.width + ox * self.window + dx) * c;
                            for k in 0..c {
                                os[dst + k] += xs[src + k];
                            }
                        }
                    }
                    os[dst..dst + c].iter_mut().for_each(|v| *v *= inv);
                }
            }
        }
        out
    }

    pub fn backward(&self, dy: &Array2<f64>) -> Array2<f64> {
        let (oh, ow) = self.out_dims();
        let c = self.channels;
        let inv = 1.0 / (self.window * self.window) as f64;
        let mut dx = Array2::<f64>::zeros((dy.nrows(), self.height * self.width * c));
        for (gi, mut di) in dy.outer_iter().zip(dx.outer_iter_mut()) {
            let gs = gi.as_slice().expect("standard layout");
            let ds = di.as_slice_mut().expect("standard layout");
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = (oy * ow + ox) * c;
                    for dyy in 0..self.window {
                        for dxx in 0..self.window {
                            let dst = ((oy * self.window + dyy) * self.width + ox * self.window + dxx) * c;
                            for k in 0..c {
                                ds[dst + k] = gs[src + k] * inv;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}
