//! Convolutional steering regressor.
//!
//! Activations inside the convolution stack are laid out channel-major across
//! the batch (`[C][B][H][W]`), so each convolution is a single GEMM over an
//! im2col buffer covering the whole batch. Dense activations are `[features][B]`.

use std::fmt::Write as _;

use super::real::Real;
use crate::error::{Error, Result};
use crate::render::Image;
use crate::rng::RngStream;

pub const INPUT_HEIGHT: usize = 66;
pub const INPUT_WIDTH: usize = 200;
/// Steering labels are divided by this many degrees before training.
pub const STEERING_SCALE_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture description; the checkpoint hash is computed from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub convs: Vec<ConvSpec>,
    /// Widths of the fully connected layers, the last one being the output.
    pub dense: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        in_height: usize,
        in_width: usize,
        out_height: usize,
        out_width: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        match *self {
            LayerShape::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel * kernel,
            LayerShape::Dense { inputs, outputs } => inputs * outputs,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerShape::Conv { out_channels, .. } => out_channels,
            LayerShape::Dense { outputs, .. } => outputs,
        }
    }

    /// Xavier fan-in and fan-out (kernel area times channels for convolutions).
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerShape::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * kernel * kernel, out_channels * kernel * kernel),
            LayerShape::Dense { inputs, outputs } => (inputs, outputs),
        }
    }

    pub fn xavier_bound(&self) -> f64 {
        let (fan_in, fan_out) = self.fans();
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }
}

impl NetworkSpec {
    /// 66x200x1 input; 24/36/48 5x5 stride-2 and two 64 3x3 convolutions;
    /// dense 100-50-10-1.
    pub fn standard() -> Self {
        let conv = |i, o, k, s| ConvSpec {
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: s,
        };
        Self {
            input_channels: 1,
            input_height: INPUT_HEIGHT,
            input_width: INPUT_WIDTH,
            convs: vec![
                conv(1, 24, 5, 2),
                conv(24, 36, 5, 2),
                conv(36, 48, 5, 2),
                conv(48, 64, 3, 1),
                conv(64, 64, 3, 1),
            ],
            dense: vec![100, 50, 10, 1],
        }
    }

    /// Resolves every layer's shape, failing if the chain is inconsistent.
    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        let bad = |msg: String| Error::ShapeMismatch {
            expected: "consistent layer chain".into(),
            found: msg,
        };
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        let mut shapes = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            if conv.in_channels != c {
                return Err(bad(format!("conv {i} expects {} channels, gets {c}", conv.in_channels)));
            }
            if conv.kernel == 0 || conv.stride == 0 || conv.kernel > h || conv.kernel > w {
                return Err(bad(format!("conv {i} kernel {} does not fit {h}x{w}", conv.kernel)));
            }
            let oh = (h - conv.kernel) / conv.stride + 1;
            let ow = (w - conv.kernel) / conv.stride + 1;
            shapes.push(LayerShape::Conv {
                in_channels: c,
                out_channels: conv.out_channels,
                kernel: conv.kernel,
                stride: conv.stride,
                in_height: h,
                in_width: w,
                out_height: oh,
                out_width: ow,
            });
            c = conv.out_channels;
            h = oh;
            w = ow;
        }
        let mut inputs = c * h * w;
        for &outputs in &self.dense {
            if outputs == 0 {
                return Err(bad("dense layer of width 0".into()));
            }
            shapes.push(LayerShape::Dense { inputs, outputs });
            inputs = outputs;
        }
        if inputs != 1 {
            return Err(bad(format!("output width {inputs}, expected 1")));
        }
        Ok(shapes)
    }

    pub fn flatten_len(&self) -> Result<usize> {
        let shapes = self.layer_shapes()?;
        Ok(match shapes.get(self.convs.len()) {
            Some(LayerShape::Dense { inputs, .. }) => *inputs,
            _ => return Err(Error::ShapeMismatch {
                expected: "at least one dense layer".into(),
                found: "none".into(),
            }),
        })
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .layer_shapes()?
            .iter()
            .map(|s| s.weight_len() + s.bias_len())
            .sum())
    }

    /// Canonical text form, hashed into checkpoints.
    pub fn canonical(&self) -> String {
        let mut s = format!(
            "in:{}x{}x{}",
            self.input_channels, self.input_height, self.input_width
        );
        for c in &self.convs {
            let _ = write!(
                s,
                ";conv:{}>{}:k{}:s{}:valid:relu",
                c.in_channels, c.out_channels, c.kernel, c.stride
            );
        }
        let n = self.dense.len();
        for (i, d) in self.dense.iter().enumerate() {
            let act = if i + 1 == n { "linear" } else { "relu" };
            let _ = write!(s, ";dense:{d}:{act}");
        }
        s
    }

    /// 64-bit FNV-1a of [`NetworkSpec::canonical`].
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub shape: LayerShape,
    /// Conv: `[out][in][kh][kw]`; dense: `[out][in]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    pub layers: Vec<Layer<T>>,
}

/// Per-parameter gradients, shaped like the network.
pub type Gradients<T> = Vec<Layer<T>>;

impl<T: Real> Network<T> {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let layers = spec
            .layer_shapes()?
            .into_iter()
            .map(|shape| Layer {
                shape,
                weight: vec![T::ZERO; shape.weight_len()],
                bias: vec![T::ZERO; shape.bias_len()],
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn convert<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    shape: l.shape,
                    weight: l.weight.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Flat view index -> (layer, is_bias, offset).
    pub fn locate(&self, mut index: usize) -> Option<(usize, bool, usize)> {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weight.len() {
                return Some((li, false, index));
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return Some((li, true, index));
            }
            index -= l.bias.len();
        }
        None
    }

    pub fn param_mut(&mut self, index: usize) -> &mut T {
        let (li, is_bias, off) = self.locate(index).expect("parameter index out of range");
        let l = &mut self.layers[li];
        if is_bias {
            &mut l.bias[off]
        } else {
            &mut l.weight[off]
        }
    }

    /// Plain SGD update `w -= lr * g`.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, learning_rate: f64) {
        let lr = T::from_f64(learning_rate);
        for (l, g) in self.layers.iter_mut().zip(grads) {
            for (w, d) in l.weight.iter_mut().zip(&g.weight) {
                *w = *w - lr * *d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias) {
                *b = *b - lr * *d;
            }
        }
    }
}

/// Uniform Xavier initialization: weights in `±sqrt(6 / (fan_in + fan_out))`,
/// biases zero. Layers are drawn in order, weights in storage order.
pub fn xavier_init<T: Real>(spec: &NetworkSpec, rng: &mut RngStream) -> Result<Network<T>> {
    let mut net = Network::<T>::zeros(spec)?;
    for layer in &mut net.layers {
        let bound = layer.shape.xavier_bound();
        for w in &mut layer.weight {
            *w = T::from_f64(rng.uniform(-bound, bound));
        }
    }
    Ok(net)
}

/// Maps 8-bit pixels to `[-1, 1]`.
pub fn normalize_pixel(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

/// Stacks a batch of images into the `[1][B][H][W]` input layout.
pub fn batch_input<T: Real>(spec: &NetworkSpec, images: &[&Image]) -> Result<Vec<T>> {
    let (h, w) = (spec.input_height, spec.input_width);
    let mut out = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if img.width != w || img.height != h || spec.input_channels != 1 {
            return Err(Error::ShapeMismatch {
                expected: format!("{w}x{h} grayscale"),
                found: format!("{}x{}", img.width, img.height),
            });
        }
        out.extend(img.pixels.iter().map(|&p| T::from_f64(normalize_pixel(p))));
    }
    Ok(out)
}

/// Activations retained for the backward pass, plus scratch space. Reusing
/// one `ForwardPass` across batches avoids reallocating the large im2col
/// buffers.
#[derive(Debug, Default)]
pub struct ForwardPass<T> {
    pub batch: usize,
    /// `acts[i]` is the input to layer `i` (post-ReLU for `i > 0`); the last
    /// entry holds the predictions.
    acts: Vec<Vec<T>>,
    col: Vec<T>,
    phase: Vec<T>,
    dcol_phase: Vec<T>,
    delta: Vec<T>,
    next_delta: Vec<T>,
    dcol: Vec<T>,
}

impl<T: Real> ForwardPass<T> {
    pub fn new() -> Self {
        Self {
            batch: 0,
            acts: Vec::new(),
            col: Vec::new(),
            phase: Vec::new(),
            dcol_phase: Vec::new(),
            delta: Vec::new(),
            next_delta: Vec::new(),
            dcol: Vec::new(),
        }
    }

    pub fn predictions(&self) -> &[T] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Post-activation outputs of layer `i`.
    pub fn layer_output(&self, i: usize) -> &[T] {
        &self.acts[i + 1]
    }
}

fn reuse<T: Real>(buf: &mut Vec<T>, len: usize) {
    buf.clear();
    buf.resize(len, T::ZERO);
}

/// Sets the length without clearing; for buffers that are fully overwritten.
fn resize_only<T: Real>(buf: &mut Vec<T>, len: usize) {
    buf.resize(len, T::ZERO);
    buf.truncate(len);
}

/// Geometry of one convolution over a batch in `[C][B][H][W]` layout.
#[derive(Clone, Copy)]
struct ConvGeom {
    batch: usize,
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    oh: usize,
    ow: usize,
}

/// Target im2col chunk size in elements; keeps the buffer cache resident.
const COL_CHUNK_ELEMS: usize = 1 << 18;

impl ConvGeom {
    fn from_shape(shape: LayerShape, batch: usize) -> Option<Self> {
        match shape {
            LayerShape::Conv {
                in_channels,
                kernel,
                stride,
                in_height,
                in_width,
                out_height,
                out_width,
                ..
            } => Some(Self {
                batch,
                channels: in_channels,
                h: in_height,
                w: in_width,
                k: kernel,
                s: stride,
                oh: out_height,
                ow: out_width,
            }),
            LayerShape::Dense { .. } => None,
        }
    }

    fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Samples per im2col chunk.
    fn chunk(&self) -> usize {
        (COL_CHUNK_ELEMS / (self.col_rows() * self.out_pixels())).clamp(1, self.batch)
    }

    /// Rows and columns of one polyphase plane. Stride-1 layers use the plain
    /// layout, which is the single-phase case.
    fn phase_dims(&self) -> (usize, usize) {
        (self.h.div_ceil(self.s), self.w.div_ceil(self.s))
    }

    fn phase_len(&self) -> usize {
        let (ph, pw) = self.phase_dims();
        self.channels * self.batch * self.s * self.s * ph * pw
    }

    /// Splits every `[H][W]` plane into `s * s` subsampled planes so that
    /// strided kernel taps become contiguous reads.
    fn to_phases<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let (ph, pw) = self.phase_dims();
        let s = self.s;
        reuse(out, self.phase_len());
        for plane in 0..self.channels * self.batch {
            let src = &x[plane * self.h * self.w..(plane + 1) * self.h * self.w];
            for py in 0..s {
                for px in 0..s {
                    let base = ((plane * s + py) * s + px) * ph * pw;
                    for i in 0..ph {
                        let r = i * s + py;
                        if r >= self.h {
                            break;
                        }
                        let row = &src[r * self.w..(r + 1) * self.w];
                        let dst = &mut out[base + i * pw..base + (i + 1) * pw];
                        for (d, v) in dst.iter_mut().zip(row[px..].iter().step_by(s)) {
                            *d = *v;
                        }
                    }
                }
            }
        }
    }

    /// Inverse of [`ConvGeom::to_phases`].
    fn from_phases<T: Real>(&self, phases: &[T], x: &mut [T]) {
        let (ph, pw) = self.phase_dims();
        let s = self.s;
        for plane in 0..self.channels * self.batch {
            let dst = &mut x[plane * self.h * self.w..(plane + 1) * self.h * self.w];
            for py in 0..s {
                for px in 0..s {
                    let base = ((plane * s + py) * s + px) * ph * pw;
                    for i in 0..ph {
                        let r = i * s + py;
                        if r >= self.h {
                            break;
                        }
                        let row = &mut dst[r * self.w..(r + 1) * self.w];
                        let src = &phases[base + i * pw..base + (i + 1) * pw];
                        for (d, v) in row[px..].iter_mut().step_by(s).zip(src) {
                            *d = *v;
                        }
                    }
                }
            }
        }
    }

    /// Offset of kernel tap `(ki, kj)` for sample plane `plane` in the phase layout.
    fn tap_base(&self, plane: usize, ki: usize, kj: usize) -> usize {
        let (ph, pw) = self.phase_dims();
        let s = self.s;
        ((plane * s + ki % s) * s + kj % s) * ph * pw + (ki / s) * pw + kj / s
    }

    /// Fills `col` (`[C*k*k][count*oh*ow]`) for samples `first..first + count`
    /// from the phase layout.
    fn im2col<T: Real>(&self, phases: &[T], first: usize, count: usize, col: &mut [T]) {
        let (k, oh, ow) = (self.k, self.oh, self.ow);
        let pw = self.phase_dims().1;
        let n = count * oh * ow;
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut col[row * n..(row + 1) * n];
                    for bi in 0..count {
                        let base = self.tap_base(c * self.batch + first + bi, ki, kj);
                        for oy in 0..oh {
                            let src = &phases[base + oy * pw..base + oy * pw + ow];
                            dst[(bi * oh + oy) * ow..(bi * oh + oy + 1) * ow].copy_from_slice(src);
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds `col` back into a phase-layout gradient buffer.
    fn col2im<T: Real>(&self, col: &[T], first: usize, count: usize, phases: &mut [T]) {
        let (k, oh, ow) = (self.k, self.oh, self.ow);
        let pw = self.phase_dims().1;
        let n = count * oh * ow;
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &col[row * n..(row + 1) * n];
                    for bi in 0..count {
                        let base = self.tap_base(c * self.batch + first + bi, ki, kj);
                        for oy in 0..oh {
                            let d = &mut phases[base + oy * pw..base + oy * pw + ow];
                            for (d, v) in d.iter_mut().zip(&src[(bi * oh + oy) * ow..(bi * oh + oy + 1) * ow]) {
                                *d += *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        *x = x.relu();
    }
}

/// Zeroes `grad` wherever the forward activation was not positive.
fn relu_mask<T: Real>(grad: &mut [T], act: &[T]) {
    for (d, a) in grad.iter_mut().zip(act) {
        *d = if *a > T::ZERO { *d } else { T::ZERO };
    }
}

impl<T: Real> Network<T> {
    /// Runs the network on a `[1][B][H][W]` input batch.
    pub fn forward_batch(&self, input: Vec<T>, batch: usize) -> Result<ForwardPass<T>> {
        let mut pass = ForwardPass::new();
        pass.acts.push(input);
        self.run_forward(&mut pass, batch)?;
        Ok(pass)
    }

    /// Loads `images` into `pass` and runs the forward pass in place.
    pub fn forward_images(&self, pass: &mut ForwardPass<T>, images: &[&Image]) -> Result<()> {
        if pass.acts.is_empty() {
            pass.acts.push(Vec::new());
        }
        let (h, w) = (self.spec.input_height, self.spec.input_width);
        let lut: Vec<T> = (0..=255u8).map(|p| T::from_f64(normalize_pixel(p))).collect();
        let input = &mut pass.acts[0];
        input.clear();
        for img in images {
            if img.width != w || img.height != h || self.spec.input_channels != 1 {
                return Err(Error::ShapeMismatch {
                    expected: format!("{w}x{h} grayscale"),
                    found: format!("{}x{}", img.width, img.height),
                });
            }
            input.extend(img.pixels.iter().map(|&p| lut[p as usize]));
        }
        self.run_forward(pass, images.len())
    }

    fn run_forward(&self, pass: &mut ForwardPass<T>, batch: usize) -> Result<()> {
        let expected = batch * self.spec.input_channels * self.spec.input_height * self.spec.input_width;
        if pass.acts[0].len() != expected || batch == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} input values"),
                found: format!("{}", pass.acts[0].len()),
            });
        }
        pass.batch = batch;
        let n_layers = self.layers.len();
        pass.acts.resize_with(n_layers + 1, Vec::new);
        for (li, layer) in self.layers.iter().enumerate() {
            let (done, rest) = pass.acts.split_at_mut(li + 1);
            let x = &done[li];
            let out = &mut rest[0];
            match layer.shape {
                LayerShape::Conv {
                    out_channels,
                    out_height,
                    out_width,
                    ..
                } => {
                    let geom = ConvGeom::from_shape(layer.shape, batch).expect("conv layer");
                    let kk = geom.col_rows();
                    let p = geom.out_pixels();
                    let n = batch * p;
                    let flatten = matches!(self.layers.get(li + 1).map(|l| l.shape), Some(LayerShape::Dense { .. }));
                    // The flattened layout needs a separate buffer; reuse `next_delta` for it.
                    let y = if flatten { &mut pass.next_delta } else { &mut *out };
                    resize_only(y, out_channels * n);
                    let chunk = geom.chunk();
                    let col = &mut pass.col;
                    let src: &[T] = if geom.s > 1 {
                        geom.to_phases(x, &mut pass.phase);
                        &pass.phase
                    } else {
                        x
                    };
                    let mut first = 0;
                    while first < batch {
                        let count = chunk.min(batch - first);
                        let cn = count * p;
                        resize_only(col, kk * cn);
                        geom.im2col(src, first, count, col);
                        T::gemm(out_channels, kk, cn, T::ONE, &layer.weight, kk as isize, 1, col, cn as isize, 1, T::ZERO, &mut y[first * p..], n as isize, 1);
                        first += count;
                    }
                    for (co, row) in y.chunks_mut(n).enumerate() {
                        let b = layer.bias[co];
                        for v in row {
                            *v = (*v + b).relu();
                        }
                    }
                    if flatten {
                        // `[C][B][H][W]` -> `[C*H*W][B]` ahead of the dense stack.
                        let hw = out_height * out_width;
                        reuse(out, out_channels * hw * batch);
                        for c in 0..out_channels {
                            for b in 0..batch {
                                let src = &pass.next_delta[(c * batch + b) * hw..(c * batch + b + 1) * hw];
                                for (p, v) in src.iter().enumerate() {
                                    out[(c * hw + p) * batch + b] = *v;
                                }
                            }
                        }
                    }
                }
                LayerShape::Dense { inputs, outputs } => {
                    reuse(out, outputs * batch);
                    for (o, row) in out.chunks_mut(batch).enumerate() {
                        row.fill(layer.bias[o]);
                    }
                    T::gemm(outputs, inputs, batch, T::ONE, &layer.weight, inputs as isize, 1, x, batch as isize, 1, T::ONE, out, batch as isize, 1);
                    if li + 1 < n_layers {
                        relu_in_place(out);
                    }
                }
            }
        }
        Ok(())
    }

    /// Normalized steering predictions for a batch of images.
    pub fn predict(&self, images: &[&Image]) -> Result<Vec<f64>> {
        let mut pass = ForwardPass::new();
        self.predict_with(&mut pass, images)
    }

    /// [`Network::predict`] reusing the buffers of `pass`.
    pub fn predict_with(&self, pass: &mut ForwardPass<T>, images: &[&Image]) -> Result<Vec<f64>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        self.forward_images(pass, images)?;
        Ok(pass.predictions().iter().map(|v| v.to_f64()).collect())
    }

    /// Single-image prediction.
    pub fn forward(&self, image: &Image) -> Result<f64> {
        Ok(self.predict(&[image])?[0])
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.layers
            .iter()
            .map(|l| Layer {
                shape: l.shape,
                weight: vec![T::ZERO; l.weight.len()],
                bias: vec![T::ZERO; l.bias.len()],
            })
            .collect()
    }

    /// Mean squared error of `pass` against `labels` and its gradients.
    /// The loss is accumulated in `f64`.
    pub fn backward(&self, pass: &mut ForwardPass<T>, labels: &[f64]) -> Result<(f64, Gradients<T>)> {
        let mut grads = self.zero_gradients();
        let loss = self.backward_into(pass, labels, &mut grads)?;
        Ok((loss, grads))
    }

    /// [`Network::backward`] writing into existing gradient buffers.
    pub fn backward_into(&self, pass: &mut ForwardPass<T>, labels: &[f64], grads: &mut Gradients<T>) -> Result<f64> {
        let batch = pass.batch;
        if labels.len() != batch || pass.acts.len() != self.layers.len() + 1 {
            return Err(Error::ShapeMismatch {
                expected: format!("{batch} labels after a forward pass"),
                found: format!("{}", labels.len()),
            });
        }
        let ForwardPass {
            acts,
            col,
            phase,
            dcol_phase,
            delta,
            next_delta,
            dcol,
            ..
        } = pass;
        let mut loss = 0.0f64;
        delta.clear();
        for (p, y) in acts[self.layers.len()].iter().zip(labels) {
            let r = p.to_f64() - y;
            loss += r * r;
            delta.push(T::from_f64(2.0 * r / batch as f64));
        }
        loss /= batch as f64;

        let n_conv = self.spec.convs.len();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = &acts[li];
            let g = &mut grads[li];
            match layer.shape {
                LayerShape::Dense { inputs, outputs } => {
                    T::gemm(outputs, batch, inputs, T::ONE, delta, batch as isize, 1, x, 1, batch as isize, T::ZERO, &mut g.weight, inputs as isize, 1);
                    for (o, row) in delta.chunks(batch).enumerate() {
                        let mut s = T::ZERO;
                        for v in row {
                            s += *v;
                        }
                        g.bias[o] = s;
                    }
                    if li == 0 {
                        continue;
                    }
                    reuse(next_delta, inputs * batch);
                    T::gemm(inputs, outputs, batch, T::ONE, &layer.weight, 1, inputs as isize, delta, batch as isize, 1, T::ZERO, next_delta, batch as isize, 1);
                    relu_mask(next_delta, x);
                    if li == n_conv {
                        // Undo the flatten back to `[C][B][H][W]`.
                        if let LayerShape::Conv { out_channels, out_height, out_width, .. } = self.layers[li - 1].shape {
                            let hw = out_height * out_width;
                            reuse(delta, next_delta.len());
                            for c in 0..out_channels {
                                for b in 0..batch {
                                    for p in 0..hw {
                                        delta[(c * batch + b) * hw + p] = next_delta[(c * hw + p) * batch + b];
                                    }
                                }
                            }
                            continue;
                        }
                    }
                    std::mem::swap(delta, next_delta);
                }
                LayerShape::Conv {
                    in_channels,
                    out_channels,
                    in_height,
                    in_width,
                    ..
                } => {
                    let geom = ConvGeom::from_shape(layer.shape, batch).expect("conv layer");
                    let kk = geom.col_rows();
                    let p = geom.out_pixels();
                    let n = batch * p;
                    for (co, row) in delta.chunks(n).enumerate() {
                        let mut s = T::ZERO;
                        for v in row {
                            s += *v;
                        }
                        g.bias[co] = s;
                    }
                    if li > 0 {
                        reuse(next_delta, in_channels * batch * in_height * in_width);
                        if geom.s > 1 {
                            reuse(dcol_phase, geom.phase_len());
                        }
                    }
                    let src: &[T] = if geom.s > 1 {
                        geom.to_phases(x, phase);
                        phase
                    } else {
                        x
                    };
                    let chunk = geom.chunk();
                    let mut first = 0;
                    while first < batch {
                        let count = chunk.min(batch - first);
                        let cn = count * p;
                        resize_only(col, kk * cn);
                        geom.im2col(src, first, count, col);
                        let beta = if first == 0 { T::ZERO } else { T::ONE };
                        let dy = &delta[first * p..];
                        T::gemm(out_channels, cn, kk, T::ONE, dy, n as isize, 1, col, 1, cn as isize, beta, &mut g.weight, kk as isize, 1);
                        if li > 0 {
                            resize_only(dcol, kk * cn);
                            T::gemm(kk, out_channels, cn, T::ONE, &layer.weight, 1, kk as isize, dy, n as isize, 1, T::ZERO, dcol, cn as isize, 1);
                            let target = if geom.s > 1 { &mut *dcol_phase } else { &mut *next_delta };
                            geom.col2im(dcol, first, count, target);
                        }
                        first += count;
                    }
                    if li > 0 {
                        if geom.s > 1 {
                            geom.from_phases(dcol_phase, next_delta);
                        }
                        relu_mask(next_delta, x);
                        std::mem::swap(delta, next_delta);
                    }
                }
            }
        }
        Ok(loss)
    }

    /// Loss and gradients for a batch of `(image, normalized label)` pairs.
    pub fn backward_batch(&self, images: &[&Image], labels: &[f64]) -> Result<(f64, Gradients<T>)> {
        if images.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: "non-empty batch".into(),
                found: "0 samples".into(),
            });
        }
        let mut pass = ForwardPass::new();
        self.forward_images(&mut pass, images)?;
        self.backward(&mut pass, labels)
    }
}
