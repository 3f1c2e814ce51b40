//! Dense 4-D tensors (N, C, H, W) of `f64` and the raw numeric kernels behind
//! the differentiable operations in [`crate::autograd`].
//!
//! Storage is row-major: the flat index of `(n, c, h, w)` is
//! `((n * C + c) * H + h) * W + w`.

pub(crate) mod kernels;

use std::fmt;

use crate::error::{shape_err, Result};

/// The four extents of a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn to_array(self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn from_array(a: [usize; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Flat offset of a coordinate.
    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`Shape::index`].
    pub fn coords(&self, flat: usize) -> (usize, usize, usize, usize) {
        let w = flat % self.w;
        let rest = flat / self.w;
        let h = rest % self.h;
        let rest = rest / self.h;
        let c = rest % self.c;
        (rest / self.c, c, h, w)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// A dense N×C×H×W array of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(shape_err!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(Shape::scalar(), value)
    }

    /// Builds a tensor by evaluating `f` at every coordinate.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(shape_err!("expected a scalar, got shape {}", self.shape))
        }
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.shape.index(n, c, h, w);
        self.data[i] = value;
    }

    /// Same data viewed with a different shape of equal element count.
    pub fn reshape(&self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("shape mismatch: {} vs {}", self.shape, other.shape));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.data.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// One batch entry as an `1×C×H×W` tensor.
    /// Per-pixel mean over channels, `N×1×H×W`.
    pub fn channel_mean(&self) -> Tensor {
        let s = self.shape;
        Tensor::from_fn(Shape::new(s.n, 1, s.h, s.w), |n, _, h, w| {
            (0..s.c).map(|c| self.get(n, c, h, w)).sum::<f64>() / s.c as f64
        })
    }

    pub fn sample(&self, n: usize) -> Tensor {
        let len = self.shape.c * self.shape.plane();
        Tensor {
            shape: Shape::new(1, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[n * len..(n + 1) * len].to_vec(),
        }
    }

    /// Concatenates tensors of equal C×H×W along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| shape_err!("cannot stack zero tensors"))?
            .shape;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        let mut n = 0;
        for t in items {
            if (t.shape.c, t.shape.h, t.shape.w) != (first.c, first.h, first.w) {
                return Err(shape_err!("cannot stack {} with {}", t.shape, first));
            }
            n += t.shape.n;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(Shape::new(n, first.c, first.h, first.w), data)
    }

    /// Plain (untracked) 2-D convolution; see [`crate::autograd::conv2d`].
    pub fn conv2d(&self, kern: &ConvKernel, stride: usize, padding: usize) -> Result<Tensor> {
        kernels::check_conv(self.shape, kern.weight.shape(), stride)?;
        if let Some(b) = &kern.bias {
            kernels::check_bias(b.shape(), kern.weight.shape())?;
        }
        Ok(kernels::conv2d_forward(
            self,
            &kern.weight,
            kern.bias.as_ref().map(|b| b.data()),
            stride,
            padding,
        ))
    }

    /// Mean of each 2×2 block; H and W must be even.
    pub fn avg_downsample2(&self) -> Result<Tensor> {
        kernels::check_even(self.shape)?;
        Ok(kernels::avg_down2_forward(self))
    }

    /// Doubles H and W with bilinear interpolation (half-pixel centers, clamped borders).
    pub fn upsample2_bilinear(&self) -> Tensor {
        kernels::upsample2_forward(self)
    }
}

/// Convolution weights `C_out×C_in×k×k` with an optional per-output-channel bias
/// stored as `1×C_out×1×1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl ConvKernel {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        kernels::check_kernel(weight.shape())?;
        if let Some(b) = &bias {
            kernels::check_bias(b.shape(), weight.shape())?;
        }
        Ok(Self { weight, bias })
    }

    /// Weights only, no bias.
    pub fn from_weights(weight: Tensor) -> Result<Self> {
        Self::new(weight, None)
    }

    pub fn size(&self) -> usize {
        self.weight.shape().h
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    /// Padding that preserves spatial extent at stride 1.
    pub fn same_padding(&self) -> usize {
        (self.size() - 1) / 2
    }

    /// `1×1` kernel whose centre tap is one for every matching channel pair.
    pub fn identity(channels: usize, k: usize) -> Result<Self> {
        let mut w = Tensor::zeros(Shape::new(channels, channels, k, k));
        for c in 0..channels {
            w.set(c, c, k / 2, k / 2, 1.0);
        }
        Self::from_weights(w)
    }
}


/// Neumaier-compensated sum. Loss and normalisation reductions go through it so
/// finite-difference probes of the loss are not swamped by rounding noise.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}
