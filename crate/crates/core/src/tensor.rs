//! Dense row-major tensors, saliency maps and scan paths.
//!
//! Patch index convention shared by every module: `index = row * width + col`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

use crate::error::{dim_err, param_err, Error, Result};

/// Element types a [`Tensor`] may hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub trait Real: Float + FromPrimitive + NumAssign + Debug + Display + Default + Sum + Send + Sync + 'static {
    const DTYPE: Dtype;

    /// Converts an `f64` literal; every finite `f64` is representable (possibly rounded).
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("real to f64")
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

pub const MAX_RANK: usize = 4;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(dim_err!("rank {} outside 1..={MAX_RANK}", shape.len()));
    }
    if shape.contains(&0) {
        return Err(dim_err!("zero extent in shape {shape:?}"));
    }
    Ok(shape.iter().product())
}

/// Dense row-major tensor of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(dim_err!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// If `shape` is not a valid rank 1..=4 shape with positive extents.
    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = check_shape(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, T::one())
    }

    /// Builds a tensor from a function of the flat row-major index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = check_shape(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [a, b] => Ok((a, b)),
            _ => Err(dim_err!("expected rank 2, got shape {:?}", self.shape)),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(dim_err!("expected rank 3, got shape {:?}", self.shape)),
        }
    }

    pub fn expect_shape(&self, shape: &[usize], what: &str) -> Result<()> {
        if self.shape != shape {
            return Err(dim_err!("{what}: expected shape {shape:?}, got {:?}", self.shape));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err!(
                "elementwise op on shapes {:?} and {:?}",
                self.shape,
                other.shape
            ));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(dim_err!("comparing shapes {:?} and {:?}", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Rotates an `[H, W, C]` tensor by 180 degrees in the spatial plane.
    pub fn rot180(&self) -> Result<Self> {
        let (h, w, c) = self.dims3()?;
        let mut out = Self::zeros(&self.shape);
        for r in 0..h {
            for col in 0..w {
                let src = (r * w + col) * c;
                let dst = ((h - 1 - r) * w + (w - 1 - col)) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Ok(out)
    }
}

/// An `H x W` map with values in `[0, 1]` and a binarization threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    threshold: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

impl SaliencyMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(dim_err!("saliency map of size {height}x{width}"));
        }
        if values.len() != height * width {
            return Err(dim_err!("{height}x{width} map given {} values", values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(param_err!("saliency value {v} outside [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            values,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    /// Builds a map, clamping every value into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, values)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, values)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(param_err!("threshold {threshold} outside (0, 1)"));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn same_size(&self, other: &SaliencyMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// `[H, W, 1]` tensor view of the values.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: vec![self.height, self.width, 1],
            data: self.values.iter().map(|&v| T::lit(v)).collect(),
        }
    }

    /// Reads a single-channel `[H, W]` or `[H, W, 1]` tensor, clamping into `[0, 1]`.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (h, w) = match *t.shape() {
            [h, w] | [h, w, 1] => (h, w),
            _ => return Err(dim_err!("map tensor must be [H, W] or [H, W, 1], got {:?}", t.shape())),
        };
        Self::from_clamped(h, w, t.data().iter().map(|v| v.as_f64()).collect())
    }

    /// Nearest-neighbour resampling to `height x width`.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(dim_err!("resize target {height}x{width}"));
        }
        let values = (0..height * width)
            .map(|i| {
                let (r, c) = (i / width, i % width);
                let sr = (r * self.height / height).min(self.height - 1);
                let sc = (c * self.width / width).min(self.width - 1);
                self.values[sr * self.width + sc]
            })
            .collect();
        Ok(Self {
            height,
            width,
            values,
            threshold: self.threshold,
        })
    }
}

/// A permutation of the patch indices `0..H*W` defining a 2D to 1D order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanPath {
    height: usize,
    width: usize,
    order: Vec<usize>,
}

impl ScanPath {
    pub fn new(height: usize, width: usize, order: Vec<usize>) -> Result<Self> {
        let n = height * width;
        if n == 0 {
            return Err(dim_err!("scan path over {height}x{width} grid"));
        }
        if order.len() != n {
            return Err(Error::Integrity(format!(
                "path of length {} over {n} patches",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Integrity(format!("index {i} is out of range or repeated")));
            }
        }
        Ok(Self { height, width, order })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self { order, ..*self }
    }

    /// `inverse[index] = position` of that index along the path.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.order.len()];
        for (pos, &idx) in self.order.iter().enumerate() {
            inv[idx] = pos;
        }
        inv
    }
}
