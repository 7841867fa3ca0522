//! Neural primitives: linear maps, depthwise convolution, normalization,
//! activations, sliding-window pooling and the 2x2 pixel-shuffle expansion.
//!
//! Spatial tensors are `[H, W, C]`; sequences are `[L, C]`.

use rand::Rng;

use crate::error::{dim_err, param_err, Result};
use crate::tensor::{Real, Tensor};

fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..=bound)))
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

/// `ln(1 + e^x)`, evaluated without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

pub fn silu_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(silu)
}

pub fn sigmoid_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

pub fn relu_tensor<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(relu)
}

/// `y[l, :] = x[l, :] . weight + bias` over the last axis.
///
/// `x` may have any rank; all leading axes are treated as the row axis and
/// kept in the output shape.
pub fn linear_map<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (cin, cout) = weight.dims2()?;
    if x.last_dim() != cin {
        return Err(dim_err!(
            "linear_map: input has {} channels, weight expects {cin}",
            x.last_dim()
        ));
    }
    bias.expect_shape(&[cout], "linear_map bias")?;
    let rows = x.len() / cin;
    let w = weight.data();
    let mut out = Vec::with_capacity(rows * cout);
    for row in x.data().chunks_exact(cin) {
        let start = out.len();
        out.extend_from_slice(bias.data());
        let acc = &mut out[start..];
        for (i, &xi) in row.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (a, &wij) in acc.iter_mut().zip(&w[i * cout..(i + 1) * cout]) {
                *a += xi * wij;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = cout;
    Tensor::new(&shape, out)
}

/// Weight and bias of a dense projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (_, cout) = weight.dims2()?;
        bias.expect_shape(&[cout], "linear bias")?;
        Ok(Self { weight, bias })
    }

    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[cin, cout]),
            bias: Tensor::zeros(&[cout]),
        }
    }

    /// Weight and bias uniform in `+-1/sqrt(cin)`.
    pub fn random(cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (cin as f64).sqrt();
        Self {
            weight: uniform(&[cin, cout], bound, rng),
            bias: uniform(&[cout], bound, rng),
        }
    }

    pub fn identity(c: usize) -> Self {
        Self {
            weight: Tensor::from_fn(&[c, c], |i| if i / c == i % c { T::one() } else { T::zero() }),
            bias: Tensor::zeros(&[c]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        linear_map(x, &self.weight, &self.bias)
    }
}

/// Per-channel 3x3 cross-correlation with zero padding; output shape equals input shape.
pub fn depthwise_conv3x3<T: Real>(x: &Tensor<T>, kernels: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = x.dims3()?;
    kernels.expect_shape(&[3, 3, c], "depthwise kernels")?;
    let xd = x.data();
    let kd = kernels.data();
    let mut out = vec![T::zero(); x.len()];
    for r in 0..h {
        for col in 0..w {
            let dst = (r * w + col) * c;
            for ki in 0..3 {
                let rr = r as isize + ki as isize - 1;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                for kj in 0..3 {
                    let cc = col as isize + kj as isize - 1;
                    if cc < 0 || cc >= w as isize {
                        continue;
                    }
                    let src = (rr as usize * w + cc as usize) * c;
                    let k = &kd[(ki * 3 + kj) * c..(ki * 3 + kj + 1) * c];
                    for ch in 0..c {
                        out[dst + ch] += k[ch] * xd[src + ch];
                    }
                }
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Depthwise kernels uniform in `+-1/3`.
pub fn random_kernels<T: Real>(c: usize, rng: &mut impl Rng) -> Tensor<T> {
    uniform(&[3, 3, c], 1.0 / 3.0, rng)
}

/// The 3x3 kernel bank whose centre tap is one: the identity convolution.
pub fn delta_kernels<T: Real>(c: usize) -> Tensor<T> {
    Tensor::from_fn(&[3, 3, c], |i| if i / c == 4 { T::one() } else { T::zero() })
}

/// Depthwise 3x3 followed by a pointwise projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DsConv<T> {
    pub depthwise: Tensor<T>,
    pub pointwise: Linear<T>,
}

impl<T: Real> DsConv<T> {
    pub fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            depthwise: Tensor::zeros(&[3, 3, cin]),
            pointwise: Linear::zeros(cin, cout),
        }
    }

    pub fn random(cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Self {
            depthwise: uniform(&[3, 3, cin], 1.0 / 3.0, rng),
            pointwise: Linear::random(cin, cout, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.pointwise.forward(&depthwise_conv3x3(x, &self.depthwise)?)
    }
}

/// Normalizes over the last axis, then applies `gamma * x_hat + beta`.
pub fn layer_norm<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let c = x.last_dim();
    gamma.expect_shape(&[c], "layer_norm gamma")?;
    beta.expect_shape(&[c], "layer_norm beta")?;
    let n = T::lit(c as f64);
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        out.extend(
            row.iter()
                .zip(gamma.data().iter().zip(beta.data()))
                .map(|(&v, (&g, &b))| (v - mean) * inv * g + b),
        );
    }
    Tensor::new(x.shape(), out)
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[c]),
            beta: Tensor::zeros(&[c]),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        layer_norm(x, &self.gamma, &self.beta, T::lit(LN_EPS))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Min,
    Avg,
}

/// Sliding-window statistic with stride 1 and "same" output size.
///
/// Max/min use replicate padding, which is the same as clipping the window to
/// the image. Avg divides by the number of in-image cells.
pub fn pool2d<T: Real>(x: &Tensor<T>, k: usize, mode: PoolMode) -> Result<Tensor<T>> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(param_err!("pool2d window {k} must be odd and positive"));
    }
    window_reduce(x, k, mode)
}

/// Box mean over a `k x k` window of any size `k >= 1`.
///
/// The window covers rows `r - (k-1)/2 ..= r + k/2` (and likewise for
/// columns), so an even window reaches one cell further down/right. For odd
/// `k` this is identical to [`pool2d`] in [`PoolMode::Avg`].
pub fn box_mean<T: Real>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    if k == 0 {
        return Err(param_err!("box_mean window must be positive"));
    }
    window_reduce(x, k, PoolMode::Avg)
}

fn window_reduce<T: Real>(x: &Tensor<T>, k: usize, mode: PoolMode) -> Result<Tensor<T>> {
    let (h, w, c) = x.dims3()?;
    let before = (k - 1) / 2;
    let after = k / 2;
    let combine = |a: T, b: T| match mode {
        PoolMode::Max => a.max(b),
        PoolMode::Min => a.min(b),
        PoolMode::Avg => a + b,
    };
    // horizontal pass then vertical pass over clipped windows
    let mut horiz = vec![T::zero(); x.len()];
    let xd = x.data();
    for r in 0..h {
        for col in 0..w {
            let lo = col.saturating_sub(before);
            let hi = (col + after).min(w - 1);
            for ch in 0..c {
                let mut acc = xd[(r * w + lo) * c + ch];
                for cc in lo + 1..=hi {
                    acc = combine(acc, xd[(r * w + cc) * c + ch]);
                }
                horiz[(r * w + col) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![T::zero(); x.len()];
    for r in 0..h {
        let lo = r.saturating_sub(before);
        let hi = (r + after).min(h - 1);
        for col in 0..w {
            let count = (hi - lo + 1) * ((col + after).min(w - 1) - col.saturating_sub(before) + 1);
            for ch in 0..c {
                let mut acc = horiz[(lo * w + col) * c + ch];
                for rr in lo + 1..=hi {
                    acc = combine(acc, horiz[(rr * w + col) * c + ch]);
                }
                if mode == PoolMode::Avg {
                    acc /= T::lit(count as f64);
                }
                out[(r * w + col) * c + ch] = acc;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Rearranges `[H*W, 4c]` into `[2H*2W, c]`: each row becomes a 2x2 block of
/// the doubled grid. Channel `(p1 * 2 + p2) * c + k` of row `(r, col)` lands
/// at output row `(2r + p1) * 2W + (2col + p2)`, channel `k`.
pub fn pixel_shuffle_expand<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let (l, c4) = x.dims2()?;
    if l != height * width {
        return Err(dim_err!("pixel_shuffle_expand: {l} rows for a {height}x{width} grid"));
    }
    if c4 % 4 != 0 {
        return Err(param_err!("pixel_shuffle_expand: {c4} channels not divisible by 4"));
    }
    let c = c4 / 4;
    let xd = x.data();
    let mut out = vec![T::zero(); x.len()];
    let w2 = 2 * width;
    for r in 0..height {
        for col in 0..width {
            let src = (r * width + col) * c4;
            for p1 in 0..2 {
                for p2 in 0..2 {
                    let dst = ((2 * r + p1) * w2 + 2 * col + p2) * c;
                    let off = src + (p1 * 2 + p2) * c;
                    out[dst..dst + c].copy_from_slice(&xd[off..off + c]);
                }
            }
        }
    }
    Tensor::new(&[4 * l, c], out)
}

/// Inverse of [`pixel_shuffle_expand`]: `[2H*2W, c]` back to `[H*W, 4c]`.
pub fn pixel_shuffle_collapse<T: Real>(x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let (l4, c) = x.dims2()?;
    if l4 != 4 * height * width {
        return Err(dim_err!(
            "pixel_shuffle_collapse: {l4} rows for a {height}x{width} grid"
        ));
    }
    let xd = x.data();
    let mut out = vec![T::zero(); x.len()];
    let w2 = 2 * width;
    for r in 0..height {
        for col in 0..width {
            let dst = (r * width + col) * 4 * c;
            for p1 in 0..2 {
                for p2 in 0..2 {
                    let src = ((2 * r + p1) * w2 + 2 * col + p2) * c;
                    let off = dst + (p1 * 2 + p2) * c;
                    out[off..off + c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
    }
    Tensor::new(&[height * width, 4 * c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_and_zero_cases() {
        let x = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, -1.0]);
        let id = Linear::<f64>::identity(3);
        assert_eq!(id.forward(&x).unwrap(), x);
        let b = t(&[2], &[0.25, -4.0]);
        let y = linear_map(&Tensor::zeros(&[3, 3]), &t(&[3, 2], &[1.0; 6]), &b).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn linear_hand_multiplied() {
        // x (3x2) . w (2x2) + b, worked out by hand
        let x = t(&[3, 2], &[0.5, -1.0, 2.0, 0.25, -1.5, 3.0]);
        let w = t(&[2, 2], &[1.0, 2.0, -0.5, 4.0]);
        let b = t(&[2], &[0.1, -0.2]);
        let y = linear_map(&x, &w, &b).unwrap();
        let expected = [
            0.5 * 1.0 + (-1.0) * -0.5 + 0.1,
            0.5 * 2.0 + (-1.0) * 4.0 - 0.2,
            2.0 * 1.0 + 0.25 * -0.5 + 0.1,
            2.0 * 2.0 + 0.25 * 4.0 - 0.2,
            -1.5 * 1.0 + 3.0 * -0.5 + 0.1,
            -1.5 * 2.0 + 3.0 * 4.0 - 0.2,
        ];
        let by_hand = [1.1, -3.2, 1.975, 4.8, -2.9, 8.8];
        for ((a, e), h) in y.data().iter().zip(expected).zip(by_hand) {
            assert!((a - e).abs() < 1e-12);
            assert!((a - h).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_shape_mismatch() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        assert!(linear_map(&x, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2])).is_err());
        assert!(linear_map(&x, &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn dwconv_delta_and_constant() {
        let x = Tensor::<f64>::from_fn(&[3, 4, 2], |i| (i as f64).sin());
        assert_eq!(depthwise_conv3x3(&x, &delta_kernels(2)).unwrap(), x);

        let c = Tensor::<f64>::filled(&[4, 4, 1], 2.0);
        let y = depthwise_conv3x3(&c, &Tensor::ones(&[3, 3, 1])).unwrap();
        assert_eq!(y.data()[0], 8.0); // corner: 4 * c
        assert_eq!(y.data()[5], 18.0); // interior: 9 * c
        assert_eq!(y.data()[1], 12.0); // edge: 6 * c
    }

    #[test]
    fn dwconv_matches_direct_loop() {
        let x = Tensor::<f64>::from_fn(&[4, 4, 1], |i| ((i * 7 + 3) % 11) as f64 - 5.0);
        let k = Tensor::<f64>::from_fn(&[3, 3, 1], |i| i as f64 * 0.5 - 2.0);
        let y = depthwise_conv3x3(&x, &k).unwrap();
        let px = |r: i32, c: i32| {
            if (0..4).contains(&r) && (0..4).contains(&c) {
                x.data()[(r * 4 + c) as usize]
            } else {
                0.0
            }
        };
        for r in 0..4 {
            for c in 0..4 {
                let mut acc = 0.0;
                for i in -1..=1 {
                    for j in -1..=1 {
                        acc += k.data()[((i + 1) * 3 + j + 1) as usize] * px(r + i, c + j);
                    }
                }
                assert_eq!(y.data()[(r * 4 + c) as usize], acc);
            }
        }
    }

    #[test]
    fn layer_norm_cases() {
        let g = Tensor::<f64>::ones(&[3]);
        let b = Tensor::<f64>::zeros(&[3]);
        let y = layer_norm(&t(&[3], &[5.0, 5.0, 5.0]), &g, &b, 1e-5).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));

        let g2 = Tensor::<f64>::ones(&[2]);
        let y = layer_norm(&t(&[2], &[1.0, -1.0]), &g2, &Tensor::zeros(&[2]), 1e-12).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-9 && (y.data()[1] + 1.0).abs() < 1e-9);

        // two-pass statistics computed independently
        let v = [0.3, -1.2, 4.5, 2.0, 0.0];
        let mean: f64 = v.iter().sum::<f64>() / 5.0;
        let var: f64 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        let gamma = t(&[5], &[1.0, 2.0, 0.5, -1.0, 1.0]);
        let beta = t(&[5], &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let y = layer_norm(&t(&[5], &v), &gamma, &beta, 1e-5).unwrap();
        for i in 0..5 {
            let e = (v[i] - mean) / (var + 1e-5).sqrt() * gamma.data()[i] + beta.data()[i];
            assert!((y.data()[i] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0f64), 0.0);
        assert!((silu(40.0f64) - 40.0).abs() < 1e-12);
        assert!((silu(1.0f64) - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((silu(1.0f32) - 0.731_059).abs() < 1e-6);
        assert!(sigmoid(-800.0f64) >= 0.0 && sigmoid(800.0f64) == 1.0);
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(50.0f64), 50.0);
    }

    #[test]
    fn pool_cases() {
        let x = Tensor::<f64>::from_fn(&[3, 4, 2], |i| (i as f64 * 1.3).cos());
        for mode in [PoolMode::Max, PoolMode::Min, PoolMode::Avg] {
            assert_eq!(pool2d(&x, 1, mode).unwrap(), x);
            let c = Tensor::<f64>::filled(&[5, 6, 1], 0.37);
            for k in [1, 3, 5, 7, 9, 31] {
                let y = pool2d(&c, k, mode).unwrap();
                assert!(y.data().iter().all(|v| (v - 0.37).abs() < 1e-15));
            }
            assert!(pool2d(&x, 2, mode).is_err());
        }
        let mut one = Tensor::<f64>::zeros(&[3, 3, 1]);
        one.data_mut()[4] = 1.0;
        assert!(pool2d(&one, 3, PoolMode::Max).unwrap().data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn pool_matches_window_enumeration() {
        let x = Tensor::<f64>::from_fn(&[5, 4, 1], |i| ((i * 13) % 7) as f64);
        for k in [3, 5] {
            let h = (k / 2) as i32;
            let mx = pool2d(&x, k, PoolMode::Max).unwrap();
            let av = pool2d(&x, k, PoolMode::Avg).unwrap();
            for r in 0..5i32 {
                for c in 0..4i32 {
                    let mut vals = vec![];
                    for i in -h..=h {
                        for j in -h..=h {
                            let (rr, cc) = (r + i, c + j);
                            if (0..5).contains(&rr) && (0..4).contains(&cc) {
                                vals.push(x.data()[(rr * 4 + cc) as usize]);
                            }
                        }
                    }
                    let m = vals.iter().cloned().fold(f64::MIN, f64::max);
                    let a = vals.iter().sum::<f64>() / vals.len() as f64;
                    assert_eq!(mx.data()[(r * 4 + c) as usize], m);
                    assert!((av.data()[(r * 4 + c) as usize] - a).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn box_mean_even_window() {
        let mut x = Tensor::<f64>::zeros(&[4, 4, 1]);
        x.data_mut()[0] = 1.0;
        // window of 2 covers (r..=r+1, c..=c+1)
        let y = box_mean(&x, 2).unwrap();
        assert_eq!(y.data()[0], 0.25);
        assert_eq!(y.data()[1], 0.0);
        let x3 = Tensor::<f64>::from_fn(&[3, 5, 2], |i| i as f64);
        assert_eq!(box_mean(&x3, 3).unwrap(), pool2d(&x3, 3, PoolMode::Avg).unwrap());
    }

    #[test]
    fn pixel_shuffle_block_order() {
        let x = t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let y = pixel_shuffle_expand(&x, 1, 1).unwrap();
        assert_eq!(y.shape(), &[4, 1]);
        // top-left, top-right, bottom-left, bottom-right
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);

        // 1x2 grid, c = 1: blocks land side by side on a 2x4 grid
        let x = t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = pixel_shuffle_expand(&x, 1, 2).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);

        assert!(pixel_shuffle_expand(&Tensor::<f64>::zeros(&[1, 6]), 1, 1).is_err());
        let z = pixel_shuffle_expand(&Tensor::<f64>::zeros(&[6, 8]), 2, 3).unwrap();
        assert!(z.data().iter().all(|v| *v == 0.0));
    }

    proptest! {
        #[test]
        fn pixel_shuffle_round_trip(h in 1usize..5, w in 1usize..5, c in 1usize..4, seed in any::<u64>()) {
            let x = Tensor::<f64>::from_fn(&[h * w, 4 * c], |i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64);
            let y = pixel_shuffle_expand(&x, h, w).unwrap();
            let mut a = x.data().to_vec();
            let mut b = y.data().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            prop_assert_eq!(pixel_shuffle_collapse(&y, h, w).unwrap(), x);
        }

        #[test]
        fn linear_is_additive_and_homogeneous(
            xs in proptest::collection::vec(-2.0f32..2.0, 6),
            ys in proptest::collection::vec(-2.0f32..2.0, 6),
            ws in proptest::collection::vec(-2.0f32..2.0, 6),
            alpha in -3.0f32..3.0,
        ) {
            let x = Tensor::new(&[2, 3], xs).unwrap();
            let y = Tensor::new(&[2, 3], ys).unwrap();
            let w = Tensor::new(&[3, 2], ws).unwrap();
            let zb = Tensor::zeros(&[2]);
            let f = |v: &Tensor<f32>| linear_map(v, &w, &zb).unwrap();
            let lhs = f(&x.add(&y).unwrap());
            let rhs = f(&x).add(&f(&y)).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-5);
            let lhs = f(&x.scale(alpha));
            let rhs = f(&x).scale(alpha);
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-5);
        }

        #[test]
        fn delta_conv_is_identity(h in 1usize..6, w in 1usize..6, c in 1usize..4, s in any::<u32>()) {
            let x = Tensor::<f32>::from_fn(&[h, w, c], |i| ((i as u32 ^ s) % 97) as f32 - 48.0);
            prop_assert_eq!(depthwise_conv3x3(&x, &delta_kernels(c)).unwrap(), x);
        }
    }
}
