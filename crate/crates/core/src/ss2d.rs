//! Four-direction selective scanning over `[H, W, C]` feature maps, and the
//! blocks built on it: the VSS block, its saliency-guided variant (SGMB),
//! channel attention and the VSS decoder layer.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{dim_err, Error, Result};
use crate::nn::{depthwise_conv3x3, random_kernels, relu_tensor, sigmoid, silu_tensor, LayerNorm, Linear};
use crate::scan_order::{apply_path, binarize, invert_path, sns_path_bundle, PathBundle};
use crate::ssm::{s6_forward_with, S6Weights, ScanKernel};
use crate::tensor::{Real, SaliencyMap, Tensor};

pub const DEFAULT_EXPANSION: usize = 2;
pub const DEFAULT_STATE: usize = 16;

/// One selective SSM per scan direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Ss2dWeights<T> {
    pub directions: [S6Weights<T>; 4],
    pub kernel: ScanKernel,
}

impl<T: Real> Ss2dWeights<T> {
    pub fn new(directions: [S6Weights<T>; 4]) -> Result<Self> {
        let dims = directions[0].dims();
        if directions.iter().any(|d| d.dims() != dims) {
            return Err(dim_err!("direction bundles disagree on (D, N)"));
        }
        Ok(Self {
            directions,
            kernel: ScanKernel::Sequential,
        })
    }

    /// The same SSM in all four directions.
    pub fn tied(w: S6Weights<T>) -> Self {
        Self {
            directions: [w.clone(), w.clone(), w.clone(), w],
            kernel: ScanKernel::Sequential,
        }
    }

    pub fn inert(d: usize, n: usize) -> Self {
        Self::tied(S6Weights::inert(d, n))
    }

    pub fn random(d: usize, n: usize, rng: &mut impl Rng) -> Self {
        Self {
            directions: std::array::from_fn(|_| S6Weights::random(d, n, rng)),
            kernel: ScanKernel::Sequential,
        }
    }

    pub fn with_kernel(mut self, kernel: ScanKernel) -> Self {
        self.kernel = kernel;
        self
    }

    /// `(D, N)`.
    pub fn dims(&self) -> (usize, usize) {
        self.directions[0].dims()
    }
}

fn scan_bundle<T: Real>(x: &Tensor<T>, bundle: &PathBundle, w: &Ss2dWeights<T>) -> Result<Tensor<T>> {
    let (h, wd, c) = x.dims3()?;
    if (bundle.height(), bundle.width()) != (h, wd) {
        return Err(dim_err!(
            "bundle over {}x{} applied to {h}x{wd} features",
            bundle.height(),
            bundle.width()
        ));
    }
    if w.dims().0 != c {
        return Err(dim_err!("SS2D weights expect {} channels, got {c}", w.dims().0));
    }
    let outputs: Vec<Tensor<T>> = bundle
        .paths()
        .par_iter()
        .zip(w.directions.par_iter())
        .map(|(path, dir)| {
            let seq = apply_path(x, path)?;
            invert_path(&s6_forward_with(&seq, dir, w.kernel)?, path)
        })
        .collect::<Result<_>>()?;
    let mut sum = outputs[0].clone();
    for o in &outputs[1..] {
        sum = sum.add(o)?;
    }
    Ok(sum)
}

/// Scans raster, reversed raster, column-major and reversed column-major,
/// maps each result back onto the grid and sums them in that order.
pub fn ss2d_forward<T: Real>(x: &Tensor<T>, w: &Ss2dWeights<T>) -> Result<Tensor<T>> {
    let (h, wd, _) = x.dims3()?;
    scan_bundle(x, &PathBundle::ss2d_directions(h, wd)?, w)
}

/// [`ss2d_forward`] with the fixed directions replaced by `bundle`.
pub fn sg_ss2d_forward<T: Real>(x: &Tensor<T>, bundle: &PathBundle, w: &Ss2dWeights<T>) -> Result<Tensor<T>> {
    scan_bundle(x, bundle, w)
}

/// Weights of a VSS block with input width `C` and hidden width `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct VssWeights<T> {
    pub norm_in: LayerNorm<T>,
    /// `C -> E`, first flow
    pub in_proj: Linear<T>,
    /// `[3, 3, E]`
    pub dwconv: Tensor<T>,
    pub ss2d: Ss2dWeights<T>,
    pub norm_out: LayerNorm<T>,
    /// `C -> E`, second flow
    pub gate_proj: Linear<T>,
    /// `E -> C`
    pub out_proj: Linear<T>,
}

impl<T: Real> VssWeights<T> {
    /// All projections zero; the block is then the identity.
    pub fn zeros(c: usize, expansion: usize, n: usize) -> Self {
        let e = c * expansion;
        Self {
            norm_in: LayerNorm::new(c),
            in_proj: Linear::zeros(c, e),
            dwconv: Tensor::zeros(&[3, 3, e]),
            ss2d: Ss2dWeights::inert(e, n),
            norm_out: LayerNorm::new(e),
            gate_proj: Linear::zeros(c, e),
            out_proj: Linear::zeros(e, c),
        }
    }

    pub fn random(c: usize, expansion: usize, n: usize, rng: &mut impl Rng) -> Self {
        let e = c * expansion;
        Self {
            norm_in: LayerNorm::new(c),
            in_proj: Linear::random(c, e, rng),
            dwconv: random_kernels(e, rng),
            ss2d: Ss2dWeights::random(e, n, rng),
            norm_out: LayerNorm::new(e),
            gate_proj: Linear::random(c, e, rng),
            out_proj: Linear::random(e, c, rng),
        }
    }
}

fn vss_with<T: Real>(
    x: &Tensor<T>,
    w: &VssWeights<T>,
    scan: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    x.dims3()?;
    let normed = w.norm_in.forward(x)?;
    let flow1 = silu_tensor(&depthwise_conv3x3(&w.in_proj.forward(&normed)?, &w.dwconv)?);
    let flow1 = w.norm_out.forward(&scan(&flow1)?)?;
    let flow2 = silu_tensor(&w.gate_proj.forward(&normed)?);
    x.add(&w.out_proj.forward(&flow1.mul(&flow2)?)?)
}

pub fn vss_block<T: Real>(x: &Tensor<T>, w: &VssWeights<T>) -> Result<Tensor<T>> {
    vss_with(x, w, |f| ss2d_forward(f, &w.ss2d))
}

/// A VSS block whose inner scan follows `bundle`.
pub fn vss_block_with_paths<T: Real>(x: &Tensor<T>, bundle: &PathBundle, w: &VssWeights<T>) -> Result<Tensor<T>> {
    vss_with(x, w, |f| sg_ss2d_forward(f, bundle, &w.ss2d))
}

/// Saliency-guided block: the coarse map is resized to the feature grid by
/// nearest neighbour, binarized at its threshold, and the resulting
/// neighbour-scan bundle drives the inner scan.
pub fn sgmb<T: Real>(x: &Tensor<T>, coarse: &SaliencyMap, w: &VssWeights<T>) -> Result<Tensor<T>> {
    let (h, wd, _) = x.dims3()?;
    let resized = coarse.resize_nearest(h, wd)?;
    let mask = binarize(&resized, resized.threshold())?;
    vss_block_with_paths(x, &sns_path_bundle(&mask)?, w)
}

/// Squeeze-and-excitation gate weights: `C -> C/r -> C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CamWeights<T> {
    pub squeeze: Linear<T>,
    pub excite: Linear<T>,
}

fn check_reduction(c: usize, reduction: usize) -> Result<usize> {
    if reduction == 0 || !c.is_multiple_of(reduction) {
        return Err(Error::Parameter(format!(
            "{c} channels not divisible by reduction {reduction}"
        )));
    }
    Ok(c / reduction)
}

impl<T: Real> CamWeights<T> {
    pub fn new(squeeze: Linear<T>, excite: Linear<T>) -> Result<Self> {
        if squeeze.out_dim() != excite.in_dim() || squeeze.in_dim() != excite.out_dim() {
            return Err(dim_err!("channel attention layers do not chain"));
        }
        Ok(Self { squeeze, excite })
    }

    pub fn zeros(c: usize, reduction: usize) -> Result<Self> {
        let r = check_reduction(c, reduction)?;
        Ok(Self {
            squeeze: Linear::zeros(c, r),
            excite: Linear::zeros(r, c),
        })
    }

    pub fn random(c: usize, reduction: usize, rng: &mut impl Rng) -> Result<Self> {
        let r = check_reduction(c, reduction)?;
        Ok(Self {
            squeeze: Linear::random(c, r, rng),
            excite: Linear::random(r, c, rng),
        })
    }
}

/// Per-channel gate from the spatial mean, applied multiplicatively.
pub fn channel_attention<T: Real>(x: &Tensor<T>, w: &CamWeights<T>) -> Result<Tensor<T>> {
    let (h, wd, c) = x.dims3()?;
    if w.squeeze.in_dim() != c {
        return Err(dim_err!(
            "channel attention expects {} channels, got {c}",
            w.squeeze.in_dim()
        ));
    }
    let count = T::lit((h * wd) as f64);
    let mut mean = vec![T::zero(); c];
    for px in x.data().chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += *v;
        }
    }
    let squeezed = Tensor::new(&[1, c], mean.into_iter().map(|m| m / count).collect())?;
    let gate = w.excite.forward(&relu_tensor(&w.squeeze.forward(&squeezed)?))?;
    let gate: Vec<T> = gate.data().iter().map(|g| sigmoid(*g)).collect();
    Ok(Tensor::from_fn(x.shape(), |i| x.data()[i] * gate[i % c]))
}

/// Weights of a VSS decoder layer with input width `C` and hidden width `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights<T> {
    pub norm_in: LayerNorm<T>,
    /// `C -> E`
    pub in_proj: Linear<T>,
    /// `[3, 3, E]`
    pub dwconv: Tensor<T>,
    pub ss2d: Ss2dWeights<T>,
    pub cam: CamWeights<T>,
    pub norm_out: LayerNorm<T>,
    /// `E -> C`
    pub out_proj: Linear<T>,
}

impl<T: Real> DecoderWeights<T> {
    pub fn zeros(c: usize, expansion: usize, n: usize, reduction: usize) -> Result<Self> {
        let e = c * expansion;
        Ok(Self {
            norm_in: LayerNorm::new(c),
            in_proj: Linear::zeros(c, e),
            dwconv: Tensor::zeros(&[3, 3, e]),
            ss2d: Ss2dWeights::inert(e, n),
            cam: CamWeights::zeros(e, reduction)?,
            norm_out: LayerNorm::new(e),
            out_proj: Linear::zeros(e, c),
        })
    }

    pub fn random(c: usize, expansion: usize, n: usize, reduction: usize, rng: &mut impl Rng) -> Result<Self> {
        let e = c * expansion;
        Ok(Self {
            norm_in: LayerNorm::new(c),
            in_proj: Linear::random(c, e, rng),
            dwconv: random_kernels(e, rng),
            ss2d: Ss2dWeights::random(e, n, rng),
            cam: CamWeights::random(e, reduction, rng)?,
            norm_out: LayerNorm::new(e),
            out_proj: Linear::random(e, c, rng),
        })
    }
}

/// `x + Linear(LN(CAM(SS2D(DWConv(Linear(LN(x)))))))`.
pub fn vss_decoder_layer<T: Real>(x: &Tensor<T>, w: &DecoderWeights<T>) -> Result<Tensor<T>> {
    let y = depthwise_conv3x3(&w.in_proj.forward(&w.norm_in.forward(x)?)?, &w.dwconv)?;
    let y = channel_attention(&ss2d_forward(&y, &w.ss2d)?, &w.cam)?;
    x.add(&w.out_proj.forward(&w.norm_out.forward(&y)?)?)
}
