use rand::Rng;

use super::{parallel_scan, recurrence_seq, SsmParams};
use crate::error::{dim_err, Result};
use crate::nn::{softplus, Linear};
use crate::tensor::{Real, Tensor};

/// Input-dependent projections: `B_k = x_k W_B`, `C_k = x_k W_C`,
/// `delta_k = softplus(x_k W_delta + b_delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveProj<T> {
    /// `D -> N`
    pub b: Linear<T>,
    /// `D -> N`
    pub c: Linear<T>,
    /// `D -> D`
    pub delta: Linear<T>,
}

/// Per-step parameters produced by [`s6_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveParams<T> {
    /// `[L, N]`
    pub b: Tensor<T>,
    /// `[L, N]`
    pub c: Tensor<T>,
    /// `[L, D]`, positive
    pub delta: Tensor<T>,
}

impl<T: Real> SelectiveParams<T> {
    pub fn into_params(self, a: Tensor<T>, d_skip: Tensor<T>) -> Result<SsmParams<T>> {
        SsmParams::new(a, self.b, self.c, d_skip, self.delta)
    }
}

pub fn s6_project<T: Real>(x: &Tensor<T>, proj: &SelectiveProj<T>) -> Result<SelectiveParams<T>> {
    let (_, d) = x.dims2()?;
    if proj.delta.out_dim() != d {
        return Err(dim_err!(
            "delta projection yields {} channels, input has {d}",
            proj.delta.out_dim()
        ));
    }
    Ok(SelectiveParams {
        b: proj.b.forward(x)?,
        c: proj.c.forward(x)?,
        delta: proj.delta.forward(x)?.map(softplus),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanKernel {
    #[default]
    Sequential,
    Parallel,
}

/// Weights of one selective SSM: diagonal `a` (`[D, N]`), skip `d_skip`
/// (`[D]`) and the selective projections.
#[derive(Debug, Clone, PartialEq)]
pub struct S6Weights<T> {
    pub a: Tensor<T>,
    pub d_skip: Tensor<T>,
    pub proj: SelectiveProj<T>,
}

impl<T: Real> S6Weights<T> {
    /// All projections and the skip are zero, so the output is identically zero.
    pub fn inert(d: usize, n: usize) -> Self {
        Self {
            a: Tensor::filled(&[d, n], -T::one()),
            d_skip: Tensor::zeros(&[d]),
            proj: SelectiveProj {
                b: Linear::zeros(d, n),
                c: Linear::zeros(d, n),
                delta: Linear::zeros(d, d),
            },
        }
    }

    /// Standard selective-SSM initialisation: `A[d, n] = -(n + 1)`, unit skip,
    /// projections uniform in `+-1/sqrt(D)` and a delta bias placing
    /// `softplus(bias)` log-uniformly in `[1e-3, 1e-1]`.
    pub fn random(d: usize, n: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (d as f64).sqrt();
        let mut uniform = |shape: &[usize]| Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-scale..scale)));
        let b = Linear {
            weight: uniform(&[d, n]),
            bias: Tensor::zeros(&[n]),
        };
        let c = Linear {
            weight: uniform(&[d, n]),
            bias: Tensor::zeros(&[n]),
        };
        let delta_w = uniform(&[d, d]);
        let delta_bias = Tensor::from_fn(&[d], |_| {
            let dt: f64 = (rng.gen_range(1e-3f64.ln()..1e-1f64.ln())).exp();
            // inverse softplus
            T::lit(dt + (-(-dt).exp_m1()).ln())
        });
        Self {
            a: Tensor::from_fn(&[d, n], |i| T::lit(-((i % n) as f64 + 1.0))),
            d_skip: Tensor::ones(&[d]),
            proj: SelectiveProj {
                b,
                c,
                delta: Linear {
                    weight: delta_w,
                    bias: delta_bias,
                },
            },
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a.shape()[0], self.a.shape()[1])
    }
}

/// `s6_project -> zoh_discretize -> scan` with a zero initial state.
pub fn s6_forward<T: Real>(x: &Tensor<T>, w: &S6Weights<T>) -> Result<Tensor<T>> {
    s6_forward_with(x, w, ScanKernel::Sequential)
}

pub fn s6_forward_with<T: Real>(x: &Tensor<T>, w: &S6Weights<T>, kernel: ScanKernel) -> Result<Tensor<T>> {
    let params = s6_project(x, &w.proj)?.into_params(w.a.clone(), w.d_skip.clone())?;
    let disc = params.discretize()?;
    let (_, d, n) = params.dims();
    let h0 = Tensor::zeros(&[d, n]);
    let (y, _) = match kernel {
        ScanKernel::Sequential => recurrence_seq(&disc, x, &h0)?,
        ScanKernel::Parallel => parallel_scan(&disc, x, &h0)?,
    };
    Ok(y)
}
