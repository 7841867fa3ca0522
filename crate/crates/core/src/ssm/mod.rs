//! Diagonal state-space model kernels.
//!
//! Each channel `d` carries `N` independent scalar states. With discretized
//! parameters the recurrence is
//!
//! ```text
//! h_k[d, n] = Abar_k[d, n] * h_{k-1}[d, n] + Bbar_k[d, n] * x_k[d]
//! y_k[d]    = sum_n C_k[n] * h_k[d, n] + Dskip[d] * x_k[d]
//! ```
//!
//! [`recurrence_seq`] evaluates it step by step; [`parallel_scan`] evaluates
//! the same recurrence as an associative prefix scan; [`ssm_backward`] is its
//! adjoint.

mod backward;
mod discretize;
pub mod gradcheck;
mod recurrence;
mod selective;

pub use backward::{ssm_backward, SsmGrads};
pub use discretize::{zoh_discretize, SERIES_THRESHOLD};
pub use recurrence::{blelloch_scan_inclusive, combine, parallel_scan, recurrence_seq, ScanElement};
pub use selective::{s6_forward, s6_forward_with, s6_project, S6Weights, ScanKernel, SelectiveParams, SelectiveProj};

use crate::error::{dim_err, param_err, Result};
use crate::tensor::{Real, Tensor};

/// Continuous parameters `(A, B, C, Dskip, delta)`.
///
/// `a` is `[D, N]`; `b` and `c` are either static `[N]` or per-step `[L, N]`;
/// `d_skip` is `[D]`; `delta` is `[L, D]` and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams<T> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub d_skip: Tensor<T>,
    pub delta: Tensor<T>,
}

fn check_step_param<T: Real>(p: &Tensor<T>, l: usize, n: usize, what: &str) -> Result<()> {
    match *p.shape() {
        [m] if m == n => Ok(()),
        [ll, m] if ll == l && m == n => Ok(()),
        _ => Err(dim_err!("{what} must be [{n}] or [{l}, {n}], got {:?}", p.shape())),
    }
}

/// Expands a static `[N]` or per-step `[L, N]` parameter to `[L, N]`.
pub(crate) fn per_step<T: Real>(p: &Tensor<T>, l: usize) -> Tensor<T> {
    if p.rank() == 2 {
        return p.clone();
    }
    let n = p.len();
    Tensor::from_fn(&[l, n], |i| p.data()[i % n])
}

impl<T: Real> SsmParams<T> {
    pub fn new(a: Tensor<T>, b: Tensor<T>, c: Tensor<T>, d_skip: Tensor<T>, delta: Tensor<T>) -> Result<Self> {
        let (d, n) = a.dims2()?;
        let (l, dd) = delta.dims2()?;
        if dd != d {
            return Err(dim_err!("delta has {dd} channels, A has {d}"));
        }
        check_step_param(&b, l, n, "B")?;
        check_step_param(&c, l, n, "C")?;
        d_skip.expect_shape(&[d], "Dskip")?;
        if let Some(v) = delta.data().iter().find(|v| !(**v > T::zero())) {
            return Err(param_err!("delta must be positive, found {v}"));
        }
        Ok(Self { a, b, c, d_skip, delta })
    }

    /// `(L, D, N)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let (d, n) = (self.a.shape()[0], self.a.shape()[1]);
        (self.delta.shape()[0], d, n)
    }

    pub fn discretize(&self) -> Result<DiscreteSsm<T>> {
        let (l, _, _) = self.dims();
        let (abar, bbar) = zoh_discretize(&self.a, &self.b, &self.delta)?;
        Ok(DiscreteSsm {
            abar,
            bbar,
            c: per_step(&self.c, l),
            d_skip: self.d_skip.clone(),
        })
    }
}

/// Discretized, per-step parameters: `abar`, `bbar` are `[L, D, N]`,
/// `c` is `[L, N]`, `d_skip` is `[D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSsm<T> {
    pub abar: Tensor<T>,
    pub bbar: Tensor<T>,
    pub c: Tensor<T>,
    pub d_skip: Tensor<T>,
}

impl<T: Real> DiscreteSsm<T> {
    pub fn new(abar: Tensor<T>, bbar: Tensor<T>, c: Tensor<T>, d_skip: Tensor<T>) -> Result<Self> {
        let s = Self { abar, bbar, c, d_skip };
        s.dims()?;
        Ok(s)
    }

    /// `(L, D, N)`, validating that every component agrees.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (l, d, n) = self.abar.dims3()?;
        self.bbar.expect_shape(&[l, d, n], "Bbar")?;
        self.c.expect_shape(&[l, n], "C")?;
        self.d_skip.expect_shape(&[d], "Dskip")?;
        Ok((l, d, n))
    }

    pub(crate) fn check_inputs(&self, x: &Tensor<T>, h0: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (l, d, n) = self.dims()?;
        x.expect_shape(&[l, d], "SSM input")?;
        h0.expect_shape(&[d, n], "initial state")?;
        Ok((l, d, n))
    }
}
