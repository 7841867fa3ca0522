use super::DiscreteSsm;
use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Gradients of `sum(dy * y)` with respect to every input of the discretized recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmGrads<T> {
    /// `[L, D]`
    pub dx: Tensor<T>,
    /// `[L, D, N]`
    pub dabar: Tensor<T>,
    /// `[L, D, N]`
    pub dbbar: Tensor<T>,
    /// `[L, N]`
    pub dc: Tensor<T>,
    /// `[D]`
    pub dd_skip: Tensor<T>,
    /// `[D, N]`
    pub dh0: Tensor<T>,
}

/// Reverse-time adjoint of [`super::recurrence_seq`].
///
/// With `g_k = dL/dh_k`, the adjoint state obeys
/// `g_k = dy_k * C_k + Abar_{k+1} * g_{k+1}`, from which every parameter
/// gradient is a local product.
pub fn ssm_backward<T: Real>(p: &DiscreteSsm<T>, x: &Tensor<T>, h0: &Tensor<T>, dy: &Tensor<T>) -> Result<SsmGrads<T>> {
    let (l, d, n) = p.check_inputs(x, h0)?;
    dy.expect_shape(&[l, d], "output cotangent")?;
    let (ab, bb, c, xd, dyd) = (p.abar.data(), p.bbar.data(), p.c.data(), x.data(), dy.data());

    // forward pass, keeping every state
    let mut hs = vec![T::zero(); l * d * n];
    for k in 0..l {
        for ch in 0..d {
            for s in 0..n {
                let idx = (k * d + ch) * n + s;
                let prev = if k == 0 { h0.data()[ch * n + s] } else { hs[idx - d * n] };
                hs[idx] = ab[idx] * prev + bb[idx] * xd[k * d + ch];
            }
        }
    }

    let mut dx = vec![T::zero(); l * d];
    let mut dabar = vec![T::zero(); l * d * n];
    let mut dbbar = vec![T::zero(); l * d * n];
    let mut dc = vec![T::zero(); l * n];
    let mut dd = vec![T::zero(); d];
    // adjoint state carried backwards; holds Abar_{k+1} * g_{k+1} on entry to step k
    let mut carry = vec![T::zero(); d * n];
    for k in (0..l).rev() {
        for ch in 0..d {
            let dyk = dyd[k * d + ch];
            let xk = xd[k * d + ch];
            dd[ch] += dyk * xk;
            let mut dxk = p.d_skip.data()[ch] * dyk;
            for s in 0..n {
                let idx = (k * d + ch) * n + s;
                let g = dyk * c[k * n + s] + carry[ch * n + s];
                let prev = if k == 0 { h0.data()[ch * n + s] } else { hs[idx - d * n] };
                dabar[idx] = g * prev;
                dbbar[idx] = g * xk;
                dxk += g * bb[idx];
                dc[k * n + s] += dyk * hs[idx];
                carry[ch * n + s] = ab[idx] * g;
            }
            dx[k * d + ch] = dxk;
        }
    }
    Ok(SsmGrads {
        dx: Tensor::new(&[l, d], dx)?,
        dabar: Tensor::new(&[l, d, n], dabar)?,
        dbbar: Tensor::new(&[l, d, n], dbbar)?,
        dc: Tensor::new(&[l, n], dc)?,
        dd_skip: Tensor::new(&[d], dd)?,
        dh0: Tensor::new(&[d, n], carry)?,
    })
}
