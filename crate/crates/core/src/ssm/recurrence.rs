use rayon::prelude::*;

use super::DiscreteSsm;
use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Affine map `h -> a * h + b`, the element type of the associative scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanElement<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> ScanElement<T> {
    pub fn identity() -> Self {
        Self {
            a: T::one(),
            b: T::zero(),
        }
    }
}

/// Composition of `earlier` followed by `later`:
/// `(a, b) . (a', b') = (a * a', a' * b + b')`.
#[inline]
pub fn combine<T: Real>(earlier: ScanElement<T>, later: ScanElement<T>) -> ScanElement<T> {
    ScanElement {
        a: earlier.a * later.a,
        b: later.a * earlier.b + later.b,
    }
}

/// In-place inclusive scan with the work-efficient up-sweep/down-sweep
/// schedule: `O(len)` combines, `O(log len)` levels.
///
/// `elems` is padded internally to a power of two with identity elements.
pub fn blelloch_scan_inclusive<T: Real>(elems: &mut [ScanElement<T>]) {
    let len = elems.len();
    if len <= 1 {
        return;
    }
    let n = len.next_power_of_two();
    let mut tree = Vec::with_capacity(n);
    tree.extend_from_slice(elems);
    tree.resize(n, ScanElement::identity());

    let mut stride = 2;
    while stride <= n {
        let half = stride / 2;
        for right in (stride - 1..n).step_by(stride) {
            tree[right] = combine(tree[right - half], tree[right]);
        }
        stride *= 2;
    }

    tree[n - 1] = ScanElement::identity();
    let mut stride = n;
    while stride >= 2 {
        let half = stride / 2;
        for right in (stride - 1..n).step_by(stride) {
            let left = right - half;
            let left_total = tree[left];
            tree[left] = tree[right];
            tree[right] = combine(tree[right], left_total);
        }
        stride /= 2;
    }

    // tree now holds the exclusive prefix of each position
    for (e, ex) in elems.iter_mut().zip(&tree) {
        *e = combine(*ex, *e);
    }
}

fn outputs<T: Real>(p: &DiscreteSsm<T>, x: &Tensor<T>, states: impl Fn(usize, usize, usize) -> T) -> Tensor<T> {
    let (l, d, n) = (x.shape()[0], x.shape()[1], p.c.shape()[1]);
    let c = p.c.data();
    let xd = x.data();
    let ds = p.d_skip.data();
    Tensor::from_fn(&[l, d], |i| {
        let (k, ch) = (i / d, i % d);
        let mut acc = T::zero();
        for s in 0..n {
            acc += c[k * n + s] * states(k, ch, s);
        }
        acc + ds[ch] * xd[i]
    })
}

/// Step-by-step evaluation. Returns `(y [L, D], h_L [D, N])`.
pub fn recurrence_seq<T: Real>(p: &DiscreteSsm<T>, x: &Tensor<T>, h0: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (l, d, n) = p.check_inputs(x, h0)?;
    let mut h = h0.data().to_vec();
    let (ab, bb, c, xd) = (p.abar.data(), p.bbar.data(), p.c.data(), x.data());
    let mut y = Vec::with_capacity(l * d);
    for k in 0..l {
        for ch in 0..d {
            let xk = xd[k * d + ch];
            let base = (k * d + ch) * n;
            let mut acc = T::zero();
            for s in 0..n {
                let hs = &mut h[ch * n + s];
                *hs = ab[base + s] * *hs + bb[base + s] * xk;
                acc += c[k * n + s] * *hs;
            }
            y.push(acc + p.d_skip.data()[ch] * xk);
        }
    }
    Ok((Tensor::new(&[l, d], y)?, Tensor::new(&[d, n], h)?))
}

/// Evaluates the recurrence as one associative scan per `(d, n)` state,
/// distributing states across the rayon pool.
///
/// Agrees with [`recurrence_seq`] up to floating-point reassociation; the
/// result does not depend on the number of worker threads.
pub fn parallel_scan<T: Real>(p: &DiscreteSsm<T>, x: &Tensor<T>, h0: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (l, d, n) = p.check_inputs(x, h0)?;
    let (ab, bb, xd, h0d) = (p.abar.data(), p.bbar.data(), x.data(), h0.data());
    // state-major buffer: lane (ch, s) owns elems[(ch * n + s) * l ..][..l]
    let mut lanes = vec![ScanElement::identity(); d * n * l];
    lanes.par_chunks_mut(l).enumerate().for_each(|(lane, elems)| {
        let (ch, s) = (lane / n, lane % n);
        for (k, e) in elems.iter_mut().enumerate() {
            let idx = (k * d + ch) * n + s;
            *e = ScanElement {
                a: ab[idx],
                b: bb[idx] * xd[k * d + ch],
            };
        }
        // fold the initial state into the first element
        elems[0].b += elems[0].a * h0d[lane];
        blelloch_scan_inclusive(elems);
    });
    let y = outputs(p, x, |k, ch, s| lanes[(ch * n + s) * l + k].b);
    let h_last = Tensor::from_fn(&[d, n], |lane| lanes[lane * l + l - 1].b);
    Ok((y, h_last))
}
