//! Central finite-difference validation of [`ssm_backward`](super::ssm_backward).
//!
//! The numeric side only ever calls the forward recurrence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{recurrence_seq, DiscreteSsm, SsmGrads};
use crate::error::Result;
use crate::tensor::Tensor;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Relative error accepted by [`GradCheckRow::passed`].
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub name: &'static str,
    pub rel_error: f64,
    pub max_abs_error: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.rel_error < FD_TOLERANCE
    }
}

/// A forward instance plus an output cotangent.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub params: DiscreteSsm<f64>,
    pub x: Tensor<f64>,
    pub h0: Tensor<f64>,
    pub dy: Tensor<f64>,
}

impl GradInstance {
    /// Stable random instance: `Abar` in `(0, 1)`, everything else in `(-1, 1)`.
    pub fn random(seed: u64, l: usize, d: usize, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |shape: &[usize], lo: f64, hi: f64| Tensor::from_fn(shape, |_| rng.gen_range(lo..hi));
        let params = DiscreteSsm {
            abar: r(&[l, d, n], 0.05, 0.99),
            bbar: r(&[l, d, n], -1.0, 1.0),
            c: r(&[l, n], -1.0, 1.0),
            d_skip: r(&[d], -1.0, 1.0),
        };
        Self {
            params,
            x: r(&[l, d], -1.0, 1.0),
            h0: r(&[d, n], -1.0, 1.0),
            dy: r(&[l, d], -1.0, 1.0),
        }
    }

    fn objective(&self, p: &DiscreteSsm<f64>, x: &Tensor<f64>) -> Result<f64> {
        let (y, _) = recurrence_seq(p, x, &self.h0)?;
        Ok(y.data().iter().zip(self.dy.data()).map(|(a, b)| a * b).sum())
    }
}

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compares `grads` against central differences of the forward pass, one
/// row per parameter group (`dx`, `dAbar`, `dBbar`, `dC`, `dDskip`).
pub fn check_gradients(inst: &GradInstance, grads: &SsmGrads<f64>, step: f64) -> Result<Vec<GradCheckRow>> {
    let groups: [(&'static str, &Tensor<f64>); 5] = [
        ("dx", &grads.dx),
        ("dAbar", &grads.dabar),
        ("dBbar", &grads.dbbar),
        ("dC", &grads.dc),
        ("dDskip", &grads.dd_skip),
    ];
    let mut rows = Vec::with_capacity(groups.len());
    for (name, analytic) in groups {
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut p = inst.params.clone();
                let mut x = inst.x.clone();
                let slot = match name {
                    "dx" => x.data_mut(),
                    "dAbar" => p.abar.data_mut(),
                    "dBbar" => p.bbar.data_mut(),
                    "dC" => p.c.data_mut(),
                    _ => p.d_skip.data_mut(),
                };
                slot[i] += delta;
                inst.objective(&p, &x)
            };
            numeric.push((eval(step)? - eval(-step)?) / (2.0 * step));
        }
        let max_abs_error = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.push(GradCheckRow {
            name,
            rel_error: relative_error(analytic.data(), &numeric),
            max_abs_error,
        });
    }
    Ok(rows)
}
