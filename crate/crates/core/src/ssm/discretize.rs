use crate::error::{dim_err, param_err, Result};
use crate::tensor::{Real, Tensor};

/// Below this `|delta * a|` the `(e^z - 1) / z` factor is replaced by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// `(e^z - 1) / z`, switching to `1 + z/2 + z^2/6` near the removable singularity.
#[inline]
pub(crate) fn phi1<T: Real>(z: T) -> T {
    if z.abs() < T::lit(SERIES_THRESHOLD) {
        T::one() + z * (T::lit(0.5) + z / T::lit(6.0))
    } else {
        z.exp_m1() / z
    }
}

/// Zero-order-hold discretization of a diagonal system.
///
/// `a` is `[D, N]`, `b` is `[N]` or `[L, N]`, `delta` is `[L, D]`. Returns
/// `(abar, bbar)`, both `[L, D, N]`, with `abar = exp(delta * a)` and
/// `bbar = (delta * a)^-1 (exp(delta * a) - 1) * delta * b`.
pub fn zoh_discretize<T: Real>(a: &Tensor<T>, b: &Tensor<T>, delta: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (d, n) = a.dims2()?;
    let (l, dd) = delta.dims2()?;
    if dd != d {
        return Err(dim_err!("delta has {dd} channels, A has {d}"));
    }
    let per_step_b = match *b.shape() {
        [m] if m == n => false,
        [ll, m] if ll == l && m == n => true,
        _ => return Err(dim_err!("B must be [{n}] or [{l}, {n}], got {:?}", b.shape())),
    };
    if let Some(v) = delta.data().iter().find(|v| !(**v > T::zero())) {
        return Err(param_err!("delta must be positive, found {v}"));
    }
    let mut abar = Vec::with_capacity(l * d * n);
    let mut bbar = Vec::with_capacity(l * d * n);
    for k in 0..l {
        let b_row = if per_step_b {
            &b.data()[k * n..(k + 1) * n]
        } else {
            b.data()
        };
        for ch in 0..d {
            let dt = delta.data()[k * d + ch];
            for (s, &bs) in b_row.iter().enumerate() {
                let z = dt * a.data()[ch * n + s];
                abar.push(z.exp());
                bbar.push(phi1(z) * dt * bs);
            }
        }
    }
    Ok((Tensor::new(&[l, d, n], abar)?, Tensor::new(&[l, d, n], bbar)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, b: f64, dt: f64) -> (f64, f64) {
        let (ab, bb) = zoh_discretize(
            &Tensor::new(&[1, 1], vec![a]).unwrap(),
            &Tensor::new(&[1], vec![b]).unwrap(),
            &Tensor::new(&[1, 1], vec![dt]).unwrap(),
        )
        .unwrap();
        (ab.data()[0], bb.data()[0])
    }

    /// Composite Simpson quadrature of `b * integral_0^dt e^{a tau} d tau`.
    fn zoh_quadrature(a: f64, b: f64, dt: f64) -> f64 {
        let m = 2000;
        let h = dt / m as f64;
        let f = |t: f64| (a * t).exp();
        let mut s = f(0.0) + f(dt);
        for i in 1..m {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0 * b
    }

    #[test]
    fn zero_timescale_limit() {
        let (ab, bb) = scalar(-3.0, 2.0, 1e-12);
        assert!((ab - 1.0).abs() < 1e-11);
        assert!(bb.abs() < 1e-11);
    }

    #[test]
    fn closed_form_half() {
        let (ab, bb) = scalar(-1.0, 1.0, std::f64::consts::LN_2);
        assert!((ab - 0.5).abs() < 1e-15);
        assert!((bb - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = rng.gen_range(-4.0..0.5);
            let b = rng.gen_range(-2.0..2.0);
            let dt = rng.gen_range(0.001..1.5);
            let (_, bb) = scalar(a, b, dt);
            let q = zoh_quadrature(a, b, dt);
            assert!(
                (bb - q).abs() < 1e-10 * (1.0 + q.abs()),
                "a={a} b={b} dt={dt}: {bb} vs {q}"
            );
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        for (a, dt) in [(-1.0, 1e-6), (-1e-6, 1.0), (1e-6, 1.0), (-2.0, 5e-7)] {
            let z: f64 = a * dt;
            let series = (1.0 + z * (0.5 + z / 6.0)) * dt;
            let exact = z.exp_m1() / z * dt;
            assert!((series - exact).abs() < 1e-9);
        }
        for sign in [-1.0, 1.0] {
            let at = sign * SERIES_THRESHOLD;
            let below = at * (1.0 - 1e-12);
            assert!((phi1(below) - phi1(at)).abs() < 1e-9);
        }
    }

    #[test]
    fn stable_systems_have_abar_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::from_fn(&[3, 4], |_| -rng.gen_range(0.01..8.0));
        let delta = Tensor::from_fn(&[6, 3], |_| rng.gen_range(1e-3..2.0));
        let (abar, _) = zoh_discretize(&a, &Tensor::ones(&[4]), &delta).unwrap();
        assert!(abar.data().iter().all(|&v: &f64| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rejects_nonpositive_delta() {
        let a = Tensor::<f64>::filled(&[1, 1], -1.0);
        let b = Tensor::<f64>::ones(&[1]);
        for bad in [0.0, -0.1, f64::NAN] {
            let delta = Tensor::new(&[1, 1], vec![bad]).unwrap();
            assert!(zoh_discretize(&a, &b, &delta).is_err());
        }
    }

    #[test]
    fn per_step_b() {
        let a = Tensor::<f64>::filled(&[1, 2], -1.0);
        let b = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let delta = Tensor::filled(&[2, 1], 0.5);
        let (_, bb) = zoh_discretize(&a, &b, &delta).unwrap();
        let f = (1.0 - (-0.5f64).exp()) / 0.5 * 0.5;
        for (v, bv) in bb.data().iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((v - f * bv).abs() < 1e-15);
        }
        assert!(zoh_discretize(&a, &Tensor::ones(&[3, 2]), &delta).is_err());
    }
}
