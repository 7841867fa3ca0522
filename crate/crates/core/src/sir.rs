//! Integrity refinement of the bottleneck feature.
//!
//! Soft morphological edges of the coarse map (dilation minus erosion at
//! several window sizes) gate the feature through a boundary attention; a
//! large box-averaged copy of the map, masked by `1 - S_c`, gates it through
//! a reverse attention. A one-channel head reads the refined coarse map off
//! the modulated feature.

use rand::Rng;

use crate::error::{dim_err, param_err, Error, Result};
use crate::io::AnyTensor;
use crate::nn::{box_mean, pool2d, sigmoid, DsConv, Linear, PoolMode};
use crate::tensor::{Real, SaliencyMap, Tensor};

pub const DEFAULT_KERNELS: [usize; 3] = [3, 5, 7];
pub const DEFAULT_PRIOR_POOL: usize = 14;

/// `max_k(S) - min_k(S)` with replicate padding.
pub fn soft_morph_edge(s_c: &SaliencyMap, k: usize) -> Result<SaliencyMap> {
    let t = s_c.to_tensor::<f64>();
    let g = pool2d(&t, k, PoolMode::Max)?.sub(&pool2d(&t, k, PoolMode::Min)?)?;
    SaliencyMap::from_tensor(&g)
}

/// Box mean over a `pool x pool` window, stride 1, same size.
pub fn object_prior(s_c: &SaliencyMap, pool: usize) -> Result<SaliencyMap> {
    SaliencyMap::from_tensor(&box_mean(&s_c.to_tensor::<f64>(), pool)?)
}

/// `S_prior * (1 - S_c)`.
pub fn reverse_attention(prior: &SaliencyMap, s_c: &SaliencyMap) -> Result<SaliencyMap> {
    if !prior.same_size(s_c) {
        return Err(dim_err!(
            "prior {}x{} vs map {}x{}",
            prior.height(),
            prior.width(),
            s_c.height(),
            s_c.width()
        ));
    }
    let values = prior
        .values()
        .iter()
        .zip(s_c.values())
        .map(|(p, s)| p * (1.0 - s))
        .collect();
    SaliencyMap::from_clamped(prior.height(), prior.width(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirWeights<T> {
    /// one input channel per edge scale, `C4` outputs
    pub boundary: DsConv<T>,
    /// `1 -> C4`
    pub object: DsConv<T>,
    /// `C4 -> 1`
    pub head: Linear<T>,
    pub kernels: Vec<usize>,
    pub prior_pool: usize,
}

impl<T: Real> SirWeights<T> {
    pub fn new(
        boundary: DsConv<T>,
        object: DsConv<T>,
        head: Linear<T>,
        kernels: Vec<usize>,
        prior_pool: usize,
    ) -> Result<Self> {
        if kernels.is_empty() || kernels.iter().any(|k| k % 2 == 0) {
            return Err(param_err!("edge kernels must be odd, got {kernels:?}"));
        }
        if prior_pool == 0 {
            return Err(param_err!("prior pool must be positive"));
        }
        let c = head.in_dim();
        let scales = kernels.len();
        boundary.depthwise.expect_shape(&[3, 3, scales], "boundary depthwise")?;
        object.depthwise.expect_shape(&[3, 3, 1], "object depthwise")?;
        if boundary.pointwise.in_dim() != scales || boundary.pointwise.out_dim() != c {
            return Err(dim_err!("boundary pointwise must map {scales} -> {c}"));
        }
        if object.pointwise.in_dim() != 1 || object.pointwise.out_dim() != c || head.out_dim() != 1 {
            return Err(dim_err!("object pointwise must map 1 -> {c} and the head {c} -> 1"));
        }
        Ok(Self {
            boundary,
            object,
            head,
            kernels,
            prior_pool,
        })
    }

    pub fn zeros(c: usize) -> Self {
        Self {
            boundary: DsConv::zeros(DEFAULT_KERNELS.len(), c),
            object: DsConv::zeros(1, c),
            head: Linear::zeros(c, 1),
            kernels: DEFAULT_KERNELS.to_vec(),
            prior_pool: DEFAULT_PRIOR_POOL,
        }
    }

    pub fn random(c: usize, rng: &mut impl Rng) -> Self {
        Self {
            boundary: DsConv::random(DEFAULT_KERNELS.len(), c, rng),
            object: DsConv::random(1, c, rng),
            head: Linear::random(c, 1, rng),
            kernels: DEFAULT_KERNELS.to_vec(),
            prior_pool: DEFAULT_PRIOR_POOL,
        }
    }

    /// Fixed weights for running without a trained model: both gates see
    /// the centre tap only with unit pointwise weights, so
    /// `A_bnd = sigmoid(sum_k G_k)` and `A_rev = sigmoid(R)`; the head is
    /// `sigmoid(4 * mean_c(f) - 2)`.
    pub fn unit(c: usize) -> Self {
        let mut w = Self::zeros(c);
        w.boundary.depthwise = crate::nn::delta_kernels(DEFAULT_KERNELS.len());
        w.boundary.pointwise.weight = Tensor::ones(&[DEFAULT_KERNELS.len(), c]);
        w.object.depthwise = crate::nn::delta_kernels(1);
        w.object.pointwise.weight = Tensor::ones(&[1, c]);
        w.head.weight = Tensor::filled(&[c, 1], T::lit(4.0 / c as f64));
        w.head.bias = Tensor::filled(&[1], T::lit(-2.0));
        w
    }

    pub fn channels(&self) -> usize {
        self.head.in_dim()
    }

    /// Flat parameter count for `c` channels and `scales` edge maps.
    pub fn flat_len(c: usize, scales: usize) -> usize {
        9 * scales + scales * c + c + 9 + c + c + c + 1
    }

    /// Parameters in the order boundary depthwise, boundary pointwise weight
    /// and bias, object depthwise, object pointwise weight and bias, head
    /// weight and bias.
    pub fn to_flat(&self) -> Tensor<T> {
        let parts = [
            &self.boundary.depthwise,
            &self.boundary.pointwise.weight,
            &self.boundary.pointwise.bias,
            &self.object.depthwise,
            &self.object.pointwise.weight,
            &self.object.pointwise.bias,
            &self.head.weight,
            &self.head.bias,
        ];
        let data: Vec<T> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
        let n = data.len();
        Tensor::new(&[n], data).expect("non-empty parameter vector")
    }

    /// Inverse of [`Self::to_flat`] for the given edge kernels and pool size.
    pub fn from_flat(flat: &Tensor<T>, kernels: Vec<usize>, prior_pool: usize) -> Result<Self> {
        let n = flat.len();
        let s = kernels.len();
        let fixed = Self::flat_len(0, s);
        let per_c = Self::flat_len(1, s) - fixed;
        if flat.rank() != 1 || n <= fixed || !(n - fixed).is_multiple_of(per_c) {
            return Err(Error::Format(format!(
                "{n} values do not form a refinement weight vector"
            )));
        }
        let c = (n - fixed) / per_c;
        let mut rest = flat.data();
        let mut take = |shape: &[usize]| -> Result<Tensor<T>> {
            let len: usize = shape.iter().product();
            let (head, tail) = rest.split_at(len);
            rest = tail;
            Tensor::new(shape, head.to_vec())
        };
        let boundary = DsConv {
            depthwise: take(&[3, 3, s])?,
            pointwise: Linear::new(take(&[s, c])?, take(&[c])?)?,
        };
        let object = DsConv {
            depthwise: take(&[3, 3, 1])?,
            pointwise: Linear::new(take(&[1, c])?, take(&[c])?)?,
        };
        let head = Linear::new(take(&[c, 1])?, take(&[1])?)?;
        Self::new(boundary, object, head, kernels, prior_pool)
    }

    pub fn from_any(t: AnyTensor, kernels: Vec<usize>, prior_pool: usize) -> Result<Self> {
        Self::from_flat(&t.into_real::<T>(), kernels, prior_pool)
    }
}

fn gate<T: Real>(conv: &DsConv<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(conv.forward(x)?.map(sigmoid))
}

/// `sigmoid(DSConv(stack of edge maps))`, `[H, W, C4]`.
pub fn boundary_attention<T: Real>(s_c: &SaliencyMap, w: &SirWeights<T>) -> Result<Tensor<T>> {
    let edges = w
        .kernels
        .iter()
        .map(|&k| soft_morph_edge(s_c, k))
        .collect::<Result<Vec<_>>>()?;
    boundary_gate(s_c, &edges, w)
}

fn boundary_gate<T: Real>(s_c: &SaliencyMap, edges: &[SaliencyMap], w: &SirWeights<T>) -> Result<Tensor<T>> {
    let s = edges.len();
    let stacked = Tensor::from_fn(&[s_c.height(), s_c.width(), s], |i| {
        T::lit(edges[i % s].values()[i / s])
    });
    gate(&w.boundary, &stacked)
}

/// Every intermediate of one refinement pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SirTrace<T> {
    /// `(k, G_k)` per edge kernel
    pub edges: Vec<(usize, SaliencyMap)>,
    pub prior: SaliencyMap,
    pub reverse: SaliencyMap,
    pub boundary_gate: Tensor<T>,
    pub reverse_gate: Tensor<T>,
    pub f4_plus: Tensor<T>,
    pub s_c_plus: SaliencyMap,
}

pub fn sir_trace<T: Real>(f4: &Tensor<T>, s_c: &SaliencyMap, w: &SirWeights<T>) -> Result<SirTrace<T>> {
    let (h, wd, c) = f4.dims3()?;
    if (h, wd) != (s_c.height(), s_c.width()) {
        return Err(dim_err!(
            "feature {h}x{wd} vs coarse map {}x{}",
            s_c.height(),
            s_c.width()
        ));
    }
    if c != w.channels() {
        return Err(dim_err!("refinement weights expect {} channels, got {c}", w.channels()));
    }
    let edges = w
        .kernels
        .iter()
        .map(|&k| soft_morph_edge(s_c, k))
        .collect::<Result<Vec<_>>>()?;
    let a_bnd = boundary_gate(s_c, &edges, w)?;
    let prior = object_prior(s_c, w.prior_pool)?;
    let reverse = reverse_attention(&prior, s_c)?;
    let a_rev = gate(&w.object, &reverse.to_tensor::<T>())?;
    let f4_plus = f4.add(&f4.mul(&a_bnd)?)?.add(&f4.mul(&a_rev)?)?;
    let logits = w.head.forward(&f4_plus)?;
    let s_c_plus = SaliencyMap::from_tensor(&logits.map(sigmoid))?;
    Ok(SirTrace {
        edges: w.kernels.iter().copied().zip(edges).collect(),
        prior,
        reverse,
        boundary_gate: a_bnd,
        reverse_gate: a_rev,
        f4_plus,
        s_c_plus,
    })
}

/// `f4 + f4 * A_bnd + f4 * A_rev` and the refined coarse map.
pub fn sir_refine<T: Real>(f4: &Tensor<T>, s_c: &SaliencyMap, w: &SirWeights<T>) -> Result<(Tensor<T>, SaliencyMap)> {
    let t = sir_trace(f4, s_c, w)?;
    Ok((t.f4_plus, t.s_c_plus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> SaliencyMap {
        SaliencyMap::from_fn(h, w, f).unwrap()
    }

    fn rand_map(h: usize, w: usize, rng: &mut ChaCha8Rng) -> SaliencyMap {
        SaliencyMap::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    /// Brute-force window range with clamped (replicate) indexing.
    fn edge_oracle(s: &SaliencyMap, k: usize) -> Vec<f64> {
        let (h, w) = (s.height() as isize, s.width() as isize);
        let r = (k / 2) as isize;
        let mut out = vec![];
        for i in 0..h {
            for j in 0..w {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for di in -r..=r {
                    for dj in -r..=r {
                        let v = s.get((i + di).clamp(0, h - 1) as usize, (j + dj).clamp(0, w - 1) as usize);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                out.push(hi - lo);
            }
        }
        out
    }

    #[test]
    fn edges_of_constant_and_delta_maps() {
        for k in [3, 5, 7] {
            let g = soft_morph_edge(&SaliencyMap::filled(6, 5, 0.3).unwrap(), k).unwrap();
            assert!(g.values().iter().all(|v| *v == 0.0));
        }
        let delta = map(5, 5, |r, c| if (r, c) == (2, 2) { 1.0 } else { 0.0 });
        let g = soft_morph_edge(&delta, 3).unwrap();
        for r in 0..5usize {
            for c in 0..5usize {
                let near = r.abs_diff(2) <= 1 && c.abs_diff(2) <= 1;
                assert_eq!(g.get(r, c), if near { 1.0 } else { 0.0 });
            }
        }
        assert!(soft_morph_edge(&delta, 4).is_err());
    }

    #[test]
    fn half_plane_band() {
        let half = map(6, 6, |_, c| if c < 3 { 1.0 } else { 0.0 });
        let g = soft_morph_edge(&half, 3).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(g.get(r, c), if c == 2 || c == 3 { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(g.values(), edge_oracle(&half, 3).as_slice());
    }

    #[test]
    fn boundary_gate_cases() {
        let mut w = SirWeights::<f64>::zeros(4);
        let s = map(4, 4, |r, c| ((r * 4 + c) as f64) / 15.0);
        assert!(boundary_attention(&s, &w).unwrap().data().iter().all(|v| *v == 0.5));
        w.boundary.pointwise.bias = Tensor::new(&[4], vec![0.0, 1.0, -1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        w.boundary.depthwise = Tensor::from_fn(&[3, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let a = boundary_attention(&SaliencyMap::filled(3, 3, 0.7).unwrap(), &w).unwrap();
        for px in a.data().chunks(4) {
            for (v, b) in px.iter().zip([0.0, 1.0, -1.0, 2.0]) {
                assert!((v - sigmoid(b)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn boundary_gate_conv_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = SirWeights::<f64>::random(2, &mut rng);
        let s = rand_map(3, 4, &mut rng);
        let edges: Vec<Vec<f64>> = [3, 5, 7].iter().map(|&k| edge_oracle(&s, k)).collect();
        let got = boundary_attention(&s, &w).unwrap();
        let dw = w.boundary.depthwise.data();
        for r in 0..3isize {
            for c in 0..4isize {
                let mut conv = [0.0; 3];
                for (ch, e) in edges.iter().enumerate() {
                    for ki in 0..3isize {
                        for kj in 0..3isize {
                            let (rr, cc) = (r + ki - 1, c + kj - 1);
                            if (0..3).contains(&rr) && (0..4).contains(&cc) {
                                conv[ch] += dw[((ki * 3 + kj) * 3) as usize + ch] * e[(rr * 4 + cc) as usize];
                            }
                        }
                    }
                }
                for o in 0..2 {
                    let z = w.boundary.pointwise.bias.data()[o]
                        + (0..3)
                            .map(|ch| conv[ch] * w.boundary.pointwise.weight.data()[ch * 2 + o])
                            .sum::<f64>();
                    let p = (r * 4 + c) as usize;
                    assert!((got.data()[p * 2 + o] - sigmoid(z)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn prior_and_reverse() {
        let c = object_prior(&SaliencyMap::filled(5, 5, 0.4).unwrap(), 14).unwrap();
        assert!(c.values().iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert!(object_prior(&SaliencyMap::filled(3, 3, 0.0).unwrap(), 14)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
        // delta at the centre of 5x5, window 3: 1/9 on the neighbourhood interior
        let delta = map(5, 5, |r, c| if (r, c) == (2, 2) { 1.0 } else { 0.0 });
        let p = object_prior(&delta, 3).unwrap();
        assert!((p.get(1, 1) - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(p.get(0, 0), 0.0);
        let r = reverse_attention(
            &SaliencyMap::filled(2, 2, 0.5).unwrap(),
            &SaliencyMap::filled(2, 2, 0.2).unwrap(),
        )
        .unwrap();
        assert!(r.values().iter().all(|v| (v - 0.4).abs() < 1e-15));
        let ones = SaliencyMap::filled(2, 2, 1.0).unwrap();
        assert!(reverse_attention(&SaliencyMap::filled(2, 2, 0.9).unwrap(), &ones)
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
        assert!(reverse_attention(
            &SaliencyMap::filled(2, 2, 0.0).unwrap(),
            &SaliencyMap::filled(2, 2, 0.3).unwrap()
        )
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));
    }

    #[test]
    fn refine_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = SirWeights::<f64>::random(3, &mut rng);
        let s = rand_map(4, 4, &mut rng);
        let (f, _) = sir_refine(&Tensor::zeros(&[4, 4, 3]), &s, &w).unwrap();
        assert!(f.data().iter().all(|v| *v == 0.0));

        let mut shut = w.clone();
        shut.boundary.pointwise.bias = Tensor::filled(&[3], -800.0);
        shut.object.pointwise.bias = Tensor::filled(&[3], -800.0);
        let f4 = Tensor::from_fn(&[4, 4, 3], |_| rng.gen_range(-1.0..1.0));
        assert_eq!(sir_refine(&f4, &s, &shut).unwrap().0, f4);
    }

    #[test]
    fn refine_chain_of_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = SirWeights::<f64>::random(2, &mut rng);
        let s = rand_map(2, 2, &mut rng);
        let f4 = Tensor::from_fn(&[2, 2, 2], |_| rng.gen_range(-1.0..1.0));
        // on a 2x2 map every window of size >= 3 covers the whole map
        let range = s.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - s.values().iter().copied().fold(f64::INFINITY, f64::min);
        let mean = s.values().iter().sum::<f64>() / 4.0;
        let dsconv = |conv: &DsConv<f64>, inputs: &dyn Fn(usize) -> Vec<f64>| -> Vec<Vec<f64>> {
            let cin = conv.pointwise.in_dim();
            let dw = conv.depthwise.data();
            (0..4)
                .map(|p| {
                    let (r, c) = ((p / 2) as isize, (p % 2) as isize);
                    let mut acc = vec![0.0; cin];
                    for q in 0..4 {
                        let (qr, qc) = ((q / 2) as isize, (q % 2) as isize);
                        let tap = ((qr - r + 1) * 3 + (qc - c + 1)) as usize;
                        for ch in 0..cin {
                            acc[ch] += dw[tap * cin + ch] * inputs(q)[ch];
                        }
                    }
                    (0..2)
                        .map(|o| {
                            sigmoid(
                                conv.pointwise.bias.data()[o]
                                    + (0..cin)
                                        .map(|ch| acc[ch] * conv.pointwise.weight.data()[ch * 2 + o])
                                        .sum::<f64>(),
                            )
                        })
                        .collect()
                })
                .collect()
        };
        let a_bnd = dsconv(&w.boundary, &|_| vec![range; 3]);
        let a_rev = dsconv(&w.object, &|q| vec![mean * (1.0 - s.values()[q])]);
        let mut expected = vec![];
        let mut head = vec![];
        for p in 0..4 {
            let fp: Vec<f64> = (0..2)
                .map(|o| {
                    let f = f4.data()[p * 2 + o];
                    f + f * a_bnd[p][o] + f * a_rev[p][o]
                })
                .collect();
            head.push(sigmoid(
                w.head.bias.data()[0] + fp[0] * w.head.weight.data()[0] + fp[1] * w.head.weight.data()[1],
            ));
            expected.extend(fp);
        }
        let (f, sp) = sir_refine(&f4, &s, &w).unwrap();
        for (a, b) in f.data().iter().zip(&expected).chain(sp.values().iter().zip(&head)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = SirWeights::<f32>::random(5, &mut rng);
        let flat = w.to_flat();
        assert_eq!(flat.len(), SirWeights::<f32>::flat_len(5, 3));
        assert_eq!(
            SirWeights::from_flat(&flat, DEFAULT_KERNELS.to_vec(), DEFAULT_PRIOR_POOL).unwrap(),
            w
        );
        let short = Tensor::<f32>::zeros(&[40]);
        assert!(SirWeights::from_flat(&short, DEFAULT_KERNELS.to_vec(), 14).is_err());
        assert!(SirWeights::from_flat(&flat, vec![3, 4, 5], 14).is_err());
    }

    #[test]
    fn unit_weights_on_constant_maps() {
        let w = SirWeights::<f64>::unit(2);
        let ones = SaliencyMap::filled(4, 4, 1.0).unwrap();
        let t = sir_trace(&Tensor::ones(&[4, 4, 2]), &ones, &w).unwrap();
        assert!(t.reverse.values().iter().all(|v| *v == 0.0));
        assert!(t.edges.iter().all(|(_, g)| g.values().iter().all(|v| *v == 0.0)));
        // both gates 1/2: f4_plus = 2, head sigmoid(4 * 2 - 2)
        assert!(t.f4_plus.data().iter().all(|v| (v - 2.0).abs() < 1e-15));
        assert!(t.s_c_plus.values().iter().all(|v| (v - sigmoid(6.0)).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn edge_and_reverse_invariants(h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = rand_map(h, w, &mut rng);
            let g: Vec<SaliencyMap> = [3, 5, 7].iter().map(|&k| soft_morph_edge(&s, k).unwrap()).collect();
            for i in 0..h * w {
                prop_assert!(g[0].values()[i] >= 0.0);
                prop_assert!(g[1].values()[i] >= g[0].values()[i]);
                prop_assert!(g[2].values()[i] >= g[1].values()[i]);
            }
            let oracle = edge_oracle(&s, 3);
            prop_assert_eq!(g[0].values(), oracle.as_slice());
            let prior = object_prior(&s, 14).unwrap();
            let r = reverse_attention(&prior, &s).unwrap();
            for i in 0..h * w {
                prop_assert!(r.values()[i] >= 0.0 && r.values()[i] <= prior.values()[i]);
            }
        }
    }
}
