//! Context-aware upsampling.
//!
//! Each deep patch of an `H x W` map is paired with four shallow patches of
//! the `2H x 2W` map (its 2x2 window when unshifted). The pairs form
//! subsequences `[s1, s2, s3, s4, d]` that are concatenated in two orders,
//! scanned by two selective SSMs, and the deep positions are read back out,
//! summed, projected and expanded onto the shallow grid.

use rand::Rng;

use crate::error::{dim_err, param_err, Result};
use crate::nn::{depthwise_conv3x3, pixel_shuffle_expand, random_kernels, Linear};
use crate::ssm::{s6_forward_with, S6Weights, ScanKernel};
use crate::tensor::{Real, Tensor};

/// Shallow patches of window `g`: top-left, top-right, bottom-left,
/// bottom-right on the `2H x 2W` grid.
pub fn window_patches(g: usize, width: usize) -> [usize; 4] {
    let (r, c) = (g / width, g % width);
    let w2 = 2 * width;
    let tl = 2 * r * w2 + 2 * c;
    [tl, tl + 1, tl + w2, tl + w2 + 1]
}

/// Unit in which a pairing shift is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftUnit {
    /// Rotate the stream of shallow patches (taken window by window) by
    /// `shift` patches before cutting it into groups of four.
    Patch,
    /// Pair deep patch `g` with window `(g + shift) mod HW`.
    Window,
}

/// One slot of the long sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Shallow(usize),
    Deep(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingPlan {
    height: usize,
    width: usize,
    shift: usize,
    unit: ShiftUnit,
    groups: Vec<[usize; 4]>,
}

/// Pairing with the shift counted in shallow patches (reduced modulo `4HW`).
pub fn build_pairing(height: usize, width: usize, shift: usize) -> Result<PairingPlan> {
    build_pairing_with(height, width, shift, ShiftUnit::Patch)
}

pub fn build_pairing_with(height: usize, width: usize, shift: usize, unit: ShiftUnit) -> Result<PairingPlan> {
    if height == 0 || width == 0 {
        return Err(dim_err!("empty {height}x{width} deep grid"));
    }
    let hw = height * width;
    let (shift, groups) = match unit {
        ShiftUnit::Window => {
            let s = shift % hw;
            (s, (0..hw).map(|g| window_patches((g + s) % hw, width)).collect())
        }
        ShiftUnit::Patch => {
            let s = shift % (4 * hw);
            let stream: Vec<usize> = (0..hw).flat_map(|g| window_patches(g, width)).collect();
            let groups = (0..hw)
                .map(|g| std::array::from_fn(|j| stream[(4 * g + j + s) % (4 * hw)]))
                .collect();
            (s, groups)
        }
    };
    Ok(PairingPlan {
        height,
        width,
        shift,
        unit,
        groups,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairOrder {
    /// subsequences in ascending deep index
    #[default]
    Forward,
    /// subsequences in descending deep index
    Altered,
}

impl PairingPlan {
    /// Deep grid `(H, W)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Shift after reduction.
    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn unit(&self) -> ShiftUnit {
        self.unit
    }

    /// The four shallow patches paired with each deep patch.
    pub fn groups(&self) -> &[[usize; 4]] {
        &self.groups
    }

    pub fn seq_len(&self) -> usize {
        5 * self.groups.len()
    }

    /// Subsequence visited at position `i` of the long sequence.
    fn group_at(&self, i: usize, order: PairOrder) -> usize {
        match order {
            PairOrder::Forward => i,
            PairOrder::Altered => self.groups.len() - 1 - i,
        }
    }

    /// Contents of every slot of the long sequence.
    pub fn layout(&self, order: PairOrder) -> Vec<Slot> {
        (0..self.groups.len())
            .flat_map(|i| {
                let g = self.group_at(i, order);
                let s = self.groups[g];
                [
                    Slot::Shallow(s[0]),
                    Slot::Shallow(s[1]),
                    Slot::Shallow(s[2]),
                    Slot::Shallow(s[3]),
                    Slot::Deep(g),
                ]
            })
            .collect()
    }

    /// Position of deep patch `g` in the long sequence.
    pub fn deep_position(&self, g: usize, order: PairOrder) -> usize {
        let i = match order {
            PairOrder::Forward => g,
            PairOrder::Altered => self.groups.len() - 1 - g,
        };
        5 * i + 4
    }
}

/// Builds the long `[5HW, C]` sequence from `deep` (`[HW, C]`) and `shallow` (`[4HW, C]`).
pub fn cau_interleave<T: Real>(
    deep: &Tensor<T>,
    shallow: &Tensor<T>,
    plan: &PairingPlan,
    order: PairOrder,
) -> Result<Tensor<T>> {
    let hw = plan.groups.len();
    let (ld, c) = deep.dims2()?;
    let (ls, cs) = shallow.dims2()?;
    if ld != hw || ls != 4 * hw || cs != c {
        return Err(dim_err!(
            "deep [{ld}, {c}] and shallow [{ls}, {cs}] do not fit a plan over {hw} patches"
        ));
    }
    let row = |t: &Tensor<T>, i: usize| t.data()[i * c..(i + 1) * c].to_vec();
    let data: Vec<T> = plan
        .layout(order)
        .into_iter()
        .flat_map(|slot| match slot {
            Slot::Shallow(s) => row(shallow, s),
            Slot::Deep(g) => row(deep, g),
        })
        .collect();
    Tensor::new(&[5 * hw, c], data)
}

/// Reads the deep slots back in ascending deep order.
pub fn extract_deep<T: Real>(longseq: &Tensor<T>, plan: &PairingPlan, order: PairOrder) -> Result<Tensor<T>> {
    let (l, c) = longseq.dims2()?;
    if l != plan.seq_len() {
        return Err(dim_err!("sequence of length {l}, plan expects {}", plan.seq_len()));
    }
    let data = (0..plan.groups.len())
        .flat_map(|g| {
            let p = plan.deep_position(g, order);
            longseq.data()[p * c..(p + 1) * c].iter().copied()
        })
        .collect();
    Tensor::new(&[plan.groups.len(), c], data)
}

/// Weights for deep width `C`; shallow features carry `C/2` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CauWeights<T> {
    /// `C -> C`
    pub deep_proj: Linear<T>,
    pub deep_dw: Tensor<T>,
    /// `C/2 -> C`
    pub shallow_proj: Linear<T>,
    pub shallow_dw: Tensor<T>,
    pub forward_ssm: S6Weights<T>,
    pub altered_ssm: S6Weights<T>,
    /// `C -> 2C`
    pub out_proj: Linear<T>,
    pub kernel: ScanKernel,
}

fn check_width(c: usize) -> Result<()> {
    if c < 2 || !c.is_multiple_of(2) {
        return Err(param_err!("deep width {c} must be even"));
    }
    Ok(())
}

impl<T: Real> CauWeights<T> {
    pub fn zeros(c: usize, n: usize) -> Result<Self> {
        check_width(c)?;
        Ok(Self {
            deep_proj: Linear::zeros(c, c),
            deep_dw: Tensor::zeros(&[3, 3, c]),
            shallow_proj: Linear::zeros(c / 2, c),
            shallow_dw: Tensor::zeros(&[3, 3, c]),
            forward_ssm: S6Weights::inert(c, n),
            altered_ssm: S6Weights::inert(c, n),
            out_proj: Linear::zeros(c, 2 * c),
            kernel: ScanKernel::Sequential,
        })
    }

    pub fn random(c: usize, n: usize, rng: &mut impl Rng) -> Result<Self> {
        check_width(c)?;
        Ok(Self {
            deep_proj: Linear::random(c, c, rng),
            deep_dw: random_kernels(c, rng),
            shallow_proj: Linear::random(c / 2, c, rng),
            shallow_dw: random_kernels(c, rng),
            forward_ssm: S6Weights::random(c, n, rng),
            altered_ssm: S6Weights::random(c, n, rng),
            out_proj: Linear::random(c, 2 * c, rng),
            kernel: ScanKernel::Sequential,
        })
    }

    pub fn width(&self) -> usize {
        self.deep_proj.in_dim()
    }
}

fn head<T: Real>(x: &Tensor<T>, proj: &Linear<T>, dw: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let c = proj.out_dim();
    let grid = proj.forward(x)?.reshape(&[h, w, c])?;
    depthwise_conv3x3(&grid, dw)?.reshape(&[h * w, c])
}

/// Upsamples `deep_in` (`[HW, C]`) onto the grid of `shallow_in`
/// (`[4HW, C/2]`) and adds `shallow_in`.
pub fn cau_upsample<T: Real>(
    deep_in: &Tensor<T>,
    shallow_in: &Tensor<T>,
    plan: &PairingPlan,
    w: &CauWeights<T>,
) -> Result<Tensor<T>> {
    let (h, wd) = plan.dims();
    let c = w.width();
    deep_in.expect_shape(&[h * wd, c], "deep input")?;
    shallow_in.expect_shape(&[4 * h * wd, c / 2], "shallow input")?;
    let deep = head(deep_in, &w.deep_proj, &w.deep_dw, h, wd)?;
    let shallow = head(shallow_in, &w.shallow_proj, &w.shallow_dw, 2 * h, 2 * wd)?;
    let branch = |order: PairOrder, ssm: &S6Weights<T>| -> Result<Tensor<T>> {
        let seq = cau_interleave(&deep, &shallow, plan, order)?;
        extract_deep(&s6_forward_with(&seq, ssm, w.kernel)?, plan, order)
    };
    let (fwd, alt) = rayon::join(
        || branch(PairOrder::Forward, &w.forward_ssm),
        || branch(PairOrder::Altered, &w.altered_ssm),
    );
    let merged = w.out_proj.forward(&fwd?.add(&alt?)?)?;
    pixel_shuffle_expand(&merged, h, wd)?.add(shallow_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::s6_forward;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn windows_on_the_doubled_grid() {
        assert_eq!(window_patches(0, 1), [0, 1, 2, 3]);
        assert_eq!(window_patches(0, 2), [0, 1, 4, 5]);
        assert_eq!(window_patches(3, 2), [10, 11, 14, 15]);
    }

    #[test]
    fn single_deep_patch() {
        let plan = build_pairing(1, 1, 0).unwrap();
        assert_eq!(
            plan.layout(PairOrder::Forward),
            vec![
                Slot::Shallow(0),
                Slot::Shallow(1),
                Slot::Shallow(2),
                Slot::Shallow(3),
                Slot::Deep(0)
            ]
        );
        assert_eq!(plan.layout(PairOrder::Forward), plan.layout(PairOrder::Altered));
    }

    #[test]
    fn window_shift_enumeration() {
        let plan = build_pairing_with(2, 2, 1, ShiftUnit::Window).unwrap();
        assert_eq!(
            plan.groups(),
            &[[2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15], [0, 1, 4, 5]]
        );
        assert_eq!(
            build_pairing_with(2, 2, 4, ShiftUnit::Window).unwrap(),
            build_pairing_with(2, 2, 0, ShiftUnit::Window).unwrap()
        );
    }

    #[test]
    fn patch_shift_enumeration() {
        // shallow stream in window order: 0 1 4 5 | 2 3 6 7 | 8 9 12 13 | 10 11 14 15
        let plan = build_pairing(2, 2, 1).unwrap();
        assert_eq!(
            plan.groups(),
            &[[1, 4, 5, 2], [3, 6, 7, 8], [9, 12, 13, 10], [11, 14, 15, 0]]
        );
        // four patches equal one window
        assert_eq!(
            build_pairing(2, 2, 4).unwrap().groups(),
            build_pairing_with(2, 2, 1, ShiftUnit::Window).unwrap().groups()
        );
        assert_eq!(
            build_pairing(2, 2, 16).unwrap().groups(),
            build_pairing(2, 2, 0).unwrap().groups()
        );
        assert!(build_pairing(0, 2, 0).is_err());
    }

    #[test]
    fn altered_swaps_two_subsequences() {
        let plan = build_pairing(1, 2, 0).unwrap();
        let deep = Tensor::<f64>::new(&[2, 1], vec![100.0, 200.0]).unwrap();
        let shallow = Tensor::from_fn(&[8, 1], |i| i as f64);
        let f = cau_interleave(&deep, &shallow, &plan, PairOrder::Forward).unwrap();
        let a = cau_interleave(&deep, &shallow, &plan, PairOrder::Altered).unwrap();
        assert_eq!(f.data(), &[0.0, 1.0, 4.0, 5.0, 100.0, 2.0, 3.0, 6.0, 7.0, 200.0]);
        assert_eq!(a.data(), &[2.0, 3.0, 6.0, 7.0, 200.0, 0.0, 1.0, 4.0, 5.0, 100.0]);
        assert_eq!(extract_deep(&a, &plan, PairOrder::Altered).unwrap(), deep);
        assert_eq!(extract_deep(&f, &plan, PairOrder::Forward).unwrap(), deep);
    }

    #[test]
    fn two_by_two_layout() {
        let plan = build_pairing(2, 2, 0).unwrap();
        let forward: Vec<Slot> = plan.layout(PairOrder::Forward);
        let expected_groups = [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]];
        for (g, group) in expected_groups.iter().enumerate() {
            for (j, s) in group.iter().enumerate() {
                assert_eq!(forward[5 * g + j], Slot::Shallow(*s));
            }
            assert_eq!(forward[5 * g + 4], Slot::Deep(g));
        }
        let altered = plan.layout(PairOrder::Altered);
        assert_eq!(&altered[..5], &forward[15..]);
    }

    #[test]
    fn extract_zeros_and_random() {
        let plan = build_pairing(2, 3, 3).unwrap();
        let z = Tensor::<f64>::zeros(&[30, 2]);
        assert!(extract_deep(&z, &plan, PairOrder::Forward)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seq = Tensor::from_fn(&[30, 2], |_| rng.gen_range(-1.0..1.0));
        let got = extract_deep(&seq, &plan, PairOrder::Altered).unwrap();
        for g in 0..6 {
            let p = 5 * (5 - g) + 4;
            assert_eq!(&got.data()[g * 2..g * 2 + 2], &seq.data()[p * 2..p * 2 + 2]);
        }
    }

    #[test]
    fn upsample_residual_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plan = build_pairing(2, 3, 0).unwrap();
        let deep = Tensor::from_fn(&[6, 4], |_| rng.gen_range(-1.0..1.0));
        let shallow = Tensor::from_fn(&[24, 2], |_| rng.gen_range(-1.0..1.0));
        let out = cau_upsample(&deep, &shallow, &plan, &CauWeights::zeros(4, 3).unwrap()).unwrap();
        assert_eq!(out, shallow);
        let mut w = CauWeights::<f64>::random(4, 3, &mut rng).unwrap();
        for lin in [&mut w.deep_proj, &mut w.shallow_proj, &mut w.out_proj] {
            lin.bias = Tensor::zeros(lin.bias.shape());
        }
        let out = cau_upsample(&Tensor::zeros(&[6, 4]), &Tensor::zeros(&[24, 2]), &plan, &w).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
        assert!(cau_upsample(&deep, &Tensor::zeros(&[20, 2]), &plan, &w).is_err());
        assert!(CauWeights::<f64>::zeros(3, 2).is_err());
    }

    #[test]
    fn single_patch_chain_of_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = CauWeights::<f64>::random(4, 3, &mut rng).unwrap();
        let plan = build_pairing(1, 1, 0).unwrap();
        let deep_in = Tensor::from_fn(&[1, 4], |_| rng.gen_range(-1.0..1.0));
        let shallow_in = Tensor::from_fn(&[4, 2], |_| rng.gen_range(-1.0..1.0));
        // on a 1x1 grid the depthwise conv only sees its centre tap; on 2x2 every
        // output sees all four inputs through the matching taps
        let centre = |k: &Tensor<f64>, ch: usize| k.data()[4 * 4 + ch];
        let dense = |row: &[f64], lin: &Linear<f64>| -> Vec<f64> {
            (0..lin.out_dim())
                .map(|o| {
                    lin.bias.data()[o]
                        + row
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * lin.weight.data()[i * lin.out_dim() + o])
                            .sum::<f64>()
                })
                .collect()
        };
        let d: Vec<f64> = dense(deep_in.data(), &w.deep_proj)
            .iter()
            .enumerate()
            .map(|(ch, v)| v * centre(&w.deep_dw, ch))
            .collect();
        let proj: Vec<Vec<f64>> = (0..4)
            .map(|p| dense(&shallow_in.data()[p * 2..p * 2 + 2], &w.shallow_proj))
            .collect();
        let mut s = vec![0.0; 16];
        for p in 0..4 {
            let (r, c) = (p / 2, p % 2);
            for q in 0..4 {
                let (qr, qc) = (q / 2, q % 2);
                let tap = (qr + 1 - r) * 3 + (qc + 1 - c);
                for ch in 0..4 {
                    s[p * 4 + ch] += w.shallow_dw.data()[tap * 4 + ch] * proj[q][ch];
                }
            }
        }
        let seq = Tensor::new(&[5, 4], s.iter().copied().chain(d.iter().copied()).collect()).unwrap();
        let yf = s6_forward(&seq, &w.forward_ssm).unwrap();
        let ya = s6_forward(&seq, &w.altered_ssm).unwrap();
        let summed: Vec<f64> = (0..4).map(|ch| yf.data()[16 + ch] + ya.data()[16 + ch]).collect();
        let merged = dense(&summed, &w.out_proj);
        let expected: Vec<f64> = (0..8).map(|i| merged[i] + shallow_in.data()[i]).collect();
        let out = cau_upsample(&deep_in, &shallow_in, &plan, &w).unwrap();
        assert_eq!(out.shape(), &[4, 2]);
        for (a, b) in out.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn plans_are_bijections(h in 1usize..6, w in 1usize..6, shift in 0usize..64, window in any::<bool>()) {
            let unit = if window { ShiftUnit::Window } else { ShiftUnit::Patch };
            let plan = build_pairing_with(h, w, shift, unit).unwrap();
            for order in [PairOrder::Forward, PairOrder::Altered] {
                let slots = plan.layout(order);
                prop_assert_eq!(slots.len(), 5 * h * w);
                let set: HashSet<Slot> = slots.iter().copied().collect();
                prop_assert_eq!(set.len(), slots.len());
                let in_range = slots.iter().all(|s| match s {
                    Slot::Shallow(i) => *i < 4 * h * w,
                    Slot::Deep(g) => *g < h * w,
                });
                prop_assert!(in_range);
            }
        }

        #[test]
        fn extract_inverts_interleave(h in 1usize..5, w in 1usize..5, shift in 0usize..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = build_pairing(h, w, shift).unwrap();
            let deep = Tensor::<f32>::from_fn(&[h * w, 3], |_| rng.gen_range(-1.0..1.0));
            let shallow = Tensor::<f32>::from_fn(&[4 * h * w, 3], |_| rng.gen_range(-1.0..1.0));
            for order in [PairOrder::Forward, PairOrder::Altered] {
                let seq = cau_interleave(&deep, &shallow, &plan, order).unwrap();
                prop_assert_eq!(extract_deep(&seq, &plan, order).unwrap(), deep.clone());
            }
        }
    }
}
