//! Multi-modal converters.
//!
//! [`mfm_converter`] concatenates per-modality sequences and runs one
//! selective SSM over them. The hub-and-spoke converter ([`hga_converter`])
//! initialises a hub from the mean of all modalities and lets it exchange
//! pixel-wise attention with one spoke per modality for `L` layers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::nn::{depthwise_conv3x3, random_kernels, relu, relu_tensor, Linear};
use crate::ssm::{s6_forward, S6Weights};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Depth,
    Flow,
    Thermal,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Rgb, Modality::Depth, Modality::Flow, Modality::Thermal];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Flow => "flow",
            Modality::Thermal => "thermal",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown modality {s:?}")))
    }
}

/// Same-shaped `[H, W, C]` features, one per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBundle<T> {
    features: Vec<Tensor<T>>,
    tags: Vec<Modality>,
}

impl<T: Real> ModalityBundle<T> {
    pub fn new(features: Vec<Tensor<T>>, tags: Vec<Modality>) -> Result<Self> {
        if features.is_empty() {
            return Err(dim_err!("a modality bundle needs at least one feature"));
        }
        if features.len() != tags.len() {
            return Err(dim_err!("{} features but {} tags", features.len(), tags.len()));
        }
        features[0].dims3()?;
        if features.iter().any(|f| f.shape() != features[0].shape()) {
            return Err(dim_err!("modality features differ in shape"));
        }
        Ok(Self { features, tags })
    }

    pub fn features(&self) -> &[Tensor<T>] {
        &self.features
    }

    pub fn tags(&self) -> &[Modality] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        self.features[0].shape()
    }
}

/// Per-modality `Linear -> DWConv` heads, the shared SSM and the output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct MfmWeights<T> {
    pub branches: Vec<(Linear<T>, Tensor<T>)>,
    pub ssm: S6Weights<T>,
    pub out_proj: Linear<T>,
}

impl<T: Real> MfmWeights<T> {
    pub fn random(modalities: usize, c: usize, n: usize, rng: &mut impl Rng) -> Self {
        let branches = (0..modalities)
            .map(|_| (Linear::random(c, c, rng), random_kernels(c, rng)))
            .collect();
        Self {
            branches,
            ssm: S6Weights::random(c, n, rng),
            out_proj: Linear::random(c, c, rng),
        }
    }
}

pub fn mfm_converter<T: Real>(bundle: &ModalityBundle<T>, w: &MfmWeights<T>) -> Result<Tensor<T>> {
    let m = bundle.len();
    if m < 2 {
        return Err(Error::Unsupported("a single modality bypasses the converter".into()));
    }
    if w.branches.len() != m {
        return Err(dim_err!("{m} modalities but {} converter branches", w.branches.len()));
    }
    let (h, wd, c) = bundle.features[0].dims3()?;
    let l = h * wd;
    let mut seq = Vec::with_capacity(m * l * c);
    for (f, (lin, dw)) in bundle.features.iter().zip(&w.branches) {
        seq.extend(depthwise_conv3x3(&lin.forward(f)?, dw)?.into_data());
    }
    let y = s6_forward(&Tensor::new(&[m * l, c], seq)?, &w.ssm)?;
    let mut sum = vec![T::zero(); l * c];
    for split in y.data().chunks_exact(l * c) {
        for (s, v) in sum.iter_mut().zip(split) {
            *s += *v;
        }
    }
    w.out_proj.forward(&Tensor::new(&[h, wd, c], sum)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgaWeights<T> {
    /// hub initialisation MLP, first layer
    pub hub_in: Linear<T>,
    /// hub initialisation MLP, second layer
    pub hub_out: Linear<T>,
    /// `W^l`, one per layer, shared by all nodes
    pub layers: Vec<Linear<T>>,
    /// attention vector over `[W query, W node]`, length `2C`
    pub attn: Tensor<T>,
}

pub const DEFAULT_HGA_LAYERS: usize = 3;

impl<T: Real> HgaWeights<T> {
    pub fn new(hub_in: Linear<T>, hub_out: Linear<T>, layers: Vec<Linear<T>>, attn: Tensor<T>) -> Result<Self> {
        let c = hub_in.in_dim();
        if hub_in.out_dim() != c || hub_out.in_dim() != c || hub_out.out_dim() != c {
            return Err(dim_err!("hub MLP must map {c} channels to {c}"));
        }
        if layers.iter().any(|l| l.in_dim() != c || l.out_dim() != c) {
            return Err(dim_err!("layer projections must be {c} -> {c}"));
        }
        attn.expect_shape(&[2 * c], "attention vector")?;
        Ok(Self {
            hub_in,
            hub_out,
            layers,
            attn,
        })
    }

    pub fn random(c: usize, layers: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((2 * c) as f64).sqrt();
        Self {
            hub_in: Linear::random(c, c, rng),
            hub_out: Linear::random(c, c, rng),
            layers: (0..layers).map(|_| Linear::random(c, c, rng)).collect(),
            attn: Tensor::from_fn(&[2 * c], |_| T::lit(rng.gen_range(-bound..=bound))),
        }
    }

    pub fn channels(&self) -> usize {
        self.hub_in.in_dim()
    }
}

/// `MLP(mean of the modality features)`.
pub fn hga_init_hub<T: Real>(bundle: &ModalityBundle<T>, w: &HgaWeights<T>) -> Result<Tensor<T>> {
    let mut mean = bundle.features[0].clone();
    for f in &bundle.features[1..] {
        mean = mean.add(f)?;
    }
    let mean = mean.scale(T::one() / T::lit(bundle.len() as f64));
    w.hub_out.forward(&relu_tensor(&w.hub_in.forward(&mean)?))
}

/// Pixel-wise softmax over nodes `j` of `relu(a . [W query, W node_j])`.
///
/// `query` and `nodes` are already projected by `W`. Returns
/// `[nodes.len(), H, W]`.
pub fn hga_attention<T: Real>(query: &Tensor<T>, nodes: &[&Tensor<T>], attn: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, wd, c) = query.dims3()?;
    attn.expect_shape(&[2 * c], "attention vector")?;
    if nodes.iter().any(|n| n.shape() != query.shape()) {
        return Err(dim_err!("attention nodes differ in shape from the query"));
    }
    let (a_q, a_n) = attn.data().split_at(c);
    let hw = h * wd;
    let mut out = vec![T::zero(); nodes.len() * hw];
    let mut logits = vec![T::zero(); nodes.len()];
    for p in 0..hw {
        let q = &query.data()[p * c..(p + 1) * c];
        let q_term: T = q.iter().zip(a_q).map(|(x, a)| *x * *a).sum();
        for (j, node) in nodes.iter().enumerate() {
            let v = &node.data()[p * c..(p + 1) * c];
            logits[j] = relu(q_term + v.iter().zip(a_n).map(|(x, a)| *x * *a).sum::<T>());
        }
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for e in logits.iter_mut() {
            *e = (*e - max).exp();
            total += *e;
        }
        for (j, e) in logits.iter().enumerate() {
            out[j * hw + p] = *e / total;
        }
    }
    Tensor::new(&[nodes.len(), h, wd], out)
}

fn weighted_sum<T: Real>(coeffs: &Tensor<T>, nodes: &[&Tensor<T>]) -> Tensor<T> {
    let (h, wd, c) = (nodes[0].shape()[0], nodes[0].shape()[1], nodes[0].shape()[2]);
    let hw = h * wd;
    Tensor::from_fn(&[h, wd, c], |i| {
        let p = i / c;
        relu(
            nodes
                .iter()
                .enumerate()
                .map(|(j, n)| coeffs.data()[j * hw + p] * n.data()[i])
                .sum::<T>(),
        )
    })
}

/// One synchronous update. The hub attends over itself and every spoke;
/// each spoke attends over the hub and itself.
pub fn hga_layer<T: Real>(
    hub: &Tensor<T>,
    spokes: &[Tensor<T>],
    proj: &Linear<T>,
    attn: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
    let w_hub = proj.forward(hub)?;
    let w_spokes = spokes.iter().map(|s| proj.forward(s)).collect::<Result<Vec<_>>>()?;
    let mut nodes: Vec<&Tensor<T>> = vec![&w_hub];
    nodes.extend(w_spokes.iter());
    let hub_next = weighted_sum(&hga_attention(&w_hub, &nodes, attn)?, &nodes);
    let spokes_next = w_spokes
        .iter()
        .map(|ws| {
            let pair = [&w_hub, ws];
            Ok(weighted_sum(&hga_attention(ws, &pair, attn)?, &pair))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((hub_next, spokes_next))
}

/// Hub initialisation followed by `w.layers.len()` layers; returns the final hub.
pub fn hga_converter<T: Real>(bundle: &ModalityBundle<T>, w: &HgaWeights<T>) -> Result<Tensor<T>> {
    let c = bundle.shape()[2];
    if c != w.channels() {
        return Err(dim_err!(
            "converter built for {} channels, features have {c}",
            w.channels()
        ));
    }
    let mut hub = hga_init_hub(bundle, w)?;
    let mut spokes = bundle.features.clone();
    for proj in &w.layers {
        (hub, spokes) = hga_layer(&hub, &spokes, proj, &w.attn)?;
    }
    Ok(hub)
}

/// Reference fusions used for comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineFusion<T> {
    /// channel concatenation then a `N*C -> C` projection
    ConcatConv(Linear<T>),
    /// elementwise mean
    AddPool,
}

pub fn baseline_fuse<T: Real>(bundle: &ModalityBundle<T>, kind: &BaselineFusion<T>) -> Result<Tensor<T>> {
    let (h, wd, c) = bundle.features[0].dims3()?;
    match kind {
        BaselineFusion::AddPool => {
            let mut sum = bundle.features[0].clone();
            for f in &bundle.features[1..] {
                sum = sum.add(f)?;
            }
            Ok(sum.scale(T::one() / T::lit(bundle.len() as f64)))
        }
        BaselineFusion::ConcatConv(lin) => {
            let m = bundle.len();
            let cat = Tensor::from_fn(&[h, wd, m * c], |i| {
                let (p, k) = (i / (m * c), i % (m * c));
                bundle.features[k / c].data()[p * c + k % c]
            });
            lin.forward(&cat)
        }
    }
}
