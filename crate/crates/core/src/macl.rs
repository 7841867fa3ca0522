//! Three-stage modality curriculum with rehearsal.
//!
//! Stage 1 trains on RGB-only sets. Stage 2 adds RGB plus one auxiliary
//! modality and replays stage-1 samples at 10%. Stage 3 adds the tri-modal
//! sets and replays RGB at 10% and dual-modal at 30%. Batches are drawn slot
//! by slot from a seeded ChaCha stream, so a draw is a pure function of
//! `(plan, stage, batch, seed)`.
//!
//! [`randomized_quantization`] is the augmentation used alongside the
//! schedule, with its perturbation clamped inside salient pixels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::fusion::Modality;
use crate::scan_order::BinaryMask;
use crate::tensor::{Real, Tensor};

pub const STAGE2_REHEARSAL_RATE: f64 = 0.10;
pub const STAGE3_RGB_RATE: f64 = 0.10;
pub const STAGE3_DUAL_RATE: f64 = 0.30;
pub const DEFAULT_RQ_BINS: usize = 8;
pub const DEFAULT_RQ_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageClass {
    RgbOnly,
    Dual,
    Tri,
}

impl StageClass {
    pub fn name(self) -> &'static str {
        match self {
            StageClass::RgbOnly => "rgb-only",
            StageClass::Dual => "dual",
            StageClass::Tri => "tri",
        }
    }

    /// Stage at which sets of this class first become eligible.
    pub fn stage(self) -> u8 {
        match self {
            StageClass::RgbOnly => 1,
            StageClass::Dual => 2,
            StageClass::Tri => 3,
        }
    }
}

/// One training set. Anything with two or more auxiliary modalities is tri.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub id: String,
    pub modalities: Vec<Modality>,
    pub size: usize,
}

impl DatasetManifest {
    pub fn new(id: impl Into<String>, modalities: Vec<Modality>, size: usize) -> Result<Self> {
        let m = Self {
            id: id.into(),
            modalities,
            size,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Plan("manifest id is empty".into()));
        }
        if !self.modalities.contains(&Modality::Rgb) {
            return Err(Error::Plan(format!(
                "manifest {:?}: modalities must include rgb",
                self.id
            )));
        }
        let mut sorted = self.modalities.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.modalities.len() {
            return Err(Error::Plan(format!("manifest {:?}: repeated modality", self.id)));
        }
        if self.size == 0 {
            return Err(Error::Plan(format!("manifest {:?}: size must be at least 1", self.id)));
        }
        Ok(())
    }

    pub fn stage_class(&self) -> StageClass {
        match self.modalities.len() {
            1 => StageClass::RgbOnly,
            2 => StageClass::Dual,
            _ => StageClass::Tri,
        }
    }
}

/// Training sets in the order they are used by the reference setup. Sizes
/// approximate the published training splits.
pub fn reference_roster() -> Vec<DatasetManifest> {
    use Modality::*;
    let entries: [(&str, &[Modality], usize); 9] = [
        ("duts", &[Rgb], 10553),
        ("njud", &[Rgb, Depth], 1485),
        ("nlpr", &[Rgb, Depth], 700),
        ("dutlf-d", &[Rgb, Depth], 800),
        ("vt5000", &[Rgb, Thermal], 2500),
        ("davis", &[Rgb, Flow], 2000),
        ("davsod", &[Rgb, Flow], 8500),
        ("vdt-2048", &[Rgb, Depth, Thermal], 1000),
        ("dvisal-dedup", &[Rgb, Depth, Flow], 6800),
    ];
    entries
        .iter()
        .map(|(id, m, size)| DatasetManifest {
            id: id.to_string(),
            modalities: m.to_vec(),
            size: *size,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    New,
    ReplayRgb,
    ReplayDual,
}

impl SourceTag {
    pub fn name(self) -> &'static str {
        match self {
            SourceTag::New => "new",
            SourceTag::ReplayRgb => "replay-rgb",
            SourceTag::ReplayDual => "replay-dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub class: StageClass,
    pub rate: f64,
}

impl Replay {
    pub fn tag(&self) -> SourceTag {
        match self.class {
            StageClass::RgbOnly => SourceTag::ReplayRgb,
            _ => SourceTag::ReplayDual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    /// Ids of the sets first introduced in this stage.
    pub eligible: Vec<String>,
    pub replay: Vec<Replay>,
    pub epochs: Option<u32>,
}

impl StagePlan {
    pub fn new_rate(&self) -> f64 {
        1.0 - self.replay.iter().map(|r| r.rate).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub manifests: Vec<DatasetManifest>,
    pub stages: Vec<StagePlan>,
}

pub fn build_stage_plan(manifests: &[DatasetManifest]) -> Result<SchedulePlan> {
    build_stage_plan_with(manifests, [None; 3])
}

/// Stage plan with per-stage epoch budgets.
pub fn build_stage_plan_with(manifests: &[DatasetManifest], epochs: [Option<u32>; 3]) -> Result<SchedulePlan> {
    for m in manifests {
        m.validate()?;
    }
    let mut ids: Vec<&str> = manifests.iter().map(|m| m.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Plan(format!("duplicate manifest id {:?}", w[0])));
    }
    if !manifests.iter().any(|m| m.stage_class() == StageClass::RgbOnly) {
        return Err(Error::Plan("no rgb-only manifest to anchor stage 1".into()));
    }
    let eligible = |class: StageClass| -> Vec<String> {
        manifests
            .iter()
            .filter(|m| m.stage_class() == class)
            .map(|m| m.id.clone())
            .collect()
    };
    let stages = vec![
        StagePlan {
            stage: 1,
            eligible: eligible(StageClass::RgbOnly),
            replay: vec![],
            epochs: epochs[0],
        },
        StagePlan {
            stage: 2,
            eligible: eligible(StageClass::Dual),
            replay: vec![Replay {
                class: StageClass::RgbOnly,
                rate: STAGE2_REHEARSAL_RATE,
            }],
            epochs: epochs[1],
        },
        StagePlan {
            stage: 3,
            eligible: eligible(StageClass::Tri),
            replay: vec![
                Replay {
                    class: StageClass::RgbOnly,
                    rate: STAGE3_RGB_RATE,
                },
                Replay {
                    class: StageClass::Dual,
                    rate: STAGE3_DUAL_RATE,
                },
            ],
            epochs: epochs[2],
        },
    ];
    Ok(SchedulePlan {
        manifests: manifests.to_vec(),
        stages,
    })
}

impl SchedulePlan {
    pub fn stage(&self, stage: u8) -> Result<&StagePlan> {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .ok_or_else(|| param_err!("stage must be 1, 2 or 3, got {stage}"))
    }

    fn manifest(&self, id: &str) -> &DatasetManifest {
        self.manifests
            .iter()
            .find(|m| m.id == id)
            .expect("plan ids come from its manifests")
    }

    /// Sample pool of the sets introduced in `stage`.
    pub fn new_pool(&self, stage: u8) -> Result<Pool> {
        let s = self.stage(stage)?;
        Ok(Pool::new(
            format!("stage {stage} new data"),
            s.eligible.iter().map(|id| self.manifest(id)),
        ))
    }

    pub fn rehearsal_buffer(&self, stage: u8) -> Result<RehearsalBuffer> {
        self.stage(stage)?;
        let prior = |class: StageClass| {
            Pool::new(
                format!("{} rehearsal", class.name()),
                self.manifests
                    .iter()
                    .filter(|m| m.stage_class() == class && class.stage() < stage),
            )
        };
        Ok(RehearsalBuffer {
            rgb: prior(StageClass::RgbOnly),
            dual: prior(StageClass::Dual),
        })
    }
}

/// Concatenated sample identities of a group of sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    name: String,
    segments: Vec<(String, usize)>,
    total: usize,
}

impl Pool {
    fn new<'a>(name: String, manifests: impl Iterator<Item = &'a DatasetManifest>) -> Self {
        let segments: Vec<(String, usize)> = manifests.map(|m| (m.id.clone(), m.size)).collect();
        let total = segments.iter().map(|s| s.1).sum();
        Self { name, segments, total }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// The `i`-th `(manifest id, sample index)` in concatenation order.
    pub fn get(&self, mut i: usize) -> Option<(&str, usize)> {
        for (id, size) in &self.segments {
            if i < *size {
                return Some((id, i));
            }
            i -= size;
        }
        None
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.segments
            .iter()
            .flat_map(|(id, size)| (0..*size).map(move |i| (id.as_str(), i)))
    }
}

/// Every sample of every earlier stage, grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct RehearsalBuffer {
    pub rgb: Pool,
    pub dual: Pool,
}

impl RehearsalBuffer {
    pub fn pool(&self, class: StageClass) -> Option<&Pool> {
        match class {
            StageClass::RgbOnly => Some(&self.rgb),
            StageClass::Dual => Some(&self.dual),
            StageClass::Tri => None,
        }
    }

    pub fn len(&self) -> usize {
        self.rgb.len() + self.dual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Draw {
    pub id: String,
    pub index: usize,
    pub source: SourceTag,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleOptions {
    /// Replacement replay rates, in the order of the stage's replay list.
    pub rates: Option<Vec<f64>>,
    /// Fixed per-source counts (largest remainder) in shuffled slots instead
    /// of independent per-slot draws.
    pub exact_counts: bool,
}

pub fn sample_batch(plan: &SchedulePlan, stage: u8, batch: usize, seed: u64) -> Result<Vec<Draw>> {
    sample_batch_with(plan, stage, batch, seed, &SampleOptions::default())
}

pub fn sample_batch_with(
    plan: &SchedulePlan,
    stage: u8,
    batch: usize,
    seed: u64,
    options: &SampleOptions,
) -> Result<Vec<Draw>> {
    let sp = plan.stage(stage)?;
    let rates: Vec<f64> = match &options.rates {
        Some(r) if r.len() != sp.replay.len() => {
            return Err(param_err!(
                "stage {stage} has {} replay sources, {} rates given",
                sp.replay.len(),
                r.len()
            ))
        }
        Some(r) => r.clone(),
        None => sp.replay.iter().map(|r| r.rate).collect(),
    };
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || rates.iter().sum::<f64>() > 1.0 + 1e-12 {
        return Err(param_err!(
            "replay rates {rates:?} must lie in [0, 1] and sum to at most 1"
        ));
    }
    let buffer = plan.rehearsal_buffer(stage)?;
    let new_pool = plan.new_pool(stage)?;
    let mut sources: Vec<(SourceTag, f64, &Pool)> = Vec::new();
    for (r, &rate) in sp.replay.iter().zip(&rates) {
        sources.push((r.tag(), rate, buffer.pool(r.class).expect("replay classes have pools")));
    }
    sources.push((SourceTag::New, (1.0 - rates.iter().sum::<f64>()).max(0.0), &new_pool));
    for (_, rate, pool) in &sources {
        if *rate > 0.0 && pool.is_empty() {
            return Err(Error::Sampling(format!(
                "stage {stage}: pool {:?} is empty",
                pool.name()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots: Vec<usize> = if options.exact_counts {
        let mut counts: Vec<usize> = sources.iter().map(|s| (s.1 * batch as f64).floor() as usize).collect();
        let mut order: Vec<usize> = (0..sources.len()).collect();
        let frac = |i: usize| sources[i].1 * batch as f64 - counts[i] as f64;
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        // the remainders sum to fewer slots than there are sources
        let left = batch.saturating_sub(counts.iter().sum());
        for &i in order.iter().filter(|&&i| sources[i].1 > 0.0).take(left) {
            counts[i] += 1;
        }
        let mut slots: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
            .collect();
        slots.shuffle(&mut rng);
        slots
    } else {
        (0..batch)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, s) in sources.iter().enumerate() {
                    acc += s.1;
                    if u < acc && s.1 > 0.0 {
                        return i;
                    }
                }
                sources.len() - 1
            })
            .collect()
    };
    slots
        .into_iter()
        .map(|i| {
            let (tag, _, pool) = sources[i];
            if pool.is_empty() {
                return Err(Error::Sampling(format!(
                    "stage {stage}: pool {:?} is empty",
                    pool.name()
                )));
            }
            let (id, index) = pool.get(rng.gen_range(0..pool.len())).expect("index below pool length");
            Ok(Draw {
                id: id.to_string(),
                index,
                source: tag,
            })
        })
        .collect()
}

/// How quantization intervals and their outputs are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RqMode {
    /// Random split points, random output inside each interval.
    Random,
    /// Evenly spaced split points, interval midpoints as outputs.
    Midpoint,
}

/// Per-channel randomized quantization of `x: [H, W, C]`. On mask-true pixels
/// the result is clamped to within `epsilon` of the input.
pub fn randomized_quantization<T: Real>(
    x: &Tensor<T>,
    mask: &BinaryMask,
    bins: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Tensor<T>> {
    randomized_quantization_with(x, mask, bins, epsilon, seed, RqMode::Random)
}

pub fn randomized_quantization_with<T: Real>(
    x: &Tensor<T>,
    mask: &BinaryMask,
    bins: usize,
    epsilon: f64,
    seed: u64,
    mode: RqMode,
) -> Result<Tensor<T>> {
    if bins < 2 {
        return Err(param_err!("randomized quantization needs at least 2 bins, got {bins}"));
    }
    if !(epsilon >= 0.0) {
        return Err(param_err!("epsilon must be non-negative, got {epsilon}"));
    }
    let (h, w, c) = x.dims3()?;
    if (mask.height(), mask.width()) != (h, w) {
        return Err(dim_err!("{}x{} mask for a {h}x{w} input", mask.height(), mask.width()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src = x.data();
    let mut out = src.to_vec();
    for ch in 0..c {
        let values = || (0..h * w).map(|p| src[p * c + ch].as_f64());
        let lo = values().fold(f64::INFINITY, f64::min);
        let hi = values().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            continue;
        }
        let (edges, outputs) = quantizer(lo, hi, bins, mode, &mut rng);
        for p in 0..h * w {
            let v = src[p * c + ch].as_f64();
            let k = interval_of(&edges, v);
            let q = T::lit(outputs[k]);
            out[p * c + ch] = if mask.bits()[p] {
                clamp_near(q, src[p * c + ch], epsilon)
            } else {
                q
            };
        }
    }
    Tensor::new(x.shape(), out)
}

/// `q` limited to `|q - v| <= epsilon` as evaluated in `T`. A clamp that
/// rounds past the bound falls back to `v`.
fn clamp_near<T: Real>(q: T, v: T, epsilon: f64) -> T {
    let eps = T::lit(epsilon);
    if (q - v).abs() <= eps {
        return q;
    }
    let clamped = q.max(v - eps).min(v + eps);
    if (clamped - v).abs() <= eps {
        clamped
    } else {
        v
    }
}

/// Interval edges `lo = e_0 <= ... <= e_bins = hi` and one output per interval.
pub fn quantizer(lo: f64, hi: f64, bins: usize, mode: RqMode, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(lo);
    match mode {
        RqMode::Random => {
            let mut cuts: Vec<f64> = (0..bins - 1).map(|_| rng.gen_range(lo..hi)).collect();
            cuts.sort_by(f64::total_cmp);
            edges.extend(cuts);
        }
        RqMode::Midpoint => edges.extend((1..bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64)),
    }
    edges.push(hi);
    let outputs = edges
        .windows(2)
        .map(|e| match mode {
            RqMode::Random if e[0] < e[1] => rng.gen_range(e[0]..e[1]),
            _ => 0.5 * (e[0] + e[1]),
        })
        .collect();
    (edges, outputs)
}

/// Index of the interval holding `v`; the top edge belongs to the last one.
pub fn interval_of(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].partition_point(|&e| e <= v).min(bins - 1)
}
