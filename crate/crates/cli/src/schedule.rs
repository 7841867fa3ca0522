use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use sodscan_core::macl::{build_stage_plan_with, sample_batch_with, DatasetManifest, SampleOptions, SourceTag};

use crate::{write_file, CmdResult};

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    /// JSON array of `{id, modalities[], size}`.
    manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    stage: u8,
    /// Slots per batch.
    #[arg(long, default_value_t = 2)]
    batch: usize,
    /// Batches to draw; batch `b` uses seed `seed + b`.
    #[arg(long, default_value_t = 0)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-stage epoch budgets, e.g. `10,15,15`.
    #[arg(long, value_delimiter = ',')]
    epochs: Vec<u32>,
    /// Replacement replay rates for the chosen stage.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Exact per-source counts in each batch instead of per-slot draws.
    #[arg(long)]
    exact: bool,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of every sampled slot.
    #[arg(long)]
    trace: Option<PathBuf>,
}

pub fn parse_manifests(text: &str) -> anyhow::Result<Vec<DatasetManifest>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let manifests: Vec<DatasetManifest> = serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow!("manifest schema violation at {}: {}", e.path(), e.inner()))?;
    for (i, m) in manifests.iter().enumerate() {
        m.validate()
            .map_err(|e| anyhow!("manifest schema violation at [{i}]: {e}"))?;
    }
    Ok(manifests)
}

pub fn run(a: ScheduleArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifests = parse_manifests(&text)?;
    let epochs = match a.epochs.as_slice() {
        [] => [None; 3],
        [x, y, z] => [Some(*x), Some(*y), Some(*z)],
        _ => usage!("--epochs takes exactly three values"),
    };
    let plan = build_stage_plan_with(&manifests, epochs)?;
    let json = serde_json::to_string_pretty(&plan)? + "\n";
    match &a.out {
        Some(p) => write_file(p, json)?,
        None => print!("{json}"),
    }
    if a.draws == 0 {
        return Ok(());
    }
    if a.batch == 0 {
        usage!("--batch must be positive");
    }
    let options = SampleOptions {
        rates: a.rates.clone(),
        exact_counts: a.exact,
    };
    let mut counts = [0usize; 3];
    let mut trace = String::from("batch,slot,id,index,source\n");
    for b in 0..a.draws {
        let draws = sample_batch_with(&plan, a.stage, a.batch, a.seed.wrapping_add(b as u64), &options)?;
        for (slot, d) in draws.iter().enumerate() {
            counts[d.source as usize] += 1;
            if a.trace.is_some() {
                let _ = writeln!(trace, "{b},{slot},{},{},{}", d.id, d.index, d.source.name());
            }
        }
    }
    if let Some(p) = &a.trace {
        write_file(p, trace)?;
    }
    let total = (a.draws * a.batch) as f64;
    println!("source,count,frequency");
    for tag in [SourceTag::New, SourceTag::ReplayRgb, SourceTag::ReplayDual] {
        let n = counts[tag as usize];
        println!("{},{n},{:.4}", tag.name(), n as f64 / total);
    }
    Ok(())
}
