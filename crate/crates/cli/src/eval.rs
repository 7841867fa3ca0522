use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use sodscan_core::eval::{evaluate, MetricReport, THRESHOLDS};

use crate::maps::{is_map_file, load_map};
use crate::{write_file, CmdResult};

#[derive(Args, Debug)]
pub struct EvalArgs {
    pred_dir: PathBuf,
    gt_dir: PathBuf,
    /// JSON report with per-image scores, mean curves and warnings.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct ImageRow {
    name: String,
    s_measure: f64,
    f_measure_max: f64,
    e_measure_max: f64,
    mae: f64,
}

#[derive(Serialize)]
struct Mean {
    s_measure: f64,
    f_measure_max: f64,
    e_measure_max: f64,
    mae: f64,
    /// maxima of the threshold curves averaged over images
    f_measure_max_of_mean_curve: f64,
    e_measure_max_of_mean_curve: f64,
}

#[derive(Serialize)]
struct Report {
    images: Vec<ImageRow>,
    mean: Mean,
    mean_f_curve: Vec<f64>,
    mean_e_curve: Vec<f64>,
    warnings: Vec<String>,
}

fn map_names(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut names = BTreeSet::new();
    for e in entries {
        let path = e?.path();
        if path.is_file() && is_map_file(&path) {
            names.insert(
                path.file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| anyhow!("non-UTF-8 file name"))?
                    .to_string(),
            );
        }
    }
    Ok(names)
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn run(a: EvalArgs) -> CmdResult {
    let preds = map_names(&a.pred_dir)?;
    let gts = map_names(&a.gt_dir)?;
    let mut warnings = Vec::new();
    for n in preds.difference(&gts) {
        warnings.push(format!("prediction {n} has no ground truth"));
    }
    for n in gts.difference(&preds) {
        warnings.push(format!("ground truth {n} has no prediction"));
    }
    let names: Vec<&String> = preds.intersection(&gts).collect();
    if names.is_empty() {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        usage!(
            "no file names in common between {} and {}",
            a.pred_dir.display(),
            a.gt_dir.display()
        );
    }

    let reports: Vec<MetricReport> = names
        .par_iter()
        .map(|n| -> anyhow::Result<MetricReport> {
            let pred = load_map(&a.pred_dir.join(n))?;
            let gt = load_map(&a.gt_dir.join(n))?;
            evaluate(&pred, &gt).with_context(|| format!("scoring {n}"))
        })
        .collect::<anyhow::Result<_>>()?;

    let k = reports.len() as f64;
    let mean_of = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let mean_curve = |f: fn(&MetricReport) -> &Vec<f64>| -> Vec<f64> {
        (0..THRESHOLDS)
            .map(|t| reports.iter().map(|r| f(r)[t]).sum::<f64>() / k)
            .collect()
    };
    let mean_f_curve = mean_curve(|r| &r.f_curve);
    let mean_e_curve = mean_curve(|r| &r.e_curve);
    let mean = Mean {
        s_measure: mean_of(|r| r.s_measure),
        f_measure_max: mean_of(|r| r.f_measure_max),
        e_measure_max: mean_of(|r| r.e_measure_max),
        mae: mean_of(|r| r.mae),
        f_measure_max_of_mean_curve: mean_f_curve.iter().copied().fold(0.0, f64::max),
        e_measure_max_of_mean_curve: mean_e_curve.iter().copied().fold(0.0, f64::max),
    };

    println!("name,s_measure,f_measure_max,e_measure_max,mae");
    let images: Vec<ImageRow> = names
        .iter()
        .zip(&reports)
        .map(|(n, r)| ImageRow {
            name: n.to_string(),
            s_measure: r.s_measure,
            f_measure_max: r.f_measure_max,
            e_measure_max: r.e_measure_max,
            mae: r.mae,
        })
        .collect();
    for r in &images {
        println!(
            "{},{},{},{},{}",
            r.name,
            fmt(r.s_measure),
            fmt(r.f_measure_max),
            fmt(r.e_measure_max),
            fmt(r.mae)
        );
    }
    println!();
    println!(
        "{:<8} {:>10} {:>10} {:>10} {:>10}",
        "images", "S", "maxF", "maxE", "MAE"
    );
    println!(
        "{:<8} {:>10} {:>10} {:>10} {:>10}",
        images.len(),
        fmt(mean.s_measure),
        fmt(mean.f_measure_max),
        fmt(mean.e_measure_max),
        fmt(mean.mae)
    );
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !warnings.is_empty() {
        eprintln!("{} warning(s)", warnings.len());
    }
    if let Some(path) = &a.report {
        let report = Report {
            images,
            mean,
            mean_f_curve,
            mean_e_curve,
            warnings,
        };
        write_file(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}
