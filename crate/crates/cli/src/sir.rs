use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use sodscan_core::io::{encode_pgm, encode_smbt, read_smbt};
use sodscan_core::sir::{sir_trace, SirWeights, DEFAULT_KERNELS, DEFAULT_PRIOR_POOL};
use sodscan_core::{SaliencyMap, Tensor};

use crate::maps::load_map;
use crate::{write_file, CmdResult};

#[derive(Args, Debug)]
pub struct SirArgs {
    /// Coarse saliency map (PGM or PNG).
    map: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Flat weight vector as an SMBT tensor; unit weights when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// `[H, W, C]` SMBT features; the map broadcast over channels when omitted.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Feature channels when no features are given.
    #[arg(long, default_value_t = 4)]
    channels: usize,
    /// Odd edge-kernel sizes.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KERNELS.to_vec())]
    kernels: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_PRIOR_POOL)]
    prior_pool: usize,
}

fn mean(m: &SaliencyMap) -> f64 {
    m.values().iter().sum::<f64>() / m.len() as f64
}

pub fn run(a: SirArgs) -> CmdResult {
    let map = load_map(&a.map)?;
    let f4: Tensor<f64> = match &a.features {
        Some(p) => read_smbt(p)
            .with_context(|| format!("reading {}", p.display()))?
            .into_real(),
        None => {
            if a.channels == 0 {
                usage!("--channels must be positive");
            }
            let c = a.channels;
            Tensor::from_fn(&[map.height(), map.width(), c], |i| map.values()[i / c])
        }
    };
    let c = f4.dims3()?.2;
    let weights = match &a.weights {
        Some(p) => {
            let t = read_smbt(p).with_context(|| format!("reading {}", p.display()))?;
            SirWeights::from_any(t, a.kernels.clone(), a.prior_pool)?
        }
        None => {
            let unit = SirWeights::<f64>::unit(c);
            SirWeights::new(unit.boundary, unit.object, unit.head, a.kernels.clone(), a.prior_pool)?
        }
    };
    let trace = sir_trace(&f4, &map, &weights)?;

    let mut outputs: Vec<(String, &SaliencyMap)> =
        trace.edges.iter().map(|(k, g)| (format!("edge_k{k}.pgm"), g)).collect();
    outputs.push(("prior.pgm".into(), &trace.prior));
    outputs.push(("reverse.pgm".into(), &trace.reverse));
    outputs.push(("refined.pgm".into(), &trace.s_c_plus));
    println!("file,mean,max");
    for (name, m) in &outputs {
        write_file(&a.out.join(name), encode_pgm(m))?;
        println!(
            "{name},{:.6},{:.6}",
            mean(m),
            m.values().iter().copied().fold(0.0, f64::max)
        );
    }
    write_file(&a.out.join("f4_plus.smbt"), encode_smbt(&trace.f4_plus))?;
    println!(
        "f4_plus.smbt,{:.6},{:.6}",
        trace.f4_plus.sum() / trace.f4_plus.len() as f64,
        trace.f4_plus.data().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}
