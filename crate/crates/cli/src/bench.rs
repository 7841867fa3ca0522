use std::time::Instant;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sodscan_core::ssm::{parallel_scan, recurrence_seq, DiscreteSsm};
use sodscan_core::{Real, Tensor};

use crate::{CmdResult, Precision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Seq,
    Par,
    Both,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long = "L", alias = "l", default_value_t = 4096)]
    l: usize,
    #[arg(long = "D", alias = "d", default_value_t = 8)]
    d: usize,
    #[arg(long = "N", alias = "n", default_value_t = 16)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    mode: Mode,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    dtype: Precision,
}

/// Stable random instance: `Abar` in `(0.05, 0.99)`, the rest in `(-1, 1)`.
fn instance<T: Real>(
    seed: u64,
    l: usize,
    d: usize,
    n: usize,
) -> anyhow::Result<(DiscreteSsm<T>, Tensor<T>, Tensor<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize], lo: f64, hi: f64| Tensor::<T>::from_fn(shape, |_| T::lit(rng.gen_range(lo..hi)));
    let p = DiscreteSsm::new(
        r(&[l, d, n], 0.05, 0.99),
        r(&[l, d, n], -1.0, 1.0),
        r(&[l, n], -1.0, 1.0),
        r(&[d], -1.0, 1.0),
    )?;
    let x = r(&[l, d], -1.0, 1.0);
    let h0 = Tensor::zeros(&[d, n]);
    Ok((p, x, h0))
}

fn checksum<T: Real>(y: &Tensor<T>) -> f64 {
    y.data().iter().map(|v| v.as_f64()).sum()
}

fn run_typed<T: Real>(a: &BenchArgs) -> CmdResult {
    let (p, x, h0) = instance::<T>(a.seed, a.l, a.d, a.n)?;
    let modes: &[Mode] = match a.mode {
        Mode::Both => &[Mode::Seq, Mode::Par],
        Mode::Seq => &[Mode::Seq],
        Mode::Par => &[Mode::Par],
    };
    let mut outputs = Vec::new();
    for &mode in modes {
        let mut times = Vec::with_capacity(a.repeat);
        let mut y = None;
        for _ in 0..a.repeat {
            let start = Instant::now();
            let (out, _) = match mode {
                Mode::Par => parallel_scan(&p, &x, &h0)?,
                _ => recurrence_seq(&p, &x, &h0)?,
            };
            times.push(start.elapsed().as_secs_f64() * 1e3);
            y = Some(out);
        }
        let y = y.expect("repeat is positive");
        let name = if mode == Mode::Par { "par" } else { "seq" };
        times.sort_by(f64::total_cmp);
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        eprintln!(
            "{name}: min {:.3} ms, median {:.3} ms, mean {mean:.3} ms",
            times[0],
            times[times.len() / 2]
        );
        println!(
            "mode={name} L={} D={} N={} checksum={:.9e}",
            a.l,
            a.d,
            a.n,
            checksum(&y)
        );
        outputs.push(y);
    }
    if let [seq, par] = outputs.as_slice() {
        println!("max_abs_diff={:.3e}", seq.max_abs_diff(par)?.as_f64());
    }
    Ok(())
}

pub fn run(a: BenchArgs) -> CmdResult {
    if a.repeat == 0 {
        usage!("--repeat must be at least 1");
    }
    if a.l == 0 || a.d == 0 || a.n == 0 {
        usage!("--L, --D and --N must be positive");
    }
    match a.dtype {
        Precision::F32 => run_typed::<f32>(&a),
        Precision::F64 => run_typed::<f64>(&a),
    }
}
