use clap::Args;
use sodscan_core::ssm::gradcheck::{check_gradients, GradInstance, FD_STEP, FD_TOLERANCE};
use sodscan_core::ssm::ssm_backward;

use crate::{CmdResult, Failure};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Operation whose backward pass is checked.
    #[arg(long, default_value = "ssm")]
    op: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random instances, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 1)]
    instances: u64,
    #[arg(long = "L", alias = "l", default_value_t = 32)]
    l: usize,
    #[arg(long = "D", alias = "d", default_value_t = 2)]
    d: usize,
    #[arg(long = "N", alias = "n", default_value_t = 4)]
    n: usize,
    /// Use a zero output cotangent.
    #[arg(long)]
    zero_dy: bool,
    /// Test hook: perturb the analytic dx before comparing.
    #[arg(long, hide = true)]
    corrupt: bool,
}

pub const OPS: &[&str] = &["ssm"];

pub fn run(a: GradcheckArgs) -> CmdResult {
    if !OPS.contains(&a.op.as_str()) {
        usage!("unknown op {:?}; supported: {}", a.op, OPS.join(", "));
    }
    if a.l == 0 || a.d == 0 || a.n == 0 || a.instances == 0 {
        usage!("sizes and --instances must be positive");
    }
    println!("instance,param,rel_error,max_abs_error,status");
    let mut failures = 0;
    for k in 0..a.instances {
        let seed = a.seed.wrapping_add(k);
        let mut inst = GradInstance::random(seed, a.l, a.d, a.n);
        if a.zero_dy {
            inst.dy = inst.dy.map(|_| 0.0);
        }
        let mut grads = ssm_backward(&inst.params, &inst.x, &inst.h0, &inst.dy)?;
        if a.corrupt {
            grads.dx.data_mut()[0] += 1.0;
        }
        for row in check_gradients(&inst, &grads, FD_STEP)? {
            let status = if row.passed() { "pass" } else { "FAIL" };
            failures += usize::from(!row.passed());
            println!(
                "{seed},{},{:.3e},{:.3e},{status}",
                row.name, row.rel_error, row.max_abs_error
            );
        }
    }
    if failures > 0 {
        return Err(Failure::Check(format!(
            "{failures} gradient(s) above relative error {FD_TOLERANCE:e}"
        )));
    }
    Ok(())
}
