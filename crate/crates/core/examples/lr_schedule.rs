//! The warmup/decay schedule and AdamW on a one-dimensional quadratic.
//!
//!     cargo run --example lr_schedule

use embalign::optim::{adamw_step, lr_at, AdamWConfig, AdamWState, ScheduleConfig};

fn main() -> embalign::Result<()> {
    let sched = ScheduleConfig::new(3e-4, 50, 1580)?;
    for step in [0, 1, 24, 49, 50, 500, 1000, 1579, 1580] {
        println!("step {step:>5}  lr {:.3e}", lr_at(step, &sched)?);
    }

    // minimize (p - 3)^2 from p = 0
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let mut p = vec![0.0f64];
    let mut state = AdamWState::new();
    for t in 0..200 {
        let g = vec![2.0 * (p[0] - 3.0)];
        adamw_step(&mut [("p".to_string(), &mut p[..])], &[("p".to_string(), &g[..])], &mut state, 0.1, &cfg)?;
        if t % 40 == 39 {
            println!("adamw step {:>3}  p = {:.6}", t + 1, p[0]);
        }
    }
    Ok(())
}
