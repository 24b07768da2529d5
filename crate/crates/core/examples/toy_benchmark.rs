//! Runs the scaled-down end-to-end benchmark and prints held-out scores.
//!
//! `cargo run --release -p snaphdr-core --example toy_benchmark [iterations]`

use snaphdr::toy::{loss_endpoints, run_toy_benchmark, ToyConfig};

fn main() -> snaphdr::Result<()> {
    let mut cfg = ToyConfig::default();
    if let Some(n) = std::env::args().nth(1) {
        cfg.train.iterations = n.parse().expect("iteration count");
    }
    let r = run_toy_benchmark(&cfg, &mut |s| eprintln!("{s}"))?;
    for (name, s) in [("baseline", r.baseline), ("ln", r.ln), ("linear", r.linear)] {
        println!("{name:<9} cpsnr {:8.3}  gcpsnr {:8.3}  lnmse {:.6}", s.cpsnr, s.gcpsnr, s.lnmse);
    }
    for (name, l) in [("ldr", &r.ldr_losses), ("ln", &r.ln_losses), ("linear", &r.linear_losses)] {
        let (a, b) = loss_endpoints(l, 50);
        println!("{name:<9} loss {a:.6} -> {b:.6}");
    }
    println!("elapsed {:.0}s", r.elapsed.as_secs_f64());
    Ok(())
}
