use std::time::Instant;

use bandit_lab::{run_single, BanditInstance, PolicySpec, SeedSpec};

fn main() {
    let inst = BanditInstance::bernoulli(&[0.6, 0.5]).unwrap();
    let spec = PolicySpec::kl_ucb(1.0).unwrap();
    let start = Instant::now();
    let runs = 10;
    let mut total = 0.0;
    for r in 0..runs {
        total += run_single(&inst, &spec, 100_000, SeedSpec::new(1, r))
            .unwrap()
            .final_regret();
    }
    println!(
        "{:?} per 1e5-round run, mean regret {}",
        start.elapsed() / runs as u32,
        total / runs as f64
    );
}
