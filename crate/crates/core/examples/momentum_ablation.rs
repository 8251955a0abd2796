//! Queue entries from a momentum model versus the live model, with a small
//! queue (L = 64).

use aggmatch::experiment::{prepare, train_run, ExperimentConfig};
use aggmatch::trainer::Method;

fn main() -> aggmatch::Result<()> {
    let mut base = ExperimentConfig::blobs_benchmark(std::env::temp_dir());
    base.train.iterations = 1500;
    base.train.eval_every = 1500;
    base.train.queue_capacity = 64;
    base.train.store_labeled_onehot = true;

    for momentum in [0.0, 0.9, 0.99, 0.999] {
        let mut cfg = base.clone();
        cfg.train.momentum = momentum;
        let mut accs = Vec::new();
        for seed in 0..2 {
            let data = prepare(&cfg, seed)?;
            accs.push(train_run(&cfg, Method::Aggmatch, seed, &data, |_, _| Ok(()))?.0.final_test_accuracy);
        }
        println!("λ_m = {momentum:<5}  accuracy per seed {accs:.4?}");
    }
    Ok(())
}
