//! AggMatch, FixMatch and supervised-only training over several seeds.
//!
//! Usage: `cargo run --release --example compare_methods [iterations] [seeds]`

use aggmatch::experiment::{mean_std, prepare, train_run, ExperimentConfig};
use aggmatch::trainer::Method;

fn main() -> aggmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map_or(1500, |a| a.parse().expect("iterations"));
    let seeds: u64 = args.next().map_or(3, |a| a.parse().expect("seed count"));

    let mut cfg = ExperimentConfig::blobs_benchmark(std::env::temp_dir());
    cfg.train.iterations = iterations;
    cfg.train.eval_every = iterations;
    cfg.train.store_labeled_onehot = true;

    let methods = [Method::Aggmatch, Method::Fixmatch, Method::Supervised];
    let mut accuracy = vec![Vec::new(); methods.len()];
    for seed in 0..seeds {
        let data = prepare(&cfg, seed)?;
        for (i, &method) in methods.iter().enumerate() {
            let (r, _) = train_run(&cfg, method, seed, &data, |_, _| Ok(()))?;
            println!("seed {seed} {:>10}: {:.4}", method.as_str(), r.final_test_accuracy);
            accuracy[i].push(r.final_test_accuracy);
        }
    }
    for (method, accs) in methods.iter().zip(&accuracy) {
        let (mean, std) = mean_std(accs);
        println!("{:>10}: {:.2} ± {:.2}", method.as_str(), 100.0 * mean, 100.0 * std);
    }
    Ok(())
}
