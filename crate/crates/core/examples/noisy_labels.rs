//! Asymmetric label noise: a quarter of the labels of classes 0 and 2 are
//! flipped to classes 1 and 3. Compares how far each method falls.

use aggmatch::data::NoiseSpec;
use aggmatch::experiment::{prepare, train_run, ExperimentConfig};
use aggmatch::trainer::Method;

fn accuracy(cfg: &ExperimentConfig, method: Method, seeds: u64) -> aggmatch::Result<f64> {
    let mut total = 0.0;
    for seed in 0..seeds {
        let data = prepare(cfg, seed)?;
        total += train_run(cfg, method, seed, &data, |_, _| Ok(()))?.0.final_test_accuracy;
    }
    Ok(total / seeds as f64)
}

fn main() -> aggmatch::Result<()> {
    let seeds = 2;
    let mut clean = ExperimentConfig::blobs_benchmark(std::env::temp_dir());
    clean.train.iterations = 1500;
    clean.train.eval_every = 1500;
    clean.train.store_labeled_onehot = true;
    let mut noisy = clean.clone();
    noisy.noise = Some(NoiseSpec { mapping: vec![(0, 1), (2, 3)], rate: 0.25, seed: 7 });

    let data = prepare(&noisy, 0)?;
    let flipped = data.labeled.labels().iter().zip(prepare(&clean, 0)?.labeled.labels()).filter(|(a, b)| a != b).count();
    println!("seed 0: {flipped} of {} labels corrupted", data.labeled.len());

    for method in [Method::Aggmatch, Method::Fixmatch] {
        let (c, n) = (accuracy(&clean, method, seeds)?, accuracy(&noisy, method, seeds)?);
        println!("{:>9}: clean {:.4}, noisy {:.4}, drop {:.2} points", method.as_str(), c, n, 100.0 * (c - n));
    }
    Ok(())
}
