//! Trains AggMatch and a supervised baseline on the blobs benchmark with
//! four labels per class and prints test accuracy as training goes.

use aggmatch::experiment::{prepare, train_run, ExperimentConfig};
use aggmatch::trainer::Method;

fn main() -> aggmatch::Result<()> {
    let mut cfg = ExperimentConfig::blobs_benchmark(std::env::temp_dir());
    cfg.train.iterations = 1000;
    cfg.train.eval_every = 250;
    cfg.train.store_labeled_onehot = true;
    let data = prepare(&cfg, 0)?;
    println!("{} labeled, {} unlabeled, {} test items", data.labeled.len(), data.unlabeled.len(), data.test.len());

    for method in [Method::Supervised, Method::Aggmatch] {
        let (result, trainer) = train_run(&cfg, method, 0, &data, |report, eval| {
            if let Some(m) = eval {
                println!(
                    "  {:>10} iter {:>5}  test acc {:.3}  pl precision {:.3}  recall {:.3}  queue fill {:?}",
                    method.as_str(),
                    report.iteration,
                    m.test_accuracy,
                    m.pl_precision,
                    m.pl_recall,
                    report.queue_fill
                );
            }
            Ok(())
        })?;
        println!(
            "{}: final accuracy {:.3} in {:.1} s ({} queue entries)",
            method.as_str(),
            result.final_test_accuracy,
            result.wall_clock_seconds,
            trainer.queue().len()
        );
    }
    Ok(())
}
