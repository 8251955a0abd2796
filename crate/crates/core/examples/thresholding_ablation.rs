//! Entropy weighting of pseudo labels against hard uncertainty thresholds.

use aggmatch::confidence::ConfidenceMode;
use aggmatch::experiment::{prepare, train_run, ExperimentConfig};
use aggmatch::trainer::Method;

fn main() -> aggmatch::Result<()> {
    let mut base = ExperimentConfig::blobs_benchmark(std::env::temp_dir());
    base.train.iterations = 1500;
    base.train.eval_every = 1500;
    base.train.store_labeled_onehot = true;
    let data = prepare(&base, 0)?;

    let modes = [
        ConfidenceMode::Weighting,
        ConfidenceMode::Thresholding { tau_u: 0.1 },
        ConfidenceMode::Thresholding { tau_u: 0.5 },
        ConfidenceMode::Thresholding { tau_u: 1.0 },
        ConfidenceMode::Thresholding { tau_u: 1.5 },
    ];
    for mode in modes {
        let mut cfg = base.clone();
        cfg.train.confidence = mode;
        let (r, _) = train_run(&cfg, Method::Aggmatch, 0, &data, |_, _| Ok(()))?;
        let last = &r.evaluations.last().expect("final evaluation").1;
        println!(
            "{:<28} accuracy {:.4}  mean confidence {:.3}  pl precision {:.3}",
            format!("{mode:?}"),
            r.final_test_accuracy,
            last.mean_confidence,
            last.pl_precision
        );
    }
    Ok(())
}
