//! Two moons with every label: a sanity check that the generator is separable.

use aggmatch::data::{synth, AugmentationSpec, SynthKind, SynthSpec};
use aggmatch::model::Architecture;
use aggmatch::trainer::{accuracy, Method, TrainConfig, Trainer};

fn main() -> aggmatch::Result<()> {
    let spec = SynthSpec { kind: SynthKind::Moons, n: 2000, classes: 2, dim: 2, noise: 0.1, spread: 1.0, seed: 0 };
    let (labeled, unlabeled) = synth(&spec)?.presplit();
    let cfg = TrainConfig { method: Method::Supervised, iterations: 1500, lr: 0.1, labeled_batch: 64, ..TrainConfig::default() };
    let aug = AugmentationSpec::Vector { weak_sigma: 0.0, strong_sigma: 0.0, dropout: 0.0 };
    let mut trainer = Trainer::new(cfg, Architecture::new(2, vec![32, 32], 2)?, aug, labeled.clone(), &unlabeled)?;
    for _ in 0..1500 {
        trainer.train_step()?;
    }
    let (acc, per_class) = accuracy(trainer.model(), &labeled)?;
    println!("train accuracy {acc:.4}, per class {per_class:?}");
    Ok(())
}
