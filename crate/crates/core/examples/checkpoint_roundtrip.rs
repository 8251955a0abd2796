//! Saves a short run to a checkpoint, reads it back and inspects the queue.

use std::io::BufReader;

use aggmatch::experiment::{prepare, train_run, ExperimentConfig};
use aggmatch::trainer::{accuracy, Checkpoint, Method};

fn main() -> aggmatch::Result<()> {
    let mut cfg = ExperimentConfig::blobs_benchmark(std::env::temp_dir());
    cfg.train.iterations = 200;
    cfg.train.eval_every = 200;
    let data = prepare(&cfg, 0)?;
    let (_, trainer) = train_run(&cfg, Method::Aggmatch, 0, &data, |_, _| Ok(()))?;

    let mut bytes = Vec::new();
    trainer.write_checkpoint(&mut bytes)?;
    println!("checkpoint: {} bytes", bytes.len());
    let restored = Checkpoint::read_from(&mut BufReader::new(bytes.as_slice()))?;

    assert_eq!(&restored.model, trainer.model());
    println!("iteration {}, accuracy {:.4}", restored.iteration, accuracy(&restored.model, &data.test)?.0);
    for class in 0..restored.queue.classes() {
        let entries = restored.queue.class_entries(class);
        let labeled = entries.iter().filter(|e| e.source == aggmatch::queue::EntrySource::Labeled).count();
        println!("class {class}: {} entries, {labeled} from labeled items", entries.len());
    }
    Ok(())
}
