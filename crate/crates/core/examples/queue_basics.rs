//! The class-balanced queue: confidence gate, FIFO eviction and even partitioning.

use aggmatch::numerics::{ClassDistribution, FeatureVector};
use aggmatch::queue::{ClassBalancedQueue, EntrySource, QueueEntry};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn entry(p: Vec<f64>, step: u64) -> QueueEntry {
    let feature = FeatureVector::new(vec![step as f64, 1.0]).unwrap();
    QueueEntry::new(feature, ClassDistribution::new(p).unwrap(), EntrySource::Unlabeled, step)
}

fn main() -> aggmatch::Result<()> {
    let mut queue = ClassBalancedQueue::new(3, 4, 0.95)?;

    println!("gate at 0.95:");
    for (p, step) in [(vec![0.97, 0.02, 0.01], 0), (vec![0.94, 0.05, 0.01], 1), (vec![0.01, 0.95, 0.04], 2)] {
        let admitted = queue.enqueue_unlabeled(entry(p.clone(), step));
        println!("  {p:?} -> {}", if admitted { "admitted" } else { "rejected" });
    }

    for step in 3..9 {
        queue.enqueue_unlabeled(entry(vec![0.99, 0.005, 0.005], step));
    }
    let steps: Vec<u64> = queue.class_entries(0).iter().map(|e| e.step).collect();
    println!("class 0 keeps the newest {} entries: steps {steps:?}", queue.capacity());

    let label_entry = QueueEntry::new(
        FeatureVector::new(vec![0.0, 1.0])?,
        ClassDistribution::new(vec![0.4, 0.3, 0.3])?,
        EntrySource::Labeled,
        9,
    );
    queue.enqueue_labeled(label_entry, 2)?;
    println!("fill per class after a labeled entry for class 2: {:?}", queue.fill());
    println!("ready for M=1: {}, M=2: {}", queue.ready(1), queue.ready(2));

    let partition = queue.partition(2, &mut ChaCha8Rng::seed_from_u64(0))?;
    for (m, subset) in partition.subsets().iter().enumerate() {
        let steps: Vec<u64> = subset.iter().map(|e| e.step).collect();
        println!("subset {m}: steps {steps:?}");
    }
    Ok(())
}
