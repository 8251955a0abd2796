//! Aggregating a query's class distribution from similar queue entries.

use aggmatch::aggregation::{aggregate, similarity, AggregationConfig, CandidatePool, PreparedQuery, Query};
use aggmatch::numerics::{ClassDistribution, FeatureVector};
use aggmatch::queue::{EntrySource, QueueEntry};

fn main() -> aggmatch::Result<()> {
    let candidates: Vec<QueueEntry> = [
        (vec![1.0, 0.1], vec![0.9, 0.1]),
        (vec![0.9, 0.3], vec![0.8, 0.2]),
        (vec![0.1, 1.0], vec![0.1, 0.9]),
        (vec![-0.2, 0.9], vec![0.05, 0.95]),
    ]
    .into_iter()
    .map(|(f, p)| {
        QueueEntry::new(FeatureVector::new(f).unwrap(), ClassDistribution::new(p).unwrap(), EntrySource::Unlabeled, 0)
    })
    .collect();

    // An ambiguous prediction whose feature sits near the class-0 cluster.
    let query = Query {
        feature: FeatureVector::new(vec![0.95, 0.2])?,
        distribution: ClassDistribution::new(vec![0.55, 0.45])?,
    };

    for temperature in [1.0, 0.05] {
        let cfg = AggregationConfig { temperature, ..AggregationConfig::default() };
        let pool = CandidatePool::new(candidates.iter())?;
        let weights = pool.attention(&PreparedQuery::new(&query), &cfg)?;
        println!("temperature {temperature}:");
        for (c, w) in candidates.iter().zip(&weights) {
            println!("  candidate {:?}: similarity {:+.4}, weight {:.4}", c.feature.values(), similarity(&query, c, &cfg), w);
        }
        let p = aggregate(&query, candidates.iter(), &cfg)?;
        println!("  aggregated distribution {:?}", p.probs());
    }
    Ok(())
}
