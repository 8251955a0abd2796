//! Consensus confidence: vote over per-subset hypotheses, weight by exp(-entropy).

use aggmatch::confidence::{confidence_weight, uncertainty_gate, vote};
use aggmatch::numerics::ClassDistribution;

fn main() -> aggmatch::Result<()> {
    let h = |p: Vec<f64>| ClassDistribution::new(p).unwrap();
    let cases = [
        ("unanimous", vec![h(vec![0.6, 0.3, 0.1]); 4]),
        ("three to one", vec![h(vec![0.6, 0.3, 0.1]), h(vec![0.5, 0.4, 0.1]), h(vec![0.7, 0.2, 0.1]), h(vec![0.3, 0.6, 0.1])]),
        ("split", vec![h(vec![0.6, 0.3, 0.1]), h(vec![0.3, 0.6, 0.1]), h(vec![0.2, 0.2, 0.6]), h(vec![0.5, 0.4, 0.1])]),
    ];
    println!("{:<14} {:<20} {:>8} {:>8} {:>10}", "case", "votes", "entropy", "weight", "gate(0.5)");
    for (name, hypotheses) in cases {
        let votes = vote(&hypotheses)?;
        println!(
            "{name:<14} {:<20} {:>8.4} {:>8.4} {:>10}",
            format!("{:?}", votes.counts()),
            votes.entropy(),
            confidence_weight(&votes),
            uncertainty_gate(&votes, 0.5)
        );
    }
    Ok(())
}
