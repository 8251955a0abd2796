//! Parsing a labeled CSV, splitting it and corrupting labels with asymmetric noise.

use aggmatch::data::{inject_noise, parse_csv, split, NoiseSpec, SplitSpec};

fn main() -> aggmatch::Result<()> {
    let mut text = String::from("label,f0,f1\n");
    for i in 0..40 {
        let y = i % 4;
        text.push_str(&format!("{y},{},{}\n", y as f64 + 0.01 * i as f64, 1.0 - 0.02 * i as f64));
    }
    let data = parse_csv(&text)?;
    println!("{} instances, dimension {}, {} classes", data.len(), data.dim(), data.classes());

    let (labeled, unlabeled) = split(&data, &SplitSpec { labels_per_class: 3, seed: 1 })?;
    println!("labeled per class {:?}, unlabeled {}", labeled.class_counts(), unlabeled.len());

    let noise = NoiseSpec { mapping: vec![(0, 1), (1, 0)], rate: 0.5, seed: 2 };
    let noisy = inject_noise(&labeled, &noise)?;
    println!("labels before {:?}", labeled.labels());
    println!("labels after  {:?}", noisy.labels());

    match parse_csv("label,f0\n0,0.1\n1\n") {
        Err(e) => println!("malformed input: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
