//! Paired training runs with and without the fairness penalty on synthetic
//! data whose second feature is a noisy proxy of the sensitive attribute.
//!
//! ```text
//! cargo run --release --example fair_training -- [seeds]
//! ```

use fairsketch::data::{balanced_split, SplitRatios};
use fairsketch::model::{evaluate, train, LabeledBatch, OptimizerKind, TrainConfig};
use fairsketch::synthetic::proxy_dataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    println!("{:>4} {:>10} {:>10} {:>10} {:>10}", "seed", "spd λ=0", "spd λ=1", "acc λ=0", "acc λ=1");
    for seed in 0..seeds {
        let examples = proxy_dataset(4000, 5, seed);
        let splits = balanced_split(&examples, seed, SplitRatios::default())?;
        let test = LabeledBatch::from_examples(&splits.test)?;
        let mut row = Vec::new();
        for lambda in [0.0, 1.0] {
            let config = TrainConfig {
                layer_dims: vec![5, 16, 1],
                lambda,
                spd_ideal: 0.0,
                positive_class: 1,
                learning_rate: 1e-3,
                batch_size: 64,
                epochs: 20,
                seed,
                optimizer: OptimizerKind::Adam,
            };
            let (params, _) = train(&splits, &config)?;
            row.push(evaluate(&params, &test, 1)?);
        }
        println!(
            "{seed:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            row[0].1, row[1].1, row[0].0, row[1].0
        );
    }
    Ok(())
}
