//! Compare analytic gradients of the fairness-regularized loss against
//! central finite differences.
//!
//! ```text
//! cargo run --example gradient_check -- [seeds]
//! ```

use fairsketch::loss::LossWeights;
use fairsketch::metrics::Group;
use fairsketch::model::{gradient_check, init_params, LabeledBatch, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    for dims in [vec![4, 8, 1], vec![6, 4, 4, 2]] {
        let mut worst = 0.0f64;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = 16;
            let data = (0..rows * dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let batch = LabeledBatch {
                features: Matrix::new(rows, dims[0], data)?,
                labels: (0..rows).map(|_| rng.random_range(0..2)).collect(),
                z: (0..rows).map(|i| Group::ALL[i % 2]).collect(),
            };
            // nonzero biases keep ReLU inputs away from the kink at 0
            let mut params = init_params(&dims, seed)?;
            for layer in &mut params.layers {
                layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            }
            for lambda in [0.0, 0.5, 1.0] {
                worst = worst.max(gradient_check(&params, &batch, &LossWeights::new(lambda))?);
            }
        }
        println!("{dims:?}: max relative error {worst:.3e} over {seeds} seeds");
    }
    Ok(())
}
