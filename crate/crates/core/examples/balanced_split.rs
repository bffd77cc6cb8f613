//! Group-balanced train/validation/test split of an imbalanced dataset.
//!
//! ```text
//! cargo run --example balanced_split -- [n_protected] [n_unprotected] [seed]
//! ```

use fairsketch::data::{balanced_split, Features, LabeledExample, SplitRatios};
use fairsketch::metrics::Group;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arg = |i: usize, default: u64| std::env::args().nth(i).map_or(Ok(default), |s| s.parse());
    let (protected, unprotected, seed) = (arg(1, 400)? as usize, arg(2, 600)? as usize, arg(3, 0)?);
    let examples: Vec<LabeledExample> = (0..protected + unprotected)
        .map(|i| LabeledExample {
            id: format!("ex{i:06}"),
            features: Features::Vector(vec![i as f64]),
            label: i % 2,
            z: if i < protected { Group::Protected } else { Group::Unprotected },
        })
        .collect();

    let split = balanced_split(&examples, seed, SplitRatios::default())?;
    println!("{:<8}{:>8}{:>8}{:>8}", "split", "total", "z=1", "z=0");
    for (name, part) in ["train", "val", "test", "dropped"].iter().zip([&split.train, &split.val, &split.test, &split.discarded]) {
        let p = part.iter().filter(|e| e.z == Group::Protected).count();
        println!("{name:<8}{:>8}{p:>8}{:>8}", part.len(), part.len() - p);
    }
    Ok(())
}
