//! Monte Carlo dropout over a toy predictor: each pass drops input voxels
//! with a seeded keep mask, and the spread across passes is the uncertainty.

use airway::nnmath::{dropout_forward, dropout_mask};
use airway::synthgen::generate_tube;
use airway::uncertainty::{aggregate, run_mc, uncertainty_mask};
use airway::volume::{Role, Volume};

fn main() -> airway::Result<()> {
    let input = generate_tube([2, 8, 8], [13, 8, 8], 3.0, [16, 16, 16])?.into_role(Role::Probability)?;
    let keep = 0.8;
    let mut predictor = |x: &Volume, seed: u64| -> Result<Volume, String> {
        let m = dropout_mask(x.shape(), keep, seed).map_err(|e| e.to_string())?;
        dropout_forward(x, &m, keep).map_err(|e| e.to_string())
    };
    let stack = run_mc(&mut predictor, &input, 20, 42)?;
    let summary = aggregate(&stack)?;
    let stats = summary.stats(stack.n_drop());
    println!(
        "n_drop {}  mean variance {:.5}  max variance {:.5}",
        stats.n_drop, stats.mean_variance, stats.max_variance
    );
    for tau in [0.0, 0.05, 0.1] {
        let mask = uncertainty_mask(&summary, tau)?;
        println!("tau {tau:<4}: {} uncertain voxels of {}", mask.foreground_count(), input.foreground_count());
    }
    Ok(())
}
