//! Receptive field of stacked dilated 3-tap convolutions.

use airway::nnmath::receptive_field;

fn main() -> airway::Result<()> {
    for dilations in [vec![], vec![1], vec![1, 3], vec![1, 3, 5], vec![1, 1, 2, 3, 5]] {
        println!("{:<16} -> {}", format!("{dilations:?}"), receptive_field(&dilations)?);
    }
    Ok(())
}
