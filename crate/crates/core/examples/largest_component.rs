//! Add a detached false-positive blob to a tree and remove it again.

use airway::morphology::{connected_components, keep_largest_component};
use airway::synthgen::{generate_tree, perturb, Perturbation, TreeSpec};
use airway::volume::Connectivity;

fn main() -> airway::Result<()> {
    let tree = generate_tree(&TreeSpec::default())?;
    let noisy = perturb(&tree.mask, &tree.table, Perturbation::AddNoiseComponent { size: 150, seed: 5 })?;
    for conn in [Connectivity::Face6, Connectivity::Edge18, Connectivity::Vertex26] {
        let cc = connected_components(&noisy, conn)?;
        println!("{conn:?}: {} components, sizes {:?}", cc.count, cc.volumes);
    }
    let cleaned = keep_largest_component(&noisy, Connectivity::Vertex26)?;
    println!(
        "kept {} of {} voxels; identical to the clean tree: {}",
        cleaned.foreground_count(),
        noisy.foreground_count(),
        cleaned == tree.mask
    );
    Ok(())
}
