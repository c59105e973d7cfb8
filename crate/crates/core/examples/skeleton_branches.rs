//! Thin a synthetic tree, split the centerline into branches and label the mask.

use airway::morphology::skeletonize;
use airway::synthgen::{generate_tree, TreeSpec};
use airway::tree::{build_skeleton_graph, decompose_branches, label_branches, RootPolicy};

fn main() -> airway::Result<()> {
    let spec = TreeSpec {
        depth: 2,
        seed: 11,
        ..TreeSpec::default()
    };
    let tree = generate_tree(&spec)?;
    let skeleton = skeletonize(&tree.mask)?;
    let graph = build_skeleton_graph(&skeleton)?;
    let endpoints = graph.degrees().iter().filter(|d| **d == 1).count();
    println!(
        "skeleton: {} voxels, {} edges, {} endpoints",
        graph.len(),
        graph.edge_count(),
        endpoints
    );

    let table = decompose_branches(&graph, tree.mask.spacing(), RootPolicy::MinZ)?;
    println!("recovered {} branches (constructed {})", table.len(), tree.table.len());
    let labels = label_branches(&tree.mask, &table)?;
    for b in &table.branches {
        let size = labels.data().iter().filter(|l| **l == b.id as f32).count();
        println!(
            "  branch {:>2} gen {} parent {:?}: {:>3} centerline voxels, {:>5} labeled voxels",
            b.id,
            b.generation,
            b.parent,
            b.voxels.len(),
            size
        );
    }
    Ok(())
}
