//! Generate a synthetic depth-3 tree and print its construction table.

use airway::synthgen::{generate_tree, TreeSpec};
use airway::tree::tree_stats;

fn main() -> airway::Result<()> {
    let spec = TreeSpec::default();
    let tree = generate_tree(&spec)?;
    let stats = tree_stats(&tree.table);
    println!(
        "volume {:?}: {} mask voxels, {} centerline voxels",
        spec.volume_shape,
        tree.mask.foreground_count(),
        tree.centerline.foreground_count()
    );
    println!(
        "{} branches, total length {:.1} mm, max generation {}",
        stats.branch_count, stats.total_length_mm, stats.max_generation
    );
    for b in &tree.table.branches {
        println!(
            "  branch {:>2}  parent {:>4}  gen {}  {:>5.1} mm  children {:?}",
            b.id,
            b.parent.map_or("-".to_string(), |p| p.to_string()),
            b.generation,
            b.length_mm,
            b.children
        );
    }
    Ok(())
}
