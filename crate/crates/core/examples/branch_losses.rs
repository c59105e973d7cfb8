//! Compare the four training losses for a perfect and a damaged prediction.

use airway::nnmath::{all_losses, BranchMode, CenterlineVariant, LossWeights, Smooth};
use airway::synthgen::{generate_tree, perturb, Perturbation, TreeSpec};
use airway::tree::label_branches;
use airway::volume::Role;

fn main() -> airway::Result<()> {
    let tree = generate_tree(&TreeSpec {
        depth: 2,
        ..TreeSpec::default()
    })?;
    let labels = label_branches(&tree.mask, &tree.table)?;
    let perfect = tree.mask.clone().into_role(Role::Probability)?;
    // a missing distal branch hurts the branch term much more than dice
    let damaged = perturb(&tree.mask, &tree.table, Perturbation::DropBranch(7))?.into_role(Role::Probability)?;

    for (name, pred) in [("perfect", &perfect), ("drop branch 7", &damaged)] {
        for mode in [BranchMode::PerBranchMean, BranchMode::Global] {
            let l = all_losses(
                pred,
                &labels,
                LossWeights::default(),
                mode,
                CenterlineVariant::SkeletonProduct,
                0.5,
                Smooth::default(),
            )?;
            println!(
                "{name:<14} {:<14} dice {:.4} bce {:.4} branch {:.4} centerline {:.4} total {:.4}",
                format!("{mode:?}"),
                l.dice,
                l.bce,
                l.branch,
                l.centerline,
                l.total
            );
        }
    }
    Ok(())
}
