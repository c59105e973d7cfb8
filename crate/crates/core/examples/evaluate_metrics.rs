//! Score a few damaged predictions against a synthetic ground truth.

use airway::metrics::{aggregate_reports, evaluate_case, reports_to_csv, DEFAULT_THETA};
use airway::synthgen::{generate_tree, perturb, Perturbation, TreeSpec};
use airway::volume::Role;

fn main() -> airway::Result<()> {
    let tree = generate_tree(&TreeSpec {
        depth: 2,
        ..TreeSpec::default()
    })?;
    let gt = &tree.mask;
    let cases = [
        ("exact", gt.clone()),
        ("drop-4", perturb(gt, &tree.table, Perturbation::DropBranch(4))?),
        ("eroded", perturb(gt, &tree.table, Perturbation::ErodeOnce)?),
        ("noise", perturb(gt, &tree.table, Perturbation::AddNoiseComponent { size: 300, seed: 1 })?),
    ];
    let mut reports = Vec::new();
    for (id, pred) in cases {
        let prob = pred.into_role(Role::Probability)?;
        reports.push(evaluate_case(id, &prob, gt, 0.5, false, DEFAULT_THETA)?);
    }
    print!("{}", reports_to_csv(&reports)?);
    println!("{}", aggregate_reports(&reports)?.summary());

    // largest-component post-processing removes the noise blob
    let noisy = reports.iter().find(|r| r.case_id == "noise").unwrap();
    let prob = perturb(gt, &tree.table, Perturbation::AddNoiseComponent { size: 300, seed: 1 })?.into_role(Role::Probability)?;
    let cleaned = evaluate_case("noise+cc", &prob, gt, 0.5, true, DEFAULT_THETA)?;
    println!("precision {:.4} -> {:.4} with post-processing", noisy.precision, cleaned.precision);
    Ok(())
}
