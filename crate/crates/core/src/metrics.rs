//! Overlap and tree-coverage metrics, per case and aggregated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{keep_largest_component, skeletonize};
use crate::tree::{build_skeleton_graph, decompose_branches, step_mm, BranchTable, RootPolicy};
use crate::volume::{threshold, Connectivity, Role, Spacing, Volume};

pub const DEFAULT_THETA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn confusion(pred: &Volume, gt: &Volume) -> Result<Counts> {
    pred.ensure_role(&[Role::Binary])?;
    gt.ensure_role(&[Role::Binary])?;
    pred.ensure_same_shape(gt)?;
    let mut c = Counts::default();
    for (p, g) in pred.data().iter().zip(gt.data()) {
        match (*p != 0.0, *g != 0.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`; two empty masks score 1.
pub fn dsc(pred: &Volume, gt: &Volume) -> Result<f64> {
    let c = confusion(pred, gt)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 { 1.0 } else { (2 * c.tp) as f64 / denom as f64 })
}

/// `TP / (TP + FP)`; an empty prediction scores 1 only against an empty GT.
pub fn precision(pred: &Volume, gt: &Volume) -> Result<f64> {
    let c = confusion(pred, gt)?;
    Ok(match (c.tp + c.fp, c.tp + c.fn_) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (p, _) => c.tp as f64 / p as f64,
    })
}

/// Length (mm) each centerline voxel stands for: the mean step length to its
/// 26-neighbors on the centerline, or the mean spacing if it has none.
pub fn centerline_weights(skeleton: &Volume, spacing: Spacing) -> Vec<(usize, f64)> {
    skeleton
        .foreground_indices()
        .into_iter()
        .map(|i| {
            let a = skeleton.unflatten(i);
            let steps: Vec<f64> = skeleton
                .neighbor_indices(i, Connectivity::Vertex26)
                .filter(|n| skeleton.is_foreground(*n))
                .map(|n| step_mm(a, skeleton.unflatten(n), spacing))
                .collect();
            let w = if steps.is_empty() {
                spacing.iter().sum::<f64>() / 3.0
            } else {
                steps.iter().sum::<f64>() / steps.len() as f64
            };
            (i, w)
        })
        .collect()
}

/// Fraction of GT centerline length that lies inside the prediction.
pub fn tree_detected(pred: &Volume, gt_skeleton: &Volume, spacing: Spacing) -> Result<f64> {
    pred.ensure_role(&[Role::Binary])?;
    gt_skeleton.ensure_role(&[Role::Binary])?;
    pred.ensure_same_shape(gt_skeleton)?;
    let weights = centerline_weights(gt_skeleton, spacing);
    if weights.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    let (mut hit, mut total) = (0.0f64, 0.0f64);
    for (i, w) in weights {
        total += w;
        if pred.is_foreground(i) {
            hit += w;
        }
    }
    Ok(hit / total)
}

/// Fraction of branches with at least `theta` of their centerline voxels in the prediction.
pub fn branch_detected(pred: &Volume, table: &BranchTable, theta: f64) -> Result<f64> {
    pred.ensure_role(&[Role::Binary])?;
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut detected = 0usize;
    for b in &table.branches {
        let mut inside = 0usize;
        for v in &b.voxels {
            if !pred.in_bounds(*v) {
                return Err(Error::IndexOutOfBounds {
                    index: *v,
                    shape: pred.shape(),
                });
            }
            if pred.get(*v) != 0.0 {
                inside += 1;
            }
        }
        if !b.voxels.is_empty() && inside as f64 >= theta * b.voxels.len() as f64 {
            detected += 1;
        }
    }
    Ok(detected as f64 / table.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case_id: String,
    pub dsc: f64,
    pub precision: f64,
    pub td: f64,
    pub bd: f64,
    pub theta: f64,
}

/// GT skeleton and branch table derived from a GT mask.
pub fn gt_reference(gt: &Volume) -> Result<(Volume, BranchTable)> {
    let skeleton = skeletonize(gt)?;
    let graph = build_skeleton_graph(&skeleton)?;
    let table = decompose_branches(&graph, gt.spacing(), RootPolicy::MinZ)?;
    Ok((skeleton, table))
}

pub fn evaluate_case(
    case_id: &str,
    pred_prob: &Volume,
    gt: &Volume,
    t: f32,
    postprocess: bool,
    theta: f64,
) -> Result<MetricsReport> {
    gt.ensure_role(&[Role::Binary])?;
    pred_prob.ensure_same_shape(gt)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta must be in [0,1], got {theta}")));
    }
    let mut pred = threshold(pred_prob, t)?;
    if postprocess {
        pred = match keep_largest_component(&pred, Connectivity::Vertex26) {
            Ok(v) => v,
            Err(Error::EmptyMask) => pred,
            Err(e) => return Err(e),
        };
    }
    let (skeleton, table) = gt_reference(gt)?;
    Ok(MetricsReport {
        case_id: case_id.to_string(),
        dsc: dsc(&pred, gt)?,
        precision: precision(&pred, gt)?,
        td: tree_detected(&pred, &skeleton, gt.spacing())?,
        bd: branch_detected(&pred, &table, theta)?,
        theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub dsc: MeanStd,
    pub precision: MeanStd,
    pub td: MeanStd,
    pub bd: MeanStd,
    pub n_cases: usize,
    pub theta: f64,
}

pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<AggregateReport> {
    let first = reports.first().ok_or(Error::EmptyList)?;
    if reports.iter().any(|r| r.theta != first.theta) {
        return Err(Error::InvalidArgument("reports use different theta values".into()));
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        dsc: col(|r| r.dsc),
        precision: col(|r| r.precision),
        td: col(|r| r.td),
        bd: col(|r| r.bd),
        n_cases: reports.len(),
        theta: first.theta,
    })
}

impl AggregateReport {
    /// Human-readable table row, e.g. `DSC 0.897±0.034`.
    pub fn summary(&self) -> String {
        format!(
            "cases {}  DSC {}  Precision {}  TD {}  BD {} (theta {})",
            self.n_cases, self.dsc, self.precision, self.td, self.bd, self.theta
        )
    }
}

pub fn reports_to_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(["case_id", "dsc", "precision", "td", "bd"]).map_err(io)?;
    for r in reports {
        w.write_record([
            r.case_id.clone(),
            format!("{:.6}", r.dsc),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.td),
            format!("{:.6}", r.bd),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
