//! Segmentation losses, dropout primitives and the dilated-stack receptive field.
//!
//! All reductions run in f64 over voxels in linear (z-major) order.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::skeletonize;
use crate::volume::{threshold, Role, Shape, Volume};

pub const DEFAULT_SMOOTH: f64 = 1e-6;
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smooth(f64);

impl Smooth {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Smooth(value))
        } else {
            Err(Error::InvalidArgument(format!("smooth must be positive, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Smooth {
    fn default() -> Self {
        Smooth(DEFAULT_SMOOTH)
    }
}

/// Weights for dice, BCE, branch and centerline terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights(pub [f64; 4]);

impl LossWeights {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        if w.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(LossWeights(w))
        } else {
            Err(Error::InvalidArgument(format!("weights must be finite and >= 0, got {w:?}")))
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights([0.2, 0.2, 0.3, 0.3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BranchMode {
    /// One minus the mean of per-branch coverage ratios.
    #[default]
    PerBranchMean,
    /// One minus a single coverage ratio pooled over all branches.
    Global,
}

impl FromStr for BranchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-branch-mean" | "per-branch" => Ok(BranchMode::PerBranchMean),
            "global" => Ok(BranchMode::Global),
            _ => Err(Error::InvalidArgument(format!("unknown branch mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CenterlineVariant {
    /// Overlap of the thresholded prediction's skeleton with the GT skeleton.
    #[default]
    SkeletonProduct,
    /// Soft prediction mass on the GT skeleton.
    CenterlineRecall,
}

impl FromStr for CenterlineVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skeleton-product" => Ok(CenterlineVariant::SkeletonProduct),
            "centerline-recall" => Ok(CenterlineVariant::CenterlineRecall),
            _ => Err(Error::InvalidArgument(format!("unknown centerline variant {s:?}"))),
        }
    }
}

fn check_pair(pred: &Volume, other: &Volume, other_roles: &[Role]) -> Result<()> {
    pred.ensure_role(&[Role::Probability, Role::Binary])?;
    other.ensure_role(other_roles)?;
    pred.ensure_same_shape(other)
}

pub fn dice_loss(pred: &Volume, gt: &Volume, s: Smooth) -> Result<f64> {
    check_pair(pred, gt, &[Role::Binary])?;
    let (mut inter, mut sp, mut sg) = (0.0f64, 0.0f64, 0.0f64);
    for (p, g) in pred.data().iter().zip(gt.data()) {
        let (p, g) = (*p as f64, *g as f64);
        inter += p * g;
        sp += p;
        sg += g;
    }
    Ok(1.0 - (2.0 * inter + s.0) / (sp + sg + s.0))
}

pub fn bce_loss(pred: &Volume, gt: &Volume) -> Result<f64> {
    check_pair(pred, gt, &[Role::Binary])?;
    let mut sum = 0.0f64;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        let p = (*p as f64).clamp(BCE_EPS, 1.0 - BCE_EPS);
        let g = *g as f64;
        sum -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
    }
    Ok(sum / pred.len() as f64)
}

pub fn branch_loss(pred: &Volume, gt_labels: &Volume, s: Smooth, mode: BranchMode) -> Result<f64> {
    check_pair(pred, gt_labels, &[Role::Label])?;
    // per label: (Σ pred over the branch, branch size)
    let mut per: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for (p, l) in pred.data().iter().zip(gt_labels.data()) {
        if *l != 0.0 {
            let e = per.entry(*l as u32).or_default();
            e.0 += *p as f64;
            e.1 += 1.0;
        }
    }
    if per.is_empty() {
        return Err(Error::NoBranches);
    }
    Ok(match mode {
        BranchMode::PerBranchMean => {
            let sum: f64 = per.values().map(|(hit, size)| (hit + s.0) / (size + s.0)).sum();
            1.0 - sum / per.len() as f64
        }
        BranchMode::Global => {
            let (hit, size) = per.values().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            1.0 - (hit + s.0) / (size + s.0)
        }
    })
}

pub fn centerline_loss(
    pred: &Volume,
    gt_labels: &Volume,
    t: f32,
    s: Smooth,
    variant: CenterlineVariant,
) -> Result<f64> {
    check_pair(pred, gt_labels, &[Role::Label])?;
    let e_gt = skeletonize(&gt_labels.foreground())?;
    let weight: Vec<f64> = match variant {
        CenterlineVariant::SkeletonProduct => {
            let e_pred = skeletonize(&threshold(pred, t)?)?;
            e_pred.data().iter().map(|v| *v as f64).collect()
        }
        CenterlineVariant::CenterlineRecall => pred.data().iter().map(|v| *v as f64).collect(),
    };
    let (mut hit, mut total) = (0.0f64, 0.0f64);
    for (w, g) in weight.iter().zip(e_gt.data()) {
        if *g != 0.0 {
            hit += w;
            total += 1.0;
        }
    }
    Ok(1.0 - (hit + s.0) / (total + s.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub dice: f64,
    pub bce: f64,
    pub branch: f64,
    pub centerline: f64,
    pub total: f64,
}

pub fn total_loss(l_dice: f64, l_bce: f64, l_branch: f64, l_centerline: f64, w: LossWeights) -> Result<f64> {
    let parts = [("dice", l_dice), ("bce", l_bce), ("branch", l_branch), ("centerline", l_centerline)];
    if let Some((name, _)) = parts.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteInput(name));
    }
    let [w1, w2, w3, w4] = w.0;
    Ok(l_dice * w1 + l_bce * w2 + l_branch * w3 + l_centerline * w4)
}

/// Computes all four terms against a label volume and combines them.
pub fn all_losses(
    pred: &Volume,
    gt_labels: &Volume,
    w: LossWeights,
    mode: BranchMode,
    variant: CenterlineVariant,
    t: f32,
    s: Smooth,
) -> Result<LossBreakdown> {
    let gt = gt_labels.foreground();
    let dice = dice_loss(pred, &gt, s)?;
    let bce = bce_loss(pred, &gt)?;
    let branch = branch_loss(pred, gt_labels, s, mode)?;
    let centerline = centerline_loss(pred, gt_labels, t, s, variant)?;
    let total = total_loss(dice, bce, branch, centerline, w)?;
    Ok(LossBreakdown {
        dice,
        bce,
        branch,
        centerline,
        total,
    })
}

/// Bernoulli(`p`) keep mask.
pub fn dropout_mask(shape: Shape, p: f64, seed: u64) -> Result<Volume> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| if rng.random_bool(p) { 1.0 } else { 0.0 }).collect();
    Volume::new(shape, [1.0; 3], data, Role::Binary)
}

fn scaled(x: &Volume, m: &Volume, p: f64) -> Result<Volume> {
    m.ensure_role(&[Role::Binary])?;
    x.ensure_same_shape(m)?;
    let data: Vec<f32> = x
        .data()
        .iter()
        .zip(m.data())
        .map(|(v, k)| (p * *k as f64 * *v as f64) as f32)
        .collect();
    let role = match x.role() {
        Role::Probability if p <= 1.0 => Role::Probability,
        Role::Binary if p == 1.0 => Role::Binary,
        _ => Role::Intensity,
    };
    Volume::new(x.shape(), x.spacing(), data, role)
}

/// `H = p · m · x`, scaling by the retain probability at train time.
pub fn dropout_forward(x: &Volume, m: &Volume, p: f64) -> Result<Volume> {
    scaled(x, m, p)
}

/// `g' = p · m · g`.
pub fn dropout_backward(g: &Volume, m: &Volume, p: f64) -> Result<Volume> {
    scaled(g, m, p)
}

/// Receptive field of stacked 3-tap dilated convolutions along one axis.
pub fn receptive_field(dilations: &[i64]) -> Result<u64> {
    let mut rf = 1u64;
    for &d in dilations {
        if d <= 0 {
            return Err(Error::NonPositiveDilation(d));
        }
        rf += 2 * d as u64;
    }
    Ok(rf)
}
