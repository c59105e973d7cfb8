//! Monte Carlo dropout aggregation: repeated stochastic predictions reduced
//! to a per-voxel mean and population variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Role, Volume};

/// Stochastic model: maps an input and a per-pass seed to a probability map.
pub trait StochasticPredictor {
    fn predict(&mut self, input: &Volume, seed: u64) -> std::result::Result<Volume, String>;
}

impl<F> StochasticPredictor for F
where
    F: FnMut(&Volume, u64) -> std::result::Result<Volume, String>,
{
    fn predict(&mut self, input: &Volume, seed: u64) -> std::result::Result<Volume, String> {
        self(input, seed)
    }
}

/// SplitMix64 mix of the run seed and the pass index.
pub fn derive_seed(seed: u64, iteration: u64) -> u64 {
    let mut z = seed ^ iteration.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStack {
    preds: Vec<Volume>,
}

impl PredictionStack {
    pub fn new(preds: Vec<Volume>) -> Result<Self> {
        let first = preds.first().ok_or(Error::EmptyStack)?;
        for p in &preds {
            p.ensure_role(&[Role::Probability, Role::Binary])?;
            first.ensure_same_shape(p)?;
        }
        Ok(PredictionStack { preds })
    }

    pub fn n_drop(&self) -> usize {
        self.preds.len()
    }

    pub fn preds(&self) -> &[Volume] {
        &self.preds
    }
}

pub fn run_mc<P: StochasticPredictor>(predictor: &mut P, input: &Volume, n_drop: usize, seed: u64) -> Result<PredictionStack> {
    if n_drop == 0 {
        return Err(Error::InvalidArgument("n_drop must be >= 1".into()));
    }
    let mut preds = Vec::with_capacity(n_drop);
    for iteration in 0..n_drop {
        let pred = predictor
            .predict(input, derive_seed(seed, iteration as u64))
            .map_err(|message| Error::PredictorFailure { iteration, message })?;
        if pred.shape() != input.shape() {
            return Err(Error::PredictorFailure {
                iteration,
                message: format!("prediction shape {:?} differs from input {:?}", pred.shape(), input.shape()),
            });
        }
        preds.push(pred);
    }
    PredictionStack::new(preds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySummary {
    pub mean: Volume,
    pub variance: Volume,
    pub out: Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceStats {
    pub n_drop: usize,
    pub mean_variance: f64,
    pub max_variance: f64,
}

/// Per-voxel mean and population variance. Values are sorted before summing,
/// so the result does not depend on stack order.
pub fn aggregate(stack: &PredictionStack) -> Result<UncertaintySummary> {
    let first = stack.preds.first().ok_or(Error::EmptyStack)?;
    let n = stack.preds.len();
    let (mean, var): (Vec<f32>, Vec<f32>) = (0..first.len())
        .into_par_iter()
        .map(|i| {
            let mut vals: Vec<f64> = stack.preds.iter().map(|p| p.data()[i] as f64).collect();
            vals.sort_by(f64::total_cmp);
            let m = vals.iter().sum::<f64>() / n as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            (m as f32, v as f32)
        })
        .unzip();
    let mean = first.with_data(mean, Role::Probability)?;
    let variance = first.with_data(var, Role::Probability)?;
    Ok(UncertaintySummary {
        out: mean.clone(),
        mean,
        variance,
    })
}

impl UncertaintySummary {
    pub fn stats(&self, n_drop: usize) -> VarianceStats {
        let data = self.variance.data();
        let total: f64 = data.iter().map(|v| *v as f64).sum();
        VarianceStats {
            n_drop,
            mean_variance: total / data.len() as f64,
            max_variance: data.iter().fold(0.0f64, |m, v| m.max(*v as f64)),
        }
    }
}

/// Voxels whose variance exceeds `tau`.
pub fn uncertainty_mask(summary: &UncertaintySummary, tau: f64) -> Result<Volume> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    let data = summary
        .variance
        .data()
        .iter()
        .map(|v| if *v as f64 > tau { 1.0 } else { 0.0 })
        .collect();
    summary.variance.with_data(data, Role::Binary)
}
