//! Patch tiling, z-score normalization and deterministic augmentations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Index3, Role, Shape, Volume};

/// Default patch extent `(z, y, x)` used for airway CT tiling.
pub const DEFAULT_PATCH: Shape = [128, 96, 144];

/// Zero-mean, unit-population-std rescaling. Constant input maps to zeros.
pub fn zscore_normalize(v: &Volume) -> Result<Volume> {
    v.ensure_role(&[Role::Intensity])?;
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty volume".into()));
    }
    let n = v.len() as f64;
    let mean = v.data().iter().map(|x| *x as f64).sum::<f64>() / n;
    let var = v.data().iter().map(|x| (*x as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let data = if std == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.data().iter().map(|x| ((*x as f64 - mean) / std) as f32).collect()
    };
    v.with_data(data, Role::Intensity)
}

/// Sliding-window tiling of a volume into equally sized patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_shape: Shape,
    pub stride: Shape,
    pub full_shape: Shape,
    /// `full_shape` grown to at least `patch_shape` on every axis.
    pub padded_shape: Shape,
    pub origins: Vec<Index3>,
    /// `None` selects the role default: volume minimum for intensity images, 0 otherwise.
    pub pad_value: Option<f32>,
}

fn axis_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut o = 0;
    while o + patch <= len {
        out.push(o);
        o += stride;
    }
    let last = len - patch;
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

pub fn plan_patches(full_shape: Shape, patch_shape: Shape, stride: Shape) -> Result<PatchGrid> {
    if patch_shape.contains(&0) || stride.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "patch {patch_shape:?} and stride {stride:?} must be >= 1"
        )));
    }
    if full_shape.contains(&0) {
        return Err(Error::InvalidArgument(format!("empty volume shape {full_shape:?}")));
    }
    let padded_shape: Shape = std::array::from_fn(|a| full_shape[a].max(patch_shape[a]));
    let per_axis: [Vec<usize>; 3] =
        std::array::from_fn(|a| axis_origins(padded_shape[a], patch_shape[a], stride[a]));
    let mut origins = Vec::with_capacity(per_axis.iter().map(Vec::len).product());
    for &z in &per_axis[0] {
        for &y in &per_axis[1] {
            for &x in &per_axis[2] {
                origins.push([z, y, x]);
            }
        }
    }
    Ok(PatchGrid {
        patch_shape,
        stride,
        full_shape,
        padded_shape,
        origins,
        pad_value: None,
    })
}

fn pad_value_for(v: &Volume, grid: &PatchGrid) -> f32 {
    grid.pad_value.unwrap_or_else(|| match v.role() {
        Role::Intensity => v.data().iter().copied().fold(f32::INFINITY, f32::min),
        _ => 0.0,
    })
}

pub fn extract_patches(v: &Volume, grid: &PatchGrid) -> Result<Vec<Volume>> {
    if v.shape() != grid.full_shape {
        return Err(Error::ShapeMismatch {
            left: v.shape(),
            right: grid.full_shape,
        });
    }
    let pad = pad_value_for(v, grid);
    let [pz, py, px] = grid.patch_shape;
    grid.origins
        .iter()
        .map(|&[oz, oy, ox]| {
            let mut data = Vec::with_capacity(pz * py * px);
            for z in oz..oz + pz {
                for y in oy..oy + py {
                    for x in ox..ox + px {
                        let idx = [z, y, x];
                        data.push(if v.in_bounds(idx) { v.get(idx) } else { pad });
                    }
                }
            }
            Volume::new(grid.patch_shape, v.spacing(), data, v.role())
        })
        .collect()
}

/// Inverse of [`extract_patches`]: overlapping voxels are averaged and the
/// padding is cropped. Accumulation follows origin order.
pub fn reassemble(patches: &[Volume], grid: &PatchGrid) -> Result<Volume> {
    if patches.len() != grid.origins.len() || patches.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} patches for a grid of {} origins",
            patches.len(),
            grid.origins.len()
        )));
    }
    for p in patches {
        if p.shape() != grid.patch_shape {
            return Err(Error::ShapeMismatch {
                left: p.shape(),
                right: grid.patch_shape,
            });
        }
    }
    let first = &patches[0];
    let mut out = Volume::zeros(grid.full_shape, first.spacing(), Role::Intensity);
    let n = out.len();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    let [pz, py, px] = grid.patch_shape;
    for (patch, &[oz, oy, ox]) in patches.iter().zip(&grid.origins) {
        let mut src = patch.data().iter();
        for z in oz..oz + pz {
            for y in oy..oy + py {
                for x in ox..ox + px {
                    let val = *src.next().unwrap();
                    if out.in_bounds([z, y, x]) {
                        let i = out.flatten([z, y, x]);
                        sum[i] += val as f64;
                        count[i] += 1;
                    }
                }
            }
        }
    }
    let data: Vec<f32> = sum
        .iter()
        .zip(&count)
        .map(|(s, c)| (*s / *c as f64) as f32)
        .collect();
    let mut role = first.role();
    // blending can leave fractional values in a binary or label map
    if !data.iter().all(|x| role.admits(*x)) {
        role = if data.iter().all(|x| Role::Probability.admits(*x)) {
            Role::Probability
        } else {
            Role::Intensity
        };
    }
    out = out.with_data(data, role)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Z,
    Y,
    X,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::Z => 0,
            Axis::Y => 1,
            Axis::X => 2,
        }
    }

    /// The two axes spanning the plane orthogonal to `self`.
    fn plane(self) -> (usize, usize) {
        match self {
            Axis::Z => (1, 2),
            Axis::Y => (0, 2),
            Axis::X => (0, 1),
        }
    }
}

pub fn flip(v: &Volume, axis: Axis) -> Volume {
    let a = axis.index();
    let n = v.shape()[a];
    let data = (0..v.len())
        .map(|i| {
            let mut idx = v.unflatten(i);
            idx[a] = n - 1 - idx[a];
            v.get(idx)
        })
        .collect();
    v.with_data(data, v.role()).expect("flip permutes admissible values")
}

/// Rotates by `k` quarter turns in the plane orthogonal to `axis`
/// (`out[i][j] = in[j][n-1-i]` for one turn). The plane must be square.
pub fn rotate90(v: &Volume, axis: Axis, k: i32) -> Result<Volume> {
    let (p, q) = axis.plane();
    let shape = v.shape();
    if shape[p] != shape[q] {
        return Err(Error::NonSquarePlane(shape[p], shape[q]));
    }
    let n = shape[p];
    let turns = k.rem_euclid(4);
    let data = (0..v.len())
        .map(|i| {
            let mut src = v.unflatten(i);
            let (mut a, mut b) = (src[p], src[q]);
            // invert `turns` forward rotations
            for _ in 0..turns {
                (a, b) = (b, n - 1 - a);
            }
            src[p] = a;
            src[q] = b;
            v.get(src)
        })
        .collect();
    let mut spacing = v.spacing();
    if turns % 2 == 1 {
        spacing.swap(p, q);
    }
    Volume::new(shape, spacing, data, v.role())
}

/// Multiplies every voxel by `factor`; fails if the result breaks the role.
pub fn scale_values(v: &Volume, factor: f32) -> Result<Volume> {
    let data = v.data().iter().map(|x| x * factor).collect();
    v.with_data(data, v.role())
}

/// One sampled augmentation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Augmentation {
    Flip(Axis),
    Rotate90 { axis: Axis, k: i32 },
    Scale(f32),
}

impl Augmentation {
    pub fn apply(&self, v: &Volume) -> Result<Volume> {
        match *self {
            Augmentation::Flip(axis) => Ok(flip(v, axis)),
            Augmentation::Rotate90 { axis, k } => rotate90(v, axis, k),
            Augmentation::Scale(f) => scale_values(v, f),
        }
    }
}

/// Seeded sampler for the "random" flip / rotate / scale augmentations.
pub struct AugmentSampler {
    rng: ChaCha8Rng,
    pub scale_range: (f32, f32),
}

impl AugmentSampler {
    pub fn new(seed: u64) -> Self {
        AugmentSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale_range: (0.9, 1.1),
        }
    }

    /// Draws a flip per axis with probability 1/2, a quarter-turn rotation
    /// about one axis whose plane is square, and a value scale for intensity
    /// volumes.
    pub fn sample(&mut self, v: &Volume) -> Vec<Augmentation> {
        const AXES: [Axis; 3] = [Axis::Z, Axis::Y, Axis::X];
        let mut ops = Vec::new();
        for axis in AXES {
            if self.rng.random_bool(0.5) {
                ops.push(Augmentation::Flip(axis));
            }
        }
        let shape = v.shape();
        let square: Vec<Axis> = AXES
            .into_iter()
            .filter(|a| {
                let (p, q) = a.plane();
                shape[p] == shape[q]
            })
            .collect();
        if !square.is_empty() {
            let axis = square[self.rng.random_range(0..square.len())];
            let k = self.rng.random_range(0..4);
            if k != 0 {
                ops.push(Augmentation::Rotate90 { axis, k });
            }
        }
        if v.role() == Role::Intensity {
            let (lo, hi) = self.scale_range;
            ops.push(Augmentation::Scale(self.rng.random_range(lo..=hi)));
        }
        ops
    }

    pub fn augment(&mut self, v: &Volume) -> Result<(Volume, Vec<Augmentation>)> {
        let ops = self.sample(v);
        let mut out = v.clone();
        for op in &ops {
            out = op.apply(&out)?;
        }
        Ok((out, ops))
    }
}
