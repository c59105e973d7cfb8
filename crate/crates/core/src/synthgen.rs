//! Deterministic synthetic airway trees with known branch structure.
//!
//! Each branch is a capsule (all voxels within `radius` of a straight axis
//! segment). Axis endpoints are rounded to voxel centers so every axis is
//! exactly representable, and the generator rejects layouts where
//! non-adjacent branches come closer than `min_separation_vox`.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::binary_erosion;
use crate::tree::{label_branches, step_mm, Branch, BranchTable};
use crate::volume::{Connectivity, Index3, Role, Shape, Spacing, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeSpec {
    pub depth: u32,
    pub children_per_branch: u32,
    pub root_length_vox: f64,
    pub length_decay: f64,
    pub root_radius_vox: f64,
    pub radius_decay: f64,
    pub branch_angle_deg: f64,
    pub seed: u64,
    pub volume_shape: Shape,
    pub spacing: Spacing,
    pub min_separation_vox: f64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        TreeSpec {
            depth: 3,
            children_per_branch: 2,
            root_length_vox: 24.0,
            length_decay: 0.8,
            root_radius_vox: 4.0,
            radius_decay: 0.8,
            branch_angle_deg: 40.0,
            seed: 0,
            volume_shape: [96, 96, 96],
            spacing: [1.0, 1.0, 1.0],
            min_separation_vox: 4.0,
        }
    }
}

impl TreeSpec {
    pub fn radius_at(&self, generation: u32) -> f64 {
        self.root_radius_vox * self.radius_decay.powi(generation as i32)
    }

    pub fn length_at(&self, generation: u32) -> f64 {
        self.root_length_vox * self.length_decay.powi(generation as i32)
    }

    /// Number of branches the construction produces.
    pub fn branch_count(&self) -> usize {
        let k = self.children_per_branch as usize;
        (0..=self.depth).map(|g| k.pow(g)).sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.children_per_branch < 1 {
            return bad("children_per_branch must be >= 1".into());
        }
        if self.radius_at(self.depth) < 1.0 {
            return bad(format!("radius at depth {} is below one voxel", self.depth));
        }
        if !(self.root_length_vox >= 1.0 && self.length_decay > 0.0 && self.radius_decay > 0.0) {
            return bad("lengths and decay factors must be positive".into());
        }
        if !(0.0..180.0).contains(&self.branch_angle_deg) {
            return bad(format!("branch angle {} out of range", self.branch_angle_deg));
        }
        if self.volume_shape.contains(&0) || self.spacing.iter().any(|s| !(*s > 0.0)) {
            return bad("volume shape and spacing must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTree {
    pub mask: Volume,
    pub centerline: Volume,
    pub table: BranchTable,
    /// Axis segments `(start, end)` in voxel coordinates, indexed by branch id − 1.
    pub axes: Vec<([i64; 3], [i64; 3])>,
}

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: P3, b: P3) -> P3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn norm(a: P3) -> P3 {
    let l = dot(a, a).sqrt();
    [a[0] / l, a[1] / l, a[2] / l]
}
fn to_f(p: [i64; 3]) -> P3 {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Distance from `p` to the segment `ab`.
pub fn point_segment_distance(p: P3, a: P3, b: P3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 { 0.0 } else { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dot(sub(p, q), sub(p, q)).sqrt()
}

/// Sampled minimum distance between two segments, restricted to `t >= t0` on the first.
fn segment_distance(a0: P3, a1: P3, b0: P3, b1: P3, t0: f64) -> f64 {
    let d = sub(a1, a0);
    let steps = (dot(d, d).sqrt() * 4.0).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| t0 + (1.0 - t0) * k as f64 / steps as f64)
        .map(|t| point_segment_distance([a0[0] + t * d[0], a0[1] + t * d[1], a0[2] + t * d[2]], b0, b1))
        .fold(f64::INFINITY, f64::min)
}

fn rasterize_capsule(out: &mut [bool], shape: Shape, a: [i64; 3], b: [i64; 3], radius: f64) {
    let (af, bf) = (to_f(a), to_f(b));
    let r = radius.ceil() as i64;
    let lo: [i64; 3] = std::array::from_fn(|k| (a[k].min(b[k]) - r).max(0));
    let hi: [i64; 3] = std::array::from_fn(|k| (a[k].max(b[k]) + r).min(shape[k] as i64 - 1));
    for z in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for x in lo[2]..=hi[2] {
                if point_segment_distance([z as f64, y as f64, x as f64], af, bf) <= radius {
                    out[((z as usize) * shape[1] + y as usize) * shape[2] + x as usize] = true;
                }
            }
        }
    }
}

/// 26-connected voxel path from `a` to `b` (both included).
pub fn raster_line(a: [i64; 3], b: [i64; 3]) -> Vec<[i64; 3]> {
    let d: [i64; 3] = std::array::from_fn(|k| b[k] - a[k]);
    let n = d.iter().map(|c| c.abs()).max().unwrap_or(0);
    if n == 0 {
        return vec![a];
    }
    (0..=n)
        .map(|s| std::array::from_fn(|k| a[k] + (d[k] * s * 2 + n).div_euclid(2 * n)))
        .collect()
}

fn in_shape(p: [i64; 3], shape: Shape) -> bool {
    (0..3).all(|k| p[k] >= 0 && (p[k] as usize) < shape[k])
}

fn as_index(p: [i64; 3]) -> Index3 {
    [p[0] as usize, p[1] as usize, p[2] as usize]
}

/// Binary capsule: voxel centers within `radius` of segment `ab`.
pub fn generate_tube(a: Index3, b: Index3, radius: f64, shape: Shape) -> Result<Volume> {
    for p in [a, b] {
        let pi = p.map(|c| c as i64);
        if !in_shape(pi, shape) {
            return Err(Error::OutOfBounds { point: pi, shape });
        }
    }
    let mut fg = vec![false; shape.iter().product()];
    rasterize_capsule(&mut fg, shape, a.map(|c| c as i64), b.map(|c| c as i64), radius);
    Volume::new(shape, [1.0; 3], fg.iter().map(|v| *v as u8 as f32).collect(), Role::Binary)
}

struct Planned {
    start: [i64; 3],
    end: [i64; 3],
    radius: f64,
    parent: Option<usize>,
    generation: u32,
}

/// Builds the mask, rasterized centerline and construction branch table.
pub fn generate_tree(spec: &TreeSpec) -> Result<SynthTree> {
    spec.validate()?;
    let shape = spec.volume_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let r0 = spec.root_radius_vox;
    let root_start = [r0.ceil() as i64 + 1, shape[1] as i64 / 2, shape[2] as i64 / 2];
    let root_end = [root_start[0] + spec.root_length_vox.round() as i64, root_start[1], root_start[2]];
    let mut planned = vec![Planned {
        start: root_start,
        end: root_end,
        radius: r0,
        parent: None,
        generation: 0,
    }];
    let theta = spec.branch_angle_deg.to_radians();
    let k = spec.children_per_branch;
    // breadth-first so ids follow generations
    let mut i = 0;
    while i < planned.len() {
        let g = planned[i].generation;
        if g < spec.depth {
            let (s, e) = (to_f(planned[i].start), to_f(planned[i].end));
            let dir = norm(sub(e, s));
            let helper = if dir[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
            let u = norm(cross(dir, helper));
            let v = cross(dir, u);
            let jitter: f64 = rng.random_range(-15.0f64..=15.0).to_radians();
            let phi0 = g as f64 * std::f64::consts::FRAC_PI_2 + jitter;
            let len = spec.length_at(g + 1);
            for c in 0..k {
                let phi = phi0 + std::f64::consts::TAU * c as f64 / k as f64;
                let child: P3 = std::array::from_fn(|a| {
                    theta.cos() * dir[a] + theta.sin() * (phi.cos() * u[a] + phi.sin() * v[a])
                });
                let end = std::array::from_fn(|a| planned[i].end[a] + (child[a] * len).round() as i64);
                planned.push(Planned {
                    start: planned[i].end,
                    end,
                    radius: spec.radius_at(g + 1),
                    parent: Some(i),
                    generation: g + 1,
                });
            }
        }
        i += 1;
    }

    check_layout(&planned, spec)?;

    let mut fg = vec![false; shape.iter().product()];
    for p in &planned {
        rasterize_capsule(&mut fg, shape, p.start, p.end, p.radius);
    }
    let mask = Volume::new(shape, spec.spacing, fg.iter().map(|v| *v as u8 as f32).collect(), Role::Binary)?;

    let mut branches: Vec<Branch> = Vec::with_capacity(planned.len());
    for (idx, p) in planned.iter().enumerate() {
        let mut line = raster_line(p.start, p.end);
        if p.parent.is_some() {
            // the junction voxel belongs to the parent
            line.remove(0);
        }
        let voxels: Vec<Index3> = line.into_iter().map(as_index).collect();
        let length_mm = voxels.windows(2).map(|w| step_mm(w[0], w[1], spec.spacing)).sum();
        let id = idx as u32 + 1;
        let parent = p.parent.map(|q| q as u32 + 1);
        if let Some(pid) = parent {
            branches[pid as usize - 1].children.push(id);
        }
        branches.push(Branch {
            id,
            parent,
            children: Vec::new(),
            generation: p.generation,
            length_mm,
            voxels,
        });
    }
    let on_axis: HashSet<Index3> = branches.iter().flat_map(|b| b.voxels.iter().copied()).collect();
    let centerline = Volume::binary_from_fn(shape, spec.spacing, |v| on_axis.contains(&v));

    Ok(SynthTree {
        mask,
        centerline,
        table: BranchTable { branches },
        axes: planned.iter().map(|p| (p.start, p.end)).collect(),
    })
}

fn check_layout(planned: &[Planned], spec: &TreeSpec) -> Result<()> {
    let shape = spec.volume_shape;
    for (i, p) in planned.iter().enumerate() {
        let r = p.radius.ceil() as i64;
        for q in [p.start, p.end] {
            let fits = (0..3).all(|a| q[a] - r >= 0 && q[a] + r < shape[a] as i64);
            if !fits {
                return Err(Error::DoesNotFit(format!(
                    "branch {} reaches {:?} (radius {:.2}) outside {:?}",
                    i + 1,
                    q,
                    p.radius,
                    shape
                )));
            }
        }
    }
    let sep = spec.min_separation_vox;
    for i in 0..planned.len() {
        for j in i + 1..planned.len() {
            let (a, b) = (&planned[i], &planned[j]);
            if b.parent == Some(i) {
                continue;
            }
            let need = a.radius + b.radius + sep;
            let siblings = a.parent.is_some() && a.parent == b.parent;
            let (a0, a1, b0, b1) = (to_f(a.start), to_f(a.end), to_f(b.start), to_f(b.end));
            let dist = if siblings {
                point_segment_distance(a1, b0, b1).min(point_segment_distance(b1, a0, a1))
            } else if b.start == a.start || b.start == a.end {
                // shares a junction with `a` (e.g. `a`'s sibling's child); skip the shared end
                segment_distance(b0, b1, a0, a1, 0.5)
            } else {
                segment_distance(a0, a1, b0, b1, 0.0)
            };
            if dist < need {
                return Err(Error::DoesNotFit(format!(
                    "branches {} and {} are {:.2} voxels apart, need {:.2}",
                    i + 1,
                    j + 1,
                    dist,
                    need
                )));
            }
        }
    }
    Ok(())
}

/// Controlled damage applied to a ground-truth mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// Removes every voxel that `label_branches` assigns to this branch.
    DropBranch(u32),
    /// Adds a face-connected blob of `size` voxels that does not touch the mask.
    AddNoiseComponent { size: usize, seed: u64 },
    /// One face-connected erosion step.
    ErodeOnce,
}

pub fn perturb(mask: &Volume, table: &BranchTable, op: Perturbation) -> Result<Volume> {
    mask.ensure_role(&[Role::Binary])?;
    match op {
        Perturbation::DropBranch(id) => {
            if table.get(id).is_none() {
                return Err(Error::UnknownBranch(id));
            }
            let labels = label_branches(mask, table)?;
            let target = id as f32;
            let data = labels.data().iter().map(|l| if *l != 0.0 && *l != target { 1.0 } else { 0.0 }).collect();
            mask.with_data(data, Role::Binary)
        }
        Perturbation::AddNoiseComponent { size, seed } => add_blob(mask, size, seed),
        Perturbation::ErodeOnce => binary_erosion(mask, Connectivity::Face6),
    }
}

fn add_blob(mask: &Volume, size: usize, seed: u64) -> Result<Volume> {
    if size == 0 {
        return Ok(mask.clone());
    }
    // voxels that touch the original foreground are off limits
    let blocked: Vec<bool> = (0..mask.len())
        .map(|i| mask.is_foreground(i) || mask.neighbor_indices(i, Connectivity::Vertex26).any(|n| mask.is_foreground(n)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let start = rng.random_range(0..mask.len());
        if blocked[start] {
            continue;
        }
        let mut blob = vec![start];
        let mut seen: HashSet<usize> = HashSet::from([start]);
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            if blob.len() == size {
                break;
            }
            for n in mask.neighbor_indices(i, Connectivity::Face6) {
                if blob.len() == size {
                    break;
                }
                if !blocked[n] && seen.insert(n) {
                    blob.push(n);
                    q.push_back(n);
                }
            }
        }
        if blob.len() == size {
            let mut data = mask.data().to_vec();
            for i in blob {
                data[i] = 1.0;
            }
            return mask.with_data(data, Role::Binary);
        }
    }
    Err(Error::DoesNotFit(format!("no room for a {size}-voxel blob")))
}
