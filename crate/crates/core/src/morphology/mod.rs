//! Connected components, largest-component pruning, erosion and thinning.

mod thinning;

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{Connectivity, Role, Volume};

pub use thinning::{is_simple, skeletonize};

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    /// Component ids `1..=count`; 0 is background.
    pub labels: Volume,
    pub count: usize,
    /// `volumes[i]` is the voxel count of label `i + 1`.
    pub volumes: Vec<usize>,
}

/// Labels foreground components by breadth-first flood fill. Components are
/// numbered in order of their smallest linear index.
pub fn connected_components(mask: &Volume, conn: Connectivity) -> Result<ComponentLabeling> {
    mask.ensure_role(&[Role::Binary])?;
    let mut labels = vec![0u32; mask.len()];
    let mut volumes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask.is_foreground(start) || labels[start] != 0 {
            continue;
        }
        let id = volumes.len() as u32 + 1;
        labels[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for n in mask.neighbor_indices(i, conn) {
                if labels[n] == 0 && mask.is_foreground(n) {
                    labels[n] = id;
                    queue.push_back(n);
                }
            }
        }
        volumes.push(size);
    }
    let labels = mask.with_data(labels.into_iter().map(|l| l as f32).collect(), Role::Label)?;
    Ok(ComponentLabeling {
        labels,
        count: volumes.len(),
        volumes,
    })
}

/// Recounts voxels per label straight from the label volume.
pub fn component_volumes(labeling: &ComponentLabeling) -> Vec<usize> {
    let mut counts = vec![0usize; labeling.count];
    for &l in labeling.labels.data() {
        if l != 0.0 {
            counts[l as usize - 1] += 1;
        }
    }
    counts
}

/// Keeps the component with the most voxels; ties go to the smallest label id.
pub fn keep_largest_component(mask: &Volume, conn: Connectivity) -> Result<Volume> {
    let cc = connected_components(mask, conn)?;
    let (best, _) = cc
        .volumes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (i, &v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((i, v)),
        })
        .ok_or(Error::EmptyMask)?;
    let keep = (best + 1) as f32;
    let data = cc
        .labels
        .data()
        .iter()
        .map(|l| if *l == keep { 1.0 } else { 0.0 })
        .collect();
    mask.with_data(data, Role::Binary)
}

/// A voxel survives iff it and all its `conn` neighbors are foreground.
/// Neighbors outside the volume count as background.
pub fn binary_erosion(mask: &Volume, conn: Connectivity) -> Result<Volume> {
    mask.ensure_role(&[Role::Binary])?;
    let data = (0..mask.len())
        .map(|i| {
            let idx = mask.unflatten(i);
            let keep = mask.is_foreground(i)
                && conn
                    .offsets()
                    .iter()
                    .all(|o| mask.offset(idx, *o).is_some_and(|n| mask.get(n) != 0.0));
            if keep {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    mask.with_data(data, Role::Binary)
}
