//! Skeleton graphs, branch decomposition and branch label propagation.
//!
//! A branch is a maximal run of skeleton voxels between endpoints and branch
//! points. Branch points are merged into clusters first (see
//! [`SkeletonGraph`]), and each cluster belongs to the branch that arrives at
//! it from the root side; its children start one voxel further out.
//! Branch ids are assigned breadth-first from the root, starting at 1.

mod graph;

use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Index3, Role, Spacing, Volume};

pub use graph::{break_cycles, build_skeleton_graph, SkeletonGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: u32,
    pub parent: Option<u32>,
    pub children: Vec<u32>,
    pub generation: u32,
    pub length_mm: f64,
    pub voxels: Vec<Index3>,
}

impl Branch {
    pub fn length_vox(&self) -> usize {
        self.voxels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchTable {
    pub branches: Vec<Branch>,
}

impl BranchTable {
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Branch by id (ids are `1..=len`).
    pub fn get(&self, id: u32) -> Option<&Branch> {
        let b = self.branches.get((id as usize).checked_sub(1)?)?;
        (b.id == id).then_some(b)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.parent.is_none())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// How the root endpoint of each skeleton tree is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootPolicy {
    /// Endpoint with the smallest z (ties: smallest linear index).
    #[default]
    MinZ,
    /// Endpoint with the largest z (ties: smallest linear index).
    MaxZ,
    /// This voxel roots its own tree; other trees fall back to `MinZ`.
    Explicit(Index3),
}

pub(crate) fn step_mm(a: Index3, b: Index3, spacing: Spacing) -> f64 {
    (0..3)
        .map(|k| ((a[k] as f64 - b[k] as f64) * spacing[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn path_length_mm(voxels: &[Index3], spacing: Spacing) -> f64 {
    voxels.windows(2).map(|w| step_mm(w[0], w[1], spacing)).sum()
}

fn pick_root(g: &SkeletonGraph, comp: &[usize], policy: RootPolicy) -> usize {
    if let RootPolicy::Explicit(v) = policy {
        if let Some(n) = g.node_of(v) {
            if comp.binary_search(&n).is_ok() {
                return n;
            }
        }
    }
    let ends: Vec<usize> = comp.iter().copied().filter(|n| g.degree(*n) == 1).collect();
    let pool = if ends.is_empty() { comp } else { &ends[..] };
    match policy {
        RootPolicy::MaxZ => {
            let zmax = pool.iter().map(|n| g.nodes()[*n][0]).max().unwrap();
            *pool.iter().find(|n| g.nodes()[**n][0] == zmax).unwrap()
        }
        // node ids follow linear (z-major) order
        _ => pool[0],
    }
}

/// Splits an acyclic skeleton graph into parent/child branches.
pub fn decompose_branches(g: &SkeletonGraph, spacing: Spacing, root_policy: RootPolicy) -> Result<BranchTable> {
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    if let RootPolicy::Explicit(v) = root_policy {
        if g.node_of(v).is_none() {
            return Err(Error::InvalidArgument(format!("root {v:?} is not a skeleton voxel")));
        }
    }
    let c = graph::check_acyclic(g)?;

    let mut visited = vec![false; g.len()];
    let mut branches: Vec<Branch> = Vec::new();
    for comp in g.components() {
        let root = pick_root(g, &comp, root_policy);
        let mut queue: VecDeque<(usize, Option<u32>)> = VecDeque::from([(root, None)]);
        while let Some((start, parent)) = queue.pop_front() {
            if visited[start] {
                continue;
            }
            let (nodes, exits) = walk(g, &c, start, &mut visited);
            let id = branches.len() as u32 + 1;
            let generation = match parent {
                Some(p) => {
                    let pb = &mut branches[p as usize - 1];
                    pb.children.push(id);
                    pb.generation + 1
                }
                None => 0,
            };
            let voxels: Vec<Index3> = nodes.iter().map(|n| g.nodes()[*n]).collect();
            branches.push(Branch {
                id,
                parent,
                children: Vec::new(),
                generation,
                length_mm: path_length_mm(&voxels, spacing),
                voxels,
            });
            queue.extend(exits.into_iter().map(|e| (e, Some(id))));
        }
    }
    Ok(BranchTable { branches })
}

/// Follows one branch from `start`. Returns its nodes in order and the start
/// nodes of the branches hanging off its far end.
fn walk(g: &SkeletonGraph, c: &graph::Condensed, start: usize, visited: &mut [bool]) -> (Vec<usize>, Vec<usize>) {
    let mut nodes = Vec::new();
    let mut cur = start;
    loop {
        if c.junction[cur] {
            let cluster = c.cnode_of[cur];
            let mut q = VecDeque::from([cur]);
            visited[cur] = true;
            let mut members = Vec::new();
            while let Some(u) = q.pop_front() {
                members.push(u);
                for &v in g.neighbors(u) {
                    if !visited[v] && c.cnode_of[v] == cluster {
                        visited[v] = true;
                        q.push_back(v);
                    }
                }
            }
            let mut exits: Vec<usize> = members
                .iter()
                .flat_map(|u| g.neighbors(*u).iter().copied())
                .filter(|v| !visited[*v])
                .collect();
            exits.sort_unstable();
            exits.dedup();
            nodes.extend(members);
            return (nodes, exits);
        }
        visited[cur] = true;
        nodes.push(cur);
        let next: Vec<usize> = g.neighbors(cur).iter().copied().filter(|v| !visited[*v]).collect();
        match next.len() {
            0 => return (nodes, Vec::new()),
            1 => cur = next[0],
            _ => return (nodes, next),
        }
    }
}

/// Gives every foreground voxel the id of the branch owning its nearest
/// centerline voxel (Euclidean distance in mm; ties go to the smaller id).
pub fn label_branches(mask: &Volume, table: &BranchTable) -> Result<Volume> {
    mask.ensure_role(&[Role::Binary])?;
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut centers: Vec<([f64; 3], u32)> = Vec::new();
    for b in &table.branches {
        for v in &b.voxels {
            if !mask.in_bounds(*v) {
                return Err(Error::IndexOutOfBounds {
                    index: *v,
                    shape: mask.shape(),
                });
            }
            centers.push((physical(*v, mask.spacing()), b.id));
        }
    }
    let labels: Vec<f32> = (0..mask.len())
        .into_par_iter()
        .map(|i| {
            if !mask.is_foreground(i) {
                return 0.0;
            }
            let p = physical(mask.unflatten(i), mask.spacing());
            let mut best = (f64::INFINITY, u32::MAX);
            for (c, id) in &centers {
                let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                if d < best.0 || (d == best.0 && *id < best.1) {
                    best = (d, *id);
                }
            }
            best.1 as f32
        })
        .collect();
    mask.with_data(labels, Role::Label)
}

fn physical(v: Index3, spacing: Spacing) -> [f64; 3] {
    [v[0] as f64 * spacing[0], v[1] as f64 * spacing[1], v[2] as f64 * spacing[2]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub branch_count: usize,
    pub total_length_mm: f64,
    pub max_generation: u32,
}

pub fn tree_stats(table: &BranchTable) -> TreeStats {
    TreeStats {
        branch_count: table.len(),
        total_length_mm: table.branches.iter().map(|b| b.length_mm).sum(),
        max_generation: table.branches.iter().map(|b| b.generation).max().unwrap_or(0),
    }
}
