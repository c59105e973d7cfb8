//! Topology-preserving 3D thinning.
//!
//! Border voxels are peeled one face direction at a time. A voxel may be
//! removed when it is simple for the (26, 6) foreground/background pair and is
//! not a curve endpoint. Candidates found in a sub-iteration are re-checked
//! sequentially before removal, so deleting them together cannot split or
//! merge components.
//!
//! Thinning a tube tip can leave a brush of tiny side curves. After each
//! thinning pass, a curve hanging off a junction is pruned when it is no
//! longer than the junction's distance to the background, i.e. when it lies
//! inside the local cross-section. Thinning and pruning alternate until
//! neither changes anything.

use std::collections::VecDeque;
use std::sync::LazyLock;

use crate::error::Result;
use crate::volume::{Connectivity, Role, Volume};

/// Bit tables over the 26-neighborhood; bit `i` is `Connectivity::Vertex26.offsets()[i]`.
struct Tables {
    adj26: [u32; 26],
    adj6: [u32; 26],
    n18: u32,
    faces: u32,
    /// Bit index of the face neighbor for each of the six peel directions.
    face_bit: [usize; 6],
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let offs = Connectivity::Vertex26.offsets();
    let mut adj26 = [0u32; 26];
    let mut adj6 = [0u32; 26];
    let mut n18 = 0;
    let mut faces = 0;
    for (i, a) in offs.iter().enumerate() {
        let l1: i32 = a.iter().map(|c| c.abs()).sum();
        if l1 <= 2 {
            n18 |= 1 << i;
        }
        if l1 == 1 {
            faces |= 1 << i;
        }
        for (j, b) in offs.iter().enumerate() {
            if i == j {
                continue;
            }
            let d: Vec<i32> = (0..3).map(|k| (a[k] - b[k]).abs()).collect();
            if d.iter().all(|c| *c <= 1) {
                adj26[i] |= 1 << j;
            }
            if d.iter().sum::<i32>() == 1 {
                adj6[i] |= 1 << j;
            }
        }
    }
    const DIRS: [[i32; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
    let face_bit = DIRS.map(|d| offs.iter().position(|o| *o == d).unwrap());
    Tables {
        adj26,
        adj6,
        n18,
        faces,
        face_bit,
    }
});

/// Number of components of `set` (under `adj`) touching `seeds`, saturating at 2.
fn count_components(set: u32, seeds: u32, adj: &[u32; 26]) -> u32 {
    let mut remaining = set;
    let mut count = 0;
    while remaining & seeds != 0 {
        let start = (remaining & seeds).trailing_zeros();
        let mut comp = 1u32 << start;
        let mut frontier = comp;
        while frontier != 0 {
            let b = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let grow = adj[b] & remaining & !comp;
            comp |= grow;
            frontier |= grow;
        }
        remaining &= !comp;
        count += 1;
        if count > 1 {
            break;
        }
    }
    count
}

/// Whether the center of a 26-neighborhood (bit set = foreground) is simple:
/// its removal leaves exactly one 26-component of foreground in the
/// neighborhood and exactly one 6-component of background in the
/// 18-neighborhood that is 6-adjacent to the center.
pub fn is_simple(neighborhood: u32) -> bool {
    let t = &*TABLES;
    let fg = neighborhood & ((1 << 26) - 1);
    if count_components(fg, fg, &t.adj26) != 1 {
        return false;
    }
    let bg = !fg & t.n18;
    count_components(bg, t.faces & bg, &t.adj6) == 1
}

fn neighborhood(fg: &[bool], v: &Volume, i: usize) -> u32 {
    let idx = v.unflatten(i);
    let mut bits = 0;
    for (b, o) in Connectivity::Vertex26.offsets().iter().enumerate() {
        if let Some(n) = v.offset(idx, *o) {
            if fg[v.flatten(n)] {
                bits |= 1 << b;
            }
        }
    }
    bits
}

fn removable(bits: u32) -> bool {
    bits.count_ones() > 1 && is_simple(bits)
}

/// Thins a binary mask to a one-voxel-wide, topologically equivalent skeleton.
pub fn skeletonize(mask: &Volume) -> Result<Volume> {
    mask.ensure_role(&[Role::Binary])?;
    let mut fg: Vec<bool> = mask.data().iter().map(|v| *v != 0.0).collect();
    let depth = face_distance(mask);
    let mut active = mask.foreground_indices();
    loop {
        thin(&mut fg, &mut active, mask);
        if !prune_spurs(&mut fg, &active, &depth, mask) {
            break;
        }
        active.retain(|i| fg[*i]);
    }
    let data = fg.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
    mask.with_data(data, Role::Binary)
}

fn thin(fg: &mut [bool], active: &mut Vec<usize>, v: &Volume) {
    let t = &*TABLES;
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for &face in &t.face_bit {
            candidates.clear();
            for &i in active.iter() {
                if !fg[i] {
                    continue;
                }
                let bits = neighborhood(fg, v, i);
                if bits & (1 << face) == 0 && removable(bits) {
                    candidates.push(i);
                }
            }
            for &i in &candidates {
                if removable(neighborhood(fg, v, i)) {
                    fg[i] = false;
                    changed = true;
                }
            }
        }
        active.retain(|i| fg[*i]);
        if !changed {
            return;
        }
    }
}

/// City-block distance to the nearest background voxel; outside counts as background.
fn face_distance(mask: &Volume) -> Vec<u32> {
    let mut dist = vec![u32::MAX; mask.len()];
    let mut q = VecDeque::new();
    for i in 0..mask.len() {
        if !mask.is_foreground(i) {
            dist[i] = 0;
        } else if mask.neighbor_indices(i, Connectivity::Face6).count() < 6 {
            dist[i] = 1;
            q.push_back(i);
        }
    }
    for i in 0..mask.len() {
        if dist[i] == 0 {
            q.push_back(i);
        }
    }
    while let Some(i) = q.pop_front() {
        for n in mask.neighbor_indices(i, Connectivity::Face6) {
            if dist[n] == u32::MAX {
                dist[n] = dist[i] + 1;
                q.push_back(n);
            }
        }
    }
    dist
}

fn prune_spurs(fg: &mut [bool], active: &[usize], depth: &[u32], v: &Volume) -> bool {
    let nbrs = |i: usize, fg: &[bool]| -> Vec<usize> {
        v.neighbor_indices(i, Connectivity::Vertex26).filter(|n| fg[*n]).collect()
    };
    let degree = |i: usize| nbrs(i, fg).len();

    // junction clusters: mutually adjacent voxels of degree >= 3
    let mut cluster: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut cluster_depth = Vec::new();
    for &s in active {
        if cluster.contains_key(&s) || degree(s) < 3 {
            continue;
        }
        let id = cluster_depth.len();
        let mut deepest = depth[s];
        cluster.insert(s, id);
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for n in nbrs(u, fg) {
                if !cluster.contains_key(&n) && degree(n) >= 3 {
                    cluster.insert(n, id);
                    deepest = deepest.max(depth[n]);
                    q.push_back(n);
                }
            }
        }
        cluster_depth.push(deepest);
    }

    // terminal curves grouped by the junction they hang from
    let mut arms: Vec<Vec<Vec<usize>>> = vec![Vec::new(); cluster_depth.len()];
    let mut all_arms = vec![0usize; cluster_depth.len()];
    for &e in active {
        if degree(e) != 1 {
            continue;
        }
        let mut path = vec![e];
        let (mut prev, mut cur) = (e, nbrs(e, fg)[0]);
        let hub = loop {
            if let Some(c) = cluster.get(&cur) {
                break Some(*c);
            }
            let next: Vec<usize> = nbrs(cur, fg).into_iter().filter(|n| *n != prev).collect();
            if next.len() != 1 {
                break None;
            }
            path.push(cur);
            (prev, cur) = (cur, next[0]);
        };
        if let Some(c) = hub {
            arms[c].push(path);
        }
    }
    for (&j, &c) in &cluster {
        all_arms[c] += nbrs(j, fg).iter().filter(|n| !cluster.contains_key(n)).count();
    }

    let mut changed = false;
    for (c, mut hanging) in arms.into_iter().enumerate() {
        hanging.retain(|p| p.len() as u32 <= cluster_depth[c]);
        // a junction keeps at least two arms
        hanging.sort_by_key(|p| (p.len(), p[0]));
        let removable = all_arms[c].saturating_sub(2).min(hanging.len());
        for path in hanging.into_iter().take(removable) {
            for i in path {
                fg[i] = false;
            }
            changed = true;
        }
    }
    changed
}
