use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::volume::{Connectivity, Index3, Role, Shape, Spacing, Volume};

/// 26-adjacency graph over skeleton voxels. Nodes are ordered by linear index.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    shape: Shape,
    spacing: Spacing,
    nodes: Vec<Index3>,
    lookup: HashMap<Index3, usize>,
    adjacency: Vec<Vec<usize>>,
}

pub fn build_skeleton_graph(skeleton: &Volume) -> Result<SkeletonGraph> {
    skeleton.ensure_role(&[Role::Binary])?;
    let linear = skeleton.foreground_indices();
    let nodes: Vec<Index3> = linear.iter().map(|i| skeleton.unflatten(*i)).collect();
    let lookup: HashMap<Index3, usize> = nodes.iter().enumerate().map(|(n, v)| (*v, n)).collect();
    let adjacency = nodes
        .iter()
        .map(|v| {
            let mut adj: Vec<usize> = Connectivity::Vertex26
                .offsets()
                .iter()
                .filter_map(|o| skeleton.offset(*v, *o))
                .filter_map(|n| lookup.get(&n).copied())
                .collect();
            adj.sort_unstable();
            adj
        })
        .collect();
    Ok(SkeletonGraph {
        shape: skeleton.shape(),
        spacing: skeleton.spacing(),
        nodes,
        lookup,
        adjacency,
    })
}

impl SkeletonGraph {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn nodes(&self) -> &[Index3] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_of(&self, voxel: Index3) -> Option<usize> {
        self.lookup.get(&voxel).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// Edges as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, adj)| adj.iter().filter(move |v| **v > u).map(move |v| (u, *v)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) {
        self.adjacency[u].retain(|x| *x != v);
        self.adjacency[v].retain(|x| *x != u);
    }

    /// Connected components as sorted node lists, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        q.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Renders the graph's nodes back into a binary mask.
    pub fn to_volume(&self) -> Volume {
        let nodes: std::collections::HashSet<Index3> = self.nodes.iter().copied().collect();
        Volume::binary_from_fn(self.shape, self.spacing, |i| nodes.contains(&i))
    }
}

/// The skeleton graph with each cluster of mutually adjacent branch-point
/// voxels (degree >= 3) merged into a single node. Loops in this graph are
/// real loops of the skeleton; the little triangles 26-adjacency produces at
/// junctions disappear.
pub(crate) struct Condensed {
    pub cnode_of: Vec<usize>,
    pub junction: Vec<bool>,
    pub count: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl Condensed {
    pub fn new(g: &SkeletonGraph) -> Self {
        let junction: Vec<bool> = (0..g.len()).map(|n| g.degree(n) >= 3).collect();
        let mut cnode_of = vec![usize::MAX; g.len()];
        let mut count = 0;
        for s in 0..g.len() {
            if cnode_of[s] != usize::MAX {
                continue;
            }
            cnode_of[s] = count;
            if junction[s] {
                let mut q = VecDeque::from([s]);
                while let Some(u) = q.pop_front() {
                    for &v in g.neighbors(u) {
                        if junction[v] && cnode_of[v] == usize::MAX {
                            cnode_of[v] = count;
                            q.push_back(v);
                        }
                    }
                }
            }
            count += 1;
        }
        let edges = g
            .edges()
            .map(|(u, v)| (cnode_of[u], cnode_of[v]))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Condensed {
            cnode_of,
            junction,
            count,
            edges,
        }
    }

    /// First condensed edge (in sorted order) that closes a loop, together
    /// with the loop's edge list.
    pub fn find_cycle(&self) -> Option<Vec<(usize, usize)>> {
        let mut parent: Vec<usize> = (0..self.count).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut forest: Vec<Vec<usize>> = vec![Vec::new(); self.count];
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                let mut cycle = path_in_forest(&forest, a, b);
                cycle.push((a, b));
                return Some(cycle);
            }
            parent[ra] = rb;
            forest[a].push(b);
            forest[b].push(a);
        }
        None
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.count];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

fn path_in_forest(forest: &[Vec<usize>], from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut prev = vec![usize::MAX; forest.len()];
    prev[from] = from;
    let mut q = VecDeque::from([from]);
    while let Some(u) = q.pop_front() {
        if u == to {
            break;
        }
        for &v in &forest[u] {
            if prev[v] == usize::MAX {
                prev[v] = u;
                q.push_back(v);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let p = prev[cur];
        path.push((p.min(cur), p.max(cur)));
        cur = p;
    }
    path
}

/// Brandes edge betweenness for an unweighted undirected graph.
fn edge_betweenness(adj: &[Vec<usize>]) -> HashMap<(usize, usize), f64> {
    let n = adj.len();
    let mut score: HashMap<(usize, usize), f64> = HashMap::new();
    for s in 0..n {
        let mut stack = Vec::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                *score.entry((v.min(w), v.max(w))).or_default() += c;
                delta[v] += c;
            }
        }
    }
    score
}

/// Removes loops one at a time, cutting the loop edge with the highest edge
/// betweenness (ties: smallest edge). Returns the number of voxel adjacencies
/// removed.
pub fn break_cycles(g: &mut SkeletonGraph) -> usize {
    let mut removed = 0;
    loop {
        let c = Condensed::new(g);
        let Some(cycle) = c.find_cycle() else {
            return removed;
        };
        let scores = edge_betweenness(&c.adjacency());
        let cut = cycle
            .iter()
            .copied()
            .max_by(|a, b| {
                let (sa, sb) = (scores.get(a).unwrap_or(&0.0), scores.get(b).unwrap_or(&0.0));
                sa.total_cmp(sb).then(b.cmp(a))
            })
            .expect("cycle has edges");
        let voxel_edges: Vec<(usize, usize)> = g
            .edges()
            .filter(|(u, v)| {
                let (a, b) = (c.cnode_of[*u], c.cnode_of[*v]);
                (a.min(b), a.max(b)) == cut
            })
            .collect();
        for (u, v) in voxel_edges {
            g.remove_edge(u, v);
            removed += 1;
        }
    }
}

pub(crate) fn check_acyclic(g: &SkeletonGraph) -> Result<Condensed> {
    let c = Condensed::new(g);
    if let Some(cycle) = c.find_cycle() {
        let (a, _) = cycle[cycle.len() - 1];
        let node = c.cnode_of.iter().position(|x| *x == a).unwrap();
        return Err(Error::CyclicSkeleton(g.nodes[node]));
    }
    Ok(c)
}
