//! Deterministic skeleton extraction: farthest-point anchors, one Lloyd
//! refinement, centroid nodes with mean-distance radii, nearest-node links
//! made connected by shortest bridging edges.

use crate::error::{Error, Result};
use crate::sim::neighbors::dist2;

/// Default number of skeleton nodes.
pub const DEFAULT_NODES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkeletonNode {
    pub position: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    pub nodes: Vec<SkeletonNode>,
    /// Undirected links as sorted `(low, high)` index pairs.
    pub edges: Vec<(usize, usize)>,
}

impl SkeletonGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node features `[x, y, z, radius]`, one row per node.
    pub fn features(&self) -> Vec<[f64; 4]> {
        self.nodes.iter().map(|n| [n.position[0], n.position[1], n.position[2], n.radius]).collect()
    }

    /// Both directions of every link, as message-passing edges.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
    }

    /// Rounds features through `f32`, the precision stored on disk.
    pub fn quantized(&self) -> SkeletonGraph {
        let q = |v: f64| v as f32 as f64;
        SkeletonGraph {
            nodes: self.nodes.iter().map(|n| SkeletonNode { position: n.position.map(q), radius: q(n.radius) }).collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn from_features(features: &[[f64; 4]], edges: Vec<(usize, usize)>) -> Result<SkeletonGraph> {
        let k = features.len();
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= k || b >= k || a == b) {
            return Err(Error::Graph(format!("invalid skeleton edge ({a}, {b}) for {k} nodes")));
        }
        let nodes = features.iter().map(|f| SkeletonNode { position: [f[0], f[1], f[2]], radius: f[3] }).collect();
        Ok(SkeletonGraph { nodes, edges })
    }
}

pub fn extract_skeleton(points: &[[f64; 3]], k: usize) -> Result<SkeletonGraph> {
    if k == 0 || points.len() < k {
        return Err(Error::DegenerateInput(format!("{} points cannot give {k} skeleton nodes", points.len())));
    }
    let anchors: Vec<[f64; 3]> = farthest_points(points, k).into_iter().map(|i| points[i]).collect();
    let mut assign = nearest(points, &anchors);
    reseed_empty(points, &anchors, &mut assign, k);
    let centers = centroids(points, &assign, k);
    let mut assign = nearest(points, &centers);
    reseed_empty(points, &centers, &mut assign, k);
    let centers = centroids(points, &assign, k);

    let mut radius_sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (p, &c) in points.iter().zip(&assign) {
        radius_sum[c] += dist2(*p, centers[c]).sqrt();
        count[c] += 1;
    }
    let nodes: Vec<SkeletonNode> =
        centers.iter().enumerate().map(|(c, &position)| SkeletonNode { position, radius: radius_sum[c] / count[c] as f64 }).collect();
    let positions: Vec<[f64; 3]> = nodes.iter().map(|n| n.position).collect();
    Ok(SkeletonGraph { edges: build_links(&positions), nodes })
}

/// Farthest-point sampling from the point nearest the centroid.
fn farthest_points(points: &[[f64; 3]], k: usize) -> Vec<usize> {
    let m = points.len() as f64;
    let centroid = [0, 1, 2].map(|a| points.iter().map(|p| p[a]).sum::<f64>() / m);
    let first = argmin(points.iter().map(|p| dist2(*p, centroid)));
    let mut chosen = vec![first];
    let mut best: Vec<f64> = points.iter().map(|p| dist2(*p, points[first])).collect();
    while chosen.len() < k {
        let next = argmax(best.iter().copied());
        chosen.push(next);
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(dist2(*p, points[next]));
        }
    }
    chosen
}

fn nearest(points: &[[f64; 3]], centers: &[[f64; 3]]) -> Vec<usize> {
    points.iter().map(|p| argmin(centers.iter().map(|c| dist2(*p, *c)))).collect()
}

/// Moves, for each empty cluster in order, the point farthest from its own
/// center (among clusters that can spare one) into the empty cluster.
fn reseed_empty(points: &[[f64; 3]], centers: &[[f64; 3]], assign: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &c in assign.iter() {
        sizes[c] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor =
            argmax(points.iter().zip(assign.iter()).map(|(p, &c)| if sizes[c] > 1 { dist2(*p, centers[c]) } else { f64::NEG_INFINITY }));
        sizes[assign[donor]] -= 1;
        assign[donor] = empty;
        sizes[empty] = 1;
    }
}

/// Cluster means, accumulated as offsets from each cluster's first point so
/// a cluster of identical points reproduces that point exactly.
fn centroids(points: &[[f64; 3]], assign: &[usize], k: usize) -> Vec<[f64; 3]> {
    let mut origin: Vec<Option<[f64; 3]>> = vec![None; k];
    let mut sum = vec![[0.0; 3]; k];
    let mut count = vec![0usize; k];
    for (p, &c) in points.iter().zip(assign) {
        let o = *origin[c].get_or_insert(*p);
        for a in 0..3 {
            sum[c][a] += p[a] - o[a];
        }
        count[c] += 1;
    }
    (0..k)
        .map(|c| {
            let o = origin[c].expect("clusters are non-empty after reseeding");
            [0, 1, 2].map(|a| o[a] + sum[c][a] / count[c] as f64)
        })
        .collect()
}

/// First index of the smallest value.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// First index of the largest value.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Links every node to its nearest other node (ties to the lower index),
/// then joins components with the shortest available edges.
pub fn build_links(nodes: &[[f64; 3]]) -> Vec<(usize, usize)> {
    let k = nodes.len();
    let mut edges: Vec<(usize, usize)> = (0..k)
        .filter(|_| k > 1)
        .map(|i| {
            let j = argmin((0..k).map(|j| if j == i { f64::INFINITY } else { dist2(nodes[i], nodes[j]) }));
            (i.min(j), i.max(j))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut components = k;
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    if components > 1 {
        let mut candidates: Vec<(f64, usize, usize)> =
            (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).map(|(i, j)| (dist2(nodes[i], nodes[j]), i, j)).collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        for (_, i, j) in candidates {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri] = rj;
                edges.push((i, j));
                components -= 1;
                if components == 1 {
                    break;
                }
            }
        }
        edges.sort_unstable();
    }
    edges
}
