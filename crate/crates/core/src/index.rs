//! Static packed R-tree built with sort-tile-recursive (STR) bulk loading.
//!
//! The tree is immutable once built. Edits to the underlying collection are
//! handled by building a new index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, Aabb, GeoPoint, Polyline};

/// Default node fan-out.
pub const DEFAULT_FANOUT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    bbox: Aabb,
    // Child range in the level below (or in `entries` for leaves).
    start: u32,
    end: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialIndex<Id> {
    entries: Vec<(Id, Aabb)>,
    /// `levels[0]` holds the leaves; the last level holds the single root.
    levels: Vec<Vec<Node>>,
    fanout: usize,
}

impl<Id: Clone + Ord + std::fmt::Debug> SpatialIndex<Id> {
    pub fn build(entries: Vec<(Id, Aabb)>) -> Result<Self> {
        Self::build_with_fanout(entries, DEFAULT_FANOUT)
    }

    pub fn build_with_fanout(entries: Vec<(Id, Aabb)>, fanout: usize) -> Result<Self> {
        if fanout < 2 {
            return Err(Error::InvalidArgument(format!("fan-out must be >= 2, got {fanout}")));
        }
        {
            let mut ids: Vec<&Id> = entries.iter().map(|(id, _)| id).collect();
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::conflict("index entry", format!("{:?}", w[0])));
            }
        }

        let boxes: Vec<Aabb> = entries.iter().map(|(_, b)| *b).collect();
        let order = str_order(&boxes, fanout);
        let mut slots: Vec<Option<(Id, Aabb)>> = entries.into_iter().map(Some).collect();
        let entries: Vec<(Id, Aabb)> = order.iter().map(|&i| slots[i].take().expect("permutation")).collect();

        let mut levels: Vec<Vec<Node>> = Vec::new();
        if !entries.is_empty() {
            let mut current = pack(entries.iter().map(|(_, b)| *b), fanout);
            loop {
                let done = current.len() == 1;
                levels.push(current);
                if done {
                    break;
                }
                let below = levels.last().expect("just pushed");
                let boxes: Vec<Aabb> = below.iter().map(|n| n.bbox).collect();
                let order = str_order(&boxes, fanout);
                let reordered: Vec<Node> = order.iter().map(|&i| below[i]).collect();
                *levels.last_mut().expect("just pushed") = reordered;
                current = pack(levels.last().expect("just pushed").iter().map(|n| n.bbox), fanout);
            }
        }
        Ok(Self { entries, levels, fanout })
    }
}

/// Groups consecutive boxes into parent nodes of at most `fanout` children.
fn pack(boxes: impl Iterator<Item = Aabb>, fanout: usize) -> Vec<Node> {
    let boxes: Vec<Aabb> = boxes.collect();
    boxes
        .chunks(fanout)
        .enumerate()
        .map(|(k, chunk)| Node {
            bbox: chunk[1..].iter().fold(chunk[0], |acc, b| acc.union(b)),
            start: (k * fanout) as u32,
            end: (k * fanout + chunk.len()) as u32,
        })
        .collect()
}

/// STR permutation: sort by center x, cut into vertical slices of
/// `slice_count * fanout` boxes, sort each slice by center y.
fn str_order(boxes: &[Aabb], fanout: usize) -> Vec<usize> {
    let n = boxes.len();
    let mut order: Vec<usize> = (0..n).collect();
    if n <= fanout {
        return order;
    }
    let cx = |i: usize| boxes[i].min_x + boxes[i].max_x;
    let cy = |i: usize| boxes[i].min_y + boxes[i].max_y;
    // Stable sorts keep input order on ties, so builds are deterministic.
    order.sort_by(|&a, &b| cx(a).total_cmp(&cx(b)));
    let leaves = n.div_ceil(fanout);
    let slices = (leaves as f64).sqrt().ceil() as usize;
    let slice_len = slices * fanout;
    for slice in order.chunks_mut(slice_len) {
        slice.sort_by(|&a, &b| cy(a).total_cmp(&cy(b)));
    }
    order
}

impl<Id> SpatialIndex<Id> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    /// Number of node levels (0 for an empty index).
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Entries in packed order.
    pub fn entries(&self) -> &[(Id, Aabb)] {
        &self.entries
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.levels.last().map(|root| root[0].bbox)
    }

    /// Visits every entry whose box intersects `window` (closed test).
    pub fn for_each_in_range<'a>(&'a self, window: &Aabb, mut visit: impl FnMut(&'a Id, &'a Aabb)) {
        let Some(top) = self.levels.len().checked_sub(1) else {
            return;
        };
        let mut stack: Vec<(usize, usize)> = vec![(top, 0)];
        while let Some((level, i)) = stack.pop() {
            let node = &self.levels[level][i];
            if !node.bbox.intersects(window) {
                continue;
            }
            let children = node.start as usize..node.end as usize;
            if level == 0 {
                for (id, bbox) in &self.entries[children] {
                    if bbox.intersects(window) {
                        visit(id, bbox);
                    }
                }
            } else {
                stack.extend(children.map(|c| (level - 1, c)));
            }
        }
    }

    /// Checks the containment invariant and that every entry is reachable exactly once.
    pub fn check_invariants(&self) -> bool {
        if self.levels.is_empty() {
            return self.entries.is_empty();
        }
        if self.levels.last().map(Vec::len) != Some(1) {
            return false;
        }
        let mut covered = vec![0u32; self.entries.len()];
        for (level, nodes) in self.levels.iter().enumerate() {
            for node in nodes {
                let kids = node.start as usize..node.end as usize;
                if kids.is_empty() {
                    return false;
                }
                if level == 0 {
                    for k in kids {
                        if !node.bbox.contains(&self.entries[k].1) {
                            return false;
                        }
                        covered[k] += 1;
                    }
                } else if !kids.clone().all(|k| node.bbox.contains(&self.levels[level - 1][k].bbox)) {
                    return false;
                }
            }
        }
        covered.iter().all(|&c| c == 1)
    }
}

impl<Id: Clone + Ord> SpatialIndex<Id> {
    /// Ids whose box intersects `window`, ascending.
    pub fn query_range(&self, window: &Aabb) -> Vec<Id> {
        let mut out = Vec::new();
        self.for_each_in_range(window, |id, _| out.push(id.clone()));
        out.sort_unstable();
        out
    }

    /// Ids whose resolved point lies within `distance` of `line`, ascending.
    ///
    /// `resolve` must map each id to a point inside its indexed box.
    pub fn query_buffer(
        &self,
        line: &Polyline,
        distance: f64,
        mut resolve: impl FnMut(&Id) -> GeoPoint,
    ) -> Result<Vec<Id>> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::InvalidArgument(format!("buffer distance must be > 0, got {distance}")));
        }
        let window = line.bbox().expand(distance);
        let mut out = Vec::new();
        self.for_each_in_range(&window, |id, _| {
            if point_polyline_distance(&resolve(id), line) <= distance {
                out.push(id.clone());
            }
        });
        out.sort_unstable();
        Ok(out)
    }

    /// The `k` entries closest to `pt`, ascending by distance then id.
    ///
    /// `resolve` must map each id to a point inside its indexed box.
    pub fn nearest(&self, pt: &GeoPoint, k: usize, mut resolve: impl FnMut(&Id) -> GeoPoint) -> Vec<Id> {
        let Some(top) = self.levels.len().checked_sub(1) else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::new();
        heap.push(Candidate { dist2: self.levels[top][0].bbox.distance2_to(pt), item: Item::Node(top, 0) });
        let mut found: Vec<(f64, usize)> = Vec::new();
        while let Some(Candidate { dist2, item }) = heap.pop() {
            if found.len() >= k {
                // Keep draining equal distances so id tie-breaks see every candidate.
                let kth = found[k - 1].0;
                if dist2 > kth {
                    break;
                }
            }
            match item {
                Item::Entry(i) => {
                    found.push((dist2, i));
                    found.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
                Item::Node(level, i) => {
                    let node = &self.levels[level][i];
                    for c in node.start as usize..node.end as usize {
                        if level == 0 {
                            let p = resolve(&self.entries[c].0);
                            let d2 = (p.x - pt.x).powi(2) + (p.y - pt.y).powi(2);
                            heap.push(Candidate { dist2: d2, item: Item::Entry(c) });
                        } else {
                            heap.push(Candidate {
                                dist2: self.levels[level - 1][c].bbox.distance2_to(pt),
                                item: Item::Node(level - 1, c),
                            });
                        }
                    }
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| self.entries[a.1].0.cmp(&self.entries[b.1].0)));
        found.truncate(k);
        found.into_iter().map(|(_, i)| self.entries[i].0.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Node(usize, usize),
    Entry(usize),
}

#[derive(Debug)]
struct Candidate {
    dist2: f64,
    item: Item,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Min-heap on distance; nodes before entries at equal distance so no
    // equally-near entry hides below an unexpanded node.
    fn cmp(&self, other: &Self) -> Ordering {
        let rank = |i: &Item| matches!(i, Item::Entry(_)) as u8;
        other.dist2.total_cmp(&self.dist2).then_with(|| rank(&other.item).cmp(&rank(&self.item)))
    }
}
