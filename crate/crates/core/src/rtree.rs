//! Static R-tree over axis-aligned integer hyperrectangles, bulk loaded with
//! sort-tile-recursive packing. Built once per consumer layer and then only queried.

use std::fmt;

/// Half-open integer box: `lo[d] <= x < hi[d]` in every dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect<const D: usize> {
    pub lo: [i64; D],
    pub hi: [i64; D],
}

impl<const D: usize> Rect<D> {
    /// `None` when the box is empty in some dimension.
    pub fn new(lo: [i64; D], hi: [i64; D]) -> Option<Self> {
        (0..D).all(|d| lo[d] < hi[d]).then_some(Rect { lo, hi })
    }

    pub fn volume(&self) -> u64 {
        (0..D).map(|d| (self.hi[d] - self.lo[d]) as u64).product()
    }

    /// Touching boundaries do not intersect.
    pub fn intersects(&self, other: &Rect<D>) -> bool {
        (0..D).all(|d| self.lo[d] < other.hi[d] && other.lo[d] < self.hi[d])
    }

    pub fn intersection(&self, other: &Rect<D>) -> Option<Rect<D>> {
        let mut lo = [0; D];
        let mut hi = [0; D];
        for d in 0..D {
            lo[d] = self.lo[d].max(other.lo[d]);
            hi[d] = self.hi[d].min(other.hi[d]);
        }
        Rect::new(lo, hi)
    }

    pub fn contains(&self, other: &Rect<D>) -> bool {
        (0..D).all(|d| self.lo[d] <= other.lo[d] && other.hi[d] <= self.hi[d])
    }

    pub fn union(&self, other: &Rect<D>) -> Rect<D> {
        let mut out = *self;
        for d in 0..D {
            out.lo[d] = out.lo[d].min(other.lo[d]);
            out.hi[d] = out.hi[d].max(other.hi[d]);
        }
        out
    }

    fn center2(&self, d: usize) -> i64 {
        self.lo[d] + self.hi[d]
    }
}

impl<const D: usize> fmt::Display for Rect<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in 0..D {
            if d > 0 {
                f.write_str("x")?;
            }
            write!(f, "[{},{})", self.lo[d], self.hi[d])?;
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_ENTRIES: usize = 16;
pub const DEFAULT_MIN_ENTRIES: usize = 6;

#[derive(Debug, Clone)]
enum Children {
    /// indices into `entries`
    Leaf(Vec<usize>),
    /// indices into `nodes`
    Internal(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node<const D: usize> {
    bbox: Rect<D>,
    children: Children,
}

impl<const D: usize> Node<D> {
    fn len(&self) -> usize {
        match &self.children {
            Children::Leaf(v) | Children::Internal(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RTree<const D: usize> {
    entries: Vec<(Rect<D>, usize)>,
    nodes: Vec<Node<D>>,
    root: Option<usize>,
    max_entries: usize,
    min_entries: usize,
}

impl<const D: usize> RTree<D> {
    pub fn bulk_load(items: Vec<(Rect<D>, usize)>) -> Self {
        Self::bulk_load_with(items, DEFAULT_MAX_ENTRIES, DEFAULT_MIN_ENTRIES)
    }

    /// `min_entries` must not exceed `max_entries / 2`, which the packing guarantees.
    pub fn bulk_load_with(items: Vec<(Rect<D>, usize)>, max_entries: usize, min_entries: usize) -> Self {
        assert!(max_entries >= 2 && min_entries >= 1 && 2 * min_entries <= max_entries);
        let mut tree = RTree { entries: items, nodes: Vec::new(), root: None, max_entries, min_entries };
        if tree.entries.is_empty() {
            return tree;
        }

        let leaf_input: Vec<(Rect<D>, usize)> =
            tree.entries.iter().enumerate().map(|(i, (r, _))| (*r, i)).collect();
        let mut level: Vec<usize> = Vec::new();
        for group in str_pack(leaf_input, 0, max_entries) {
            let bbox = bounding(group.iter().map(|(r, _)| r));
            tree.nodes.push(Node { bbox, children: Children::Leaf(group.into_iter().map(|(_, i)| i).collect()) });
            level.push(tree.nodes.len() - 1);
        }
        while level.len() > 1 {
            let input: Vec<(Rect<D>, usize)> = level.iter().map(|&n| (tree.nodes[n].bbox, n)).collect();
            level.clear();
            for group in str_pack(input, 0, max_entries) {
                let bbox = bounding(group.iter().map(|(r, _)| r));
                tree.nodes.push(Node {
                    bbox,
                    children: Children::Internal(group.into_iter().map(|(_, i)| i).collect()),
                });
                level.push(tree.nodes.len() - 1);
            }
        }
        tree.root = level.first().copied();
        tree
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn root_bbox(&self) -> Option<Rect<D>> {
        self.root.map(|r| self.nodes[r].bbox)
    }

    /// Number of levels (0 for an empty tree).
    pub fn height(&self) -> usize {
        let mut h = 0;
        let mut cur = self.root;
        while let Some(n) = cur {
            h += 1;
            cur = match &self.nodes[n].children {
                Children::Leaf(_) => None,
                Children::Internal(c) => c.first().copied(),
            };
        }
        h
    }

    /// Payloads of all stored rectangles intersecting `query`, ascending.
    pub fn query(&self, query: &Rect<D>) -> Vec<usize> {
        let mut out = Vec::new();
        self.query_with(query, |_, payload| out.push(payload));
        out.sort_unstable();
        out
    }

    /// Visits each intersecting (rect, payload) in tree order.
    pub fn query_with(&self, query: &Rect<D>, mut visit: impl FnMut(&Rect<D>, usize)) {
        let Some(root) = self.root else { return };
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bbox.intersects(query) {
                continue;
            }
            match &node.children {
                Children::Leaf(items) => {
                    for &i in items {
                        let (r, p) = &self.entries[i];
                        if r.intersects(query) {
                            visit(r, *p);
                        }
                    }
                }
                Children::Internal(kids) => stack.extend(kids.iter().rev()),
            }
        }
    }

    /// Verifies fill bounds, bounding-box containment and equal leaf depth.
    pub fn check_invariants(&self) -> Result<(), String> {
        let Some(root) = self.root else {
            return if self.entries.is_empty() { Ok(()) } else { Err("entries without root".into()) };
        };
        let mut leaf_depth = None;
        let mut seen = 0usize;
        let mut stack = vec![(root, 1usize)];
        while let Some((n, depth)) = stack.pop() {
            let node = &self.nodes[n];
            let len = node.len();
            if len > self.max_entries || len == 0 {
                return Err(format!("node {n} has {len} entries"));
            }
            if n != root && len < self.min_entries {
                return Err(format!("non-root node {n} underfull: {len} < {}", self.min_entries));
            }
            match &node.children {
                Children::Leaf(items) => {
                    match leaf_depth {
                        None => leaf_depth = Some(depth),
                        Some(d) if d != depth => return Err(format!("leaf depths {d} and {depth}")),
                        _ => {}
                    }
                    for &i in items {
                        if !node.bbox.contains(&self.entries[i].0) {
                            return Err(format!("leaf {n} does not contain entry {i}"));
                        }
                    }
                    seen += items.len();
                }
                Children::Internal(kids) => {
                    for &k in kids {
                        if !node.bbox.contains(&self.nodes[k].bbox) {
                            return Err(format!("node {n} does not contain child {k}"));
                        }
                        stack.push((k, depth + 1));
                    }
                }
            }
        }
        if seen != self.entries.len() {
            return Err(format!("reached {seen} of {} entries", self.entries.len()));
        }
        Ok(())
    }
}

fn bounding<'a, const D: usize>(mut rects: impl Iterator<Item = &'a Rect<D>>) -> Rect<D> {
    let first = *rects.next().expect("non-empty group");
    rects.fold(first, |acc, r| acc.union(r))
}

/// Smallest s with s^k >= p.
fn int_root_ceil(p: usize, k: u32) -> usize {
    let mut s = 1usize;
    while s.pow(k) < p {
        s += 1;
    }
    s
}

/// Splits into `parts` consecutive runs whose sizes differ by at most one.
fn split_even<T>(items: Vec<T>, parts: usize) -> Vec<Vec<T>> {
    let n = items.len();
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut it = items.into_iter();
    for i in 0..parts {
        let take = base + usize::from(i < extra);
        out.push(it.by_ref().take(take).collect());
    }
    out
}

/// Sort-tile-recursive grouping into runs of at most `max` items. Every group
/// holds at least floor(n / ceil(n / max)) items, i.e. more than max / 2 when n > max.
fn str_pack<const D: usize>(mut items: Vec<(Rect<D>, usize)>, dim: usize, max: usize) -> Vec<Vec<(Rect<D>, usize)>> {
    let n = items.len();
    if n <= max {
        return vec![items];
    }
    let pages = n.div_ceil(max);
    items.sort_by_key(|(r, i)| (r.center2(dim), *i));
    let remaining = (D - dim) as u32;
    if remaining <= 1 {
        return split_even(items, pages);
    }
    let slabs = int_root_ceil(pages, remaining);
    split_even(items, slabs)
        .into_iter()
        .flat_map(|slab| str_pack(slab, dim + 1, max))
        .collect()
}
