//! Static centered interval tree over inclusive `u64` ranges.
//!
//! Stores are batch-built and immutable, so the tree is an array of
//! nodes built once: each node keeps the intervals crossing its center
//! sorted by start and by end, giving stabbing queries in
//! O(log n + k).

#[derive(Debug, Clone)]
pub struct IntervalTree {
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    center: u64,
    by_start: Vec<(u64, u32)>, // ascending start
    by_end: Vec<(u64, u32)>,   // descending end
    left: Option<usize>,
    right: Option<usize>,
}

/// An inclusive interval carrying an item id.
pub type Entry = (u64, u64, u32);

impl IntervalTree {
    pub fn build(mut entries: Vec<Entry>) -> Self {
        let mut tree = IntervalTree {
            nodes: Vec::new(),
            root: None,
        };
        if !entries.is_empty() {
            tree.root = Some(tree.build_node(&mut entries));
        }
        tree
    }

    fn build_node(&mut self, entries: &mut Vec<Entry>) -> usize {
        // Median endpoint keeps the recursion balanced regardless of the
        // interval layout.
        let mut points: Vec<u64> = entries
            .iter()
            .flat_map(|&(s, e, _)| [s, e])
            .collect();
        let mid = points.len() / 2;
        let (_, &mut center, _) = points.select_nth_unstable(mid);

        let mut here = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &(s, e, id) in entries.iter() {
            debug_assert!(s <= e);
            if e < center {
                left.push((s, e, id));
            } else if s > center {
                right.push((s, e, id));
            } else {
                here.push((s, e, id));
            }
        }
        entries.clear();

        let mut by_start: Vec<(u64, u32)> = here.iter().map(|&(s, _, id)| (s, id)).collect();
        by_start.sort_unstable();
        let mut by_end: Vec<(u64, u32)> = here.iter().map(|&(_, e, id)| (e, id)).collect();
        by_end.sort_unstable_by(|a, b| b.cmp(a));

        let idx = self.nodes.len();
        self.nodes.push(Node {
            center,
            by_start,
            by_end,
            left: None,
            right: None,
        });
        if !left.is_empty() {
            let l = self.build_node(&mut left);
            self.nodes[idx].left = Some(l);
        }
        if !right.is_empty() {
            let r = self.build_node(&mut right);
            self.nodes[idx].right = Some(r);
        }
        idx
    }

    /// Item ids of every interval containing `point`.
    pub fn stab(&self, point: u64) -> Vec<u32> {
        let mut out = Vec::new();
        let mut cursor = self.root;
        while let Some(idx) = cursor {
            let node = &self.nodes[idx];
            if point < node.center {
                for &(start, id) in &node.by_start {
                    if start > point {
                        break;
                    }
                    out.push(id);
                }
                cursor = node.left;
            } else if point > node.center {
                for &(end, id) in &node.by_end {
                    if end < point {
                        break;
                    }
                    out.push(id);
                }
                cursor = node.right;
            } else {
                out.extend(node.by_start.iter().map(|&(_, id)| id));
                cursor = None;
            }
        }
        out
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.nodes.iter().map(|n| n.by_start.len()).sum()
    }

    #[cfg(test)]
    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }
}
