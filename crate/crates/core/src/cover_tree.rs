//! Cover tree (base 2) over entities under the Wasserstein metric.
//!
//! The tree is stored in compressed form: each distinct entity owns one
//! node tagged with the highest level at which it appears, and is implicitly
//! present at every lower level. A node at level `l` hangs below a parent
//! that appears at level `l + 1` and lies within `2^(l+1)` of it; any two
//! nodes present at a common level `l` are more than `2^l` apart. Entities at
//! distance zero from an existing node are stored as duplicates of it.

use crate::ecdf::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    entity: usize,
    level: i32,
    children: Vec<usize>,
    duplicates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CoverTree {
    nodes: Vec<Node>,
    root_level: i32,
    min_level: i32,
    n: usize,
}

fn scale(level: i32) -> f64 {
    (level as f64).exp2()
}

/// Smallest `l` with `d <= 2^l`.
fn ceil_log2(d: f64) -> i32 {
    let mut l = d.log2().ceil() as i32;
    while scale(l) < d {
        l += 1;
    }
    while scale(l - 1) >= d {
        l -= 1;
    }
    l
}

// Relative slack on pruning bounds, absorbing rounding in the triangle
// inequality of computed distances.
const PRUNE_SLACK: f64 = 1e-9;

impl CoverTree {
    /// Build by inserting entities `0..n` in order.
    pub fn build<D>(n: usize, dist: D) -> Self
    where
        D: Fn(usize, usize) -> f64,
    {
        let mut tree = CoverTree {
            nodes: Vec::new(),
            root_level: 0,
            min_level: 0,
            n,
        };
        if n == 0 {
            return tree;
        }
        tree.nodes.push(Node {
            entity: 0,
            level: 0,
            children: Vec::new(),
            duplicates: Vec::new(),
        });
        for p in 1..n {
            tree.insert(p, &dist);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn root_level(&self) -> i32 {
        self.root_level
    }

    pub fn min_level(&self) -> i32 {
        self.min_level
    }

    /// Top level at which `entity` appears as an explicit node, or `None`
    /// if it is stored as a duplicate.
    pub fn level_of(&self, entity: usize) -> Option<i32> {
        self.nodes.iter().find(|nd| nd.entity == entity).map(|nd| nd.level)
    }

    fn children_at(&self, node: usize, level: i32) -> impl Iterator<Item = usize> + '_ {
        self.nodes[node]
            .children
            .iter()
            .copied()
            .filter(move |&c| self.nodes[c].level == level)
    }

    fn insert<D: Fn(usize, usize) -> f64>(&mut self, p: usize, dist: &D) {
        let d_root = dist(p, self.nodes[0].entity);
        if d_root == 0.0 {
            self.nodes[0].duplicates.push(p);
            return;
        }
        let needed = ceil_log2(d_root);
        if self.nodes.len() == 1 {
            self.root_level = needed;
            self.min_level = needed;
            self.nodes[0].level = needed;
        } else if needed > self.root_level {
            self.root_level = needed;
            self.nodes[0].level = needed;
        }

        // Descend: frames[t] = (level i, cover set Q_i with distances).
        let mut frames: Vec<(i32, Vec<(usize, f64)>)> = vec![(self.root_level, vec![(0, d_root)])];
        loop {
            let (i, qi) = frames.last().expect("at least one frame");
            let i = *i;
            let mut q: Vec<(usize, f64)> = qi.clone();
            for &(node, _) in qi {
                for c in self.children_at(node, i - 1) {
                    q.push((c, dist(p, self.nodes[c].entity)));
                }
            }
            if let Some(&(dup, _)) = q.iter().find(|&&(_, d)| d == 0.0) {
                self.nodes[dup].duplicates.push(p);
                return;
            }
            let min_d = q.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
            if min_d > scale(i) {
                break;
            }
            let next: Vec<(usize, f64)> = q.into_iter().filter(|&(_, d)| d <= scale(i)).collect();
            frames.push((i - 1, next));
        }

        // Unwind: the deepest frame failed; attach p below the first cover set
        // (walking upward) that has a point within 2^i.
        frames.pop();
        while let Some((i, qi)) = frames.pop() {
            let best = qi
                .iter()
                .filter(|&&(_, d)| d <= scale(i))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(self.nodes[a.0].entity.cmp(&self.nodes[b.0].entity)));
            if let Some(&(parent, _)) = best {
                let id = self.nodes.len();
                self.nodes.push(Node {
                    entity: p,
                    level: i - 1,
                    children: Vec::new(),
                    duplicates: Vec::new(),
                });
                self.nodes[parent].children.push(id);
                self.min_level = self.min_level.min(i - 1);
                return;
            }
        }
        unreachable!("root cover set always accepts the point");
    }

    /// The `k` nearest entities to `query` (excluding `query` itself),
    /// ordered by distance then entity index.
    pub fn knn<D>(&self, query: usize, k: usize, dist: D) -> Result<Vec<usize>>
    where
        D: Fn(usize, usize) -> f64,
    {
        if query >= self.n {
            return Err(Error::UnknownEntity(format!("#{query}")));
        }
        if k == 0 || k + 1 > self.n {
            return Err(Error::KOutOfRange {
                k,
                max: self.n.saturating_sub(1),
            });
        }
        let mut evaluated: Vec<(f64, usize)> = Vec::new();
        let push_node = |node: usize, d: f64, evaluated: &mut Vec<(f64, usize)>| {
            let nd = &self.nodes[node];
            if nd.entity != query {
                evaluated.push((d, nd.entity));
            }
            for &e in &nd.duplicates {
                if e != query {
                    evaluated.push((d, e));
                }
            }
        };

        let d0 = dist(query, self.nodes[0].entity);
        push_node(0, d0, &mut evaluated);
        let mut cover: Vec<(usize, f64)> = vec![(0, d0)];
        let mut i = self.root_level;
        while i > self.min_level {
            let mut expanded = cover.clone();
            for &(node, _) in &cover {
                for c in self.children_at(node, i - 1) {
                    let d = dist(query, self.nodes[c].entity);
                    push_node(c, d, &mut evaluated);
                    expanded.push((c, d));
                }
            }
            let kth = kth_smallest(&evaluated, k);
            let bound = (kth + scale(i)) * (1.0 + PRUNE_SLACK) + PRUNE_SLACK;
            cover = expanded.into_iter().filter(|&(_, d)| d <= bound).collect();
            i -= 1;
        }
        evaluated.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(evaluated.into_iter().take(k).map(|(_, e)| e).collect())
    }

    /// Check nesting, covering and separation against `dist`. Returns a
    /// description of the first violation found.
    pub fn audit<D>(&self, dist: D) -> std::result::Result<(), String>
    where
        D: Fn(usize, usize) -> f64,
    {
        if self.n == 0 {
            return if self.nodes.is_empty() {
                Ok(())
            } else {
                Err("empty tree has nodes".into())
            };
        }
        // every entity exactly once
        let mut seen = vec![0usize; self.n];
        for nd in &self.nodes {
            seen[nd.entity] += 1;
            for &e in &nd.duplicates {
                seen[e] += 1;
                if dist(e, nd.entity) != 0.0 {
                    return Err(format!("duplicate {e} of {} at nonzero distance", nd.entity));
                }
            }
        }
        if let Some(e) = seen.iter().position(|&c| c != 1) {
            return Err(format!("entity {e} stored {} times", seen[e]));
        }
        // reachability from the root and nesting (children strictly below parent)
        let mut reached = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(u) = stack.pop() {
            for &c in &self.nodes[u].children {
                if reached[c] {
                    return Err(format!("node {c} has two parents"));
                }
                reached[c] = true;
                if self.nodes[c].level >= self.nodes[u].level {
                    return Err(format!(
                        "nesting: child {} at level {} under parent {} at level {}",
                        self.nodes[c].entity, self.nodes[c].level, self.nodes[u].entity, self.nodes[u].level
                    ));
                }
                // covering
                let d = dist(self.nodes[c].entity, self.nodes[u].entity);
                if d > scale(self.nodes[c].level + 1) {
                    return Err(format!(
                        "covering: d({}, {}) = {d} exceeds 2^{}",
                        self.nodes[c].entity,
                        self.nodes[u].entity,
                        self.nodes[c].level + 1
                    ));
                }
                stack.push(c);
            }
        }
        if reached.iter().any(|r| !r) {
            return Err("unreachable node".into());
        }
        if self.nodes[0].level != self.root_level {
            return Err("root level mismatch".into());
        }
        // separation: nodes coexist at every level <= min(top levels)
        for a in 0..self.nodes.len() {
            for b in (a + 1)..self.nodes.len() {
                let l = self.nodes[a].level.min(self.nodes[b].level);
                let d = dist(self.nodes[a].entity, self.nodes[b].entity);
                if d <= scale(l) {
                    return Err(format!(
                        "separation: d({}, {}) = {d} <= 2^{l}",
                        self.nodes[a].entity, self.nodes[b].entity
                    ));
                }
            }
        }
        Ok(())
    }
}

fn kth_smallest(evaluated: &[(f64, usize)], k: usize) -> f64 {
    if evaluated.len() < k {
        return f64::INFINITY;
    }
    let mut ds: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let (_, kth, _) = ds.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

pub fn cover_tree_build(dataset: &Dataset) -> CoverTree {
    CoverTree::build(dataset.len(), |i, j| dataset.distance(i, j))
}

/// k nearest neighbors of a named entity.
pub fn cover_tree_knn(tree: &CoverTree, dataset: &Dataset, query_id: &str, k: usize) -> Result<Vec<String>> {
    let q = dataset
        .index_of(query_id)
        .ok_or_else(|| Error::UnknownEntity(query_id.to_string()))?;
    let ids = tree.knn(q, k, |i, j| dataset.distance(i, j))?;
    Ok(ids.into_iter().map(|i| dataset.entity_ids()[i].clone()).collect())
}

/// Neighbor lists for every entity, computed through the tree.
pub fn cover_tree_knn_lists(tree: &CoverTree, dataset: &Dataset, k: usize) -> Result<Vec<Vec<usize>>> {
    use rayon::prelude::*;
    (0..dataset.len())
        .into_par_iter()
        .map(|q| tree.knn(q, k, |i, j| dataset.distance(i, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_metric(xs: &[f64]) -> impl Fn(usize, usize) -> f64 + '_ {
        move |i, j| (xs[i] - xs[j]).abs()
    }

    fn brute(xs: &[f64], q: usize, k: usize) -> Vec<usize> {
        let mut o: Vec<usize> = (0..xs.len()).filter(|&i| i != q).collect();
        o.sort_by(|&a, &b| (xs[a] - xs[q]).abs().total_cmp(&(xs[b] - xs[q]).abs()).then(a.cmp(&b)));
        o.truncate(k);
        o
    }

    #[test]
    fn singleton() {
        let xs = [0.5];
        let t = CoverTree::build(1, line_metric(&xs));
        assert!(t.audit(line_metric(&xs)).is_ok());
        assert!(t.knn(0, 1, line_metric(&xs)).is_err());
    }

    #[test]
    fn two_points_split_level() {
        let xs = [0.0, 0.3];
        let t = CoverTree::build(2, line_metric(&xs));
        t.audit(line_metric(&xs)).unwrap();
        // 2^-2 < 0.3 <= 2^-1
        assert_eq!(t.root_level(), -1);
        assert_eq!(t.level_of(1), Some(-2));
    }

    #[test]
    fn ceil_log2_exact_powers() {
        assert_eq!(ceil_log2(0.5), -1);
        assert_eq!(ceil_log2(0.3), -1);
        assert_eq!(ceil_log2(0.25), -2);
        assert_eq!(ceil_log2(1.0), 0);
        assert_eq!(ceil_log2(3.0), 2);
    }

    #[test]
    fn duplicates_and_ties() {
        let xs = [0.1, 0.5, 0.1, 0.9, 0.5, 0.3, 0.7];
        let t = CoverTree::build(xs.len(), line_metric(&xs));
        t.audit(line_metric(&xs)).unwrap();
        assert_eq!(t.level_of(2), None);
        for q in 0..xs.len() {
            for k in 1..xs.len() {
                assert_eq!(t.knn(q, k, line_metric(&xs)).unwrap(), brute(&xs, q, k), "q={q} k={k}");
            }
        }
        assert_eq!(t.knn(0, 1, line_metric(&xs)).unwrap(), vec![2]);
    }

    #[test]
    fn grid_points_match_brute_force() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 40) as f64 / 40.0).collect();
        let t = CoverTree::build(xs.len(), line_metric(&xs));
        t.audit(line_metric(&xs)).unwrap();
        for q in 0..xs.len() {
            assert_eq!(t.knn(q, 5, line_metric(&xs)).unwrap(), brute(&xs, q, 5));
        }
    }
}
