//! Rooted label trees stored as parent arrays.
//!
//! Node 0 is the root and its parent entry is `-1` in the serialized form.
//! Leaves are the labels of a hierarchical classification problem.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    preorder: Vec<usize>,
    leaves: Vec<usize>,
}

impl TryFrom<Vec<i64>> for Tree {
    type Error = Error;

    fn try_from(parents: Vec<i64>) -> Result<Self> {
        Tree::from_parents(&parents)
    }
}

impl From<Tree> for Vec<i64> {
    fn from(tree: Tree) -> Self {
        tree.parent_array()
    }
}

impl Tree {
    /// Builds a tree from a parent array. Entry 0 must be `-1`; every other
    /// entry must name an existing node, and following parents must reach the
    /// root.
    pub fn from_parents(parents: &[i64]) -> Result<Tree> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::domain("tree must have at least one node"));
        }
        if parents[0] != -1 {
            return Err(Error::domain("node 0 must be the root (parent -1)"));
        }
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (v, &p) in parents.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= n || p as usize == v {
                return Err(Error::domain(format!("node {v} has invalid parent {p}")));
            }
            parent[v] = Some(p as usize);
            children[p as usize].push(v);
        }

        let mut depth = vec![usize::MAX; n];
        let mut preorder = Vec::with_capacity(n);
        let mut stack = vec![0usize];
        depth[0] = 0;
        while let Some(v) = stack.pop() {
            preorder.push(v);
            for &c in children[v].iter().rev() {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        if preorder.len() != n {
            return Err(Error::domain("parent array contains a cycle or unreachable nodes"));
        }
        let leaves = preorder.iter().copied().filter(|&v| children[v].is_empty()).collect();
        Ok(Tree { parent, children, depth, preorder, leaves })
    }

    pub fn parent_array(&self) -> Vec<i64> {
        self.parent.iter().map(|p| p.map_or(-1, |p| p as i64)).collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn contains(&self, v: usize) -> bool {
        v < self.num_nodes()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Leaves in preorder.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    /// All nodes in preorder, children visited in ascending id order.
    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Reflexive ancestry: every node is an ancestor of itself.
    pub fn is_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let target = self.depth[ancestor];
        let mut v = node;
        while self.depth[v] > target {
            v = self.parent[v].expect("non-root node has a parent");
        }
        v == ancestor
    }

    /// Closest common ancestor.
    pub fn common_ancestor(&self, u: usize, v: usize) -> usize {
        let (mut a, mut b) = (u, v);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].unwrap();
        }
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// Number of edges on the path between `u` and `v`.
    pub fn distance(&self, u: usize, v: usize) -> usize {
        let w = self.common_ancestor(u, v);
        self.depth[u] + self.depth[v] - 2 * self.depth[w]
    }

    /// Distances from `source` to every node.
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nodes()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let next = self.parent[v].into_iter().chain(self.children[v].iter().copied());
            for w in next {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Aggregates per-leaf values up the tree: each internal node receives the
    /// sum over the leaves of its subtree. Entries of `leaf_values` at
    /// internal nodes are ignored.
    pub fn subtree_sums(&self, leaf_values: &[f64]) -> Vec<f64> {
        assert_eq!(leaf_values.len(), self.num_nodes());
        let mut sums = vec![0.0; self.num_nodes()];
        for &v in self.preorder.iter().rev() {
            sums[v] = if self.is_leaf(v) { leaf_values[v] } else { self.children[v].iter().map(|&c| sums[c]).sum() };
        }
        sums
    }

    /// A tree whose node ids follow preorder, where every internal node
    /// covering `m` leaves splits them as evenly as possible among
    /// `min(branching, m)` children.
    pub fn balanced(leaves: usize, branching: usize) -> Result<Tree> {
        if leaves == 0 || branching < 2 {
            return Err(Error::domain("balanced tree needs at least one leaf and branching >= 2"));
        }
        Ok(build_preorder(leaves, |m| {
            let k = branching.min(m);
            (0..k).map(|i| m / k + usize::from(i < m % k)).collect()
        }))
    }

    /// A random hierarchy resembling a lexical taxonomy: uneven fan-out drawn
    /// uniformly from `2..=max_branching`, uneven leaf counts per child, and
    /// single-child chain nodes inserted with probability `chain_prob`.
    pub fn random_hierarchy(leaves: usize, max_branching: usize, chain_prob: f64, seed: u64) -> Result<Tree> {
        if leaves == 0 || max_branching < 2 || !(0.0..1.0).contains(&chain_prob) {
            return Err(Error::domain("invalid random hierarchy parameters"));
        }
        let mut rng = rng_from_seed(seed);
        Ok(build_preorder(leaves, |m| {
            if rng.random::<f64>() < chain_prob {
                return vec![m];
            }
            let k = rng.random_range(2..=max_branching).min(m);
            // Random composition of m into k positive parts.
            let mut cuts: Vec<usize> =
                rand::seq::index::sample(&mut rng, m - 1, k - 1).into_iter().map(|c| c + 1).collect();
            cuts.sort_unstable();
            let mut parts = Vec::with_capacity(k);
            let mut prev = 0;
            for c in cuts.into_iter().chain(std::iter::once(m)) {
                parts.push(c - prev);
                prev = c;
            }
            parts
        }))
    }
}

/// Builds a tree top-down with ids assigned in preorder. `split(m)` returns
/// the leaf counts of the children of a node covering `m > 1` leaves; a single
/// part `[m]` inserts a chain node.
fn build_preorder(leaves: usize, mut split: impl FnMut(usize) -> Vec<usize>) -> Tree {
    let mut parents: Vec<i64> = vec![-1];
    // (node id, leaves covered)
    fn recurse(node: usize, m: usize, parents: &mut Vec<i64>, split: &mut dyn FnMut(usize) -> Vec<usize>) {
        if m <= 1 {
            return;
        }
        for part in split(m) {
            let child = parents.len();
            parents.push(node as i64);
            recurse(child, part, parents, split);
        }
    }
    recurse(0, leaves, &mut parents, &mut split);
    Tree::from_parents(&parents).expect("builder produces a valid tree")
}
