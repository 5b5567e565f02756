//! Flat ancestor-list phylogeny tables and a validated tree view over them.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhyloRow {
    pub id: u64,
    /// `None` for the root.
    pub ancestor_id: Option<u64>,
    pub origin_time: u64,
    pub taxon_label: Option<String>,
}

/// Ancestor-list phylogeny: one row per node.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PhylogenyTable {
    pub rows: Vec<PhyloRow>,
}

/// Index-based view of a table whose rows form a single rooted tree with
/// origin times non-decreasing from parent to child.
#[derive(Clone, Debug)]
pub struct TreeView {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub origin_time: Vec<u64>,
    pub root: usize,
    /// Parents before children.
    pub preorder: Vec<usize>,
}

impl TreeView {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.children[node].is_empty()
    }

    /// Leaves in preorder.
    pub fn leaves(&self) -> Vec<usize> {
        self.preorder.iter().copied().filter(|&n| self.is_leaf(n)).collect()
    }

    /// Length of the edge above `node` (zero for the root).
    pub fn branch_length(&self, node: usize) -> u64 {
        self.parent[node].map_or(0, |p| self.origin_time[node] - self.origin_time[p])
    }

    /// Number of leaves in each node's subtree.
    pub fn leaves_below(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.len()];
        for &node in self.preorder.iter().rev() {
            if self.is_leaf(node) {
                counts[node] = 1;
            }
            if let Some(p) = self.parent[node] {
                counts[p] += counts[node];
            }
        }
        counts
    }

    pub fn depth_of(&self, node: usize) -> usize {
        let mut depth = 0;
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            depth += 1;
            cur = p;
        }
        depth
    }

    /// Lowest common ancestor by walking parent pointers.
    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        let (mut da, mut db) = (self.depth_of(a), self.depth_of(b));
        while da > db {
            a = self.parent[a].expect("deeper node has parent");
            da -= 1;
        }
        while db > da {
            b = self.parent[b].expect("deeper node has parent");
            db -= 1;
        }
        while a != b {
            a = self.parent[a].expect("non-root");
            b = self.parent[b].expect("non-root");
        }
        a
    }
}

impl PhylogenyTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Validates tree structure and builds an index view.
    pub fn view(&self) -> Result<TreeView> {
        if self.rows.is_empty() {
            return Err(Error::Argument("phylogeny table is empty".into()));
        }
        let mut position = HashMap::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if position.insert(row.id, i).is_some() {
                return Err(Error::Argument(format!("duplicate id {}", row.id)));
            }
        }
        let mut parent = vec![None; self.rows.len()];
        let mut children = vec![Vec::new(); self.rows.len()];
        let mut root = None;
        for (i, row) in self.rows.iter().enumerate() {
            match row.ancestor_id {
                None => {
                    if root.replace(i).is_some() {
                        return Err(Error::Argument("table has more than one root".into()));
                    }
                }
                Some(ancestor) => {
                    let &p = position.get(&ancestor).ok_or_else(|| {
                        Error::Argument(format!("row {} names unknown ancestor {ancestor}", row.id))
                    })?;
                    if p == i {
                        return Err(Error::Argument(format!("row {} is its own ancestor", row.id)));
                    }
                    parent[i] = Some(p);
                    children[p].push(i);
                }
            }
        }
        let root = root.ok_or_else(|| Error::Argument("table has no root".into()))?;
        let mut preorder = Vec::with_capacity(self.rows.len());
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            preorder.push(node);
            stack.extend(children[node].iter().rev());
        }
        if preorder.len() != self.rows.len() {
            return Err(Error::Argument("ancestor graph is not a single tree".into()));
        }
        let origin_time: Vec<u64> = self.rows.iter().map(|r| r.origin_time).collect();
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if origin_time[i] < origin_time[p] {
                    return Err(Error::Argument(format!(
                        "row {} originates before its ancestor {}",
                        self.rows[i].id, self.rows[p].id
                    )));
                }
            }
        }
        Ok(TreeView { parent, children, origin_time, root, preorder })
    }

    /// Newick string with branch lengths equal to origin-time differences.
    /// Leaf names come from taxon labels; unlabeled nodes stay anonymous.
    pub fn to_newick(&self) -> Result<String> {
        let view = self.view()?;
        let mut out = String::new();
        enum Visit {
            Enter(usize),
            Separator,
            Exit(usize),
        }
        let mut stack = vec![Visit::Enter(view.root)];
        while let Some(visit) = stack.pop() {
            match visit {
                Visit::Enter(node) => {
                    stack.push(Visit::Exit(node));
                    let kids = &view.children[node];
                    if !kids.is_empty() {
                        out.push('(');
                        for (i, &child) in kids.iter().enumerate().rev() {
                            stack.push(Visit::Enter(child));
                            if i > 0 {
                                stack.push(Visit::Separator);
                            }
                        }
                    }
                }
                Visit::Separator => out.push(','),
                Visit::Exit(node) => {
                    if !view.children[node].is_empty() {
                        out.push(')');
                    }
                    if let Some(label) = &self.rows[node].taxon_label {
                        out.push_str(&newick_escape(label));
                    }
                    if node != view.root {
                        let _ = write!(out, ":{}", view.branch_length(node));
                    }
                }
            }
        }
        out.push(';');
        Ok(out)
    }
}

fn newick_escape(label: &str) -> String {
    if label.chars().any(|c| "()[]':;,".contains(c) || c.is_whitespace()) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}
