//! Agglomerative trie reconstruction of a phylogeny from surface annotations.
//!
//! Every retained `(rank, differentia)` pair is an allele. Annotations are
//! inserted shallowest-first; each descends from the root through children
//! matching its next allele exactly and, where no child matches, unrolls its
//! remaining alleles as a new unifurcating branch ending in a leaf.
//!
//! Annotations of different depths need not retain the same ranks. How a
//! trie rank the inserting annotation lacks is treated is set by
//! [`DescentRule`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::phylogeny::{PhyloRow, PhylogenyTable};
use crate::surface::{Allele, SurfaceAnnotation};

/// Treatment of trie nodes whose rank the inserting annotation does not hold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescentRule {
    /// Such a node ends descent, as a mismatch would.
    Conservative,
    /// Such a node carries no evidence either way and may be passed through.
    /// Among reachable positions the one consuming the most alleles wins,
    /// the shallowest on ties.
    #[default]
    SkipUninformative,
}

impl std::str::FromStr for DescentRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conservative" => Ok(DescentRule::Conservative),
            "skip-uninformative" => Ok(DescentRule::SkipUninformative),
            other => Err(Error::Argument(format!(
                "unknown descent rule {other:?}; expected conservative or skip-uninformative"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Universal common ancestor.
    Root,
    Inner(Allele),
    Leaf { label: String, depth: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrieNode {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    /// Insertion order.
    pub children: Vec<usize>,
    pub origin_time: Option<u64>,
}

impl TrieNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Arena-allocated reconstruction trie; node 0 is the root.
#[derive(Clone, Debug)]
pub struct Trie {
    nodes: Vec<TrieNode>,
    inner_children: HashMap<(usize, Allele), usize>,
}

impl Default for Trie {
    fn default() -> Self {
        Self::new()
    }
}

impl Trie {
    pub const ROOT: usize = 0;

    pub fn new() -> Self {
        Trie {
            nodes: vec![TrieNode { kind: NodeKind::Root, parent: None, children: Vec::new(), origin_time: None }],
            inner_children: HashMap::new(),
        }
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TrieNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    fn push(&mut self, parent: usize, kind: NodeKind) -> usize {
        let id = self.nodes.len();
        if let NodeKind::Inner(allele) = kind {
            self.inner_children.insert((parent, allele), id);
        }
        self.nodes.push(TrieNode { kind, parent: Some(parent), children: Vec::new(), origin_time: None });
        self.nodes[parent].children.push(id);
        id
    }

    /// Deepest node reached by following exactly matching alleles from the
    /// root, and how many alleles were consumed on the way.
    pub fn deepest_congruous(&self, alleles: &[Allele]) -> (usize, usize) {
        let mut node = Self::ROOT;
        let mut consumed = 0;
        for allele in alleles {
            match self.inner_children.get(&(node, *allele)) {
                Some(&child) => {
                    node = child;
                    consumed += 1;
                }
                None => break,
            }
        }
        (node, consumed)
    }

    /// Like [`Trie::deepest_congruous`], but a child whose rank falls below
    /// the next unconsumed allele (so the annotation holds nothing at that
    /// rank) may be passed through without consuming anything.
    pub fn deepest_congruous_skipping(&self, alleles: &[Allele]) -> (usize, usize) {
        let mut best = (Self::ROOT, 0);
        let mut stack = vec![(Self::ROOT, 0usize)];
        while let Some((node, consumed)) = stack.pop() {
            if consumed > best.1 {
                best = (node, consumed);
                if consumed == alleles.len() {
                    break;
                }
            }
            let Some(next) = alleles.get(consumed) else { continue };
            // Pushed in reverse so the stack visits children in insertion order.
            for &child in self.nodes[node].children.iter().rev() {
                if let NodeKind::Inner(allele) = self.nodes[child].kind {
                    if allele == *next {
                        stack.push((child, consumed + 1));
                    } else if allele.rank < next.rank {
                        stack.push((child, consumed));
                    }
                }
            }
        }
        best
    }

    /// Inserts one taxon with the conservative rule; `depth` is the
    /// generation count of its annotation. Returns the id of the new leaf.
    pub fn insert_taxon(&mut self, alleles: &[Allele], label: impl Into<String>, depth: u64) -> Result<usize> {
        self.insert_taxon_with(alleles, label, depth, DescentRule::Conservative)
    }

    pub fn insert_taxon_with(
        &mut self,
        alleles: &[Allele],
        label: impl Into<String>,
        depth: u64,
        rule: DescentRule,
    ) -> Result<usize> {
        if alleles.windows(2).any(|w| w[0].rank >= w[1].rank) {
            return Err(Error::Argument("allele ranks must be strictly ascending".into()));
        }
        if alleles.last().is_some_and(|a| a.rank >= depth) {
            return Err(Error::Argument("allele rank at or beyond annotation depth".into()));
        }
        let (mut node, consumed) = match rule {
            DescentRule::Conservative => self.deepest_congruous(alleles),
            DescentRule::SkipUninformative => self.deepest_congruous_skipping(alleles),
        };
        for allele in &alleles[consumed..] {
            node = self.push(node, NodeKind::Inner(*allele));
        }
        Ok(self.push(node, NodeKind::Leaf { label: label.into(), depth }))
    }

    /// Sets inner origin times to their allele rank, leaves to their
    /// annotation depth, and the root to zero.
    pub fn assign_origin_times_naive(&mut self) {
        for node in &mut self.nodes {
            node.origin_time = Some(match &node.kind {
                NodeKind::Root => 0,
                NodeKind::Inner(allele) => allele.rank,
                NodeKind::Leaf { depth, .. } => *depth,
            });
        }
    }

    /// Depth-first enumeration into an ancestor-list table; ids are dense
    /// from 0 at the root and unifurcations are kept.
    pub fn to_table(&self) -> Result<PhylogenyTable> {
        let mut rows = Vec::with_capacity(self.nodes.len());
        let mut new_id = vec![0u64; self.nodes.len()];
        let mut stack = vec![Self::ROOT];
        while let Some(node) = stack.pop() {
            let entry = &self.nodes[node];
            let origin_time = entry
                .origin_time
                .ok_or_else(|| Error::State("origin times have not been assigned".into()))?;
            new_id[node] = rows.len() as u64;
            rows.push(PhyloRow {
                id: rows.len() as u64,
                ancestor_id: entry.parent.map(|p| new_id[p]),
                origin_time,
                taxon_label: match &entry.kind {
                    NodeKind::Leaf { label, .. } => Some(label.clone()),
                    _ => None,
                },
            });
            stack.extend(entry.children.iter().rev());
        }
        Ok(PhylogenyTable { rows })
    }

    /// Order-independent description of the tree shape and alleles, for
    /// isomorphism checks.
    pub fn canonical_form(&self) -> String {
        fn render(trie: &Trie, node: usize) -> String {
            let head = match &trie.nodes[node].kind {
                NodeKind::Root => "R".to_string(),
                NodeKind::Inner(a) => format!("{}:{}", a.rank, a.differentia),
                NodeKind::Leaf { label, depth } => format!("<{label}@{depth}>"),
            };
            let mut kids: Vec<String> = trie.nodes[node].children.iter().map(|&c| render(trie, c)).collect();
            kids.sort();
            format!("{head}({})", kids.join(","))
        }
        render(self, Self::ROOT)
    }
}

/// Builds a trie from end-state annotations, inserting them in ascending
/// depth order (stable on ties).
pub fn build_trie_from_artifacts<S: AsRef<str>>(
    annotations: &[SurfaceAnnotation],
    labels: &[S],
    rule: DescentRule,
) -> Result<Trie> {
    if annotations.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} annotations but {} labels",
            annotations.len(),
            labels.len()
        )));
    }
    if annotations.is_empty() {
        return Err(Error::Argument("no annotations to reconstruct from".into()));
    }
    let config = annotations[0].config();
    if annotations.iter().any(|a| a.config() != config) {
        return Err(Error::Argument("annotations have heterogeneous surface configurations".into()));
    }
    let mut order: Vec<usize> = (0..annotations.len()).collect();
    order.sort_by_key(|&i| annotations[i].depth());
    let mut trie = Trie::new();
    for i in order {
        let annotation = &annotations[i];
        trie.insert_taxon_with(&annotation.extract_alleles(), labels[i].as_ref(), annotation.depth(), rule)?;
    }
    Ok(trie)
}

/// Full pipeline: build, assign naive origin times, flatten.
pub fn reconstruct<S: AsRef<str>>(
    annotations: &[SurfaceAnnotation],
    labels: &[S],
    rule: DescentRule,
) -> Result<PhylogenyTable> {
    let mut trie = build_trie_from_artifacts(annotations, labels, rule)?;
    trie.assign_origin_times_naive();
    trie.to_table()
}
