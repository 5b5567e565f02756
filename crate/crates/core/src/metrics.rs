//! Phylometrics over ancestor-list tables.
//!
//! Branch lengths are origin-time differences. All metrics are computed from
//! integer edge lengths and leaf counts, so results are exact up to the final
//! conversion to `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phylogeny::{PhylogenyTable, TreeView};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub colless_like: f64,
    pub mean_evolutionary_distinctiveness: f64,
    pub mean_pairwise_distance: f64,
    pub sum_pairwise_distance: f64,
    pub sum_branch_length: f64,
    pub leaf_count: u64,
    pub node_count: u64,
}

impl MetricsReport {
    /// Looks a metric up by its field name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "colless_like" => self.colless_like,
            "mean_evolutionary_distinctiveness" => self.mean_evolutionary_distinctiveness,
            "mean_pairwise_distance" => self.mean_pairwise_distance,
            "sum_pairwise_distance" => self.sum_pairwise_distance,
            "sum_branch_length" => self.sum_branch_length,
            "leaf_count" => self.leaf_count as f64,
            "node_count" => self.node_count as f64,
            _ => return None,
        })
    }
}

pub const METRIC_NAMES: [&str; 5] = [
    "colless_like",
    "mean_evolutionary_distinctiveness",
    "mean_pairwise_distance",
    "sum_pairwise_distance",
    "sum_branch_length",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseDistances {
    pub mean: f64,
    pub sum: f64,
}

fn total_branch_length(view: &TreeView) -> u128 {
    (0..view.len()).map(|n| u128::from(view.branch_length(n))).sum()
}

pub fn sum_branch_length(table: &PhylogenyTable) -> Result<f64> {
    Ok(total_branch_length(&table.view()?) as f64)
}

fn pairwise_on(view: &TreeView) -> Result<PairwiseDistances> {
    let leaves_below = view.leaves_below();
    let n = u128::from(leaves_below[view.root]);
    if n < 2 {
        return Err(Error::Argument(format!("pairwise distances need at least 2 leaves, got {n}")));
    }
    // each edge lies on the path of every pair it separates
    let sum: u128 = (0..view.len())
        .map(|node| {
            let below = u128::from(leaves_below[node]);
            u128::from(view.branch_length(node)) * below * (n - below)
        })
        .sum();
    let pairs = n * (n - 1) / 2;
    Ok(PairwiseDistances { mean: sum as f64 / pairs as f64, sum: sum as f64 })
}

/// Mean and sum of patristic distance over all unordered leaf pairs.
pub fn pairwise_distances(table: &PhylogenyTable) -> Result<PairwiseDistances> {
    pairwise_on(&table.view()?)
}

fn distinctiveness_on(view: &TreeView) -> Vec<f64> {
    let leaves_below = view.leaves_below();
    let mut acc = vec![0.0f64; view.len()];
    for &node in &view.preorder {
        if let Some(p) = view.parent[node] {
            acc[node] = acc[p] + view.branch_length(node) as f64 / leaves_below[node] as f64;
        }
    }
    view.leaves().into_iter().map(|leaf| acc[leaf]).collect()
}

/// Fair-proportion evolutionary distinctiveness of every leaf, in preorder.
pub fn evolutionary_distinctiveness(table: &PhylogenyTable) -> Result<Vec<f64>> {
    Ok(distinctiveness_on(&table.view()?))
}

pub fn mean_evolutionary_distinctiveness(table: &PhylogenyTable) -> Result<f64> {
    let values = evolutionary_distinctiveness(table)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn colless_on(view: &TreeView) -> u128 {
    let leaves_below = view.leaves_below();
    let mut total = 0u128;
    let mut counts = Vec::new();
    for node in 0..view.len() {
        let kids = &view.children[node];
        if kids.len() < 2 {
            continue;
        }
        counts.clear();
        counts.extend(kids.iter().map(|&c| i128::from(leaves_below[c])));
        counts.sort_unstable();
        // sum_{i<j} |L_i - L_j| over sorted counts
        let k = counts.len() as i128;
        let node_total: i128 = counts.iter().enumerate().map(|(j, &l)| l * (2 * j as i128 - (k - 1))).sum();
        total += node_total as u128;
    }
    total
}

/// Sum over multifurcating nodes of pairwise leaf-count differences between
/// child subtrees. Unifurcations contribute nothing.
pub fn colless_like_index(table: &PhylogenyTable) -> Result<f64> {
    Ok(colless_on(&table.view()?) as f64)
}

pub fn compute_report(table: &PhylogenyTable) -> Result<MetricsReport> {
    let view = table.view()?;
    let pairwise = pairwise_on(&view)?;
    let distinctiveness = distinctiveness_on(&view);
    Ok(MetricsReport {
        colless_like: colless_on(&view) as f64,
        mean_evolutionary_distinctiveness: distinctiveness.iter().sum::<f64>() / distinctiveness.len() as f64,
        mean_pairwise_distance: pairwise.mean,
        sum_pairwise_distance: pairwise.sum,
        sum_branch_length: total_branch_length(&view) as f64,
        leaf_count: distinctiveness.len() as u64,
        node_count: view.len() as u64,
    })
}
