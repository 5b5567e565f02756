//! Scoring a reconstruction against the exact pedigree.
//!
//! Rank `r` of an annotation is laid down when its lineage's generation-`r+1`
//! genome is born, so two taxa that last share an ancestor born at generation
//! `g` share exactly the ranks below `g`. The reference MRCA time of a pair is
//! therefore `g - 1`, which is what naive origin-time assignment recovers when
//! retention is dense. Pairs whose MRCA is a founder, or that share no
//! ancestor, map to the root at time 0.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::island::PedigreeRecord;
use crate::phylogeny::PhylogenyTable;
use crate::stats::median;

/// Absolute-error bands reported by default.
pub const DEFAULT_TOLERANCES: [u64; 5] = [0, 1, 10, 50, 100];

/// Parent links keyed by child lineage id.
#[derive(Clone, Debug, Default)]
pub struct Pedigree {
    parent: HashMap<u64, (u64, u64)>,
}

impl Pedigree {
    pub fn new(records: &[PedigreeRecord]) -> Self {
        Pedigree {
            parent: records.iter().map(|r| (r.child_id, (r.parent_id, r.birth_generation))).collect(),
        }
    }

    /// Birth generation of `id`; founders are generation 0.
    pub fn generation(&self, id: u64) -> u64 {
        self.parent.get(&id).map_or(0, |&(_, g)| g)
    }

    /// Birth generation of the most recent common ancestor (a lineage counts
    /// as its own ancestor), or `None` if the lineages never meet.
    pub fn mrca_generation(&self, a: u64, b: u64) -> Option<u64> {
        let mut ancestors = HashMap::new();
        let mut cur = Some(a);
        while let Some(id) = cur {
            ancestors.insert(id, self.generation(id));
            cur = self.parent.get(&id).map(|&(p, _)| p);
        }
        let mut cur = Some(b);
        while let Some(id) = cur {
            if let Some(&g) = ancestors.get(&id) {
                return Some(g);
            }
            cur = self.parent.get(&id).map(|&(p, _)| p);
        }
        None
    }

    /// Reference MRCA time on the reconstruction's clock.
    pub fn mrca_time(&self, a: u64, b: u64) -> u64 {
        self.mrca_generation(a, b).map_or(0, |g| g.saturating_sub(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructionError {
    pub pairs: usize,
    /// Reconstructed minus true MRCA time, per sampled pair.
    pub errors: Vec<i64>,
    pub mean_error: f64,
    pub median_abs_error: f64,
    /// `(tolerance, fraction of pairs with |error| <= tolerance)`.
    pub within: Vec<(u64, f64)>,
}

impl ReconstructionError {
    pub fn fraction_within(&self, tolerance: u64) -> f64 {
        self.errors.iter().filter(|e| e.unsigned_abs() <= tolerance).count() as f64 / self.errors.len().max(1) as f64
    }
}

/// Compares reconstructed MRCA origin times against pedigree truth.
///
/// If `pair_sample` covers every leaf pair, all pairs are scored; otherwise
/// `pair_sample` pairs are drawn uniformly with replacement.
pub fn compare_to_pedigree<R: Rng + ?Sized>(
    table: &PhylogenyTable,
    pedigree: &[PedigreeRecord],
    lineage_of: &HashMap<String, u64>,
    pair_sample: usize,
    rng: &mut R,
) -> Result<ReconstructionError> {
    let view = table.view()?;
    let leaves = view.leaves();
    let lineages = leaves
        .iter()
        .map(|&leaf| {
            let label = table.rows[leaf]
                .taxon_label
                .as_ref()
                .ok_or_else(|| Error::Argument(format!("leaf {} has no taxon label", table.rows[leaf].id)))?;
            lineage_of
                .get(label)
                .copied()
                .ok_or_else(|| Error::Argument(format!("taxon label {label:?} has no lineage id")))
        })
        .collect::<Result<Vec<u64>>>()?;
    let n = leaves.len();
    if n < 2 {
        return Err(Error::Argument("need at least two leaves to compare".into()));
    }
    let total_pairs = n * (n - 1) / 2;
    let pairs: Vec<(usize, usize)> = if pair_sample >= total_pairs {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        (0..pair_sample)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect()
    };
    let pedigree = Pedigree::new(pedigree);
    let errors: Vec<i64> = pairs
        .iter()
        .map(|&(i, j)| {
            let reconstructed = view.origin_time[view.lca(leaves[i], leaves[j])] as i64;
            let truth = pedigree.mrca_time(lineages[i], lineages[j]) as i64;
            reconstructed - truth
        })
        .collect();
    let abs: Vec<f64> = errors.iter().map(|e| e.unsigned_abs() as f64).collect();
    let mut report = ReconstructionError {
        pairs: errors.len(),
        mean_error: errors.iter().map(|&e| e as f64).sum::<f64>() / errors.len() as f64,
        median_abs_error: median(&abs),
        within: Vec::new(),
        errors,
    };
    report.within = DEFAULT_TOLERANCES.iter().map(|&t| (t, report.fraction_within(t))).collect();
    Ok(report)
}
