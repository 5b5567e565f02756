//! Fixed-width "surface" storage for hereditary stratigraphy fingerprints.
//!
//! Every generation a lineage deposits one random differentia. A surface
//! keeps a constant number of sites and decides, from the deposition time
//! alone, which site (if any) receives the new value. Because placement is a
//! pure function of `(policy, num_sites, time)`, the deposition time of every
//! resident value can be recovered later from its position and the
//! annotation's depth, so no timestamps are stored.
//!
//! Two placement policies are provided:
//!
//! * [`SurfacePolicy::Ring`] overwrites site `T mod S` and so keeps the most
//!   recent `S` depositions.
//! * [`SurfacePolicy::Steady`] keeps retained ranks roughly evenly spaced
//!   across all elapsed time. Epoch 0 fills sites densely. Epoch `e >= 1`
//!   covers `T` in `[S * 2^(e-1), S * 2^e)` with grain `g = 2^e`; only
//!   depositions with `T mod g == 0` are stored, and the `k`-th store of the
//!   epoch evicts the resident whose rank is the `(k+1)`-th smallest odd
//!   multiple of `2^(e-1)` retained at the start of the epoch. At the end of
//!   each epoch the retained ranks are exactly the multiples of `2^e` below
//!   `S * 2^e`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement rule used to map a fingerprint stream onto a surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfacePolicy {
    Steady,
    Ring,
}

impl std::fmt::Display for SurfacePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SurfacePolicy::Steady => f.write_str("steady"),
            SurfacePolicy::Ring => f.write_str("ring"),
        }
    }
}

impl SurfacePolicy {
    /// Checks that `num_sites` is usable with this policy.
    pub fn validate(self, num_sites: u64) -> Result<()> {
        match self {
            SurfacePolicy::Steady if num_sites < 2 || !num_sites.is_power_of_two() => {
                Err(Error::Config(format!(
                    "steady surface requires a power-of-two site count >= 2, got {num_sites}"
                )))
            }
            SurfacePolicy::Ring if num_sites == 0 => {
                Err(Error::Config("ring surface requires at least one site".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Bits per site accepted by [`SurfaceConfig`].
pub const DIFFERENTIA_WIDTHS: [u8; 5] = [1, 8, 16, 32, 64];

/// Shape shared by every annotation in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub policy: SurfacePolicy,
    pub num_sites: u32,
    pub differentia_width: u8,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig { policy: SurfacePolicy::Steady, num_sites: 64, differentia_width: 1 }
    }
}

impl SurfaceConfig {
    pub fn new(policy: SurfacePolicy, num_sites: u32, differentia_width: u8) -> Result<Self> {
        let config = SurfaceConfig { policy, num_sites, differentia_width };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate(u64::from(self.num_sites))?;
        if !DIFFERENTIA_WIDTHS.contains(&self.differentia_width) {
            return Err(Error::Config(format!(
                "differentia_width must be one of {DIFFERENTIA_WIDTHS:?}, got {}",
                self.differentia_width
            )));
        }
        Ok(())
    }

    /// Largest storable differentia value.
    pub fn differentia_mask(&self) -> u64 {
        if self.differentia_width == 64 {
            u64::MAX
        } else {
            (1u64 << self.differentia_width) - 1
        }
    }

    /// Total annotation payload in bits.
    pub fn payload_bits(&self) -> u64 {
        u64::from(self.num_sites) * u64::from(self.differentia_width)
    }

    fn num_words(&self) -> usize {
        self.payload_bits().div_ceil(64) as usize
    }

    /// Length of [`SurfaceAnnotation::to_bytes`] output: packed sites plus a 4-byte depth.
    pub fn encoded_len(&self) -> usize {
        self.payload_bits().div_ceil(8) as usize + 4
    }
}

/// Site that receives the deposition made at `time`, or `None` if the
/// deposition is discarded.
///
/// Runs in `O(log time)`.
pub fn assign_storage_site(policy: SurfacePolicy, num_sites: u64, time: u64) -> Result<Option<u64>> {
    policy.validate(num_sites)?;
    Ok(site_unchecked(policy, num_sites, time))
}

fn site_unchecked(policy: SurfacePolicy, num_sites: u64, time: u64) -> Option<u64> {
    match policy {
        SurfacePolicy::Ring => Some(time % num_sites),
        SurfacePolicy::Steady => steady_site(num_sites, time),
    }
}

/// `2^(e-1)` for the steady epoch `e >= 1` containing `time >= num_sites`.
fn steady_half_grain(num_sites: u64, time: u64) -> u64 {
    let quotient = time / num_sites;
    1u64 << (63 - quotient.leading_zeros())
}

fn steady_site(num_sites: u64, mut time: u64) -> Option<u64> {
    // Each stored deposition takes over the site of an earlier, always-stored
    // victim; chase victims back into the dense epoch 0.
    let mut first = true;
    while time >= num_sites {
        let half = steady_half_grain(num_sites, time);
        let grain = half << 1;
        if !time.is_multiple_of(grain) {
            debug_assert!(first, "victims are always stored depositions");
            return None;
        }
        first = false;
        let store_index = (time - num_sites * half) / grain;
        time = (2 * store_index + 1) * half;
    }
    Some(time)
}

/// `(site, rank)` for every occupied site after `depth` depositions, sorted by site.
///
/// Runs in `O(S log depth)`.
pub fn lookup_resident_times(
    policy: SurfacePolicy,
    num_sites: u64,
    depth: u64,
) -> Result<Vec<(u64, u64)>> {
    policy.validate(num_sites)?;
    Ok(resident_ranks_unchecked(policy, num_sites, depth))
}

fn resident_ranks_unchecked(policy: SurfacePolicy, num_sites: u64, depth: u64) -> Vec<(u64, u64)> {
    let mut residents: Vec<(u64, u64)> = match policy {
        SurfacePolicy::Ring => (depth.saturating_sub(num_sites)..depth)
            .map(|rank| (rank % num_sites, rank))
            .collect(),
        SurfacePolicy::Steady if depth <= num_sites => (0..depth).map(|rank| (rank, rank)).collect(),
        SurfacePolicy::Steady => {
            let half = steady_half_grain(num_sites, depth - 1);
            let grain = half << 1;
            let epoch_start = num_sites * half;
            let stores_done = (depth - epoch_start).div_ceil(grain);
            let carried = (0..num_sites).filter_map(|i| {
                // odd multiples of `half` are evicted in order
                let evicted = i % 2 == 1 && (i - 1) / 2 < stores_done;
                (!evicted).then_some(i * half)
            });
            let stored = (0..stores_done).map(|i| epoch_start + i * grain);
            carried
                .chain(stored)
                .map(|rank| (steady_site(num_sites, rank).expect("retained rank was stored"), rank))
                .collect()
        }
    };
    residents.sort_unstable();
    residents
}

/// Brute-force reference for surface placement.
///
/// Applies each policy's eviction rule literally, one deposition at a time,
/// keeping an explicit occupancy map. It shares no code with
/// [`assign_storage_site`] or [`lookup_resident_times`].
#[derive(Clone, Debug)]
pub struct ReplayOracle {
    policy: SurfacePolicy,
    occupancy: Vec<Option<u64>>,
    time: u64,
    epoch_victims: Vec<u64>,
}

impl ReplayOracle {
    pub fn new(policy: SurfacePolicy, num_sites: u64) -> Result<Self> {
        policy.validate(num_sites)?;
        Ok(ReplayOracle {
            policy,
            occupancy: vec![None; num_sites as usize],
            time: 0,
            epoch_victims: Vec::new(),
        })
    }

    /// Number of depositions replayed so far.
    pub fn depth(&self) -> u64 {
        self.time
    }

    /// Replays one deposition and returns the site written, if any.
    pub fn step(&mut self) -> Option<u64> {
        let t = self.time;
        let s = self.occupancy.len() as u64;
        self.time += 1;
        let site = match self.policy {
            SurfacePolicy::Ring => {
                let site = (t % s) as usize;
                self.occupancy[site] = Some(t);
                return Some(site as u64);
            }
            SurfacePolicy::Steady if t < s => t as usize,
            SurfacePolicy::Steady => {
                // find the epoch by walking boundaries S, 2S, 4S, ...
                let mut epoch = 1u32;
                let mut start = s;
                while t >= start * 2 {
                    start *= 2;
                    epoch += 1;
                }
                let grain = 1u64 << epoch;
                let half = grain / 2;
                if t == start {
                    let mut victims: Vec<u64> = self
                        .occupancy
                        .iter()
                        .flatten()
                        .copied()
                        .filter(|rank| rank % grain == half)
                        .collect();
                    victims.sort_unstable();
                    self.epoch_victims = victims;
                }
                if !t.is_multiple_of(grain) {
                    return None;
                }
                let k = ((t - start) / grain) as usize;
                let victim = self.epoch_victims[k];
                self.occupancy
                    .iter()
                    .position(|slot| *slot == Some(victim))
                    .expect("victim is resident")
            }
        };
        self.occupancy[site] = Some(t);
        Some(site as u64)
    }

    /// Current `(site, rank)` pairs for occupied sites, sorted by site.
    pub fn residents(&self) -> Vec<(u64, u64)> {
        self.occupancy
            .iter()
            .enumerate()
            .filter_map(|(site, rank)| rank.map(|r| (site as u64, r)))
            .collect()
    }
}

/// Occupancy map after `depth` depositions, computed by [`ReplayOracle`].
pub fn replay_oracle(policy: SurfacePolicy, num_sites: u64, depth: u64) -> Result<Vec<(u64, u64)>> {
    let mut oracle = ReplayOracle::new(policy, num_sites)?;
    for _ in 0..depth {
        oracle.step();
    }
    Ok(oracle.residents())
}

/// A retained fingerprint: the value deposited at generation `rank`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Allele {
    pub rank: u64,
    pub differentia: u64,
}

/// Fixed-width buffer of differentia plus the number of depositions so far.
///
/// Sites are bit-packed little-endian into 64-bit words; the supported widths
/// all divide 64, so no site straddles a word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SurfaceAnnotation {
    config: SurfaceConfig,
    words: smallvec::SmallVec<[u64; 2]>,
    depth: u64,
}

impl SurfaceAnnotation {
    /// A blank annotation: all sites zero, depth zero.
    pub fn new(config: SurfaceConfig) -> Result<Self> {
        config.validate()?;
        Ok(SurfaceAnnotation {
            config,
            words: smallvec::smallvec![0; config.num_words()],
            depth: 0,
        })
    }

    pub fn config(&self) -> &SurfaceConfig {
        &self.config
    }

    pub fn depth(&self) -> u64 {
        self.depth
    }

    pub fn num_sites(&self) -> usize {
        self.config.num_sites as usize
    }

    fn locate(&self, site: usize) -> (usize, u32) {
        let bit = site * usize::from(self.config.differentia_width);
        (bit / 64, (bit % 64) as u32)
    }

    /// Value stored at `site`. Sites never written read as zero.
    pub fn site(&self, site: usize) -> u64 {
        assert!(site < self.num_sites(), "site {site} out of range");
        let (word, shift) = self.locate(site);
        (self.words[word] >> shift) & self.config.differentia_mask()
    }

    fn set_site(&mut self, site: usize, value: u64) {
        let (word, shift) = self.locate(site);
        let mask = self.config.differentia_mask() << shift;
        self.words[word] = (self.words[word] & !mask) | ((value << shift) & mask);
    }

    pub fn sites(&self) -> Vec<u64> {
        (0..self.num_sites()).map(|i| self.site(i)).collect()
    }

    /// Records one elapsed generation with fingerprint `differentia`.
    pub fn deposit(&mut self, differentia: u64) -> Result<()> {
        if differentia > self.config.differentia_mask() {
            return Err(Error::Argument(format!(
                "differentia {differentia} does not fit in {} bits",
                self.config.differentia_width
            )));
        }
        self.deposit_masked(differentia);
        Ok(())
    }

    /// Deposits the low `differentia_width` bits of `bits`.
    pub fn deposit_masked(&mut self, bits: u64) {
        let target =
            site_unchecked(self.config.policy, u64::from(self.config.num_sites), self.depth);
        if let Some(site) = target {
            self.set_site(site as usize, bits & self.config.differentia_mask());
        }
        self.depth += 1;
    }

    /// Retained `(rank, differentia)` pairs in ascending rank order.
    pub fn extract_alleles(&self) -> Vec<Allele> {
        let residents = resident_ranks_unchecked(
            self.config.policy,
            u64::from(self.config.num_sites),
            self.depth,
        );
        let mut alleles: Vec<Allele> = residents
            .into_iter()
            .map(|(site, rank)| Allele { rank, differentia: self.site(site as usize) })
            .collect();
        alleles.sort_unstable_by_key(|a| a.rank);
        alleles
    }

    /// Export layout: packed sites (little-endian, site order, padded to a
    /// whole byte) followed by the depth as a little-endian `u32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let depth = u32::try_from(self.depth)
            .map_err(|_| Error::State(format!("depth {} exceeds 32-bit export", self.depth)))?;
        let payload = self.config.payload_bits().div_ceil(8) as usize;
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(payload);
        out.extend_from_slice(&depth.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(config: SurfaceConfig, bytes: &[u8]) -> Result<Self> {
        config.validate()?;
        if bytes.len() != config.encoded_len() {
            return Err(Error::Data(format!(
                "annotation needs {} bytes for {} sites of {} bits, got {}",
                config.encoded_len(),
                config.num_sites,
                config.differentia_width,
                bytes.len()
            )));
        }
        let (payload, depth) = bytes.split_at(bytes.len() - 4);
        let mut annotation = SurfaceAnnotation::new(config)?;
        for (i, chunk) in payload.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            annotation.words[i] = u64::from_le_bytes(word);
        }
        // padding bits must be clear
        let used = config.payload_bits() % 64;
        if used != 0 {
            let last = annotation.words.len() - 1;
            if annotation.words[last] >> used != 0 {
                return Err(Error::Data("nonzero padding bits in annotation".into()));
            }
        }
        annotation.depth = u64::from(u32::from_le_bytes(depth.try_into().expect("4 bytes")));
        Ok(annotation)
    }

    pub fn to_hex(&self) -> Result<String> {
        Ok(crate::io::encode_hex(&self.to_bytes()?))
    }

    pub fn from_hex(config: SurfaceConfig, hex: &str) -> Result<Self> {
        Self::from_bytes(config, &crate::io::decode_hex(hex)?)
    }
}

/// Largest admissible gap between consecutive retained ranks (and the trailing
/// gap to `depth`) for a steady surface: `max(1, 2 * depth / S)`.
pub fn steady_gap_ok(gap: u64, num_sites: u64, depth: u64) -> bool {
    gap <= 1 || u128::from(gap) * u128::from(num_sites) <= 2 * u128::from(depth)
}

/// Gaps between consecutive elements of `ranks ∪ {0, depth}`; `ranks` must be sorted.
pub fn retention_gaps(ranks: &[u64], depth: u64) -> Vec<u64> {
    let mut points = Vec::with_capacity(ranks.len() + 2);
    points.push(0);
    points.extend(ranks.iter().copied().filter(|&r| r != 0));
    points.push(depth);
    points.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Replays depositions `0..max_depth` and checks that placement and
/// positional lookup agree with [`ReplayOracle`] at every depth.
pub fn check_oracle_equivalence(
    policy: SurfacePolicy,
    num_sites: u64,
    max_depth: u64,
) -> std::result::Result<(), String> {
    let mut oracle = ReplayOracle::new(policy, num_sites).map_err(|e| e.to_string())?;
    if !resident_ranks_unchecked(policy, num_sites, 0).is_empty() {
        return Err("depth 0 reports residents".into());
    }
    for time in 0..max_depth {
        let expected = oracle.step();
        let got = site_unchecked(policy, num_sites, time);
        if got != expected {
            return Err(format!("T={time}: assigned {got:?}, oracle wrote {expected:?}"));
        }
        let residents = resident_ranks_unchecked(policy, num_sites, time + 1);
        if residents != oracle.residents() {
            return Err(format!("depth {}: lookup disagrees with replay", time + 1));
        }
    }
    Ok(())
}

/// Number of depths in `0..=max_depth` at which a steady surface of
/// `num_sites` sites leaves a retention gap wider than `max(1, 2T/S)`.
pub fn count_steady_gap_violations(num_sites: u64, max_depth: u64) -> Result<u64> {
    SurfacePolicy::Steady.validate(num_sites)?;
    let mut violations = 0;
    for depth in 0..=max_depth {
        let mut ranks: Vec<u64> = resident_ranks_unchecked(SurfacePolicy::Steady, num_sites, depth)
            .into_iter()
            .map(|(_, rank)| rank)
            .collect();
        ranks.sort_unstable();
        if retention_gaps(&ranks, depth).into_iter().any(|gap| !steady_gap_ok(gap, num_sites, depth)) {
            violations += 1;
        }
    }
    Ok(violations)
}
