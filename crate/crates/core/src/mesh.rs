//! Software model of a 2-D lattice of processing elements exchanging
//! migrants over asynchronous per-neighbor channels.
//!
//! Hardware asynchrony is modelled with two seeded sources of jitter: each
//! dispatched batch is delivered after a uniform integer latency in
//! `[latency_min, latency_max]` rounds, and each PE executes its update cycle
//! in a given round only with probability `step_probability`.
//!
//! A round proceeds as follows:
//!
//! 1. Deliver every in-flight batch that is due, provided the destination has
//!    an open receive. Links are processed row-major, then in `E, S, N, W`
//!    order. Delivery fills the destination's immigration buffer and sets its
//!    "receive complete" flag, and sets the sender's "send complete" flag.
//! 2. Visit PEs in a seeded random order. Each non-halted PE that passes its
//!    step gate polls its flags ([`poll_and_exchange`]) and then advances one
//!    generation.
//!
//! During step 2 a PE only touches its own population and its own halves of
//! its links, so PEs of one round may be advanced in parallel without
//! changing results.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::island::{sample_distinct, Genome, PeConfig, PeState, PedigreeRecord, TreatmentConfig};
use crate::surface::SurfaceConfig;

const MAX_MESH_SIDE: u32 = 4096;
const SCHEDULER_STREAM: u64 = u64::MAX;
const SAMPLING_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub width: u32,
    pub height: u32,
    /// Genomes per directional batch; 0 disables migration.
    pub mig_buffer_size: usize,
    pub latency_min: u64,
    pub latency_max: u64,
    pub step_probability: f64,
    pub halt_generations: u64,
    /// Wrap edges around into a torus.
    pub torus: bool,
    /// Advance the PEs of a round on the rayon thread pool.
    pub parallel: bool,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            width: 4,
            height: 4,
            mig_buffer_size: 1,
            latency_min: 1,
            latency_max: 4,
            step_probability: 0.9,
            halt_generations: 100,
            torus: false,
            parallel: false,
        }
    }
}

impl MeshConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "mesh.width and mesh.height must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if self.width > MAX_MESH_SIDE || self.height > MAX_MESH_SIDE {
            return Err(Error::Config(format!("mesh sides are limited to {MAX_MESH_SIDE}")));
        }
        if self.latency_min < 1 || self.latency_min > self.latency_max {
            return Err(Error::Config(format!(
                "mesh latency needs 1 <= latency_min <= latency_max, got [{}, {}]",
                self.latency_min, self.latency_max
            )));
        }
        if !(self.step_probability > 0.0 && self.step_probability <= 1.0) {
            return Err(Error::Config(format!(
                "mesh.step_probability must lie in (0, 1], got {}",
                self.step_probability
            )));
        }
        if self.halt_generations == 0 {
            return Err(Error::Config("mesh.halt_generations must be positive".into()));
        }
        Ok(())
    }

    pub fn pe_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn index(&self, (x, y): (u32, u32)) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn coordinate(&self, index: usize) -> (u32, u32) {
        ((index % self.width as usize) as u32, (index / self.width as usize) as u32)
    }

    /// Neighbor of `coordinate` in `direction`, if a link exists.
    pub fn neighbor(&self, (x, y): (u32, u32), direction: Direction) -> Option<(u32, u32)> {
        let (dx, dy) = direction.offset();
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        let (mut nx, mut ny) = (i64::from(x) + dx, i64::from(y) + dy);
        if self.torus {
            nx = nx.rem_euclid(w);
            ny = ny.rem_euclid(h);
        }
        let inside = (0..w).contains(&nx) && (0..h).contains(&ny);
        let target = (nx as u32, ny as u32);
        (inside && target != (x, y)).then_some(target)
    }
}

/// Cardinal link direction, listed in delivery order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    East,
    South,
    North,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::South, Direction::North, Direction::West];

    fn offset(self) -> (i64, i64) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::North => (0, -1),
            Direction::West => (-1, 0),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::East => Direction::West,
            Direction::South => Direction::North,
            Direction::North => Direction::South,
            Direction::West => Direction::East,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// A batch of emigrants travelling along a link.
#[derive(Clone, Debug, PartialEq)]
pub struct InFlight {
    pub batch: Vec<Genome>,
    pub delivery_round: u64,
}

/// Sender half of a directed link.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OutLink {
    /// Emigration buffer while travelling; `None` once delivered.
    pub in_flight: Option<InFlight>,
    pub send_complete: bool,
}

/// Receiver half of a directed link.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct InLink {
    pub immigration: Vec<Genome>,
    pub receive_complete: bool,
}

/// A PE together with its random stream and link endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct PeNode {
    pub pe: PeState,
    rng: ChaCha8Rng,
    /// Indexed by [`Direction`] toward the neighbor.
    pub outbox: [Option<OutLink>; 4],
    /// Indexed by [`Direction`] toward the neighbor the batch came from.
    pub inbox: [Option<InLink>; 4],
}

/// The random stream owned by the PE at `coordinate`.
pub fn pe_rng(seed: u64, coordinate: (u32, u32)) -> ChaCha8Rng {
    stream_rng(seed, (u64::from(coordinate.0) << 32) | u64::from(coordinate.1))
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Whole-mesh simulation state.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub mesh: MeshConfig,
    pub pe_config: PeConfig,
    pub treatment: TreatmentConfig,
    pub surface: SurfaceConfig,
    pub seed: u64,
    pub round: u64,
    /// Row-major.
    pub nodes: Vec<PeNode>,
    scheduler: ChaCha8Rng,
}

/// Throughput of a completed [`run`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub rounds: u64,
    pub wall_seconds: f64,
    pub pe_generations: u64,
    pub pe_generations_per_sec: f64,
    pub total_replications: u64,
}

/// Genome drawn by [`sample_genomes`], with its origin.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGenome {
    pub coordinate: (u32, u32),
    pub slot: usize,
    pub genome: Genome,
}

/// Founds every population, fills and dispatches every emigration buffer,
/// and opens every receive.
pub fn init_sim(
    mesh: MeshConfig,
    pe_config: PeConfig,
    treatment: TreatmentConfig,
    surface: SurfaceConfig,
    seed: u64,
    track_pedigree: bool,
) -> Result<SimState> {
    mesh.validate()?;
    pe_config.validate()?;
    treatment.validate()?;
    surface.validate()?;
    let nodes = (0..mesh.pe_count())
        .map(|index| {
            let coordinate = mesh.coordinate(index);
            let pe = PeState::found(coordinate, &pe_config, surface, track_pedigree)?;
            let mut node = PeNode {
                pe,
                rng: pe_rng(seed, coordinate),
                outbox: Default::default(),
                inbox: Default::default(),
            };
            for direction in Direction::ALL {
                if mesh.neighbor(coordinate, direction).is_some() {
                    node.inbox[direction.slot()] = Some(InLink::default());
                    // a set send flag makes the first dispatch go through the normal refill path
                    node.outbox[direction.slot()] =
                        Some(OutLink { in_flight: None, send_complete: true });
                }
            }
            if mesh.mig_buffer_size > 0 {
                dispatch_pending(&mut node, &mesh, 0);
            }
            Ok(node)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimState {
        mesh,
        pe_config,
        treatment,
        surface,
        seed,
        round: 0,
        nodes,
        scheduler: stream_rng(seed, SCHEDULER_STREAM),
    })
}

/// Refills and dispatches every outgoing link whose send flag is set.
fn dispatch_pending(node: &mut PeNode, mesh: &MeshConfig, round: u64) {
    let PeNode { pe, rng, outbox, .. } = node;
    let batch_size = mesh.mig_buffer_size.min(pe.population.len());
    for link in outbox.iter_mut().flatten() {
        if !link.send_complete {
            continue;
        }
        debug_assert!(link.in_flight.is_none());
        let batch = sample_distinct(rng, pe.population.len(), batch_size)
            .into_iter()
            .map(|i| pe.population[i].clone())
            .collect();
        let latency = rng.random_range(mesh.latency_min..=mesh.latency_max);
        link.send_complete = false;
        link.in_flight = Some(InFlight { batch, delivery_round: round + latency });
    }
}

/// Handles every set completion flag on one PE.
///
/// Received immigrants overwrite distinct uniformly chosen slots and the
/// receive is reopened; completed sends are refilled with fresh samples and
/// redispatched with a new random latency.
pub fn poll_and_exchange(node: &mut PeNode, mesh: &MeshConfig, round: u64) {
    {
        let PeNode { pe, rng, inbox, .. } = &mut *node;
        for link in inbox.iter_mut().flatten() {
            if !link.receive_complete {
                continue;
            }
            let count = link.immigration.len().min(pe.population.len());
            let slots = sample_distinct(rng, pe.population.len(), count);
            for (slot, immigrant) in slots.into_iter().zip(link.immigration.drain(..)) {
                pe.population[slot] = immigrant;
            }
            link.immigration.clear();
            link.receive_complete = false;
        }
    }
    if mesh.mig_buffer_size > 0 {
        dispatch_pending(node, mesh, round);
    }
}

impl SimState {
    pub fn node(&self, coordinate: (u32, u32)) -> &PeNode {
        &self.nodes[self.mesh.index(coordinate)]
    }

    pub fn node_mut(&mut self, coordinate: (u32, u32)) -> &mut PeNode {
        let index = self.mesh.index(coordinate);
        &mut self.nodes[index]
    }

    /// Number of directed links in the mesh.
    pub fn link_count(&self) -> usize {
        self.nodes.iter().map(|n| n.outbox.iter().flatten().count()).sum()
    }

    /// Number of batches currently travelling.
    pub fn in_flight_count(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| n.outbox.iter().flatten())
            .filter(|l| l.in_flight.is_some())
            .count()
    }

    pub fn all_halted(&self) -> bool {
        self.nodes.iter().all(|n| n.pe.generation >= self.mesh.halt_generations)
    }

    fn deliver_due(&mut self) {
        for index in 0..self.nodes.len() {
            let coordinate = self.mesh.coordinate(index);
            for direction in Direction::ALL {
                let Some(target) = self.mesh.neighbor(coordinate, direction) else {
                    continue;
                };
                let target_index = self.mesh.index(target);
                let due = self.nodes[index].outbox[direction.slot()]
                    .as_ref()
                    .and_then(|l| l.in_flight.as_ref())
                    .is_some_and(|f| f.delivery_round <= self.round);
                let receiver_open = self.nodes[target_index].inbox[direction.opposite().slot()]
                    .as_ref()
                    .is_some_and(|l| !l.receive_complete);
                if !(due && receiver_open) {
                    continue;
                }
                let link = self.nodes[index].outbox[direction.slot()].as_mut().expect("link exists");
                let flight = link.in_flight.take().expect("due batch");
                link.send_complete = true;
                let inbox = self.nodes[target_index].inbox[direction.opposite().slot()]
                    .as_mut()
                    .expect("reverse link exists");
                inbox.immigration = flight.batch;
                inbox.receive_complete = true;
            }
        }
    }

    /// Advances the simulation by one scheduler round.
    pub fn step_round(&mut self) -> Result<()> {
        self.deliver_due();
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.shuffle(&mut self.scheduler);
        let mut active = vec![false; self.nodes.len()];
        for &index in &order {
            let gate = self.scheduler.random_bool(self.mesh.step_probability);
            active[index] = gate && self.nodes[index].pe.generation < self.mesh.halt_generations;
        }
        let (mesh, pe_config, treatment, round) = (&self.mesh, &self.pe_config, &self.treatment, self.round);
        let work = |node: &mut PeNode| -> Result<()> {
            poll_and_exchange(node, mesh, round);
            let PeNode { pe, rng, .. } = node;
            pe.advance_generation(treatment, pe_config, rng)
        };
        if mesh.parallel {
            self.nodes
                .par_iter_mut()
                .zip(active.par_iter())
                .filter(|(_, &on)| on)
                .try_for_each(|(node, _)| work(node))?;
        } else {
            for &index in &order {
                if active[index] {
                    work(&mut self.nodes[index])?;
                }
            }
        }
        self.round += 1;
        Ok(())
    }

    /// Sum of all PE generation counters.
    pub fn pe_generations(&self) -> u64 {
        self.nodes.iter().map(|n| n.pe.generation).sum()
    }

    /// Concatenated birth logs in row-major PE order.
    pub fn pedigree(&self) -> Option<Vec<PedigreeRecord>> {
        let mut all = Vec::new();
        for node in &self.nodes {
            all.extend_from_slice(node.pe.pedigree.as_ref()?);
        }
        Some(all)
    }
}

/// Steps rounds until every PE has reached `halt_generations`.
pub fn run(sim: &mut SimState) -> Result<RunStats> {
    let start = Instant::now();
    let first_round = sim.round;
    let first_generations = sim.pe_generations();
    while !sim.all_halted() {
        sim.step_round()?;
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    let pe_generations = sim.pe_generations() - first_generations;
    Ok(RunStats {
        rounds: sim.round - first_round,
        wall_seconds,
        pe_generations,
        pe_generations_per_sec: pe_generations as f64 / wall_seconds.max(f64::MIN_POSITIVE),
        total_replications: pe_generations * sim.pe_config.pop_size as u64,
    })
}

/// Draws `per_pe` genomes without replacement from every PE, row-major,
/// slots ascending within a PE.
pub fn sample_genomes<R: Rng + ?Sized>(sim: &SimState, per_pe: usize, rng: &mut R) -> Result<Vec<SampledGenome>> {
    if per_pe > sim.pe_config.pop_size {
        return Err(Error::Argument(format!(
            "cannot sample {per_pe} genomes per PE from populations of {}",
            sim.pe_config.pop_size
        )));
    }
    let mut out = Vec::with_capacity(per_pe * sim.nodes.len());
    for node in &sim.nodes {
        let mut slots = sample_distinct(rng, node.pe.population.len(), per_pe);
        slots.sort_unstable();
        out.extend(slots.into_iter().map(|slot| SampledGenome {
            coordinate: node.pe.coordinate,
            slot,
            genome: node.pe.population[slot].clone(),
        }));
    }
    Ok(out)
}

/// Random stream for end-of-run sampling, independent of PE and scheduler streams.
pub fn sampling_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, SAMPLING_STREAM)
}

/// Evolves a single PE with no neighbors, using the same random stream it
/// would own inside a mesh.
pub fn run_isolated_pe(
    coordinate: (u32, u32),
    pe_config: &PeConfig,
    treatment: &TreatmentConfig,
    surface: SurfaceConfig,
    seed: u64,
    generations: u64,
) -> Result<PeState> {
    let mut pe = PeState::found(coordinate, pe_config, surface, false)?;
    let mut rng = pe_rng(seed, coordinate);
    for _ in 0..generations {
        pe.advance_generation(treatment, pe_config, &mut rng)?;
    }
    Ok(pe)
}
