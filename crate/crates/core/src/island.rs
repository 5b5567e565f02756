//! Per-PE evolutionary kernel: genomes, mutation, tournament selection, and
//! generation turnover.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::surface::{SurfaceAnnotation, SurfaceConfig};

/// Unit of selection and migration: a fitness scalar plus its tracking annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Genome {
    pub fitness: f64,
    pub annotation: SurfaceAnnotation,
    /// Identity used only by exact pedigree tracking.
    pub lineage_id: u64,
}

impl Genome {
    pub fn founder(surface: SurfaceConfig, lineage_id: u64) -> Result<Self> {
        Ok(Genome { fitness: 0.0, annotation: SurfaceAnnotation::new(surface)?, lineage_id })
    }

    /// Generations elapsed along this genome's lineage.
    pub fn depth(&self) -> u64 {
        self.annotation.depth()
    }
}

/// Fitness hook. Genomes store their fitness directly, so evaluation reads it back.
pub fn evaluate(genome: &Genome) -> f64 {
    genome.fitness
}

/// Mutation regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreatmentConfig {
    pub p_deleterious: f64,
    pub p_beneficial: f64,
    pub sigma_deleterious: f64,
    pub sigma_beneficial: f64,
}

impl Default for TreatmentConfig {
    fn default() -> Self {
        TreatmentConfig::purifying_only()
    }
}

impl TreatmentConfig {
    /// Deleterious mutations only.
    pub fn purifying_only() -> Self {
        TreatmentConfig {
            p_deleterious: 0.33,
            p_beneficial: 0.0,
            sigma_deleterious: 0.1,
            sigma_beneficial: 1.0,
        }
    }

    /// Deleterious mutations plus rare strong beneficial ones.
    pub fn adaptation_enabled() -> Self {
        TreatmentConfig { p_beneficial: 0.003, ..TreatmentConfig::purifying_only() }
    }

    /// No mutation at all.
    pub fn neutral() -> Self {
        TreatmentConfig { p_deleterious: 0.0, p_beneficial: 0.0, ..TreatmentConfig::purifying_only() }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("treatment.{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("p_deleterious", self.p_deleterious)?;
        prob("p_beneficial", self.p_beneficial)?;
        if self.p_deleterious + self.p_beneficial > 1.0 {
            return Err(Error::Config(
                "treatment.p_deleterious + treatment.p_beneficial exceeds 1".into(),
            ));
        }
        for (name, sigma) in
            [("sigma_deleterious", self.sigma_deleterious), ("sigma_beneficial", self.sigma_beneficial)]
        {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("treatment.{name} must be positive, got {sigma}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeConfig {
    pub pop_size: usize,
    pub tournament_k: usize,
}

impl Default for PeConfig {
    fn default() -> Self {
        PeConfig { pop_size: 32, tournament_k: 5 }
    }
}

impl PeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size == 0 {
            return Err(Error::Config("pe.pop_size must be positive".into()));
        }
        if self.tournament_k == 0 || self.tournament_k > self.pop_size {
            return Err(Error::Config(format!(
                "pe.tournament_k must lie in [1, pop_size={}], got {}",
                self.pop_size, self.tournament_k
            )));
        }
        Ok(())
    }
}

/// One parent-to-child birth event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedigreeRecord {
    pub child_id: u64,
    pub parent_id: u64,
    pub birth_generation: u64,
    pub pe_x: u32,
    pub pe_y: u32,
}

/// Lineage ids are namespaced per PE so that every PE can mint them
/// independently: the PE index occupies the high 24 bits.
const LINEAGE_LOCAL_BITS: u32 = 40;

pub fn lineage_namespace(coordinate: (u32, u32)) -> u64 {
    let (x, y) = coordinate;
    ((u64::from(y) << 12) | u64::from(x)) << LINEAGE_LOCAL_BITS
}

/// Applies one round of Gaussian fitness mutation in place.
pub fn mutate<R: Rng + ?Sized>(genome: &mut Genome, treatment: &TreatmentConfig, rng: &mut R) {
    if treatment.p_deleterious <= 0.0 && treatment.p_beneficial <= 0.0 {
        return;
    }
    let u: f64 = rng.random();
    if u < treatment.p_deleterious {
        let z: f64 = rng.sample(StandardNormal);
        genome.fitness -= z.abs() * treatment.sigma_deleterious;
    } else if u < treatment.p_deleterious + treatment.p_beneficial {
        let z: f64 = rng.sample(StandardNormal);
        genome.fitness += z.abs() * treatment.sigma_beneficial;
    }
}

/// Draws `k` distinct indices from `0..n` uniformly (Floyd's algorithm).
pub(crate) fn sample_distinct<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> SmallVec<[usize; 8]> {
    debug_assert!(k <= n);
    let mut chosen: SmallVec<[usize; 8]> = SmallVec::with_capacity(k);
    for j in n - k..n {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen
}

/// Index of the fittest among `k` members sampled without replacement;
/// ties are broken uniformly at random.
pub fn tournament_select_index<R: Rng + ?Sized>(
    population: &[Genome],
    k: usize,
    rng: &mut R,
) -> Result<usize> {
    if population.is_empty() {
        return Err(Error::State("tournament on an empty population".into()));
    }
    if k == 0 || k > population.len() {
        return Err(Error::Argument(format!(
            "tournament size {k} outside [1, {}]",
            population.len()
        )));
    }
    let contestants = sample_distinct(rng, population.len(), k);
    let mut best = contestants[0];
    let mut best_fitness = evaluate(&population[best]);
    let mut ties = 1u32;
    for &idx in &contestants[1..] {
        let fitness = evaluate(&population[idx]);
        if fitness > best_fitness {
            best = idx;
            best_fitness = fitness;
            ties = 1;
        } else if fitness == best_fitness {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                best = idx;
            }
        }
    }
    Ok(best)
}

/// Copy of the tournament winner.
pub fn tournament_select<R: Rng + ?Sized>(population: &[Genome], k: usize, rng: &mut R) -> Result<Genome> {
    tournament_select_index(population, k, rng).map(|i| population[i].clone())
}

/// A single island: its population plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct PeState {
    pub coordinate: (u32, u32),
    pub population: Vec<Genome>,
    pub generation: u64,
    next_lineage: u64,
    scratch: Vec<Genome>,
    /// Birth log, populated only when pedigree tracking is enabled.
    pub pedigree: Option<Vec<PedigreeRecord>>,
}

impl PeState {
    /// Founding population: fitness 0, depth 0, blank annotations, distinct lineage ids.
    pub fn found(
        coordinate: (u32, u32),
        config: &PeConfig,
        surface: SurfaceConfig,
        track_pedigree: bool,
    ) -> Result<Self> {
        config.validate()?;
        let namespace = lineage_namespace(coordinate);
        let population = (0..config.pop_size as u64)
            .map(|i| Genome::founder(surface, namespace | i))
            .collect::<Result<Vec<_>>>()?;
        Ok(PeState {
            coordinate,
            population,
            generation: 0,
            next_lineage: namespace | config.pop_size as u64,
            scratch: Vec::with_capacity(config.pop_size),
            pedigree: track_pedigree.then(Vec::new),
        })
    }

    fn mint_lineage(&mut self) -> u64 {
        let id = self.next_lineage;
        self.next_lineage += 1;
        id
    }

    /// Replaces the population with one selected, mutated, and annotated
    /// child per slot, then bumps the generation counter.
    pub fn advance_generation<R: Rng + ?Sized>(
        &mut self,
        treatment: &TreatmentConfig,
        config: &PeConfig,
        rng: &mut R,
    ) -> Result<()> {
        if self.population.len() != config.pop_size {
            return Err(Error::State(format!(
                "population holds {} genomes, expected {}",
                self.population.len(),
                config.pop_size
            )));
        }
        let mut next = std::mem::take(&mut self.scratch);
        next.truncate(config.pop_size);
        for slot in 0..config.pop_size {
            let parent = tournament_select_index(&self.population, config.tournament_k, rng)?;
            let child_id = self.mint_lineage();
            if slot < next.len() {
                next[slot].clone_from(&self.population[parent]);
            } else {
                next.push(self.population[parent].clone());
            }
            let child = &mut next[slot];
            mutate(child, treatment, rng);
            child.annotation.deposit_masked(rng.random());
            child.lineage_id = child_id;
            if let Some(log) = self.pedigree.as_mut() {
                log.push(PedigreeRecord {
                    child_id,
                    parent_id: self.population[parent].lineage_id,
                    birth_generation: child.depth(),
                    pe_x: self.coordinate.0,
                    pe_y: self.coordinate.1,
                });
            }
        }
        self.scratch = std::mem::replace(&mut self.population, next);
        self.generation += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::SurfacePolicy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn surface() -> SurfaceConfig {
        SurfaceConfig::new(SurfacePolicy::Ring, 16, 8).unwrap()
    }

    fn genome(fitness: f64) -> Genome {
        Genome { fitness, ..Genome::founder(surface(), 0).unwrap() }
    }

    #[test]
    fn evaluate_reads_fitness() {
        assert_eq!(evaluate(&genome(0.0)), 0.0);
        assert_eq!(evaluate(&genome(-3.5)), -3.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = genome(2.25);
        mutate(&mut g, &TreatmentConfig::neutral(), &mut rng);
        assert_eq!(evaluate(&g), 2.25);
    }

    #[test]
    fn certain_deleterious_mutation_mean() {
        let sigma = 0.5;
        let treatment = TreatmentConfig { p_deleterious: 1.0, sigma_deleterious: sigma, ..TreatmentConfig::neutral() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut total = 0.0;
        for _ in 0..n {
            let mut g = genome(0.0);
            mutate(&mut g, &treatment, &mut rng);
            assert!(g.fitness < 0.0);
            total -= g.fitness;
        }
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        let mean = total / n as f64;
        assert!((mean - expected).abs() / expected < 0.01, "mean {mean} vs {expected}");
    }

    #[test]
    fn default_treatment_decrease_fraction() {
        let treatment = TreatmentConfig::adaptation_enabled();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let (mut down, mut up) = (0, 0);
        for _ in 0..n {
            let mut g = genome(0.0);
            mutate(&mut g, &treatment, &mut rng);
            if g.fitness < 0.0 {
                down += 1;
            } else if g.fitness > 0.0 {
                up += 1;
            }
        }
        let frac = down as f64 / n as f64;
        assert!((frac - 0.33).abs() <= 0.01, "{frac}");
        let frac_up = up as f64 / n as f64;
        assert!((frac_up - 0.003).abs() <= 0.001, "{frac_up}");
    }

    #[test]
    fn treatment_validation() {
        assert!(TreatmentConfig::purifying_only().validate().is_ok());
        assert!(TreatmentConfig { p_deleterious: 1.2, ..Default::default() }.validate().is_err());
        assert!(TreatmentConfig { p_deleterious: 0.9, p_beneficial: 0.2, ..Default::default() }
            .validate()
            .is_err());
        assert!(TreatmentConfig { sigma_beneficial: 0.0, ..Default::default() }.validate().is_err());
        assert!(PeConfig { pop_size: 4, tournament_k: 5 }.validate().is_err());
    }

    #[test]
    fn full_tournament_picks_unique_max() {
        let pop: Vec<Genome> = [0.1, -2.0, 3.0, 0.5].iter().map(|&f| genome(f)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(tournament_select(&pop, 4, &mut rng).unwrap().fitness, 3.0);
        }
    }

    #[test]
    fn tournament_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(tournament_select(&[], 1, &mut rng), Err(Error::State(_))));
        assert!(matches!(tournament_select(&[genome(0.0)], 2, &mut rng), Err(Error::Argument(_))));
    }

    fn selection_frequencies(pop: &[Genome], k: usize, trials: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = vec![0usize; pop.len()];
        for _ in 0..trials {
            counts[tournament_select_index(pop, k, &mut rng).unwrap()] += 1;
        }
        counts.iter().map(|&c| c as f64 / trials as f64).collect()
    }

    #[test]
    fn k1_is_uniform() {
        let pop: Vec<Genome> = (0..10).map(|i| genome(i as f64)).collect();
        for f in selection_frequencies(&pop, 1, 100_000) {
            assert!((f - 0.1).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn ties_broken_uniformly() {
        let pop: Vec<Genome> = (0..8).map(|_| genome(0.0)).collect();
        for f in selection_frequencies(&pop, 5, 100_000) {
            // 1/8 within 2% absolute
            assert!((f - 0.125).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn floyd_sampling_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut s = sample_distinct(&mut rng, 6, 6).to_vec();
            s.sort();
            assert_eq!(s, vec![0, 1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn singleton_generation_is_copy_plus_deposit() {
        let config = PeConfig { pop_size: 1, tournament_k: 1 };
        let mut pe = PeState::found((0, 0), &config, surface(), true).unwrap();
        pe.population[0].fitness = 1.5;
        let before = pe.population[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        pe.advance_generation(&TreatmentConfig::neutral(), &config, &mut rng).unwrap();
        let child = &pe.population[0];
        assert_eq!(child.fitness, 1.5);
        assert_eq!(child.depth(), before.depth() + 1);
        assert_eq!(child.annotation.extract_alleles().len(), 1);
        assert_eq!(pe.generation, 1);
        let log = pe.pedigree.as_ref().unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].parent_id, before.lineage_id);
        assert_eq!(log[0].child_id, child.lineage_id);
        assert_eq!(log[0].birth_generation, 1);
    }

    #[test]
    fn depths_stay_homogeneous_and_max_fitness_never_rises() {
        let config = PeConfig::default();
        let mut pe = PeState::found((1, 2), &config, surface(), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let treatment = TreatmentConfig::purifying_only();
        let mut best = 0.0f64;
        for gen in 1..=50 {
            pe.advance_generation(&treatment, &config, &mut rng).unwrap();
            assert_eq!(pe.population.len(), 32);
            assert!(pe.population.iter().all(|g| g.depth() == gen));
            let max = pe.population.iter().map(evaluate).fold(f64::NEG_INFINITY, f64::max);
            assert!(max <= best);
            best = max;
        }
    }

    #[test]
    fn pure_selection_fixes_best_founder() {
        let config = PeConfig::default();
        let mut fixed = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pe = PeState::found((0, 0), &config, surface(), true).unwrap();
            for (i, g) in pe.population.iter_mut().enumerate() {
                g.fitness = -(i as f64) * 1e-3;
            }
            for _ in 0..50 {
                pe.advance_generation(&TreatmentConfig::neutral(), &config, &mut rng).unwrap();
            }
            if pe.population.iter().all(|g| g.fitness == 0.0) {
                fixed += 1;
            }
        }
        assert!(fixed >= 99, "fixed in {fixed}/100");
    }

    #[test]
    fn lineage_ids_unique_per_pe() {
        let config = PeConfig { pop_size: 4, tournament_k: 2 };
        let mut a = PeState::found((0, 0), &config, surface(), false).unwrap();
        let b = PeState::found((1, 0), &config, surface(), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        a.advance_generation(&TreatmentConfig::neutral(), &config, &mut rng).unwrap();
        let mut ids: Vec<u64> = a.population.iter().chain(&b.population).map(|g| g.lineage_id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 8);
    }
}
