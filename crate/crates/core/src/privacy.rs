//! Laplace obfuscation, per-pair budget vectors and LDP accounting.
//!
//! Each reachable task-worker pair owns a [`BudgetVector`] of `Z` budgets that are
//! spent in index order. A slot is *probed* when the worker draws (and memoizes)
//! the obfuscated distance for it, and *committed* when the pair is published to
//! the server. Only committed slots enter the pair's [`ObservationSet`] and the
//! worker's [`LdpLedger`] entry.
//!
//! All randomness is drawn from sub-streams keyed by `(seed, task, worker, slot)`
//! so the order in which a solver visits pairs never changes a sampled value.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compare::{self, EffectivePair};
use crate::model::{Instance, TaskIdx, WorkerIdx};

pub type PairKey = (TaskIdx, WorkerIdx);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrivacyError {
    #[error("laplace scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("privacy budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("budget slot {slot} out of range for a vector of size {size}")]
    SlotOutOfRange { slot: usize, size: usize },
    #[error("budget slot {0} has not been sampled")]
    NotSampled(usize),
    #[error("budget slot {0} is already committed")]
    AlreadyCommitted(usize),
    #[error("budget slot {slot} committed out of order; next slot is {expected}")]
    OutOfOrder { slot: usize, expected: usize },
    #[error("budget vector for pair {0:?} is exhausted")]
    Exhausted(PairKey),
}

/// Inverse-CDF transform of `u` in (-0.5, 0.5) into a zero-centred Laplace variate.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Result<f64, PrivacyError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(PrivacyError::InvalidScale(scale));
    }
    loop {
        let u = rng.random::<f64>() - 0.5;
        // u = -0.5 maps to an infinite variate
        if u > -0.5 {
            return Ok(laplace_from_uniform(u, scale));
        }
    }
}

/// `d + Lap(0, 1/eps)`; the result is deliberately not clamped at zero.
pub fn obfuscate<R: Rng + ?Sized>(d: f64, eps: f64, rng: &mut R) -> Result<f64, PrivacyError> {
    if !(eps > 0.0) {
        return Err(PrivacyError::InvalidBudget(eps));
    }
    if eps.is_infinite() {
        return Ok(d);
    }
    Ok(d + sample_laplace(rng, 1.0 / eps)?)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for the stream identified by `seed` and `path`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mixed = path
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)));
    ChaCha8Rng::seed_from_u64(mixed)
}

const NOISE_STREAM: u64 = 0x006e_6f69_7365;
const BUDGET_STREAM: u64 = 0x6275_6467_6574;

/// Produces the obfuscated distance a worker publishes for one budget slot.
pub trait NoiseSource: Send + Sync {
    fn obfuscated(&self, pair: PairKey, slot: usize, distance: f64, eps: f64) -> f64;

    /// False when published distances equal true distances.
    fn is_noisy(&self) -> bool {
        true
    }
}

/// Laplace noise from the `(seed, task, worker, slot)` sub-stream.
#[derive(Debug, Clone, Copy)]
pub struct SeededLaplace {
    pub seed: u64,
}

impl NoiseSource for SeededLaplace {
    fn obfuscated(&self, (i, j): PairKey, slot: usize, distance: f64, eps: f64) -> f64 {
        let mut rng = substream(self.seed, &[NOISE_STREAM, i as u64, j as u64, slot as u64]);
        obfuscate(distance, eps, &mut rng).expect("budgets are validated positive")
    }
}

/// Publishes true distances; used by the non-private variants.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactDistances;

impl NoiseSource for ExactDistances {
    fn obfuscated(&self, _: PairKey, _: usize, distance: f64, _: f64) -> f64 {
        distance
    }

    fn is_noisy(&self) -> bool {
        false
    }
}

/// Replays recorded obfuscated distances; unlisted slots fall back to the true distance.
#[derive(Debug, Clone, Default)]
pub struct TableNoise {
    values: HashMap<(TaskIdx, WorkerIdx, usize), f64>,
}

impl TableNoise {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: PairKey, samples: &[f64]) {
        for (slot, &v) in samples.iter().enumerate() {
            self.values.insert((pair.0, pair.1, slot), v);
        }
    }
}

impl NoiseSource for TableNoise {
    fn obfuscated(&self, (i, j): PairKey, slot: usize, distance: f64, _: f64) -> f64 {
        self.values.get(&(i, j, slot)).copied().unwrap_or(distance)
    }
}

/// Supplies the budget vector of a pair.
pub trait BudgetSource: Send + Sync {
    fn budgets(&self, pair: PairKey) -> Vec<f64>;
}

/// `z` i.i.d. uniform draws from `[lo, hi]`, sorted ascending.
#[derive(Debug, Clone, Copy)]
pub struct UniformBudgets {
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    pub z: usize,
}

impl BudgetSource for UniformBudgets {
    fn budgets(&self, (i, j): PairKey) -> Vec<f64> {
        let mut rng = substream(self.seed, &[BUDGET_STREAM, i as u64, j as u64]);
        let mut v: Vec<f64> = (0..self.z)
            .map(|_| {
                if self.hi > self.lo {
                    rng.random_range(self.lo..=self.hi)
                } else {
                    self.lo
                }
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Fixed budget vectors per pair; unlisted pairs get `default`.
#[derive(Debug, Clone, Default)]
pub struct TableBudgets {
    table: HashMap<PairKey, Vec<f64>>,
    default: Vec<f64>,
}

impl TableBudgets {
    pub fn new(default: Vec<f64>) -> Self {
        Self {
            table: HashMap::new(),
            default,
        }
    }

    pub fn insert(&mut self, pair: PairKey, budgets: Vec<f64>) {
        self.table.insert(pair, budgets);
    }
}

impl BudgetSource for TableBudgets {
    fn budgets(&self, pair: PairKey) -> Vec<f64> {
        self.table.get(&pair).unwrap_or(&self.default).clone()
    }
}

/// Budgets `eps^{(1..Z)}` of one pair with their usage prefix and memoized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetVector {
    budgets: Vec<f64>,
    used: usize,
    samples: Vec<Option<f64>>,
}

impl BudgetVector {
    pub fn new(budgets: Vec<f64>) -> Result<Self, PrivacyError> {
        if let Some(&bad) = budgets.iter().find(|b| !(**b > 0.0)) {
            return Err(PrivacyError::InvalidBudget(bad));
        }
        let samples = vec![None; budgets.len()];
        Ok(Self {
            budgets,
            used: 0,
            samples,
        })
    }

    pub fn size(&self) -> usize {
        self.budgets.len()
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn used_count(&self) -> usize {
        self.used
    }

    /// The state vector `b`: `true` for each consumed slot.
    pub fn state(&self) -> Vec<bool> {
        (0..self.budgets.len()).map(|u| u < self.used).collect()
    }

    pub fn next_slot(&self) -> Option<usize> {
        (self.used < self.budgets.len()).then_some(self.used)
    }

    pub fn spent(&self) -> f64 {
        self.budgets[..self.used].iter().sum()
    }

    pub fn sample(&self, slot: usize) -> Option<f64> {
        self.samples.get(slot).copied().flatten()
    }

    /// Returns the memoized `(d_hat, eps)` of `slot`, drawing it with `draw(eps)` on
    /// first access. Does not consume the slot.
    pub fn probe(
        &mut self,
        slot: usize,
        draw: impl FnOnce(f64) -> f64,
    ) -> Result<(f64, f64), PrivacyError> {
        let size = self.budgets.len();
        let eps = *self
            .budgets
            .get(slot)
            .ok_or(PrivacyError::SlotOutOfRange { slot, size })?;
        let d_hat = *self.samples[slot].get_or_insert_with(|| draw(eps));
        Ok((d_hat, eps))
    }

    /// Marks `slot` consumed; it must be sampled and be the lowest unused slot.
    pub fn commit(&mut self, slot: usize) -> Result<(f64, f64), PrivacyError> {
        let size = self.budgets.len();
        if slot >= size {
            return Err(PrivacyError::SlotOutOfRange { slot, size });
        }
        if slot < self.used {
            return Err(PrivacyError::AlreadyCommitted(slot));
        }
        if slot != self.used {
            return Err(PrivacyError::OutOfOrder {
                slot,
                expected: self.used,
            });
        }
        let d_hat = self.samples[slot].ok_or(PrivacyError::NotSampled(slot))?;
        self.used += 1;
        Ok((d_hat, self.budgets[slot]))
    }
}

/// Published `(d_hat, eps)` pairs of one task-worker pair, in publication order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pairs: Vec<(f64, f64)>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Self {
        Self { pairs }
    }

    pub fn push(&mut self, d_hat: f64, eps: f64) {
        self.pairs.push((d_hat, eps));
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn total_budget(&self) -> f64 {
        self.pairs.iter().map(|p| p.1).sum()
    }
}

/// Consumed budget per worker and task, plus the worker radii used by the LDP level.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpLedger {
    radii: Vec<f64>,
    spent: Vec<BTreeMap<TaskIdx, f64>>,
}

impl LdpLedger {
    pub fn new(radii: Vec<f64>) -> Self {
        let spent = vec![BTreeMap::new(); radii.len()];
        Self { radii, spent }
    }

    pub fn for_instance(instance: &Instance) -> Self {
        Self::new(instance.workers().iter().map(|w| w.radius).collect())
    }

    pub fn record(&mut self, i: TaskIdx, j: WorkerIdx, eps: f64) {
        *self.spent[j].entry(i).or_insert(0.0) += eps;
    }

    pub fn spent(&self, i: TaskIdx, j: WorkerIdx) -> f64 {
        self.spent[j].get(&i).copied().unwrap_or(0.0)
    }

    pub fn worker_spent(&self, j: WorkerIdx) -> f64 {
        self.spent[j].values().sum()
    }

    pub fn total_spent(&self) -> f64 {
        (0..self.spent.len()).map(|j| self.worker_spent(j)).sum()
    }

    pub fn per_task(&self, j: WorkerIdx) -> &BTreeMap<TaskIdx, f64> {
        &self.spent[j]
    }

    pub fn radius(&self, j: WorkerIdx) -> f64 {
        self.radii[j]
    }

    pub fn num_workers(&self) -> usize {
        self.radii.len()
    }
}

/// `r_j * sum_i b_{i,j} . eps_{i,j}`.
pub fn ldp_level(ledger: &LdpLedger, worker: WorkerIdx) -> f64 {
    ledger.radius(worker) * ledger.worker_spent(worker)
}

/// A probed budget slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub slot: usize,
    pub d_hat: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct PairRecord {
    pub vector: BudgetVector,
    pub observations: ObservationSet,
}

/// Budget vectors, observations and the LDP ledger of every pair in a run.
#[derive(Clone)]
pub struct BudgetBook {
    pairs: HashMap<PairKey, PairRecord>,
    ledger: LdpLedger,
    budgets: Arc<dyn BudgetSource>,
    noise: Arc<dyn NoiseSource>,
}

impl std::fmt::Debug for BudgetBook {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BudgetBook")
            .field("pairs", &self.pairs.len())
            .field("ledger", &self.ledger)
            .finish_non_exhaustive()
    }
}

impl BudgetBook {
    pub fn new(
        instance: &Instance,
        budgets: Arc<dyn BudgetSource>,
        noise: Arc<dyn NoiseSource>,
    ) -> Self {
        Self {
            pairs: HashMap::new(),
            ledger: LdpLedger::for_instance(instance),
            budgets,
            noise,
        }
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.is_noisy()
    }

    fn record_mut(&mut self, pair: PairKey) -> &mut PairRecord {
        let budgets = &self.budgets;
        self.pairs.entry(pair).or_insert_with(|| PairRecord {
            vector: BudgetVector::new(budgets.budgets(pair))
                .expect("budget source yields positive budgets"),
            observations: ObservationSet::new(),
        })
    }

    pub fn record(&self, pair: PairKey) -> Option<&PairRecord> {
        self.pairs.get(&pair)
    }

    pub fn ledger(&self) -> &LdpLedger {
        &self.ledger
    }

    pub fn has_budget(&mut self, pair: PairKey) -> bool {
        self.record_mut(pair).vector.next_slot().is_some()
    }

    pub fn spent(&self, pair: PairKey) -> f64 {
        self.pairs.get(&pair).map_or(0.0, |r| r.vector.spent())
    }

    /// Probes the lowest unused slot of `pair`; `None` once the vector is exhausted.
    pub fn probe_next(&mut self, pair: PairKey, distance: f64) -> Option<Probe> {
        let noise = Arc::clone(&self.noise);
        let rec = self.record_mut(pair);
        let slot = rec.vector.next_slot()?;
        let (d_hat, eps) = rec
            .vector
            .probe(slot, |eps| noise.obfuscated(pair, slot, distance, eps))
            .expect("next slot is in range");
        Some(Probe { slot, d_hat, eps })
    }

    /// Whether the next unused slot of `pair` already holds a sample.
    pub fn next_is_probed(&self, pair: PairKey) -> bool {
        self.pairs.get(&pair).is_some_and(|r| {
            r.vector
                .next_slot()
                .is_some_and(|u| r.vector.sample(u).is_some())
        })
    }

    /// Probes every slot of `pair` without consuming any.
    pub fn probe_all(&mut self, pair: PairKey, distance: f64) -> Vec<Probe> {
        let noise = Arc::clone(&self.noise);
        let rec = self.record_mut(pair);
        (0..rec.vector.size())
            .map(|slot| {
                let (d_hat, eps) = rec
                    .vector
                    .probe(slot, |eps| noise.obfuscated(pair, slot, distance, eps))
                    .expect("slot is in range");
                Probe { slot, d_hat, eps }
            })
            .collect()
    }

    /// Publishes the lowest unused slot of `pair`.
    pub fn commit_next(&mut self, pair: PairKey, distance: f64) -> Result<Probe, PrivacyError> {
        let probe = self
            .probe_next(pair, distance)
            .ok_or(PrivacyError::Exhausted(pair))?;
        let rec = self.pairs.get_mut(&pair).expect("probed above");
        rec.vector.commit(probe.slot)?;
        rec.observations.push(probe.d_hat, probe.eps);
        self.ledger.record(pair.0, pair.1, probe.eps);
        Ok(probe)
    }

    /// Effective pair of everything `pair` has published so far.
    pub fn effective(&self, pair: PairKey) -> Option<EffectivePair> {
        let rec = self.pairs.get(&pair)?;
        compare::effective_pair(&rec.observations).ok()
    }

    /// Effective pair the server would compute if the next slot were published.
    pub fn prospective_effective(
        &mut self,
        pair: PairKey,
        distance: f64,
    ) -> Option<(Probe, EffectivePair)> {
        let probe = self.probe_next(pair, distance)?;
        let rec = &self.pairs[&pair];
        let mut obs = rec.observations.clone();
        obs.push(probe.d_hat, probe.eps);
        let eff = compare::effective_pair(&obs).expect("non-empty");
        Some((probe, eff))
    }

    pub fn observations(&self, pair: PairKey) -> Option<&ObservationSet> {
        self.pairs.get(&pair).map(|r| &r.observations)
    }

    /// All pairs that have published at least once.
    pub fn published_pairs(&self) -> impl Iterator<Item = (PairKey, &ObservationSet)> {
        self.pairs
            .iter()
            .filter(|(_, r)| !r.observations.is_empty())
            .map(|(k, r)| (*k, &r.observations))
    }

    pub fn total_commits(&self) -> usize {
        self.pairs.values().map(|r| r.vector.used_count()).sum()
    }
}
