//! Best-response dynamics of the assignment potential game.
//!
//! Workers take turns in ascending id. On its turn a worker prices every
//! reachable task (other than the one it holds) with a freshly probed budget
//! slot and moves to the best one if the move has positive utility, publishing
//! that slot. Probes of rejected moves stay private and are reused later.
//! Every accepted move raises the potential by exactly its utility.

use thiserror::Error;

use crate::baselines::max_weight_matching;
use crate::compare::EffectivePair;
use crate::model::{Instance, MatchState, TaskIdx, ValueFunctions, WorkerIdx};
use crate::privacy::{BudgetBook, BudgetSource, PairKey};
use crate::puce::PrivacyMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgtError {
    #[error("task {task} is not reachable by worker {worker}")]
    OutOfReach { task: TaskIdx, worker: WorkerIdx },
    #[error("worker {worker} already holds task {task}")]
    AlreadyHeld { task: TaskIdx, worker: WorkerIdx },
    #[error("budget vector for pair {0:?} is exhausted")]
    Exhausted(PairKey),
    #[error("{what} = {value} is not an integer after scaling by {scale}")]
    NotIntegral {
        what: &'static str,
        value: f64,
        scale: u64,
    },
    #[error("no task has a positive best-case utility; the bound is undefined")]
    UndefinedBound,
}

/// A priced move of one worker to one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub worker: WorkerIdx,
    pub task: TaskIdx,
    pub slot: usize,
    /// Effective pair of `(task, worker)` if the move is published.
    pub eff: EffectivePair,
    /// Budget of the slot the move would publish.
    pub eps: f64,
    pub ut: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseRecord {
    pub round: usize,
    pub response: Response,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub round: usize,
    pub worker: WorkerIdx,
    pub from: Option<TaskIdx>,
    pub to: TaskIdx,
    pub defeated: Option<WorkerIdx>,
    pub ut: f64,
    /// Potential around the move; recorded only by a [`Pgt::traced`] solver.
    pub phi_before: Option<f64>,
    pub phi_after: Option<f64>,
}

/// Allocation plus all budget state; `round` counts worker turns.
#[derive(Debug, Clone)]
pub struct GameState {
    pub allocation: MatchState,
    pub book: BudgetBook,
    pub round: usize,
}

impl GameState {
    pub fn new(instance: &Instance, book: BudgetBook) -> Self {
        Self {
            allocation: MatchState::for_instance(instance),
            book,
            round: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgtReport {
    pub matching: MatchState,
    pub deviations: Vec<Deviation>,
    pub responses: Vec<ResponseRecord>,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Pgt<'a> {
    pub instance: &'a Instance,
    pub vf: ValueFunctions,
    pub privacy: PrivacyMode,
    pub trace_potential: bool,
}

impl<'a> Pgt<'a> {
    pub fn new(instance: &'a Instance, vf: ValueFunctions, privacy: PrivacyMode) -> Self {
        Self {
            instance,
            vf,
            privacy,
            trace_potential: false,
        }
    }

    /// Same solver, recomputing the potential before and after every move.
    pub fn traced(self) -> Self {
        Self {
            trace_potential: true,
            ..self
        }
    }

    fn privacy_cost(&self, budget: f64) -> f64 {
        match self.privacy {
            PrivacyMode::Private => self.vf.privacy_cost(budget),
            PrivacyMode::NonPrivate => 0.0,
        }
    }

    /// Current effective distance of a pair that has published.
    pub fn effective_distance(&self, book: &BudgetBook, i: TaskIdx, j: WorkerIdx) -> f64 {
        match self.privacy {
            PrivacyMode::Private => {
                book.effective((i, j))
                    .expect("matched pairs have published")
                    .d_eff
            }
            PrivacyMode::NonPrivate => self.instance.distance(i, j),
        }
    }

    /// `v - f_d(d_eff)` of a matched pair.
    fn matched_term(&self, book: &BudgetBook, i: TaskIdx, j: WorkerIdx) -> f64 {
        self.instance.task(i).value - self.vf.distance_cost(self.effective_distance(book, i, j))
    }

    /// Utility change for `j` of moving to `i2`, priced with a probed but
    /// unpublished slot.
    pub fn response_utility(
        &self,
        state: &mut GameState,
        j: WorkerIdx,
        i2: TaskIdx,
    ) -> Result<Response, PgtError> {
        if !self.instance.in_reach(i2, j) {
            return Err(PgtError::OutOfReach {
                task: i2,
                worker: j,
            });
        }
        let held = state.allocation.task_of(j);
        if held == Some(i2) {
            return Err(PgtError::AlreadyHeld {
                task: i2,
                worker: j,
            });
        }
        let d = self.instance.distance(i2, j);
        let (probe, eff) = state
            .book
            .prospective_effective((i2, j), d)
            .ok_or(PgtError::Exhausted((i2, j)))?;
        let eff = match self.privacy {
            PrivacyMode::Private => eff,
            PrivacyMode::NonPrivate => EffectivePair {
                d_eff: d,
                eps_eff: probe.eps,
            },
        };
        let v2 = self.instance.task(i2).value;
        let mut ut = v2 - self.vf.distance_cost(eff.d_eff) - self.privacy_cost(probe.eps);
        if let Some(f) = state.allocation.worker_of(i2) {
            ut -= self.matched_term(&state.book, i2, f);
        }
        if let Some(i1) = held {
            ut -= self.matched_term(&state.book, i1, j);
        }
        Ok(Response {
            worker: j,
            task: i2,
            slot: probe.slot,
            eff,
            eps: probe.eps,
            ut,
        })
    }

    /// Every move `j` can currently price, in task order.
    pub fn responses(&self, state: &mut GameState, j: WorkerIdx) -> Vec<Response> {
        let held = state.allocation.task_of(j);
        self.instance
            .reach(j)
            .iter()
            .filter(|&&i| Some(i) != held)
            .filter_map(|&i| self.response_utility(state, j, i).ok())
            .collect()
    }

    /// The highest positive move of `j`; ties go to the lower task.
    pub fn best_response(&self, state: &mut GameState, j: WorkerIdx) -> Option<Response> {
        best_of(&self.responses(state, j))
    }

    /// `sum over matched (v - f_d(d_eff)) - f_p(all published budget)`.
    pub fn potential(&self, state: &GameState) -> f64 {
        let matched: f64 = state
            .allocation
            .pairs()
            .map(|(i, j)| self.matched_term(&state.book, i, j))
            .sum();
        matched - self.privacy_cost(state.book.ledger().total_spent())
    }

    /// Publishes the move's slot and updates the allocation.
    pub fn apply(&self, state: &mut GameState, r: &Response) -> Deviation {
        let phi_before = self.trace_potential.then(|| self.potential(state));
        let from = state.allocation.task_of(r.worker);
        let defeated = state.allocation.worker_of(r.task);
        let d = self.instance.distance(r.task, r.worker);
        let probe = state
            .book
            .commit_next((r.task, r.worker), d)
            .expect("priced slot is still the next one");
        debug_assert_eq!(probe.slot, r.slot);
        state.allocation.assign(r.task, r.worker);
        Deviation {
            round: state.round,
            worker: r.worker,
            from,
            to: r.task,
            defeated,
            ut: r.ut,
            phi_before,
            phi_after: self.trace_potential.then(|| self.potential(state)),
        }
    }

    /// Round-robin best responses until a full sweep changes nothing.
    pub fn run(&self, state: &mut GameState) -> PgtReport {
        let mut deviations = Vec::new();
        let mut responses = Vec::new();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut moved = false;
            for j in 0..self.instance.num_workers() {
                state.round += 1;
                let priced = self.responses(state, j);
                let best = best_of(&priced);
                for r in &priced {
                    responses.push(ResponseRecord {
                        round: state.round,
                        response: *r,
                        accepted: best.as_ref() == Some(r),
                    });
                }
                if let Some(r) = best {
                    deviations.push(self.apply(state, &r));
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        PgtReport {
            matching: state.allocation.clone(),
            deviations,
            responses,
            sweeps,
        }
    }

    /// True when no worker has a positive move among already-probed slots.
    pub fn is_equilibrium(&self, state: &GameState) -> bool {
        let mut scratch = state.clone();
        (0..self.instance.num_workers()).all(|j| {
            let held = scratch.allocation.task_of(j);
            self.instance.reach(j).iter().all(|&i| {
                if Some(i) == held || !scratch.book.next_is_probed((i, j)) {
                    return true;
                }
                self.response_utility(&mut scratch, j, i)
                    .map_or(true, |r| r.ut <= 0.0)
            })
        })
    }
}

fn best_of(priced: &[Response]) -> Option<Response> {
    priced
        .iter()
        .filter(|r| r.ut > 0.0)
        .fold(None, |best: Option<&Response>, r| match best {
            Some(b) if b.ut >= r.ut => Some(b),
            _ => Some(r),
        })
        .copied()
}

/// Runs the game from an empty allocation.
pub fn run_pgt(
    instance: &Instance,
    vf: ValueFunctions,
    book: BudgetBook,
    privacy: PrivacyMode,
) -> (PgtReport, GameState) {
    let mut state = GameState::new(instance, book);
    let report = Pgt::new(instance, vf, privacy).run(&mut state);
    (report, state)
}

fn scaled_integer(what: &'static str, value: f64, scale: u64) -> Result<f64, PgtError> {
    let x = value * scale as f64;
    if (x - x.round()).abs() > 1e-9 {
        return Err(PgtError::NotIntegral { what, value, scale });
    }
    Ok(x.round())
}

/// `scale * Phi*`, where `Phi*` is the best matched value any published
/// effective distances could give (every slot probed, smallest sample per pair,
/// no privacy cost). Every value, sample and budget must be a multiple of `1/scale`.
pub fn convergence_bound(
    instance: &Instance,
    vf: &ValueFunctions,
    book: &mut BudgetBook,
    scale: u64,
) -> Result<u64, PgtError> {
    let (m, n) = (instance.num_tasks(), instance.num_workers());
    let mut weights = vec![vec![None; n]; m];
    for j in 0..n {
        for &i in instance.reach(j) {
            let v = instance.task(i).value;
            scaled_integer("task value", v, scale)?;
            let mut best = f64::INFINITY;
            for p in book.probe_all((i, j), instance.distance(i, j)) {
                scaled_integer("distance cost", vf.distance_cost(p.d_hat), scale)?;
                scaled_integer("privacy cost", vf.privacy_cost(p.eps), scale)?;
                best = best.min(p.d_hat);
            }
            if best.is_finite() {
                weights[i][j] = Some(v - vf.distance_cost(best));
            }
        }
    }
    let (_, total) = max_weight_matching(&weights);
    Ok(scaled_integer("optimal potential", total, scale)? as u64)
}

/// Lower bound on the expected price of anarchy, and the upper bound 1 on the
/// expected price of stability.
pub fn epoa_bounds(
    instance: &Instance,
    vf: &ValueFunctions,
    budgets: &dyn BudgetSource,
) -> Result<(f64, f64), PgtError> {
    let n = instance.num_workers();
    // total budget of every vector a worker holds
    let pool: Vec<f64> = (0..n)
        .map(|j| {
            instance
                .reach(j)
                .iter()
                .map(|&k| budgets.budgets((k, j)).iter().sum::<f64>())
                .sum()
        })
        .collect();
    let (mut low, mut high) = (0.0, 0.0);
    for i in 0..instance.num_tasks() {
        let v = instance.task(i).value;
        let mut u_min: Option<f64> = None;
        let mut u_max: Option<f64> = None;
        for &j in instance.covering(i) {
            let base = v - vf.distance_cost(instance.distance(i, j));
            let u_l = base - vf.privacy_cost(pool[j]);
            let min_eps = budgets
                .budgets((i, j))
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let u_h = base - vf.privacy_cost(if min_eps.is_finite() { min_eps } else { 0.0 });
            if u_l > 0.0 {
                u_min = Some(u_min.map_or(u_l, |x| x.min(u_l)));
            }
            if u_h > 0.0 {
                u_max = Some(u_max.map_or(u_h, |x| x.max(u_h)));
            }
        }
        low += u_min.unwrap_or(0.0);
        high += u_max.unwrap_or(0.0);
    }
    if high == 0.0 {
        return Err(PgtError::UndefinedBound);
    }
    Ok((low / high, 1.0))
}
