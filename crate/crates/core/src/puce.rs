//! Conflict-elimination solver driven by worker proposals.
//!
//! Each round, every worker without a task proposes to the reachable tasks it
//! expects to win, publishing one more budget slot per proposal. The server then
//! ranks each contested task's proposals together with its incumbent and removes
//! cross-task conflicts with [`cea`](crate::cea). The run stops at the first round
//! without proposals.

use crate::cea::{build_rank_matrix, resolve_conflicts};
use crate::compare::{prob_better, Bid, EffectivePair};
use crate::model::{Instance, MatchState, TaskIdx, ValueFunctions, WorkerIdx};
use crate::privacy::BudgetBook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Maximize `v - f_d(d) - f_p(spend)`.
    Utility,
    /// Minimize travel distance; task values are never read.
    Distance,
}

/// The test a challenger runs with its own exact distance before proposing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChallengerTest {
    /// Exact own distance against the incumbent's noisy one.
    Ppcf,
    /// Own new effective distance against the incumbent's; no exact-distance test.
    Pcf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrivacyMode {
    Private,
    /// True distances are compared exactly and budgets cost nothing.
    NonPrivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SolverMode {
    pub objective: Objective,
    pub challenger: ChallengerTest,
    pub privacy: PrivacyMode,
}

impl SolverMode {
    pub const PUCE: Self = Self::new(
        Objective::Utility,
        ChallengerTest::Ppcf,
        PrivacyMode::Private,
    );
    pub const PDCE: Self = Self::new(
        Objective::Distance,
        ChallengerTest::Ppcf,
        PrivacyMode::Private,
    );
    pub const PUCE_NPPCF: Self = Self::new(
        Objective::Utility,
        ChallengerTest::Pcf,
        PrivacyMode::Private,
    );
    pub const PDCE_NPPCF: Self = Self::new(
        Objective::Distance,
        ChallengerTest::Pcf,
        PrivacyMode::Private,
    );
    pub const UCE: Self = Self::new(
        Objective::Utility,
        ChallengerTest::Ppcf,
        PrivacyMode::NonPrivate,
    );
    pub const DCE: Self = Self::new(
        Objective::Distance,
        ChallengerTest::Ppcf,
        PrivacyMode::NonPrivate,
    );

    pub const fn new(
        objective: Objective,
        challenger: ChallengerTest,
        privacy: PrivacyMode,
    ) -> Self {
        Self {
            objective,
            challenger,
            privacy,
        }
    }

    pub fn is_private(&self) -> bool {
        self.privacy == PrivacyMode::Private
    }
}

/// Why a worker did or did not propose to a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Exhausted,
    NotProfitable,
    /// Failed the challenger test (exact distance, or its PCF replacement).
    LostChallengerTest,
    /// Failed the effective-distance test.
    LostEffectiveTest,
    Proposed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub task: TaskIdx,
    pub worker: WorkerIdx,
    pub decision: Decision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub worker: WorkerIdx,
    /// Effective pair after publishing this proposal.
    pub eff: EffectivePair,
    /// Prospective true utility, in utility mode.
    pub utility: Option<f64>,
}

/// Proposals per task for one round, plus the decision log that produced them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateList {
    pub rows: Vec<Vec<Proposal>>,
    pub decisions: Vec<DecisionRecord>,
}

impl CandidateList {
    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Puce<'a> {
    pub instance: &'a Instance,
    pub vf: ValueFunctions,
    pub mode: SolverMode,
}

#[derive(Debug, Clone)]
pub struct PuceReport {
    pub matching: MatchState,
    /// Candidate lists in round order; the last one is empty.
    pub rounds: Vec<CandidateList>,
    pub proposals: usize,
}

impl<'a> Puce<'a> {
    pub fn new(instance: &'a Instance, vf: ValueFunctions, mode: SolverMode) -> Self {
        Self { instance, vf, mode }
    }

    fn privacy_cost(&self, spend: f64) -> f64 {
        match self.mode.privacy {
            PrivacyMode::Private => self.vf.privacy_cost(spend),
            PrivacyMode::NonPrivate => 0.0,
        }
    }

    /// `f_d^{-1}(V)` with `V = v - f_p(spend)`; zero in distance mode.
    fn offset(&self, i: TaskIdx, spend: f64) -> f64 {
        match self.mode.objective {
            Objective::Utility => self
                .vf
                .distance_for_cost(self.instance.task(i).value - self.privacy_cost(spend)),
            Objective::Distance => 0.0,
        }
    }

    /// Comparison entry for a pair that has published at least once.
    fn published_bid(&self, book: &BudgetBook, i: TaskIdx, j: WorkerIdx) -> Bid {
        let offset = self.offset(i, book.spent((i, j)));
        match self.mode.privacy {
            PrivacyMode::Private => {
                let eff = book.effective((i, j)).expect("pair has published");
                Bid::noisy(j, eff, offset)
            }
            PrivacyMode::NonPrivate => Bid::exact(j, self.instance.distance(i, j), offset),
        }
    }

    /// One pass of worker proposals from `not_winning`, committing a budget slot
    /// per proposal.
    pub fn worker_proposal(
        &self,
        book: &mut BudgetBook,
        allocation: &MatchState,
        not_winning: &[WorkerIdx],
    ) -> CandidateList {
        let inst = self.instance;
        let mut cl = CandidateList {
            rows: vec![Vec::new(); inst.num_tasks()],
            decisions: Vec::new(),
        };
        for &j in not_winning {
            for &i in inst.reach(j) {
                let decision = self.consider(book, allocation, i, j, &mut cl);
                cl.decisions.push(DecisionRecord {
                    task: i,
                    worker: j,
                    decision,
                });
            }
        }
        cl
    }

    fn consider(
        &self,
        book: &mut BudgetBook,
        allocation: &MatchState,
        i: TaskIdx,
        j: WorkerIdx,
        cl: &mut CandidateList,
    ) -> Decision {
        let d = self.instance.distance(i, j);
        let Some((probe, eff_new)) = book.prospective_effective((i, j), d) else {
            return Decision::Exhausted;
        };
        let spend = book.spent((i, j)) + probe.eps;
        let utility = match self.mode.objective {
            Objective::Utility => {
                let u = self.instance.task(i).value
                    - self.vf.distance_cost(d)
                    - self.privacy_cost(spend);
                if u <= 0.0 {
                    return Decision::NotProfitable;
                }
                Some(u)
            }
            Objective::Distance => None,
        };

        if let Some(w) = allocation.worker_of(i) {
            let incumbent = self.published_bid(book, i, w);
            let offset = self.offset(i, spend);
            let (own_exact, own_new) = match self.mode.privacy {
                PrivacyMode::Private => (Bid::exact(j, d, offset), Bid::noisy(j, eff_new, offset)),
                PrivacyMode::NonPrivate => (Bid::exact(j, d, offset), Bid::exact(j, d, offset)),
            };
            let challenger = match self.mode.challenger {
                ChallengerTest::Ppcf => own_exact,
                ChallengerTest::Pcf => own_new,
            };
            if prob_better(&challenger, &incumbent) <= 0.5 {
                return Decision::LostChallengerTest;
            }
            if prob_better(&own_new, &incumbent) <= 0.5 {
                return Decision::LostEffectiveTest;
            }
        }

        book.commit_next((i, j), d).expect("slot was just probed");
        let eff = match self.mode.privacy {
            PrivacyMode::Private => eff_new,
            PrivacyMode::NonPrivate => EffectivePair {
                d_eff: d,
                eps_eff: probe.eps,
            },
        };
        cl.rows[i].push(Proposal {
            worker: j,
            eff,
            utility,
        });
        Decision::Proposed
    }

    /// Competing-table row for task `i`: its proposals, the incumbent and, in
    /// utility mode, a zero-utility reserve entry.
    pub fn competing_row(
        &self,
        book: &BudgetBook,
        i: TaskIdx,
        proposals: &[Proposal],
        prev: &MatchState,
    ) -> Vec<Bid> {
        let mut row: Vec<Bid> = proposals
            .iter()
            .map(|p| self.published_bid(book, i, p.worker))
            .collect();
        if let Some(w) = prev.worker_of(i) {
            row.push(self.published_bid(book, i, w));
        }
        if self.mode.objective == Objective::Utility {
            row.push(Bid::reserve());
        }
        row
    }

    /// Merges a round's proposals into the allocation. Returns `(prev, false)`
    /// when nobody proposed.
    pub fn winner_chosen(
        &self,
        book: &BudgetBook,
        cl: &CandidateList,
        prev: &MatchState,
    ) -> (MatchState, bool) {
        if cl.is_empty() {
            return (prev.clone(), false);
        }
        let m = self.instance.num_tasks();
        let n = self.instance.num_workers();
        let rows: Vec<Vec<Bid>> = (0..m)
            .map(|i| {
                if cl.rows[i].is_empty() {
                    Vec::new()
                } else {
                    self.competing_row(book, i, &cl.rows[i], prev)
                }
            })
            .collect();
        let resolved = resolve_conflicts(&build_rank_matrix(rows), n);

        let mut next = MatchState::new(m, n);
        for i in 0..m {
            let holder = if cl.rows[i].is_empty() {
                prev.worker_of(i)
            } else {
                resolved.worker_of(i)
            };
            if let Some(j) = holder {
                next.assign(i, j);
            }
        }
        (next, true)
    }

    /// Runs proposal rounds from an empty allocation until no worker proposes.
    pub fn run(&self, book: &mut BudgetBook) -> PuceReport {
        let n = self.instance.num_workers();
        let mut allocation = MatchState::for_instance(self.instance);
        let mut rounds = Vec::new();
        let mut proposals = 0;
        loop {
            let not_winning: Vec<WorkerIdx> = (0..n)
                .filter(|&j| allocation.task_of(j).is_none())
                .collect();
            let cl = self.worker_proposal(book, &allocation, &not_winning);
            proposals += cl.len();
            let (next, updated) = self.winner_chosen(book, &cl, &allocation);
            debug_assert!(next.is_consistent());
            allocation = next;
            rounds.push(cl);
            if !updated {
                break;
            }
        }
        PuceReport {
            matching: allocation,
            rounds,
            proposals,
        }
    }
}

/// Runs the solver in `mode` with the noise and budgets held by `book`.
pub fn run_puce(
    instance: &Instance,
    vf: ValueFunctions,
    book: &mut BudgetBook,
    mode: SolverMode,
) -> PuceReport {
    Puce::new(instance, vf, mode).run(book)
}
