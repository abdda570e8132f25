//! Rank-matrix conflict elimination.
//!
//! Each task starts on its best-ranked candidate. Whenever several tasks pick the
//! same worker, the task whose next alternative is worst keeps the worker and the
//! others fall back one position in their rows.

use crate::compare::{ranks_before, sort_bids, Bid};
use crate::model::{MatchState, TaskIdx, WorkerIdx};

/// Rows of candidates per task, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix<C> {
    rows: Vec<Vec<C>>,
}

impl<C> RankMatrix<C> {
    pub fn rows(&self) -> &[Vec<C>] {
        &self.rows
    }

    pub fn row(&self, i: TaskIdx) -> &[C] {
        &self.rows[i]
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }
}

/// Something that sits in a rank row; `None` means the entry assigns no worker.
pub trait Candidate {
    fn worker(&self) -> Option<WorkerIdx>;
}

impl Candidate for Bid {
    fn worker(&self) -> Option<WorkerIdx> {
        self.worker
    }
}

impl Candidate for WorkerIdx {
    fn worker(&self) -> Option<WorkerIdx> {
        Some(*self)
    }
}

/// Sorts every row with the strict "ranks ahead" relation `before` (stable insertion sort).
pub fn build_rank_matrix_by<C>(
    candidates: Vec<Vec<C>>,
    before: impl Fn(&C, &C) -> bool,
) -> RankMatrix<C> {
    let mut rows = candidates;
    for row in &mut rows {
        for k in 1..row.len() {
            let mut p = k;
            while p > 0 && before(&row[p], &row[p - 1]) {
                row.swap(p, p - 1);
                p -= 1;
            }
        }
    }
    RankMatrix { rows }
}

/// Rank matrix of comparison bids ordered by [`ranks_before`].
pub fn build_rank_matrix(candidates: Vec<Vec<Bid>>) -> RankMatrix<Bid> {
    let mut rows = candidates;
    for row in &mut rows {
        sort_bids(row);
    }
    RankMatrix { rows }
}

/// Resolves worker conflicts in ascending worker id until every worker is chosen
/// by at most one task. A task whose pointer reaches a non-worker entry or runs
/// off its row stays unmatched.
pub fn resolve_conflicts_by<C: Candidate>(
    rank: &RankMatrix<C>,
    num_workers: usize,
    before: impl Fn(&C, &C) -> bool,
) -> MatchState {
    let m = rank.num_tasks();
    let mut ptr = vec![0usize; m];
    let choice = |ptr: &[usize], i: TaskIdx| rank.rows[i].get(ptr[i]).and_then(Candidate::worker);

    loop {
        let mut pickers: Vec<Vec<TaskIdx>> = vec![Vec::new(); num_workers];
        for i in 0..m {
            if let Some(j) = choice(&ptr, i) {
                pickers[j].push(i);
            }
        }
        let Some(conflict) = pickers.iter().position(|t| t.len() > 1) else {
            break;
        };
        let tasks = &pickers[conflict];
        let second = |i: TaskIdx| rank.rows[i].get(ptr[i] + 1);
        // `x` is a strictly worse fallback than `y`; a missing fallback is worst
        let worse = |x: Option<&C>, y: Option<&C>| match (x, y) {
            (None, Some(_)) => true,
            (Some(a), Some(b)) => before(b, a),
            _ => false,
        };
        let mut keeper = tasks[0];
        for &i in &tasks[1..] {
            if worse(second(i), second(keeper)) {
                keeper = i;
            }
        }
        for &i in tasks {
            if i != keeper {
                ptr[i] += 1;
            }
        }
    }

    let mut state = MatchState::new(m, num_workers);
    for i in 0..m {
        if let Some(j) = choice(&ptr, i) {
            state.assign(i, j);
        }
    }
    state
}

pub fn resolve_conflicts(rank: &RankMatrix<Bid>, num_workers: usize) -> MatchState {
    resolve_conflicts_by(rank, num_workers, ranks_before)
}
