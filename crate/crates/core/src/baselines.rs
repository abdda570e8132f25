//! Reference assignments and the method dispatcher.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::model::{Instance, MatchState, ValueFunctions};
use crate::pgt::{run_pgt, Deviation};
use crate::privacy::{BudgetBook, BudgetSource, ExactDistances, LdpLedger, SeededLaplace};
use crate::puce::{run_puce, PrivacyMode, SolverMode};

/// Maximum-weight one-to-one matching on a `rows x cols` weight table.
///
/// `None` marks a forbidden pair; pairs with non-positive weight are never
/// matched. Returns the column per row and the total weight.
pub fn max_weight_matching(weights: &[Vec<Option<f64>>]) -> (Vec<Option<usize>>, f64) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let gain = |r: usize, c: usize| weights[r][c].filter(|w| *w > 0.0);
    if rows == 0 || cols == 0 {
        return (vec![None; rows], 0.0);
    }
    // shortest augmenting path assignment needs rows <= cols
    let transpose = rows > cols;
    let (n, m) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let cost = |r: usize, c: usize| -> f64 {
        let w = if transpose { gain(c, r) } else { gain(r, c) };
        -w.unwrap_or(0.0)
    };

    // 1-indexed potentials; p[col] = row matched to col
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for r in 1..=n {
        p[0] = r;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for c in 1..=m {
        if p[c] == 0 {
            continue;
        }
        let (r, c) = if transpose {
            (c - 1, p[c] - 1)
        } else {
            (p[c] - 1, c - 1)
        };
        if let Some(w) = gain(r, c) {
            assignment[r] = Some(c);
            total += w;
        }
    }
    (assignment, total)
}

/// `v_i - f_d(d_{i,j})` for reachable pairs, `None` elsewhere.
pub fn utility_table(instance: &Instance, vf: &ValueFunctions) -> Vec<Vec<Option<f64>>> {
    let mut table = vec![vec![None; instance.num_workers()]; instance.num_tasks()];
    for (j, reach) in (0..instance.num_workers()).map(|j| (j, instance.reach(j))) {
        for &i in reach {
            table[i][j] = Some(instance.task(i).value - vf.distance_cost(instance.distance(i, j)));
        }
    }
    table
}

/// Optimal assignment on true utilities without privacy cost.
pub fn hungarian(instance: &Instance, vf: &ValueFunctions) -> MatchState {
    let (assignment, _) = max_weight_matching(&utility_table(instance, vf));
    let mut state = MatchState::for_instance(instance);
    for (i, j) in assignment.into_iter().enumerate() {
        if let Some(j) = j {
            state.assign(i, j);
        }
    }
    state
}

/// Repeatedly fixes the highest-utility free pair while it stays positive.
/// Equal utilities go to the lower task, then the lower worker.
pub fn greedy(instance: &Instance, vf: &ValueFunctions) -> MatchState {
    let mut pairs: Vec<(f64, usize, usize)> = utility_table(instance, vf)
        .into_iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .filter_map(move |(j, u)| u.filter(|u| *u > 0.0).map(|u| (u, i, j)))
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut state = MatchState::for_instance(instance);
    for (_, i, j) in pairs {
        if state.worker_of(i).is_none() && state.task_of(j).is_none() {
            state.assign(i, j);
        }
    }
    state
}

/// Every assignment method in the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Puce,
    Pgt,
    Pdce,
    Dce,
    Uce,
    Gt,
    Grd,
    Hungarian,
    PuceNppcf,
    PdceNppcf,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Puce,
        Method::Pgt,
        Method::Pdce,
        Method::Dce,
        Method::Uce,
        Method::Gt,
        Method::Grd,
        Method::Hungarian,
        Method::PuceNppcf,
        Method::PdceNppcf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Puce => "puce",
            Method::Pgt => "pgt",
            Method::Pdce => "pdce",
            Method::Dce => "dce",
            Method::Uce => "uce",
            Method::Gt => "gt",
            Method::Grd => "grd",
            Method::Hungarian => "hungarian",
            Method::PuceNppcf => "puce-nppcf",
            Method::PdceNppcf => "pdce-nppcf",
        }
    }

    /// Whether the method publishes noisy distances and pays for budgets.
    pub fn is_private(self) -> bool {
        matches!(
            self,
            Method::Puce | Method::Pgt | Method::Pdce | Method::PuceNppcf | Method::PdceNppcf
        )
    }

    /// The non-private method a run is measured against.
    pub fn nonprivate_counterpart(self) -> Method {
        match self {
            Method::Puce | Method::PuceNppcf => Method::Uce,
            Method::Pdce | Method::PdceNppcf => Method::Dce,
            Method::Pgt => Method::Gt,
            other => other,
        }
    }

    pub fn solver_mode(self) -> Option<SolverMode> {
        match self {
            Method::Puce => Some(SolverMode::PUCE),
            Method::Pdce => Some(SolverMode::PDCE),
            Method::Uce => Some(SolverMode::UCE),
            Method::Dce => Some(SolverMode::DCE),
            Method::PuceNppcf => Some(SolverMode::PUCE_NPPCF),
            Method::PdceNppcf => Some(SolverMode::PDCE_NPPCF),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Result of one method on one instance.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: Method,
    pub matching: MatchState,
    /// Budgets consumed; empty for the non-private and reference methods.
    pub ledger: LdpLedger,
    /// Proposals (conflict elimination) or accepted moves (game); zero otherwise.
    pub steps: usize,
    pub deviations: Vec<Deviation>,
}

/// Runs `method` with budgets from `budgets` and noise seeded by `seed`.
pub fn run_variant(
    method: Method,
    instance: &Instance,
    vf: ValueFunctions,
    budgets: Arc<dyn BudgetSource>,
    seed: u64,
) -> RunOutcome {
    let book = if method.is_private() {
        BudgetBook::new(instance, budgets, Arc::new(SeededLaplace { seed }))
    } else {
        BudgetBook::new(instance, budgets, Arc::new(ExactDistances))
    };
    let charged = |ledger: &LdpLedger| {
        if method.is_private() {
            ledger.clone()
        } else {
            LdpLedger::for_instance(instance)
        }
    };
    match method {
        Method::Grd => RunOutcome {
            method,
            matching: greedy(instance, &vf),
            ledger: LdpLedger::for_instance(instance),
            steps: 0,
            deviations: Vec::new(),
        },
        Method::Hungarian => RunOutcome {
            method,
            matching: hungarian(instance, &vf),
            ledger: LdpLedger::for_instance(instance),
            steps: 0,
            deviations: Vec::new(),
        },
        Method::Pgt | Method::Gt => {
            let privacy = if method.is_private() {
                PrivacyMode::Private
            } else {
                PrivacyMode::NonPrivate
            };
            let (report, state) = run_pgt(instance, vf, book, privacy);
            RunOutcome {
                method,
                matching: report.matching,
                ledger: charged(state.book.ledger()),
                steps: report.deviations.len(),
                deviations: report.deviations,
            }
        }
        _ => {
            let mode = method.solver_mode().expect("conflict-elimination method");
            let mut book = book;
            let report = run_puce(instance, vf, &mut book, mode);
            RunOutcome {
                method,
                matching: report.matching,
                ledger: charged(book.ledger()),
                steps: report.proposals,
                deviations: Vec::new(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{task, worker};
    use crate::model::matched_value;

    fn brute_force(weights: &[Vec<Option<f64>>]) -> f64 {
        fn go(weights: &[Vec<Option<f64>>], r: usize, used: &mut Vec<bool>) -> f64 {
            if r == weights.len() {
                return 0.0;
            }
            let mut best = go(weights, r + 1, used);
            for c in 0..used.len() {
                if let Some(w) = weights[r][c] {
                    if !used[c] && w > 0.0 {
                        used[c] = true;
                        best = best.max(w + go(weights, r + 1, used));
                        used[c] = false;
                    }
                }
            }
            best
        }
        let cols = weights.first().map_or(0, Vec::len);
        go(weights, 0, &mut vec![false; cols])
    }

    fn table_instance() -> Instance {
        let tasks = vec![
            task(1, 0.0, 0.0, 12.4),
            task(2, 0.0, 0.0, 11.0),
            task(3, 0.0, 0.0, 13.0),
        ];
        let workers = vec![
            worker(1, 0.0, 0.0, 15.0),
            worker(2, 0.0, 0.0, 15.0),
            worker(3, 0.0, 0.0, 10.0),
        ];
        let d = vec![
            vec![12.2, 5.0, 9.43],
            vec![3.61, 10.44, 18.25],
            vec![17.12, 12.21, 7.28],
        ];
        Instance::with_distance_table(tasks, workers, d).unwrap()
    }

    #[test]
    fn one_by_one() {
        let inst =
            Instance::new(vec![task(0, 0.0, 0.0, 5.0)], vec![worker(0, 1.0, 0.0, 2.0)]).unwrap();
        let vf = ValueFunctions::default();
        assert_eq!(hungarian(&inst, &vf).worker_of(0), Some(0));
        assert_eq!(greedy(&inst, &vf).worker_of(0), Some(0));
    }

    #[test]
    fn nothing_positive_means_nothing_matched() {
        let inst =
            Instance::new(vec![task(0, 0.0, 0.0, 0.5)], vec![worker(0, 1.0, 0.0, 2.0)]).unwrap();
        let vf = ValueFunctions::default();
        assert!(greedy(&inst, &vf).is_empty());
        assert!(hungarian(&inst, &vf).is_empty());
    }

    #[test]
    fn distance_table_optimum() {
        let inst = table_instance();
        let vf = ValueFunctions::default();
        let opt = brute_force(&utility_table(&inst, &vf));
        let got = matched_value(&inst, &vf, &hungarian(&inst, &vf));
        assert!((opt - got).abs() < 1e-9, "{opt} vs {got}");
        let grd = matched_value(&inst, &vf, &greedy(&inst, &vf));
        assert!(grd <= got + 1e-9);
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        // greedy grabs the 10 pair, optimum takes both 9s
        let w = vec![vec![Some(10.0), Some(9.0)], vec![Some(9.0), None]];
        assert_eq!(brute_force(&w), 18.0);
        assert_eq!(max_weight_matching(&w).1, 18.0);
    }

    #[test]
    fn rectangular_and_transposed() {
        let w = vec![vec![Some(1.0), Some(5.0), Some(2.0)]];
        assert_eq!(max_weight_matching(&w), (vec![Some(1)], 5.0));
        let t = vec![vec![Some(1.0)], vec![Some(5.0)], vec![Some(2.0)]];
        assert_eq!(max_weight_matching(&t), (vec![None, Some(0), None], 5.0));
        assert_eq!(max_weight_matching(&[]), (vec![], 0.0));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
        assert_eq!(Method::PuceNppcf.nonprivate_counterpart(), Method::Uce);
        assert_eq!(Method::Grd.nonprivate_counterpart(), Method::Grd);
    }
}
