//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use pata::model::{Point, Task, Worker};
use pata::pgt::{GameState, Pgt, PgtReport};
use pata::privacy::{BudgetBook, ExactDistances, TableBudgets, TableNoise};
use pata::puce::PrivacyMode;
use pata::{Instance, MatchState, ValueFunctions};

pub fn task(id: u64, x: f64, y: f64, value: f64) -> Task {
    Task {
        id,
        location: Point::new(x, y),
        value,
        release_time: 0.0,
    }
}

pub fn worker(id: u64, x: f64, y: f64, radius: f64) -> Worker {
    Worker {
        id,
        location: Point::new(x, y),
        radius,
    }
}

/// Three tasks and three workers with recorded distances (rows are tasks).
pub fn example_instance() -> Instance {
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
    let distances = vec![
        vec![12.2, 5.0, 9.43],
        vec![3.61, 10.44, 18.25],
        vec![17.12, 12.21, 7.28],
    ];
    Instance::with_distance_table(tasks, workers, distances).unwrap()
}

/// `(task, worker)`, three budgets and the obfuscated distance published with each.
pub const EXAMPLE_SLOTS: [((usize, usize), [f64; 3], [f64; 3]); 7] = [
    ((0, 0), [0.1, 0.3, 0.4], [12.7, 12.4, 12.3]),
    ((0, 1), [4.6, 4.65, 4.8], [5.5, 5.3, 5.1]),
    ((0, 2), [0.1, 0.4, 0.4], [9.93, 9.63, 9.53]),
    ((1, 0), [6.99, 7.1, 7.2], [4.11, 4.01, 3.81]),
    ((1, 1), [0.1, 0.2, 0.5], [10.94, 10.64, 10.54]),
    ((2, 1), [0.1, 0.3, 0.4], [12.71, 12.51, 12.31]),
    ((2, 2), [5.4, 5.5, 5.6], [7.78, 7.58, 7.38]),
];

/// Budget book that replays the recorded budgets and obfuscated distances.
pub fn example_book(inst: &Instance) -> BudgetBook {
    let mut budgets = TableBudgets::new(Vec::new());
    let mut noise = TableNoise::new();
    for (pair, eps, d_hat) in EXAMPLE_SLOTS {
        budgets.insert(pair, eps.to_vec());
        noise.insert(pair, &d_hat);
    }
    BudgetBook::new(inst, Arc::new(budgets), Arc::new(noise))
}

/// Budget book with constant budgets and no noise.
pub fn exact_book(inst: &Instance, z: usize, eps: f64) -> BudgetBook {
    BudgetBook::new(
        inst,
        Arc::new(TableBudgets::new(vec![eps; z])),
        Arc::new(ExactDistances),
    )
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Instance with coordinates uniform on `[0, side]^2`.
pub fn random_instance<R: rand::Rng>(
    rng: &mut R,
    m: usize,
    n: usize,
    side: f64,
    radius: f64,
    value: (f64, f64),
) -> Instance {
    let tasks = (0..m)
        .map(|k| {
            task(
                k as u64,
                rng.random_range(0.0..side),
                rng.random_range(0.0..side),
                rng.random_range(value.0..=value.1),
            )
        })
        .collect();
    let workers = (0..n)
        .map(|k| {
            worker(
                k as u64,
                rng.random_range(0.0..side),
                rng.random_range(0.0..side),
                radius,
            )
        })
        .collect();
    Instance::new(tasks, workers).unwrap()
}

/// Instance whose distances and values are multiples of 1/8, so every sum of
/// utilities is exact.
pub fn dyadic_instance<R: rand::Rng>(rng: &mut R, m: usize, n: usize) -> Instance {
    let tasks = (0..m)
        .map(|k| task(k as u64, 0.0, 0.0, rng.random_range(8..=80) as f64 / 8.0))
        .collect();
    let workers = (0..n).map(|k| worker(k as u64, 0.0, 0.0, 6.0)).collect();
    let table = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| rng.random_range(0..=64) as f64 / 8.0)
                .collect()
        })
        .collect();
    Instance::with_distance_table(tasks, workers, table).unwrap()
}

/// Best total weight over all one-to-one partial matchings, by enumeration.
pub fn brute_force_best(weights: &[Vec<Option<f64>>]) -> f64 {
    fn go(weights: &[Vec<Option<f64>>], i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if i == weights.len() {
            *best = best.max(acc);
            return;
        }
        go(weights, i + 1, used, acc, best);
        for (j, w) in weights[i].iter().enumerate() {
            if let (Some(w), false) = (w, used[j]) {
                used[j] = true;
                go(weights, i + 1, used, acc + w, best);
                used[j] = false;
            }
        }
    }
    let n = weights.first().map_or(0, Vec::len);
    let mut best = 0.0;
    go(weights, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

/// Game on the example instance starting from the diagonal allocation, every
/// reachable pair having published its first slot.
pub fn pgt_from_round_k() -> (PgtReport, GameState) {
    let inst = example_instance();
    let mut book = example_book(&inst);
    for j in 0..3 {
        for &i in inst.reach(j) {
            book.commit_next((i, j), inst.distance(i, j)).unwrap();
        }
    }
    let mut allocation = MatchState::for_instance(&inst);
    for k in 0..3 {
        allocation.assign(k, k);
    }
    let mut state = GameState {
        allocation,
        book,
        round: 0,
    };
    let pgt = Pgt::new(&inst, ValueFunctions::default(), PrivacyMode::Private);
    let report = pgt.run(&mut state);
    (report, state)
}
