//! Randomized invariants of the comparators, solvers, accounting and harness.

mod common;

use std::io::Write as _;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_best, dyadic_instance, exact_book, random_instance, task, worker};
use pata::baselines::{greedy, hungarian, utility_table};
use pata::cea::{build_rank_matrix, resolve_conflicts};
use pata::compare::{effective_pair, pcf, ppcf, Bid};
use pata::harness::{
    generate_normal, generate_uniform, ingest_csv, run_config, DataError, Distribution,
    ExperimentConfig,
};
use pata::model::{matched_value, objective_value};
use pata::pgt::{run_pgt, Pgt};
use pata::privacy::{ldp_level, BudgetBook, BudgetSource, SeededLaplace, UniformBudgets};
use pata::puce::{run_puce, PrivacyMode, Puce, SolverMode};
use pata::{Instance, MatchState, ObservationSet, ValueFunctions};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn private_book(inst: &Instance, seed: u64, z: usize) -> BudgetBook {
    BudgetBook::new(
        inst,
        Arc::new(UniformBudgets {
            seed,
            lo: 0.5,
            hi: 1.75,
            z,
        }),
        Arc::new(SeededLaplace { seed }),
    )
}

fn total_utility(inst: &Instance, m: &MatchState) -> f64 {
    matched_value(inst, &ValueFunctions::default(), m)
}

fn total_distance(inst: &Instance, m: &MatchState) -> f64 {
    m.pairs().map(|(i, j)| inst.distance(i, j)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pcf_sign_follows_observations(a in -50.0..50.0f64, b in -50.0..50.0f64, ea in 0.01..10.0f64, eb in 0.01..10.0f64) {
        let p = pcf(a, b, ea, eb).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p > 0.5, a < b);
        prop_assert_eq!(p < 0.5, a > b);
    }

    #[test]
    fn pcf_is_complementary(a in -50.0..50.0f64, b in -50.0..50.0f64, ea in 0.01..10.0f64, eb in 0.01..10.0f64) {
        let sum = pcf(a, b, ea, eb).unwrap() + pcf(b, a, eb, ea).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12, "{}", sum);
    }

    #[test]
    fn pcf_grows_with_the_gap(a in -20.0..20.0f64, b in -20.0..20.0f64, step in 0.0..5.0f64, ea in 0.05..5.0f64, eb in 0.05..5.0f64) {
        prop_assert!(pcf(a, b + step, ea, eb).unwrap() >= pcf(a, b, ea, eb).unwrap() - 1e-12);
    }

    #[test]
    fn ppcf_sign_and_monotonicity(d in -50.0..50.0f64, dh in -50.0..50.0f64, e1 in 0.01..10.0f64, e2 in 0.01..10.0f64) {
        let p = ppcf(d, dh, e1).unwrap();
        prop_assert_eq!(p > 0.5, d < dh);
        prop_assert_eq!(p < 0.5, d > dh);
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let conf = |e: f64| (ppcf(d, dh, e).unwrap() - 0.5).abs();
        prop_assert!(conf(hi) >= conf(lo) - 1e-12);
    }

    #[test]
    fn effective_pair_minimizes_weighted_deviation(obs in prop::collection::vec((-10.0..10.0f64, 0.05..5.0f64), 1..8)) {
        let set = ObservationSet::from_pairs(obs.clone());
        let e = effective_pair(&set).unwrap();
        prop_assert!(obs.contains(&(e.d_eff, e.eps_eff)));
        let cost = |d: f64| obs.iter().map(|&(x, w)| w * (x - d).abs()).sum::<f64>();
        // the weighted median is a global minimizer over the real line
        for k in 0..=400 {
            let d = -10.0 + 20.0 * k as f64 / 400.0;
            prop_assert!(cost(e.d_eff) <= cost(d) + 1e-9);
        }
    }

    #[test]
    fn match_state_is_one_to_one(ops in prop::collection::vec((0..6usize, 0..5usize, any::<bool>()), 0..40)) {
        let mut m = MatchState::new(6, 5);
        for (i, j, drop) in ops {
            if drop {
                m.unassign_task(i);
            } else {
                m.assign(i, j);
                prop_assert_eq!(m.worker_of(i), Some(j));
                prop_assert_eq!(m.task_of(j), Some(i));
            }
            prop_assert!(m.is_consistent());
        }
    }

    #[test]
    fn reach_is_distance_within_radius(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 8, 8, 10.0, 3.0, (1.0, 5.0));
        for j in 0..8 {
            for i in 0..8 {
                prop_assert_eq!(inst.in_reach(i, j), inst.distance(i, j) <= 3.0);
                prop_assert_eq!(inst.reach(j).contains(&i), inst.covering(i).contains(&j));
            }
        }
    }

    #[test]
    fn rank_rows_without_noise_sort_by_distance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dist: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| r.random_range(0.0..20.0)).collect()).collect();
        let rows = dist.iter().map(|row| row.iter().enumerate().map(|(j, &d)| Bid::exact(j, d, 0.0)).collect()).collect();
        let rank = build_rank_matrix(rows);
        for (i, row) in rank.rows().iter().enumerate() {
            let mut want: Vec<usize> = (0..4).collect();
            want.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
            let got: Vec<usize> = row.iter().map(|b| b.worker.unwrap()).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn equidistant_conflict_minimizes_fallback_cost(seed in any::<u64>(), k in 2..=3usize) {
        // k tasks all nearest to worker 0 at the same distance; task t falls back to worker t + 1
        let mut r = rng(seed);
        let near = r.random_range(0.5..2.0);
        let mut fallbacks: Vec<f64> = (0..k).map(|t| 3.0 + t as f64 + r.random_range(0.0..0.9)).collect();
        for t in (1..k).rev() {
            fallbacks.swap(t, r.random_range(0..=t));
        }
        let rows = (0..k)
            .map(|t| {
                let mut row = vec![Bid::exact(0, near, 0.0), Bid::exact(t + 1, fallbacks[t], 0.0)];
                row.extend((1..=k).filter(|&w| w != t + 1).map(|w| Bid::exact(w, 100.0 + w as f64, 0.0)));
                row
            })
            .collect();
        let m = resolve_conflicts(&build_rank_matrix(rows), k + 1);
        let keeper = m.task_of(0).unwrap();
        let cost = |keep: usize| near + (0..k).filter(|&t| t != keep).map(|t| fallbacks[t]).sum::<f64>();
        let best = (0..k).map(cost).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(cost(keeper), best);
        for t in (0..k).filter(|&t| t != keeper) {
            prop_assert_eq!(m.worker_of(t), Some(t + 1));
        }
    }

    #[test]
    fn objective_decomposes_over_pairs(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 2, 2, 2.0, 3.0, (1.0, 6.0));
        let vf = ValueFunctions::new(1.5, 0.5).unwrap();
        let mut book = private_book(&inst, seed, 3);
        run_puce(&inst, vf, &mut book, SolverMode::PUCE);
        let spent = book.ledger().total_spent();
        for alloc in [[None, None], [Some(0), None], [None, Some(1)], [Some(0), Some(1)], [Some(1), Some(0)]] {
            let mut m = MatchState::for_instance(&inst);
            for (i, j) in alloc.iter().enumerate() {
                if let Some(j) = *j {
                    m.assign(i, j);
                }
            }
            let by_hand: f64 = alloc
                .iter()
                .enumerate()
                .filter_map(|(i, j)| j.map(|j| inst.task(i).value - 1.5 * inst.distance(i, j)))
                .sum::<f64>()
                - 0.5 * spent;
            prop_assert!((objective_value(&inst, &vf, &m, book.ledger()) - by_hand).abs() < 1e-12);
        }
    }

    #[test]
    fn ldp_levels_only_grow_and_runs_repeat(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 6, 8, 6.0, 3.0, (2.0, 8.0));
        let vf = ValueFunctions::default();
        let mut a = private_book(&inst, seed, 4);
        let mut b = private_book(&inst, seed, 4);
        let ra = run_puce(&inst, vf, &mut a, SolverMode::PUCE);
        let rb = run_puce(&inst, vf, &mut b, SolverMode::PUCE);
        prop_assert_eq!(ra.matching, rb.matching);
        prop_assert_eq!(a.ledger(), b.ledger());

        let mut book = private_book(&inst, seed, 4);
        let mut levels = [0.0; 8];
        for j in 0..8 {
            for &i in inst.reach(j) {
                while book.commit_next((i, j), inst.distance(i, j)).is_ok() {
                    for (w, level) in levels.iter_mut().enumerate() {
                        let now = ldp_level(book.ledger(), w);
                        prop_assert!(now >= *level);
                        *level = now;
                    }
                }
            }
        }
    }

    #[test]
    fn distance_mode_ignores_task_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 6, 6, 5.0, 3.0, (2.0, 8.0));
        let revalued = Instance::new(
            inst.tasks().iter().map(|t| pata::Task { value: r.random_range(0.1..50.0), ..t.clone() }).collect(),
            inst.workers().to_vec(),
        ).unwrap();
        for mode in [SolverMode::PDCE, SolverMode::DCE] {
            let vf = ValueFunctions::default();
            let a = run_puce(&inst, vf, &mut private_book(&inst, seed, 4), mode);
            let b = run_puce(&revalued, vf, &mut private_book(&revalued, seed, 4), mode);
            prop_assert_eq!(a.matching, b.matching);
            prop_assert_eq!(a.proposals, b.proposals);
        }
    }

    #[test]
    fn challenger_test_is_the_only_difference(seed in any::<u64>()) {
        // without incumbents the challenger test never runs, so first rounds agree
        let inst = random_instance(&mut rng(seed), 6, 6, 5.0, 3.0, (2.0, 8.0));
        let vf = ValueFunctions::default();
        let empty = MatchState::for_instance(&inst);
        let all: Vec<usize> = (0..6).collect();
        let mut ba = private_book(&inst, seed, 4);
        let mut bb = private_book(&inst, seed, 4);
        let a = Puce::new(&inst, vf, SolverMode::PUCE).worker_proposal(&mut ba, &empty, &all);
        let b = Puce::new(&inst, vf, SolverMode::PUCE_NPPCF).worker_proposal(&mut bb, &empty, &all);
        prop_assert_eq!(a.rows, b.rows);
        prop_assert_eq!(a.decisions, b.decisions);
    }

    #[test]
    fn dce_resolves_equidistant_two_by_two(near in 0.5..2.0f64, f0 in 2.5..6.0f64, f1 in 2.5..6.0f64) {
        prop_assume!((f0 - f1).abs() > 1e-6);
        let tasks = vec![task(0, 0.0, 0.0, 10.0), task(1, 0.0, 0.0, 10.0)];
        let workers = vec![worker(0, 0.0, 0.0, 8.0), worker(1, 0.0, 0.0, 8.0)];
        let inst = Instance::with_distance_table(tasks, workers, vec![vec![near, f0], vec![near, f1]]).unwrap();
        let dce = run_puce(&inst, ValueFunctions::default(), &mut exact_book(&inst, 3, 1.0), SolverMode::DCE);
        prop_assert_eq!(dce.matching.len(), 2);
        prop_assert_eq!(total_distance(&inst, &dce.matching), near + f0.min(f1));
    }

    #[test]
    fn hungarian_is_optimal(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m, n) = (r.random_range(1..=6), r.random_range(1..=6));
        let inst = dyadic_instance(&mut r, m, n);
        let vf = ValueFunctions::default();
        let table = utility_table(&inst, &vf);
        let h = hungarian(&inst, &vf);
        prop_assert!(h.is_consistent());
        prop_assert!(h.pairs().all(|(i, j)| table[i][j].is_some_and(|u| u > 0.0)));
        prop_assert_eq!(total_utility(&inst, &h), brute_force_best(&table));
        prop_assert!(total_utility(&inst, &h) >= total_utility(&inst, &greedy(&inst, &vf)));
    }

    #[test]
    fn disconnected_parts_solve_independently(seed in any::<u64>()) {
        let mut r = rng(seed);
        let left = dyadic_instance(&mut r, 3, 3);
        let right = dyadic_instance(&mut r, 3, 2);
        let vf = ValueFunctions::default();
        let mut tasks = left.tasks().to_vec();
        tasks.extend(right.tasks().iter().map(|t| pata::Task { id: t.id + 10, ..t.clone() }));
        let mut workers = left.workers().to_vec();
        workers.extend(right.workers().iter().map(|w| pata::Worker { id: w.id + 10, ..w.clone() }));
        let table: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                (0..5)
                    .map(|j| match (i < 3, j < 3) {
                        (true, true) => left.distance(i, j),
                        (false, false) => right.distance(i - 3, j - 3),
                        _ => 1000.0,
                    })
                    .collect()
            })
            .collect();
        let whole = Instance::with_distance_table(tasks, workers, table).unwrap();
        let parts = total_utility(&left, &hungarian(&left, &vf)) + total_utility(&right, &hungarian(&right, &vf));
        prop_assert_eq!(total_utility(&whole, &hungarian(&whole, &vf)), parts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn game_potential_equilibrium_and_privacy_cap(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (m, n) = (r.random_range(1..=6), r.random_range(1..=6));
        let inst = random_instance(&mut r, m, n, 5.0, 3.0, (2.0, 10.0));
        let vf = ValueFunctions::default();
        let budgets = UniformBudgets { seed, lo: 0.5, hi: 1.75, z: 5 };
        let mut state = pata::pgt::GameState::new(&inst, BudgetBook::new(&inst, Arc::new(budgets), Arc::new(SeededLaplace { seed })));
        let pgt = Pgt::new(&inst, vf, PrivacyMode::Private).traced();
        let report = pgt.run(&mut state);
        let mut phi = 0.0;
        for d in &report.deviations {
            prop_assert!(d.ut > 0.0);
            prop_assert!((d.phi_after.unwrap() - d.phi_before.unwrap() - d.ut).abs() < 1e-9);
            prop_assert!(d.phi_after.unwrap() > phi);
            phi = d.phi_after.unwrap();
        }
        prop_assert!(pgt.is_equilibrium(&state));
        prop_assert!(report.matching.is_consistent());
        for j in 0..n {
            let pool: f64 = inst.reach(j).iter().map(|&i| budgets.budgets((i, j)).iter().sum::<f64>()).sum();
            prop_assert!(state.book.ledger().worker_spent(j) <= pool + 1e-9);
        }
        let (plain, _) = run_pgt(&inst, vf, BudgetBook::new(&inst, Arc::new(budgets), Arc::new(SeededLaplace { seed })), PrivacyMode::Private);
        prop_assert_eq!(plain.matching, report.matching);
    }
}

#[test]
fn uce_at_least_greedy_on_example_table() {
    let inst = common::example_instance();
    let vf = ValueFunctions::default();
    let uce = run_puce(&inst, vf, &mut exact_book(&inst, 3, 1.0), SolverMode::UCE);
    let grd = greedy(&inst, &vf);
    assert!(total_utility(&inst, &uce.matching) >= total_utility(&inst, &grd));
    assert!(total_utility(&inst, &uce.matching) <= total_utility(&inst, &hungarian(&inst, &vf)));
}

#[test]
fn uniform_generator_counts_bounds_and_mean() {
    let cfg = ExperimentConfig {
        n_tasks: 100,
        worker_task_ratio: 2.0,
        ..ExperimentConfig::default()
    };
    let inst = generate_uniform(&cfg, &mut rng(1));
    assert_eq!((inst.num_tasks(), inst.num_workers()), (100, 200));
    let small = ExperimentConfig {
        n_tasks: 500,
        worker_task_ratio: 0.01,
        ..ExperimentConfig::default()
    };
    let coords: Vec<f64> = (0..100)
        .flat_map(|seed| generate_uniform(&small, &mut rng(seed)).tasks().to_vec())
        .flat_map(|t| [t.location.x, t.location.y])
        .collect();
    assert_eq!(coords.len(), 100_000);
    let mean = coords.iter().sum::<f64>() / coords.len() as f64;
    assert!((mean - 50.0).abs() < 0.5, "{mean}");
    let inst = generate_uniform(&cfg, &mut rng(2));
    assert!(inst.tasks().iter().all(|t| t.value == 4.5));
    assert!(inst.workers().iter().all(|w| w.radius == 1.4));
}

#[test]
fn normal_generator_statistics() {
    let cfg = ExperimentConfig {
        n_tasks: 1000,
        worker_task_ratio: 1.5,
        ..ExperimentConfig::default()
    };
    let inst = generate_normal(&cfg, &mut rng(3));
    assert_eq!((inst.num_tasks(), inst.num_workers()), (1000, 1500));
    let small = ExperimentConfig {
        n_tasks: 1000,
        worker_task_ratio: 0.01,
        ..ExperimentConfig::default()
    };
    let points: Vec<pata::Point> = (0..100)
        .flat_map(|seed| generate_normal(&small, &mut rng(seed)).tasks().to_vec())
        .map(|t| t.location)
        .collect();
    for axis in [0, 1] {
        let xs: Vec<f64> = points
            .iter()
            .map(|p| if axis == 0 { p.x } else { p.y })
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.2, "{mean}");
        assert!((var / 150.0 - 1.0).abs() < 0.05, "{var}");
    }
}

fn write_file(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::File::create(&path)
        .unwrap()
        .write_all(text.as_bytes())
        .unwrap();
    path
}

fn orders(n: usize) -> String {
    let mut s = String::from("id,release_time,x,y,value\n");
    // release times deliberately out of order
    for k in 0..n {
        s += &format!("{k},{},{}.5,{}.25,4.5\n", (k * 7919) % n, k % 50, k % 30);
    }
    s
}

fn drivers(n: usize) -> String {
    let mut s = String::from("id,x,y,radius,capacity\n");
    for k in 0..n {
        s += &format!("{k},{},{},1.4,1\n", k % 40, k % 25);
    }
    s
}

#[test]
fn csv_batches_and_worker_groups() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_file(&dir, "tasks.csv", &orders(2500));
    let w = write_file(&dir, "workers.csv", &drivers(300));
    let cfg = ExperimentConfig {
        batch_size: 1000,
        worker_group_size: Some(150),
        ..ExperimentConfig::default()
    };
    let batches = ingest_csv(&t, &w, &cfg).unwrap();
    let sizes: Vec<usize> = batches.iter().map(Instance::num_tasks).collect();
    assert_eq!(sizes, vec![1000, 1000, 500]);
    let first_worker: Vec<u64> = batches.iter().map(|b| b.workers()[0].id).collect();
    assert_eq!(first_worker, vec![0, 150, 0]);

    let mut ids: Vec<u64> = batches
        .iter()
        .flat_map(|b| b.tasks().iter().map(|t| t.id))
        .collect();
    let times: Vec<f64> = batches
        .iter()
        .flat_map(|b| b.tasks().iter().map(|t| t.release_time))
        .collect();
    assert!(times.windows(2).all(|p| p[0] <= p[1]));
    ids.sort_unstable();
    assert_eq!(ids, (0..2500).collect::<Vec<u64>>());
}

#[test]
fn csv_default_group_honours_the_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let t = write_file(&dir, "tasks.csv", &orders(40));
    let w = write_file(&dir, "workers.csv", &drivers(50));
    let cfg = ExperimentConfig {
        batch_size: 10,
        worker_task_ratio: 1.5,
        ..ExperimentConfig::default()
    };
    let batches = ingest_csv(&t, &w, &cfg).unwrap();
    let groups: Vec<(u64, usize)> = batches
        .iter()
        .map(|b| (b.workers()[0].id, b.num_workers()))
        .collect();
    assert_eq!(groups, vec![(0, 15), (15, 15), (30, 15), (45, 5)]);
}

#[test]
fn csv_errors_name_file_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_file(&dir, "workers.csv", &drivers(5));
    let cfg = ExperimentConfig::default();

    let t = write_file(
        &dir,
        "short.csv",
        "id,release_time,x,y,value\n0,1,2,3,4\n1,2,3,4\n",
    );
    match ingest_csv(&t, &w, &cfg) {
        Err(DataError::Malformed {
            file, line, column, ..
        }) => {
            assert!(file.ends_with("short.csv"));
            assert_eq!((line, column.as_str()), (3, "value"));
        }
        other => panic!("{other:?}"),
    }

    let t = write_file(&dir, "text.csv", "id,release_time,x,y,value\n0,1,abc,3,4\n");
    assert!(matches!(
        ingest_csv(&t, &w, &cfg),
        Err(DataError::Malformed { line: 2, ref column, .. }) if column == "x"
    ));

    let t = write_file(&dir, "header.csv", "id,release_time,x,y\n0,1,2,3\n");
    assert!(matches!(
        ingest_csv(&t, &w, &cfg),
        Err(DataError::Malformed { line: 1, ref column, .. }) if column == "value"
    ));

    let missing = dir.path().join("absent.csv");
    assert!(matches!(
        ingest_csv(&missing, &w, &cfg),
        Err(DataError::Io { .. })
    ));
}

#[test]
fn harness_runs_repeat_exactly() {
    for dist in [Distribution::Uniform, Distribution::Normal] {
        let cfg = ExperimentConfig {
            n_tasks: 120,
            batch_size: 50,
            distribution: dist,
            seed: 5,
            ..ExperimentConfig::default()
        };
        let a = run_config(0, &cfg).unwrap();
        let b = run_config(0, &cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
    }
}
