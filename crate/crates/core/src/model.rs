//! Tasks, workers, value functions and the problem instance shared by every solver.

use thiserror::Error;

use crate::privacy::LdpLedger;

/// Position of a task inside an [`Instance`].
pub type TaskIdx = usize;
/// Position of a worker inside an [`Instance`].
pub type WorkerIdx = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("task {task} is outside the service area of worker {worker}")]
    OutOfReach { task: TaskIdx, worker: WorkerIdx },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("task {id} has negative or non-finite value {value}")]
    InvalidValue { id: u64, value: f64 },
    #[error("worker {id} has non-positive or non-finite radius {radius}")]
    InvalidRadius { id: u64, radius: f64 },
    #[error("distance table is {rows}x{cols}, expected {tasks}x{workers}")]
    DistanceShape {
        rows: usize,
        cols: usize,
        tasks: usize,
        workers: usize,
    },
    #[error("value function coefficient {name} must be positive and finite, got {value}")]
    InvalidCoefficient { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u64,
    pub location: Point,
    pub value: f64,
    pub release_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Worker {
    pub id: u64,
    pub location: Point,
    pub radius: f64,
}

/// Euclidean distance between a task and a worker.
pub fn distance(task: &Task, worker: &Worker) -> f64 {
    task.location.distance(&worker.location)
}

/// Linear distance and privacy value functions `f_d(x) = alpha * x`, `f_p(x) = beta * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueFunctions {
    alpha: f64,
    beta: f64,
}

impl Default for ValueFunctions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl ValueFunctions {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ModelError> {
        for (name, value) in [("alpha", alpha), ("beta", beta)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidCoefficient { name, value });
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn distance_cost(&self, distance: f64) -> f64 {
        self.alpha * distance
    }

    /// Inverse of the distance cost; defined because `alpha > 0`.
    pub fn distance_for_cost(&self, cost: f64) -> f64 {
        cost / self.alpha
    }

    pub fn privacy_cost(&self, budget: f64) -> f64 {
        self.beta * budget
    }
}

#[derive(Debug, Clone)]
enum Metric {
    Euclidean,
    /// Row-major `tasks x workers` table of recorded distances.
    Table(Vec<f64>),
}

/// A batch of tasks and workers with the per-worker reachable task sets.
#[derive(Debug, Clone)]
pub struct Instance {
    tasks: Vec<Task>,
    workers: Vec<Worker>,
    metric: Metric,
    reach: Vec<Vec<TaskIdx>>,
    covering: Vec<Vec<WorkerIdx>>,
}

impl Instance {
    pub fn new(tasks: Vec<Task>, workers: Vec<Worker>) -> Result<Self, ModelError> {
        Self::build(tasks, workers, Metric::Euclidean)
    }

    /// Builds an instance whose task-worker distances come from a recorded
    /// `tasks x workers` table instead of the stored coordinates.
    pub fn with_distance_table(
        tasks: Vec<Task>,
        workers: Vec<Worker>,
        table: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let cols = table.first().map_or(0, Vec::len);
        if table.len() != tasks.len() || table.iter().any(|row| row.len() != workers.len()) {
            return Err(ModelError::DistanceShape {
                rows: table.len(),
                cols,
                tasks: tasks.len(),
                workers: workers.len(),
            });
        }
        let flat = table.into_iter().flatten().collect();
        Self::build(tasks, workers, Metric::Table(flat))
    }

    fn build(tasks: Vec<Task>, workers: Vec<Worker>, metric: Metric) -> Result<Self, ModelError> {
        let mut seen = std::collections::HashSet::new();
        for t in &tasks {
            if !seen.insert(t.id) {
                return Err(ModelError::DuplicateId {
                    kind: "task",
                    id: t.id,
                });
            }
            if !(t.value.is_finite() && t.value >= 0.0) {
                return Err(ModelError::InvalidValue {
                    id: t.id,
                    value: t.value,
                });
            }
        }
        seen.clear();
        for w in &workers {
            if !seen.insert(w.id) {
                return Err(ModelError::DuplicateId {
                    kind: "worker",
                    id: w.id,
                });
            }
            if !(w.radius.is_finite() && w.radius > 0.0) {
                return Err(ModelError::InvalidRadius {
                    id: w.id,
                    radius: w.radius,
                });
            }
        }

        let mut inst = Self {
            reach: vec![Vec::new(); workers.len()],
            covering: vec![Vec::new(); tasks.len()],
            tasks,
            workers,
            metric,
        };
        for j in 0..inst.workers.len() {
            for i in 0..inst.tasks.len() {
                if inst.distance(i, j) <= inst.workers[j].radius {
                    inst.reach[j].push(i);
                    inst.covering[i].push(j);
                }
            }
        }
        Ok(inst)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    pub fn task(&self, i: TaskIdx) -> &Task {
        &self.tasks[i]
    }

    pub fn worker(&self, j: WorkerIdx) -> &Worker {
        &self.workers[j]
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    /// True distance `d_{i,j}`.
    pub fn distance(&self, i: TaskIdx, j: WorkerIdx) -> f64 {
        match &self.metric {
            Metric::Euclidean => distance(&self.tasks[i], &self.workers[j]),
            Metric::Table(flat) => flat[i * self.workers.len() + j],
        }
    }

    /// Tasks inside worker `j`'s service area, ascending.
    pub fn reach(&self, j: WorkerIdx) -> &[TaskIdx] {
        &self.reach[j]
    }

    /// Workers whose service area contains task `i`, ascending.
    pub fn covering(&self, i: TaskIdx) -> &[WorkerIdx] {
        &self.covering[i]
    }

    pub fn in_reach(&self, i: TaskIdx, j: WorkerIdx) -> bool {
        self.distance(i, j) <= self.workers[j].radius
    }

    /// Number of reachable task-worker pairs.
    pub fn num_pairs(&self) -> usize {
        self.reach.iter().map(Vec::len).sum()
    }
}

/// Utility of worker `j` serving task `i` after spending `spent_budget`:
/// `v_i - f_d(d_{i,j}) - f_p(spent)`.
pub fn true_utility(
    instance: &Instance,
    vf: &ValueFunctions,
    i: TaskIdx,
    j: WorkerIdx,
    spent_budget: f64,
) -> Result<f64, ModelError> {
    if !instance.in_reach(i, j) {
        return Err(ModelError::OutOfReach { task: i, worker: j });
    }
    Ok(instance.task(i).value
        - vf.distance_cost(instance.distance(i, j))
        - vf.privacy_cost(spent_budget))
}

/// One-to-one allocation of tasks to workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchState {
    allocation: Vec<Option<WorkerIdx>>,
    matched_task: Vec<Option<TaskIdx>>,
}

impl MatchState {
    pub fn new(num_tasks: usize, num_workers: usize) -> Self {
        Self {
            allocation: vec![None; num_tasks],
            matched_task: vec![None; num_workers],
        }
    }

    pub fn for_instance(instance: &Instance) -> Self {
        Self::new(instance.num_tasks(), instance.num_workers())
    }

    pub fn worker_of(&self, i: TaskIdx) -> Option<WorkerIdx> {
        self.allocation[i]
    }

    pub fn task_of(&self, j: WorkerIdx) -> Option<TaskIdx> {
        self.matched_task[j]
    }

    pub fn allocation(&self) -> &[Option<WorkerIdx>] {
        &self.allocation
    }

    /// Puts `j` on `i`, releasing whatever either side held before.
    pub fn assign(&mut self, i: TaskIdx, j: WorkerIdx) {
        if let Some(prev_task) = self.matched_task[j] {
            self.allocation[prev_task] = None;
        }
        if let Some(prev_worker) = self.allocation[i] {
            self.matched_task[prev_worker] = None;
        }
        self.allocation[i] = Some(j);
        self.matched_task[j] = Some(i);
    }

    pub fn unassign_task(&mut self, i: TaskIdx) -> Option<WorkerIdx> {
        let prev = self.allocation[i].take();
        if let Some(j) = prev {
            self.matched_task[j] = None;
        }
        prev
    }

    /// Matched `(task, worker)` pairs in task order.
    pub fn pairs(&self) -> impl Iterator<Item = (TaskIdx, WorkerIdx)> + '_ {
        self.allocation
            .iter()
            .enumerate()
            .filter_map(|(i, w)| w.map(|j| (i, j)))
    }

    pub fn len(&self) -> usize {
        self.allocation.iter().filter(|w| w.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Both index directions agree and no worker is used twice.
    pub fn is_consistent(&self) -> bool {
        let mut used = vec![false; self.matched_task.len()];
        for (i, j) in self.pairs() {
            if j >= used.len() || used[j] || self.matched_task[j] != Some(i) {
                return false;
            }
            used[j] = true;
        }
        self.matched_task
            .iter()
            .enumerate()
            .all(|(j, t)| t.is_none_or(|i| self.allocation.get(i) == Some(&Some(j))))
    }
}

/// Platform objective: matched value minus distance cost, minus the privacy cost
/// of every budget any worker has spent (matched or not).
pub fn objective_value(
    instance: &Instance,
    vf: &ValueFunctions,
    matching: &MatchState,
    ledger: &LdpLedger,
) -> f64 {
    let matched: f64 = matching
        .pairs()
        .map(|(i, j)| instance.task(i).value - vf.distance_cost(instance.distance(i, j)))
        .sum();
    matched - vf.privacy_cost(ledger.total_spent())
}

/// Sum of `v_i - f_d(d_{i,j})` over matched pairs, ignoring privacy cost.
pub fn matched_value(instance: &Instance, vf: &ValueFunctions, matching: &MatchState) -> f64 {
    matching
        .pairs()
        .map(|(i, j)| instance.task(i).value - vf.distance_cost(instance.distance(i, j)))
        .sum()
}
