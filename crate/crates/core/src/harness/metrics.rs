use std::ops::AddAssign;

use crate::baselines::RunOutcome;
use crate::model::{Instance, ValueFunctions};

/// Sums over the matched pairs of one or more batches, measured with true distances.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub matched: usize,
    pub utility: f64,
    pub distance: f64,
}

impl BatchStats {
    /// Utility of a pair is `v - alpha*d - beta*(worker's total committed budget)`.
    pub fn of(outcome: &RunOutcome, instance: &Instance, vf: &ValueFunctions) -> Self {
        let mut s = Self::default();
        for (i, j) in outcome.matching.pairs() {
            let d = instance.distance(i, j);
            s.matched += 1;
            s.distance += d;
            s.utility += instance.task(i).value
                - vf.distance_cost(d)
                - vf.privacy_cost(outcome.ledger.worker_spent(j));
        }
        s
    }

    pub fn avg_utility(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.utility / self.matched as f64)
    }

    pub fn avg_distance(&self) -> Option<f64> {
        (self.matched > 0).then(|| self.distance / self.matched as f64)
    }
}

impl AddAssign for BatchStats {
    fn add_assign(&mut self, rhs: Self) {
        self.matched += rhs.matched;
        self.utility += rhs.utility;
        self.distance += rhs.distance;
    }
}

/// Measures of a private run against its non-private counterpart. Averages are
/// `None` when nothing was matched, deviations when their denominator is zero or
/// undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub matched: usize,
    pub u_avg: Option<f64>,
    pub u_rd: Option<f64>,
    pub d_avg: Option<f64>,
    pub d_rd: Option<f64>,
}

impl Metrics {
    pub fn from_stats(private: &BatchStats, nonprivate: &BatchStats) -> Self {
        let (u_p, u_np) = (private.avg_utility(), nonprivate.avg_utility());
        let (d_p, d_np) = (private.avg_distance(), nonprivate.avg_distance());
        let rd = |num: Option<f64>, den: Option<f64>| match (num, den) {
            (Some(n), Some(d)) if d != 0.0 => Some(n / d),
            _ => None,
        };
        Self {
            matched: private.matched,
            u_avg: u_p,
            u_rd: rd(u_np.zip(u_p).map(|(np, p)| np - p), u_np),
            d_avg: d_p,
            d_rd: rd(d_p.zip(d_np).map(|(p, np)| p - np), d_np),
        }
    }
}

pub fn compute_metrics(
    private: &RunOutcome,
    nonprivate: &RunOutcome,
    instance: &Instance,
    vf: &ValueFunctions,
) -> Metrics {
    Metrics::from_stats(
        &BatchStats::of(private, instance, vf),
        &BatchStats::of(nonprivate, instance, vf),
    )
}
