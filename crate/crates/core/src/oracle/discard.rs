//! Minimum-discard deadline scheduling on one bottleneck (Moore–Hodgson).

/// A job on a single machine, all released at time zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Job {
    pub processing: f64,
    pub deadline: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscardPlan {
    /// Kept jobs in EDF order; all of them finish on time.
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    /// Completion time of each kept job, parallel to `kept`.
    pub completion: Vec<f64>,
}

impl DiscardPlan {
    pub fn on_time_fraction(&self) -> f64 {
        let n = self.kept.len() + self.discarded.len();
        if n == 0 {
            1.0
        } else {
            self.kept.len() as f64 / n as f64
        }
    }
}

const SLACK: f64 = 1e-9;

fn edf_order(jobs: &[Job]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| {
        jobs[a]
            .deadline
            .total_cmp(&jobs[b].deadline)
            .then(jobs[a].processing.total_cmp(&jobs[b].processing))
            .then(a.cmp(&b))
    });
    order
}

/// Keeps a maximum number of jobs that can all meet their deadlines.
///
/// Walk jobs in EDF order; whenever the running total overshoots the
/// current deadline, drop the longest job kept so far.
pub fn optimal_deadline_discard(jobs: &[Job]) -> DiscardPlan {
    let mut kept: Vec<usize> = Vec::new();
    let mut discarded = Vec::new();
    let mut total = 0.0;
    for i in edf_order(jobs) {
        kept.push(i);
        total += jobs[i].processing;
        if total > jobs[i].deadline + SLACK * jobs[i].deadline.abs().max(1.0) {
            let (pos, _) = kept
                .iter()
                .enumerate()
                .max_by(|(_, &a), (_, &b)| jobs[a].processing.total_cmp(&jobs[b].processing).then(b.cmp(&a)))
                .expect("just pushed");
            let out = kept.remove(pos);
            total -= jobs[out].processing;
            discarded.push(out);
        }
    }
    discarded.sort_unstable();
    let mut t = 0.0;
    let completion = kept
        .iter()
        .map(|&i| {
            t += jobs[i].processing;
            t
        })
        .collect();
    DiscardPlan { kept, discarded, completion }
}

/// Whether every job in `set` meets its deadline when run in EDF order.
pub fn feasible(jobs: &[Job], set: &[usize]) -> bool {
    let sub: Vec<Job> = set.iter().map(|&i| jobs[i]).collect();
    let mut t = 0.0;
    edf_order(&sub).into_iter().all(|k| {
        t += sub[k].processing;
        t <= sub[k].deadline + SLACK * sub[k].deadline.abs().max(1.0)
    })
}

/// Largest on-time subset size by exhaustive search; for checking only.
pub fn brute_force_max_on_time(jobs: &[Job]) -> usize {
    assert!(jobs.len() <= 20, "exhaustive search over {} jobs", jobs.len());
    let n = jobs.len();
    (0u32..1 << n)
        .filter(|mask| {
            let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            feasible(jobs, &set)
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loose_deadlines_keep_everything() {
        let jobs = vec![
            Job { processing: 1.0, deadline: 10.0 },
            Job { processing: 2.0, deadline: 10.0 },
        ];
        let p = optimal_deadline_discard(&jobs);
        assert!(p.discarded.is_empty());
        assert_eq!(p.on_time_fraction(), 1.0);
    }

    #[test]
    fn capacity_forces_one_discard() {
        let jobs = vec![Job { processing: 1.0, deadline: 1.0 }; 2];
        let p = optimal_deadline_discard(&jobs);
        assert_eq!(p.kept.len(), 1);
        assert_eq!(p.discarded.len(), 1);
    }

    #[test]
    fn long_job_is_the_one_dropped() {
        let jobs = vec![
            Job { processing: 3.0, deadline: 3.0 },
            Job { processing: 1.0, deadline: 3.5 },
            Job { processing: 1.0, deadline: 4.0 },
        ];
        let p = optimal_deadline_discard(&jobs);
        assert_eq!(p.discarded, vec![0]);
        assert_eq!(p.completion, vec![1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            raw in proptest::collection::vec((0.1f64..3.0, 0.5f64..12.0), 0..=12)
        ) {
            let jobs: Vec<Job> = raw.iter().map(|&(p, d)| Job { processing: p, deadline: d }).collect();
            let plan = optimal_deadline_discard(&jobs);
            prop_assert!(feasible(&jobs, &plan.kept));
            prop_assert_eq!(plan.kept.len(), brute_force_max_on_time(&jobs));
            prop_assert_eq!(plan.kept.len() + plan.discarded.len(), jobs.len());
        }
    }
}
