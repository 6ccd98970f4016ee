//! Synthetic traffic: sending patterns and flow size/deadline models.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::NodeId;
use crate::pdq::criticality::CriticalityMode;
use crate::time::SimTime;
use crate::topology::Topology;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u64,
    /// Absolute deadline.
    pub deadline: Option<SimTime>,
    pub start: SimTime,
    #[serde(default)]
    pub criticality: CriticalityMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    #[default]
    Aggregation,
    Stride,
    Staggered,
    Permutation,
    Scenario1,
    Scenario2,
    Explicit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeModel {
    /// Uniform 2..198 KB with exponential deadlines.
    #[default]
    Deadline,
    /// Uniform with the configured mean, no deadline.
    Uniform,
    /// Every flow has `fixed_bytes`, no deadline.
    Fixed,
}

/// A hand-written flow in an explicit workload; times in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitFlow {
    pub src: u32,
    pub dst: u32,
    pub size: u64,
    #[serde(default)]
    pub start_ms: f64,
    #[serde(default)]
    pub deadline_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    pub pattern: Pattern,
    /// Aggregation: total flows. Stride, staggered, permutation: flows per host.
    /// `scenario1`: number of flows.
    pub flows: usize,
    /// Host index of the aggregator; defaults to the last host.
    pub aggregator: Option<usize>,
    pub stride: usize,
    /// Staggered: probability of staying inside the rack.
    pub p: f64,
    pub sizes: SizeModel,
    pub mean_size_kb: f64,
    pub fixed_bytes: u64,
    pub deadline_mean_ms: f64,
    pub deadline_min_ms: f64,
    pub start_ms: f64,
    /// `scenario2` parameters.
    pub long_flow_bytes: u64,
    pub short_flows: usize,
    pub short_bytes: u64,
    pub burst_ms: f64,
    pub explicit: Vec<ExplicitFlow>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            pattern: Pattern::Aggregation,
            flows: 10,
            aggregator: None,
            stride: 1,
            p: 0.5,
            sizes: SizeModel::Deadline,
            mean_size_kb: 100.0,
            fixed_bytes: 1_000_000,
            deadline_mean_ms: 20.0,
            deadline_min_ms: 3.0,
            start_ms: 0.0,
            long_flow_bytes: 3_000_000,
            short_flows: 50,
            short_bytes: 20_000,
            burst_ms: 10.0,
            explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("staggered probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("pattern needs at least {needed} hosts, topology has {have}")]
    TooFewHosts { needed: usize, have: usize },
    #[error("host index {0} out of range")]
    HostIndex(usize),
    #[error("mean size {0} KB is below the 2 KB minimum")]
    MeanSize(f64),
    #[error("explicit flow {0}: {1}")]
    Explicit(usize, &'static str),
}

const KB: u64 = 1000;

impl WorkloadConfig {
    fn sample_size_deadline<R: Rng + ?Sized>(&self, rng: &mut R, start: SimTime) -> (u64, Option<SimTime>) {
        match self.sizes {
            SizeModel::Deadline => {
                let size = rng.random_range(2 * KB..=198 * KB);
                let exp = Exp::new(1.0 / self.deadline_mean_ms).expect("positive mean");
                let d_ms = exp.sample(rng).max(self.deadline_min_ms);
                (size, Some(start + SimTime::from_secs_f64(d_ms / 1e3)))
            }
            SizeModel::Uniform => {
                let mean = (self.mean_size_kb * KB as f64).round() as u64;
                (rng.random_range(2 * KB..=2 * mean - 2 * KB), None)
            }
            SizeModel::Fixed => (self.fixed_bytes, None),
        }
    }

    fn validate(&self, n_hosts: usize) -> Result<(), WorkloadError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(WorkloadError::Probability(self.p));
        }
        if self.sizes == SizeModel::Uniform && self.mean_size_kb < 2.0 {
            return Err(WorkloadError::MeanSize(self.mean_size_kb));
        }
        if let Some(a) = self.aggregator {
            if a >= n_hosts {
                return Err(WorkloadError::HostIndex(a));
            }
        }
        let needed = match self.pattern {
            Pattern::Scenario1 => self.flows + 1,
            Pattern::Scenario2 => self.short_flows + 2,
            Pattern::Explicit => 0,
            _ => 2,
        };
        if n_hosts < needed {
            return Err(WorkloadError::TooFewHosts { needed, have: n_hosts });
        }
        Ok(())
    }

    /// Generates the flow list. Same config, topology and rng state give the same list.
    pub fn generate<R: Rng + ?Sized>(&self, topo: &Topology, rng: &mut R) -> Result<Vec<FlowSpec>, WorkloadError> {
        let hosts = topo.hosts();
        self.validate(hosts.len())?;
        let start = SimTime::from_secs_f64(self.start_ms / 1e3);
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        match self.pattern {
            Pattern::Aggregation => {
                let agg = hosts[self.aggregator.unwrap_or(hosts.len() - 1)];
                let mut senders: Vec<NodeId> = hosts.iter().copied().filter(|&h| h != agg).collect();
                senders.shuffle(rng);
                for i in 0..self.flows {
                    pairs.push((senders[i % senders.len()], agg));
                }
            }
            Pattern::Stride => {
                let n = hosts.len();
                for (x, &h) in hosts.iter().enumerate() {
                    let dst = hosts[(x + self.stride) % n];
                    if dst != h {
                        pairs.extend(std::iter::repeat_n((h, dst), self.flows));
                    }
                }
            }
            Pattern::Staggered => {
                for &h in &hosts {
                    let local: Vec<NodeId> = hosts
                        .iter()
                        .copied()
                        .filter(|&o| o != h && topo.rack_of(o) == topo.rack_of(h))
                        .collect();
                    let remote: Vec<NodeId> = hosts
                        .iter()
                        .copied()
                        .filter(|&o| o != h && topo.rack_of(o) != topo.rack_of(h))
                        .collect();
                    for _ in 0..self.flows {
                        let stay = rng.random_bool(self.p);
                        let pool = match (stay, local.is_empty(), remote.is_empty()) {
                            (true, false, _) | (false, _, true) => &local,
                            _ => &remote,
                        };
                        pairs.push((h, pool[rng.random_range(0..pool.len())]));
                    }
                }
            }
            Pattern::Permutation => {
                let perm = derangement(hosts.len(), rng);
                for (i, &h) in hosts.iter().enumerate() {
                    pairs.extend(std::iter::repeat_n((h, hosts[perm[i]]), self.flows));
                }
            }
            Pattern::Scenario1 => {
                let dst = *hosts.last().unwrap();
                let mut out = Vec::new();
                for i in 0..self.flows {
                    out.push(FlowSpec {
                        id: i as u64,
                        src: hosts[i],
                        dst,
                        // larger index, slightly larger flow, less critical
                        size: 1_000_000 + i as u64 * KB,
                        deadline: None,
                        start,
                        criticality: CriticalityMode::Exact,
                    });
                }
                return Ok(out);
            }
            Pattern::Scenario2 => {
                let dst = *hosts.last().unwrap();
                let burst = SimTime::from_secs_f64(self.burst_ms / 1e3);
                let mut out = vec![FlowSpec {
                    id: 0,
                    src: hosts[0],
                    dst,
                    size: self.long_flow_bytes,
                    deadline: None,
                    start,
                    criticality: CriticalityMode::Exact,
                }];
                let jitter = (self.short_bytes / 100).max(1);
                for i in 0..self.short_flows {
                    let size = rng.random_range(self.short_bytes - jitter..=self.short_bytes + jitter);
                    out.push(FlowSpec {
                        id: i as u64 + 1,
                        src: hosts[i + 1],
                        dst,
                        size,
                        deadline: None,
                        start: burst,
                        criticality: CriticalityMode::Exact,
                    });
                }
                return Ok(out);
            }
            Pattern::Explicit => {
                let mut out = Vec::new();
                for (i, f) in self.explicit.iter().enumerate() {
                    let src = *hosts.get(f.src as usize).ok_or(WorkloadError::Explicit(i, "unknown src host"))?;
                    let dst = *hosts.get(f.dst as usize).ok_or(WorkloadError::Explicit(i, "unknown dst host"))?;
                    if src == dst {
                        return Err(WorkloadError::Explicit(i, "src equals dst"));
                    }
                    if f.size == 0 {
                        return Err(WorkloadError::Explicit(i, "size must be positive"));
                    }
                    let start = SimTime::from_secs_f64(f.start_ms / 1e3);
                    let deadline = f.deadline_ms.map(|d| SimTime::from_secs_f64(d / 1e3));
                    if deadline.is_some_and(|d| d <= start) {
                        return Err(WorkloadError::Explicit(i, "deadline must follow start"));
                    }
                    out.push(FlowSpec {
                        id: i as u64,
                        src,
                        dst,
                        size: f.size,
                        deadline,
                        start,
                        criticality: CriticalityMode::Exact,
                    });
                }
                return Ok(out);
            }
        }
        Ok(pairs
            .into_iter()
            .enumerate()
            .map(|(i, (src, dst))| {
                let (size, deadline) = self.sample_size_deadline(rng, start);
                FlowSpec {
                    id: i as u64,
                    src,
                    dst,
                    size,
                    deadline,
                    start,
                    criticality: CriticalityMode::Exact,
                }
            })
            .collect())
    }
}

/// A uniformly random permutation of `0..n` with no fixed point (n >= 2).
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    assert!(n >= 2, "derangement needs at least two elements");
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &v)| i != v) {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::link::LinkParams;
    use crate::topology::{build_single_bottleneck, build_single_rooted_tree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree() -> Topology {
        build_single_rooted_tree(LinkParams::default())
    }

    #[test]
    fn aggregation_balances_senders() {
        let cfg = WorkloadConfig { flows: 25, ..WorkloadConfig::default() };
        let flows = cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(flows.len(), 25);
        let mut per_sender = std::collections::BTreeMap::new();
        for f in &flows {
            assert_eq!(f.dst, NodeId(11));
            *per_sender.entry(f.src).or_insert(0) += 1;
        }
        // 25 flows over 11 senders: 2 or 3 each
        assert_eq!(per_sender.len(), 11);
        assert!(per_sender.values().all(|&c| c == 2 || c == 3));
    }

    #[test]
    fn permutation_is_a_derangement() {
        let cfg = WorkloadConfig {
            pattern: Pattern::Permutation,
            flows: 1,
            ..WorkloadConfig::default()
        };
        let flows = cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(flows.len(), 12);
        let mut dsts: Vec<NodeId> = flows.iter().map(|f| f.dst).collect();
        assert!(flows.iter().all(|f| f.src != f.dst));
        dsts.sort();
        dsts.dedup();
        assert_eq!(dsts.len(), 12);
    }

    #[test]
    fn stride_targets() {
        let cfg = WorkloadConfig {
            pattern: Pattern::Stride,
            stride: 3,
            flows: 1,
            ..WorkloadConfig::default()
        };
        let flows = cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for f in flows {
            assert_eq!(f.dst.0, (f.src.0 + 3) % 12);
        }
    }

    #[test]
    fn staggered_extremes() {
        let t = tree();
        for (p, local) in [(1.0, true), (0.0, false)] {
            let cfg = WorkloadConfig {
                pattern: Pattern::Staggered,
                p,
                flows: 3,
                ..WorkloadConfig::default()
            };
            for f in cfg.generate(&t, &mut ChaCha8Rng::seed_from_u64(4)).unwrap() {
                assert_eq!(t.rack_of(f.src) == t.rack_of(f.dst), local);
            }
        }
        let bad = WorkloadConfig { pattern: Pattern::Staggered, p: 1.5, ..WorkloadConfig::default() };
        assert_eq!(bad.generate(&t, &mut ChaCha8Rng::seed_from_u64(4)), Err(WorkloadError::Probability(1.5)));
    }

    #[test]
    fn deadlines_respect_floor() {
        let cfg = WorkloadConfig { flows: 2000, ..WorkloadConfig::default() };
        let flows = cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for f in &flows {
            let d = f.deadline.unwrap();
            assert!(d >= f.start + SimTime::from_millis(3));
            assert!((2000..=198_000).contains(&f.size));
        }
    }

    #[test]
    fn scenario1_order() {
        let t = build_single_bottleneck(5, LinkParams::default()).unwrap();
        let cfg = WorkloadConfig { pattern: Pattern::Scenario1, flows: 5, ..WorkloadConfig::default() };
        let flows = cfg.generate(&t, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(flows.len(), 5);
        assert!(flows.windows(2).all(|w| w[0].size < w[1].size));
        assert!(flows.iter().all(|f| f.dst == NodeId(5)));
    }

    #[test]
    fn scenario2_burst() {
        let t = build_single_bottleneck(51, LinkParams::default()).unwrap();
        let cfg = WorkloadConfig { pattern: Pattern::Scenario2, ..WorkloadConfig::default() };
        let flows = cfg.generate(&t, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(flows.len(), 51);
        for f in &flows[1..] {
            assert_eq!(f.start, SimTime::from_millis(10));
            assert!((19_800..=20_200).contains(&f.size));
        }
    }

    #[test]
    fn same_seed_same_flows() {
        let cfg = WorkloadConfig { flows: 30, ..WorkloadConfig::default() };
        let a = cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explicit_validation() {
        let cfg = WorkloadConfig {
            pattern: Pattern::Explicit,
            explicit: vec![ExplicitFlow { src: 0, dst: 0, size: 10, start_ms: 0.0, deadline_ms: None }],
            ..WorkloadConfig::default()
        };
        assert!(matches!(
            cfg.generate(&tree(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(WorkloadError::Explicit(0, _))
        ));
    }
}
