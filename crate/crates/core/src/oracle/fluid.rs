//! Fluid reference schedules: rates change only at arrivals, completions,
//! discards and optional periodic ticks.

use std::cmp::Ordering;

use crate::baselines::d3::{fair_share, grant};

/// A flow in a fluid model. Units are arbitrary but consistent: `size` is
/// in capacity × time.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidFlow {
    pub size: f64,
    pub release: f64,
    pub deadline: Option<f64>,
    pub max_rate: f64,
    /// Indices into the capacity vector.
    pub links: Vec<usize>,
}

impl FluidFlow {
    pub fn new(size: f64, deadline: Option<f64>, links: Vec<usize>) -> Self {
        FluidFlow {
            size,
            release: 0.0,
            deadline,
            max_rate: f64::INFINITY,
            links,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluidPolicy {
    /// Max-min fair sharing.
    FairSharing,
    /// Smallest remaining size first, preemptive.
    Sjf,
    /// Earliest deadline first, preemptive; flows without deadline last.
    Edf,
    /// Greedy by criticality: deadline, then remaining size over max rate.
    CentralizedPdq,
    /// First come first reserve in release order.
    D3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidOptions {
    pub policy: FluidPolicy,
    /// Recompute rates at least this often.
    pub tick: Option<f64>,
    /// Drop a deadline flow once it can no longer finish in time.
    pub early_termination: bool,
    /// Stop simulating here even if flows are left.
    pub horizon: f64,
}

impl FluidOptions {
    pub fn new(policy: FluidPolicy) -> Self {
        FluidOptions {
            policy,
            tick: None,
            early_termination: false,
            horizon: f64::INFINITY,
        }
    }
}

/// Rates of every flow over `[start, end)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub rates: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FluidSchedule {
    pub segments: Vec<Segment>,
    pub completion: Vec<Option<f64>>,
    pub discarded: Vec<bool>,
}

impl FluidSchedule {
    /// Mean of completion minus release over completed flows.
    pub fn mean_fct(&self, flows: &[FluidFlow]) -> f64 {
        let fcts: Vec<f64> = self
            .completion
            .iter()
            .zip(flows)
            .filter_map(|(c, f)| c.map(|c| c - f.release))
            .collect();
        fcts.iter().sum::<f64>() / fcts.len().max(1) as f64
    }

    pub fn meets_deadline(&self, flows: &[FluidFlow], i: usize) -> bool {
        match (self.completion[i], flows[i].deadline) {
            (Some(c), Some(d)) => c <= d + 1e-9 * d.abs().max(1.0),
            (Some(_), None) => true,
            (None, _) => false,
        }
    }

    pub fn deadlines_met(&self, flows: &[FluidFlow]) -> usize {
        (0..flows.len())
            .filter(|&i| flows[i].deadline.is_some() && self.meets_deadline(flows, i))
            .count()
    }

    /// Checks that no link is ever loaded beyond capacity and no flow
    /// exceeds its maximum rate.
    pub fn is_feasible(&self, flows: &[FluidFlow], capacity: &[f64]) -> bool {
        self.segments.iter().all(|s| {
            let mut load = vec![0.0; capacity.len()];
            for (f, &r) in flows.iter().zip(&s.rates) {
                if r < 0.0 || r > f.max_rate * (1.0 + 1e-9) {
                    return false;
                }
                for &l in &f.links {
                    load[l] += r;
                }
            }
            load.iter().zip(capacity).all(|(x, c)| *x <= c * (1.0 + 1e-9) + 1e-12)
        })
    }
}

/// Max-min fair rates by progressive filling.
pub fn max_min_rates(flows: &[FluidFlow], active: &[usize], capacity: &[f64]) -> Vec<f64> {
    let mut rate = vec![0.0; flows.len()];
    let mut left = capacity.to_vec();
    let mut unfrozen: Vec<usize> = active.to_vec();
    while !unfrozen.is_empty() {
        let mut users = vec![0usize; capacity.len()];
        for &i in &unfrozen {
            for &l in &flows[i].links {
                users[l] += 1;
            }
        }
        // largest equal increment before some link fills or some flow caps
        let mut inc = f64::INFINITY;
        for (l, &u) in users.iter().enumerate() {
            if u > 0 {
                inc = inc.min(left[l].max(0.0) / u as f64);
            }
        }
        for &i in &unfrozen {
            inc = inc.min(flows[i].max_rate - rate[i]);
        }
        if !inc.is_finite() {
            // no link constrains these flows and they have no cap
            break;
        }
        for &i in &unfrozen {
            rate[i] += inc;
            for &l in &flows[i].links {
                left[l] -= inc;
            }
        }
        let tol = |c: f64| 1e-12 * c.max(1.0);
        unfrozen.retain(|&i| {
            let capped = rate[i] >= flows[i].max_rate - tol(flows[i].max_rate);
            let blocked = flows[i].links.iter().any(|&l| left[l] <= tol(capacity[l]));
            !capped && !blocked
        });
    }
    rate
}

/// Strict priority: flows in `order` each take everything left on their path.
pub fn greedy_rates(flows: &[FluidFlow], order: &[usize], capacity: &[f64]) -> Vec<f64> {
    let mut rate = vec![0.0; flows.len()];
    let mut left = capacity.to_vec();
    for &i in order {
        let avail = flows[i].links.iter().map(|&l| left[l]).fold(flows[i].max_rate, f64::min);
        let r = avail.max(0.0);
        rate[i] = r;
        for &l in &flows[i].links {
            left[l] -= r;
        }
    }
    rate
}

/// D3 grants in `order`, each link handing out what is left to each request.
pub fn d3_rates(flows: &[FluidFlow], order: &[usize], remaining: &[f64], now: f64, capacity: &[f64]) -> Vec<f64> {
    let desired: Vec<f64> = (0..flows.len())
        .map(|i| match flows[i].deadline {
            Some(d) if d > now => remaining[i] / (d - now),
            _ => 0.0,
        })
        .collect();
    let mut demand = vec![0.0; capacity.len()];
    let mut count = vec![0usize; capacity.len()];
    for &i in order {
        for &l in &flows[i].links {
            demand[l] += desired[i];
            count[l] += 1;
        }
    }
    let fs: Vec<f64> = (0..capacity.len()).map(|l| fair_share(capacity[l], demand[l], count[l])).collect();
    let mut left = capacity.to_vec();
    let mut rate = vec![0.0; flows.len()];
    for &i in order {
        let r = flows[i]
            .links
            .iter()
            .map(|&l| grant(left[l], desired[i], fs[l]))
            .fold(flows[i].max_rate, f64::min);
        rate[i] = r;
        for &l in &flows[i].links {
            left[l] -= r;
        }
    }
    rate
}

fn cmp_deadline(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Remaining size over maximum rate; just the size for uncapped flows.
fn expected_time(f: &FluidFlow, remaining: f64) -> f64 {
    if f.max_rate.is_finite() {
        remaining / f.max_rate
    } else {
        remaining
    }
}

fn priority_order(policy: FluidPolicy, flows: &[FluidFlow], active: &[usize], remaining: &[f64]) -> Vec<usize> {
    let mut order = active.to_vec();
    match policy {
        FluidPolicy::Sjf => order.sort_by(|&a, &b| remaining[a].total_cmp(&remaining[b]).then(a.cmp(&b))),
        FluidPolicy::Edf => order.sort_by(|&a, &b| {
            cmp_deadline(flows[a].deadline, flows[b].deadline)
                .then(remaining[a].total_cmp(&remaining[b]))
                .then(a.cmp(&b))
        }),
        FluidPolicy::CentralizedPdq => order.sort_by(|&a, &b| {
            let ta = expected_time(&flows[a], remaining[a]);
            let tb = expected_time(&flows[b], remaining[b]);
            cmp_deadline(flows[a].deadline, flows[b].deadline)
                .then(ta.total_cmp(&tb))
                .then(a.cmp(&b))
        }),
        FluidPolicy::D3 => order.sort_by(|&a, &b| flows[a].release.total_cmp(&flows[b].release).then(a.cmp(&b))),
        FluidPolicy::FairSharing => {}
    }
    order
}

/// Rates the policy assigns to the `active` flows at time `now`.
pub fn policy_rates(
    policy: FluidPolicy,
    flows: &[FluidFlow],
    active: &[usize],
    remaining: &[f64],
    now: f64,
    capacity: &[f64],
) -> Vec<f64> {
    match policy {
        FluidPolicy::FairSharing => max_min_rates(flows, active, capacity),
        FluidPolicy::D3 => d3_rates(flows, &priority_order(policy, flows, active, remaining), remaining, now, capacity),
        _ => greedy_rates(flows, &priority_order(policy, flows, active, remaining), capacity),
    }
}

/// Simulates the flows under `opts`, with D3 serving requests in the
/// given order of equal release times (flow index order).
pub fn simulate(flows: &[FluidFlow], capacity: &[f64], opts: &FluidOptions) -> FluidSchedule {
    let n = flows.len();
    let mut remaining: Vec<f64> = flows.iter().map(|f| f.size).collect();
    let mut completion = vec![None; n];
    let mut discarded = vec![false; n];
    let mut admitted = vec![false; n];
    let mut segments = Vec::new();
    let mut now = flows.iter().map(|f| f.release).fold(f64::INFINITY, f64::min);
    if !now.is_finite() {
        return FluidSchedule { segments, completion, discarded };
    }
    let eps_t = |t: f64| 1e-12 * t.abs().max(1.0);
    let mut next_tick = now;
    loop {
        for i in 0..n {
            if !admitted[i] && flows[i].release <= now + eps_t(now) {
                admitted[i] = true;
                if flows[i].size <= 0.0 {
                    completion[i] = Some(now);
                }
            }
        }
        let is_live = |i: usize, c: &[Option<f64>], d: &[bool]| admitted[i] && c[i].is_none() && !d[i];
        if opts.early_termination {
            for i in 0..n {
                if !is_live(i, &completion, &discarded) {
                    continue;
                }
                if let Some(d) = flows[i].deadline {
                    if now > d + eps_t(d) || now + remaining[i] / flows[i].max_rate > d + eps_t(d) {
                        discarded[i] = true;
                    }
                }
            }
        }
        let active: Vec<usize> = (0..n).filter(|&i| is_live(i, &completion, &discarded)).collect();
        let next_release = flows
            .iter()
            .enumerate()
            .filter(|(i, _)| !admitted[*i])
            .map(|(_, f)| f.release)
            .fold(f64::INFINITY, f64::min);
        if active.is_empty() && !next_release.is_finite() {
            break;
        }
        if now >= opts.horizon {
            break;
        }
        let rates = policy_rates(opts.policy, flows, &active, &remaining, now, capacity);
        // only instants strictly after `now` count, so every round advances
        let mut next = f64::INFINITY;
        let mut consider = |t: f64| {
            if t > now && t < next {
                next = t;
            }
        };
        consider(next_release);
        consider(opts.horizon);
        if let Some(tick) = opts.tick {
            while next_tick <= now {
                next_tick += tick;
            }
            consider(next_tick);
        }
        let mut done_now = Vec::new();
        for &i in &active {
            if rates[i] > 0.0 {
                let t = now + remaining[i] / rates[i];
                if t > now {
                    consider(t);
                } else {
                    done_now.push(i);
                }
            }
            if opts.early_termination {
                if let Some(d) = flows[i].deadline {
                    let slack = d - now - remaining[i] / flows[i].max_rate;
                    let drift = 1.0 - rates[i] / flows[i].max_rate;
                    if drift > 1e-12 && slack > 0.0 {
                        consider(now + slack / drift);
                    }
                    consider(d);
                }
            }
        }
        for &i in &done_now {
            remaining[i] = 0.0;
            completion[i] = Some(now);
        }
        if !done_now.is_empty() {
            continue;
        }
        if !next.is_finite() {
            // live flows that can never progress
            break;
        }
        let dt = next - now;
        for &i in &active {
            remaining[i] -= rates[i] * dt;
            if remaining[i] <= 1e-9 * flows[i].size {
                remaining[i] = 0.0;
                completion[i] = Some(next);
            }
        }
        segments.push(Segment { start: now, end: next, rates });
        now = next;
    }
    FluidSchedule { segments, completion, discarded }
}

pub fn fluid_fair_sharing(flows: &[FluidFlow], capacity: &[f64]) -> FluidSchedule {
    simulate(flows, capacity, &FluidOptions::new(FluidPolicy::FairSharing))
}

pub fn fluid_sjf(flows: &[FluidFlow], capacity: &[f64]) -> FluidSchedule {
    simulate(flows, capacity, &FluidOptions::new(FluidPolicy::Sjf))
}

pub fn fluid_edf(flows: &[FluidFlow], capacity: &[f64]) -> FluidSchedule {
    simulate(flows, capacity, &FluidOptions::new(FluidPolicy::Edf))
}

pub fn centralized_pdq_schedule(flows: &[FluidFlow], capacity: &[f64]) -> FluidSchedule {
    simulate(flows, capacity, &FluidOptions::new(FluidPolicy::CentralizedPdq))
}

/// D3 with requests arriving in `order` (a permutation of flow indices).
pub fn fluid_d3(flows: &[FluidFlow], capacity: &[f64], order: &[usize]) -> FluidSchedule {
    // equal releases are served in index order, so permuting sets the arrival order
    let permuted: Vec<FluidFlow> = order.iter().map(|&i| flows[i].clone()).collect();
    let s = simulate(&permuted, capacity, &FluidOptions::new(FluidPolicy::D3));
    let mut completion = vec![None; flows.len()];
    let mut discarded = vec![false; flows.len()];
    for (k, &i) in order.iter().enumerate() {
        completion[i] = s.completion[k];
        discarded[i] = s.discarded[k];
    }
    let segments = s
        .segments
        .into_iter()
        .map(|seg| {
            let mut rates = vec![0.0; flows.len()];
            for (k, &i) in order.iter().enumerate() {
                rates[i] = seg.rates[k];
            }
            Segment { rates, ..seg }
        })
        .collect();
    FluidSchedule { segments, completion, discarded }
}

/// The three-flow example: sizes 1, 2, 3 with deadlines 1, 4, 6 on a unit link.
pub fn three_flow_example() -> (Vec<FluidFlow>, Vec<f64>) {
    let flows = vec![
        FluidFlow::new(1.0, Some(1.0), vec![0]),
        FluidFlow::new(2.0, Some(4.0), vec![0]),
        FluidFlow::new(3.0, Some(6.0), vec![0]),
    ];
    (flows, vec![1.0])
}
