//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --release -p pdq-core --test acceptance`

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pdq_core::config::Protocol;
use pdq_core::engine::link::LinkParams;
use pdq_core::engine::packet::PacketSizes;
use pdq_core::metrics::{write_report, FlowRecord, FLOWS_CSV, LINKS_CSV, QUEUES_CSV};
use pdq_core::oracle::discard::{optimal_deadline_discard, Job};
use pdq_core::oracle::driver::{driver_analysis, CompetingFlow};
use pdq_core::oracle::flow_level::{ecmp_path, path_latency};
use pdq_core::oracle::fluid::{
    centralized_pdq_schedule, fluid_d3, fluid_edf, fluid_fair_sharing, fluid_sjf, three_flow_example,
};
use pdq_core::pdq::criticality::FlowSummary;
use pdq_core::pdq::switch::ListCapacity;
use pdq_core::runner::{self, RunOutput};
use pdq_core::sim::{simulate, SimDiagnostics, SimOptions};
use pdq_core::topology::{build_single_bottleneck, build_single_rooted_tree, Topology};
use pdq_core::workload::FlowSpec;
use pdq_core::{FlowId, LinkId, ScenarioConfig, SimTime, Simulator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str, overrides: &[(&str, String)]) -> ScenarioConfig {
    let o: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    ScenarioConfig::load(&scenarios_dir().join(name), &o).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn run(cfg: &ScenarioConfig) -> RunOutput {
    runner::run(cfg).unwrap_or_else(|e| panic!("run failed: {e}"))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fct_ms(r: &FlowRecord) -> Option<f64> {
    r.fct().map(|t| t.as_millis_f64())
}

/// The link from the switch into `host`.
fn downlink(topo: &Topology, host: u32) -> usize {
    topo.links().iter().position(|l| l.dst.0 == host && topo.is_switch(l.src)).expect("host downlink")
}

fn rtt_of(d: &SimDiagnostics, links: &[LinkId]) -> SimTime {
    links.iter().map(|l| d.link_rtt_avg[l.0 as usize]).max().unwrap_or(SimTime::from_micros(150))
}

// --- C1 ---------------------------------------------------------------------

fn c1_fluid_example() -> Outcome {
    let (f, c) = three_flow_example();
    let done = |s: &pdq_core::oracle::fluid::FluidSchedule| -> Vec<f64> {
        s.completion.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
    };
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
    let fair = done(&fluid_fair_sharing(&f, &c));
    let sjf = done(&fluid_sjf(&f, &c));
    let pdq = done(&centralized_pdq_schedule(&f, &c));
    let edf = fluid_edf(&f, &c);
    let bac = fluid_d3(&f, &c, &[1, 0, 2]);
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let missing = perms.iter().filter(|o| fluid_d3(&f, &c, &o[..]).deadlines_met(&f) < 3).count();
    let pass = close(&fair, &[3.0, 5.0, 6.0])
        && close(&sjf, &[1.0, 3.0, 6.0])
        && close(&pdq, &[1.0, 3.0, 6.0])
        && edf.deadlines_met(&f) == 3
        && !bac.meets_deadline(&f, 0)
        && missing == 5;
    outcome(
        pass,
        format!(
            "fair {fair:?} sjf {sjf:?} edf met {}/3, D3 B->A->C misses A: {}, {missing}/6 orders miss",
            edf.deadlines_met(&f),
            !bac.meets_deadline(&f, 0)
        ),
    )
}

// --- C2 ---------------------------------------------------------------------

fn c2_scenario1() -> Outcome {
    let cfg = scenario("scenario1.cfg", &[]);
    let t0 = Instant::now();
    let out = run(&cfg);
    let wall = t0.elapsed().as_secs_f64();
    let d = out.diagnostics.as_ref().unwrap();
    let topo = cfg.topology.build().unwrap();
    let flows = &out.report.flows;
    let fcts: Vec<f64> = flows.iter().map(|r| fct_ms(r).unwrap_or(f64::INFINITY)).collect();
    let last = out.report.summary.last_completion_ms;

    let mut by_finish: Vec<&FlowRecord> = flows.iter().collect();
    by_finish.sort_by_key(|r| r.finish_ns.unwrap_or(u64::MAX));
    let mut by_size: Vec<&FlowRecord> = flows.iter().collect();
    by_size.sort_by_key(|r| (r.size, r.id));
    let size_order = by_finish.iter().map(|r| r.id).eq(by_size.iter().map(|r| r.id));

    // sequential: at most one flow sending at any sampled instant after the first data
    let end = SimTime::from_millis(last.ceil() as u64);
    let mut overlap = SimTime::ZERO;
    let step = SimTime::from_micros(50);
    let mut t = d.first_data.unwrap_or(SimTime::ZERO);
    while t < end {
        if d.sending_traces.iter().filter(|s| s.sending_at(t)).count() > 1 {
            overlap += step;
        }
        t += step;
    }
    let bottleneck = downlink(&topo, flows[0].dst);
    let util = d.utilization.mean_utilization(
        bottleneck,
        topo.links()[bottleneck].params.rate_bps,
        d.first_data.unwrap(),
        SimTime::from_secs_f64(last * 1e-3),
    );
    let drops = out.report.summary.drops;
    let in_window = (39.9..=44.1).contains(&last);
    let pass = in_window && size_order && drops == 0 && util >= 0.97 && wall < 10.0;
    let fmt: Vec<String> = fcts.iter().map(|x| format!("{x:.2}")).collect();
    outcome(
        pass,
        format!(
            "last {last:.2} ms (39.9-44.1), FCTs [{}] ms, size order {size_order}, overlap {:.2} ms, drops {drops}, util {:.1}%, wall {wall:.2} s",
            fmt.join(", "),
            overlap.as_millis_f64(),
            util * 100.0
        ),
    )
}

// --- C3 ---------------------------------------------------------------------

fn c3_scenario2() -> Outcome {
    let cfg = scenario("scenario2.cfg", &[]);
    let topo = cfg.topology.build().unwrap();
    let flows = runner::build_flows(&cfg, &topo).unwrap();
    let mut opts = SimOptions::from_config(&cfg);
    opts.trace = true;
    let out = simulate(&topo, &flows, opts).unwrap();
    let d = &out.diagnostics;
    let recs = &out.report.flows;
    let long = recs.iter().max_by_key(|r| r.size).unwrap();
    let burst_start = SimTime::from_millis(10);
    let shorts_done = recs
        .iter()
        .filter(|r| r.id != long.id)
        .map(|r| r.finish_ns.unwrap_or(u64::MAX))
        .max()
        .unwrap();
    let all_short_done = shorts_done != u64::MAX;
    let shorts_end = SimTime::from_nanos(shorts_done.min(d.end_time.as_nanos()));
    let bottleneck = downlink(&topo, long.dst);
    let rate = topo.links()[bottleneck].params.rate_bps;
    let util = d.utilization.mean_utilization(bottleneck, rate, burst_start, shorts_end);
    let peak = out
        .report
        .queues
        .iter()
        .filter(|q| q.link as usize == bottleneck)
        .map(|q| q.max_data_packets)
        .max()
        .unwrap_or(0);
    let trace = d.sending_traces.iter().find(|s| s.flow.parent() == long.id).unwrap();
    let mid = burst_start + (shorts_end.saturating_sub(burst_start)).mul_f64(0.5);
    let paused_mid = !trace.sending_at(mid);
    let after = shorts_end + SimTime::from_millis(1);
    let resumed = long.finish_ns.is_some_and(|f| f > after.as_nanos()) && trace.sending_at(after)
        || long.finish_ns.is_some_and(|f| f > shorts_done);
    let pass = all_short_done && util >= 0.85 && peak <= 12 && paused_mid && resumed;
    outcome(
        pass,
        format!(
            "util {:.1}% over 10-{:.2} ms, peak queue {peak} pkts (<=12), long flow paused mid-burst {paused_mid}, resumed {resumed}, long FCT {:.2} ms",
            util * 100.0,
            shorts_end.as_millis_f64(),
            fct_ms(long).unwrap_or(f64::NAN)
        ),
    )
}

// --- C4 / C5 -----------------------------------------------------------------

struct RandomInstance {
    topo: Topology,
    flows: Vec<FlowSpec>,
    single: bool,
}

/// Long flows with distinct sizes and random start times; either all into
/// one receiver of a single bottleneck or between random tree hosts.
fn random_instance(rng: &mut ChaCha8Rng, single: bool) -> RandomInstance {
    let params = LinkParams::default();
    let n = rng.random_range(2..=6usize);
    let (topo, pairs) = if single {
        let topo = build_single_bottleneck(n, params).unwrap();
        let hosts = topo.hosts();
        let dst = *hosts.last().unwrap();
        let pairs: Vec<_> = hosts[..n].iter().map(|&s| (s, dst)).collect();
        (topo, pairs)
    } else {
        let topo = build_single_rooted_tree(params);
        let hosts = topo.hosts();
        let pairs = (0..n)
            .map(|_| {
                let s = rng.random_range(0..hosts.len());
                let mut t = rng.random_range(0..hosts.len() - 1);
                if t >= s {
                    t += 1;
                }
                (hosts[s], hosts[t])
            })
            .collect();
        (topo, pairs)
    };
    let mut sizes: Vec<u64> = (0..40).map(|k| 5_000_000 + k * 250_000).collect();
    let flows = pairs
        .into_iter()
        .enumerate()
        .map(|(i, (src, dst))| {
            let size = sizes.swap_remove(rng.random_range(0..sizes.len()));
            FlowSpec {
                id: i as u64,
                src,
                dst,
                size,
                deadline: None,
                start: SimTime::from_micros(rng.random_range(0..1000)),
                criticality: Default::default(),
            }
        })
        .collect();
    RandomInstance { topo, flows, single }
}

fn stable_opts(seed: u64, horizon: SimTime) -> SimOptions {
    let mut o = SimOptions::new(Protocol::Pdq);
    o.pdq.early_start_k = 0.0;
    o.pdq.probe_x = 0.0;
    o.pdq.dampening = false;
    o.pdq.rate_controller = false;
    o.pdq.capacity = ListCapacity::All;
    o.horizon = horizon;
    o.seed = seed;
    o.trace = true;
    o
}

struct Convergence {
    ok: bool,
    /// Measured settling time over the (P_max + 1) RTT bound.
    ratio: f64,
    p_max: usize,
}

fn check_convergence(inst: &RandomInstance, seed: u64) -> Convergence {
    let last_start = inst.flows.iter().map(|f| f.start).max().unwrap();
    let horizon = last_start + SimTime::from_millis(12);
    let out = simulate(&inst.topo, &inst.flows, stable_opts(seed, horizon)).unwrap();
    let d = &out.diagnostics;
    let comps: Vec<CompetingFlow> = inst
        .flows
        .iter()
        .map(|f| {
            let trace = d.sending_traces.iter().find(|s| s.flow.parent() == f.id).unwrap();
            CompetingFlow {
                summary: FlowSummary {
                    deadline: None,
                    expected_tx_time: SimTime::transmission(f.size, 1e9),
                    id: FlowId::subflow(f.id, 0),
                },
                links: trace.path.clone(),
            }
        })
        .collect();
    let analysis = driver_analysis(&comps);
    let drivers: BTreeSet<u64> = analysis.driver_set().into_iter().map(|i| inst.flows[i].id).collect();
    let all_links: Vec<LinkId> = comps.iter().flat_map(|c| c.links.iter().copied()).collect();
    let rtt = rtt_of(d, &all_links);
    let rounds = if inst.single { 3.0 } else { (analysis.p_max + 1) as f64 };
    let bound = last_start + rtt.mul_f64(rounds);
    // latest instant at which the sending set differed from the drivers
    let mut last_wrong = last_start;
    let step = SimTime::from_micros(10);
    let mut t = last_start;
    while t < horizon {
        let sending: BTreeSet<u64> =
            d.sending_traces.iter().filter(|s| s.sending_at(t)).map(|s| s.flow.parent()).collect();
        if sending != drivers {
            last_wrong = t + step;
        }
        t += step;
    }
    let settle = last_wrong.saturating_sub(last_start).as_secs_f64();
    let allowed = bound.saturating_sub(last_start).as_secs_f64();
    Convergence { ok: last_wrong <= bound, ratio: settle / allowed, p_max: analysis.p_max }
}

fn c4_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let instances: Vec<RandomInstance> = (0..120).map(|i| random_instance(&mut rng, i % 3 == 0)).collect();
    let results: Vec<Convergence> =
        instances.par_iter().enumerate().map(|(i, inst)| check_convergence(inst, i as u64)).collect();
    let failed = results.iter().filter(|r| !r.ok).count();
    let worst = results.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let p_max = results.iter().map(|r| r.p_max).max().unwrap_or(0);
    outcome(
        failed == 0,
        format!(
            "{} instances ({} single-bottleneck), {failed} outside bound, worst settle/bound {worst:.2}, largest P_max {p_max}",
            results.len(),
            instances.iter().filter(|i| i.single).count()
        ),
    )
}

fn c5_deadlock_freedom() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases: Vec<(RandomInstance, f64)> = (0..120)
        .map(|i| {
            let mut inst = random_instance(&mut rng, false);
            // shorter flows so runs finish and flows keep arriving and leaving
            for f in &mut inst.flows {
                f.size /= 10;
            }
            (inst, if i % 2 == 0 { 0.02 } else { 0.0 })
        })
        .collect();
    let results: Vec<(bool, f64, u64, bool)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (inst, loss))| {
            let mut o = SimOptions::new(Protocol::Pdq);
            o.loss_rate = *loss;
            o.seed = i as u64;
            o.horizon = SimTime::from_millis(200);
            let out = simulate(&inst.topo, &inst.flows, o).unwrap();
            let d = &out.diagnostics;
            let comps: Vec<CompetingFlow> = inst
                .flows
                .iter()
                .map(|f| CompetingFlow {
                    summary: FlowSummary {
                        deadline: None,
                        expected_tx_time: SimTime::transmission(f.size, 1e9),
                        id: FlowId::subflow(f.id, 0),
                    },
                    links: ecmp_path(&inst.topo, f),
                })
                .collect();
            let p_max = driver_analysis(&comps).p_max;
            let links: Vec<LinkId> = comps.iter().flat_map(|c| c.links.iter().copied()).collect();
            let rtt = rtt_of(d, &links);
            let bound = rtt.mul_f64(5.0 * (p_max + 1) as f64);
            let ratio = d.max_no_send_gap.as_secs_f64() / bound.as_secs_f64();
            let completed = out.report.flows.iter().all(|r| r.finish_ns.is_some());
            (d.max_no_send_gap < bound, ratio, if *loss == 0.0 { d.pause_violations } else { 0 }, completed)
        })
        .collect();
    let gap_fail = results.iter().filter(|r| !r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let violations: u64 = results.iter().map(|r| r.2).sum();
    let unfinished = results.iter().filter(|r| !r.3).count();
    outcome(
        gap_fail == 0 && violations == 0 && unfinished == 0,
        format!(
            "{} runs (half at 2% loss): {gap_fail} over gap bound, worst gap/bound {worst:.2}, pause violations (loss-free) {violations}, unfinished {unfinished}",
            results.len()
        ),
    )
}

// --- C6 ---------------------------------------------------------------------

fn mean_fct(recs: &[FlowRecord]) -> f64 {
    let v: Vec<f64> = recs.iter().filter_map(fct_ms).collect();
    mean(&v)
}

fn c6_aggregation() -> Outcome {
    let seeds = [1u64, 2, 3];
    let mut lines = Vec::new();
    let mut pass = true;
    for n in [10usize, 20, 30] {
        let per_seed: Vec<(f64, f64, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let base = [
                    ("workload.flows", n.to_string()),
                    ("workload.mean_size_kb", "1000".to_string()),
                    ("seed", seed.to_string()),
                    ("duration_ms", "2000".to_string()),
                ];
                let cfg = scenario("aggregation.cfg", &base);
                let pdq = mean_fct(&run(&cfg).report.flows);
                let rcp = mean_fct(&run(&ScenarioConfig { protocol: Protocol::Rcp, ..cfg.clone() }).report.flows);
                let oracle =
                    mean_fct(&run(&ScenarioConfig { simulator: Simulator::Flow, ..cfg.clone() }).report.flows);
                (pdq, rcp, oracle)
            })
            .collect();
        let pdq = mean(&per_seed.iter().map(|x| x.0).collect::<Vec<_>>());
        let rcp = mean(&per_seed.iter().map(|x| x.1).collect::<Vec<_>>());
        let oracle = mean(&per_seed.iter().map(|x| x.2).collect::<Vec<_>>());
        let ok = pdq <= 0.8 * rcp && (pdq / oracle - 1.0).abs() <= 0.15;
        pass &= ok;
        lines.push(format!(
            "n={n}: PDQ {pdq:.2} RCP {rcp:.2} oracle {oracle:.2} ms (PDQ/RCP {:.2}, PDQ/oracle {:.2})",
            pdq / rcp,
            pdq / oracle
        ));
    }
    outcome(pass, lines.join("; "))
}

// --- C7 ---------------------------------------------------------------------

/// Largest on-time fraction any schedule of the flows on the aggregator
/// downlink can reach, after taking off each flow's fixed path latency.
fn optimal_on_time(topo: &Topology, flows: &[FlowSpec]) -> f64 {
    let sizes = PacketSizes::default();
    let jobs: Vec<Job> = flows
        .iter()
        .map(|f| {
            let path = ecmp_path(topo, f);
            let lat = path_latency(topo, &path, &sizes);
            let rate = topo.link(*path.last().unwrap()).params.rate_bps;
            let deadline = f.deadline.unwrap().as_secs_f64() - (lat.handshake + lat.tail).as_secs_f64();
            Job { processing: sizes.wire_bytes(f.size) as f64 * 8.0 / rate, deadline }
        })
        .collect();
    optimal_deadline_discard(&jobs).on_time_fraction()
}

fn c7_deadlines() -> Outcome {
    let seeds = [1u64, 2, 3, 4, 5];
    let counts = [2usize, 6, 10, 14, 18, 22, 26, 30];
    let rows: Vec<(usize, f64, f64, f64)> = counts
        .par_iter()
        .map(|&n| {
            let mut acc = (0.0, 0.0, 0.0);
            for &seed in &seeds {
                let cfg =
                    scenario("aggregation_deadline.cfg", &[("workload.flows", n.to_string()), ("seed", seed.to_string())]);
                let topo = cfg.topology.build().unwrap();
                let flows = runner::build_flows(&cfg, &topo).unwrap();
                acc.0 += run(&cfg).report.summary.application_throughput;
                acc.1 += run(&ScenarioConfig { protocol: Protocol::D3, ..cfg.clone() })
                    .report
                    .summary
                    .application_throughput;
                acc.2 += optimal_on_time(&topo, &flows);
            }
            let k = seeds.len() as f64;
            (n, acc.0 / k, acc.1 / k, acc.2 / k)
        })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for &(n, pdq, d3, opt) in &rows {
        let ok = pdq >= d3 - 1e-9 && opt - pdq <= 0.05 + 1e-9;
        pass &= ok;
        parts.push(format!("n={n}: PDQ {:.1}% D3 {:.1}% opt {:.1}%", pdq * 100.0, d3 * 100.0, opt * 100.0));
    }
    outcome(pass, parts.join("; "))
}

// --- C8 ---------------------------------------------------------------------

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn c8_probe_load() -> Outcome {
    let x = pdq_core::config::PdqConfig::default().probe_x;
    let results: Vec<(usize, f64, f64)> = [8usize, 32, 128]
        .par_iter()
        .map(|&n| {
            let topo = build_single_bottleneck(n + 1, LinkParams::default()).unwrap();
            let hosts = topo.hosts();
            let dst = hosts[n + 1];
            let mut flows = vec![FlowSpec {
                id: 0,
                src: hosts[0],
                dst,
                size: 50_000_000,
                deadline: Some(SimTime::from_secs_f64(1.0)),
                start: SimTime::ZERO,
                criticality: Default::default(),
            }];
            for i in 1..=n {
                flows.push(FlowSpec {
                    id: i as u64,
                    src: hosts[i],
                    dst,
                    size: 10_000_000 + i as u64 * 10_000,
                    deadline: None,
                    start: SimTime::ZERO,
                    criticality: Default::default(),
                });
            }
            let mut o = SimOptions::new(Protocol::Pdq);
            o.horizon = SimTime::from_millis(30);
            o.trace = true;
            let out = simulate(&topo, &flows, o).unwrap();
            let d = &out.diagnostics;
            let (from, to) = (SimTime::from_millis(5), SimTime::from_millis(30));
            let probes = d.probe_times.iter().filter(|&&t| t >= from && t < to).count() as f64;
            let rtt = d.link_rtt_avg[downlink(&topo, dst.0)];
            let per_rtt = probes / ((to - from).as_secs_f64() / rtt.as_secs_f64());
            let bound = 1.2 * harmonic(n) / x;
            (n, per_rtt, bound)
        })
        .collect();
    let pass = results.iter().all(|&(_, p, b)| p <= b);
    let share = PacketSizes::default().control as f64 * 8.0 / 150e-6 / 1e9;
    let mut parts: Vec<String> =
        results.iter().map(|(n, p, b)| format!("n={n}: {p:.2} probes/RTT (bound {b:.2})")).collect();
    parts.push(format!(
        "one 40 B probe per 150 us = {:.3}% of 1 Gbps (2.13 per mille)",
        share * 100.0
    ));
    outcome(pass, parts.join("; "))
}

// --- C9 ---------------------------------------------------------------------

fn c9_flow_vs_packet() -> Outcome {
    let rows: Vec<(usize, f64, f64)> = [5usize, 10, 20]
        .par_iter()
        .map(|&n| {
            let mut p = Vec::new();
            let mut f = Vec::new();
            for seed in 1..=3u64 {
                let cfg = scenario("aggregation.cfg", &[("workload.flows", n.to_string()), ("seed", seed.to_string())]);
                p.push(mean_fct(&run(&cfg).report.flows));
                f.push(mean_fct(&run(&ScenarioConfig { simulator: Simulator::Flow, ..cfg }).report.flows));
            }
            (n, mean(&p), mean(&f))
        })
        .collect();
    let pass = rows.iter().all(|&(_, p, f)| (f / p - 1.0).abs() <= 0.10);
    let parts: Vec<String> = rows
        .iter()
        .map(|(n, p, f)| format!("n={n}: packet {p:.3} flow {f:.3} ms ({:+.1}%)", (f / p - 1.0) * 100.0))
        .collect();
    outcome(pass, parts.join("; "))
}

// --- C10 --------------------------------------------------------------------

fn c10_loss() -> Outcome {
    let runs: Vec<(f64, f64)> = (1..=5u64)
        .into_par_iter()
        .map(|seed| {
            let lossy = scenario("aggregation_loss.cfg", &[("seed", seed.to_string())]);
            let clean = ScenarioConfig { loss_rate: 0.0, ..lossy.clone() };
            (mean_fct(&run(&clean).report.flows), mean_fct(&run(&lossy).report.flows))
        })
        .collect();
    let clean = mean(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
    let lossy = mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    let inflation = lossy / clean - 1.0;
    outcome(
        inflation <= 0.20,
        format!("mean FCT {clean:.3} ms loss-free, {lossy:.3} ms at 3% loss, inflation {:.1}%", inflation * 100.0),
    )
}

// --- C11 --------------------------------------------------------------------

fn report_bytes(out: &RunOutput) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    write_report(&out.report, dir.path()).unwrap();
    [FLOWS_CSV, LINKS_CSV, QUEUES_CSV].iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect()
}

fn c11_multipath() -> Outcome {
    let multi = scenario("multipath.cfg", &[]);
    let single = scenario("multipath.cfg", &[("multipath.subflows", "1".to_string())]);
    let mut plain = single.clone();
    plain.multipath = Default::default();
    let m = run(&multi);
    let s = run(&single);
    let p = run(&plain);
    let (mf, sf) = (mean_fct(&m.report.flows), mean_fct(&s.report.flows));
    let identical = report_bytes(&s) == report_bytes(&p);
    outcome(
        mf <= 0.6 * sf && identical,
        format!(
            "{} subflows {mf:.3} ms vs single path {sf:.3} ms (ratio {:.2}); subflows=1 CSVs identical to plain PDQ: {identical}",
            multi.multipath.subflows,
            mf / sf
        ),
    )
}

// --- C12 --------------------------------------------------------------------

fn c12_determinism() -> Outcome {
    let mut names: Vec<String> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".cfg"))
        .collect();
    names.sort();
    let diffs: Vec<String> = names
        .par_iter()
        .filter_map(|name| {
            let cfg = scenario(name, &[]);
            (report_bytes(&run(&cfg)) != report_bytes(&run(&cfg))).then(|| name.clone())
        })
        .collect();
    outcome(
        diffs.is_empty(),
        format!("{} scenarios rerun, differing: {}", names.len(), if diffs.is_empty() { "none".into() } else { diffs.join(", ") }),
    )
}

// --- smoke ------------------------------------------------------------------

fn smoke_fat_tree() -> Outcome {
    let cfg = scenario("fattree_flow.cfg", &[]);
    let t0 = Instant::now();
    let pdq = run(&cfg);
    let rcp = run(&ScenarioConfig { protocol: Protocol::Rcp, ..cfg.clone() });
    let (p, r) = (mean_fct(&pdq.report.flows), mean_fct(&rcp.report.flows));
    outcome(
        p <= r && pdq.report.summary.completed == pdq.report.summary.flows,
        format!(
            "k={} fat-tree, {} flows: PDQ {p:.2} ms RCP {r:.2} ms, {:.1} s",
            cfg.topology.k,
            pdq.report.summary.flows,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("C1", "fluid three-flow example", c1_fluid_example),
        ("C2", "scenario 1 sequential completion", c2_scenario1),
        ("C3", "scenario 2 preemption", c3_scenario2),
        ("C4", "convergence to the driver set", c4_convergence),
        ("C5", "no deadlock", c5_deadlock_freedom),
        ("C6", "aggregation mean FCT", c6_aggregation),
        ("C7", "deadline application throughput", c7_deadlines),
        ("C8", "suppressed probing load", c8_probe_load),
        ("C9", "flow-level vs packet-level", c9_flow_vs_packet),
        ("C10", "3% loss", c10_loss),
        ("C11", "multipath", c11_multipath),
        ("C12", "determinism", c12_determinism),
        ("SMOKE", "fat-tree k=8 flow level", smoke_fat_tree),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {id} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{failed} failing");
}
