//! Run outputs: per-flow records, binned link utilization, queue samples
//! and the summary, plus their CSV and text forms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub id: u64,
    pub src: u32,
    pub dst: u32,
    pub size: u64,
    pub start_ns: u64,
    pub deadline_ns: Option<u64>,
    pub finish_ns: Option<u64>,
    /// Given up by early termination or quenching.
    pub terminated: bool,
    pub deadline_met: Option<bool>,
}

impl FlowRecord {
    pub fn new(id: u64, src: u32, dst: u32, size: u64, start: SimTime, deadline: Option<SimTime>) -> Self {
        FlowRecord {
            id,
            src,
            dst,
            size,
            start_ns: start.as_nanos(),
            deadline_ns: deadline.map(SimTime::as_nanos),
            finish_ns: None,
            terminated: false,
            deadline_met: deadline.map(|_| false),
        }
    }

    pub fn complete(&mut self, at: SimTime) {
        self.finish_ns = Some(at.as_nanos());
        self.deadline_met = self.deadline_ns.map(|d| at.as_nanos() <= d);
    }

    pub fn terminate(&mut self) {
        self.terminated = true;
        if self.deadline_ns.is_some() {
            self.deadline_met = Some(false);
        }
    }

    pub fn fct(&self) -> Option<SimTime> {
        self.finish_ns.map(|f| SimTime::from_nanos(f - self.start_ns))
    }
}

/// Utilization of one link over one bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub bin_start_ns: u64,
    pub link: u32,
    pub src: u32,
    pub dst: u32,
    pub bits: f64,
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueSample {
    pub time_ns: u64,
    pub link: u32,
    pub bytes: u64,
    pub packets: u64,
    /// Largest number of queued DATA packets since the previous sample.
    pub max_data_packets: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: String,
    pub simulator: String,
    pub flows: usize,
    pub completed: usize,
    pub terminated: usize,
    pub mean_fct_ms: f64,
    pub median_fct_ms: f64,
    pub p99_fct_ms: f64,
    pub deadline_flows: usize,
    pub deadlines_met: usize,
    pub application_throughput: f64,
    pub drops: u64,
    pub losses: u64,
    pub probes: u64,
    pub last_completion_ms: f64,
    pub events: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub flows: Vec<FlowRecord>,
    pub links: Vec<LinkSample>,
    pub queues: Vec<QueueSample>,
    pub summary: Summary,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Summary { path: PathBuf, source: toml::de::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> MetricsError + '_ {
    move |source| MetricsError::Csv { path: path.to_path_buf(), source }
}

/// Nearest-rank percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Fraction of deadline flows that met their deadline; 1 when there are none.
pub fn application_throughput(flows: &[FlowRecord]) -> f64 {
    let with_deadline = flows.iter().filter(|f| f.deadline_ns.is_some()).count();
    if with_deadline == 0 {
        return 1.0;
    }
    flows.iter().filter(|f| f.deadline_met == Some(true)).count() as f64 / with_deadline as f64
}

pub fn mean_fct_ms(flows: &[FlowRecord]) -> f64 {
    let fcts: Vec<f64> = flows.iter().filter_map(|f| f.fct()).map(|t| t.as_millis_f64()).collect();
    fcts.iter().sum::<f64>() / fcts.len().max(1) as f64
}

impl Summary {
    /// Flow statistics; counters are left for the caller.
    pub fn from_flows(flows: &[FlowRecord]) -> Summary {
        let mut fcts: Vec<f64> = flows.iter().filter_map(|f| f.fct()).map(|t| t.as_millis_f64()).collect();
        fcts.sort_by(f64::total_cmp);
        Summary {
            flows: flows.len(),
            completed: fcts.len(),
            terminated: flows.iter().filter(|f| f.terminated).count(),
            mean_fct_ms: mean_fct_ms(flows),
            median_fct_ms: percentile(&fcts, 0.5),
            p99_fct_ms: percentile(&fcts, 0.99),
            deadline_flows: flows.iter().filter(|f| f.deadline_ns.is_some()).count(),
            deadlines_met: flows.iter().filter(|f| f.deadline_met == Some(true)).count(),
            application_throughput: application_throughput(flows),
            last_completion_ms: flows
                .iter()
                .filter_map(|f| f.finish_ns)
                .max()
                .map_or(0.0, |t| SimTime::from_nanos(t).as_millis_f64()),
            ..Summary::default()
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }

    pub fn from_text(s: &str) -> Result<Summary, toml::de::Error> {
        toml::from_str(s)
    }
}

pub const FLOWS_CSV: &str = "flows.csv";
pub const LINKS_CSV: &str = "links_timeseries.csv";
pub const QUEUES_CSV: &str = "queues.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), MetricsError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, MetricsError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

const FLOW_COLUMNS: [&str; 9] = [
    "id", "src", "dst", "size", "start_ns", "deadline_ns", "finish_ns", "terminated", "deadline_met",
];
const LINK_COLUMNS: [&str; 6] = ["bin_start_ns", "link", "src", "dst", "bits", "utilization"];
const QUEUE_COLUMNS: [&str; 5] = ["time_ns", "link", "bytes", "packets", "max_data_packets"];

/// Writes the four report files into `dir`, creating it if needed.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_rows(&dir.join(FLOWS_CSV), &report.flows, &FLOW_COLUMNS)?;
    write_rows(&dir.join(LINKS_CSV), &report.links, &LINK_COLUMNS)?;
    write_rows(&dir.join(QUEUES_CSV), &report.queues, &QUEUE_COLUMNS)?;
    let path = dir.join(SUMMARY_TXT);
    let mut f = File::create(&path).map_err(io_err(&path))?;
    f.write_all(report.summary.to_text().as_bytes()).map_err(io_err(&path))
}

pub fn read_report(dir: &Path) -> Result<MetricsReport, MetricsError> {
    let path = dir.join(SUMMARY_TXT);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let summary = Summary::from_text(&text).map_err(|source| MetricsError::Summary { path, source })?;
    Ok(MetricsReport {
        flows: read_rows(&dir.join(FLOWS_CSV))?,
        links: read_rows(&dir.join(LINKS_CSV))?,
        queues: read_rows(&dir.join(QUEUES_CSV))?,
        summary,
    })
}

/// Accumulates transmitted bits per link into fixed-width bins, splitting
/// each packet across the bins its transmission overlaps.
#[derive(Clone, Debug)]
pub struct UtilizationRecorder {
    pub bin: SimTime,
    bits: Vec<Vec<f64>>,
}

impl UtilizationRecorder {
    pub fn new(links: usize, bin: SimTime) -> Self {
        assert!(bin > SimTime::ZERO, "zero utilization bin");
        UtilizationRecorder { bin, bits: vec![Vec::new(); links] }
    }

    pub fn record(&mut self, link: usize, tx_start: SimTime, tx_end: SimTime, bits: f64) {
        let b = self.bin.as_nanos();
        let (s, e) = (tx_start.as_nanos(), tx_end.as_nanos());
        let series = &mut self.bits[link];
        let last = if e > s { (e - 1) / b } else { s / b } as usize;
        if series.len() <= last {
            series.resize(last + 1, 0.0);
        }
        if e <= s {
            series[last] += bits;
            return;
        }
        let span = (e - s) as f64;
        let mut t = s;
        while t < e {
            let k = t / b;
            let end = ((k + 1) * b).min(e);
            series[k as usize] += bits * (end - t) as f64 / span;
            t = end;
        }
    }

    pub fn series(&self, link: usize) -> &[f64] {
        &self.bits[link]
    }

    /// Mean utilization of `link` over `[from, to)`, using whole bins
    /// weighted by overlap.
    pub fn mean_utilization(&self, link: usize, rate_bps: f64, from: SimTime, to: SimTime) -> f64 {
        let b = self.bin.as_nanos();
        let (s, e) = (from.as_nanos(), to.as_nanos());
        if e <= s {
            return 0.0;
        }
        let mut bits = 0.0;
        for (k, &x) in self.bits[link].iter().enumerate() {
            let (lo, hi) = (k as u64 * b, (k as u64 + 1) * b);
            let overlap = hi.min(e).saturating_sub(lo.max(s));
            bits += x * overlap as f64 / b as f64;
        }
        bits / (rate_bps * (e - s) as f64 * 1e-9)
    }

    /// Rows for every link that carried traffic, bins from zero on.
    pub fn samples(&self, endpoints: &[(u32, u32)], rates: &[f64]) -> Vec<LinkSample> {
        let bin_s = self.bin.as_secs_f64();
        let mut out = Vec::new();
        for (l, series) in self.bits.iter().enumerate() {
            for (k, &bits) in series.iter().enumerate() {
                out.push(LinkSample {
                    bin_start_ns: k as u64 * self.bin.as_nanos(),
                    link: l as u32,
                    src: endpoints[l].0,
                    dst: endpoints[l].1,
                    bits,
                    utilization: bits / (rates[l] * bin_s),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: u64, finish_us: Option<u64>, deadline_us: Option<u64>) -> FlowRecord {
        let mut r = FlowRecord::new(id, 0, 1, 1000, SimTime::ZERO, deadline_us.map(SimTime::from_micros));
        match finish_us {
            Some(t) => r.complete(SimTime::from_micros(t)),
            None => r.terminate(),
        }
        r
    }

    #[test]
    fn deadline_bookkeeping() {
        assert_eq!(record(0, Some(10), Some(20)).deadline_met, Some(true));
        assert_eq!(record(0, Some(30), Some(20)).deadline_met, Some(false));
        assert_eq!(record(0, Some(30), None).deadline_met, None);
        assert_eq!(record(0, None, Some(20)).deadline_met, Some(false));
        let flows = vec![record(0, Some(10), Some(20)), record(1, None, Some(20)), record(2, Some(5), None)];
        assert_eq!(application_throughput(&flows), 0.5);
    }

    #[test]
    fn percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&[], 0.5), 0.0);
    }

    #[test]
    fn saturated_bin_is_one() {
        let mut u = UtilizationRecorder::new(1, SimTime::from_micros(100));
        // 1500-byte packets back to back at 1 Gbps for 300 us, starting mid-bin
        let mut t = SimTime::from_micros(50);
        for _ in 0..25 {
            let end = t + SimTime::from_micros(12);
            u.record(0, t, end, 12_000.0);
            t = end;
        }
        let s = u.samples(&[(0, 1)], &[1e9]);
        assert!((s[1].utilization - 1.0).abs() < 1e-12);
        assert!((s[0].utilization - 0.5).abs() < 1e-12);
        let m = u.mean_utilization(0, 1e9, SimTime::from_micros(100), SimTime::from_micros(300));
        assert!((m - 1.0).abs() < 1e-12);
        let m = u.mean_utilization(0, 1e9, SimTime::ZERO, SimTime::from_micros(400));
        assert!((m - 0.75).abs() < 1e-12);
        let idle = UtilizationRecorder::new(2, SimTime::from_micros(100));
        assert_eq!(idle.mean_utilization(1, 1e9, SimTime::ZERO, SimTime::from_millis(1)), 0.0);
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let flows = vec![record(0, Some(10), Some(20)), record(1, None, None)];
        let report = MetricsReport {
            summary: Summary { protocol: "pdq".into(), ..Summary::from_flows(&flows) },
            flows,
            links: vec![LinkSample { bin_start_ns: 0, link: 3, src: 1, dst: 2, bits: 0.25, utilization: 0.125 }],
            queues: vec![QueueSample { time_ns: 100, link: 3, bytes: 1500, packets: 1, max_data_packets: 2 }],
        };
        write_report(&report, dir.path()).unwrap();
        assert_eq!(read_report(dir.path()).unwrap(), report);
    }

    #[test]
    fn empty_report_has_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        write_report(&MetricsReport::default(), dir.path()).unwrap();
        let flows = std::fs::read_to_string(dir.path().join(FLOWS_CSV)).unwrap();
        assert_eq!(flows, "id,src,dst,size,start_ns,deadline_ns,finish_ns,terminated,deadline_met\n");
        assert!(read_report(dir.path()).unwrap().flows.is_empty());
    }
}
