//! Output files: job log, node state log, summary and Gantt chart.
//!
//! Every writer is a pure function of the results, so identical results
//! give identical bytes. Files are written to a temporary sibling and
//! renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{JobRecord, ResultsBundle};
use crate::metrics::{NodeStateTrace, Summary, TraceState};
use crate::platform::Platform;
use crate::units::{Nanojoules, SimTime};

pub const JOBS_CSV: &str = "jobs.csv";
pub const NODE_STATES_CSV: &str = "node_states.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const GANTT_SVG: &str = "gantt.svg";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Job log, one row per finished job, ordered by start time then job id.
pub fn jobs_csv(records: &[JobRecord], platform: &Platform) -> String {
    let mut rows: Vec<&JobRecord> = records.iter().collect();
    rows.sort_by(|a, b| (a.start_time, &a.job_id).cmp(&(b.start_time, &b.job_id)));
    let mut out = String::from("job_id,subtime,start_time,finish_time,waiting_time,res,nodes,outcome\n");
    for r in rows {
        let mut ids: Vec<u64> = r.nodes.iter().map(|&n| platform.nodes[n].external_id).collect();
        ids.sort_unstable();
        let nodes: Vec<String> = ids.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.job_id.to_string()),
            r.subtime.display_secs(),
            r.start_time.display_secs(),
            r.finish_time.display_secs(),
            r.waiting().display_secs(),
            r.res,
            nodes.join(" "),
            r.outcome.as_str()
        );
    }
    out
}

/// Node state log, one row per trace interval, grouped by node.
pub fn node_states_csv(traces: &[NodeStateTrace], platform: &Platform) -> String {
    let mut out = String::from("node_id,state,begin,end\n");
    for t in traces {
        let id = platform.nodes[t.node].external_id;
        for iv in &t.intervals {
            let _ = writeln!(out, "{id},{},{},{}", iv.state, iv.begin.display_secs(), iv.end.display_secs());
        }
    }
    out
}

/// Contents of `summary.json`: human units (J, s) alongside exact
/// integers (nJ, µs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub total_energy_j: f64,
    pub total_energy_nj: u128,
    pub wasted_energy_j: f64,
    pub wasted_energy_nj: u128,
    pub energy_by_state_j: BTreeMap<String, f64>,
    pub energy_by_state_nj: BTreeMap<String, u128>,
    pub mean_waiting_s: f64,
    pub mean_waiting_us: f64,
    pub max_waiting_s: f64,
    pub max_waiting_us: u64,
    pub utilization: f64,
    pub makespan_s: f64,
    pub makespan_us: u64,
    pub job_count: usize,
    pub terminated_count: usize,
    pub start_time_us: u64,
    pub end_time_us: u64,
    pub policy_invocations: u64,
    /// Free-form, e.g. the resolved configuration.
    pub metadata: serde_json::Value,
}

impl SummaryRecord {
    pub fn new(summary: &Summary, policy_invocations: u64, metadata: serde_json::Value) -> Self {
    let by_state = |f: &dyn Fn(Nanojoules) -> f64| -> BTreeMap<String, f64> {
        TraceState::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), f(summary.energy_by_state.get(s).copied().unwrap_or_default())))
            .collect()
    };
    SummaryRecord {
        total_energy_j: summary.total_energy.as_joules_f64(),
        total_energy_nj: summary.total_energy.0,
        wasted_energy_j: summary.wasted_energy.as_joules_f64(),
        wasted_energy_nj: summary.wasted_energy.0,
        energy_by_state_j: by_state(&|e| e.as_joules_f64()),
        energy_by_state_nj: TraceState::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), summary.energy_by_state.get(s).map_or(0, |e| e.0)))
            .collect(),
        mean_waiting_s: summary.mean_waiting / 1e6,
        mean_waiting_us: summary.mean_waiting,
        max_waiting_s: summary.max_waiting.as_secs_f64(),
        max_waiting_us: summary.max_waiting.0,
        utilization: summary.utilization,
        makespan_s: summary.makespan.as_secs_f64(),
        makespan_us: summary.makespan.0,
        job_count: summary.job_count,
        terminated_count: summary.terminated_count,
        start_time_us: summary.start_time.0,
        end_time_us: summary.end_time.0,
        policy_invocations,
        metadata,
    }
    }
}

pub fn summary_json(summary: &Summary, policy_invocations: u64, metadata: &serde_json::Value) -> String {
    let record = SummaryRecord::new(summary, policy_invocations, metadata.clone());
    let mut s = serde_json::to_string_pretty(&record).expect("summary serializes");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanttOptions {
    pub pixels_per_hour: f64,
    pub lane_height: f64,
}

impl Default for GanttOptions {
    fn default() -> Self {
        GanttOptions { pixels_per_hour: 20.0, lane_height: 14.0 }
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// FNV-1a, 64 bit.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn job_color(id: &str) -> String {
    let h = fnv1a(id.as_bytes());
    format!("hsl({},{}%,{}%)", h % 360, 55 + (h >> 16) % 20, 50 + (h >> 32) % 15)
}

const TICK_STEPS: [u64; 12] = [60, 300, 600, 1800, 3600, 7200, 21600, 43200, 86400, 172_800, 604_800, 2_592_000];

fn tick_label(secs: u64) -> String {
    if secs % 86400 == 0 && secs > 0 {
        format!("{}d", secs / 86400)
    } else if secs % 3600 == 0 {
        format!("{}h", secs / 3600)
    } else {
        format!("{}m", secs / 60)
    }
}

/// Gantt chart: one lane per node (top lane = first node), time on the
/// horizontal axis relative to the run start.
pub fn render_gantt(
    records: &[JobRecord],
    traces: &[NodeStateTrace],
    platform: &Platform,
    start: SimTime,
    end: SimTime,
    opts: &GanttOptions,
) -> String {
    const LEFT: f64 = 70.0;
    const TOP: f64 = 40.0;
    const RIGHT: f64 = 20.0;
    let lanes = platform.num_nodes();
    let span_secs = end.saturating_sub(start).as_secs_f64();
    let plot_w = (span_secs / 3600.0 * opts.pixels_per_hour).max(1.0);
    let plot_h = lanes as f64 * opts.lane_height;
    let width = LEFT + plot_w + RIGHT;
    let height = TOP + plot_h + 40.0;
    let x = |t: SimTime| LEFT + t.saturating_sub(start).as_secs_f64() / 3600.0 * opts.pixels_per_hour;
    let y = |lane: usize| TOP + lane as f64 * opts.lane_height;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}" font-family="sans-serif" font-size="10">"#
    );
    s.push_str(concat!(
        "<defs><pattern id=\"hatch\" width=\"4\" height=\"4\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">",
        "<rect width=\"4\" height=\"4\" fill=\"#f2d7a0\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"4\" stroke=\"#b07a1a\" stroke-width=\"1.5\"/>",
        "</pattern></defs>\n",
        "<style>.band.switching_on,.band.switching_off{fill:url(#hatch)}.band.sleeping{fill:#333}",
        ".job,.job-cont{stroke:#222;stroke-width:0.3}.lane{fill:none;stroke:#ddd;stroke-width:0.5}</style>\n"
    ));

    // legend
    let legend = [("job", "#7fa7d9"), ("switching", "url(#hatch)"), ("sleeping", "#333"), ("idle", "#fff")];
    for (i, (label, fill)) in legend.iter().enumerate() {
        let lx = LEFT + i as f64 * 90.0;
        let _ = writeln!(
            s,
            r##"<g class="legend"><rect x="{lx:.2}" y="10" width="12" height="12" fill="{fill}" stroke="#222" stroke-width="0.5"/><text x="{:.2}" y="20">{label}</text></g>"##,
            lx + 16.0
        );
    }

    // lanes
    for (lane, node) in platform.nodes.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<rect class="lane" x="{LEFT:.2}" y="{:.2}" width="{plot_w:.2}" height="{:.2}"/>"#,
            y(lane),
            opts.lane_height
        );
        if lanes <= 64 || lane % (lanes / 32).max(1) == 0 {
            let _ = writeln!(
                s,
                r#"<text class="node-label" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 4.0,
                y(lane) + opts.lane_height * 0.75,
                node.external_id
            );
        }
    }

    // power bands
    for t in traces {
        for iv in &t.intervals {
            let class = match iv.state {
                TraceState::SwitchingOn | TraceState::SwitchingOff | TraceState::Sleeping => iv.state.as_str(),
                _ => continue,
            };
            let _ = writeln!(
                s,
                r#"<rect class="band {class}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                x(iv.begin),
                y(t.node),
                x(iv.end) - x(iv.begin),
                opts.lane_height
            );
        }
    }

    // jobs: the main rect sits on the job's first lane
    let mut rows: Vec<&JobRecord> = records.iter().collect();
    rows.sort_by(|a, b| (a.start_time, &a.job_id).cmp(&(b.start_time, &b.job_id)));
    for r in rows {
        let id = r.job_id.to_string();
        let color = job_color(&id);
        let id = xml_escape(&id);
        let mut nodes = r.nodes.clone();
        nodes.sort_unstable();
        for (k, &n) in nodes.iter().enumerate() {
            let class = if k == 0 { "job" } else { "job-cont" };
            let _ = writeln!(
                s,
                r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"><title>job {id}</title></rect>"#,
                x(r.start_time),
                y(n),
                x(r.finish_time) - x(r.start_time),
                opts.lane_height
            );
        }
    }

    // time axis
    let axis_y = TOP + plot_h;
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{LEFT:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="#000"/>"##,
        LEFT + plot_w
    );
    let step = TICK_STEPS
        .iter()
        .copied()
        .find(|&st| st as f64 / 3600.0 * opts.pixels_per_hour >= 60.0)
        .unwrap_or(*TICK_STEPS.last().expect("non-empty"));
    let span = end.saturating_sub(start).0 / 1_000_000;
    let mut tick = 0;
    while tick <= span {
        let tx = x(start + SimTime::from_secs(tick));
        let _ = writeln!(
            s,
            r##"<g class="tick"><line x1="{tx:.2}" y1="{axis_y:.2}" x2="{tx:.2}" y2="{:.2}" stroke="#000"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text></g>"##,
            axis_y + 4.0,
            axis_y + 15.0,
            tick_label(tick)
        );
        tick += step;
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time</text>"#, LEFT + plot_w / 2.0, axis_y + 30.0);
    s.push_str("</svg>\n");
    s
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes the four output files into `dir`, creating it if needed.
pub fn write_bundle(
    dir: &Path,
    results: &ResultsBundle,
    metadata: &serde_json::Value,
    gantt: &GanttOptions,
) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(JOBS_CSV), jobs_csv(&results.job_records, &results.platform).as_bytes())?;
    write_atomic(&dir.join(NODE_STATES_CSV), node_states_csv(&results.node_traces, &results.platform).as_bytes())?;
    write_atomic(
        &dir.join(SUMMARY_JSON),
        summary_json(&results.summary, results.policy_invocations, metadata).as_bytes(),
    )?;
    let svg = render_gantt(
        &results.job_records,
        &results.node_traces,
        &results.platform,
        results.summary.start_time,
        results.summary.end_time,
        gantt,
    );
    write_atomic(&dir.join(GANTT_SVG), svg.as_bytes())
}
