//! Run traces and summary reports.
//!
//! A run produces a stream of [`TraceEvent`]s, one JSON object per line.
//! Events are emitted in nondecreasing `t` (simulated milliseconds): the
//! simulator logs execution events in event order, and the control loop
//! appends its decision events at tick boundaries, so no sorting pass is
//! needed. At the end of a run the accumulated statistics are folded into
//! a [`RunReport`].

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Simulated time in milliseconds.
    pub t: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceKind {
    /// A component invoked its backing provider.
    Invoke {
        instance: u64,
        component: String,
        provider: String,
    },
    /// A process instance reached the exit.
    Complete { instance: u64, duration_ms: f64 },
    /// A process instance terminated with an uncaught failure.
    Fail { instance: u64 },
    /// An exit probe sampled a property value.
    Measure {
        instance: u64,
        property: String,
        value: f64,
    },
    /// An evaluation unit classified a requirement.
    Classify {
        requirement: String,
        value: f64,
        level: String,
        badness: f64,
    },
    /// A requirement crossed into a worse band.
    Trigger {
        trigger: String,
        requirement: String,
        severity: String,
        value: f64,
    },
    /// The planner committed to a pattern for a trigger.
    PlanSelected {
        trigger: String,
        plan: String,
        score: f64,
    },
    /// One tactic of the chosen path was enacted.
    TacticApplied {
        tactic: String,
        args: Vec<String>,
        actions: u64,
    },
    /// A candidate pattern was considered and turned down.
    PlanRejected {
        trigger: String,
        plan: String,
        reason: String,
    },
    /// A plan reported one of its assumptions false.
    Falsification {
        assumption: String,
        severity: String,
        handled: String,
    },
    /// The configuration manager swapped in a new architecture.
    Reconfigure {
        revision: u64,
        elements: u64,
        bindings: u64,
    },
    /// A scripted environment event fired.
    ScenarioEvent { action: String },
}

impl TraceEvent {
    pub fn new(t: u64, kind: TraceKind) -> Self {
        TraceEvent { t, kind }
    }
}

/// Serialize events as line-delimited JSON.
pub fn write_jsonl<W: io::Write>(events: &[TraceEvent], w: &mut W) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut *w, event)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse a line-delimited JSON trace back into events.
pub fn read_jsonl(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Share of run time a requirement spent in each band, in percent.
/// The three shares sum to 100 within a hundredth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandShare {
    pub acceptable_pct: f64,
    pub tolerable_pct: f64,
    pub unacceptable_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub launched: u64,
    pub completed: u64,
    pub failed: u64,
    pub mean_response_ms: f64,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSummary {
    /// Processing time burned by compressor connectors.
    pub battery_ms: f64,
    /// High-water mark of bytes parked in queue connectors.
    pub queue_peak_bytes: u64,
}

/// End-of-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub horizon_ms: u64,
    pub seed: u64,
    pub adaptation: bool,
    pub instances: InstanceSummary,
    /// Per-requirement time-in-band shares.
    pub requirements: BTreeMap<String, BandShare>,
    /// Enactment counts keyed by tactic kind.
    pub adaptations: BTreeMap<String, u64>,
    pub resources: ResourceSummary,
}
