//! Transformation of a design-time workflow into an executable runtime
//! model: a graph of service components and connectors, instrumented with
//! interceptors and checkpoints for every measurable property.

mod verify;

pub use verify::{mirror_context, verify_causal_connection};

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    AdaptiveProcessModel, ModelError, ProcessNode, PropertyKind, QualityRequirement,
};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("instrumentation error: {0}")]
    Instrumentation(String),
}

/// Which side of a watched region an interceptor guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InterceptRole {
    Entry,
    Exit,
}

/// Connector vocabulary of the runtime model. Structural kinds come from
/// the workflow shape, instrumentation kinds from requirements, and the
/// remaining kinds are introduced by tactics at runtime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConnectorKind {
    /// Source of every instance token.
    Start,
    /// Sink that finalizes an instance, successfully or not.
    End,
    /// Plain relay between two neighbours in a sequence.
    Junction,
    /// Probabilistic fork of a selection; `targets[i]` is taken with
    /// `probabilities[i]`.
    Branch {
        probabilities: Vec<f64>,
        targets: Vec<String>,
    },
    /// Join of a selection: relays whatever arrives.
    Merge,
    /// Parallel split: relays the token to every outgoing binding.
    Fork,
    /// Parallel join: waits for all branches; any branch failure fails the
    /// block.
    Join { expect: usize },
    /// Loop head; the paired exit returns the token here between turns.
    LoopEnter,
    /// Loop tail: sends the token back `k - 1` times, then onward.
    LoopExit { k: u32, enter: String },
    /// Measurement probe on the path; records, never delays.
    Interceptor { property: String, role: InterceptRole },
    /// Off-path element a measurable property is computed at.
    Checkpoint { property: String },
    /// Detour taking the place of a skipped region.
    Bypass,
    /// Race split introduced by the parallel tactic; `paired` names the
    /// join the race resolves at.
    ParallelOut { paired: String },
    /// Race join: first success wins; all failures fail the instance.
    ParallelIn { expect: usize },
    /// Failover split: dispatches to the primary first.
    SerialOut { primary: String, secondary: String },
    /// Failover join: on primary failure, replays the input to the
    /// secondary via the paired split.
    SerialIn { paired: String },
    /// Input capture for retries; replays on a signal from its condition.
    ReExecOut,
    /// Retry guard: sends failures back until the predicate or the cap.
    Condition {
        predicate: String,
        max_retries: u32,
        paired: String,
    },
    /// Shrinks payloads; adds processing latency and battery drain.
    CompressorOut { ratio: f64, proc_ms: f64 },
    /// Decompression peer; adds the same overheads.
    CompressorIn { proc_ms: f64 },
    /// Payload transformation by a named delegate.
    DataModifier { function: String, factor: f64 },
    /// Answer fraction `hit_ratio` of requests without invoking the target.
    Cache {
        hit_ratio: f64,
        filter: String,
        miss_target: String,
    },
    /// Holds messages while the link is down; drains on recovery.
    Queue,
}

impl ConnectorKind {
    /// Discriminant name, mirrored as the connector type in the context.
    pub fn name(&self) -> &'static str {
        match self {
            ConnectorKind::Start => "Start",
            ConnectorKind::End => "End",
            ConnectorKind::Junction => "Junction",
            ConnectorKind::Branch { .. } => "Branch",
            ConnectorKind::Merge => "Merge",
            ConnectorKind::Fork => "Fork",
            ConnectorKind::Join { .. } => "Join",
            ConnectorKind::LoopEnter => "LoopEnter",
            ConnectorKind::LoopExit { .. } => "LoopExit",
            ConnectorKind::Interceptor { .. } => "Interceptor",
            ConnectorKind::Checkpoint { .. } => "Checkpoint",
            ConnectorKind::Bypass => "Bypass",
            ConnectorKind::ParallelOut { .. } => "ParallelOut",
            ConnectorKind::ParallelIn { .. } => "ParallelIn",
            ConnectorKind::SerialOut { .. } => "SerialOut",
            ConnectorKind::SerialIn { .. } => "SerialIn",
            ConnectorKind::ReExecOut => "ReExecOut",
            ConnectorKind::Condition { .. } => "Condition",
            ConnectorKind::CompressorOut { .. } => "CompressorOut",
            ConnectorKind::CompressorIn { .. } => "CompressorIn",
            ConnectorKind::DataModifier { .. } => "DataModifier",
            ConnectorKind::Cache { .. } => "Cache",
            ConnectorKind::Queue => "Queue",
        }
    }
}

/// One element of the runtime architecture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Element {
    Component { service: String, provider: String },
    Connector(ConnectorKind),
}

impl Element {
    pub fn is_component(&self) -> bool {
        matches!(self, Element::Component { .. })
    }
}

/// Attach points of a named workflow region inside the runtime graph.
///
/// `first`/`last` bound the structural region; `outer_first`/`outer_last`
/// additionally include the region's own instrumentation, so tactics can
/// choose whether a change lands inside or outside the watched span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub first: String,
    pub last: String,
    pub outer_first: String,
    pub outer_last: String,
}

/// The executable architecture: elements, directed bindings, and named
/// regions. Mutated only through change actions or region patches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeModel {
    pub elements: BTreeMap<String, Element>,
    pub bindings: BTreeSet<(String, String)>,
    pub entry: String,
    pub exit: String,
    pub regions: BTreeMap<String, Region>,
}

impl RuntimeModel {
    pub fn component(&self, id: &str) -> Option<(&str, &str)> {
        match self.elements.get(id) {
            Some(Element::Component { service, provider }) => Some((service, provider)),
            _ => None,
        }
    }

    pub fn connector(&self, id: &str) -> Option<&ConnectorKind> {
        match self.elements.get(id) {
            Some(Element::Connector(kind)) => Some(kind),
            _ => None,
        }
    }

    pub fn bindings_into(&self, to: &str) -> Vec<String> {
        self.bindings
            .iter()
            .filter(|(_, t)| t == to)
            .map(|(f, _)| f.clone())
            .collect()
    }

    pub fn bindings_out_of(&self, from: &str) -> Vec<String> {
        self.bindings
            .iter()
            .filter(|(f, _)| f == from)
            .map(|(_, t)| t.clone())
            .collect()
    }

    pub fn region(&self, label: &str) -> Result<&Region, TransformError> {
        self.regions
            .get(label)
            .ok_or_else(|| TransformError::Model(ModelError::NotFound(format!("region '{label}'"))))
    }

    fn add_element(&mut self, id: &str, element: Element) {
        let previous = self.elements.insert(id.to_owned(), element);
        debug_assert!(previous.is_none(), "duplicate runtime element '{id}'");
    }

    fn bind(&mut self, from: &str, to: &str) {
        self.bindings.insert((from.to_owned(), to.to_owned()));
    }

    /// Splice `id` in front of `before`: every binding into `before` is
    /// retargeted at `id`, and `id` forwards to `before`. A loop's backedge
    /// stays put, so a probe on a whole loop sees entry and exit once per
    /// instance, not once per turn.
    fn splice_before(&mut self, id: &str, before: &str) {
        for source in self.bindings_into(before) {
            if matches!(self.connector(&source),
                Some(ConnectorKind::LoopExit { enter, .. }) if enter == before)
            {
                continue;
            }
            self.bindings.remove(&(source.clone(), before.to_owned()));
            self.bind(&source, id);
        }
        self.bind(id, before);
    }

    /// Splice `id` behind `after`: every binding out of `after` is re-sourced
    /// from `id`, and `after` forwards to `id`. Off-path edges stay put:
    /// checkpoint feeds keep their interceptor, and a loop's backedge keeps
    /// returning from the loop exit itself.
    fn splice_after(&mut self, id: &str, after: &str) {
        let backedge = match self.connector(after) {
            Some(ConnectorKind::LoopExit { enter, .. }) => Some(enter.clone()),
            _ => None,
        };
        for target in self.bindings_out_of(after) {
            if Some(&target) == backedge.as_ref() {
                continue;
            }
            if matches!(self.connector(&target), Some(ConnectorKind::Checkpoint { .. })) {
                continue;
            }
            self.bindings.remove(&(after.to_owned(), target.clone()));
            self.bind(id, &target);
        }
        self.bind(after, id);
    }
}

/// Build the instrumented runtime model for a validated design-time model.
///
/// Every measurable property lands as interceptors plus a checkpoint:
/// duration and failure watching need probes on both sides of the region,
/// the message-sampling kinds need only an exit probe, and computed kinds
/// need no probe at all.
pub fn transform(model: &AdaptiveProcessModel) -> Result<RuntimeModel, TransformError> {
    let mut runtime = RuntimeModel {
        elements: BTreeMap::new(),
        bindings: BTreeSet::new(),
        entry: "start".to_owned(),
        exit: "end".to_owned(),
        regions: BTreeMap::new(),
    };
    runtime.add_element("start", Element::Connector(ConnectorKind::Start));
    runtime.add_element("end", Element::Connector(ConnectorKind::End));

    let (first, last) = build(&model.workflow, "root", model, &mut runtime)?;
    runtime.bind("start", &first);
    runtime.bind(&last, "end");
    runtime.regions.insert(
        "root".to_owned(),
        Region {
            first: first.clone(),
            last: last.clone(),
            outer_first: first,
            outer_last: last,
        },
    );

    for qr in &model.quality_requirements {
        instrument(qr, &mut runtime)?;
    }
    Ok(runtime)
}

/// Recursively lay down the structural graph for `node`; returns the ids of
/// its first and last element.
fn build(
    node: &ProcessNode,
    path: &str,
    model: &AdaptiveProcessModel,
    runtime: &mut RuntimeModel,
) -> Result<(String, String), TransformError> {
    let span = match node {
        ProcessNode::Service { service, .. } => {
            let id = format!("{path}.SC:{service}");
            let provider = model.service(service)?.providers[0].provider_id.clone();
            runtime.add_element(
                &id,
                Element::Component {
                    service: service.clone(),
                    provider,
                },
            );
            (id.clone(), id)
        }
        ProcessNode::Seq { children, .. } => {
            let mut spans = Vec::with_capacity(children.len());
            for (i, child) in children.iter().enumerate() {
                spans.push(build(child, &format!("{path}.{i}"), model, runtime)?);
            }
            for (i, window) in spans.windows(2).enumerate() {
                let junction = format!("{path}.Con:Seq:{i}");
                runtime.add_element(&junction, Element::Connector(ConnectorKind::Junction));
                runtime.bind(&window[0].1, &junction);
                runtime.bind(&junction, &window[1].0);
            }
            (
                spans.first().expect("validated: non-empty").0.clone(),
                spans.last().expect("validated: non-empty").1.clone(),
            )
        }
        ProcessNode::Sel {
            probabilities,
            children,
            ..
        } => {
            let branch_id = format!("{path}.Con:Branch");
            let merge_id = format!("{path}.Con:Merge");
            let mut targets = Vec::with_capacity(children.len());
            runtime.add_element(&merge_id, Element::Connector(ConnectorKind::Merge));
            for (i, child) in children.iter().enumerate() {
                let arm = format!("{path}.Con:Arm:{i}");
                runtime.add_element(&arm, Element::Connector(ConnectorKind::Junction));
                let (first, last) = build(child, &format!("{path}.{i}"), model, runtime)?;
                runtime.bind(&arm, &first);
                runtime.bind(&last, &merge_id);
                targets.push(arm);
            }
            runtime.add_element(
                &branch_id,
                Element::Connector(ConnectorKind::Branch {
                    probabilities: probabilities.clone(),
                    targets: targets.clone(),
                }),
            );
            for arm in &targets {
                runtime.bind(&branch_id, arm);
            }
            (branch_id, merge_id)
        }
        ProcessNode::AndPar { children, .. } => {
            let fork_id = format!("{path}.Con:Fork");
            let join_id = format!("{path}.Con:Join");
            runtime.add_element(&fork_id, Element::Connector(ConnectorKind::Fork));
            runtime.add_element(
                &join_id,
                Element::Connector(ConnectorKind::Join {
                    expect: children.len(),
                }),
            );
            for (i, child) in children.iter().enumerate() {
                let (first, last) = build(child, &format!("{path}.{i}"), model, runtime)?;
                runtime.bind(&fork_id, &first);
                runtime.bind(&last, &join_id);
            }
            (fork_id, join_id)
        }
        ProcessNode::Loop { k, child, .. } => {
            let enter_id = format!("{path}.Con:LoopEnter");
            let exit_id = format!("{path}.Con:LoopExit");
            runtime.add_element(&enter_id, Element::Connector(ConnectorKind::LoopEnter));
            runtime.add_element(
                &exit_id,
                Element::Connector(ConnectorKind::LoopExit {
                    k: *k,
                    enter: enter_id.clone(),
                }),
            );
            let (first, last) = build(child, &format!("{path}.0"), model, runtime)?;
            runtime.bind(&enter_id, &first);
            runtime.bind(&last, &exit_id);
            runtime.bind(&exit_id, &enter_id);
            (enter_id, exit_id)
        }
        ProcessNode::Opt { p_take, child, .. } => {
            let branch_id = format!("{path}.Con:Branch");
            let merge_id = format!("{path}.Con:Merge");
            let arm_take = format!("{path}.Con:Arm:0");
            let arm_skip = format!("{path}.Con:Arm:1");
            runtime.add_element(&merge_id, Element::Connector(ConnectorKind::Merge));
            runtime.add_element(&arm_take, Element::Connector(ConnectorKind::Junction));
            runtime.add_element(&arm_skip, Element::Connector(ConnectorKind::Junction));
            runtime.add_element(
                &branch_id,
                Element::Connector(ConnectorKind::Branch {
                    probabilities: vec![*p_take, 1.0 - *p_take],
                    targets: vec![arm_take.clone(), arm_skip.clone()],
                }),
            );
            let (first, last) = build(child, &format!("{path}.0"), model, runtime)?;
            runtime.bind(&branch_id, &arm_take);
            runtime.bind(&branch_id, &arm_skip);
            runtime.bind(&arm_take, &first);
            runtime.bind(&last, &merge_id);
            runtime.bind(&arm_skip, &merge_id);
            (branch_id, merge_id)
        }
    };

    if let Some(label) = node.label() {
        runtime.regions.insert(
            label.to_owned(),
            Region {
                first: span.0.clone(),
                last: span.1.clone(),
                outer_first: span.0.clone(),
                outer_last: span.1.clone(),
            },
        );
    }
    Ok(span)
}

/// Attach the probes and checkpoint for one requirement, widening the
/// target region's outer boundary as instrumentation lands on it.
fn instrument(qr: &QualityRequirement, runtime: &mut RuntimeModel) -> Result<(), TransformError> {
    let property = &qr.property.name;
    let region = runtime.region(&qr.target)?.clone();
    let checkpoint_id = format!("chk.{property}");

    let (entry_probe, exit_probe) = match qr.property.kind {
        PropertyKind::Time | PropertyKind::Failure => (true, true),
        PropertyKind::Count | PropertyKind::Data { .. } | PropertyKind::Constraint { .. } => {
            (false, true)
        }
        PropertyKind::Derived { .. } | PropertyKind::Aggregated { .. } => (false, false),
    };

    let mut new_outer_first = None;
    let mut new_outer_last = None;
    if entry_probe {
        let id = format!("icpt.in.{property}");
        runtime.add_element(
            &id,
            Element::Connector(ConnectorKind::Interceptor {
                property: property.clone(),
                role: InterceptRole::Entry,
            }),
        );
        runtime.splice_before(&id, &region.outer_first);
        new_outer_first = Some(id);
    }
    if exit_probe {
        let id = format!("icpt.out.{property}");
        runtime.add_element(
            &id,
            Element::Connector(ConnectorKind::Interceptor {
                property: property.clone(),
                role: InterceptRole::Exit,
            }),
        );
        runtime.splice_after(&id, &region.outer_last);
        new_outer_last = Some(id);
    }

    runtime.add_element(
        &checkpoint_id,
        Element::Connector(ConnectorKind::Checkpoint {
            property: property.clone(),
        }),
    );
    // The checkpoint hangs off the exit probe when one exists; computed
    // properties have no probe and leave it free-standing.
    if let Some(exit_id) = &new_outer_last {
        runtime.bind(exit_id, &checkpoint_id);
    }

    let region = runtime
        .regions
        .get_mut(&qr.target)
        .expect("region existence checked above");
    if let Some(id) = new_outer_first {
        region.outer_first = id;
    }
    if let Some(id) = new_outer_last {
        region.outer_last = id;
    }
    Ok(())
}
