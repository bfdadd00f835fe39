//! Design-time process models: a workflow tree annotated with quality
//! requirements and adaptation plans, plus the service catalog and an
//! optional scenario script that drives simulated runs.

mod doc;
mod parse;
mod validate;

pub use parse::{from_json, to_json};
pub use validate::{parse_constraint, ExpressionOp, DATA_DELEGATES};

use std::collections::BTreeMap;

use thiserror::Error;

/// Errors produced while loading or validating a model file.
#[derive(Debug, Error)]
pub enum ModelError {
    /// The input is not well-formed JSON or does not match the schema.
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// The input parsed but violates a model invariant. `element` names
    /// the offending node, service, requirement, or plan.
    #[error("invalid model: {element}: {message}")]
    Validation { element: String, message: String },
    /// A lookup by label or name found nothing.
    #[error("unknown element: {0}")]
    NotFound(String),
}

impl ModelError {
    pub fn validation(element: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Validation {
            element: element.into(),
            message: message.into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Workflow tree
// ---------------------------------------------------------------------------

/// One node of the workflow tree.
///
/// Every composite owns its children directly; sharing is expressed by two
/// service nodes naming the same catalog entry, never by aliasing nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessNode {
    /// Children run one after another.
    Seq {
        label: Option<String>,
        children: Vec<ProcessNode>,
    },
    /// The child runs `k` times back to back.
    Loop {
        label: Option<String>,
        k: u32,
        child: Box<ProcessNode>,
    },
    /// Exactly one child runs, picked by the paired probabilities.
    Sel {
        label: Option<String>,
        probabilities: Vec<f64>,
        children: Vec<ProcessNode>,
    },
    /// All children run concurrently; the block ends when the slowest does.
    AndPar {
        label: Option<String>,
        children: Vec<ProcessNode>,
    },
    /// The child runs with probability `p_take`, otherwise nothing does.
    Opt {
        label: Option<String>,
        p_take: f64,
        child: Box<ProcessNode>,
    },
    /// A single invocation of a catalog service.
    Service {
        label: Option<String>,
        service: String,
    },
}

impl ProcessNode {
    pub fn label(&self) -> Option<&str> {
        match self {
            ProcessNode::Seq { label, .. }
            | ProcessNode::Loop { label, .. }
            | ProcessNode::Sel { label, .. }
            | ProcessNode::AndPar { label, .. }
            | ProcessNode::Opt { label, .. }
            | ProcessNode::Service { label, .. } => label.as_deref(),
        }
    }

    /// Direct children, in declaration order.
    pub fn children(&self) -> &[ProcessNode] {
        match self {
            ProcessNode::Seq { children, .. }
            | ProcessNode::Sel { children, .. }
            | ProcessNode::AndPar { children, .. } => children,
            ProcessNode::Loop { child, .. } | ProcessNode::Opt { child, .. } => {
                std::slice::from_ref(child)
            }
            ProcessNode::Service { .. } => &[],
        }
    }

    /// Depth-first preorder walk over the subtree, including `self`.
    /// The visitor sees each node's path: `"root"`, `"root.0"`, ...
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&str, &'a ProcessNode)) {
        fn go<'a>(node: &'a ProcessNode, path: &mut String, f: &mut dyn FnMut(&str, &'a ProcessNode)) {
            f(path, node);
            let len = path.len();
            for (i, child) in node.children().iter().enumerate() {
                path.push('.');
                path.push_str(&i.to_string());
                go(child, path, f);
                path.truncate(len);
            }
        }
        let mut path = String::from("root");
        go(self, &mut path, f);
    }
}

// ---------------------------------------------------------------------------
// Service catalog
// ---------------------------------------------------------------------------

/// A catalog entry: one abstract service with its concrete providers.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSpec {
    pub name: String,
    pub providers: Vec<ProviderSpec>,
}

/// Simulation parameters for one concrete provider of a service.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSpec {
    /// Unique across the whole catalog; scenario events address providers by it.
    pub provider_id: String,
    pub latency_mean_ms: f64,
    pub latency_stddev_ms: f64,
    pub failure_probability: f64,
    pub cost: f64,
    /// Size of the response payload this provider emits.
    pub payload_bytes: u64,
}

// ---------------------------------------------------------------------------
// Quality requirements
// ---------------------------------------------------------------------------

/// How a measurable property is computed from raw observations.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    /// Wall-clock duration of the target block, per instance.
    Time,
    /// A numeric field sampled from messages leaving the target, e.g.
    /// `payload_bytes`.
    Data { expression: String },
    /// 1.0 when the target block fails for an instance, 0.0 when it completes.
    Failure,
    /// Cumulative number of completions of the target block.
    Count,
    /// Boolean check over a message field: 1.0 when it holds, 0.0 otherwise.
    Constraint { expression: String },
    /// Arithmetic combination of other properties of the same instance.
    Derived { function: String, inputs: Vec<String> },
    /// Statistic over a base property's samples inside the sliding window.
    Aggregated {
        function: AggregateFn,
        base: String,
    },
}

impl PropertyKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PropertyKind::Time => "time",
            PropertyKind::Data { .. } => "data",
            PropertyKind::Failure => "failure",
            PropertyKind::Count => "count",
            PropertyKind::Constraint { .. } => "constraint",
            PropertyKind::Derived { .. } => "derived",
            PropertyKind::Aggregated { .. } => "aggregated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateFn {
    Sum,
    Average,
    Min,
    Max,
    /// Fraction of samples equal to zero. Over a failure property this is
    /// exactly the observed availability.
    Ratio,
}

impl AggregateFn {
    pub fn name(self) -> &'static str {
        match self {
            AggregateFn::Sum => "sum",
            AggregateFn::Average => "average",
            AggregateFn::Min => "min",
            AggregateFn::Max => "max",
            AggregateFn::Ratio => "ratio",
        }
    }
}

/// A named measurable property attached to a quality requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurableProperty {
    /// Unique across all requirements; derived and aggregated properties
    /// refer to others by this name.
    pub name: String,
    pub kind: PropertyKind,
}

/// Which direction of the measured value is good.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Smaller is better: below `x1` acceptable, above `x2` unacceptable.
    LowerIsBetter,
    /// Larger is better: above `x2` acceptable, below `x1` unacceptable.
    HigherIsBetter,
}

/// How often the property is evaluated against its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeInterval {
    /// Classify every individual measurement.
    PerInstance,
    /// Classify the mean of measurements inside a sliding window.
    SlidingWindow { window_ms: u64 },
}

/// Three-band membership function: acceptable / tolerable / unacceptable,
/// with the tolerable band spanning `[x1, x2]` (boundaries included).
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyMembership {
    pub orientation: Orientation,
    pub x1: f64,
    pub x2: f64,
    pub interval: TimeInterval,
}

/// A quality requirement: a property of one workflow block, thresholds for
/// it, and the trigger raised when it degrades.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRequirement {
    pub name: String,
    /// Label of the workflow node the requirement observes.
    pub target: String,
    pub property: MeasurableProperty,
    pub membership: FuzzyMembership,
    /// Event name raised on degradation; adaptation plans subscribe to it.
    pub trigger: String,
}

// ---------------------------------------------------------------------------
// Adaptation plans
// ---------------------------------------------------------------------------

/// The ten reconfiguration tactics a plan may invoke, plus a queue insertion
/// used to ride out link outages.
#[derive(Debug, Clone, PartialEq)]
pub enum TacticInvocation {
    /// Bypass a region: `skip(R)`.
    Skip { region: String },
    /// Splice a catalog service behind an element: `add(E, S)`.
    Add { after: String, service: String },
    /// Swap a region for a catalog service: `replace(R, S)`.
    Replace { region: String, service: String },
    /// Race two existing components, first success wins: `parallel(E, S)`.
    Parallel { primary: String, secondary: String },
    /// Fail over from one component to another: `serial(E, S)`.
    Serial { primary: String, secondary: String },
    /// Retry a component until a condition holds: `reexecute(E, cond)`.
    ReExecute { target: String, condition: String },
    /// Compress payloads between two components: `compress(E1, E2)`.
    Compress { from: String, to: String },
    /// Merge messages between two components: `aggregate(E1, E2, f)`.
    Aggregate {
        from: String,
        to: String,
        function: String,
    },
    /// Shrink messages leaving a component: `reduce(E, f)`.
    Reduce { target: String, function: String },
    /// Answer repeated requests from a cache: `cache(E, filter)`.
    Cache { target: String, filter: String },
    /// Buffer messages leaving a component while the link is down:
    /// `add_queue(E)`.
    AddQueue { target: String },
}

impl TacticInvocation {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TacticInvocation::Skip { .. } => "skip",
            TacticInvocation::Add { .. } => "add",
            TacticInvocation::Replace { .. } => "replace",
            TacticInvocation::Parallel { .. } => "parallel",
            TacticInvocation::Serial { .. } => "serial",
            TacticInvocation::ReExecute { .. } => "reexecute",
            TacticInvocation::Compress { .. } => "compress",
            TacticInvocation::Aggregate { .. } => "aggregate",
            TacticInvocation::Reduce { .. } => "reduce",
            TacticInvocation::Cache { .. } => "cache",
            TacticInvocation::AddQueue { .. } => "add_queue",
        }
    }

    /// Argument list in declaration order, for diagnostics and traces.
    pub fn args(&self) -> Vec<&str> {
        match self {
            TacticInvocation::Skip { region } => vec![region],
            TacticInvocation::Add { after, service } => vec![after, service],
            TacticInvocation::Replace { region, service } => vec![region, service],
            TacticInvocation::Parallel { primary, secondary }
            | TacticInvocation::Serial { primary, secondary } => vec![primary, secondary],
            TacticInvocation::ReExecute { target, condition } => vec![target, condition],
            TacticInvocation::Compress { from, to } => vec![from, to],
            TacticInvocation::Aggregate { from, to, function } => vec![from, to, function],
            TacticInvocation::Reduce { target, function } => vec![target, function],
            TacticInvocation::Cache { target, filter } => vec![target, filter],
            TacticInvocation::AddQueue { target } => vec![target],
        }
    }
}

/// One step in a plan's flow.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanFlowNode {
    /// Apply a tactic, guarded by assumptions that must hold in the context.
    Tactic {
        invocation: TacticInvocation,
        pre_assumptions: Vec<String>,
    },
    /// Ordered variations; the first whose guards hold is taken.
    Alternative { variations: Vec<Vec<PlanFlowNode>> },
    /// Raise a follow-up trigger, typically `Falsify: <assumption>`.
    Emit { trigger: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Logged only.
    Soft,
    /// Retracts the assumption and raises `Falsify: <assumption>`.
    Hard,
}

/// An assumption the plan knowingly invalidates when it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FalseAssumption {
    pub severity: Severity,
    pub assumption: String,
}

/// An adaptation plan: subscribed trigger, guard assumptions, a flow of
/// tactic applications, and the assumptions it falsifies.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationPlan {
    pub name: String,
    pub trigger: String,
    pub pre_assumptions: Vec<String>,
    pub flow: Vec<PlanFlowNode>,
    pub false_assumptions: Vec<FalseAssumption>,
}

// ---------------------------------------------------------------------------
// Scenario script
// ---------------------------------------------------------------------------

/// External stimuli applied to a simulated run at fixed times.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub seed: u64,
    pub horizon_ms: u64,
    /// Sorted by `at_ms`; ties keep declaration order.
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub at_ms: u64,
    pub action: ScenarioAction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioAction {
    /// Begin launching workflow instances at a fixed rate.
    StartInstances { rate_per_s: f64 },
    /// Mark an environment assumption as holding.
    AssertAssumption { name: String },
    /// Mark an environment assumption as no longer holding.
    RetractAssumption { name: String },
    /// Override one provider's failure probability.
    SetProviderFailure { provider: String, p: f64 },
    /// Override one provider's latency distribution.
    SetProviderLatency {
        provider: String,
        mean_ms: f64,
        stddev_ms: f64,
    },
    /// Change link bandwidth; zero means the link is down.
    SetBandwidth { bytes_per_ms: f64 },
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

/// A complete adaptive process model as loaded from a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveProcessModel {
    pub workflow: ProcessNode,
    pub services: Vec<ServiceSpec>,
    pub quality_requirements: Vec<QualityRequirement>,
    pub adaptation_plans: Vec<AdaptationPlan>,
    pub scenario: Option<ScenarioScript>,
}

impl AdaptiveProcessModel {
    /// Find a workflow node by label. The root answers to `"root"` even
    /// when the file leaves it unlabeled.
    pub fn resolve_label(&self, label: &str) -> Result<&ProcessNode, ModelError> {
        let mut found = None;
        self.workflow.walk(&mut |path, node| {
            if found.is_some() {
                return;
            }
            if node.label() == Some(label) || (path == "root" && label == "root") {
                found = Some(node);
            }
        });
        found.ok_or_else(|| ModelError::NotFound(format!("workflow node '{label}'")))
    }

    pub fn service(&self, name: &str) -> Result<&ServiceSpec, ModelError> {
        self.services
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ModelError::NotFound(format!("service '{name}'")))
    }

    /// Provider lookup across the whole catalog; ids are globally unique.
    pub fn provider(&self, id: &str) -> Result<&ProviderSpec, ModelError> {
        self.services
            .iter()
            .flat_map(|s| &s.providers)
            .find(|p| p.provider_id == id)
            .ok_or_else(|| ModelError::NotFound(format!("provider '{id}'")))
    }

    /// All measurable properties by name, across requirements.
    pub fn properties(&self) -> BTreeMap<&str, &MeasurableProperty> {
        self.quality_requirements
            .iter()
            .map(|qr| (qr.property.name.as_str(), &qr.property))
            .collect()
    }

    /// Check every model invariant; parsing calls this before returning.
    pub fn validate(&self) -> Result<(), ModelError> {
        validate::validate(self)
    }
}
