//! Semantic validation of a parsed model. Every rejection names the element
//! it blames so file authors can find it without byte offsets.

use std::collections::{BTreeMap, BTreeSet};

use super::*;

/// Retry predicates accepted by `reexecute`.
pub const REEXEC_CONDITIONS: &[&str] = &["until_success"];

/// Payload transformations accepted by `aggregate` and `reduce`, with the
/// factor they apply to the payload size they pass on.
pub const DATA_DELEGATES: &[(&str, f64)] = &[
    ("strip_metadata", 0.6),
    ("downsample", 0.4),
    ("batch_merge", 0.8),
];

/// Combinators accepted by derived properties. `diff` and `ratio` are
/// binary, the rest fold any number of inputs.
pub const DERIVED_FUNCTIONS: &[&str] = &["sum", "diff", "product", "ratio", "min", "max"];

/// Message fields a data property or constraint may sample.
pub const MESSAGE_FIELDS: &[&str] = &["payload_bytes"];

/// Comparison operators usable in constraint expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpressionOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl ExpressionOp {
    pub fn eval(self, lhs: f64, rhs: f64) -> bool {
        match self {
            ExpressionOp::Lt => lhs < rhs,
            ExpressionOp::Le => lhs <= rhs,
            ExpressionOp::Gt => lhs > rhs,
            ExpressionOp::Ge => lhs >= rhs,
            ExpressionOp::Eq => lhs == rhs,
            ExpressionOp::Ne => lhs != rhs,
        }
    }
}

/// Parse `field op number`, e.g. `payload_bytes <= 4096`.
pub fn parse_constraint(expr: &str) -> Result<(String, ExpressionOp, f64), String> {
    let tokens: Vec<&str> = expr.split_whitespace().collect();
    let [field, op, value] = tokens.as_slice() else {
        return Err(format!(
            "expected 'field op number', found {} token(s)",
            tokens.len()
        ));
    };
    if !MESSAGE_FIELDS.contains(field) {
        return Err(format!("unknown message field '{field}'"));
    }
    let op = match *op {
        "<" => ExpressionOp::Lt,
        "<=" => ExpressionOp::Le,
        ">" => ExpressionOp::Gt,
        ">=" => ExpressionOp::Ge,
        "==" => ExpressionOp::Eq,
        "!=" => ExpressionOp::Ne,
        other => return Err(format!("unknown operator '{other}'")),
    };
    let value: f64 = value
        .parse()
        .map_err(|_| format!("'{value}' is not a number"))?;
    Ok(((*field).to_owned(), op, value))
}

pub(super) fn validate(model: &AdaptiveProcessModel) -> Result<(), ModelError> {
    validate_services(model)?;
    let labels = validate_workflow(model)?;
    validate_requirements(model, &labels)?;
    validate_plans(model, &labels)?;
    validate_scenario(model)?;
    Ok(())
}

fn validate_services(model: &AdaptiveProcessModel) -> Result<(), ModelError> {
    let mut names = BTreeSet::new();
    let mut provider_ids = BTreeSet::new();
    for s in &model.services {
        let element = format!("service '{}'", s.name);
        if !names.insert(&s.name) {
            return Err(ModelError::validation(element, "duplicate service name"));
        }
        if s.providers.is_empty() {
            return Err(ModelError::validation(element, "a service needs at least one provider"));
        }
        for p in &s.providers {
            let pel = format!("provider '{}'", p.provider_id);
            if !provider_ids.insert(&p.provider_id) {
                return Err(ModelError::validation(pel, "duplicate provider id"));
            }
            let finite_nonneg = |v: f64, what: &str| -> Result<(), ModelError> {
                if !v.is_finite() || v < 0.0 {
                    Err(ModelError::validation(
                        pel.clone(),
                        format!("{what} must be finite and non-negative, found {v}"),
                    ))
                } else {
                    Ok(())
                }
            };
            finite_nonneg(p.latency_mean_ms, "latency_mean_ms")?;
            finite_nonneg(p.latency_stddev_ms, "latency_stddev_ms")?;
            finite_nonneg(p.cost, "cost")?;
            if !(0.0..=1.0).contains(&p.failure_probability) {
                return Err(ModelError::validation(
                    pel,
                    format!(
                        "failure_probability must lie in [0, 1], found {}",
                        p.failure_probability
                    ),
                ));
            }
        }
    }
    Ok(())
}

/// Returns the set of labels for later reference checks.
fn validate_workflow(model: &AdaptiveProcessModel) -> Result<BTreeSet<String>, ModelError> {
    let mut labels = BTreeSet::new();
    let mut err = None;
    model.workflow.walk(&mut |path, node| {
        if err.is_some() {
            return;
        }
        let element = node
            .label()
            .map(|l| format!("node '{l}'"))
            .unwrap_or_else(|| format!("node {path}"));
        let mut fail = |msg: String| err = Some(ModelError::validation(element.clone(), msg));

        if let Some(label) = node.label() {
            if label == "root" && path != "root" {
                fail("the label 'root' is reserved for the root node".into());
                return;
            }
            if !labels.insert(label.to_owned()) {
                fail(format!("label '{label}' is used by more than one node"));
                return;
            }
        }
        match node {
            ProcessNode::Seq { children, .. } | ProcessNode::AndPar { children, .. } => {
                if children.is_empty() {
                    fail("composite nodes need at least one child".into());
                }
            }
            ProcessNode::Loop { k, .. } => {
                if *k == 0 {
                    fail("a loop must run at least once (k >= 1)".into());
                }
            }
            ProcessNode::Sel {
                probabilities,
                children,
                ..
            } => {
                if children.is_empty() {
                    fail("composite nodes need at least one child".into());
                } else if probabilities.len() != children.len() {
                    fail(format!(
                        "{} probabilities for {} branches",
                        probabilities.len(),
                        children.len()
                    ));
                } else if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    fail("branch probabilities must lie in [0, 1]".into());
                } else {
                    let sum: f64 = probabilities.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        fail(format!("branch probabilities must sum to 1, found {sum}"));
                    }
                }
            }
            ProcessNode::Opt { p_take, .. } => {
                if !(0.0..=1.0).contains(p_take) {
                    fail(format!("opt probability must lie in [0, 1], found {p_take}"));
                }
            }
            ProcessNode::Service { service, .. } => {
                if model.service(service).is_err() {
                    fail(format!("references unknown service '{service}'"));
                }
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => {
            labels.insert("root".to_owned());
            Ok(labels)
        }
    }
}

fn validate_requirements(
    model: &AdaptiveProcessModel,
    labels: &BTreeSet<String>,
) -> Result<(), ModelError> {
    let mut qr_names = BTreeSet::new();
    let mut prop_names = BTreeSet::new();
    for qr in &model.quality_requirements {
        let element = format!("requirement '{}'", qr.name);
        let fail = |msg: String| Err(ModelError::validation(element.clone(), msg));
        if !qr_names.insert(&qr.name) {
            return fail("duplicate requirement name".into());
        }
        if !prop_names.insert(&qr.property.name) {
            return fail(format!("duplicate property name '{}'", qr.property.name));
        }
        if !labels.contains(&qr.target) {
            return fail(format!("target '{}' is not a labeled workflow node", qr.target));
        }
        if qr.trigger.is_empty() {
            return fail("trigger must not be empty".into());
        }
        let m = &qr.membership;
        if !m.x1.is_finite() || !m.x2.is_finite() || m.x1 > m.x2 {
            return fail(format!(
                "thresholds must be finite with x1 <= x2, found x1={} x2={}",
                m.x1, m.x2
            ));
        }
        if let TimeInterval::SlidingWindow { window_ms } = m.interval {
            if window_ms == 0 {
                return fail("sliding window must be at least 1 ms".into());
            }
        }
    }

    // Property cross-references and derived-cycle detection need the full
    // name table, so they run as a second pass.
    let props = model.properties();
    for qr in &model.quality_requirements {
        let element = format!("requirement '{}'", qr.name);
        let fail = |msg: String| Err(ModelError::validation(element.clone(), msg));
        match &qr.property.kind {
            PropertyKind::Data { expression } => {
                if !MESSAGE_FIELDS.contains(&expression.as_str()) {
                    return fail(format!("unknown message field '{expression}'"));
                }
            }
            PropertyKind::Constraint { expression } => {
                if let Err(e) = parse_constraint(expression) {
                    return fail(format!("bad constraint expression: {e}"));
                }
            }
            PropertyKind::Derived { function, inputs } => {
                if !DERIVED_FUNCTIONS.contains(&function.as_str()) {
                    return fail(format!("unknown derived function '{function}'"));
                }
                let binary = matches!(function.as_str(), "diff" | "ratio");
                if binary && inputs.len() != 2 {
                    return fail(format!("'{function}' takes exactly two inputs"));
                }
                if inputs.is_empty() {
                    return fail("a derived property needs at least one input".into());
                }
                for input in inputs {
                    match props.get(input.as_str()) {
                        None => return fail(format!("unknown input property '{input}'")),
                        Some(p) if matches!(p.kind, PropertyKind::Aggregated { .. }) => {
                            return fail(format!(
                                "input '{input}' is aggregated; derived properties combine per-instance values"
                            ))
                        }
                        Some(_) => {}
                    }
                }
            }
            PropertyKind::Aggregated { base, .. } => {
                match props.get(base.as_str()) {
                    None => return fail(format!("unknown base property '{base}'")),
                    Some(p) if matches!(p.kind, PropertyKind::Aggregated { .. }) => {
                        return fail("aggregating an aggregated property is not supported".into())
                    }
                    Some(_) => {}
                }
                if !matches!(qr.membership.interval, TimeInterval::SlidingWindow { .. }) {
                    return fail("an aggregated property needs a sliding window interval".into());
                }
            }
            PropertyKind::Time | PropertyKind::Failure | PropertyKind::Count => {}
        }
    }

    detect_derived_cycles(model)
}

fn detect_derived_cycles(model: &AdaptiveProcessModel) -> Result<(), ModelError> {
    let props = model.properties();
    // 0 = unvisited, 1 = on stack, 2 = done.
    let mut state: BTreeMap<String, u8> = BTreeMap::new();
    fn visit(
        name: &str,
        props: &BTreeMap<&str, &MeasurableProperty>,
        state: &mut BTreeMap<String, u8>,
    ) -> Result<(), ModelError> {
        match state.get(name) {
            Some(1) => {
                return Err(ModelError::validation(
                    format!("property '{name}'"),
                    "derived properties form a cycle",
                ))
            }
            Some(2) => return Ok(()),
            _ => {}
        }
        state.insert(name.to_owned(), 1);
        if let Some(MeasurableProperty {
            kind: PropertyKind::Derived { inputs, .. },
            ..
        }) = props.get(name)
        {
            for input in inputs {
                if props.contains_key(input.as_str()) {
                    visit(input, props, state)?;
                }
            }
        }
        state.insert(name.to_owned(), 2);
        Ok(())
    }
    for name in props.keys() {
        visit(name, &props, &mut state)?;
    }
    Ok(())
}

fn validate_plans(
    model: &AdaptiveProcessModel,
    labels: &BTreeSet<String>,
) -> Result<(), ModelError> {
    // Triggers a plan may legally subscribe to: requirement triggers,
    // falsification events of hard false assumptions, and emitted triggers.
    let mut produced: BTreeSet<String> = model
        .quality_requirements
        .iter()
        .map(|qr| qr.trigger.clone())
        .collect();
    for plan in &model.adaptation_plans {
        for fa in &plan.false_assumptions {
            if fa.severity == Severity::Hard {
                produced.insert(format!("Falsify: {}", fa.assumption));
            }
        }
        collect_emits(&plan.flow, &mut produced);
    }

    let mut plan_names = BTreeSet::new();
    for plan in &model.adaptation_plans {
        let element = format!("plan '{}'", plan.name);
        let fail = |msg: String| Err(ModelError::validation(element.clone(), msg));
        if !plan_names.insert(&plan.name) {
            return fail("duplicate plan name".into());
        }
        if plan.trigger.is_empty() {
            return fail("trigger must not be empty".into());
        }
        if !produced.contains(&plan.trigger) {
            return fail(format!(
                "trigger '{}' is not raised by any requirement, falsification, or emit",
                plan.trigger
            ));
        }
        if plan.flow.is_empty() {
            return fail("flow must not be empty".into());
        }
        validate_flow(&plan.flow, &element, model, labels)?;
        for fa in &plan.false_assumptions {
            if fa.assumption.is_empty() {
                return fail("false assumption name must not be empty".into());
            }
        }
    }
    Ok(())
}

fn collect_emits(flow: &[PlanFlowNode], out: &mut BTreeSet<String>) {
    for node in flow {
        match node {
            PlanFlowNode::Emit { trigger } => {
                out.insert(trigger.clone());
            }
            PlanFlowNode::Alternative { variations } => {
                for v in variations {
                    collect_emits(v, out);
                }
            }
            PlanFlowNode::Tactic { .. } => {}
        }
    }
}

fn validate_flow(
    flow: &[PlanFlowNode],
    element: &str,
    model: &AdaptiveProcessModel,
    labels: &BTreeSet<String>,
) -> Result<(), ModelError> {
    let fail = |msg: String| Err(ModelError::validation(element.to_owned(), msg));
    for node in flow {
        match node {
            PlanFlowNode::Tactic { invocation, .. } => {
                validate_invocation(invocation, element, model, labels)?
            }
            PlanFlowNode::Alternative { variations } => {
                if variations.is_empty() {
                    return fail("an alternative needs at least one variation".into());
                }
                for v in variations {
                    if v.is_empty() {
                        return fail("an alternative variation must not be empty".into());
                    }
                    validate_flow(v, element, model, labels)?;
                }
            }
            PlanFlowNode::Emit { trigger } => {
                if trigger.is_empty() {
                    return fail("emitted trigger must not be empty".into());
                }
            }
        }
    }
    Ok(())
}

fn validate_invocation(
    inv: &TacticInvocation,
    element: &str,
    model: &AdaptiveProcessModel,
    labels: &BTreeSet<String>,
) -> Result<(), ModelError> {
    let kind = inv.kind_name();
    let node_arg = |arg: &str| -> Result<(), ModelError> {
        if labels.contains(arg) {
            Ok(())
        } else {
            Err(ModelError::validation(
                element.to_owned(),
                format!("tactic '{kind}' references '{arg}', which is not a labeled workflow node"),
            ))
        }
    };
    let service_arg = |arg: &str| -> Result<(), ModelError> {
        if model.service(arg).is_ok() {
            Ok(())
        } else {
            Err(ModelError::validation(
                element.to_owned(),
                format!("tactic '{kind}' references unknown service '{arg}'"),
            ))
        }
    };
    match inv {
        TacticInvocation::Skip { region } => node_arg(region),
        TacticInvocation::Add { after, service } => {
            node_arg(after)?;
            service_arg(service)
        }
        TacticInvocation::Replace { region, service } => {
            node_arg(region)?;
            service_arg(service)
        }
        TacticInvocation::Parallel { primary, secondary }
        | TacticInvocation::Serial { primary, secondary } => {
            node_arg(primary)?;
            node_arg(secondary)
        }
        TacticInvocation::ReExecute { target, condition } => {
            node_arg(target)?;
            if REEXEC_CONDITIONS.contains(&condition.as_str()) {
                Ok(())
            } else {
                Err(ModelError::validation(
                    element.to_owned(),
                    format!("unknown retry condition '{condition}'"),
                ))
            }
        }
        TacticInvocation::Compress { from, to } => {
            node_arg(from)?;
            node_arg(to)
        }
        TacticInvocation::Aggregate { from, to, function } => {
            node_arg(from)?;
            node_arg(to)?;
            delegate_arg(function, element)
        }
        TacticInvocation::Reduce { target, function } => {
            node_arg(target)?;
            delegate_arg(function, element)
        }
        TacticInvocation::Cache { target, filter } => {
            node_arg(target)?;
            if filter.is_empty() {
                Err(ModelError::validation(
                    element.to_owned(),
                    "cache filter must not be empty".to_owned(),
                ))
            } else {
                Ok(())
            }
        }
        TacticInvocation::AddQueue { target } => node_arg(target),
    }
}

fn delegate_arg(function: &str, element: &str) -> Result<(), ModelError> {
    if DATA_DELEGATES.iter().any(|(name, _)| *name == function) {
        Ok(())
    } else {
        Err(ModelError::validation(
            element.to_owned(),
            format!("unknown data delegate '{function}'"),
        ))
    }
}

fn validate_scenario(model: &AdaptiveProcessModel) -> Result<(), ModelError> {
    let Some(s) = &model.scenario else {
        return Ok(());
    };
    let fail = |msg: String| Err(ModelError::validation("scenario".to_owned(), msg));
    if s.horizon_ms == 0 {
        return fail("horizon must be at least 1 ms".into());
    }
    let mut last = 0;
    for e in &s.events {
        if e.at_ms < last {
            return fail(format!("events must be sorted by time; {} follows {last}", e.at_ms));
        }
        last = e.at_ms;
        if e.at_ms > s.horizon_ms {
            return fail(format!("event at {} ms lies beyond the horizon", e.at_ms));
        }
        let finite_nonneg = |v: f64, what: &str| -> Result<(), ModelError> {
            if !v.is_finite() || v < 0.0 {
                Err(ModelError::validation(
                    "scenario".to_owned(),
                    format!("{what} must be finite and non-negative, found {v}"),
                ))
            } else {
                Ok(())
            }
        };
        match &e.action {
            ScenarioAction::StartInstances { rate_per_s } => {
                finite_nonneg(*rate_per_s, "rate_per_s")?;
            }
            ScenarioAction::AssertAssumption { name }
            | ScenarioAction::RetractAssumption { name } => {
                if name.is_empty() {
                    return fail("assumption name must not be empty".into());
                }
            }
            ScenarioAction::SetProviderFailure { provider, p } => {
                model.provider(provider).map_err(|_| {
                    ModelError::validation(
                        "scenario".to_owned(),
                        format!("unknown provider '{provider}'"),
                    )
                })?;
                if !(0.0..=1.0).contains(p) {
                    return fail(format!("failure probability must lie in [0, 1], found {p}"));
                }
            }
            ScenarioAction::SetProviderLatency {
                provider,
                mean_ms,
                stddev_ms,
            } => {
                model.provider(provider).map_err(|_| {
                    ModelError::validation(
                        "scenario".to_owned(),
                        format!("unknown provider '{provider}'"),
                    )
                })?;
                finite_nonneg(*mean_ms, "mean_ms")?;
                finite_nonneg(*stddev_ms, "stddev_ms")?;
            }
            ScenarioAction::SetBandwidth { bytes_per_ms } => {
                finite_nonneg(*bytes_per_ms, "bytes_per_ms")?;
            }
        }
    }
    Ok(())
}
