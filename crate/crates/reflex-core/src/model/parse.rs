//! Conversion between the wire documents and the domain model, in both
//! directions. `from_json` also runs full validation so a returned model is
//! always safe to hand to the transformer.

use super::doc::*;
use super::*;

/// Parse a model file. Schema violations surface as `Syntax` with the
/// offending location; semantic problems as `Validation` naming the element.
pub fn from_json(input: &str) -> Result<AdaptiveProcessModel, ModelError> {
    let doc: ModelDoc = serde_json::from_str(input).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let model = lower(doc)?;
    model.validate()?;
    Ok(model)
}

/// Serialize a model back to its canonical file form: pretty-printed,
/// stable field order, trailing newline. `from_json(to_json(m))` is the
/// identity on valid models.
pub fn to_json(model: &AdaptiveProcessModel) -> String {
    let doc = raise(model);
    let mut out = serde_json::to_string_pretty(&doc).expect("model serialization is infallible");
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Wire -> domain
// ---------------------------------------------------------------------------

fn lower(doc: ModelDoc) -> Result<AdaptiveProcessModel, ModelError> {
    Ok(AdaptiveProcessModel {
        workflow: lower_node(doc.workflow, "root")?,
        services: doc
            .services
            .into_iter()
            .map(|s| ServiceSpec {
                name: s.name,
                providers: s
                    .providers
                    .into_iter()
                    .map(|p| ProviderSpec {
                        provider_id: p.provider_id,
                        latency_mean_ms: p.latency_mean_ms,
                        latency_stddev_ms: p.latency_stddev_ms,
                        failure_probability: p.failure_probability,
                        cost: p.cost,
                        payload_bytes: p.payload_bytes,
                    })
                    .collect(),
            })
            .collect(),
        quality_requirements: doc
            .quality_requirements
            .into_iter()
            .map(lower_requirement)
            .collect::<Result<_, _>>()?,
        adaptation_plans: doc
            .adaptation_plans
            .into_iter()
            .map(lower_plan)
            .collect::<Result<_, _>>()?,
        scenario: doc.scenario.map(lower_scenario).transpose()?,
    })
}

fn lower_node(doc: NodeDoc, path: &str) -> Result<ProcessNode, ModelError> {
    let element = doc
        .label
        .clone()
        .unwrap_or_else(|| format!("node {path}"));
    let err = |msg: String| ModelError::validation(element.clone(), msg);

    // Field/kind compatibility first, so stray fields are named precisely.
    let is_service = doc.kind == "service";
    if is_service && doc.children.is_some() {
        return Err(err("a service node takes no children".into()));
    }
    if !is_service && doc.service.is_some() {
        return Err(err(format!("field 'service' is not valid on kind '{}'", doc.kind)));
    }
    if doc.kind != "loop" && doc.k.is_some() {
        return Err(err(format!("field 'k' is not valid on kind '{}'", doc.kind)));
    }
    if doc.kind != "sel" && doc.kind != "opt" && doc.probabilities.is_some() {
        return Err(err(format!(
            "field 'probabilities' is not valid on kind '{}'",
            doc.kind
        )));
    }

    let children = |doc_children: Option<Vec<NodeDoc>>| -> Result<Vec<ProcessNode>, ModelError> {
        doc_children
            .unwrap_or_default()
            .into_iter()
            .enumerate()
            .map(|(i, c)| lower_node(c, &format!("{path}.{i}")))
            .collect()
    };
    let one_child = |doc_children: Option<Vec<NodeDoc>>,
                     kind: &str|
     -> Result<Box<ProcessNode>, ModelError> {
        let mut c = children(doc_children)?;
        if c.len() != 1 {
            return Err(ModelError::validation(
                element.clone(),
                format!("a {kind} node takes exactly one child, found {}", c.len()),
            ));
        }
        Ok(Box::new(c.remove(0)))
    };

    let node = match doc.kind.as_str() {
        "seq" => ProcessNode::Seq {
            label: doc.label,
            children: children(doc.children)?,
        },
        "loop" => ProcessNode::Loop {
            k: doc.k.ok_or_else(|| err("a loop node requires 'k'".into()))?,
            child: one_child(doc.children, "loop")?,
            label: doc.label,
        },
        "sel" => ProcessNode::Sel {
            probabilities: doc
                .probabilities
                .ok_or_else(|| err("a sel node requires 'probabilities'".into()))?,
            children: children(doc.children)?,
            label: doc.label,
        },
        "and_par" => ProcessNode::AndPar {
            label: doc.label,
            children: children(doc.children)?,
        },
        "opt" => {
            let p_take = match doc.probabilities {
                None => 0.5,
                Some(ps) if ps.len() == 1 => ps[0],
                Some(ps) => {
                    return Err(err(format!(
                        "an opt node takes a single probability, found {}",
                        ps.len()
                    )))
                }
            };
            ProcessNode::Opt {
                p_take,
                child: one_child(doc.children, "opt")?,
                label: doc.label,
            }
        }
        "service" => ProcessNode::Service {
            service: doc
                .service
                .ok_or_else(|| err("a service node requires 'service'".into()))?,
            label: doc.label,
        },
        other => return Err(err(format!("unknown node kind '{other}'"))),
    };
    Ok(node)
}

fn lower_requirement(doc: RequirementDoc) -> Result<QualityRequirement, ModelError> {
    let qr_name = doc.name.clone();
    let err = |msg: String| ModelError::validation(format!("requirement '{qr_name}'"), msg);

    let p = doc.property;
    let expression = |field: Option<String>, what: &str| {
        field.ok_or_else(|| err(format!("a {what} property requires 'expression'")))
    };
    let kind = match p.kind.as_str() {
        "time" => PropertyKind::Time,
        "failure" => PropertyKind::Failure,
        "count" => PropertyKind::Count,
        "data" => PropertyKind::Data {
            expression: expression(p.expression, "data")?,
        },
        "constraint" => PropertyKind::Constraint {
            expression: expression(p.expression, "constraint")?,
        },
        "derived" => PropertyKind::Derived {
            function: p
                .function
                .ok_or_else(|| err("a derived property requires 'function'".into()))?,
            inputs: p
                .inputs
                .ok_or_else(|| err("a derived property requires 'inputs'".into()))?,
        },
        "aggregated" => PropertyKind::Aggregated {
            function: match p.function.as_deref() {
                Some("sum") => AggregateFn::Sum,
                Some("average") => AggregateFn::Average,
                Some("min") => AggregateFn::Min,
                Some("max") => AggregateFn::Max,
                Some("ratio") => AggregateFn::Ratio,
                Some(other) => return Err(err(format!("unknown aggregate function '{other}'"))),
                None => return Err(err("an aggregated property requires 'function'".into())),
            },
            base: p
                .base
                .ok_or_else(|| err("an aggregated property requires 'base'".into()))?,
        },
        other => return Err(err(format!("unknown property kind '{other}'"))),
    };

    let orientation = match doc.membership.orientation.as_str() {
        "-" => Orientation::LowerIsBetter,
        "+" => Orientation::HigherIsBetter,
        other => return Err(err(format!("unknown orientation '{other}', expected '-' or '+'"))),
    };
    let interval = match doc.membership.interval {
        IntervalDoc::Name(ref s) if s == "per_instance" => TimeInterval::PerInstance,
        IntervalDoc::Name(other) => {
            return Err(err(format!("unknown evaluation interval '{other}'")))
        }
        IntervalDoc::Window { window_ms } => TimeInterval::SlidingWindow { window_ms },
    };

    Ok(QualityRequirement {
        name: doc.name,
        target: doc.target,
        property: MeasurableProperty { name: p.name, kind },
        membership: FuzzyMembership {
            orientation,
            x1: doc.membership.x1,
            x2: doc.membership.x2,
            interval,
        },
        trigger: doc.trigger,
    })
}

fn lower_plan(doc: PlanDoc) -> Result<AdaptationPlan, ModelError> {
    let plan_name = doc.name.clone();
    let flow = doc
        .flow
        .into_iter()
        .map(|n| lower_flow_node(n, &plan_name))
        .collect::<Result<_, _>>()?;
    let false_assumptions = doc
        .false_assumptions
        .into_iter()
        .map(|fa| {
            let severity = match fa.severity.as_str() {
                "soft" => Severity::Soft,
                "hard" => Severity::Hard,
                other => {
                    return Err(ModelError::validation(
                        format!("plan '{plan_name}'"),
                        format!("unknown severity '{other}', expected 'soft' or 'hard'"),
                    ))
                }
            };
            Ok(FalseAssumption {
                severity,
                assumption: fa.assumption,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(AdaptationPlan {
        name: doc.name,
        trigger: doc.trigger,
        pre_assumptions: doc.pre_assumptions,
        flow,
        false_assumptions,
    })
}

fn lower_flow_node(doc: FlowNodeDoc, plan: &str) -> Result<PlanFlowNode, ModelError> {
    let err = |msg: String| ModelError::validation(format!("plan '{plan}'"), msg);
    match (doc.tactic, doc.alternative, doc.emit) {
        (Some(mut t), None, None) => {
            let pre_assumptions = std::mem::take(&mut t.pre_assumptions);
            Ok(PlanFlowNode::Tactic {
                invocation: lower_tactic(t, plan)?,
                pre_assumptions,
            })
        }
        (None, Some(variations), None) => Ok(PlanFlowNode::Alternative {
            variations: variations
                .into_iter()
                .map(|v| {
                    v.into_iter()
                        .map(|n| lower_flow_node(n, plan))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?,
        }),
        (None, None, Some(trigger)) => Ok(PlanFlowNode::Emit { trigger }),
        _ => Err(err(
            "a flow node must have exactly one of 'tactic', 'alternative', 'emit'".into(),
        )),
    }
}

fn lower_tactic(doc: TacticDoc, plan: &str) -> Result<TacticInvocation, ModelError> {
    let err = |msg: String| ModelError::validation(format!("plan '{plan}'"), msg);
    let kind = doc.kind.as_str();
    let arity = |n: usize| -> Result<(), ModelError> {
        if doc.args.len() != n {
            Err(err(format!(
                "tactic '{kind}' takes {n} argument(s), found {}",
                doc.args.len()
            )))
        } else {
            Ok(())
        }
    };
    let arg = |i: usize| doc.args[i].clone();
    let inv = match kind {
        "skip" => {
            arity(1)?;
            TacticInvocation::Skip { region: arg(0) }
        }
        "add" => {
            arity(2)?;
            TacticInvocation::Add {
                after: arg(0),
                service: arg(1),
            }
        }
        "replace" => {
            arity(2)?;
            TacticInvocation::Replace {
                region: arg(0),
                service: arg(1),
            }
        }
        "parallel" => {
            arity(2)?;
            TacticInvocation::Parallel {
                primary: arg(0),
                secondary: arg(1),
            }
        }
        "serial" => {
            arity(2)?;
            TacticInvocation::Serial {
                primary: arg(0),
                secondary: arg(1),
            }
        }
        "reexecute" => {
            arity(2)?;
            TacticInvocation::ReExecute {
                target: arg(0),
                condition: arg(1),
            }
        }
        "compress" => {
            arity(2)?;
            TacticInvocation::Compress {
                from: arg(0),
                to: arg(1),
            }
        }
        "aggregate" => {
            arity(3)?;
            TacticInvocation::Aggregate {
                from: arg(0),
                to: arg(1),
                function: arg(2),
            }
        }
        "reduce" => {
            arity(2)?;
            TacticInvocation::Reduce {
                target: arg(0),
                function: arg(1),
            }
        }
        "cache" => {
            arity(2)?;
            TacticInvocation::Cache {
                target: arg(0),
                filter: arg(1),
            }
        }
        "add_queue" => {
            arity(1)?;
            TacticInvocation::AddQueue { target: arg(0) }
        }
        other => return Err(err(format!("unknown tactic kind '{other}'"))),
    };
    Ok(inv)
}

fn lower_scenario(doc: ScenarioDoc) -> Result<ScenarioScript, ModelError> {
    let events = doc
        .events
        .into_iter()
        .map(|e| {
            let action = match e.action {
                ActionDoc::StartInstances { rate_per_s } => {
                    ScenarioAction::StartInstances { rate_per_s }
                }
                ActionDoc::AssertAssumption { name } => ScenarioAction::AssertAssumption { name },
                ActionDoc::RetractAssumption { name } => {
                    ScenarioAction::RetractAssumption { name }
                }
                ActionDoc::SetProviderFailure { provider, p } => {
                    ScenarioAction::SetProviderFailure { provider, p }
                }
                ActionDoc::SetProviderLatency {
                    provider,
                    mean_ms,
                    stddev_ms,
                } => ScenarioAction::SetProviderLatency {
                    provider,
                    mean_ms,
                    stddev_ms,
                },
                ActionDoc::SetBandwidth { bytes_per_ms } => {
                    ScenarioAction::SetBandwidth { bytes_per_ms }
                }
            };
            ScenarioEvent {
                at_ms: e.at_ms,
                action,
            }
        })
        .collect();
    Ok(ScenarioScript {
        seed: doc.seed,
        horizon_ms: doc.horizon_ms,
        events,
    })
}

// ---------------------------------------------------------------------------
// Domain -> wire
// ---------------------------------------------------------------------------

fn raise(model: &AdaptiveProcessModel) -> ModelDoc {
    ModelDoc {
        workflow: raise_node(&model.workflow),
        services: model
            .services
            .iter()
            .map(|s| ServiceDoc {
                name: s.name.clone(),
                providers: s
                    .providers
                    .iter()
                    .map(|p| ProviderDoc {
                        provider_id: p.provider_id.clone(),
                        latency_mean_ms: p.latency_mean_ms,
                        latency_stddev_ms: p.latency_stddev_ms,
                        failure_probability: p.failure_probability,
                        cost: p.cost,
                        payload_bytes: p.payload_bytes,
                    })
                    .collect(),
            })
            .collect(),
        quality_requirements: model
            .quality_requirements
            .iter()
            .map(raise_requirement)
            .collect(),
        adaptation_plans: model.adaptation_plans.iter().map(raise_plan).collect(),
        scenario: model.scenario.as_ref().map(|s| ScenarioDoc {
            seed: s.seed,
            horizon_ms: s.horizon_ms,
            events: s
                .events
                .iter()
                .map(|e| EventDoc {
                    at_ms: e.at_ms,
                    action: match &e.action {
                        ScenarioAction::StartInstances { rate_per_s } => {
                            ActionDoc::StartInstances {
                                rate_per_s: *rate_per_s,
                            }
                        }
                        ScenarioAction::AssertAssumption { name } => {
                            ActionDoc::AssertAssumption { name: name.clone() }
                        }
                        ScenarioAction::RetractAssumption { name } => {
                            ActionDoc::RetractAssumption { name: name.clone() }
                        }
                        ScenarioAction::SetProviderFailure { provider, p } => {
                            ActionDoc::SetProviderFailure {
                                provider: provider.clone(),
                                p: *p,
                            }
                        }
                        ScenarioAction::SetProviderLatency {
                            provider,
                            mean_ms,
                            stddev_ms,
                        } => ActionDoc::SetProviderLatency {
                            provider: provider.clone(),
                            mean_ms: *mean_ms,
                            stddev_ms: *stddev_ms,
                        },
                        ScenarioAction::SetBandwidth { bytes_per_ms } => {
                            ActionDoc::SetBandwidth {
                                bytes_per_ms: *bytes_per_ms,
                            }
                        }
                    },
                })
                .collect(),
        }),
    }
}

fn raise_node(node: &ProcessNode) -> NodeDoc {
    let empty = NodeDoc {
        kind: String::new(),
        label: node.label().map(str::to_owned),
        children: None,
        k: None,
        probabilities: None,
        service: None,
    };
    let kids = |children: &[ProcessNode]| Some(children.iter().map(raise_node).collect());
    match node {
        ProcessNode::Seq { children, .. } => NodeDoc {
            kind: "seq".into(),
            children: kids(children),
            ..empty
        },
        ProcessNode::Loop { k, child, .. } => NodeDoc {
            kind: "loop".into(),
            k: Some(*k),
            children: kids(std::slice::from_ref(child)),
            ..empty
        },
        ProcessNode::Sel {
            probabilities,
            children,
            ..
        } => NodeDoc {
            kind: "sel".into(),
            probabilities: Some(probabilities.clone()),
            children: kids(children),
            ..empty
        },
        ProcessNode::AndPar { children, .. } => NodeDoc {
            kind: "and_par".into(),
            children: kids(children),
            ..empty
        },
        ProcessNode::Opt { p_take, child, .. } => NodeDoc {
            kind: "opt".into(),
            probabilities: Some(vec![*p_take]),
            children: kids(std::slice::from_ref(child)),
            ..empty
        },
        ProcessNode::Service { service, .. } => NodeDoc {
            kind: "service".into(),
            service: Some(service.clone()),
            ..empty
        },
    }
}

fn raise_requirement(qr: &QualityRequirement) -> RequirementDoc {
    let p = &qr.property;
    let (expression, function, inputs, base) = match &p.kind {
        PropertyKind::Time | PropertyKind::Failure | PropertyKind::Count => {
            (None, None, None, None)
        }
        PropertyKind::Data { expression } | PropertyKind::Constraint { expression } => {
            (Some(expression.clone()), None, None, None)
        }
        PropertyKind::Derived { function, inputs } => {
            (None, Some(function.clone()), Some(inputs.clone()), None)
        }
        PropertyKind::Aggregated { function, base } => (
            None,
            Some(function.name().to_owned()),
            None,
            Some(base.clone()),
        ),
    };
    RequirementDoc {
        name: qr.name.clone(),
        target: qr.target.clone(),
        property: PropertyDoc {
            name: p.name.clone(),
            kind: p.kind.kind_name().into(),
            expression,
            function,
            inputs,
            base,
        },
        membership: MembershipDoc {
            orientation: match qr.membership.orientation {
                Orientation::LowerIsBetter => "-".into(),
                Orientation::HigherIsBetter => "+".into(),
            },
            x1: qr.membership.x1,
            x2: qr.membership.x2,
            interval: match qr.membership.interval {
                TimeInterval::PerInstance => IntervalDoc::Name("per_instance".into()),
                TimeInterval::SlidingWindow { window_ms } => IntervalDoc::Window { window_ms },
            },
        },
        trigger: qr.trigger.clone(),
    }
}

fn raise_plan(plan: &AdaptationPlan) -> PlanDoc {
    PlanDoc {
        name: plan.name.clone(),
        trigger: plan.trigger.clone(),
        pre_assumptions: plan.pre_assumptions.clone(),
        flow: plan.flow.iter().map(raise_flow_node).collect(),
        false_assumptions: plan
            .false_assumptions
            .iter()
            .map(|fa| FalseAssumptionDoc {
                severity: match fa.severity {
                    Severity::Soft => "soft".into(),
                    Severity::Hard => "hard".into(),
                },
                assumption: fa.assumption.clone(),
            })
            .collect(),
    }
}

fn raise_flow_node(node: &PlanFlowNode) -> FlowNodeDoc {
    let empty = FlowNodeDoc {
        tactic: None,
        alternative: None,
        emit: None,
    };
    match node {
        PlanFlowNode::Tactic {
            invocation,
            pre_assumptions,
        } => FlowNodeDoc {
            tactic: Some(TacticDoc {
                kind: invocation.kind_name().into(),
                args: invocation.args().into_iter().map(str::to_owned).collect(),
                pre_assumptions: pre_assumptions.clone(),
            }),
            ..empty
        },
        PlanFlowNode::Alternative { variations } => FlowNodeDoc {
            alternative: Some(
                variations
                    .iter()
                    .map(|v| v.iter().map(raise_flow_node).collect())
                    .collect(),
            ),
            ..empty
        },
        PlanFlowNode::Emit { trigger } => FlowNodeDoc {
            emit: Some(trigger.clone()),
            ..empty
        },
    }
}
