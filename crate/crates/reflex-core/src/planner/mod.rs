//! Pattern selection, plan-flow walking and tradeoff scoring.
//!
//! When a trigger fires, every plan subscribed to it is dry-run against
//! copies of the runtime and context models: tactics are resolved,
//! instantiated and applied to the copies, alternatives are tried in
//! declared priority, and the resulting architecture is scored by
//! predicted effect on every quality requirement. The best admissible
//! candidate wins; only its fully-applied copies are handed back for
//! enactment, so live state never sees a half-applied plan.

pub mod estimate;
mod resolve;

use std::collections::BTreeMap;

use crate::context::{entails, ContextModel, QualityLevel};
use crate::model::{
    AdaptationPlan, AdaptiveProcessModel, FalseAssumption, PlanFlowNode, PropertyKind,
    QualityRequirement, TacticInvocation,
};
use crate::qos::{badness, classify};
use crate::tactics::{instantiate, ChangeAction, IdGen, ResolvedTactic, TacticInstance};
use crate::tactics::{apply_to_context, apply_to_runtime};
use crate::transform::RuntimeModel;

pub use estimate::{full_estimate, span_estimate, Environment, Est};
pub use resolve::{resolve, ResolveError};

/// Knobs the planner exposes; flags and config files feed these.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Weight of predicted worsening on non-triggering requirements.
    pub lambda: f64,
    /// Longest falsification chain the guard lets run.
    pub max_chain_depth: usize,
    /// Retry cap when a plan does not spell one out.
    pub default_max_retries: u32,
    /// Payload ratio a spliced compressor applies.
    pub compress_ratio: f64,
    /// Processing delay per compressor side, in milliseconds.
    pub compress_proc_ms: f64,
    /// Hit rate assumed for a spliced cache.
    pub cache_hit_ratio: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lambda: 1.0,
            max_chain_depth: 8,
            default_max_retries: 3,
            compress_ratio: 0.3,
            compress_proc_ms: 5.0,
            cache_hit_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Enacted,
    RejectedByTradeoff,
    NoViableOption,
    Failed,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Enacted => "enacted",
            Outcome::RejectedByTradeoff => "rejected_by_tradeoff",
            Outcome::NoViableOption => "no_viable_option",
            Outcome::Failed => "failed",
        }
    }
}

/// What happened to one candidate plan for one trigger.
#[derive(Debug, Clone)]
pub struct PlanExecution {
    pub plan: String,
    pub trigger: String,
    pub outcome: Outcome,
    /// Tactics actually applied; nonempty exactly when enacted.
    pub chosen_path: Vec<TacticInstance>,
    /// Assumptions this execution breaks. A declared false assumption that
    /// some emit node in the flow names fires only when the walked path
    /// emits it; declarations no emit mentions fire on every enactment.
    pub falsifications: Vec<FalseAssumption>,
    /// Triggers queued by emit nodes that are not falsifications.
    pub emitted: Vec<String>,
    pub score: f64,
    pub admissible: bool,
    /// Why the plan was turned down, when it was.
    pub reason: String,
    /// The fully adapted copies, present only on the enacted candidate.
    pub runtime: Option<RuntimeModel>,
    pub ctx: Option<ContextModel>,
}

/// Everything a dry run produced for one viable candidate.
struct Walked {
    instances: Vec<TacticInstance>,
    runtime: RuntimeModel,
    ctx: ContextModel,
    emitted: Vec<String>,
}

pub struct Planner {
    pub config: PlannerConfig,
    ids: IdGen,
}

impl Planner {
    pub fn new(config: PlannerConfig) -> Self {
        Planner {
            config,
            ids: IdGen::new(),
        }
    }

    /// Consider every plan subscribed to `trigger` and pick the best
    /// admissible one. Returns one execution record per considered plan,
    /// the enacted one (if any) first. `triggering_requirement` names the
    /// degraded requirement when the trigger came from classification;
    /// falsification chains have none. `blocked` is the chain guard.
    #[allow(clippy::too_many_arguments)]
    pub fn respond(
        &mut self,
        trigger: &str,
        triggering_requirement: Option<&str>,
        model: &AdaptiveProcessModel,
        runtime: &RuntimeModel,
        ctx: &ContextModel,
        env: &Environment,
        current: &BTreeMap<String, f64>,
        blocked: &dyn Fn(&str, &str) -> bool,
    ) -> Vec<PlanExecution> {
        let mut viable: Vec<PlanExecution> = Vec::new();
        let mut others: Vec<PlanExecution> = Vec::new();

        for plan in model
            .adaptation_plans
            .iter()
            .filter(|p| p.trigger == trigger)
        {
            let mut exec = PlanExecution {
                plan: plan.name.clone(),
                trigger: trigger.to_owned(),
                outcome: Outcome::NoViableOption,
                chosen_path: Vec::new(),
                falsifications: Vec::new(),
                emitted: Vec::new(),
                score: 0.0,
                admissible: false,
                reason: String::new(),
                runtime: None,
                ctx: None,
            };

            if blocked(trigger, &plan.name) {
                exec.outcome = Outcome::Failed;
                exec.reason = "blocked by the chain guard".to_owned();
                others.push(exec);
                continue;
            }
            if let Some(missing) = plan
                .pre_assumptions
                .iter()
                .find(|a| !ctx.assumption_holds(a))
            {
                exec.reason = format!("assumption '{missing}' does not hold");
                others.push(exec);
                continue;
            }

            match self.walk_flow(plan, model, runtime, ctx) {
                Err(reason) => {
                    exec.reason = reason;
                    others.push(exec);
                }
                Ok(walked) => {
                    let (score, admissible, verdict) = self.score_tradeoff(
                        model,
                        runtime,
                        &walked.runtime,
                        env,
                        current,
                        triggering_requirement,
                    );
                    exec.score = score;
                    exec.admissible = admissible;
                    exec.reason = verdict;
                    exec.chosen_path = walked.instances;
                    let (falsifications, plain) = settle_falsifications(plan, &walked.emitted);
                    exec.falsifications = falsifications;
                    exec.emitted = plain;
                    exec.runtime = Some(walked.runtime);
                    exec.ctx = Some(walked.ctx);
                    viable.push(exec);
                }
            }
        }

        // best admissible score wins; strict comparison keeps declaration
        // order on ties
        let mut winner: Option<usize> = None;
        for (i, exec) in viable.iter().enumerate() {
            if !exec.admissible {
                continue;
            }
            match winner {
                None => winner = Some(i),
                Some(w) if exec.score > viable[w].score => winner = Some(i),
                _ => {}
            }
        }

        let mut out: Vec<PlanExecution> = Vec::new();
        for (i, mut exec) in viable.into_iter().enumerate() {
            if Some(i) == winner {
                exec.outcome = Outcome::Enacted;
                out.insert(0, exec);
            } else {
                exec.outcome = Outcome::RejectedByTradeoff;
                if exec.reason.is_empty() {
                    exec.reason = "a higher-scoring plan was chosen".to_owned();
                }
                exec.chosen_path.clear();
                exec.runtime = None;
                exec.ctx = None;
                out.push(exec);
            }
        }
        out.extend(others);
        out
    }

    /// Dry-run a plan's flow against copies of the models. An error means
    /// the plan is not viable; the copies are discarded untouched.
    fn walk_flow(
        &mut self,
        plan: &AdaptationPlan,
        model: &AdaptiveProcessModel,
        runtime: &RuntimeModel,
        ctx: &ContextModel,
    ) -> Result<Walked, String> {
        let mut state = Walked {
            instances: Vec::new(),
            runtime: runtime.clone(),
            ctx: ctx.clone(),
            emitted: Vec::new(),
        };
        self.walk_nodes(&plan.flow, model, &mut state)?;
        Ok(state)
    }

    fn walk_nodes(
        &mut self,
        nodes: &[PlanFlowNode],
        model: &AdaptiveProcessModel,
        state: &mut Walked,
    ) -> Result<(), String> {
        for node in nodes {
            match node {
                PlanFlowNode::Tactic {
                    invocation,
                    pre_assumptions,
                } => {
                    if let Some(missing) = pre_assumptions
                        .iter()
                        .find(|a| !state.ctx.assumption_holds(a))
                    {
                        return Err(format!("assumption '{missing}' does not hold"));
                    }
                    let resolved = resolve(invocation, model, &state.runtime, &self.config)
                        .map_err(|e| e.to_string())?;
                    let instance = instantiate(&state.ctx, &resolved, &mut self.ids)
                        .map_err(|e| e.to_string())?;
                    let next_rt = apply_to_runtime(&state.runtime, &instance.changes)
                        .map_err(|e| e.to_string())?;
                    let next_ctx = apply_to_context(&state.ctx, &instance.changes)
                        .map_err(|e| e.to_string())?;
                    if !entails(&next_ctx, &instance.post_state) {
                        return Err(format!(
                            "applying '{}' did not establish its post-state",
                            instance.tactic
                        ));
                    }
                    state.runtime = next_rt;
                    state.ctx = next_ctx;
                    patch_regions(&mut state.runtime, &resolved, &instance);
                    // the trace reads better with the author's arguments than
                    // with resolved element ids
                    let mut instance = instance;
                    instance.args = declared_args(invocation);
                    state.instances.push(instance);
                }
                PlanFlowNode::Alternative { variations } => {
                    let mut taken = false;
                    for variation in variations {
                        let snapshot = Walked {
                            instances: state.instances.clone(),
                            runtime: state.runtime.clone(),
                            ctx: state.ctx.clone(),
                            emitted: state.emitted.clone(),
                        };
                        match self.walk_nodes(variation, model, state) {
                            Ok(()) => {
                                taken = true;
                                break;
                            }
                            Err(_) => *state = snapshot,
                        }
                    }
                    if !taken {
                        return Err("no viable variation".to_owned());
                    }
                }
                PlanFlowNode::Emit { trigger } => state.emitted.push(trigger.clone()),
            }
        }
        Ok(())
    }

    /// Score a candidate architecture against every requirement.
    ///
    /// score = badness improvement on the triggering requirement minus
    /// lambda times the summed badness worsening everywhere else. A plan
    /// is inadmissible when a currently-acceptable requirement is
    /// predicted to turn unacceptable.
    fn score_tradeoff(
        &self,
        model: &AdaptiveProcessModel,
        before: &RuntimeModel,
        after: &RuntimeModel,
        env: &Environment,
        current: &BTreeMap<String, f64>,
        triggering_requirement: Option<&str>,
    ) -> (f64, bool, String) {
        let mut score = 0.0;
        let mut admissible = true;
        let mut verdict = String::new();

        for qr in &model.quality_requirements {
            let Some((now, predicted)) = predict(qr, model, before, after, env, current) else {
                continue;
            };
            let level_now = classify(&qr.membership, now);
            let level_pred = classify(&qr.membership, predicted);
            let bad_now = badness(&qr.membership, now);
            let bad_pred = badness(&qr.membership, predicted);

            if level_now == QualityLevel::Acceptable && level_pred == QualityLevel::Unacceptable {
                admissible = false;
                verdict = format!("would push '{}' unacceptable", qr.name);
            }
            if Some(qr.name.as_str()) == triggering_requirement {
                score += bad_now - bad_pred;
            } else if bad_pred > bad_now {
                score -= self.config.lambda * (bad_pred - bad_now);
            }
        }
        (score, admissible, verdict)
    }
}

/// Split the walked path's emits into the falsifications this execution
/// fires and plain follow-up triggers.
///
/// An emit of the form `Falsify: X` is a falsification of X, with the
/// severity the plan declares for X (hard when undeclared). Declared false
/// assumptions that no emit node anywhere in the flow names are not
/// path-dependent: they fire on every enactment.
fn settle_falsifications(
    plan: &AdaptationPlan,
    emitted: &[String],
) -> (Vec<FalseAssumption>, Vec<String>) {
    use crate::model::Severity;
    let mut mentioned = std::collections::BTreeSet::new();
    collect_falsify_mentions(&plan.flow, &mut mentioned);

    let mut falsifications: Vec<FalseAssumption> = Vec::new();
    let mut plain: Vec<String> = Vec::new();
    for emit in emitted {
        match emit.strip_prefix("Falsify: ") {
            Some(assumption) => {
                let severity = plan
                    .false_assumptions
                    .iter()
                    .find(|f| f.assumption == assumption)
                    .map(|f| f.severity)
                    .unwrap_or(Severity::Hard);
                if !falsifications.iter().any(|f| f.assumption == assumption) {
                    falsifications.push(FalseAssumption {
                        severity,
                        assumption: assumption.to_owned(),
                    });
                }
            }
            None => plain.push(emit.clone()),
        }
    }
    for f in &plan.false_assumptions {
        if !mentioned.contains(&f.assumption)
            && !falsifications.iter().any(|x| x.assumption == f.assumption)
        {
            falsifications.push(f.clone());
        }
    }
    (falsifications, plain)
}

/// The arguments as the plan author wrote them, in declaration order.
fn declared_args(inv: &TacticInvocation) -> Vec<String> {
    match inv {
        TacticInvocation::Skip { region } => vec![region.clone()],
        TacticInvocation::Add { after, service } => vec![after.clone(), service.clone()],
        TacticInvocation::Replace { region, service } => vec![region.clone(), service.clone()],
        TacticInvocation::Parallel { primary, secondary }
        | TacticInvocation::Serial { primary, secondary } => {
            vec![primary.clone(), secondary.clone()]
        }
        TacticInvocation::ReExecute { target, condition } => {
            vec![target.clone(), condition.clone()]
        }
        TacticInvocation::Compress { from, to } => vec![from.clone(), to.clone()],
        TacticInvocation::Aggregate { from, to, function } => {
            vec![from.clone(), to.clone(), function.clone()]
        }
        TacticInvocation::Reduce { target, function } => {
            vec![target.clone(), function.clone()]
        }
        TacticInvocation::Cache { target, filter } => vec![target.clone(), filter.clone()],
        TacticInvocation::AddQueue { target } => vec![target.clone()],
    }
}

fn collect_falsify_mentions(nodes: &[PlanFlowNode], out: &mut std::collections::BTreeSet<String>) {
    for node in nodes {
        match node {
            PlanFlowNode::Emit { trigger } => {
                if let Some(x) = trigger.strip_prefix("Falsify: ") {
                    out.insert(x.to_owned());
                }
            }
            PlanFlowNode::Alternative { variations } => {
                for v in variations {
                    collect_falsify_mentions(v, out);
                }
            }
            PlanFlowNode::Tactic { .. } => {}
        }
    }
}

/// Predict a requirement's value under the adapted architecture. `None`
/// means the attribute has no closed form; the requirement is then left
/// out of scoring (its value is taken as unchanged).
fn predict(
    qr: &QualityRequirement,
    model: &AdaptiveProcessModel,
    before: &RuntimeModel,
    after: &RuntimeModel,
    env: &Environment,
    current: &BTreeMap<String, f64>,
) -> Option<(f64, f64)> {
    // an aggregated property tracks its base; predict the base
    let base_kind;
    let kind = match &qr.property.kind {
        PropertyKind::Aggregated { base, .. } => {
            base_kind = model.properties().get(base.as_str())?.kind.clone();
            &base_kind
        }
        other => other,
    };
    let span_before = before.regions.get(&qr.target)?;
    let span_after = after.regions.get(&qr.target)?;
    match kind {
        PropertyKind::Time => {
            let b = span_estimate(before, env, span_before);
            let a = span_estimate(after, env, span_after);
            let now = current.get(&qr.name).copied().unwrap_or(b.time_ms);
            Some((now, (now + a.time_ms - b.time_ms).max(0.0)))
        }
        PropertyKind::Failure => {
            let b = 1.0 - span_estimate(before, env, span_before).avail;
            let a = 1.0 - span_estimate(after, env, span_after).avail;
            let now = current.get(&qr.name).copied().unwrap_or(b);
            Some((now, (now + a - b).clamp(0.0, 1.0)))
        }
        PropertyKind::Data { .. } => {
            let b = span_estimate(before, env, span_before).payload;
            let a = span_estimate(after, env, span_after).payload;
            let now = current.get(&qr.name).copied().unwrap_or(b);
            Some((now, (now + a - b).max(0.0)))
        }
        _ => current.get(&qr.name).map(|v| (*v, *v)),
    }
}

/// Added element ids of a given connector kind, in batch order.
fn added_connectors<'a>(instance: &'a TacticInstance, kind: &str) -> Vec<&'a str> {
    instance
        .changes
        .iter()
        .filter_map(|c| match c {
            ChangeAction::AddConnector { id, kind: k } if k.name() == kind => Some(id.as_str()),
            _ => None,
        })
        .collect()
}

fn added_component(instance: &TacticInstance) -> Option<&str> {
    instance.changes.iter().find_map(|c| match c {
        ChangeAction::AddComponent { id, .. } => Some(id.as_str()),
        _ => None,
    })
}

/// Keep the region table aligned with the rewired graph, so later tactics
/// and span estimates see the block where it now starts and ends. Bounds
/// shared with enclosing blocks move with them.
fn patch_regions(rt: &mut RuntimeModel, tactic: &ResolvedTactic, instance: &TacticInstance) {
    let wrap = |rt: &mut RuntimeModel, first: &str, last: &str, nf: &str, nl: &str| {
        for r in rt.regions.values_mut() {
            if r.first == first {
                r.first = nf.to_owned();
            }
            if r.outer_first == first {
                r.outer_first = nf.to_owned();
            }
            if r.last == last {
                r.last = nl.to_owned();
            }
            if r.outer_last == last {
                r.outer_last = nl.to_owned();
            }
        }
    };
    let splice_after = |rt: &mut RuntimeModel, after: &str, nl: &str| {
        for r in rt.regions.values_mut() {
            if r.last == after {
                r.last = nl.to_owned();
            }
            if r.outer_last == after {
                r.outer_last = nl.to_owned();
            }
        }
    };
    let splice_before = |rt: &mut RuntimeModel, before: &str, nf: &str| {
        for r in rt.regions.values_mut() {
            if r.first == before {
                r.first = nf.to_owned();
            }
            if r.outer_first == before {
                r.outer_first = nf.to_owned();
            }
        }
    };

    match tactic {
        ResolvedTactic::Skip { first, last } => {
            if let Some(byp) = added_connectors(instance, "Bypass").first() {
                wrap(rt, first, last, byp, byp);
            }
        }
        ResolvedTactic::Add { after, .. } => {
            if let Some(sc) = added_component(instance) {
                splice_after(rt, after, sc);
            }
        }
        ResolvedTactic::Replace { first, last, .. } => {
            let js = added_connectors(instance, "Junction");
            if let [j_in, j_out, ..] = js.as_slice() {
                wrap(rt, first, last, j_in, j_out);
            }
        }
        ResolvedTactic::Parallel { primary, .. } => {
            let split = added_connectors(instance, "ParallelOut");
            let join = added_connectors(instance, "ParallelIn");
            if let (Some(s), Some(j)) = (split.first(), join.first()) {
                wrap(rt, primary, primary, s, j);
            }
        }
        ResolvedTactic::Serial { primary, .. } => {
            let split = added_connectors(instance, "SerialOut");
            let join = added_connectors(instance, "SerialIn");
            if let (Some(s), Some(j)) = (split.first(), join.first()) {
                wrap(rt, primary, primary, s, j);
            }
        }
        ResolvedTactic::ReExecute { first, last, .. } => {
            let capture = added_connectors(instance, "ReExecOut");
            let guard = added_connectors(instance, "Condition");
            if let (Some(c), Some(g)) = (capture.first(), guard.first()) {
                wrap(rt, first, last, c, g);
            }
        }
        ResolvedTactic::Compress { after, before, .. } => {
            let packer = added_connectors(instance, "CompressorOut");
            let unpacker = added_connectors(instance, "CompressorIn");
            if let Some(p) = packer.first() {
                splice_after(rt, after, p);
            }
            if let Some(u) = unpacker.first() {
                splice_before(rt, before, u);
            }
        }
        ResolvedTactic::Aggregate { after, .. } | ResolvedTactic::Reduce { after, .. } => {
            if let Some(m) = added_connectors(instance, "DataModifier").first() {
                splice_after(rt, after, m);
            }
        }
        ResolvedTactic::Cache { first, .. } => {
            if let Some(c) = added_connectors(instance, "Cache").first() {
                splice_before(rt, first, c);
            }
        }
        ResolvedTactic::AddQueue { after } => {
            if let Some(q) = added_connectors(instance, "Queue").first() {
                splice_after(rt, after, q);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::from_json;
    use crate::sim::ProviderState;
    use crate::transform::{transform, verify_causal_connection};

    fn provider_json(service: &str, id: &str, latency: f64, fail: f64, payload: u64) -> String {
        format!(
            r#"{{"name": "{service}", "providers": [
                {{"provider_id": "{id}", "latency_mean_ms": {latency:?},
                  "latency_stddev_ms": 0.0, "failure_probability": {fail:?},
                  "cost": 1.0, "payload_bytes": {payload}}}]}}"#
        )
    }

    /// Two-step flow with a slow first step and fast spare services in the
    /// catalog, plus a root response-time requirement.
    fn model_with(plans: &str) -> AdaptiveProcessModel {
        let services = format!(
            "[{}, {}, {}, {}]",
            provider_json("Locate", "slow-1", 500.0, 0.0, 512),
            provider_json("Notify", "notify-1", 60.0, 0.0, 256),
            provider_json("Fast", "fast-1", 50.0, 0.0, 512),
            provider_json("FragileFast", "fragile-1", 50.0, 0.5, 512),
        );
        let doc = format!(
            r#"{{
              "workflow": {{"kind": "seq", "children": [
                 {{"kind": "service", "service": "Locate", "label": "locate"}},
                 {{"kind": "service", "service": "Notify", "label": "notify"}}]}},
              "services": {services},
              "quality_requirements": [
                {{"name": "rt", "target": "root",
                  "property": {{"name": "rt_ms", "kind": "time"}},
                  "membership": {{"orientation": "-", "x1": 200.0, "x2": 400.0,
                                  "interval": "per_instance"}},
                  "trigger": "too slow"}},
                {{"name": "reliable", "target": "root",
                  "property": {{"name": "fails", "kind": "failure"}},
                  "membership": {{"orientation": "-", "x1": 0.05, "x2": 0.10,
                                  "interval": "per_instance"}},
                  "trigger": "unreliable"}}],
              "adaptation_plans": {plans}
            }}"#
        );
        from_json(&doc).unwrap()
    }

    fn providers_of(model: &AdaptiveProcessModel) -> BTreeMap<String, ProviderState> {
        model
            .services
            .iter()
            .flat_map(|s| &s.providers)
            .map(|p| (p.provider_id.clone(), ProviderState::from(p)))
            .collect()
    }

    fn respond_once(
        model: &AdaptiveProcessModel,
        trigger: &str,
        requirement: Option<&str>,
        current: &[(&str, f64)],
        assume: &[&str],
    ) -> Vec<PlanExecution> {
        let rt = transform(model).unwrap();
        let mut ctx = crate::transform::mirror_context(&rt);
        for name in assume {
            ctx.assert_fact(crate::context::Fact::Assumption {
                name: (*name).to_owned(),
                holds: true,
            })
            .unwrap();
        }
        let providers = providers_of(model);
        let env = Environment {
            providers: &providers,
            bandwidth_bytes_per_ms: f64::INFINITY,
        };
        let current: BTreeMap<String, f64> =
            current.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect();
        let mut planner = Planner::new(PlannerConfig::default());
        planner.respond(
            trigger,
            requirement,
            model,
            &rt,
            &ctx,
            &env,
            &current,
            &|_, _| false,
        )
    }

    #[test]
    fn replace_plan_enacts_and_rewires() {
        let model = model_with(
            r#"[{"name": "swap in the fast locator", "trigger": "too slow",
                 "flow": [{"tactic": {"kind": "replace", "args": ["locate", "Fast"]}}]}]"#,
        );
        let execs = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        assert_eq!(execs.len(), 1);
        let exec = &execs[0];
        assert_eq!(exec.outcome, Outcome::Enacted);
        assert!(exec.score > 0.0, "score {}", exec.score);
        assert_eq!(exec.chosen_path.len(), 1);
        assert_eq!(exec.chosen_path[0].tactic, "replace");

        let rt = exec.runtime.as_ref().unwrap();
        let ctx = exec.ctx.as_ref().unwrap();
        assert!(rt
            .elements
            .keys()
            .any(|id| id.contains("SC.Fast")), "no replacement component");
        assert_eq!(verify_causal_connection(rt, ctx), Vec::<String>::new());

        // bounds moved onto the junctions that frame the replacement
        let region = &rt.regions["locate"];
        assert!(region.first.contains("Junction"), "{}", region.first);
        assert!(region.last.contains("Junction"), "{}", region.last);
    }

    #[test]
    fn alternatives_fall_back_in_declared_order() {
        let plans = r#"[{"name": "speed up or drop", "trigger": "too slow",
            "flow": [{"alternative": [
               [{"tactic": {"kind": "replace", "args": ["locate", "Fast"],
                            "pre_assumptions": ["fast locator deployed"]}}],
               [{"tactic": {"kind": "skip", "args": ["locate"]}}]]}]}]"#;
        let model = model_with(plans);

        let without = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        assert_eq!(without[0].outcome, Outcome::Enacted);
        assert_eq!(without[0].chosen_path[0].tactic, "skip");

        let with = respond_once(
            &model,
            "too slow",
            Some("rt"),
            &[("rt", 600.0)],
            &["fast locator deployed"],
        );
        assert_eq!(with[0].outcome, Outcome::Enacted);
        assert_eq!(with[0].chosen_path[0].tactic, "replace");
    }

    #[test]
    fn unmet_plan_assumption_rules_the_plan_out() {
        let plans = r#"[{"name": "operator fallback", "trigger": "too slow",
            "pre_assumptions": ["human operator available"],
            "flow": [{"tactic": {"kind": "skip", "args": ["locate"]}}]}]"#;
        let model = model_with(plans);
        let execs = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        assert_eq!(execs.len(), 1);
        assert_eq!(execs[0].outcome, Outcome::NoViableOption);
        assert!(execs[0].reason.contains("human operator available"));
    }

    #[test]
    fn ties_break_by_declaration_order() {
        let plans = r#"[
          {"name": "first", "trigger": "too slow",
           "flow": [{"tactic": {"kind": "replace", "args": ["locate", "Fast"]}}]},
          {"name": "second", "trigger": "too slow",
           "flow": [{"tactic": {"kind": "replace", "args": ["locate", "Fast"]}}]}]"#;
        let model = model_with(plans);
        let execs = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        assert_eq!(execs[0].plan, "first");
        assert_eq!(execs[0].outcome, Outcome::Enacted);
        assert_eq!(execs[1].plan, "second");
        assert_eq!(execs[1].outcome, Outcome::RejectedByTradeoff);
    }

    #[test]
    fn breaking_an_acceptable_requirement_is_inadmissible() {
        let plans = r#"[{"name": "fast but flaky", "trigger": "too slow",
            "flow": [{"tactic": {"kind": "replace", "args": ["locate", "FragileFast"]}}]}]"#;
        let model = model_with(plans);
        let execs = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        assert_eq!(execs.len(), 1);
        assert_eq!(execs[0].outcome, Outcome::RejectedByTradeoff);
        assert!(!execs[0].admissible);
        assert!(execs[0].reason.contains("reliable"), "{}", execs[0].reason);
    }

    #[test]
    fn falsifications_follow_the_walked_path() {
        let plans = r#"[{"name": "restore identification", "trigger": "too slow",
            "flow": [{"alternative": [
               [{"tactic": {"kind": "replace", "args": ["locate", "Fast"],
                            "pre_assumptions": ["human operator available"]}}],
               [{"tactic": {"kind": "skip", "args": ["locate"]}},
                {"emit": "Falsify: Id is identified"}]]}],
            "false_assumptions": [
               {"severity": "hard", "assumption": "Id is identified"}]}]"#;
        let model = model_with(plans);

        let skipped = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        assert_eq!(skipped[0].chosen_path[0].tactic, "skip");
        assert_eq!(skipped[0].falsifications.len(), 1);
        assert_eq!(skipped[0].falsifications[0].assumption, "Id is identified");
        assert!(skipped[0].emitted.is_empty());

        let replaced = respond_once(
            &model,
            "too slow",
            Some("rt"),
            &[("rt", 600.0)],
            &["human operator available"],
        );
        assert_eq!(replaced[0].chosen_path[0].tactic, "replace");
        assert!(replaced[0].falsifications.is_empty());
    }

    #[test]
    fn undeclared_emits_queue_as_plain_triggers() {
        let plans = r#"[{"name": "drop and tell", "trigger": "too slow",
            "flow": [{"tactic": {"kind": "skip", "args": ["locate"]}},
                     {"emit": "audit the route"}],
            "false_assumptions": [
               {"severity": "soft", "assumption": "route is audited"}]}]"#;
        let model = model_with(plans);
        let execs = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        let exec = &execs[0];
        assert_eq!(exec.outcome, Outcome::Enacted);
        assert_eq!(exec.emitted, vec!["audit the route".to_owned()]);
        // no emit names this one, so it fires with the enactment
        assert_eq!(exec.falsifications.len(), 1);
        assert_eq!(exec.falsifications[0].assumption, "route is audited");
    }

    #[test]
    fn chain_guard_blocks_a_repeat_pair() {
        let plans = r#"[{"name": "swap", "trigger": "too slow",
            "flow": [{"tactic": {"kind": "replace", "args": ["locate", "Fast"]}}]}]"#;
        let model = model_with(plans);
        let rt = transform(&model).unwrap();
        let ctx = crate::transform::mirror_context(&rt);
        let providers = providers_of(&model);
        let env = Environment {
            providers: &providers,
            bandwidth_bytes_per_ms: f64::INFINITY,
        };
        let mut planner = Planner::new(PlannerConfig::default());
        let execs = planner.respond(
            "too slow",
            Some("rt"),
            &model,
            &rt,
            &ctx,
            &env,
            &BTreeMap::new(),
            &|t, p| t == "too slow" && p == "swap",
        );
        assert_eq!(execs.len(), 1);
        assert_eq!(execs[0].outcome, Outcome::Failed);
        assert!(execs[0].reason.contains("chain guard"));
    }

    #[test]
    fn skip_detaches_the_span_from_estimates() {
        let plans = r#"[{"name": "drop the locator", "trigger": "too slow",
            "flow": [{"tactic": {"kind": "skip", "args": ["locate"]}}]}]"#;
        let model = model_with(plans);
        let execs = respond_once(&model, "too slow", Some("rt"), &[("rt", 600.0)], &[]);
        let exec = &execs[0];
        assert_eq!(exec.outcome, Outcome::Enacted);

        let rt_after = exec.runtime.as_ref().unwrap();
        let providers = providers_of(&model);
        let env = Environment {
            providers: &providers,
            bandwidth_bytes_per_ms: f64::INFINITY,
        };
        let skipped = span_estimate(rt_after, &env, &rt_after.regions["locate"]);
        assert_eq!(skipped.time_ms, 0.0);
        assert_eq!(skipped.avail, 1.0);
        // the root span now only pays for the notify step
        let root = span_estimate(rt_after, &env, &rt_after.regions["root"]);
        assert_eq!(root.time_ms, 60.0);
    }

    #[test]
    fn estimates_compose_sequences() {
        let model = model_with("[]");
        let rt = transform(&model).unwrap();
        let providers = providers_of(&model);
        let env = Environment {
            providers: &providers,
            bandwidth_bytes_per_ms: f64::INFINITY,
        };
        let whole = full_estimate(&rt, &env);
        assert_eq!(whole.time_ms, 560.0);
        assert_eq!(whole.cost, 2.0);
        assert_eq!(whole.avail, 1.0);
        assert_eq!(
            span_estimate(&rt, &env, &rt.regions["locate"]).time_ms,
            500.0
        );
        assert_eq!(span_estimate(&rt, &env, &rt.regions["notify"]).time_ms, 60.0);
    }
}
