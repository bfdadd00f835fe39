//! The control loop that closes the feedback cycle: simulate, measure,
//! classify, plan, enact, repeat.
//!
//! The simulator and the loop interleave on simulated time. The run is cut
//! at scenario-event times and at fixed tick boundaries; between cuts the
//! simulator owns the clock, at a tick the loop drains measurements,
//! evaluates every requirement, processes the trigger queue, and enacts at
//! most one adaptation pattern per queued trigger. All state swaps are
//! atomic: the planner works on copies and the winner's copies replace the
//! live models between events.

use std::collections::{BTreeMap, VecDeque};

use crate::context::{ContextModel, Fact, QualityLevel};
use crate::model::{AdaptiveProcessModel, ModelError, ScenarioAction, Severity};
use crate::planner::{Environment, Outcome, Planner, PlannerConfig};
use crate::qos::QosEngine;
use crate::sim::Sim;
use crate::trace::{
    BandShare, InstanceSummary, ResourceSummary, RunReport, TraceEvent, TraceKind,
};
use crate::transform::{transform, verify_causal_connection, RuntimeModel};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Overrides the scenario seed when set.
    pub seed: Option<u64>,
    /// Overrides the scenario horizon when set.
    pub horizon_ms: Option<u64>,
    /// Simulated time between control-loop ticks.
    pub period_ms: u64,
    /// When false the loop only observes; no plan is ever enacted.
    pub adaptation: bool,
    pub planner: PlannerConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            seed: None,
            horizon_ms: None,
            period_ms: 1000,
            adaptation: true,
            planner: PlannerConfig::default(),
        }
    }
}

/// A trigger waiting for the planner, with the chain that led to it.
#[derive(Debug, Clone)]
struct QueuedTrigger {
    name: String,
    /// The degraded requirement, when the trigger came from classification.
    requirement: Option<String>,
    /// (trigger, plan) pairs already enacted along this chain.
    chain: Vec<(String, String)>,
    depth: usize,
}

pub struct Engine {
    model: AdaptiveProcessModel,
    runtime: RuntimeModel,
    ctx: ContextModel,
    qos: QosEngine,
    sim: Sim,
    planner: Planner,
    config: EngineConfig,
    seed: u64,
    horizon_ms: u64,
    trace: Vec<TraceEvent>,
    queue: VecDeque<QueuedTrigger>,
    current_values: BTreeMap<String, f64>,
    band_time: BTreeMap<String, BTreeMap<QualityLevel, u64>>,
    adaptations: BTreeMap<String, u64>,
    /// Causal-connection mismatches observed after ticks; stays empty on a
    /// healthy run.
    causal_mismatches: Vec<String>,
}

impl Engine {
    pub fn new(model: AdaptiveProcessModel, config: EngineConfig) -> Result<Self, ModelError> {
        model.validate()?;
        let runtime =
            transform(&model).map_err(|e| ModelError::validation("workflow", e.to_string()))?;
        let ctx = crate::transform::mirror_context(&runtime);
        let seed = config
            .seed
            .or_else(|| model.scenario.as_ref().map(|s| s.seed))
            .unwrap_or(0);
        let horizon_ms = config
            .horizon_ms
            .or_else(|| model.scenario.as_ref().map(|s| s.horizon_ms))
            .unwrap_or(0);
        let qos = QosEngine::new(&model);
        let sim = Sim::new(&model, runtime.clone(), seed);
        let planner = Planner::new(config.planner.clone());
        Ok(Engine {
            model,
            runtime,
            ctx,
            qos,
            sim,
            planner,
            config,
            seed,
            horizon_ms,
            trace: Vec::new(),
            queue: VecDeque::new(),
            current_values: BTreeMap::new(),
            band_time: BTreeMap::new(),
            adaptations: BTreeMap::new(),
            causal_mismatches: Vec::new(),
        })
    }

    pub fn runtime(&self) -> &RuntimeModel {
        &self.runtime
    }

    pub fn context(&self) -> &ContextModel {
        &self.ctx
    }

    pub fn causal_mismatches(&self) -> &[String] {
        &self.causal_mismatches
    }

    /// Run the scenario to the horizon. Returns the trace and the report;
    /// the engine stays inspectable afterwards.
    pub fn run(&mut self) -> (Vec<TraceEvent>, RunReport) {
        if self.horizon_ms == 0 {
            let report = self.report();
            return (std::mem::take(&mut self.trace), report);
        }

        let events: Vec<(u64, ScenarioAction)> = self
            .model
            .scenario
            .as_ref()
            .map(|s| {
                s.events
                    .iter()
                    .map(|e| (e.at_ms, e.action.clone()))
                    .collect()
            })
            .unwrap_or_default();

        let mut idx = 0;
        let mut next_tick = self.config.period_ms.min(self.horizon_ms);
        loop {
            let next_event = events.get(idx).map(|(t, _)| *t).unwrap_or(u64::MAX);
            let boundary = next_tick.min(next_event).min(self.horizon_ms);

            self.sim.run_until(boundary as f64);
            let mut produced = self.sim.drain_trace();
            self.trace.append(&mut produced);

            while idx < events.len() && events[idx].0 <= boundary {
                let (at, action) = &events[idx];
                self.apply_scenario_action(*at, action.clone());
                idx += 1;
            }
            if boundary == next_tick {
                self.mape_tick(boundary);
                next_tick = (next_tick + self.config.period_ms).min(self.horizon_ms.max(1));
            }
            if boundary >= self.horizon_ms {
                break;
            }
        }

        let report = self.report();
        (std::mem::take(&mut self.trace), report)
    }

    fn apply_scenario_action(&mut self, at: u64, action: ScenarioAction) {
        match &action {
            ScenarioAction::AssertAssumption { name } => {
                self.ctx
                    .assert_fact(Fact::Assumption {
                        name: name.clone(),
                        holds: true,
                    })
                    .expect("assumption facts always assert");
            }
            ScenarioAction::RetractAssumption { name } => {
                self.ctx.retract_assumption(name);
            }
            _ => {}
        }
        self.sim.apply_action(&action);
        self.trace.push(TraceEvent::new(
            at,
            TraceKind::ScenarioEvent {
                action: action_label(&action),
            },
        ));
    }

    /// One pass of the control loop at simulated time `now`.
    fn mape_tick(&mut self, now: u64) {
        // Monitor: raw samples into the evaluator and the knowledge base
        for m in self.sim.drain_measurements() {
            self.qos.ingest(m);
        }
        for (instance, t) in self.sim.drain_finished() {
            self.qos.finalize_instance(instance, t);
        }

        // Analyze: classify and collect degradations
        let (evals, degradations) = self.qos.evaluate(now);
        for e in &evals {
            self.trace.push(TraceEvent::new(
                now,
                TraceKind::Classify {
                    requirement: e.requirement.clone(),
                    value: e.value,
                    level: e.level.name().to_owned(),
                    badness: e.badness,
                },
            ));
            self.current_values.insert(e.requirement.clone(), e.value);
            self.ctx
                .assert_fact(Fact::PropertyValue {
                    property: e.property.clone(),
                    value: e.value,
                })
                .expect("property facts always assert");
            self.ctx
                .assert_fact(Fact::QualityLevel {
                    requirement: e.requirement.clone(),
                    level: e.level,
                })
                .expect("level facts always assert");
        }
        for qr in &self.model.quality_requirements {
            let band = self.qos.current_band(&qr.name);
            *self
                .band_time
                .entry(qr.name.clone())
                .or_default()
                .entry(band)
                .or_default() += self.config.period_ms;
        }
        for d in degradations {
            self.trace.push(TraceEvent::new(
                now,
                TraceKind::Trigger {
                    trigger: d.trigger.clone(),
                    requirement: d.requirement.clone(),
                    severity: severity_label(d.severity),
                    value: d.value,
                },
            ));
            self.queue.push_back(QueuedTrigger {
                name: d.trigger,
                requirement: Some(d.requirement),
                chain: Vec::new(),
                depth: 0,
            });
        }

        // Plan + Execute
        if !self.config.adaptation {
            self.queue.clear();
        }
        while let Some(q) = self.queue.pop_front() {
            self.respond_to(now, q);
        }

        let mismatches = verify_causal_connection(&self.runtime, &self.ctx);
        self.causal_mismatches.extend(mismatches);
    }

    fn respond_to(&mut self, now: u64, q: QueuedTrigger) {
        if q.depth >= self.planner.config.max_chain_depth {
            self.trace.push(TraceEvent::new(
                now,
                TraceKind::PlanRejected {
                    trigger: q.name.clone(),
                    plan: "-".to_owned(),
                    reason: "falsification chain too deep".to_owned(),
                },
            ));
            return;
        }
        let env = Environment {
            providers: self.sim.providers(),
            bandwidth_bytes_per_ms: self.sim.bandwidth_bytes_per_ms(),
        };
        let chain = q.chain.clone();
        let executions = self.planner.respond(
            &q.name,
            q.requirement.as_deref(),
            &self.model,
            &self.runtime,
            &self.ctx,
            &env,
            &self.current_values,
            &|t, p| chain.iter().any(|(ct, cp)| ct == t && cp == p),
        );
        if executions.is_empty() {
            self.trace.push(TraceEvent::new(
                now,
                TraceKind::PlanRejected {
                    trigger: q.name.clone(),
                    plan: "-".to_owned(),
                    reason: "no plan subscribed to this trigger".to_owned(),
                },
            ));
            return;
        }
        for exec in executions {
            match exec.outcome {
                Outcome::Enacted => {
                    self.trace.push(TraceEvent::new(
                        now,
                        TraceKind::PlanSelected {
                            trigger: exec.trigger.clone(),
                            plan: exec.plan.clone(),
                            score: exec.score,
                        },
                    ));
                    for inst in &exec.chosen_path {
                        self.trace.push(TraceEvent::new(
                            now,
                            TraceKind::TacticApplied {
                                tactic: inst.tactic.clone(),
                                args: inst.args.clone(),
                                actions: inst.changes.len() as u64,
                            },
                        ));
                        *self.adaptations.entry(inst.tactic.clone()).or_default() += 1;
                    }
                    // Execute: swap all three views between events
                    let runtime = exec.runtime.expect("enacted plans carry the new runtime");
                    let ctx = exec.ctx.expect("enacted plans carry the new context");
                    self.runtime = runtime;
                    self.ctx = ctx;
                    self.sim.swap_model(self.runtime.clone());
                    self.trace.push(TraceEvent::new(
                        now,
                        TraceKind::Reconfigure {
                            revision: self.ctx.revision(),
                            elements: self.runtime.elements.len() as u64,
                            bindings: self.runtime.bindings.len() as u64,
                        },
                    ));
                    let mut chain = q.chain.clone();
                    chain.push((q.name.clone(), exec.plan.clone()));
                    for f in &exec.falsifications {
                        match f.severity {
                            Severity::Soft => {
                                self.trace.push(TraceEvent::new(
                                    now,
                                    TraceKind::Falsification {
                                        assumption: f.assumption.clone(),
                                        severity: "soft".to_owned(),
                                        handled: "traced".to_owned(),
                                    },
                                ));
                            }
                            Severity::Hard => {
                                self.ctx.retract_assumption(&f.assumption);
                                self.trace.push(TraceEvent::new(
                                    now,
                                    TraceKind::Falsification {
                                        assumption: f.assumption.clone(),
                                        severity: "hard".to_owned(),
                                        handled: "chained".to_owned(),
                                    },
                                ));
                                self.queue.push_back(QueuedTrigger {
                                    name: format!("Falsify: {}", f.assumption),
                                    requirement: None,
                                    chain: chain.clone(),
                                    depth: q.depth + 1,
                                });
                            }
                        }
                    }
                    for emitted in &exec.emitted {
                        self.queue.push_back(QueuedTrigger {
                            name: emitted.clone(),
                            requirement: None,
                            chain: chain.clone(),
                            depth: q.depth + 1,
                        });
                    }
                }
                _ => {
                    self.trace.push(TraceEvent::new(
                        now,
                        TraceKind::PlanRejected {
                            trigger: exec.trigger.clone(),
                            plan: exec.plan.clone(),
                            reason: if exec.reason.is_empty() {
                                exec.outcome.name().to_owned()
                            } else {
                                exec.reason.clone()
                            },
                        },
                    ));
                }
            }
        }
    }

    fn report(&self) -> RunReport {
        let stats = self.sim.stats();
        let mut requirements = BTreeMap::new();
        for qr in &self.model.quality_requirements {
            let bands = self.band_time.get(&qr.name);
            let total: u64 = bands.map(|b| b.values().sum()).unwrap_or(0);
            let share = |level: QualityLevel| -> f64 {
                if total == 0 {
                    // never evaluated: counts as acceptable for the whole run
                    return if level == QualityLevel::Acceptable {
                        100.0
                    } else {
                        0.0
                    };
                }
                let in_band = bands.and_then(|b| b.get(&level)).copied().unwrap_or(0);
                100.0 * in_band as f64 / total as f64
            };
            requirements.insert(
                qr.name.clone(),
                BandShare {
                    acceptable_pct: share(QualityLevel::Acceptable),
                    tolerable_pct: share(QualityLevel::Tolerable),
                    unacceptable_pct: share(QualityLevel::Unacceptable),
                },
            );
        }
        RunReport {
            horizon_ms: self.horizon_ms,
            seed: self.seed,
            adaptation: self.config.adaptation,
            instances: InstanceSummary {
                launched: stats.launched,
                completed: stats.completed,
                failed: stats.failed,
                mean_response_ms: stats.mean_response_ms().unwrap_or(0.0),
                total_cost: stats.total_cost,
            },
            requirements,
            adaptations: self.adaptations.clone(),
            resources: ResourceSummary {
                battery_ms: stats.battery_ms,
                queue_peak_bytes: stats.queue_peak_bytes,
            },
        }
    }
}

fn severity_label(s: Severity) -> String {
    match s {
        Severity::Soft => "soft".to_owned(),
        Severity::Hard => "hard".to_owned(),
    }
}

fn action_label(action: &ScenarioAction) -> String {
    match action {
        ScenarioAction::StartInstances { rate_per_s } => {
            format!("start_instances rate={rate_per_s}/s")
        }
        ScenarioAction::AssertAssumption { name } => format!("assert '{name}'"),
        ScenarioAction::RetractAssumption { name } => format!("retract '{name}'"),
        ScenarioAction::SetProviderFailure { provider, p } => {
            format!("set_provider_failure {provider} p={p}")
        }
        ScenarioAction::SetProviderLatency {
            provider,
            mean_ms,
            stddev_ms,
        } => format!("set_provider_latency {provider} mean={mean_ms}ms stddev={stddev_ms}ms"),
        ScenarioAction::SetBandwidth { bytes_per_ms } => {
            format!("set_bandwidth {bytes_per_ms} B/ms")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::from_json;
    use crate::trace::write_jsonl;

    /// A one-step flow on a slow provider, a response-time requirement it
    /// violates, and a plan that swaps in a fast replacement.
    fn slow_model() -> AdaptiveProcessModel {
        from_json(
            r#"{
              "workflow": {"kind": "service", "service": "Locate", "label": "locate"},
              "services": [
                {"name": "Locate", "providers": [
                  {"provider_id": "slow-1", "latency_mean_ms": 600.0,
                   "latency_stddev_ms": 0.0, "failure_probability": 0.0,
                   "cost": 1.0, "payload_bytes": 128}]},
                {"name": "Fast", "providers": [
                  {"provider_id": "fast-1", "latency_mean_ms": 50.0,
                   "latency_stddev_ms": 0.0, "failure_probability": 0.0,
                   "cost": 1.0, "payload_bytes": 128}]}],
              "quality_requirements": [
                {"name": "rt", "target": "locate",
                 "property": {"name": "rt_ms", "kind": "time"},
                 "membership": {"orientation": "-", "x1": 200.0, "x2": 400.0,
                                "interval": "per_instance"},
                 "trigger": "too slow"}],
              "adaptation_plans": [
                {"name": "go fast", "trigger": "too slow",
                 "flow": [{"tactic": {"kind": "replace", "args": ["locate", "Fast"]}}]}],
              "scenario": {"seed": 7, "horizon_ms": 5000, "events": [
                {"at_ms": 0, "action": {"kind": "start_instances", "rate_per_s": 2.0}}]}
            }"#,
        )
        .unwrap()
    }

    fn kinds_of(trace: &[TraceEvent]) -> Vec<&'static str> {
        trace
            .iter()
            .map(|e| match &e.kind {
                TraceKind::Invoke { .. } => "invoke",
                TraceKind::Complete { .. } => "complete",
                TraceKind::Fail { .. } => "fail",
                TraceKind::Measure { .. } => "measure",
                TraceKind::Classify { .. } => "classify",
                TraceKind::Trigger { .. } => "trigger",
                TraceKind::PlanSelected { .. } => "plan_selected",
                TraceKind::TacticApplied { .. } => "tactic_applied",
                TraceKind::PlanRejected { .. } => "plan_rejected",
                TraceKind::Falsification { .. } => "falsification",
                TraceKind::Reconfigure { .. } => "reconfigure",
                TraceKind::ScenarioEvent { .. } => "scenario_event",
            })
            .collect()
    }

    #[test]
    fn degradation_is_detected_and_the_plan_enacted() {
        let mut engine = Engine::new(slow_model(), EngineConfig::default()).unwrap();
        let (trace, report) = engine.run();
        let kinds = kinds_of(&trace);

        assert!(kinds.contains(&"trigger"), "no trigger event");
        assert!(kinds.contains(&"plan_selected"), "no plan_selected event");
        assert!(kinds.contains(&"tactic_applied"), "no tactic_applied event");
        assert!(kinds.contains(&"reconfigure"), "no reconfigure event");
        // stragglers from the old configuration can re-trigger once more
        assert!(*report.adaptations.get("replace").unwrap_or(&0) >= 1);

        // by the end of the run the requirement has recovered
        let last_level = trace
            .iter()
            .rev()
            .find_map(|e| match &e.kind {
                TraceKind::Classify { level, .. } => Some(level.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(last_level, "acceptable");

        // the trigger names the degraded requirement
        let trigger = trace
            .iter()
            .find_map(|e| match &e.kind {
                TraceKind::Trigger {
                    trigger,
                    requirement,
                    severity,
                    ..
                } => Some((trigger.clone(), requirement.clone(), severity.clone())),
                _ => None,
            })
            .unwrap();
        assert_eq!(trigger.0, "too slow");
        assert_eq!(trigger.1, "rt");
        assert_eq!(trigger.2, "hard");
    }

    #[test]
    fn observation_only_runs_never_reconfigure() {
        let config = EngineConfig {
            adaptation: false,
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(slow_model(), config).unwrap();
        let (trace, report) = engine.run();
        let kinds = kinds_of(&trace);

        assert!(kinds.contains(&"trigger"), "triggers still fire");
        assert!(!kinds.contains(&"plan_selected"));
        assert!(!kinds.contains(&"tactic_applied"));
        assert!(!kinds.contains(&"reconfigure"));
        assert!(!report.adaptation);
        assert!(report.adaptations.is_empty());

        // the violation persists for the whole run
        let share = &report.requirements["rt"];
        assert!(share.unacceptable_pct > 50.0, "{share:?}");
    }

    #[test]
    fn zero_horizon_produces_an_empty_run() {
        let config = EngineConfig {
            horizon_ms: Some(0),
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(slow_model(), config).unwrap();
        let (trace, report) = engine.run();
        assert!(trace.is_empty());
        assert_eq!(report.instances.launched, 0);
        assert_eq!(report.requirements["rt"].acceptable_pct, 100.0);
    }

    #[test]
    fn trace_times_never_decrease() {
        let mut engine = Engine::new(slow_model(), EngineConfig::default()).unwrap();
        let (trace, _) = engine.run();
        assert!(!trace.is_empty());
        for pair in trace.windows(2) {
            assert!(pair[0].t <= pair[1].t, "{} > {}", pair[0].t, pair[1].t);
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let run = || {
            let mut engine = Engine::new(slow_model(), EngineConfig::default()).unwrap();
            let (trace, _) = engine.run();
            let mut buf = Vec::new();
            write_jsonl(&trace, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adaptation_counts_match_applied_events() {
        let mut engine = Engine::new(slow_model(), EngineConfig::default()).unwrap();
        let (trace, report) = engine.run();
        let applied = trace
            .iter()
            .filter(|e| matches!(e.kind, TraceKind::TacticApplied { .. }))
            .count() as u64;
        assert_eq!(report.adaptations.values().sum::<u64>(), applied);
    }

    #[test]
    fn band_shares_sum_to_one_hundred() {
        let mut engine = Engine::new(slow_model(), EngineConfig::default()).unwrap();
        let (_, report) = engine.run();
        for (name, share) in &report.requirements {
            let total = share.acceptable_pct + share.tolerable_pct + share.unacceptable_pct;
            assert!((total - 100.0).abs() < 0.01, "{name}: {total}");
        }
    }

    #[test]
    fn context_stays_causally_connected() {
        let mut engine = Engine::new(slow_model(), EngineConfig::default()).unwrap();
        engine.run();
        assert_eq!(engine.causal_mismatches(), &[] as &[String]);
        assert!(verify_causal_connection(engine.runtime(), engine.context()).is_empty());
    }

    #[test]
    fn scenario_assumptions_reach_the_context() {
        let mut model = slow_model();
        model.scenario.as_mut().unwrap().events.push(
            crate::model::ScenarioEvent {
                at_ms: 500,
                action: ScenarioAction::AssertAssumption {
                    name: "operator on duty".to_owned(),
                },
            },
        );
        let mut engine = Engine::new(model, EngineConfig::default()).unwrap();
        let (trace, _) = engine.run();
        assert!(engine.context().assumption_holds("operator on duty"));
        assert!(trace.iter().any(|e| matches!(
            &e.kind,
            TraceKind::ScenarioEvent { action } if action.contains("operator on duty")
        )));
    }

    #[test]
    fn config_seed_overrides_the_scenario() {
        let config = EngineConfig {
            seed: Some(99),
            ..EngineConfig::default()
        };
        let mut engine = Engine::new(slow_model(), config).unwrap();
        let (_, report) = engine.run();
        assert_eq!(report.seed, 99);
    }
}
