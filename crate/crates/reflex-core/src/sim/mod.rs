//! Discrete-event execution of the runtime model. Instance tokens enter at
//! the start connector, components invoke their providers, connectors route,
//! replicate, hold or replay tokens, and interceptors turn the traffic into
//! raw measurements for the evaluation engine.
//!
//! A failed invocation does not halt its token. The failure notice travels
//! the same path a result would, at zero service time, so downstream guards
//! (retry conditions, failover joins, race collectors) get their chance to
//! recover the instance. Whatever reaches the end connector decides how the
//! instance is counted.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{
    parse_constraint, AdaptiveProcessModel, ExpressionOp, PropertyKind, ProviderSpec,
    ScenarioAction,
};
use crate::qos::Measurement;
use crate::trace::{TraceEvent, TraceKind};
use crate::transform::{ConnectorKind, Element, InterceptRole, RuntimeModel};

/// One message of one workflow instance, or the failure notice that took its
/// place. `collector` is race bookkeeping: the joining connector this copy
/// must report to and the activation that dispatched it, so a straggler from
/// a superseded activation can be told apart and dropped.
#[derive(Debug, Clone)]
pub struct Token {
    pub instance: u64,
    pub payload_bytes: u64,
    pub failed: bool,
    pub collector: Option<(String, u64)>,
}

/// Mutable per-provider parameters; scenario events override them mid-run.
#[derive(Debug, Clone)]
pub struct ProviderState {
    pub latency_mean_ms: f64,
    pub latency_stddev_ms: f64,
    pub failure_probability: f64,
    pub cost: f64,
    pub payload_bytes: u64,
}

impl From<&ProviderSpec> for ProviderState {
    fn from(spec: &ProviderSpec) -> Self {
        ProviderState {
            latency_mean_ms: spec.latency_mean_ms,
            latency_stddev_ms: spec.latency_stddev_ms,
            failure_probability: spec.failure_probability,
            cost: spec.cost,
            payload_bytes: spec.payload_bytes,
        }
    }
}

/// Counters accumulated over a run; reports and acceptance checks read these.
#[derive(Debug, Clone, Default)]
pub struct SimStats {
    pub launched: u64,
    pub completed: u64,
    pub failed: u64,
    pub total_cost: f64,
    /// Milliseconds of compressor processing, standing in for battery drain.
    pub battery_ms: f64,
    /// High-water mark of payload bytes parked in queues.
    pub queue_peak_bytes: u64,
    /// Invocations per provider id.
    pub invocations: BTreeMap<String, u64>,
    /// Durations of successfully completed instances.
    pub response_times_ms: Vec<f64>,
}

impl SimStats {
    pub fn mean_response_ms(&self) -> Option<f64> {
        if self.response_times_ms.is_empty() {
            return None;
        }
        Some(self.response_times_ms.iter().sum::<f64>() / self.response_times_ms.len() as f64)
    }
}

#[derive(Debug, Clone)]
struct InstanceRec {
    started_ms: f64,
    finished_ms: Option<f64>,
    failed: bool,
    cost: f64,
}

#[derive(Debug)]
enum EventKind {
    Deliver { at: String, token: Token },
    Launch { generation: u64 },
}

#[derive(Debug)]
struct Event {
    at: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // ties resolve in scheduling order, which keeps runs reproducible
        self.at.total_cmp(&other.at).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Default)]
struct JoinWait {
    arrived: usize,
    any_failed: bool,
    payload: u64,
}

#[derive(Debug, Default)]
struct RaceWait {
    arrived: usize,
    fired: bool,
}

#[derive(Debug)]
struct FailoverWait {
    input: Token,
    secondary: String,
    tried: bool,
}

#[derive(Debug, Clone, Copy)]
struct LaunchPlan {
    gap_ms: f64,
    generation: u64,
}

/// The simulator proper. Owns the runtime architecture it executes; the
/// adaptation layer swaps a rewritten model in through [`Sim::swap_model`]
/// while tokens stay in flight.
pub struct Sim {
    model: RuntimeModel,
    providers: BTreeMap<String, ProviderState>,
    kinds: BTreeMap<String, PropertyKind>,
    constraints: BTreeMap<String, (ExpressionOp, f64)>,
    /// Bytes per millisecond across the device link; infinite when the run
    /// never constrains it, zero while the link is down.
    bandwidth_bytes_per_ms: f64,
    rng: ChaCha12Rng,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: f64,

    instances: BTreeMap<u64, InstanceRec>,
    next_instance: u64,
    launch: Option<LaunchPlan>,
    launch_generation: u64,

    /// Entry time per (property, instance), set by entry probes.
    entered: BTreeMap<(String, u64), f64>,
    /// Cumulative completions per count-kind property.
    counts: BTreeMap<String, u64>,
    /// Activation numbers per (dispatching connector, instance).
    activations: BTreeMap<(String, u64), u64>,
    joins: BTreeMap<(String, u64), JoinWait>,
    races: BTreeMap<(String, u64, u64), RaceWait>,
    failover: BTreeMap<(String, u64, u64), FailoverWait>,
    /// SerialOut id -> the SerialIn that collects for it, derived from the
    /// collectors' `paired` fields whenever the model changes.
    serial_join_of: BTreeMap<String, String>,
    /// Captured inputs per (ReExecOut id, instance), replayed on retry.
    retry_input: BTreeMap<(String, u64), Token>,
    retries: BTreeMap<(String, u64), u32>,
    loop_turns: BTreeMap<(String, u64), u32>,
    held: BTreeMap<String, Vec<Token>>,
    queue_held_bytes: u64,

    measurements: Vec<Measurement>,
    finished: Vec<(u64, u64)>,
    trace: Vec<TraceEvent>,
    stats: SimStats,
}

impl Sim {
    pub fn new(model: &AdaptiveProcessModel, runtime: RuntimeModel, seed: u64) -> Sim {
        let providers = model
            .services
            .iter()
            .flat_map(|s| &s.providers)
            .map(|p| (p.provider_id.clone(), ProviderState::from(p)))
            .collect();
        let kinds: BTreeMap<String, PropertyKind> = model
            .quality_requirements
            .iter()
            .map(|qr| (qr.property.name.clone(), qr.property.kind.clone()))
            .collect();
        let constraints = kinds
            .iter()
            .filter_map(|(name, kind)| match kind {
                PropertyKind::Constraint { expression } => parse_constraint(expression)
                    .ok()
                    .map(|(_, op, rhs)| (name.clone(), (op, rhs))),
                _ => None,
            })
            .collect();
        let serial_join_of = derive_serial_pairs(&runtime);
        Sim {
            model: runtime,
            providers,
            kinds,
            constraints,
            bandwidth_bytes_per_ms: f64::INFINITY,
            rng: ChaCha12Rng::seed_from_u64(seed),
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            instances: BTreeMap::new(),
            next_instance: 0,
            launch: None,
            launch_generation: 0,
            entered: BTreeMap::new(),
            counts: BTreeMap::new(),
            activations: BTreeMap::new(),
            joins: BTreeMap::new(),
            races: BTreeMap::new(),
            failover: BTreeMap::new(),
            serial_join_of,
            retry_input: BTreeMap::new(),
            retries: BTreeMap::new(),
            loop_turns: BTreeMap::new(),
            held: BTreeMap::new(),
            queue_held_bytes: 0,
            measurements: Vec::new(),
            finished: Vec::new(),
            trace: Vec::new(),
            stats: SimStats::default(),
        }
    }

    pub fn model(&self) -> &RuntimeModel {
        &self.model
    }

    /// Install a rewritten architecture. In-flight tokens keep their course
    /// by element id; a token bound for an element the rewrite removed is
    /// treated as a lost request.
    pub fn swap_model(&mut self, runtime: RuntimeModel) {
        self.serial_join_of = derive_serial_pairs(&runtime);
        self.model = runtime;
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn now_ms(&self) -> f64 {
        self.now
    }

    pub fn bandwidth_bytes_per_ms(&self) -> f64 {
        self.bandwidth_bytes_per_ms
    }

    pub fn providers(&self) -> &BTreeMap<String, ProviderState> {
        &self.providers
    }

    pub fn in_flight(&self) -> usize {
        self.instances
            .values()
            .filter(|r| r.finished_ms.is_none())
            .count()
    }

    pub fn drain_measurements(&mut self) -> Vec<Measurement> {
        std::mem::take(&mut self.measurements)
    }

    /// Instances that reached the end connector since the last drain, with
    /// the time they did; the caller finalizes them in the evaluator.
    pub fn drain_finished(&mut self) -> Vec<(u64, u64)> {
        std::mem::take(&mut self.finished)
    }

    /// Execution-side trace events (invoke, complete, fail, measure)
    /// accumulated since the last drain, in event order.
    pub fn drain_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    /// Process every event scheduled up to and including `t_ms`.
    pub fn run_until(&mut self, t_ms: f64) {
        while let Some(Reverse(head)) = self.events.peek() {
            if head.at > t_ms {
                break;
            }
            let Reverse(event) = self.events.pop().expect("peeked");
            self.now = event.at;
            match event.kind {
                EventKind::Deliver { at, token } => self.handle_deliver(&at, token),
                EventKind::Launch { generation } => self.handle_launch(generation),
            }
        }
        self.now = self.now.max(t_ms);
    }

    /// Start one workflow instance right now; returns its id.
    pub fn launch_instance(&mut self) -> u64 {
        let id = self.next_instance;
        self.next_instance += 1;
        self.instances.insert(
            id,
            InstanceRec {
                started_ms: self.now,
                finished_ms: None,
                failed: false,
                cost: 0.0,
            },
        );
        self.stats.launched += 1;
        let entry = self.model.entry.clone();
        self.schedule(
            self.now,
            EventKind::Deliver {
                at: entry,
                token: Token {
                    instance: id,
                    payload_bytes: 0,
                    failed: false,
                    collector: None,
                },
            },
        );
        id
    }

    /// Apply one scenario action. Assumption changes concern the context,
    /// not the execution, and are ignored here.
    pub fn apply_action(&mut self, action: &ScenarioAction) {
        match action {
            ScenarioAction::StartInstances { rate_per_s } => {
                self.launch_generation += 1;
                if *rate_per_s <= 0.0 {
                    self.launch = None;
                    return;
                }
                let plan = LaunchPlan {
                    gap_ms: 1000.0 / rate_per_s,
                    generation: self.launch_generation,
                };
                self.launch = Some(plan);
                self.schedule(
                    self.now,
                    EventKind::Launch {
                        generation: plan.generation,
                    },
                );
            }
            ScenarioAction::SetProviderFailure { provider, p } => {
                if let Some(state) = self.providers.get_mut(provider) {
                    state.failure_probability = p.clamp(0.0, 1.0);
                }
            }
            ScenarioAction::SetProviderLatency {
                provider,
                mean_ms,
                stddev_ms,
            } => {
                if let Some(state) = self.providers.get_mut(provider) {
                    state.latency_mean_ms = mean_ms.max(0.0);
                    state.latency_stddev_ms = stddev_ms.max(0.0);
                }
            }
            ScenarioAction::SetBandwidth { bytes_per_ms } => {
                let was_down = self.bandwidth_bytes_per_ms <= 0.0;
                self.bandwidth_bytes_per_ms = bytes_per_ms.max(0.0);
                if was_down && self.bandwidth_bytes_per_ms > 0.0 {
                    self.drain_queues();
                }
            }
            ScenarioAction::AssertAssumption { .. } | ScenarioAction::RetractAssumption { .. } => {
            }
        }
    }

    // -- event handling ------------------------------------------------

    fn handle_launch(&mut self, generation: u64) {
        let Some(plan) = self.launch else { return };
        if plan.generation != generation {
            return;
        }
        self.launch_instance();
        self.schedule(self.now + plan.gap_ms, EventKind::Launch { generation });
    }

    fn handle_deliver(&mut self, at: &str, token: Token) {
        // stragglers of a finished instance (race losers, lost-and-replaced
        // copies) die at arrival
        if self
            .instances
            .get(&token.instance)
            .map_or(true, |r| r.finished_ms.is_some())
        {
            return;
        }
        let Some(element) = self.model.elements.get(at).cloned() else {
            return self.dead_end(token);
        };
        match element {
            Element::Component { provider, .. } => self.invoke(at, &provider, token),
            Element::Connector(kind) => self.handle_connector(at, kind, token),
        }
    }

    fn invoke(&mut self, id: &str, provider: &str, token: Token) {
        if token.failed {
            return self.emit(id, token, 0.0);
        }
        let Some(p) = self.providers.get(provider).cloned() else {
            return self.dead_end(token);
        };
        *self.stats.invocations.entry(provider.to_owned()).or_default() += 1;
        self.stats.total_cost += p.cost;
        self.trace.push(TraceEvent::new(
            self.now.round() as u64,
            TraceKind::Invoke {
                instance: token.instance,
                component: id.to_owned(),
                provider: provider.to_owned(),
            },
        ));
        if let Some(rec) = self.instances.get_mut(&token.instance) {
            rec.cost += p.cost;
        }
        // a failed attempt still takes its time and its money
        let failed = self.rng.gen_bool(p.failure_probability.clamp(0.0, 1.0));
        let latency = self.sample_latency(&p);
        let out = Token {
            instance: token.instance,
            payload_bytes: p.payload_bytes,
            failed,
            collector: token.collector,
        };
        self.emit(id, out, latency);
    }

    fn handle_connector(&mut self, at: &str, kind: ConnectorKind, token: Token) {
        match kind {
            ConnectorKind::Start
            | ConnectorKind::Junction
            | ConnectorKind::Merge
            | ConnectorKind::Bypass
            | ConnectorKind::LoopEnter => self.emit(at, token, 0.0),

            ConnectorKind::End => self.finish_instance(token),

            ConnectorKind::Branch {
                probabilities,
                targets,
            } => {
                let x: f64 = self.rng.gen();
                let mut acc = 0.0;
                let mut chosen = targets.len() - 1;
                for (i, p) in probabilities.iter().enumerate() {
                    acc += p;
                    if x < acc {
                        chosen = i;
                        break;
                    }
                }
                self.send(&targets[chosen], token, 0.0);
            }

            ConnectorKind::Fork => self.emit(at, token, 0.0),

            ConnectorKind::Join { expect } => {
                let key = (at.to_owned(), token.instance);
                let complete = {
                    let wait = self.joins.entry(key.clone()).or_default();
                    wait.arrived += 1;
                    wait.any_failed |= token.failed;
                    wait.payload = wait.payload.max(token.payload_bytes);
                    wait.arrived >= expect
                };
                if complete {
                    let wait = self.joins.remove(&key).expect("just updated");
                    let merged = Token {
                        instance: token.instance,
                        payload_bytes: wait.payload,
                        failed: wait.any_failed,
                        collector: token.collector,
                    };
                    self.emit(at, merged, 0.0);
                }
            }

            ConnectorKind::LoopExit { k, enter } => {
                let key = (at.to_owned(), token.instance);
                let turns = self.loop_turns.entry(key.clone()).or_insert(0);
                *turns += 1;
                if *turns < k {
                    self.send(&enter, token, 0.0);
                } else {
                    self.loop_turns.remove(&key);
                    self.forward(at, token, 0.0, &[enter.as_str()]);
                }
            }

            ConnectorKind::Interceptor { property, role } => {
                if !token.failed {
                    match role {
                        InterceptRole::Entry => {
                            self.entered
                                .entry((property.clone(), token.instance))
                                .or_insert(self.now);
                        }
                        InterceptRole::Exit => self.record_exit(&property, &token),
                    }
                }
                self.emit(at, token, 0.0);
            }

            // checkpoints are off the token path; nothing should arrive here
            ConnectorKind::Checkpoint { .. } => {}

            ConnectorKind::ParallelOut { paired } => {
                let act = self.bump_activation(at, token.instance);
                let stamped = Token {
                    collector: Some((paired, act)),
                    ..token
                };
                self.emit(at, stamped, 0.0);
            }

            ConnectorKind::ParallelIn { expect } => {
                let Some((join, act)) = token.collector.clone() else {
                    return;
                };
                if join != at {
                    return;
                }
                let key = (at.to_owned(), token.instance, act);
                let (fire_success, fire_failure, complete) = {
                    let wait = self.races.entry(key.clone()).or_default();
                    wait.arrived += 1;
                    let fire_success = !token.failed && !wait.fired;
                    if fire_success {
                        wait.fired = true;
                    }
                    let complete = wait.arrived >= expect;
                    (fire_success, complete && !wait.fired, complete)
                };
                if complete {
                    self.races.remove(&key);
                }
                if fire_success || fire_failure {
                    let out = Token {
                        failed: fire_failure,
                        collector: None,
                        ..token
                    };
                    self.emit(at, out, 0.0);
                }
            }

            ConnectorKind::SerialOut { primary, secondary } => {
                let Some(join) = self.serial_join_of.get(at).cloned() else {
                    return self.forward(at, token, 0.0, &[]);
                };
                let act = self.bump_activation(at, token.instance);
                self.failover.insert(
                    (at.to_owned(), token.instance, act),
                    FailoverWait {
                        input: token.clone(),
                        secondary,
                        tried: false,
                    },
                );
                let stamped = Token {
                    collector: Some((join, act)),
                    ..token
                };
                self.send(&primary, stamped, 0.0);
            }

            ConnectorKind::SerialIn { paired } => {
                let Some((join, act)) = token.collector.clone() else {
                    return;
                };
                if join != at {
                    return;
                }
                let key = (paired, token.instance, act);
                if !token.failed {
                    self.failover.remove(&key);
                    let out = Token {
                        collector: None,
                        ..token
                    };
                    return self.emit(at, out, 0.0);
                }
                let replay = match self.failover.get_mut(&key) {
                    Some(wait) if !wait.tried => {
                        wait.tried = true;
                        Some((wait.input.clone(), wait.secondary.clone()))
                    }
                    _ => None,
                };
                match replay {
                    Some((input, secondary)) => {
                        let retry = Token {
                            collector: Some((at.to_owned(), act)),
                            ..input
                        };
                        self.send(&secondary, retry, 0.0);
                    }
                    None => {
                        self.failover.remove(&key);
                        let out = Token {
                            collector: None,
                            ..token
                        };
                        self.emit(at, out, 0.0);
                    }
                }
            }

            ConnectorKind::ReExecOut => {
                if !token.failed {
                    self.retry_input
                        .insert((at.to_owned(), token.instance), token.clone());
                }
                self.emit(at, token, 0.0);
            }

            ConnectorKind::Condition {
                max_retries,
                paired,
                ..
            } => {
                let key = (at.to_owned(), token.instance);
                if !token.failed {
                    self.retries.remove(&key);
                    self.retry_input.remove(&(paired.clone(), token.instance));
                    return self.forward(at, token, 0.0, &[paired.as_str()]);
                }
                let snapshot = self
                    .retry_input
                    .get(&(paired.clone(), token.instance))
                    .cloned();
                let attempts = self.retries.entry(key.clone()).or_insert(0);
                match snapshot {
                    Some(input) if *attempts < max_retries => {
                        *attempts += 1;
                        self.send(&paired, input, 0.0);
                    }
                    _ => {
                        self.retries.remove(&key);
                        self.retry_input.remove(&(paired.clone(), token.instance));
                        self.forward(at, token, 0.0, &[paired.as_str()]);
                    }
                }
            }

            ConnectorKind::CompressorOut { ratio, proc_ms } => {
                if token.failed {
                    return self.emit(at, token, 0.0);
                }
                self.stats.battery_ms += proc_ms;
                let payload = (token.payload_bytes as f64 * ratio).round().max(0.0) as u64;
                let out = Token {
                    payload_bytes: payload,
                    ..token
                };
                self.emit(at, out, proc_ms);
            }

            ConnectorKind::CompressorIn { proc_ms } => {
                if token.failed {
                    return self.emit(at, token, 0.0);
                }
                self.stats.battery_ms += proc_ms;
                self.emit(at, token, proc_ms);
            }

            ConnectorKind::DataModifier { factor, .. } => {
                let out = Token {
                    payload_bytes: (token.payload_bytes as f64 * factor).round().max(0.0) as u64,
                    ..token
                };
                self.emit(at, out, 0.0);
            }

            ConnectorKind::Cache {
                hit_ratio,
                miss_target,
                ..
            } => {
                if token.failed {
                    return self.send(&miss_target, token, 0.0);
                }
                if self.rng.gen_bool(hit_ratio.clamp(0.0, 1.0)) {
                    // served from the cache: straight to the exits the span
                    // would have reached, keeping the request-sized payload
                    let outs: Vec<String> = self
                        .model
                        .bindings_out_of(at)
                        .into_iter()
                        .filter(|o| o != &miss_target && !self.off_path(o, &token))
                        .collect();
                    if outs.is_empty() {
                        return self.dead_end(token);
                    }
                    for out in outs {
                        self.send(&out, token.clone(), 0.0);
                    }
                } else {
                    self.send(&miss_target, token, 0.0);
                }
            }

            ConnectorKind::Queue => {
                if token.failed || self.bandwidth_bytes_per_ms > 0.0 {
                    return self.emit(at, token, 0.0);
                }
                self.queue_held_bytes += token.payload_bytes;
                self.stats.queue_peak_bytes =
                    self.stats.queue_peak_bytes.max(self.queue_held_bytes);
                self.held.entry(at.to_owned()).or_default().push(token);
            }
        }
    }

    // -- routing --------------------------------------------------------

    /// True when `target` must not receive ordinary traffic: checkpoints
    /// are off-path, and a collector only accepts copies stamped for it.
    fn off_path(&self, target: &str, token: &Token) -> bool {
        match self.model.connector(target) {
            Some(ConnectorKind::Checkpoint { .. }) => true,
            Some(ConnectorKind::ParallelIn { .. } | ConnectorKind::SerialIn { .. }) => token
                .collector
                .as_ref()
                .map_or(true, |(join, _)| join != target),
            _ => false,
        }
    }

    /// Dispatch a token onward after `delay` of local processing. A stamped
    /// token bound directly to its collector goes only there; fork-like
    /// sources replicate to every remaining target; everything else follows
    /// its single out-binding.
    fn emit(&mut self, from: &str, token: Token, delay: f64) {
        if let Some((join, _)) = token.collector.clone() {
            if self.model.bindings.contains(&(from.to_owned(), join.clone())) {
                return self.send(&join, token, delay);
            }
        }
        let outs: Vec<String> = self
            .model
            .bindings_out_of(from)
            .into_iter()
            .filter(|o| !self.off_path(o, &token))
            .collect();
        match outs.len() {
            0 => self.dead_end(token),
            1 => self.send(&outs[0], token, delay),
            _ => {
                if matches!(
                    self.model.connector(from),
                    Some(ConnectorKind::Fork | ConnectorKind::ParallelOut { .. })
                ) {
                    for out in outs {
                        self.send(&out, token.clone(), delay);
                    }
                } else {
                    debug_assert!(false, "ambiguous fan-out at '{from}'");
                    self.send(&outs[0], token, delay);
                }
            }
        }
    }

    /// Route one copy onward, skipping `exclude` on top of the off-path
    /// targets. Used by connectors whose out-bindings include a leg that is
    /// not part of the forward path (a loop backedge, a retry capture).
    fn forward(&mut self, from: &str, token: Token, delay: f64, exclude: &[&str]) {
        let outs: Vec<String> = self
            .model
            .bindings_out_of(from)
            .into_iter()
            .filter(|o| !exclude.contains(&o.as_str()) && !self.off_path(o, &token))
            .collect();
        match outs.first() {
            Some(first) => {
                debug_assert!(outs.len() == 1, "ambiguous forward at '{from}'");
                let first = first.clone();
                self.send(&first, token, delay);
            }
            None => self.dead_end(token),
        }
    }

    /// Schedule delivery of `token` at `to` after `delay`, plus transit when
    /// a payload has to cross the link into a component; connector hops are
    /// free, and so are empty messages, which fit the signalling channel. A
    /// dead link loses the payload: the target is handed a failure notice
    /// instead, which downstream guards may still recover.
    fn send(&mut self, to: &str, token: Token, delay: f64) {
        let mut token = token;
        let mut transit = 0.0;
        let into_component = self
            .model
            .elements
            .get(to)
            .is_some_and(Element::is_component);
        if !token.failed && into_component && token.payload_bytes > 0 {
            if self.bandwidth_bytes_per_ms <= 0.0 {
                token.failed = true;
            } else if self.bandwidth_bytes_per_ms.is_finite() {
                transit = token.payload_bytes as f64 / self.bandwidth_bytes_per_ms;
            }
        }
        self.schedule(
            self.now + delay + transit,
            EventKind::Deliver {
                at: to.to_owned(),
                token,
            },
        );
    }

    /// A token with nowhere to go is a lost request; the instance fails
    /// through the regular end-of-flow path so double arrivals stay benign.
    fn dead_end(&mut self, token: Token) {
        let exit = self.model.exit.clone();
        self.schedule(
            self.now,
            EventKind::Deliver {
                at: exit,
                token: Token {
                    failed: true,
                    collector: None,
                    ..token
                },
            },
        );
    }

    // -- bookkeeping ----------------------------------------------------

    fn bump_activation(&mut self, id: &str, instance: u64) -> u64 {
        let slot = self
            .activations
            .entry((id.to_owned(), instance))
            .or_insert(0);
        *slot += 1;
        *slot
    }

    fn sample_latency(&mut self, p: &ProviderState) -> f64 {
        if p.latency_stddev_ms <= 0.0 {
            return p.latency_mean_ms.max(0.0);
        }
        Normal::new(p.latency_mean_ms, p.latency_stddev_ms)
            .map(|d| d.sample(&mut self.rng))
            .unwrap_or(p.latency_mean_ms)
            .max(0.0)
    }

    /// Compute the sample an exit probe records for its property.
    fn record_exit(&mut self, property: &str, token: &Token) {
        let Some(kind) = self.kinds.get(property).cloned() else {
            return;
        };
        let value = match kind {
            PropertyKind::Time => {
                let key = (property.to_owned(), token.instance);
                let Some(entered) = self.entered.remove(&key) else {
                    return;
                };
                self.now - entered
            }
            PropertyKind::Failure => {
                // the watched region was left on the success path
                self.entered.remove(&(property.to_owned(), token.instance));
                0.0
            }
            PropertyKind::Count => {
                let slot = self.counts.entry(property.to_owned()).or_insert(0);
                *slot += 1;
                *slot as f64
            }
            PropertyKind::Data { .. } => token.payload_bytes as f64,
            PropertyKind::Constraint { .. } => {
                let Some((op, threshold)) = self.constraints.get(property).copied() else {
                    return;
                };
                // 1.0 when the message satisfies the constraint
                if op.eval(token.payload_bytes as f64, threshold) {
                    1.0
                } else {
                    0.0
                }
            }
            PropertyKind::Derived { .. } | PropertyKind::Aggregated { .. } => return,
        };
        self.record(token.instance, property, value);
    }

    fn record(&mut self, instance: u64, property: &str, value: f64) {
        self.measurements.push(Measurement {
            t_ms: self.now.round() as u64,
            instance,
            property: property.to_owned(),
            value,
        });
        self.trace.push(TraceEvent::new(
            self.now.round() as u64,
            TraceKind::Measure {
                instance,
                property: property.to_owned(),
                value,
            },
        ));
    }

    fn finish_instance(&mut self, token: Token) {
        let started = {
            let Some(rec) = self.instances.get_mut(&token.instance) else {
                return;
            };
            if rec.finished_ms.is_some() {
                return;
            }
            rec.finished_ms = Some(self.now);
            rec.failed = token.failed;
            rec.started_ms
        };
        if token.failed {
            self.stats.failed += 1;
            // failure watchers saw this instance enter but never leave
            let pending: Vec<String> = self
                .entered
                .keys()
                .filter(|(p, i)| {
                    *i == token.instance
                        && matches!(self.kinds.get(p), Some(PropertyKind::Failure))
                })
                .map(|(p, _)| p.clone())
                .collect();
            for property in pending {
                self.record(token.instance, &property, 1.0);
            }
            self.trace.push(TraceEvent::new(
                self.now.round() as u64,
                TraceKind::Fail {
                    instance: token.instance,
                },
            ));
        } else {
            self.stats.completed += 1;
            self.stats.response_times_ms.push(self.now - started);
            self.trace.push(TraceEvent::new(
                self.now.round() as u64,
                TraceKind::Complete {
                    instance: token.instance,
                    duration_ms: self.now - started,
                },
            ));
        }
        self.finished.push((token.instance, self.now.round() as u64));
        self.gc_instance(token.instance);
    }

    fn gc_instance(&mut self, instance: u64) {
        self.entered.retain(|(_, i), _| *i != instance);
        self.loop_turns.retain(|(_, i), _| *i != instance);
        self.retries.retain(|(_, i), _| *i != instance);
        self.retry_input.retain(|(_, i), _| *i != instance);
        self.activations.retain(|(_, i), _| *i != instance);
        self.joins.retain(|(_, i), _| *i != instance);
        self.races.retain(|(_, i, _), _| *i != instance);
        self.failover.retain(|(_, i, _), _| *i != instance);
    }

    fn drain_queues(&mut self) {
        let held = std::mem::take(&mut self.held);
        self.queue_held_bytes = 0;
        for (queue, tokens) in held {
            for token in tokens {
                self.emit(&queue, token, 0.0);
            }
        }
    }

    fn schedule(&mut self, at: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.events.push(Reverse(Event { at, seq, kind }));
    }
}

/// Invert the collectors' `paired` fields: which SerialIn collects for
/// which SerialOut.
fn derive_serial_pairs(runtime: &RuntimeModel) -> BTreeMap<String, String> {
    let mut pairs = BTreeMap::new();
    for (id, element) in &runtime.elements {
        if let Element::Connector(ConnectorKind::SerialIn { paired }) = element {
            pairs.insert(paired.clone(), id.clone());
        }
    }
    pairs
}
