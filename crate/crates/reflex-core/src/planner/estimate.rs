//! Closed-form effect prediction over the runtime graph.
//!
//! Tradeoff scoring needs attribute values for an architecture that has
//! not run yet, so this walks the wiring and composes per-element
//! expectations instead of simulating: latencies and processing delays
//! add up, availabilities multiply, split connectors combine their
//! branches with the formula matching their collector. The result is an
//! expectation, not a sample; the simulator remains the ground truth.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::sim::ProviderState;
use crate::transform::{ConnectorKind, Element, Region, RuntimeModel};

/// Expected attributes of one traversal of a span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Est {
    pub time_ms: f64,
    pub cost: f64,
    pub avail: f64,
    /// Payload size carried out of the span, in bytes.
    pub payload: f64,
}

impl Est {
    /// The empty span: instant, free, certain.
    pub fn nothing() -> Self {
        Est {
            time_ms: 0.0,
            cost: 0.0,
            avail: 1.0,
            payload: 0.0,
        }
    }
}

/// The environment the estimate assumes: current provider parameters and
/// link bandwidth, mirrored from the simulator at planning time.
pub struct Environment<'a> {
    pub providers: &'a BTreeMap<String, ProviderState>,
    pub bandwidth_bytes_per_ms: f64,
}

/// Expected attributes of the span a region covers, under `env`. Spans
/// detached from the entry (a skipped block) or otherwise unwalkable
/// contribute nothing.
pub fn span_estimate(rt: &RuntimeModel, env: &Environment, region: &Region) -> Est {
    if !reachable(rt, &region.first) {
        return Est::nothing();
    }
    let mut w = Walker {
        rt,
        env,
        fuel: 100_000,
    };
    // Establish the payload arriving at the span before walking it, so
    // transit into its first component is charged with real bytes.
    let span_first = region.first.clone();
    let inbound = match w.walk(rt.entry.clone(), 0.0, &move |e| e == span_first) {
        Some((prefix, _)) => prefix.payload,
        None => 0.0,
    };
    let stop = successors_past(rt, &region.last);
    let exit = rt.exit.clone();
    let walked = w.walk(region.first.clone(), inbound, &move |e| {
        stop.contains(e) || (stop.is_empty() && e == exit)
    });
    match walked {
        Some((est, _)) => est,
        None => Est::nothing(),
    }
}

/// Expected attributes of the whole process, entry to exit.
pub fn full_estimate(rt: &RuntimeModel, env: &Environment) -> Est {
    let mut w = Walker {
        rt,
        env,
        fuel: 100_000,
    };
    let exit = rt.exit.clone();
    match w.walk(rt.entry.clone(), 0.0, &move |e| e == exit) {
        Some((est, _)) => est,
        None => Est::nothing(),
    }
}

fn reachable(rt: &RuntimeModel, target: &str) -> bool {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut queue: VecDeque<&str> = VecDeque::new();
    queue.push_back(&rt.entry);
    while let Some(cur) = queue.pop_front() {
        if cur == target {
            return true;
        }
        if !seen.insert(cur) {
            continue;
        }
        for (from, to) in &rt.bindings {
            if from == cur {
                queue.push_back(to);
            }
        }
    }
    false
}

/// Where a walk over `first ..= last` must halt: the elements directly
/// after `last`, backedges excluded.
fn successors_past(rt: &RuntimeModel, last: &str) -> BTreeSet<String> {
    let mut outs: BTreeSet<String> = rt
        .bindings
        .iter()
        .filter(|(f, _)| f == last)
        .map(|(_, t)| t.clone())
        .collect();
    match rt.elements.get(last) {
        Some(Element::Connector(ConnectorKind::LoopExit { enter, .. })) => {
            outs.remove(enter);
        }
        Some(Element::Connector(ConnectorKind::Condition { paired, .. })) => {
            outs.remove(paired);
        }
        _ => {}
    }
    outs
}

/// Collectors end a branch-arm walk; the split connector that spawned the
/// arm knows how to continue past them.
fn arm_stops(rt: &RuntimeModel, e: &str) -> bool {
    matches!(
        rt.elements.get(e),
        Some(Element::Connector(
            ConnectorKind::Join { .. }
                | ConnectorKind::Merge
                | ConnectorKind::ParallelIn { .. }
                | ConnectorKind::SerialIn { .. }
        ))
    )
}

fn is_loop_exit_of(rt: &RuntimeModel, e: &str, enter: &str) -> bool {
    matches!(
        rt.elements.get(e),
        Some(Element::Connector(ConnectorKind::LoopExit { enter: en, .. })) if en == enter
    )
}

fn is_guard_of(rt: &RuntimeModel, e: &str, capture: &str) -> bool {
    matches!(
        rt.elements.get(e),
        Some(Element::Connector(ConnectorKind::Condition { paired, .. })) if paired == capture
    )
}

struct Walker<'a> {
    rt: &'a RuntimeModel,
    env: &'a Environment<'a>,
    fuel: u32,
}

impl<'a> Walker<'a> {
    /// Walk from `start`, folding element effects into an estimate, until
    /// an element satisfying `stop` is reached (that element is not
    /// processed). Returns the estimate and the stop element. `None` means
    /// the walk ran out of graph or fuel.
    fn walk(
        &mut self,
        start: String,
        payload_in: f64,
        stop: &dyn Fn(&str) -> bool,
    ) -> Option<(Est, String)> {
        let rt = self.rt;
        let mut est = Est {
            time_ms: 0.0,
            cost: 0.0,
            avail: 1.0,
            payload: payload_in,
        };
        let mut cur = start;
        loop {
            if stop(&cur) {
                return Some((est, cur));
            }
            self.fuel = self.fuel.checked_sub(1)?;
            let element = rt.elements.get(&cur)?.clone();
            match element {
                Element::Component { provider, .. } => {
                    let p = self.env.providers.get(&provider)?;
                    if est.payload > 0.0 {
                        if self.env.bandwidth_bytes_per_ms > 0.0 {
                            est.time_ms += est.payload / self.env.bandwidth_bytes_per_ms;
                        } else {
                            // dead link: the message cannot arrive
                            est.avail = 0.0;
                        }
                    }
                    est.time_ms += p.latency_mean_ms;
                    est.cost += p.cost;
                    est.avail *= 1.0 - p.failure_probability.clamp(0.0, 1.0);
                    est.payload = p.payload_bytes as f64;
                    cur = self.linear_next(&cur)?;
                }
                Element::Connector(kind) => match kind {
                    ConnectorKind::End => return Some((est, cur)),
                    ConnectorKind::Start
                    | ConnectorKind::Junction
                    | ConnectorKind::Bypass
                    | ConnectorKind::Merge
                    | ConnectorKind::Join { .. }
                    | ConnectorKind::ParallelIn { .. }
                    | ConnectorKind::SerialIn { .. }
                    | ConnectorKind::Interceptor { .. }
                    | ConnectorKind::Queue => {
                        cur = self.linear_next(&cur)?;
                    }
                    ConnectorKind::Checkpoint { .. } => return None,
                    ConnectorKind::CompressorOut { ratio, proc_ms } => {
                        est.time_ms += proc_ms;
                        est.payload = (est.payload * ratio).round();
                        cur = self.linear_next(&cur)?;
                    }
                    ConnectorKind::CompressorIn { proc_ms } => {
                        est.time_ms += proc_ms;
                        cur = self.linear_next(&cur)?;
                    }
                    ConnectorKind::DataModifier { factor, .. } => {
                        est.payload = (est.payload * factor).round();
                        cur = self.linear_next(&cur)?;
                    }
                    ConnectorKind::Branch {
                        probabilities,
                        targets,
                    } => {
                        let mut time = 0.0;
                        let mut cost = 0.0;
                        let mut avail = 0.0;
                        let mut payload = 0.0;
                        let mut merge = None;
                        for (p, target) in probabilities.iter().zip(&targets) {
                            let (arm, at) =
                                self.walk(target.clone(), est.payload, &|e| arm_stops(rt, e))?;
                            time += p * arm.time_ms;
                            cost += p * arm.cost;
                            avail += p * arm.avail;
                            payload += p * arm.payload;
                            merge = Some(at);
                        }
                        est.time_ms += time;
                        est.cost += cost;
                        est.avail *= avail;
                        est.payload = payload;
                        cur = merge?;
                    }
                    ConnectorKind::Fork => {
                        let mut time: f64 = 0.0;
                        let mut cost = 0.0;
                        let mut avail = 1.0;
                        let mut payload: f64 = 0.0;
                        let mut join = None;
                        for head in self.on_path_outs(&cur) {
                            let (arm, at) = self.walk(head, est.payload, &|e| arm_stops(rt, e))?;
                            time = time.max(arm.time_ms);
                            cost += arm.cost;
                            avail *= arm.avail;
                            payload = payload.max(arm.payload);
                            join = Some(at);
                        }
                        est.time_ms += time;
                        est.cost += cost;
                        est.avail *= avail;
                        est.payload = payload;
                        cur = join?;
                    }
                    ConnectorKind::ParallelOut { .. } => {
                        // a race: the first branch to answer wins
                        let mut time = f64::INFINITY;
                        let mut cost = 0.0;
                        let mut all_fail = 1.0;
                        let mut payload = 0.0;
                        let mut join = None;
                        for head in self.on_path_outs(&cur) {
                            let (arm, at) = self.walk(head, est.payload, &|e| arm_stops(rt, e))?;
                            if arm.time_ms < time {
                                time = arm.time_ms;
                                payload = arm.payload;
                            }
                            cost += arm.cost;
                            all_fail *= 1.0 - arm.avail;
                            join = Some(at);
                        }
                        est.time_ms += if time.is_finite() { time } else { 0.0 };
                        est.cost += cost;
                        est.avail *= 1.0 - all_fail;
                        est.payload = payload;
                        cur = join?;
                    }
                    ConnectorKind::SerialOut {
                        primary, secondary, ..
                    } => {
                        let (one, join) = self.walk(primary, est.payload, &|e| arm_stops(rt, e))?;
                        let (two, _) = self.walk(secondary, est.payload, &|e| arm_stops(rt, e))?;
                        let miss = 1.0 - one.avail;
                        est.time_ms += one.time_ms + miss * two.time_ms;
                        est.cost += one.cost + miss * two.cost;
                        est.avail *= 1.0 - miss * (1.0 - two.avail);
                        est.payload = one.avail * one.payload + miss * two.payload;
                        cur = join;
                    }
                    ConnectorKind::LoopEnter => {
                        let head = self.linear_next(&cur)?;
                        let enter = cur.clone();
                        let (body, exit) =
                            self.walk(head, est.payload, &|e| is_loop_exit_of(rt, e, &enter))?;
                        let Some(Element::Connector(ConnectorKind::LoopExit { k, .. })) =
                            rt.elements.get(&exit)
                        else {
                            return None;
                        };
                        let k = f64::from(*k);
                        est.time_ms += k * body.time_ms;
                        est.cost += k * body.cost;
                        est.avail *= body.avail.powf(k);
                        est.payload = body.payload;
                        cur = self.past_loop_exit(&exit)?;
                    }
                    ConnectorKind::LoopExit { .. } => {
                        cur = self.past_loop_exit(&cur)?;
                    }
                    ConnectorKind::ReExecOut => {
                        let head = self.linear_next(&cur)?;
                        let capture = cur.clone();
                        let (body, guard) =
                            self.walk(head, est.payload, &|e| is_guard_of(rt, e, &capture))?;
                        let Some(Element::Connector(ConnectorKind::Condition {
                            max_retries, ..
                        })) = rt.elements.get(&guard)
                        else {
                            return None;
                        };
                        let attempts = f64::from(*max_retries) + 1.0;
                        let a = body.avail.clamp(0.0, 1.0);
                        let (runs, lifted) = if a > 0.0 {
                            let lifted = 1.0 - (1.0 - a).powf(attempts);
                            (lifted / a, lifted)
                        } else {
                            (attempts, 0.0)
                        };
                        est.time_ms += runs * body.time_ms;
                        est.cost += runs * body.cost;
                        est.avail *= lifted;
                        est.payload = body.payload;
                        cur = self.past_condition(&guard)?;
                    }
                    ConnectorKind::Condition { .. } => {
                        cur = self.past_condition(&cur)?;
                    }
                    ConnectorKind::Cache {
                        hit_ratio,
                        miss_target,
                        ..
                    } => {
                        let hit = hit_ratio.clamp(0.0, 1.0);
                        let cont = self
                            .on_path_outs(&cur)
                            .into_iter()
                            .find(|o| *o != miss_target);
                        match cont {
                            Some(cont) => {
                                let stop_at = cont.clone();
                                let (miss, _) =
                                    self.walk(miss_target, est.payload, &|e| e == stop_at)?;
                                est.time_ms += (1.0 - hit) * miss.time_ms;
                                est.cost += (1.0 - hit) * miss.cost;
                                est.avail *= hit + (1.0 - hit) * miss.avail;
                                est.payload = hit * est.payload + (1.0 - hit) * miss.payload;
                                cur = cont;
                            }
                            // no hit edge yet: behaves as a plain hop
                            None => cur = miss_target,
                        }
                    }
                },
            }
        }
    }

    /// Outgoing bindings that carry live traffic: checkpoints hang off the
    /// path.
    fn on_path_outs(&self, from: &str) -> Vec<String> {
        self.rt
            .bindings
            .iter()
            .filter(|(f, _)| f == from)
            .map(|(_, t)| t.clone())
            .filter(|t| {
                !matches!(
                    self.rt.elements.get(t),
                    Some(Element::Connector(ConnectorKind::Checkpoint { .. }))
                )
            })
            .collect()
    }

    fn linear_next(&self, from: &str) -> Option<String> {
        self.on_path_outs(from).into_iter().next()
    }

    fn past_loop_exit(&self, exit: &str) -> Option<String> {
        let Some(Element::Connector(ConnectorKind::LoopExit { enter, .. })) =
            self.rt.elements.get(exit)
        else {
            return None;
        };
        self.on_path_outs(exit).into_iter().find(|o| o != enter)
    }

    fn past_condition(&self, guard: &str) -> Option<String> {
        let Some(Element::Connector(ConnectorKind::Condition { paired, .. })) =
            self.rt.elements.get(guard)
        else {
            return None;
        };
        self.on_path_outs(guard).into_iter().find(|o| o != paired)
    }
}
