//! Measurement intake and requirement evaluation: raw samples arrive from
//! checkpoints, derived values are materialized per instance, windows are
//! aggregated, and every value is held against its membership function.
//! Degradations (band transitions for the worse) become trigger events.

mod fuzzy;
mod structural;

pub use fuzzy::{badness, classify};
pub use structural::{structural_qos, QosVector};

use std::collections::{BTreeMap, VecDeque};

use crate::context::QualityLevel;
use crate::model::{
    AdaptiveProcessModel, AggregateFn, PropertyKind, QualityRequirement, Severity, TimeInterval,
};

/// One raw sample produced by a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub t_ms: u64,
    pub instance: u64,
    pub property: String,
    pub value: f64,
}

/// Snapshot of one requirement after an evaluation pass; feeds the context.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub requirement: String,
    pub property: String,
    pub value: f64,
    pub level: QualityLevel,
    pub badness: f64,
}

/// A transition into a worse band; carries the trigger the planner reacts to.
#[derive(Debug, Clone, PartialEq)]
pub struct Degradation {
    pub requirement: String,
    pub trigger: String,
    pub property: String,
    pub value: f64,
    pub level: QualityLevel,
    pub severity: Severity,
}

/// Stateful evaluator for all requirements of one model.
#[derive(Debug, Clone)]
pub struct QosEngine {
    requirements: Vec<QualityRequirement>,
    kinds: BTreeMap<String, PropertyKind>,
    /// Time series per property, pruned to the longest window that reads it.
    samples: BTreeMap<String, VecDeque<(u64, f64)>>,
    /// Samples that arrived since the last evaluation, per property.
    fresh: BTreeMap<String, Vec<(u64, f64)>>,
    /// Latest value per (property, instance); feeds derived properties.
    instance_values: BTreeMap<(String, u64), f64>,
    /// Current band per requirement. Every requirement starts acceptable,
    /// so the first degradation is always a transition.
    band: BTreeMap<String, QualityLevel>,
    /// How long samples of each property must be retained, in ms.
    retention: BTreeMap<String, u64>,
    /// Derived properties in dependency order.
    derived_order: Vec<String>,
}

impl QosEngine {
    pub fn new(model: &AdaptiveProcessModel) -> Self {
        let requirements = model.quality_requirements.clone();
        let kinds: BTreeMap<String, PropertyKind> = requirements
            .iter()
            .map(|qr| (qr.property.name.clone(), qr.property.kind.clone()))
            .collect();

        let mut retention: BTreeMap<String, u64> = BTreeMap::new();
        for qr in &requirements {
            let window = match qr.membership.interval {
                TimeInterval::PerInstance => 0,
                TimeInterval::SlidingWindow { window_ms } => window_ms,
            };
            // A windowed requirement needs its own property's history; an
            // aggregated one needs the base property's history instead.
            let read = match &qr.property.kind {
                PropertyKind::Aggregated { base, .. } => base.clone(),
                _ => qr.property.name.clone(),
            };
            let slot = retention.entry(read).or_default();
            *slot = (*slot).max(window);
        }

        let band = requirements
            .iter()
            .map(|qr| (qr.name.clone(), QualityLevel::Acceptable))
            .collect();

        let derived_order = derived_in_dependency_order(&kinds);

        QosEngine {
            requirements,
            kinds,
            samples: BTreeMap::new(),
            fresh: BTreeMap::new(),
            instance_values: BTreeMap::new(),
            band,
            retention,
            derived_order,
        }
    }

    /// Record one raw sample.
    pub fn ingest(&mut self, m: Measurement) {
        self.instance_values
            .insert((m.property.clone(), m.instance), m.value);
        self.samples
            .entry(m.property.clone())
            .or_default()
            .push_back((m.t_ms, m.value));
        self.fresh
            .entry(m.property)
            .or_default()
            .push((m.t_ms, m.value));
    }

    /// An instance ended (completed or failed): materialize its derived
    /// properties, then drop its per-instance state.
    pub fn finalize_instance(&mut self, instance: u64, t_ms: u64) {
        for name in self.derived_order.clone() {
            let Some(PropertyKind::Derived { function, inputs }) = self.kinds.get(&name) else {
                continue;
            };
            let mut values = Vec::with_capacity(inputs.len());
            for input in inputs {
                match self.instance_values.get(&(input.clone(), instance)) {
                    Some(v) => values.push(*v),
                    // An input never sampled for this instance (e.g. a branch
                    // not taken) leaves the derived value undefined.
                    None => return self.drop_instance(instance),
                }
            }
            let value = apply_derived(function, &values);
            self.ingest(Measurement {
                t_ms,
                instance,
                property: name,
                value,
            });
        }
        self.drop_instance(instance);
    }

    fn drop_instance(&mut self, instance: u64) {
        self.instance_values.retain(|(_, i), _| *i != instance);
    }

    /// Evaluate every requirement at `now`, returning context snapshots and
    /// any transitions into a worse band.
    pub fn evaluate(&mut self, now: u64) -> (Vec<Evaluation>, Vec<Degradation>) {
        let mut evaluations = Vec::new();
        let mut degradations = Vec::new();

        for qr in &self.requirements.clone() {
            match qr.membership.interval {
                TimeInterval::PerInstance => {
                    let new = self
                        .fresh
                        .get(&qr.property.name)
                        .cloned()
                        .unwrap_or_default();
                    let mut last = None;
                    for (_, value) in new {
                        let level = fuzzy::classify(&qr.membership, value);
                        if let Some(d) = self.step_band(qr, value, level) {
                            degradations.push(d);
                        }
                        last = Some((value, level));
                    }
                    if let Some((value, level)) = last {
                        evaluations.push(Evaluation {
                            requirement: qr.name.clone(),
                            property: qr.property.name.clone(),
                            value,
                            level,
                            badness: fuzzy::badness(&qr.membership, value),
                        });
                    }
                }
                TimeInterval::SlidingWindow { window_ms } => {
                    let Some(value) = self.window_value(qr, now, window_ms) else {
                        continue;
                    };
                    let level = fuzzy::classify(&qr.membership, value);
                    if let Some(d) = self.step_band(qr, value, level) {
                        degradations.push(d);
                    }
                    evaluations.push(Evaluation {
                        requirement: qr.name.clone(),
                        property: qr.property.name.clone(),
                        value,
                        level,
                        badness: fuzzy::badness(&qr.membership, value),
                    });
                }
            }
        }

        self.fresh.clear();
        self.prune(now);
        (evaluations, degradations)
    }

    /// Current band of one requirement.
    pub fn current_band(&self, requirement: &str) -> QualityLevel {
        self.band
            .get(requirement)
            .copied()
            .unwrap_or(QualityLevel::Acceptable)
    }

    /// Windowed value of a requirement's property: the configured aggregate
    /// for an aggregated property, the arithmetic mean otherwise.
    fn window_value(&self, qr: &QualityRequirement, now: u64, window_ms: u64) -> Option<f64> {
        let since = now.saturating_sub(window_ms);
        match &qr.property.kind {
            PropertyKind::Aggregated { function, base } => {
                let values = self.window_samples(base, since);
                aggregate(*function, &values)
            }
            _ => {
                let values = self.window_samples(&qr.property.name, since);
                aggregate(AggregateFn::Average, &values)
            }
        }
    }

    /// Samples of `property` with `since < t`, oldest first.
    fn window_samples(&self, property: &str, since: u64) -> Vec<f64> {
        self.samples
            .get(property)
            .map(|series| {
                series
                    .iter()
                    .filter(|(t, _)| *t > since)
                    .map(|(_, v)| *v)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn step_band(
        &mut self,
        qr: &QualityRequirement,
        value: f64,
        level: QualityLevel,
    ) -> Option<Degradation> {
        let previous = self.current_band(&qr.name);
        self.band.insert(qr.name.clone(), level);
        // Events fire only on transitions for the worse; recoveries and
        // repeats inside a band stay quiet.
        if level <= previous {
            return None;
        }
        let severity = match level {
            QualityLevel::Unacceptable => Severity::Hard,
            QualityLevel::Tolerable => Severity::Soft,
            QualityLevel::Acceptable => return None,
        };
        Some(Degradation {
            requirement: qr.name.clone(),
            trigger: qr.trigger.clone(),
            property: qr.property.name.clone(),
            value,
            level,
            severity,
        })
    }

    fn prune(&mut self, now: u64) {
        for (property, series) in &mut self.samples {
            let keep = self.retention.get(property).copied().unwrap_or(0);
            let cutoff = now.saturating_sub(keep);
            while let Some((t, _)) = series.front() {
                if *t <= cutoff && series.len() > 1 {
                    series.pop_front();
                } else {
                    break;
                }
            }
        }
    }
}

fn aggregate(function: AggregateFn, values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    Some(match function {
        AggregateFn::Sum => values.iter().sum(),
        AggregateFn::Average => values.iter().sum::<f64>() / n,
        AggregateFn::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        AggregateFn::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregateFn::Ratio => values.iter().filter(|v| **v == 0.0).count() as f64 / n,
    })
}

fn apply_derived(function: &str, values: &[f64]) -> f64 {
    match function {
        "sum" => values.iter().sum(),
        "diff" => values[0] - values[1],
        "product" => values.iter().product(),
        "ratio" => values[0] / values[1],
        "min" => values.iter().copied().fold(f64::INFINITY, f64::min),
        "max" => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        other => unreachable!("validation admits no derived function '{other}'"),
    }
}

fn derived_in_dependency_order(kinds: &BTreeMap<String, PropertyKind>) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    let mut placed: std::collections::BTreeSet<&str> = Default::default();
    // Validation guarantees acyclicity, so repeated sweeps terminate.
    loop {
        let mut progressed = false;
        for (name, kind) in kinds {
            if placed.contains(name.as_str()) {
                continue;
            }
            if let PropertyKind::Derived { inputs, .. } = kind {
                let ready = inputs.iter().all(|i| {
                    !matches!(kinds.get(i), Some(PropertyKind::Derived { .. }))
                        || placed.contains(i.as_str())
                });
                if ready {
                    order.push(name.clone());
                    placed.insert(name);
                    progressed = true;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    order
}
