//! The shared context model: a closed-world fact base describing the running
//! architecture, current property values, quality levels, and environment
//! assumptions. The planner reads it through pattern queries; tactics and the
//! monitor mutate it through revisioned batches.

mod pattern;

pub use pattern::{entails, find_binding, Pattern, PatternAtom, Term};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContextError {
    /// Components never talk to each other directly; a connector mediates.
    #[error("type error: binding '{from}' -> '{to}' connects two components")]
    ComponentToComponent { from: String, to: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("unknown element: {0}")]
    NotFound(String),
}

/// Quality band of a requirement, ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum QualityLevel {
    Acceptable,
    Tolerable,
    Unacceptable,
}

impl QualityLevel {
    pub fn name(self) -> &'static str {
        match self {
            QualityLevel::Acceptable => "acceptable",
            QualityLevel::Tolerable => "tolerable",
            QualityLevel::Unacceptable => "unacceptable",
        }
    }
}

impl fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One proposition about the running system.
///
/// Structural facts (`IsComponent`, `IsConnector`, `Bind` and the type
/// facts) mirror the runtime model. Value facts (`PropertyValue`,
/// `QualityLevel`, `Assumption`) are keyed: asserting a new one replaces the
/// previous fact with the same key.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub enum Fact {
    IsComponent { id: String },
    ComponentType { id: String, service: String },
    IsConnector { id: String },
    ConnectorType { id: String, kind: String },
    Bind { from: String, to: String },
    PropertyValue { property: String, value: f64 },
    QualityLevel { requirement: String, level: QualityLevel },
    Assumption { name: String, holds: bool },
}

/// The fact base. Structural facts live in indexed sets; keyed facts in maps
/// with latest-wins semantics. Every mutating call bumps the revision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextModel {
    components: BTreeMap<String, String>,
    connectors: BTreeMap<String, String>,
    bindings: BTreeSet<(String, String)>,
    properties: BTreeMap<String, f64>,
    levels: BTreeMap<String, QualityLevel>,
    assumptions: BTreeMap<String, bool>,
    revision: u64,
}

impl ContextModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Monotone counter distinguishing context states; bumped per mutation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    // -- assertion ---------------------------------------------------------

    /// Add one fact. Structural facts are set-like (re-adding is a no-op on
    /// content but still bumps the revision); keyed facts replace.
    pub fn assert_fact(&mut self, fact: Fact) -> Result<(), ContextError> {
        match &fact {
            Fact::Bind { from, to } => {
                if self.components.contains_key(from) && self.components.contains_key(to) {
                    return Err(ContextError::ComponentToComponent {
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
            }
            Fact::ComponentType { id, .. } => {
                if self.connectors.contains_key(id) {
                    return Err(ContextError::Type(format!(
                        "'{id}' is a connector; it cannot carry a component type"
                    )));
                }
            }
            Fact::ConnectorType { id, .. } => {
                if self.components.contains_key(id) {
                    return Err(ContextError::Type(format!(
                        "'{id}' is a component; it cannot carry a connector type"
                    )));
                }
            }
            _ => {}
        }
        match fact {
            Fact::IsComponent { id } => {
                if self.connectors.contains_key(&id) {
                    return Err(ContextError::Type(format!(
                        "'{id}' is already a connector"
                    )));
                }
                self.components.entry(id).or_default();
            }
            Fact::ComponentType { id, service } => {
                self.components.insert(id, service);
            }
            Fact::IsConnector { id } => {
                if self.components.contains_key(&id) {
                    return Err(ContextError::Type(format!(
                        "'{id}' is already a component"
                    )));
                }
                self.connectors.entry(id).or_default();
            }
            Fact::ConnectorType { id, kind } => {
                self.connectors.insert(id, kind);
            }
            Fact::Bind { from, to } => {
                self.bindings.insert((from, to));
            }
            Fact::PropertyValue { property, value } => {
                self.properties.insert(property, value);
            }
            Fact::QualityLevel { requirement, level } => {
                self.levels.insert(requirement, level);
            }
            Fact::Assumption { name, holds } => {
                self.assumptions.insert(name, holds);
            }
        }
        self.revision += 1;
        Ok(())
    }

    /// Remove a structural fact; value facts are retracted by key.
    pub fn retract_binding(&mut self, from: &str, to: &str) -> bool {
        let removed = self.bindings.remove(&(from.to_owned(), to.to_owned()));
        if removed {
            self.revision += 1;
        }
        removed
    }

    pub fn remove_element(&mut self, id: &str) -> bool {
        let removed =
            self.components.remove(id).is_some() || self.connectors.remove(id).is_some();
        if removed {
            self.bindings.retain(|(f, t)| f != id && t != id);
            self.revision += 1;
        }
        removed
    }

    pub fn retract_assumption(&mut self, name: &str) -> bool {
        let removed = self.assumptions.remove(name).is_some();
        if removed {
            self.revision += 1;
        }
        removed
    }

    // -- queries -----------------------------------------------------------

    pub fn is_component(&self, id: &str) -> bool {
        self.components.contains_key(id)
    }

    pub fn is_connector(&self, id: &str) -> bool {
        self.connectors.contains_key(id)
    }

    pub fn component_type(&self, id: &str) -> Option<&str> {
        self.components.get(id).map(String::as_str).filter(|s| !s.is_empty())
    }

    pub fn connector_type(&self, id: &str) -> Option<&str> {
        self.connectors.get(id).map(String::as_str).filter(|s| !s.is_empty())
    }

    pub fn bound(&self, from: &str, to: &str) -> bool {
        self.bindings.contains(&(from.to_owned(), to.to_owned()))
    }

    /// Closed world: an assumption that was never asserted does not hold.
    pub fn assumption_holds(&self, name: &str) -> bool {
        self.assumptions.get(name).copied().unwrap_or(false)
    }

    pub fn property_value(&self, property: &str) -> Option<f64> {
        self.properties.get(property).copied()
    }

    pub fn quality_level(&self, requirement: &str) -> Option<QualityLevel> {
        self.levels.get(requirement).copied()
    }

    pub fn components(&self) -> impl Iterator<Item = &str> {
        self.components.keys().map(String::as_str)
    }

    pub fn connectors(&self) -> impl Iterator<Item = &str> {
        self.connectors.keys().map(String::as_str)
    }

    pub fn elements(&self) -> impl Iterator<Item = &str> {
        self.components().chain(self.connectors())
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&str, &str)> {
        self.bindings.iter().map(|(f, t)| (f.as_str(), t.as_str()))
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

    pub fn assumptions(&self) -> impl Iterator<Item = (&str, bool)> {
        self.assumptions.iter().map(|(n, h)| (n.as_str(), *h))
    }

    pub fn property_values(&self) -> impl Iterator<Item = (&str, f64)> {
        self.properties.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn quality_levels(&self) -> impl Iterator<Item = (&str, QualityLevel)> {
        self.levels.iter().map(|(n, l)| (n.as_str(), *l))
    }

    /// Every stored fact, in a stable order. Used by dumps and the
    /// brute-force entailment oracle in tests.
    pub fn facts(&self) -> Vec<Fact> {
        let mut out = Vec::new();
        for (id, service) in &self.components {
            out.push(Fact::IsComponent { id: id.clone() });
            if !service.is_empty() {
                out.push(Fact::ComponentType {
                    id: id.clone(),
                    service: service.clone(),
                });
            }
        }
        for (id, kind) in &self.connectors {
            out.push(Fact::IsConnector { id: id.clone() });
            if !kind.is_empty() {
                out.push(Fact::ConnectorType {
                    id: id.clone(),
                    kind: kind.clone(),
                });
            }
        }
        for (from, to) in &self.bindings {
            out.push(Fact::Bind {
                from: from.clone(),
                to: to.clone(),
            });
        }
        for (property, value) in &self.properties {
            out.push(Fact::PropertyValue {
                property: property.clone(),
                value: *value,
            });
        }
        for (requirement, level) in &self.levels {
            out.push(Fact::QualityLevel {
                requirement: requirement.clone(),
                level: *level,
            });
        }
        for (name, holds) in &self.assumptions {
            out.push(Fact::Assumption {
                name: name.clone(),
                holds: *holds,
            });
        }
        out
    }
}
