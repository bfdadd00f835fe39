//! Reconfiguration tactics: parameterized templates that turn a resolved
//! target into an atomic batch of change actions, a precondition over the
//! context, and a ground post-state the changed context must entail.

mod apply;
mod effect;
mod templates;

pub use apply::{apply_to_context, apply_to_runtime};
pub use effect::{cache_effect, parallel_effect, reexecute_effect, serial_effect, AttrVec};
pub use templates::{instantiate, precondition, ResolvedTactic};

use thiserror::Error;

use crate::context::Pattern;
use crate::transform::ConnectorKind;

#[derive(Debug, Error)]
pub enum TacticError {
    #[error("precondition failed for {tactic}: {detail}")]
    PreconditionFailed { tactic: String, detail: String },
    #[error("dangling reference: {action} targets unknown element '{id}'")]
    Dangling { action: &'static str, id: String },
    #[error("duplicate element id '{id}'")]
    DuplicateElement { id: String },
    #[error("binding '{from}' -> '{to}' already exists")]
    DuplicateBinding { from: String, to: String },
    #[error("binding '{from}' -> '{to}' does not exist")]
    MissingBinding { from: String, to: String },
    #[error(transparent)]
    Type(#[from] crate::context::ContextError),
}

/// One primitive reconfiguration step. Batches of these are applied
/// atomically to the context and the runtime model alike.
///
/// The rewire actions move every present binding of an element at once,
/// with two standing exceptions: bindings added earlier in the same batch
/// stay put, and so do off-path edges (checkpoint feeds and loop backedges).
#[derive(Debug, Clone, PartialEq)]
pub enum ChangeAction {
    AddComponent {
        id: String,
        service: String,
        provider: String,
    },
    AddConnector {
        id: String,
        kind: ConnectorKind,
    },
    RemoveElement {
        id: String,
    },
    AddBinding {
        from: String,
        to: String,
    },
    RemoveBinding {
        from: String,
        to: String,
    },
    /// Retarget every binding `(x, of)` to `(x, new_target)`.
    RewireIn {
        of: String,
        new_target: String,
    },
    /// Re-source every binding `(of, y)` to `(new_source, y)`.
    RewireOut {
        of: String,
        new_source: String,
    },
}

/// A fully instantiated tactic, ready to enact.
#[derive(Debug, Clone, PartialEq)]
pub struct TacticInstance {
    /// Tactic kind name, for traces.
    pub tactic: String,
    /// Resolved argument ids, for traces.
    pub args: Vec<String>,
    pub changes: Vec<ChangeAction>,
    /// Ground pattern the post-change context must entail.
    pub post_state: Pattern,
}

/// Source of collision-free ids for elements a tactic introduces.
#[derive(Debug, Clone, Default)]
pub struct IdGen {
    next: u64,
}

impl IdGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self, kind: &str) -> String {
        let n = self.next;
        self.next += 1;
        format!("t{n}.{kind}")
    }
}
