//! The tactic templates. Each takes resolved element ids, checks its
//! precondition against the context, and emits the change batch together
//! with a ground post-state describing the wiring the batch must create.
//!
//! Batches list added elements and explicit bindings first, then the
//! rewires. Rewires skip bindings added earlier in the same batch, so the
//! fresh block wiring survives while pre-existing edges are moved.

use crate::context::{ContextModel, Pattern, PatternAtom, Term};
use crate::transform::ConnectorKind;

use super::{ChangeAction, IdGen, TacticError, TacticInstance};

/// A tactic with every argument resolved to runtime element ids and
/// numeric parameters filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedTactic {
    /// Bypass the span `first ..= last`.
    Skip { first: String, last: String },
    /// Splice a fresh component of `service` behind `after`.
    Add {
        after: String,
        service: String,
        provider: String,
    },
    /// Swap the span `first ..= last` for a fresh component of `service`.
    Replace {
        first: String,
        last: String,
        service: String,
        provider: String,
    },
    /// Race `primary` against the existing component `secondary`; the
    /// first response wins.
    Parallel { primary: String, secondary: String },
    /// Try `primary`; on failure fall back to the existing `secondary`.
    Serial { primary: String, secondary: String },
    /// Re-run the span `first ..= last` until the predicate passes or the
    /// retry cap is hit.
    ReExecute {
        first: String,
        last: String,
        predicate: String,
        max_retries: u32,
    },
    /// Compress payloads leaving `after` and decompress before `before`.
    Compress {
        after: String,
        before: String,
        ratio: f64,
        proc_ms: f64,
    },
    /// Merge messages leaving `after` through a named delegate.
    Aggregate {
        after: String,
        function: String,
        factor: f64,
    },
    /// Shrink messages leaving `after` through a named delegate.
    Reduce {
        after: String,
        function: String,
        factor: f64,
    },
    /// Serve a share of requests into `first` from a cache; misses run the
    /// span `first ..= last` as before.
    Cache {
        first: String,
        last: String,
        hit_ratio: f64,
        filter: String,
    },
    /// Buffer messages leaving `after` while the downstream link is out.
    AddQueue { after: String },
}

impl ResolvedTactic {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ResolvedTactic::Skip { .. } => "skip",
            ResolvedTactic::Add { .. } => "add",
            ResolvedTactic::Replace { .. } => "replace",
            ResolvedTactic::Parallel { .. } => "parallel",
            ResolvedTactic::Serial { .. } => "serial",
            ResolvedTactic::ReExecute { .. } => "reexecute",
            ResolvedTactic::Compress { .. } => "compress",
            ResolvedTactic::Aggregate { .. } => "aggregate",
            ResolvedTactic::Reduce { .. } => "reduce",
            ResolvedTactic::Cache { .. } => "cache",
            ResolvedTactic::AddQueue { .. } => "add_queue",
        }
    }

    fn trace_args(&self) -> Vec<String> {
        match self {
            ResolvedTactic::Skip { first, last } | ResolvedTactic::Cache { first, last, .. } => {
                vec![first.clone(), last.clone()]
            }
            ResolvedTactic::Add { after, service, .. } => vec![after.clone(), service.clone()],
            ResolvedTactic::Replace {
                first,
                last,
                service,
                ..
            } => vec![first.clone(), last.clone(), service.clone()],
            ResolvedTactic::Parallel { primary, secondary }
            | ResolvedTactic::Serial { primary, secondary } => {
                vec![primary.clone(), secondary.clone()]
            }
            ResolvedTactic::ReExecute {
                first,
                last,
                predicate,
                ..
            } => vec![first.clone(), last.clone(), predicate.clone()],
            ResolvedTactic::Compress { after, before, .. } => {
                vec![after.clone(), before.clone()]
            }
            ResolvedTactic::Aggregate {
                after, function, ..
            }
            | ResolvedTactic::Reduce {
                after, function, ..
            } => vec![after.clone(), function.clone()],
            ResolvedTactic::AddQueue { after } => vec![after.clone()],
        }
    }
}

/// The structural condition the context must satisfy before the tactic can
/// be instantiated.
pub fn precondition(tactic: &ResolvedTactic) -> Pattern {
    let entry_into = |id: &str| PatternAtom::Bound(Term::var("pre_in"), Term::cnst(id));
    let exit_from = |id: &str| PatternAtom::Bound(Term::cnst(id), Term::var("pre_out"));
    let span = |first: &str, last: &str| Pattern {
        exists: vec!["pre_in".into(), "pre_out".into()],
        atoms: vec![entry_into(first), exit_from(last)],
        foralls: vec![],
    };
    match tactic {
        ResolvedTactic::Skip { first, last }
        | ResolvedTactic::Replace { first, last, .. }
        | ResolvedTactic::ReExecute { first, last, .. }
        | ResolvedTactic::Cache { first, last, .. } => span(first, last),
        ResolvedTactic::Add { after, .. }
        | ResolvedTactic::Aggregate { after, .. }
        | ResolvedTactic::Reduce { after, .. }
        | ResolvedTactic::AddQueue { after } => Pattern {
            exists: vec!["pre_out".into()],
            atoms: vec![exit_from(after)],
            foralls: vec![],
        },
        ResolvedTactic::Compress { after, before, .. } => Pattern {
            exists: vec!["pre_in".into(), "pre_out".into()],
            atoms: vec![
                exit_from(after),
                entry_into(before),
                PatternAtom::Distinct(Term::cnst(after), Term::cnst(before)),
            ],
            foralls: vec![],
        },
        ResolvedTactic::Parallel { primary, secondary }
        | ResolvedTactic::Serial { primary, secondary } => Pattern {
            exists: vec!["pre_in".into(), "pre_out".into()],
            atoms: vec![
                PatternAtom::IsComponent(Term::cnst(primary)),
                PatternAtom::IsComponent(Term::cnst(secondary)),
                PatternAtom::SameComponentType(Term::cnst(primary), Term::cnst(secondary)),
                PatternAtom::Distinct(Term::cnst(primary), Term::cnst(secondary)),
                entry_into(primary),
                exit_from(primary),
            ],
            foralls: vec![],
        },
    }
}

/// Instantiate a tactic against the current context. Fails if the
/// precondition does not hold; otherwise returns the change batch and the
/// ground post-state the batch is expected to establish.
pub fn instantiate(
    ctx: &ContextModel,
    tactic: &ResolvedTactic,
    ids: &mut IdGen,
) -> Result<TacticInstance, TacticError> {
    let pattern = precondition(tactic);
    if !crate::context::entails(ctx, &pattern) {
        return Err(TacticError::PreconditionFailed {
            tactic: tactic.kind_name().to_owned(),
            detail: "context does not satisfy the structural precondition".to_owned(),
        });
    }

    let mut b = Builder::new(ctx);
    match tactic {
        ResolvedTactic::Skip { first, last } => {
            let byp = ids.fresh("Bypass");
            b.add_connector(&byp, ConnectorKind::Bypass);
            b.rewire_in(first, &byp);
            b.move_outs(last, &byp);
        }
        ResolvedTactic::Add {
            after,
            service,
            provider,
        } => {
            let sc = ids.fresh(&format!("SC.{service}"));
            let junction = ids.fresh("Junction");
            b.add_component(&sc, service, provider);
            b.add_connector(&junction, ConnectorKind::Junction);
            b.add_binding(after, &junction);
            b.add_binding(&junction, &sc);
            b.rewire_out(after, &sc);
        }
        ResolvedTactic::Replace {
            first,
            last,
            service,
            provider,
        } => {
            let sc = ids.fresh(&format!("SC.{service}"));
            let j_in = ids.fresh("Junction");
            let j_out = ids.fresh("Junction");
            b.add_component(&sc, service, provider);
            b.add_connector(&j_in, ConnectorKind::Junction);
            b.add_connector(&j_out, ConnectorKind::Junction);
            b.add_binding(&j_in, &sc);
            b.add_binding(&sc, &j_out);
            b.rewire_in(first, &j_in);
            b.rewire_out(last, &j_out);
        }
        ResolvedTactic::Parallel { primary, secondary } => {
            let split = ids.fresh("ParallelOut");
            let join = ids.fresh("ParallelIn");
            b.add_connector(
                &split,
                ConnectorKind::ParallelOut {
                    paired: join.clone(),
                },
            );
            b.add_connector(&join, ConnectorKind::ParallelIn { expect: 2 });
            b.add_binding(&split, primary);
            b.add_binding(&split, secondary);
            b.add_binding(primary, &join);
            b.add_binding(secondary, &join);
            b.rewire_in(primary, &split);
            b.rewire_out(primary, &join);
        }
        ResolvedTactic::Serial { primary, secondary } => {
            let split = ids.fresh("SerialOut");
            let join = ids.fresh("SerialIn");
            b.add_connector(
                &split,
                ConnectorKind::SerialOut {
                    primary: primary.clone(),
                    secondary: secondary.clone(),
                },
            );
            b.add_connector(
                &join,
                ConnectorKind::SerialIn {
                    paired: split.clone(),
                },
            );
            b.add_binding(&split, primary);
            b.add_binding(&split, secondary);
            b.add_binding(primary, &join);
            b.add_binding(secondary, &join);
            b.rewire_in(primary, &split);
            b.rewire_out(primary, &join);
        }
        ResolvedTactic::ReExecute {
            first,
            last,
            predicate,
            max_retries,
        } => {
            let capture = ids.fresh("ReExecOut");
            let guard = ids.fresh("Condition");
            b.add_connector(&capture, ConnectorKind::ReExecOut);
            b.add_connector(
                &guard,
                ConnectorKind::Condition {
                    predicate: predicate.clone(),
                    max_retries: *max_retries,
                    paired: capture.clone(),
                },
            );
            b.add_binding(&capture, first);
            b.add_binding(last, &guard);
            b.add_binding(&guard, &capture);
            b.rewire_in(first, &capture);
            b.rewire_out(last, &guard);
        }
        ResolvedTactic::Compress {
            after,
            before,
            ratio,
            proc_ms,
        } => {
            let packer = ids.fresh("CompressorOut");
            let unpacker = ids.fresh("CompressorIn");
            b.add_connector(
                &packer,
                ConnectorKind::CompressorOut {
                    ratio: *ratio,
                    proc_ms: *proc_ms,
                },
            );
            b.add_connector(&unpacker, ConnectorKind::CompressorIn { proc_ms: *proc_ms });
            b.add_binding(after, &packer);
            b.add_binding(&unpacker, before);
            // When `after` feeds `before` directly the first rewire moves
            // the shared edge onto the packer and the second rewire moves
            // it again, landing as packer -> unpacker.
            b.rewire_out(after, &packer);
            b.rewire_in(before, &unpacker);
        }
        ResolvedTactic::Aggregate {
            after,
            function,
            factor,
        }
        | ResolvedTactic::Reduce {
            after,
            function,
            factor,
        } => {
            let modifier = ids.fresh("DataModifier");
            b.add_connector(
                &modifier,
                ConnectorKind::DataModifier {
                    function: function.clone(),
                    factor: *factor,
                },
            );
            b.add_binding(after, &modifier);
            b.rewire_out(after, &modifier);
        }
        ResolvedTactic::Cache {
            first,
            last,
            hit_ratio,
            filter,
        } => {
            let cache = ids.fresh("Cache");
            b.add_connector(
                &cache,
                ConnectorKind::Cache {
                    hit_ratio: *hit_ratio,
                    filter: filter.clone(),
                    miss_target: first.clone(),
                },
            );
            b.add_binding(&cache, first);
            // Hits skip the span: copy, do not move, its exit edges.
            for y in b.outs_of(last) {
                b.add_binding(&cache, &y);
            }
            b.rewire_in(first, &cache);
        }
        ResolvedTactic::AddQueue { after } => {
            let queue = ids.fresh("Queue");
            b.add_connector(&queue, ConnectorKind::Queue);
            b.add_binding(after, &queue);
            b.rewire_out(after, &queue);
        }
    }

    let (changes, post_state) = b.finish();
    Ok(TacticInstance {
        tactic: tactic.kind_name().to_owned(),
        args: tactic.trace_args(),
        changes,
        post_state,
    })
}

/// Accumulates the change batch while simulating its effect on the binding
/// set, so the post-state can be computed from the final wiring even when
/// a rewire moves an edge a second time.
struct Builder<'a> {
    ctx: &'a ContextModel,
    changes: Vec<ChangeAction>,
    element_atoms: Vec<PatternAtom>,
    initial: std::collections::BTreeSet<(String, String)>,
    bindings: std::collections::BTreeSet<(String, String)>,
    added: std::collections::BTreeSet<(String, String)>,
}

impl<'a> Builder<'a> {
    fn new(ctx: &'a ContextModel) -> Self {
        let initial: std::collections::BTreeSet<(String, String)> = ctx
            .bindings()
            .map(|(f, t)| (f.to_owned(), t.to_owned()))
            .collect();
        Builder {
            ctx,
            changes: Vec::new(),
            element_atoms: Vec::new(),
            bindings: initial.clone(),
            initial,
            added: Default::default(),
        }
    }

    fn kind_of(&self, id: &str) -> Option<String> {
        self.ctx.connector_type(id).map(str::to_owned).or_else(|| {
            self.changes.iter().find_map(|c| match c {
                ChangeAction::AddConnector { id: cid, kind } if cid == id => {
                    Some(kind.name().to_owned())
                }
                _ => None,
            })
        })
    }

    /// Edges that rewires must never move: checkpoint feeds and the loop
    /// backedge.
    fn pinned(&self, from: &str, to: &str) -> bool {
        self.kind_of(to).as_deref() == Some("Checkpoint")
            || (self.kind_of(from).as_deref() == Some("LoopExit")
                && self.kind_of(to).as_deref() == Some("LoopEnter"))
    }

    fn outs_of(&self, id: &str) -> Vec<String> {
        self.bindings
            .iter()
            .filter(|(f, t)| f == id && !self.pinned(f, t))
            .map(|(_, t)| t.clone())
            .collect()
    }

    fn ins_of(&self, id: &str) -> Vec<String> {
        self.bindings
            .iter()
            .filter(|(f, t)| t == id && !self.pinned(f, t))
            .map(|(f, _)| f.clone())
            .collect()
    }

    fn add_component(&mut self, id: &str, service: &str, provider: &str) {
        self.changes.push(ChangeAction::AddComponent {
            id: id.to_owned(),
            service: service.to_owned(),
            provider: provider.to_owned(),
        });
        self.element_atoms
            .push(PatternAtom::IsComponent(Term::cnst(id)));
        self.element_atoms.push(PatternAtom::ComponentTypeIs(
            Term::cnst(id),
            service.to_owned(),
        ));
    }

    fn add_connector(&mut self, id: &str, kind: ConnectorKind) {
        self.element_atoms
            .push(PatternAtom::IsConnector(Term::cnst(id)));
        self.element_atoms.push(PatternAtom::ConnectorTypeIs(
            Term::cnst(id),
            kind.name().to_owned(),
        ));
        self.changes.push(ChangeAction::AddConnector {
            id: id.to_owned(),
            kind,
        });
    }

    fn add_binding(&mut self, from: &str, to: &str) {
        self.changes.push(ChangeAction::AddBinding {
            from: from.to_owned(),
            to: to.to_owned(),
        });
        self.bindings.insert((from.to_owned(), to.to_owned()));
        self.added.insert((from.to_owned(), to.to_owned()));
    }

    /// Emit a `RewireIn` and mirror its effect on the simulated bindings.
    fn rewire_in(&mut self, of: &str, new_target: &str) {
        self.changes.push(ChangeAction::RewireIn {
            of: of.to_owned(),
            new_target: new_target.to_owned(),
        });
        for source in self.ins_of(of) {
            if self.added.contains(&(source.clone(), of.to_owned())) {
                continue;
            }
            self.bindings.remove(&(source.clone(), of.to_owned()));
            self.bindings
                .insert((source.clone(), new_target.to_owned()));
        }
    }

    /// Emit a `RewireOut` and mirror its effect on the simulated bindings.
    fn rewire_out(&mut self, of: &str, new_source: &str) {
        self.changes.push(ChangeAction::RewireOut {
            of: of.to_owned(),
            new_source: new_source.to_owned(),
        });
        for target in self.outs_of(of) {
            if self.added.contains(&(of.to_owned(), target.clone())) {
                continue;
            }
            self.bindings.remove(&(of.to_owned(), target.clone()));
            self.bindings
                .insert((new_source.to_owned(), target.clone()));
        }
    }

    /// Move the outgoing edges of `of` onto `new_source` with explicit
    /// remove/add pairs. Unlike a rewire, the re-added edges count as
    /// batch-added and will not be moved again.
    fn move_outs(&mut self, of: &str, new_source: &str) {
        for target in self.outs_of(of) {
            if self.added.contains(&(of.to_owned(), target.clone())) {
                continue;
            }
            self.changes.push(ChangeAction::RemoveBinding {
                from: of.to_owned(),
                to: target.clone(),
            });
            self.changes.push(ChangeAction::AddBinding {
                from: new_source.to_owned(),
                to: target.clone(),
            });
            self.bindings.remove(&(of.to_owned(), target.clone()));
            self.bindings
                .insert((new_source.to_owned(), target.clone()));
            self.added.insert((new_source.to_owned(), target.clone()));
        }
    }

    /// Ground post-state: the added elements plus the binding delta
    /// between the final and the initial wiring.
    fn finish(self) -> (Vec<ChangeAction>, Pattern) {
        let mut atoms = self.element_atoms;
        for (f, t) in self.bindings.difference(&self.initial) {
            atoms.push(PatternAtom::Bound(Term::cnst(f), Term::cnst(t)));
        }
        for (f, t) in self.initial.difference(&self.bindings) {
            atoms.push(PatternAtom::NotBound(Term::cnst(f), Term::cnst(t)));
        }
        (self.changes, Pattern::conjunction(atoms))
    }
}
