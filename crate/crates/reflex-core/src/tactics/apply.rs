//! Application of change-action batches. Both appliers work on a clone and
//! return it, so a failing batch leaves the original untouched; callers swap
//! the result in to commit.

use std::collections::BTreeSet;

use crate::context::{ContextModel, Fact};
use crate::transform::{ConnectorKind, Element, RuntimeModel};

use super::{ChangeAction, TacticError};

/// An edge rewires must not move: checkpoint feeds and loop backedges stay
/// attached to the element that created them.
fn pinned(from_kind: Option<&str>, to_kind: Option<&str>) -> bool {
    to_kind == Some("Checkpoint") || (from_kind == Some("LoopExit") && to_kind == Some("LoopEnter"))
}

/// Apply a batch to the context, atomically.
pub fn apply_to_context(
    ctx: &ContextModel,
    actions: &[ChangeAction],
) -> Result<ContextModel, TacticError> {
    let mut next = ctx.clone();
    let mut added: BTreeSet<(String, String)> = BTreeSet::new();

    for action in actions {
        match action {
            ChangeAction::AddComponent { id, service, .. } => {
                if next.is_component(id) || next.is_connector(id) {
                    return Err(TacticError::DuplicateElement { id: id.clone() });
                }
                next.assert_fact(Fact::IsComponent { id: id.clone() })?;
                next.assert_fact(Fact::ComponentType {
                    id: id.clone(),
                    service: service.clone(),
                })?;
            }
            ChangeAction::AddConnector { id, kind } => {
                if next.is_component(id) || next.is_connector(id) {
                    return Err(TacticError::DuplicateElement { id: id.clone() });
                }
                next.assert_fact(Fact::IsConnector { id: id.clone() })?;
                next.assert_fact(Fact::ConnectorType {
                    id: id.clone(),
                    kind: kind.name().to_owned(),
                })?;
            }
            ChangeAction::RemoveElement { id } => {
                if !next.remove_element(id) {
                    return Err(TacticError::Dangling {
                        action: "RemoveElement",
                        id: id.clone(),
                    });
                }
            }
            ChangeAction::AddBinding { from, to } => {
                require_ctx(&next, from, "AddBinding")?;
                require_ctx(&next, to, "AddBinding")?;
                if next.bound(from, to) {
                    return Err(TacticError::DuplicateBinding {
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
                next.assert_fact(Fact::Bind {
                    from: from.clone(),
                    to: to.clone(),
                })?;
                added.insert((from.clone(), to.clone()));
            }
            ChangeAction::RemoveBinding { from, to } => {
                if !next.retract_binding(from, to) {
                    return Err(TacticError::MissingBinding {
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
            }
            ChangeAction::RewireIn { of, new_target } => {
                require_ctx(&next, of, "RewireIn")?;
                require_ctx(&next, new_target, "RewireIn")?;
                for source in next.bindings_into(of) {
                    if added.contains(&(source.clone(), of.clone()))
                        || pinned(next.connector_type(&source), next.connector_type(of))
                    {
                        continue;
                    }
                    next.retract_binding(&source, of);
                    if !next.bound(&source, new_target) {
                        next.assert_fact(Fact::Bind {
                            from: source,
                            to: new_target.clone(),
                        })?;
                    }
                }
            }
            ChangeAction::RewireOut { of, new_source } => {
                require_ctx(&next, of, "RewireOut")?;
                require_ctx(&next, new_source, "RewireOut")?;
                for target in next.bindings_out_of(of) {
                    if added.contains(&(of.clone(), target.clone()))
                        || pinned(next.connector_type(of), next.connector_type(&target))
                    {
                        continue;
                    }
                    next.retract_binding(of, &target);
                    if !next.bound(new_source, &target) {
                        next.assert_fact(Fact::Bind {
                            from: new_source.clone(),
                            to: target,
                        })?;
                    }
                }
            }
        }
    }
    Ok(next)
}

fn require_ctx(ctx: &ContextModel, id: &str, action: &'static str) -> Result<(), TacticError> {
    if ctx.is_component(id) || ctx.is_connector(id) {
        Ok(())
    } else {
        Err(TacticError::Dangling {
            action,
            id: id.to_owned(),
        })
    }
}

/// Apply a batch to the runtime model, atomically. Mirrors
/// `apply_to_context` exactly, so the causal connection survives enactment.
pub fn apply_to_runtime(
    runtime: &RuntimeModel,
    actions: &[ChangeAction],
) -> Result<RuntimeModel, TacticError> {
    let mut next = runtime.clone();
    let mut added: BTreeSet<(String, String)> = BTreeSet::new();

    for action in actions {
        match action {
            ChangeAction::AddComponent {
                id,
                service,
                provider,
            } => {
                if next.elements.contains_key(id) {
                    return Err(TacticError::DuplicateElement { id: id.clone() });
                }
                next.elements.insert(
                    id.clone(),
                    Element::Component {
                        service: service.clone(),
                        provider: provider.clone(),
                    },
                );
            }
            ChangeAction::AddConnector { id, kind } => {
                if next.elements.contains_key(id) {
                    return Err(TacticError::DuplicateElement { id: id.clone() });
                }
                next.elements
                    .insert(id.clone(), Element::Connector(kind.clone()));
            }
            ChangeAction::RemoveElement { id } => {
                if next.elements.remove(id).is_none() {
                    return Err(TacticError::Dangling {
                        action: "RemoveElement",
                        id: id.clone(),
                    });
                }
                next.bindings.retain(|(f, t)| f != id && t != id);
            }
            ChangeAction::AddBinding { from, to } => {
                require_rt(&next, from, "AddBinding")?;
                require_rt(&next, to, "AddBinding")?;
                check_binding_types(&next, from, to)?;
                if !next.bindings.insert((from.clone(), to.clone())) {
                    return Err(TacticError::DuplicateBinding {
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
                added.insert((from.clone(), to.clone()));
            }
            ChangeAction::RemoveBinding { from, to } => {
                if !next.bindings.remove(&(from.clone(), to.clone())) {
                    return Err(TacticError::MissingBinding {
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
            }
            ChangeAction::RewireIn { of, new_target } => {
                require_rt(&next, of, "RewireIn")?;
                require_rt(&next, new_target, "RewireIn")?;
                for source in next.bindings_into(of) {
                    if added.contains(&(source.clone(), of.clone()))
                        || pinned(kind_name(&next, &source), kind_name(&next, of))
                    {
                        continue;
                    }
                    check_binding_types(&next, &source, new_target)?;
                    next.bindings.remove(&(source.clone(), of.clone()));
                    next.bindings.insert((source.clone(), new_target.clone()));
                    retarget_routing(&mut next, &source, of, new_target);
                }
            }
            ChangeAction::RewireOut { of, new_source } => {
                require_rt(&next, of, "RewireOut")?;
                require_rt(&next, new_source, "RewireOut")?;
                for target in next.bindings_out_of(of) {
                    if added.contains(&(of.clone(), target.clone()))
                        || pinned(kind_name(&next, of), kind_name(&next, &target))
                    {
                        continue;
                    }
                    check_binding_types(&next, new_source, &target)?;
                    next.bindings.remove(&(of.clone(), target.clone()));
                    next.bindings.insert((new_source.clone(), target));
                }
            }
        }
    }
    Ok(next)
}

/// Some connectors route by a stored element id rather than by whatever
/// they happen to be bound to. When a rewire moves such a connector's
/// out-binding, the stored id must follow, or the connector would keep
/// dispatching past the newly spliced element.
fn retarget_routing(runtime: &mut RuntimeModel, source: &str, old: &str, new: &str) {
    let Some(Element::Connector(kind)) = runtime.elements.get_mut(source) else {
        return;
    };
    match kind {
        ConnectorKind::Branch { targets, .. } => {
            for target in targets {
                if target == old {
                    *target = new.to_owned();
                }
            }
        }
        ConnectorKind::SerialOut { primary, secondary } => {
            if primary == old {
                *primary = new.to_owned();
            }
            if secondary == old {
                *secondary = new.to_owned();
            }
        }
        ConnectorKind::Cache { miss_target, .. } => {
            if miss_target == old {
                *miss_target = new.to_owned();
            }
        }
        _ => {}
    }
}

fn require_rt(runtime: &RuntimeModel, id: &str, action: &'static str) -> Result<(), TacticError> {
    if runtime.elements.contains_key(id) {
        Ok(())
    } else {
        Err(TacticError::Dangling {
            action,
            id: id.to_owned(),
        })
    }
}

fn kind_name(runtime: &RuntimeModel, id: &str) -> Option<&'static str> {
    runtime.connector(id).map(ConnectorKind::name)
}

fn check_binding_types(runtime: &RuntimeModel, from: &str, to: &str) -> Result<(), TacticError> {
    let both_components = runtime
        .elements
        .get(from)
        .is_some_and(Element::is_component)
        && runtime.elements.get(to).is_some_and(Element::is_component);
    if both_components {
        Err(TacticError::Type(
            crate::context::ContextError::ComponentToComponent {
                from: from.to_owned(),
                to: to.to_owned(),
            },
        ))
    } else {
        Ok(())
    }
}
