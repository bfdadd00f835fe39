//! Consistency between the runtime model and its reflection in the context:
//! the causal connection both directions of the adaptation loop rely on.

use crate::context::{ContextModel, Fact};

use super::RuntimeModel;

/// Build the context-side reflection of a runtime model: one structural
/// fact set mirroring every element and binding.
pub fn mirror_context(runtime: &RuntimeModel) -> ContextModel {
    let mut ctx = ContextModel::new();
    for (id, element) in &runtime.elements {
        match element {
            super::Element::Component { service, .. } => {
                ctx.assert_fact(Fact::IsComponent { id: id.clone() })
                    .expect("fresh context accepts components");
                ctx.assert_fact(Fact::ComponentType {
                    id: id.clone(),
                    service: service.clone(),
                })
                .expect("fresh context accepts component types");
            }
            super::Element::Connector(kind) => {
                ctx.assert_fact(Fact::IsConnector { id: id.clone() })
                    .expect("fresh context accepts connectors");
                ctx.assert_fact(Fact::ConnectorType {
                    id: id.clone(),
                    kind: kind.name().to_owned(),
                })
                .expect("fresh context accepts connector types");
            }
        }
    }
    for (from, to) in &runtime.bindings {
        ctx.assert_fact(Fact::Bind {
            from: from.clone(),
            to: to.clone(),
        })
        .expect("runtime bindings never join two components");
    }
    ctx
}

/// Compare the structural half of the context against the runtime model.
/// Returns one line per mismatch; an empty result means the causal
/// connection holds.
pub fn verify_causal_connection(runtime: &RuntimeModel, ctx: &ContextModel) -> Vec<String> {
    let mut mismatches = Vec::new();

    for (id, element) in &runtime.elements {
        match element {
            super::Element::Component { service, .. } => {
                if !ctx.is_component(id) {
                    mismatches.push(format!("component '{id}' missing from context"));
                } else if ctx.component_type(id) != Some(service.as_str()) {
                    mismatches.push(format!(
                        "component '{id}' has type {:?} in context, '{service}' in runtime model",
                        ctx.component_type(id)
                    ));
                }
            }
            super::Element::Connector(kind) => {
                if !ctx.is_connector(id) {
                    mismatches.push(format!("connector '{id}' missing from context"));
                } else if ctx.connector_type(id) != Some(kind.name()) {
                    mismatches.push(format!(
                        "connector '{id}' has type {:?} in context, '{}' in runtime model",
                        ctx.connector_type(id),
                        kind.name()
                    ));
                }
            }
        }
    }
    for id in ctx.elements() {
        if !runtime.elements.contains_key(id) {
            mismatches.push(format!("element '{id}' present in context only"));
        }
    }

    for (from, to) in &runtime.bindings {
        if !ctx.bound(from, to) {
            mismatches.push(format!("binding '{from}' -> '{to}' missing from context"));
        }
    }
    for (from, to) in ctx.bindings() {
        if !runtime.bindings.contains(&(from.to_owned(), to.to_owned())) {
            mismatches.push(format!("binding '{from}' -> '{to}' present in context only"));
        }
    }

    mismatches
}
