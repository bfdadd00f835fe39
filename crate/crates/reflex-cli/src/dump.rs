//! JSON renderings for the inspection commands.

use reflex_core::context::{ContextModel, Fact};
use serde_json::{json, Value};

/// All facts currently held in the knowledge base, grouped by kind.
pub fn context_json(ctx: &ContextModel) -> String {
    let mut components = Vec::new();
    let mut connectors = Vec::new();
    let mut bindings = Vec::new();
    let mut properties = Vec::new();
    let mut levels = Vec::new();
    let mut assumptions = Vec::new();
    for fact in ctx.facts() {
        match fact {
            Fact::IsComponent { .. } | Fact::IsConnector { .. } => {}
            Fact::ComponentType { id, service } => {
                components.push(json!({"id": id, "service": service}));
            }
            Fact::ConnectorType { id, kind } => {
                connectors.push(json!({"id": id, "kind": kind}));
            }
            Fact::Bind { from, to } => bindings.push(json!({"from": from, "to": to})),
            Fact::PropertyValue { property, value } => {
                properties.push(json!({"property": property, "value": value}));
            }
            Fact::QualityLevel { requirement, level } => {
                levels.push(json!({"requirement": requirement, "level": level.name()}));
            }
            Fact::Assumption { name, holds } => {
                assumptions.push(json!({"name": name, "holds": holds}));
            }
        }
    }
    let doc = json!({
        "revision": ctx.revision(),
        "components": components,
        "connectors": connectors,
        "bindings": bindings,
        "properties": properties,
        "quality_levels": levels,
        "assumptions": assumptions,
    });
    serde_json::to_string_pretty(&doc).expect("plain maps always serialize")
}

/// The reusable tactic vocabulary: name, arguments, and what each one does.
pub fn tactics_json() -> String {
    let row = |kind: &str, args: &[&str], effect: &str| -> Value {
        json!({"kind": kind, "args": args, "effect": effect})
    };
    let doc = json!({
        "tactics": [
            row("skip", &["region"],
                "bypass the block so instances flow around it"),
            row("add", &["after", "service"],
                "splice a new service invocation after the block"),
            row("replace", &["region", "service"],
                "reroute the block through a different service"),
            row("parallel", &["primary", "secondary"],
                "race a standby component; first success wins"),
            row("serial", &["primary", "secondary"],
                "fail over to a standby when the primary fails"),
            row("reexecute", &["target", "condition"],
                "retry the block from a snapshot while the condition holds"),
            row("compress", &["from", "to"],
                "pack payloads after one block and unpack before another"),
            row("aggregate", &["from", "to", "function"],
                "merge outgoing payloads with a named delegate"),
            row("reduce", &["target", "function"],
                "shrink a block's output with a named delegate"),
            row("cache", &["target", "filter"],
                "serve repeat requests from a hit store in front of the block"),
            row("add_queue", &["target"],
                "buffer the block's output while the link is down"),
        ]
    });
    serde_json::to_string_pretty(&doc).expect("plain maps always serialize")
}
