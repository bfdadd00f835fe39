//! Helpers shared by the integration suites.

use reflex_core::model::from_json;
use reflex_core::trace::TraceKind;
use reflex_core::TraceEvent;

pub fn load_fixture(name: &str) -> reflex_core::model::AdaptiveProcessModel {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// The decision-level events of a run, one formatted line each. Instance
/// traffic (invokes, completions, measurements) is left out so the result
/// captures what the control loop decided and nothing else.
pub fn decision_lines(trace: &[TraceEvent]) -> Vec<String> {
    trace
        .iter()
        .filter_map(|e| match &e.kind {
            TraceKind::Trigger { trigger, .. } => Some(format!("{} trigger {trigger}", e.t)),
            TraceKind::PlanSelected { plan, .. } => Some(format!("{} selected {plan}", e.t)),
            TraceKind::TacticApplied { tactic, args, .. } => {
                Some(format!("{} applied {tactic}({})", e.t, args.join(", ")))
            }
            TraceKind::PlanRejected { plan, reason, .. } => {
                Some(format!("{} rejected {plan}: {reason}", e.t))
            }
            TraceKind::Falsification {
                assumption,
                severity,
                ..
            } => Some(format!("{} falsified [{severity}] {assumption}", e.t)),
            TraceKind::Reconfigure { .. } => Some(format!("{} reconfigured", e.t)),
            _ => None,
        })
        .collect()
}
