//! Resolution of plan-level tactic invocations.
//!
//! Plans name workflow labels; tactics operate on element ids. The region
//! table built during transformation carries the mapping: each labeled
//! block knows the first and last element of its span and the outer
//! bounds that include its probes. Numeric parameters a plan does not
//! spell out (retry caps, compression ratios, cache hit rates) come from
//! the planner configuration; data-delegate factors come from the same
//! registry validation checks names against.

use crate::model::{AdaptiveProcessModel, TacticInvocation, DATA_DELEGATES};
use crate::tactics::ResolvedTactic;
use crate::transform::{Region, RuntimeModel};

use super::PlannerConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("no labeled block named '{0}' in the runtime model")]
    UnknownRegion(String),
    #[error("'{0}' does not name a single component")]
    NotAComponent(String),
    #[error("no service named '{0}' in the catalog")]
    UnknownService(String),
    #[error("service '{0}' declares no providers")]
    NoProvider(String),
    #[error("no data delegate named '{0}'")]
    UnknownDelegate(String),
}

fn region<'a>(rt: &'a RuntimeModel, label: &str) -> Result<&'a Region, ResolveError> {
    rt.regions
        .get(label)
        .ok_or_else(|| ResolveError::UnknownRegion(label.to_owned()))
}

/// A label that must denote exactly one component: its span collapses to
/// a single element.
fn component(rt: &RuntimeModel, label: &str) -> Result<String, ResolveError> {
    // tactics introduce standbys by element id, not by label
    if rt.elements.contains_key(label) {
        return Ok(label.to_owned());
    }
    let r = region(rt, label)?;
    if r.first == r.last {
        Ok(r.first.clone())
    } else {
        Err(ResolveError::NotAComponent(label.to_owned()))
    }
}

fn first_provider(
    model: &AdaptiveProcessModel,
    service: &str,
) -> Result<(String, String), ResolveError> {
    let spec = model
        .services
        .iter()
        .find(|s| s.name == service)
        .ok_or_else(|| ResolveError::UnknownService(service.to_owned()))?;
    let provider = spec
        .providers
        .first()
        .ok_or_else(|| ResolveError::NoProvider(service.to_owned()))?;
    Ok((service.to_owned(), provider.provider_id.clone()))
}

fn delegate_factor(function: &str) -> Result<f64, ResolveError> {
    DATA_DELEGATES
        .iter()
        .find(|(name, _)| *name == function)
        .map(|(_, factor)| *factor)
        .ok_or_else(|| ResolveError::UnknownDelegate(function.to_owned()))
}

/// Ground an invocation against the current architecture.
pub fn resolve(
    inv: &TacticInvocation,
    model: &AdaptiveProcessModel,
    rt: &RuntimeModel,
    config: &PlannerConfig,
) -> Result<ResolvedTactic, ResolveError> {
    Ok(match inv {
        TacticInvocation::Skip { region: label } => {
            let r = region(rt, label)?;
            // outer bounds: the probes leave with the block they watch
            ResolvedTactic::Skip {
                first: r.outer_first.clone(),
                last: r.outer_last.clone(),
            }
        }
        TacticInvocation::Add { after, service } => {
            let r = region(rt, after)?;
            let (service, provider) = first_provider(model, service)?;
            ResolvedTactic::Add {
                after: r.outer_last.clone(),
                service,
                provider,
            }
        }
        TacticInvocation::Replace {
            region: label,
            service,
        } => {
            let r = region(rt, label)?;
            let (service, provider) = first_provider(model, service)?;
            // inner bounds: the replacement stays under the same probes
            ResolvedTactic::Replace {
                first: r.first.clone(),
                last: r.last.clone(),
                service,
                provider,
            }
        }
        TacticInvocation::Parallel { primary, secondary } => ResolvedTactic::Parallel {
            primary: component(rt, primary)?,
            secondary: component(rt, secondary)?,
        },
        TacticInvocation::Serial { primary, secondary } => ResolvedTactic::Serial {
            primary: component(rt, primary)?,
            secondary: component(rt, secondary)?,
        },
        TacticInvocation::ReExecute { target, condition } => {
            let r = region(rt, target)?;
            ResolvedTactic::ReExecute {
                first: r.first.clone(),
                last: r.last.clone(),
                predicate: condition.clone(),
                max_retries: config.default_max_retries,
            }
        }
        TacticInvocation::Compress { from, to } => {
            let a = region(rt, from)?;
            let b = region(rt, to)?;
            ResolvedTactic::Compress {
                after: a.outer_last.clone(),
                before: b.outer_first.clone(),
                ratio: config.compress_ratio,
                proc_ms: config.compress_proc_ms,
            }
        }
        TacticInvocation::Aggregate { from, function, .. } => {
            let r = region(rt, from)?;
            ResolvedTactic::Aggregate {
                after: r.outer_last.clone(),
                function: function.clone(),
                factor: delegate_factor(function)?,
            }
        }
        TacticInvocation::Reduce { target, function } => {
            let r = region(rt, target)?;
            ResolvedTactic::Reduce {
                after: r.outer_last.clone(),
                function: function.clone(),
                factor: delegate_factor(function)?,
            }
        }
        TacticInvocation::Cache { target, filter } => {
            let r = region(rt, target)?;
            ResolvedTactic::Cache {
                first: r.first.clone(),
                last: r.last.clone(),
                hit_ratio: config.cache_hit_ratio,
                filter: filter.clone(),
            }
        }
        TacticInvocation::AddQueue { target } => {
            let r = region(rt, target)?;
            ResolvedTactic::AddQueue {
                after: r.outer_last.clone(),
            }
        }
    })
}
