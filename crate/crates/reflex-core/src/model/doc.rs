//! Wire representation of model files. These structs mirror the JSON schema
//! one-to-one; `parse` converts them to and from the domain types, which is
//! where semantic validation lives. Unknown fields are rejected everywhere.

use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub workflow: NodeDoc,
    pub services: Vec<ServiceDoc>,
    pub quality_requirements: Vec<RequirementDoc>,
    pub adaptation_plans: Vec<PlanDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDoc {
    pub name: String,
    pub providers: Vec<ProviderDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderDoc {
    pub provider_id: String,
    pub latency_mean_ms: f64,
    pub latency_stddev_ms: f64,
    pub failure_probability: f64,
    pub cost: f64,
    pub payload_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementDoc {
    pub name: String,
    pub target: String,
    pub property: PropertyDoc,
    pub membership: MembershipDoc,
    pub trigger: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyDoc {
    pub name: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipDoc {
    pub orientation: String,
    pub x1: f64,
    pub x2: f64,
    pub interval: IntervalDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntervalDoc {
    /// `"per_instance"`
    Name(String),
    /// `{"window_ms": 10000}`
    Window {
        window_ms: u64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub name: String,
    pub trigger: String,
    #[serde(default)]
    pub pre_assumptions: Vec<String>,
    pub flow: Vec<FlowNodeDoc>,
    #[serde(default)]
    pub false_assumptions: Vec<FalseAssumptionDoc>,
}

/// Exactly one of the three fields must be present; parse enforces it so the
/// diagnostic can name the plan instead of pointing at a byte offset.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowNodeDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tactic: Option<TacticDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Vec<Vec<FlowNodeDoc>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TacticDoc {
    pub kind: String,
    pub args: Vec<String>,
    #[serde(default)]
    pub pre_assumptions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalseAssumptionDoc {
    pub severity: String,
    pub assumption: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub seed: u64,
    pub horizon_ms: u64,
    pub events: Vec<EventDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDoc {
    pub at_ms: u64,
    pub action: ActionDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ActionDoc {
    #[serde(rename = "start_instances")]
    StartInstances { rate_per_s: f64 },
    #[serde(rename = "assert_assumption")]
    AssertAssumption { name: String },
    #[serde(rename = "retract_assumption")]
    RetractAssumption { name: String },
    #[serde(rename = "set_provider_failure")]
    SetProviderFailure { provider: String, p: f64 },
    #[serde(rename = "set_provider_latency")]
    SetProviderLatency {
        provider: String,
        mean_ms: f64,
        stddev_ms: f64,
    },
    #[serde(rename = "set_bandwidth")]
    SetBandwidth { bytes_per_ms: f64 },
}
