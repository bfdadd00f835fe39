//! A self-adaptive workflow engine.
//!
//! Design-time process models (workflow, quality requirements, adaptation
//! plans) are transformed into an instrumented runtime model, executed in a
//! discrete-event simulator, and watched by a monitor-analyze-plan-execute
//! loop that reconfigures the running model when requirements degrade.

pub mod context;
pub mod engine;
pub mod model;
pub mod planner;
pub mod qos;
pub mod sim;
pub mod tactics;
pub mod trace;
pub mod transform;

pub use context::{ContextModel, Fact, QualityLevel};
pub use engine::{Engine, EngineConfig};
pub use model::{AdaptiveProcessModel, ModelError, ProcessNode};
pub use planner::{Planner, PlannerConfig};
pub use qos::{QosEngine, QosVector};
pub use sim::{Sim, SimStats};
pub use tactics::{ChangeAction, TacticInstance};
pub use trace::{RunReport, TraceEvent, TraceKind};
pub use transform::{transform, RuntimeModel};
