//! Closed-form expected effects of the tactics that change how often or
//! how many times a block runs. Attributes a tactic does not list pass
//! through unchanged.

pub type AttrVec = crate::qos::QosVector;

/// Race the block against a second component: the first response wins, both
/// are paid for.
pub fn parallel_effect(block: &AttrVec, secondary: &AttrVec) -> AttrVec {
    AttrVec {
        time_ms: block.time_ms.min(secondary.time_ms),
        cost: block.cost + secondary.cost,
        availability: 1.0 - (1.0 - block.availability) * (1.0 - secondary.availability),
        reliability: block.reliability,
    }
}

/// Try the block, fall back to a second component on failure. The fallback
/// only runs (and only costs) when the primary fails.
pub fn serial_effect(block: &AttrVec, secondary: &AttrVec) -> AttrVec {
    let miss = 1.0 - block.availability;
    AttrVec {
        time_ms: block.time_ms + miss * secondary.time_ms,
        cost: block.cost + miss * secondary.cost,
        availability: 1.0 - miss * (1.0 - secondary.availability),
        reliability: block.reliability,
    }
}

/// Re-run the block on failure, up to `max_retries` extra attempts.
pub fn reexecute_effect(block: &AttrVec, max_retries: u32) -> AttrVec {
    let attempts = max_retries as i32 + 1;
    let miss = 1.0 - block.availability;
    // Expected number of runs: sum of miss^i for i below `attempts`.
    let expected_runs = if block.availability <= 0.0 {
        attempts as f64
    } else {
        (1.0 - miss.powi(attempts)) / block.availability
    };
    AttrVec {
        time_ms: block.time_ms * expected_runs,
        cost: block.cost * expected_runs,
        availability: 1.0 - miss.powi(attempts),
        reliability: block.reliability,
    }
}

/// Serve `hit_ratio` of requests from a cache in front of the block. Hits
/// answer immediately, cost nothing, and always succeed.
pub fn cache_effect(block: &AttrVec, hit_ratio: f64) -> AttrVec {
    let miss = 1.0 - hit_ratio;
    AttrVec {
        time_ms: miss * block.time_ms,
        cost: miss * block.cost,
        availability: hit_ratio + miss * block.availability,
        reliability: hit_ratio + miss * block.reliability,
    }
}
