//! Compositional QoS aggregation over the workflow tree. Given per-service
//! attributes, computes the aggregate response time, cost, availability,
//! and reliability of any subtree without executing it.

use crate::model::ProcessNode;

/// The four aggregate attributes tracked per subtree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosVector {
    pub time_ms: f64,
    pub cost: f64,
    pub availability: f64,
    pub reliability: f64,
}

impl QosVector {
    /// The neutral element: contributes nothing to a sequence.
    pub const NOTHING: QosVector = QosVector {
        time_ms: 0.0,
        cost: 0.0,
        availability: 1.0,
        reliability: 1.0,
    };
}

/// Aggregate a subtree. `leaf` supplies the attributes of each service
/// invocation by catalog name.
///
/// Sequences add time and cost and multiply the success attributes; loops
/// are a k-fold sequence of the body; selections weight every attribute by
/// branch probability; parallel blocks take the slowest branch's time, the
/// summed cost, and the product of success attributes; optional blocks are
/// a selection between the child and doing nothing.
pub fn structural_qos(node: &ProcessNode, leaf: &dyn Fn(&str) -> QosVector) -> QosVector {
    match node {
        ProcessNode::Service { service, .. } => leaf(service),
        ProcessNode::Seq { children, .. } => children
            .iter()
            .map(|c| structural_qos(c, leaf))
            .fold(QosVector::NOTHING, seq_fold),
        ProcessNode::Loop { k, child, .. } => {
            let q = structural_qos(child, leaf);
            let k = f64::from(*k);
            QosVector {
                time_ms: k * q.time_ms,
                cost: k * q.cost,
                availability: q.availability.powf(k),
                reliability: q.reliability.powf(k),
            }
        }
        ProcessNode::Sel {
            probabilities,
            children,
            ..
        } => children
            .iter()
            .zip(probabilities)
            .map(|(c, p)| (structural_qos(c, leaf), *p))
            .fold(QosVector::zeroed(), |acc, (q, p)| QosVector {
                time_ms: acc.time_ms + p * q.time_ms,
                cost: acc.cost + p * q.cost,
                availability: acc.availability + p * q.availability,
                reliability: acc.reliability + p * q.reliability,
            }),
        ProcessNode::AndPar { children, .. } => children
            .iter()
            .map(|c| structural_qos(c, leaf))
            .fold(QosVector::NOTHING, |acc, q| QosVector {
                time_ms: acc.time_ms.max(q.time_ms),
                cost: acc.cost + q.cost,
                availability: acc.availability * q.availability,
                reliability: acc.reliability * q.reliability,
            }),
        ProcessNode::Opt { p_take, child, .. } => {
            let q = structural_qos(child, leaf);
            let p = *p_take;
            QosVector {
                time_ms: p * q.time_ms,
                cost: p * q.cost,
                availability: p * q.availability + (1.0 - p),
                reliability: p * q.reliability + (1.0 - p),
            }
        }
    }
}

fn seq_fold(acc: QosVector, q: QosVector) -> QosVector {
    QosVector {
        time_ms: acc.time_ms + q.time_ms,
        cost: acc.cost + q.cost,
        availability: acc.availability * q.availability,
        reliability: acc.reliability * q.reliability,
    }
}

impl QosVector {
    fn zeroed() -> QosVector {
        QosVector {
            time_ms: 0.0,
            cost: 0.0,
            availability: 0.0,
            reliability: 0.0,
        }
    }
}
