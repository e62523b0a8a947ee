//! Piecewise trajectories stored in weighted form.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// (s_i, t_{i+1}]: the fractional dynamics run.
    Evolution,
    /// (t_i, s_i]: the state is held by the impulse map.
    Impulse,
}

/// One window of a trajectory. Stored samples are w(t) = (t - left)^e x(t)
/// with e = 1 - gamma on evolution windows and e = 0 on impulse windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub kind: WindowKind,
    /// Window number i: evolution windows start at s_i, impulse windows at t_i.
    pub index: usize,
    pub left: f64,
    pub nodes: Vec<f64>,
    pub weighted: Vec<f64>,
    pub weight_exponent: f64,
}

impl Segment {
    pub fn weight(&self, t: f64) -> f64 {
        if self.weight_exponent == 0.0 {
            1.0
        } else {
            (t - self.left).powf(self.weight_exponent)
        }
    }

    /// Unweighted value at node k (infinite at a singular left endpoint).
    pub fn value(&self, k: usize) -> f64 {
        self.weighted[k] / self.weight(self.nodes[k])
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.nodes.len()).map(|k| self.value(k)).collect()
    }

    pub fn right(&self) -> f64 {
        *self.nodes.last().expect("non-empty segment")
    }

    /// Weighted value at t inside the segment (linear interpolation).
    pub fn weighted_at(&self, t: f64) -> Option<f64> {
        if t < self.nodes[0] || t > self.right() {
            return None;
        }
        let j = match self.nodes.binary_search_by(|x| x.partial_cmp(&t).expect("finite")) {
            Ok(j) => return Some(self.weighted[j]),
            Err(j) => j - 1,
        };
        let th = (t - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
        Some(self.weighted[j] + th * (self.weighted[j + 1] - self.weighted[j]))
    }
}

/// A trajectory in PC_{1-gamma}: consecutive windows covering [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrajectory {
    pub gamma: f64,
    pub segments: Vec<Segment>,
}

impl WeightedTrajectory {
    /// Value at t > 0. Points shared by two windows resolve to the earlier
    /// window, which owns its closed right end.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        for seg in &self.segments {
            if t > seg.left && t <= seg.right() {
                return seg.weighted_at(t).map(|w| w / seg.weight(t));
            }
        }
        None
    }

    /// max_k sup |w_k|^delta over stored nodes.
    pub fn pc_norm(&self, delta: f64) -> f64 {
        pc_norm(self, delta)
    }

    /// True when both trajectories share windows and nodes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.kind == b.kind && a.index == b.index && a.left == b.left && a.nodes == b.nodes)
    }

    /// Pointwise weighted difference self - other.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(Error::Grid("trajectories are sampled on different grids".into()));
        }
        let segments = self
            .segments
            .iter()
            .zip(&other.segments)
            .map(|(a, b)| Segment { weighted: a.weighted.iter().zip(&b.weighted).map(|(x, y)| x - y).collect(), ..a.clone() })
            .collect();
        Ok(Self { gamma: self.gamma, segments })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let segments =
            self.segments.iter().map(|s| Segment { weighted: s.weighted.iter().map(|w| c * w).collect(), ..s.clone() }).collect();
        Self { gamma: self.gamma, segments }
    }

    /// Total number of stored samples.
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.nodes.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The delta-norm max_k sup |(t - t_k)^{1-gamma} x(t)|^delta.
pub fn pc_norm(x: &WeightedTrajectory, delta: f64) -> f64 {
    x.segments.iter().flat_map(|s| s.weighted.iter()).fold(0.0_f64, |m, w| m.max(w.abs())).powf(delta)
}
