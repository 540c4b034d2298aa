use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::kernels::STPoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: STPoint,
    pub y: f64,
}

/// Observations on `(vertex, time)` points of a graph. Times are raw data
/// times; models shift them onto the process clock.
#[derive(Debug, Clone)]
pub struct SpatioTemporalDataset {
    graph: Arc<Graph>,
    observations: Vec<Observation>,
}

impl SpatioTemporalDataset {
    pub fn new(graph: Arc<Graph>, observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Data(
                "a dataset needs at least one observation".into(),
            ));
        }
        let n = graph.n_vertices();
        let mut seen = HashSet::with_capacity(observations.len());
        for o in &observations {
            if o.point.vertex >= n {
                return Err(Error::VertexOutOfRange {
                    index: o.point.vertex,
                    n,
                });
            }
            if !o.point.time.is_finite() || !o.y.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite observation at vertex `{}`, t = {}",
                    graph.label(o.point.vertex),
                    o.point.time
                )));
            }
            if !seen.insert((o.point.vertex, (o.point.time + 0.0).to_bits())) {
                return Err(Error::Data(format!(
                    "duplicate observation for vertex `{}` at t = {}",
                    graph.label(o.point.vertex),
                    o.point.time
                )));
            }
        }
        Ok(SpatioTemporalDataset {
            graph,
            observations,
        })
    }

    /// Dataset over a full `vertex × time` grid; `values[t][v]`.
    pub fn from_grid(graph: Arc<Graph>, times: &[f64], values: &[Vec<f64>]) -> Result<Self> {
        let n = graph.n_vertices();
        if values.len() != times.len() || values.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "grid values must be {} × {n}",
                times.len()
            )));
        }
        let obs = times
            .iter()
            .zip(values)
            .flat_map(|(&t, row)| {
                row.iter().enumerate().map(move |(v, &y)| Observation {
                    point: STPoint::new(v, t),
                    y,
                })
            })
            .collect();
        Self::new(graph, obs)
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn points(&self) -> Vec<STPoint> {
        self.observations.iter().map(|o| o.point).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    /// Distinct observation times, ascending.
    pub fn times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.observations.iter().map(|o| o.point.time).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Observations whose time is in `times` (compared exactly).
    pub fn restrict_to_times(&self, times: &[f64]) -> Result<Self> {
        let keep: HashSet<u64> = times.iter().map(|t| (t + 0.0).to_bits()).collect();
        let obs = self
            .observations
            .iter()
            .filter(|o| keep.contains(&(o.point.time + 0.0).to_bits()))
            .copied()
            .collect();
        Self::new(self.graph.clone(), obs)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let obs = indices
            .iter()
            .map(|&i| {
                self.observations
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("observation index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.graph.clone(), obs)
    }
}
