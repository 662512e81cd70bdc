//! Temporal frame graphs.
//!
//! Every sampled frame is a node. Two nodes are joined when their timestamps
//! are at most `window` apart. Besides the undirected graph we build a
//! forward graph (each node sees itself and later frames) and a backward graph
//! (itself and earlier frames). Edge `(v, w)` means `w` is in the neighborhood
//! of `v`, i.e. `v` aggregates from `w`.

use crate::error::{Error, Result};

/// Deduplicated directed pairs, sorted by `(source, target)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    num_nodes: usize,
    pairs: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn from_pairs(
        num_nodes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        for &(v, w) in &pairs {
            let bad = v.max(w);
            if bad >= num_nodes {
                return Err(Error::Index {
                    op: "EdgeSet::from_pairs",
                    index: bad,
                    n: num_nodes,
                });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(EdgeSet { num_nodes, pairs })
    }

    pub fn self_loops(num_nodes: usize) -> Self {
        EdgeSet {
            num_nodes,
            pairs: (0..num_nodes).map(|v| (v, v)).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn contains(&self, v: usize, w: usize) -> bool {
        self.pairs.binary_search(&(v, w)).is_ok()
    }

    /// Number of edges leaving each node (the size of its neighborhood).
    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(v, _) in &self.pairs {
            deg[v] += 1;
        }
        deg
    }

    /// Checks every endpoint against a node count; used by the message
    /// passing ops before touching feature rows.
    pub(crate) fn check_nodes(&self, op: &'static str, n: usize) -> Result<()> {
        if self.num_nodes > n {
            if let Some(&(v, w)) = self.pairs.iter().find(|&&(v, w)| v >= n || w >= n) {
                return Err(Error::Index {
                    op,
                    index: v.max(w),
                    n,
                });
            }
        }
        Ok(())
    }
}

/// Which of the three edge sets a model stream runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
    Undirected,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Forward, Direction::Backward, Direction::Undirected];

    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
            Direction::Undirected => "undir",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalGraph {
    window: i64,
    timestamps: Vec<i64>,
    undirected: EdgeSet,
    forward: EdgeSet,
    backward: EdgeSet,
}

impl TemporalGraph {
    pub fn num_nodes(&self) -> usize {
        self.timestamps.len()
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn undirected(&self) -> &EdgeSet {
        &self.undirected
    }

    pub fn forward(&self) -> &EdgeSet {
        &self.forward
    }

    pub fn backward(&self) -> &EdgeSet {
        &self.backward
    }

    pub fn edges(&self, direction: Direction) -> &EdgeSet {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
            Direction::Undirected => &self.undirected,
        }
    }
}

/// Builds the undirected, forward and backward graphs over `n` frames.
///
/// `timestamps` defaults to `0..n` (uniformly sampled frames). With custom
/// timestamps, frames sharing a timestamp land in both directed graphs.
pub fn build_graph(n: usize, window: i64, timestamps: Option<&[i64]>) -> Result<TemporalGraph> {
    if n == 0 {
        return Err(Error::EmptyVideo);
    }
    if window < 0 {
        return Err(Error::Contract(format!("window must be >= 0, got {window}")));
    }
    let timestamps: Vec<i64> = match timestamps {
        Some(ts) if ts.len() != n => {
            return Err(Error::Contract(format!(
                "{} timestamps for {n} nodes",
                ts.len()
            )))
        }
        Some(ts) => ts.to_vec(),
        None => (0..n as i64).collect(),
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (timestamps[i], i));

    let mut undirected = Vec::new();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut lo = 0;
    let mut hi = 0;
    for &i in &order {
        let t = timestamps[i];
        while timestamps[order[lo]] < t.saturating_sub(window) {
            lo += 1;
        }
        while hi < n && timestamps[order[hi]] <= t.saturating_add(window) {
            hi += 1;
        }
        for &j in &order[lo..hi] {
            let diff = t - timestamps[j];
            undirected.push((i, j));
            if diff <= 0 {
                forward.push((i, j));
            }
            if diff >= 0 {
                backward.push((i, j));
            }
        }
    }

    let finish = |mut pairs: Vec<(usize, usize)>| {
        pairs.sort_unstable();
        EdgeSet {
            num_nodes: n,
            pairs,
        }
    };
    Ok(TemporalGraph {
        window,
        timestamps,
        undirected: finish(undirected),
        forward: finish(forward),
        backward: finish(backward),
    })
}
