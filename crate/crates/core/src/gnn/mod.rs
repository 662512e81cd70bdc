//! Three-stream frame-graph classifier.
//!
//! Each stream (forward, backward, undirected) runs EDGE-CONV, then a
//! SAGE-CONV whose weight is shared by all three streams, then a SAGE-CONV
//! down to one logit per node. Stream logits are summed.

mod checkpoint;
mod layers;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::tgraph::{Direction, TemporalGraph};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointDtype};
pub use layers::{edge_conv, sage_conv, Activation, EdgeConvWeights};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Plain neighborhood sum.
    #[default]
    Sum,
    /// Sum divided by neighborhood size (ablation only).
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    EdgeConv,
    SageConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub window: i64,
    pub aggregation: Aggregation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 1024,
            hidden_dim: 128,
            dropout_rate: 0.5,
            window: 10,
            aggregation: Aggregation::Sum,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be >= 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate", "must lie in [0, 1)"));
        }
        if self.window < 0 {
            return Err(Error::config("window", "must be >= 0"));
        }
        Ok(())
    }

    /// The three layers every stream applies, in order.
    pub fn layers(&self) -> [LayerConfig; 3] {
        let (d, h) = (self.input_dim, self.hidden_dim);
        [
            LayerConfig {
                kind: LayerKind::EdgeConv,
                in_dim: d,
                out_dim: h,
                activation: Activation::Relu,
            },
            LayerConfig {
                kind: LayerKind::SageConv,
                in_dim: h,
                out_dim: h,
                activation: Activation::Relu,
            },
            LayerConfig {
                kind: LayerKind::SageConv,
                in_dim: h,
                out_dim: 1,
                activation: Activation::None,
            },
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct StreamParams {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    out: ParamId,
}

/// All learnable weights. The layer-2 weight is a single parameter that
/// every stream reads.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    pub store: ParamStore,
    streams: [StreamParams; 3],
    shared: ParamId,
}

fn stream_index(direction: Direction) -> usize {
    match direction {
        Direction::Forward => 0,
        Direction::Backward => 1,
        Direction::Undirected => 2,
    }
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("shape")
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases. The shared layer-2 weight is drawn
    /// once.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        Self::build(config, |_, rows, cols, bias| {
            if bias {
                Matrix::zeros(rows, cols)
            } else {
                glorot(rng, rows, cols)
            }
        })
    }

    /// Same layout as [`ModelParams::init`] with every value zero; used as a
    /// skeleton when loading checkpoints.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        Self::build(config, |_, rows, cols, _| Matrix::zeros(rows, cols))
    }

    fn build(config: &ModelConfig, mut make: impl FnMut(&str, usize, usize, bool) -> Matrix) -> Result<Self> {
        config.validate()?;
        let (d, h) = (config.input_dim, config.hidden_dim);
        let mut store = ParamStore::new();
        let mut add = |store: &mut ParamStore, name: String, rows, cols, bias| {
            let m = make(&name, rows, cols, bias);
            store.add(name, m)
        };
        let mut edge = Vec::with_capacity(3);
        for dir in Direction::ALL {
            let tag = dir.tag();
            edge.push((
                add(&mut store, format!("{tag}.edge_conv.w1"), 2 * d, h, false),
                add(&mut store, format!("{tag}.edge_conv.b1"), 1, h, true),
                add(&mut store, format!("{tag}.edge_conv.w2"), h, h, false),
                add(&mut store, format!("{tag}.edge_conv.b2"), 1, h, true),
            ));
        }
        let shared = add(&mut store, "shared.sage_conv.weight".into(), h, h, false);
        let mut outs = Vec::with_capacity(3);
        for dir in Direction::ALL {
            outs.push(add(&mut store, format!("{}.sage_conv_out.weight", dir.tag()), h, 1, false));
        }
        let streams = std::array::from_fn(|i| StreamParams {
            w1: edge[i].0,
            b1: edge[i].1,
            w2: edge[i].2,
            b2: edge[i].3,
            out: outs[i],
        });
        Ok(ModelParams {
            config: config.clone(),
            store,
            streams,
            shared,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn shared_weight(&self) -> ParamId {
        self.shared
    }

    /// Parameters a stream reads, in layer order (shared weight included).
    pub fn stream_param_ids(&self, direction: Direction) -> Vec<ParamId> {
        let s = self.streams[stream_index(direction)];
        vec![s.w1, s.b1, s.w2, s.b2, self.shared, s.out]
    }

    pub fn num_values(&self) -> usize {
        self.store.num_values()
    }

    /// Parameter memory in bytes for a given element width.
    pub fn memory_bytes(&self, bytes_per_value: usize) -> usize {
        self.num_values() * bytes_per_value
    }

    /// Records the model on `tape`, summing the logits of the requested
    /// streams. [`ModelParams::forward_pass`] uses all three.
    pub fn forward_streams<'g, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'g>,
        features: Var,
        graph: &'g TemporalGraph,
        streams: &[Direction],
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let x = tape.value(features);
        if x.rows() != graph.num_nodes() {
            return Err(Error::Dimension {
                op: "forward_pass",
                left: x.shape(),
                right: (graph.num_nodes(), self.config.input_dim),
            });
        }
        if x.cols() != self.config.input_dim {
            return Err(Error::Dimension {
                op: "forward_pass",
                left: x.shape(),
                right: (x.rows(), self.config.input_dim),
            });
        }
        if streams.is_empty() {
            return Err(Error::Contract("forward pass needs at least one stream".into()));
        }
        let [l1, l2, l3] = self.config.layers();
        let rate = self.config.dropout_rate;
        let agg = self.config.aggregation;
        let shared = tape.param(&self.store, self.shared);
        let mut total: Option<Var> = None;
        for &dir in streams {
            let s = self.streams[stream_index(dir)];
            let edges = graph.edges(dir);
            let mlp = EdgeConvWeights {
                w1: tape.param(&self.store, s.w1),
                b1: tape.param(&self.store, s.b1),
                w2: tape.param(&self.store, s.w2),
                b2: tape.param(&self.store, s.b2),
            };
            let h1 = edge_conv(tape, features, edges, &mlp, l1.activation)?;
            let h1 = tape.dropout(h1, rate, training, rng)?;
            let h2 = sage_conv(tape, h1, edges, shared, l2.activation, agg)?;
            let h2 = tape.dropout(h2, rate, training, rng)?;
            let out = tape.param(&self.store, s.out);
            let z = sage_conv(tape, h2, edges, out, l3.activation, agg)?;
            total = Some(match total {
                None => z,
                Some(acc) => tape.add(acc, z)?,
            });
        }
        Ok(total.expect("non-empty streams"))
    }

    /// Full three-stream forward pass on a fresh tape; returns `n x 1` logits.
    pub fn forward_pass<R: Rng + ?Sized>(
        &self,
        features: &Matrix,
        graph: &TemporalGraph,
        training: bool,
        rng: &mut R,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let z = self.forward_streams(&mut tape, x, graph, &Direction::ALL, training, rng)?;
        Ok(tape.value(z).clone())
    }
}
