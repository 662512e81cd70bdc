use serde::{Deserialize, Serialize};

use super::Aggregation;
use crate::diffcore::{Tape, Var};
use crate::error::Result;
use crate::tgraph::EdgeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

fn activate(tape: &mut Tape<'_>, x: Var, activation: Activation) -> Var {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::None => x,
    }
}

/// `out_v = act(M^T sum_{w in N(v)} x_w)`: aggregate first, then transform.
/// With [`Aggregation::Mean`] the neighborhood sum is divided by its size.
pub fn sage_conv<'g>(
    tape: &mut Tape<'g>,
    x: Var,
    edges: &'g EdgeSet,
    weight: Var,
    activation: Activation,
    aggregation: Aggregation,
) -> Result<Var> {
    let mut agg = tape.neighbor_sum(x, edges)?;
    if aggregation == Aggregation::Mean {
        let scale = edges
            .out_degrees()
            .into_iter()
            .map(|d| if d == 0 { 0.0 } else { 1.0 / d as f64 })
            .collect();
        agg = tape.scale_rows(agg, scale)?;
    }
    let out = tape.matmul(agg, weight)?;
    Ok(activate(tape, out, activation))
}

/// Weights of the two-layer edge MLP `g(a) = relu(a W1 + b1) W2 + b2`,
/// with `W1` of shape `2d x h`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeConvWeights {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `out_v = act(sum_{w in N(v)} g([x_v | x_w]))`.
///
/// The second linear map of `g` commutes with the neighborhood sum, so it is
/// applied after aggregation (its bias then counts once per edge, i.e. scaled
/// by out-degree). The first map runs through [`Tape::pair_project`] to avoid
/// materializing the concatenated pairs.
pub fn edge_conv<'g>(
    tape: &mut Tape<'g>,
    x: Var,
    edges: &'g EdgeSet,
    mlp: &EdgeConvWeights,
    activation: Activation,
) -> Result<Var> {
    let n = tape.value(x).rows();
    let hidden = tape.pair_project(x, mlp.w1, edges)?;
    let hidden = tape.add_bias(hidden, mlp.b1, None)?;
    let hidden = tape.relu(hidden);
    let summed = tape.edge_scatter_sum(hidden, edges, n)?;
    let out = tape.matmul(summed, mlp.w2)?;
    let degree = edges.out_degrees().into_iter().map(|d| d as f64).collect();
    let out = tape.add_bias(out, mlp.b2, Some(degree))?;
    Ok(activate(tape, out, activation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_m(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sage_identity_on_single_node() {
        let e = EdgeSet::self_loops(1);
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_rows(&[[0.3, -2.0]]));
        let m = t.constant(Matrix::identity(2));
        let y = sage_conv(&mut t, x, &e, m, Activation::None, Aggregation::Sum).unwrap();
        assert_eq!(t.value(y), &Matrix::from_rows(&[[0.3, -2.0]]));
    }

    #[test]
    fn sage_two_nodes() {
        let e = EdgeSet::from_pairs(2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_rows(&[[1.0], [2.0]]));
        let m = t.constant(Matrix::from_rows(&[[2.0]]));
        let y = sage_conv(&mut t, x, &e, m, Activation::Relu, Aggregation::Sum).unwrap();
        assert_eq!(t.value(y), &Matrix::from_rows(&[[6.0], [6.0]]));
        let y = sage_conv(&mut t, x, &e, m, Activation::None, Aggregation::Mean).unwrap();
        assert_eq!(t.value(y), &Matrix::from_rows(&[[3.0], [3.0]]));
    }

    #[test]
    fn sage_matches_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 7;
        let e = EdgeSet::from_pairs(n, (0..25).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))).unwrap();
        let x = rand_m(&mut rng, n, 3);
        let m = rand_m(&mut rng, 3, 2);
        let mut t = Tape::new();
        let (xv, mv) = (t.constant(x.clone()), t.constant(m.clone()));
        let y = sage_conv(&mut t, xv, &e, mv, Activation::Relu, Aggregation::Sum).unwrap();
        for v in 0..n {
            // sigma(sum_w M x_w), transforming each neighbor before summing
            let mut acc = [0.0; 2];
            for w in 0..n {
                if e.contains(v, w) {
                    for (o, acc_o) in acc.iter_mut().enumerate() {
                        *acc_o += (0..3).map(|i| m.get(i, o) * x.get(w, i)).sum::<f64>();
                    }
                }
            }
            for o in 0..2 {
                assert!((t.value(y).get(v, o) - acc[o].max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_conv_zero_weights_gives_bias() {
        let e = EdgeSet::self_loops(1);
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_rows(&[[1.0, 2.0]]));
        let mlp = EdgeConvWeights {
            w1: t.constant(Matrix::zeros(4, 3)),
            b1: t.constant(Matrix::from_rows(&[[0.5, -1.0, 2.0]])),
            w2: t.constant(Matrix::zeros(3, 3)),
            b2: t.constant(Matrix::from_rows(&[[0.25, -3.0, 1.0]])),
        };
        let y = edge_conv(&mut t, x, &e, &mlp, Activation::Relu).unwrap();
        assert_eq!(t.value(y), &Matrix::from_rows(&[[0.25, 0.0, 1.0]]));
    }

    #[test]
    fn edge_conv_reduces_to_sage_when_selecting_neighbor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 6;
        let d = 3;
        let e = EdgeSet::from_pairs(n, (0..18).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))).unwrap();
        // nonnegative features so the inner ReLU is transparent
        let x = rand_m(&mut rng, n, d).map(f64::abs);
        let mut select = Matrix::zeros(2 * d, d);
        for i in 0..d {
            select.set(d + i, i, 1.0);
        }
        let mut t = Tape::new();
        let xv = t.constant(x);
        let mlp = EdgeConvWeights {
            w1: t.constant(select),
            b1: t.constant(Matrix::zeros(1, d)),
            w2: t.constant(Matrix::identity(d)),
            b2: t.constant(Matrix::zeros(1, d)),
        };
        let a = edge_conv(&mut t, xv, &e, &mlp, Activation::None).unwrap();
        let eye = t.constant(Matrix::identity(d));
        let b = sage_conv(&mut t, xv, &e, eye, Activation::None, Aggregation::Sum).unwrap();
        assert!(t.value(a).max_abs_diff(t.value(b)) < 1e-12);
    }

    #[test]
    fn edge_conv_matches_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, d, h) = (5, 2, 3);
        let e = EdgeSet::from_pairs(n, (0..14).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))).unwrap();
        let x = rand_m(&mut rng, n, d);
        let (w1, b1, w2, b2) = (rand_m(&mut rng, 2 * d, h), rand_m(&mut rng, 1, h), rand_m(&mut rng, h, h), rand_m(&mut rng, 1, h));
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let mlp = EdgeConvWeights {
            w1: t.constant(w1.clone()),
            b1: t.constant(b1.clone()),
            w2: t.constant(w2.clone()),
            b2: t.constant(b2.clone()),
        };
        let y = edge_conv(&mut t, xv, &e, &mlp, Activation::Relu).unwrap();

        for v in 0..n {
            let mut acc = vec![0.0; h];
            for w in 0..n {
                if !e.contains(v, w) {
                    continue;
                }
                let cat: Vec<f64> = x.row(v).iter().chain(x.row(w)).copied().collect();
                let hid: Vec<f64> = (0..h)
                    .map(|j| (b1.get(0, j) + (0..2 * d).map(|i| cat[i] * w1.get(i, j)).sum::<f64>()).max(0.0))
                    .collect();
                for (o, acc_o) in acc.iter_mut().enumerate() {
                    *acc_o += b2.get(0, o) + (0..h).map(|j| hid[j] * w2.get(j, o)).sum::<f64>();
                }
            }
            for o in 0..h {
                assert!((t.value(y).get(v, o) - acc[o].max(0.0)).abs() < 1e-12);
            }
        }
    }
}
