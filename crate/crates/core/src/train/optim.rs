use crate::diffcore::{Matrix, ParamStore};

/// Adam with decoupled weight decay: each step first shrinks every value by
/// `1 - lr * weight_decay`, then applies the bias-corrected moment update.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(store: &ParamStore, learning_rate: f64, weight_decay: f64) -> Self {
        let zeros = || store.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Updates every parameter once from its accumulated gradient, then zeroes
    /// the gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(store.len(), self.m.len(), "optimizer built for a different store");
        self.step += 1;
        let (b1, b2, lr) = (self.beta1, self.beta2, self.learning_rate);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let decay = 1.0 - lr * self.weight_decay;
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.as_slice();
            let values = p.value.as_mut_slice();
            for (((x, &g), mi), vi) in values
                .iter_mut()
                .zip(grad)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let update = (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                *x = *x * decay - lr * update;
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Matrix::filled(1, 1, x));
        s
    }

    fn value(s: &ParamStore) -> f64 {
        s.iter().next().unwrap().value.get(0, 0)
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut s = scalar_store(0.7);
        let mut opt = AdamW::new(&s, 0.01, 0.0);
        for _ in 0..5 {
            opt.step(&mut s);
        }
        assert_eq!(value(&s), 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = scalar_store(1.0);
        let mut opt = AdamW::new(&s, 0.05, 0.0);
        s.iter_mut().next().unwrap().grad.set(0, 0, 1.0);
        opt.step(&mut s);
        assert!((value(&s) - (1.0 - 0.05)).abs() < 1e-8);
        // gradient was consumed
        assert_eq!(s.iter().next().unwrap().grad.get(0, 0), 0.0);
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let (lr, wd) = (0.01, 0.3);
        let mut s = scalar_store(2.0);
        let mut opt = AdamW::new(&s, lr, wd);
        for _ in 0..10 {
            opt.step(&mut s);
        }
        let expect = 2.0 * (1.0 - lr * wd).powi(10);
        assert!((value(&s) - expect).abs() < 1e-14);
    }

    #[test]
    fn matches_reference_recurrence() {
        let grads = [0.3, -1.2, 0.5, 0.0, 2.0];
        let (lr, wd) = (0.1, 0.01);
        let mut s = scalar_store(0.4);
        let mut opt = AdamW::new(&s, lr, wd);
        let (mut x, mut m, mut v) = (0.4f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            s.iter_mut().next().unwrap().grad.set(0, 0, g);
            opt.step(&mut s);
            let t = t as i32 + 1;
            x -= lr * wd * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            x -= lr * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            assert!((value(&s) - x).abs() < 1e-14);
        }
        assert_eq!(opt.steps_taken(), 5);
    }
}
