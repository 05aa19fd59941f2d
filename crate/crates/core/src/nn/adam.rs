use super::model::{Gradients, ModelParams, IS_WEIGHT};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    pub fn new(p: &ModelParams) -> Self {
        Self {
            m: Gradients::zeros_like(p),
            v: Gradients::zeros_like(p),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One Adam update. Weight decay is coupled (added to the gradient) and
    /// applies to weight matrices only. Tensors with `trainable[i] == false`
    /// are left untouched, moments included.
    pub fn step(
        &mut self,
        p: &mut ModelParams,
        grads: &Gradients,
        lr: f64,
        weight_decay: f64,
        trainable: &[bool; 6],
    ) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let params = p.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for (i, (((w, m), v), g)) in params.into_iter().zip(ms).zip(vs).zip(gs).enumerate() {
            if !trainable[i] {
                continue;
            }
            let decay = if IS_WEIGHT[i] { weight_decay } else { 0.0 };
            for (((w, m), v), &g) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                let g = g + decay * *w;
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

/// Adam step over every tensor.
pub fn adam_step(
    state: &mut AdamState,
    p: &mut ModelParams,
    grads: &Gradients,
    lr: f64,
    weight_decay: f64,
) {
    state.step(p, grads, lr, weight_decay, &[true; 6]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_params;

    #[test]
    fn zero_grads_without_decay_is_identity() {
        let p0 = init_params(3, 4, 2, 5);
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut st, &mut p, &Gradients::zeros_like(&p0), 0.01, 0.0);
        assert_eq!(p, p0);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let p0 = init_params(3, 4, 2, 5);
        let mut g = Gradients::zeros_like(&p0);
        for (k, t) in g.tensors_mut().into_iter().enumerate() {
            for (j, x) in t.iter_mut().enumerate() {
                *x = if (j + k) % 2 == 0 { 3.7 } else { -0.02 } * (1.0 + j as f64);
            }
        }
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        let lr = 1e-3;
        adam_step(&mut st, &mut p, &g, lr, 0.0);
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε)
        for ((a, b), gg) in p.tensors().iter().zip(p0.tensors()).zip(g.tensors()) {
            for ((x, y), gv) in a.iter().zip(b).zip(gg) {
                let expect = lr * gv / (gv.abs() + EPSILON);
                assert!(((y - x) - expect).abs() < 1e-15);
                assert!(((y - x).abs() - lr).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_calls_match() {
        let p0 = init_params(2, 3, 2, 1);
        let mut g = Gradients::zeros_like(&p0);
        g.w1.as_mut_slice().fill(0.3);
        let run = || {
            let mut p = p0.clone();
            let mut st = AdamState::new(&p);
            adam_step(&mut st, &mut p, &g, 0.01, 1e-5);
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_tensors_do_not_decay() {
        let p0 = init_params(2, 3, 2, 1);
        let mut p = p0.clone();
        let mut st = AdamState::new(&p);
        let mask = [false, false, false, false, true, true];
        st.step(&mut p, &Gradients::zeros_like(&p0), 0.1, 0.5, &mask);
        assert_eq!(p.w1, p0.w1);
        assert_ne!(p.wc, p0.wc);
    }
}
