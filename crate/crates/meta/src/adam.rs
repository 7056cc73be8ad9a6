//! ADAM on the shadow weights.

use crate::config::OuterLoopConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn matches(&self, params: &[Vec<f64>]) -> bool {
        self.m.len() == params.len() && self.m.iter().zip(params).all(|(m, p)| m.len() == p.len())
    }
}

/// One bias-corrected ADAM step. Parameters are clamped to `clamp` afterwards
/// when given.
pub fn adam_step(params: &mut [Vec<f64>], grads: &[Vec<f64>], state: &mut AdamState, cfg: &OuterLoopConfig, clamp: Option<(f64, f64)>) {
    assert!(state.matches(params), "ADAM state does not match parameter shapes");
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            if let Some((lo, hi)) = clamp {
                p[i] = p[i].clamp(lo, hi);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OuterLoopConfig {
        OuterLoopConfig {
            lr: 0.1,
            ..OuterLoopConfig::default()
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![vec![1.0, -2.0]];
        let mut s = AdamState::new(&[2]);
        adam_step(&mut p, &[vec![0.0, 0.0]], &mut s, &cfg(), None);
        assert_eq!(p, vec![vec![1.0, -2.0]]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        let mut p = vec![vec![0.0, 0.0, 0.0]];
        let mut s = AdamState::new(&[3]);
        adam_step(&mut p, &[vec![3.0, -0.01, 250.0]], &mut s, &cfg(), None);
        assert!((p[0][0] + 0.1).abs() < 1e-6);
        assert!((p[0][1] - 0.1).abs() < 1e-5);
        assert!((p[0][2] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn clamp_and_determinism() {
        let run = || {
            let mut p = vec![vec![0.5; 4]];
            let mut s = AdamState::new(&[4]);
            for k in 0..20 {
                let g = vec![(k as f64).sin(), -1.0, 0.3, 1e3];
                adam_step(&mut p, &[g], &mut s, &cfg(), Some((-1.0, 1.0)));
            }
            p
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a[0].iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(a[0][1], 1.0);
    }
}
