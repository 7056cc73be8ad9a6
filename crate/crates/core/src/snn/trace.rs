use crate::error::{Error, Result};

/// Second-order pre-synaptic eligibility traces, one pair per pre-neuron.
///
/// `q` low-pass filters the input spikes with the synaptic decay and `p`
/// filters `q` with the membrane decay, so `p_j` equals the derivative of the
/// membrane potential with respect to `w_j` under fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl TraceState {
    pub fn new(pre: usize) -> Self {
        Self {
            q: vec![0.0; pre],
            p: vec![0.0; pre],
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn reset(&mut self) {
        self.q.fill(0.0);
        self.p.fill(0.0);
    }
}

/// One step of `q <- a_u q + (1 - a_u) x`, `p <- a_v p + (1 - a_v) q`.
pub fn update_presyn_trace(tr: &mut TraceState, active_inputs: &[u32], alpha_u: f64, alpha_v: f64) -> Result<()> {
    let n = tr.len();
    if let Some(&j) = active_inputs.iter().max() {
        if j as usize >= n {
            return Err(Error::DimensionMismatch {
                context: "trace input spikes",
                expected: n,
                got: j as usize + 1,
            });
        }
    }
    let mut x = vec![0.0; n];
    for &j in active_inputs {
        x[j as usize] = 1.0;
    }
    let gain_u = 1.0 - alpha_u;
    let gain_v = 1.0 - alpha_v;
    for j in 0..n {
        let q = alpha_u * tr.q[j] + gain_u * x[j];
        tr.q[j] = q;
        tr.p[j] = alpha_v * tr.p[j] + gain_v * q;
    }
    Ok(())
}
