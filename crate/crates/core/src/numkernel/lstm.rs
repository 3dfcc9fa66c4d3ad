//! LSTM gate arithmetic, forward and backward.
//!
//! Gate blocks in the `4H` pre-activation are ordered input, forget,
//! candidate, output.

use super::linalg::{gemv_acc, sigmoid};
use super::params::ParamArray;
use crate::error::{Error, Result};

/// Weights of a single LSTM cell: `w_x` is `4H × in`, `w_h` is `4H × H`, `b` has `4H`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_x: &'a ParamArray,
    pub w_h: &'a ParamArray,
    pub b: &'a ParamArray,
}

/// Everything the backward pass needs from one cell evaluation.
#[derive(Debug, Clone, Default)]
pub struct GateCache {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Applies the gate nonlinearities to a pre-activation and advances the cell.
/// Returns `(h_next, c_next, cache)`.
pub fn lstm_activate(preact: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, GateCache) {
    let hid = c_prev.len();
    debug_assert_eq!(preact.len(), 4 * hid);
    let mut cache = GateCache {
        i: Vec::with_capacity(hid),
        f: Vec::with_capacity(hid),
        g: Vec::with_capacity(hid),
        o: Vec::with_capacity(hid),
        c_prev: c_prev.to_vec(),
        tanh_c: Vec::with_capacity(hid),
    };
    let mut h = Vec::with_capacity(hid);
    let mut c = Vec::with_capacity(hid);
    for k in 0..hid {
        let i = sigmoid(preact[k]);
        let f = sigmoid(preact[hid + k]);
        let g = preact[2 * hid + k].tanh();
        let o = sigmoid(preact[3 * hid + k]);
        let ck = f * c_prev[k] + i * g;
        let tc = ck.tanh();
        cache.i.push(i);
        cache.f.push(f);
        cache.g.push(g);
        cache.o.push(o);
        cache.tanh_c.push(tc);
        c.push(ck);
        h.push(o * tc);
    }
    (h, c, cache)
}

/// Backward through [`lstm_activate`]: given `dL/dh_next` and `dL/dc_next`,
/// returns `(dL/dpreact, dL/dc_prev)`.
pub fn lstm_activate_backward(cache: &GateCache, dh: &[f64], dc: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hid = cache.i.len();
    let mut dpre = vec![0.0; 4 * hid];
    let mut dc_prev = vec![0.0; hid];
    for k in 0..hid {
        let (i, f, g, o, tc) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k], cache.tanh_c[k]);
        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        let d_o = dh[k] * tc;
        let d_i = dct * g;
        let d_f = dct * cache.c_prev[k];
        let d_g = dct * i;
        dc_prev[k] = dct * f;
        dpre[k] = d_i * i * (1.0 - i);
        dpre[hid + k] = d_f * f * (1.0 - f);
        dpre[2 * hid + k] = d_g * (1.0 - g * g);
        dpre[3 * hid + k] = d_o * o * (1.0 - o);
    }
    (dpre, dc_prev)
}

/// One LSTM step `(x, h, c) → (h', c')` with the standard gate equations.
pub fn lstm_cell_step(x: &[f64], h: &[f64], c: &[f64], w: &LstmWeights<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let hid = h.len();
    let mut bad = Vec::new();
    if c.len() != hid {
        bad.push(format!("c has {} entries, h has {hid}", c.len()));
    }
    if w.w_x.shape != [4 * hid, x.len()] {
        bad.push(format!("{} {:?} expected [{}, {}]", w.w_x.name, w.w_x.shape, 4 * hid, x.len()));
    }
    if w.w_h.shape != [4 * hid, hid] {
        bad.push(format!("{} {:?} expected [{}, {hid}]", w.w_h.name, w.w_h.shape, 4 * hid));
    }
    if w.b.shape != [4 * hid] {
        bad.push(format!("{} {:?} expected [{}]", w.b.name, w.b.shape, 4 * hid));
    }
    if !bad.is_empty() {
        return Err(Error::DimensionMismatch(bad.join("; ")));
    }
    let mut pre = w.b.values.clone();
    gemv_acc(&mut pre, &w.w_x.values, x);
    gemv_acc(&mut pre, &w.w_h.values, h);
    let (h_next, c_next, _) = lstm_activate(&pre, c);
    Ok((h_next, c_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::RngStream;

    fn cell(input: usize, hid: usize, rng: &mut RngStream) -> (ParamArray, ParamArray, ParamArray) {
        let mut mk = |name: &str, shape: Vec<usize>| {
            let n = shape.iter().product();
            ParamArray::new(name, shape, (0..n).map(|_| rng.uniform(-0.8, 0.8)).collect()).unwrap()
        };
        (mk("w_x", vec![4 * hid, input]), mk("w_h", vec![4 * hid, hid]), mk("b", vec![4 * hid]))
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let w_x = ParamArray::zeros("w_x", vec![12, 2]);
        let w_h = ParamArray::zeros("w_h", vec![12, 3]);
        let b = ParamArray::zeros("b", vec![12]);
        let w = LstmWeights { w_x: &w_x, w_h: &w_h, b: &b };
        let (h, c) = lstm_cell_step(&[0.0; 2], &[0.0; 3], &[0.0; 3], &w).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let hid = 2;
        let w_x = ParamArray::zeros("w_x", vec![8, 1]);
        let w_h = ParamArray::zeros("w_h", vec![8, hid]);
        let mut b = ParamArray::zeros("b", vec![8]);
        for k in 0..hid {
            b.values[k] = -20.0;
            b.values[hid + k] = 20.0;
        }
        let w = LstmWeights { w_x: &w_x, w_h: &w_h, b: &b };
        let c = [0.7, -0.3];
        let (h, c_next) = lstm_cell_step(&[0.5], &[0.1, 0.2], &c, &w).unwrap();
        // hand evaluation: f = σ(20), i = σ(-20), g = tanh(0) = 0, o = σ(0) = 0.5
        let f = 1.0 / (1.0 + (-20f64).exp());
        for k in 0..hid {
            assert!((c_next[k] - c[k]).abs() < 1e-8);
            assert!((c_next[k] - f * c[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (f * c[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = RngStream::new(11);
        let (input, hid) = (3, 4);
        let (w_x, w_h, b) = cell(input, hid, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let h: Vec<f64> = (0..hid).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c: Vec<f64> = (0..hid).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (hn, cn) = lstm_cell_step(&x, &h, &c, &LstmWeights { w_x: &w_x, w_h: &w_h, b: &b }).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for k in 0..hid {
            let mut z = [0.0f64; 4];
            for (gate, zg) in z.iter_mut().enumerate() {
                let row = gate * hid + k;
                let mut s = b.values[row];
                for j in 0..input {
                    s += w_x.values[row * input + j] * x[j];
                }
                for j in 0..hid {
                    s += w_h.values[row * hid + j] * h[j];
                }
                *zg = s;
            }
            let c_ref = sig(z[1]) * c[k] + sig(z[0]) * z[2].tanh();
            let h_ref = sig(z[3]) * c_ref.tanh();
            assert!((cn[k] - c_ref).abs() < 1e-6);
            assert!((hn[k] - h_ref).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatch_names_arrays() {
        let w_x = ParamArray::zeros("lower.w_x", vec![8, 3]);
        let w_h = ParamArray::zeros("lower.w_h", vec![8, 2]);
        let b = ParamArray::zeros("lower.b", vec![8]);
        let err = lstm_cell_step(&[0.0; 2], &[0.0; 2], &[0.0; 2], &LstmWeights { w_x: &w_x, w_h: &w_h, b: &b })
            .unwrap_err()
            .to_string();
        assert!(err.contains("lower.w_x"), "{err}");
    }
}
