//! Recurrent trunk (LSTM, or a dense tanh layer when recurrence is disabled)
//! followed by a tanh MLP head, stored in one flat parameter vector.
//!
//! Layout: trunk (`W_ih`, `W_hh`, `b` with gate order i, f, g, o; or `W`, `b`
//! for the dense trunk), then each head layer as `W` (out x in) and `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub recurrent: bool,
    /// Hidden widths of the head.
    pub head: Vec<usize>,
    pub output: usize,
}

impl NetShape {
    fn trunk_len(&self) -> usize {
        let (d, h) = (self.input, self.hidden);
        if self.recurrent {
            4 * h * d + 4 * h * h + 4 * h
        } else {
            h * d + h
        }
    }

    fn head_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.head.len() + 1);
        let mut prev = self.hidden;
        for &w in self.head.iter().chain(std::iter::once(&self.output)) {
            dims.push((w, prev));
            prev = w;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.trunk_len() + self.head_dims().iter().map(|(o, i)| o * i + o).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, 4H in order i, f, g, o (recurrent), or the trunk output (dense).
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Input to each head layer followed by the final output.
    acts: Vec<Vec<f64>>,
}

/// Intermediates of a sequence pass, consumed by [`RecurrentNet::backward`].
#[derive(Debug, Clone)]
pub struct SequenceCache {
    steps: Vec<StepCache>,
}

impl SequenceCache {
    pub fn outputs(&self) -> Vec<&[f64]> {
        self.steps.iter().map(|s| s.acts.last().expect("output").as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNet {
    shape: NetShape,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out[r] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl RecurrentNet {
    pub fn zeros(shape: NetShape) -> Self {
        let n = shape.param_count();
        Self { shape, params: vec![0.0; n] }
    }

    /// Uniform `±1/√H` trunk, Glorot-uniform head, output layer scaled by
    /// `output_gain`, zero biases except a forget-gate bias of 1.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(shape);
        let (d, h) = (net.shape.input, net.shape.hidden);
        let trunk = net.shape.trunk_len();
        let bound = 1.0 / (h as f64).sqrt();
        if net.shape.recurrent {
            let wlen = 4 * h * d + 4 * h * h;
            for p in &mut net.params[..wlen] {
                *p = rng.random_range(-bound..bound);
            }
            for p in &mut net.params[wlen + h..wlen + 2 * h] {
                *p = 1.0;
            }
        } else {
            let b = (6.0 / (d + h) as f64).sqrt();
            for p in &mut net.params[..h * d] {
                *p = rng.random_range(-b..b);
            }
        }
        let dims = net.shape.head_dims();
        let mut off = trunk;
        for (k, &(o, i)) in dims.iter().enumerate() {
            let mut b = (6.0 / (o + i) as f64).sqrt();
            if k + 1 == dims.len() {
                b *= output_gain;
            }
            for p in &mut net.params[off..off + o * i] {
                *p = rng.random_range(-b..b);
            }
            off += o * i + o;
        }
        net
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Option<Self> {
        (params.len() == shape.param_count()).then_some(Self { shape, params })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn initial_state(&self) -> HiddenState {
        HiddenState::zeros(self.shape.hidden)
    }

    fn step_cached(&self, x: &[f64], state: &HiddenState) -> (StepCache, HiddenState) {
        let (d, h) = (self.shape.input, self.shape.hidden);
        let p = &self.params;
        let (gates, tanh_c, next) = if self.shape.recurrent {
            let w_ih = &p[..4 * h * d];
            let w_hh = &p[4 * h * d..4 * h * d + 4 * h * h];
            let b = &p[4 * h * d + 4 * h * h..self.shape.trunk_len()];
            let mut a = b.to_vec();
            matvec_add(w_ih, 4 * h, d, x, &mut a);
            matvec_add(w_hh, 4 * h, h, &state.h, &mut a);
            for j in 0..h {
                a[j] = sigmoid(a[j]);
                a[h + j] = sigmoid(a[h + j]);
                a[2 * h + j] = a[2 * h + j].tanh();
                a[3 * h + j] = sigmoid(a[3 * h + j]);
            }
            let mut c = vec![0.0; h];
            let mut tc = vec![0.0; h];
            let mut hn = vec![0.0; h];
            for j in 0..h {
                c[j] = a[h + j] * state.c[j] + a[j] * a[2 * h + j];
                tc[j] = c[j].tanh();
                hn[j] = a[3 * h + j] * tc[j];
            }
            (a, tc, HiddenState { h: hn, c })
        } else {
            let w = &p[..h * d];
            let mut a = p[h * d..h * d + h].to_vec();
            matvec_add(w, h, d, x, &mut a);
            a.iter_mut().for_each(|v| *v = v.tanh());
            let out = HiddenState { h: a.clone(), c: vec![0.0; h] };
            (a, Vec::new(), out)
        };
        let dims = self.shape.head_dims();
        let mut acts = Vec::with_capacity(dims.len() + 1);
        acts.push(next.h.clone());
        let mut off = self.shape.trunk_len();
        for (k, &(o, i)) in dims.iter().enumerate() {
            let mut y = p[off + o * i..off + o * i + o].to_vec();
            matvec_add(&p[off..off + o * i], o, i, acts.last().expect("input"), &mut y);
            if k + 1 < dims.len() {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
            off += o * i + o;
        }
        let cache = StepCache {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
            acts,
        };
        (cache, next)
    }

    /// One step; updates `state` in place and returns the head output.
    pub fn step(&self, x: &[f64], state: &mut HiddenState) -> Vec<f64> {
        let (cache, next) = self.step_cached(x, state);
        *state = next;
        cache.acts.into_iter().last().expect("output")
    }

    /// Runs a whole sequence from the zero state.
    pub fn forward_sequence(&self, xs: &[&[f64]]) -> SequenceCache {
        let mut state = self.initial_state();
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let (cache, next) = self.step_cached(x, &state);
            state = next;
            steps.push(cache);
        }
        SequenceCache { steps }
    }

    /// Gradient of `Σ_t <d_out[t], out[t]>` with respect to the parameters,
    /// back-propagated through time.
    pub fn backward(&self, cache: &SequenceCache, d_out: &[Vec<f64>]) -> Vec<f64> {
        let (d, h) = (self.shape.input, self.shape.hidden);
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let dims = self.shape.head_dims();
        let trunk = self.shape.trunk_len();

        // Head: per step, independent across time.
        let mut d_trunk: Vec<Vec<f64>> = Vec::with_capacity(cache.steps.len());
        for (step, dy_top) in cache.steps.iter().zip(d_out) {
            let mut dy = dy_top.clone();
            let mut off_end = p.len();
            for k in (0..dims.len()).rev() {
                let (o, i) = dims[k];
                let off = off_end - (o * i + o);
                if k + 1 < dims.len() {
                    let y = &step.acts[k + 1];
                    for (g, &v) in dy.iter_mut().zip(y) {
                        *g *= 1.0 - v * v;
                    }
                }
                let x = &step.acts[k];
                let mut dx = vec![0.0; i];
                for r in 0..o {
                    let g = dy[r];
                    if g == 0.0 {
                        continue;
                    }
                    let wrow = &p[off + r * i..off + (r + 1) * i];
                    let grow = &mut grad[off + r * i..off + (r + 1) * i];
                    for c in 0..i {
                        grow[c] += g * x[c];
                        dx[c] += g * wrow[c];
                    }
                    grad[off + o * i + r] += g;
                }
                dy = dx;
                off_end = off;
            }
            d_trunk.push(dy);
        }

        if self.shape.recurrent {
            let (ih_off, hh_off, b_off) = (0, 4 * h * d, 4 * h * d + 4 * h * h);
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for (t, step) in cache.steps.iter().enumerate().rev() {
                let g = &step.gates;
                let mut da = vec![0.0; 4 * h];
                let mut dc_prev = vec![0.0; h];
                for j in 0..h {
                    let dh = d_trunk[t][j] + dh_next[j];
                    let (ig, fg, gg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let tc = step.tanh_c[j];
                    let dc = dc_next[j] + dh * og * (1.0 - tc * tc);
                    da[j] = dc * gg * ig * (1.0 - ig);
                    da[h + j] = dc * step.c_prev[j] * fg * (1.0 - fg);
                    da[2 * h + j] = dc * ig * (1.0 - gg * gg);
                    da[3 * h + j] = dh * tc * og * (1.0 - og);
                    dc_prev[j] = dc * fg;
                }
                let mut dh_prev = vec![0.0; h];
                for r in 0..4 * h {
                    let a = da[r];
                    if a == 0.0 {
                        continue;
                    }
                    for c in 0..d {
                        grad[ih_off + r * d + c] += a * step.x[c];
                    }
                    let wrow = &p[hh_off + r * h..hh_off + (r + 1) * h];
                    for c in 0..h {
                        grad[hh_off + r * h + c] += a * step.h_prev[c];
                        dh_prev[c] += a * wrow[c];
                    }
                    grad[b_off + r] += a;
                }
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
        } else {
            for (t, step) in cache.steps.iter().enumerate() {
                for j in 0..h {
                    let a = d_trunk[t][j] * (1.0 - step.gates[j] * step.gates[j]);
                    for c in 0..d {
                        grad[j * d + c] += a * step.x[c];
                    }
                    grad[h * d + j] += a;
                }
            }
        }
        debug_assert_eq!(trunk + dims.iter().map(|(o, i)| o * i + o).sum::<usize>(), p.len());
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(recurrent: bool) -> NetShape {
        NetShape { input: 3, hidden: 4, recurrent, head: vec![5, 3], output: 2 }
    }

    #[test]
    fn param_count() {
        assert_eq!(shape(true).param_count(), 4 * 4 * 3 + 4 * 4 * 4 + 16 + (5 * 4 + 5) + (3 * 5 + 3) + (2 * 3 + 2));
        assert_eq!(shape(false).param_count(), 4 * 3 + 4 + (5 * 4 + 5) + (3 * 5 + 3) + (2 * 3 + 2));
    }

    #[test]
    fn stepping_matches_sequence() {
        let net = RecurrentNet::init(shape(true), 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let xs = [vec![0.1, -0.2, 0.3], vec![0.5, 0.0, -1.0], vec![0.2, 0.2, 0.2]];
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let cache = net.forward_sequence(&refs);
        let mut st = net.initial_state();
        for (x, out) in xs.iter().zip(cache.outputs()) {
            assert_eq!(net.step(x, &mut st), out);
        }
    }

    fn fd_check(recurrent: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = RecurrentNet::init(shape(recurrent), 1.0, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let upstream: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let objective = |n: &RecurrentNet| -> f64 {
            let c = n.forward_sequence(&refs);
            c.outputs().iter().zip(&upstream).map(|(o, u)| o.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()).sum()
        };
        let grad = net.backward(&net.forward_sequence(&refs), &upstream);
        let h = 1e-5;
        for i in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / (fd.abs().max(grad[i].abs()).max(1e-6));
            assert!(err < 1e-4 || (fd - grad[i]).abs() < 1e-9, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn lstm_gradient_matches_finite_differences() {
        fd_check(true, 7);
    }

    #[test]
    fn dense_trunk_gradient_matches_finite_differences() {
        fd_check(false, 8);
    }
}
