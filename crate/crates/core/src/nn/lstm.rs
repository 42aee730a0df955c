//! LSTM layer kernels over groups of [`LANES`] sequences.
//!
//! Every activation is a lane vector `[f64; LANES]` holding the same unit of
//! `LANES` independent sequences, so each multiply-accumulate in the gate
//! products is one SIMD operation across sequences. Lanes never interact:
//! a sequence produces bit-identical results in any lane and any group.
//!
//! Gate order in the weight rows is input, forget, candidate, output.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{fast_sigmoid, fast_tanh, mul_add};

/// Sequences processed together by one kernel call.
pub const LANES: usize = 8;

pub type Lane = [f64; LANES];

pub const ZERO_LANE: Lane = [0.0; LANES];

/// Borrowed weights of one layer: `w_x` is `4H × I`, `w_h` is `4H × H`, both row-major.
#[derive(Debug, Clone, Copy)]
pub struct LayerWeights<'a> {
    pub input: usize,
    pub hidden: usize,
    pub w_x: &'a [f64],
    pub w_h: &'a [f64],
    pub bias: &'a [f64],
}

/// Mutable gradient slices with the same layout as [`LayerWeights`].
pub struct LayerGrads<'a> {
    pub w_x: &'a mut [f64],
    pub w_h: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Number of weights of a layer.
pub const fn layer_size(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden + 1)
}

#[inline(always)]
fn axpy_lane(acc: &mut Lane, w: f64, x: &Lane) {
    for l in 0..LANES {
        acc[l] = mul_add(w, x[l], acc[l]);
    }
}

/// Rows of the gate matrix accumulated together; independent accumulators
/// keep the FMA pipeline full.
const ROW_BLOCK: usize = 8;

/// `out[r] = bias[r] + Σ_k W_x[r,k] x[k] + Σ_k W_h[r,k] h[k]` for rows `r0..r0+B`.
#[inline(always)]
fn gate_block<const B: usize>(w: &LayerWeights<'_>, r0: usize, x: &[Lane], h: &[Lane], out: &mut [Lane]) {
    let (ni, nh) = (w.input, w.hidden);
    let mut acc = [ZERO_LANE; B];
    for q in 0..B {
        acc[q] = [w.bias[r0 + q]; LANES];
    }
    for (k, xk) in x.iter().enumerate().take(ni) {
        for q in 0..B {
            axpy_lane(&mut acc[q], w.w_x[(r0 + q) * ni + k], xk);
        }
    }
    for (k, hk) in h.iter().enumerate().take(nh) {
        for q in 0..B {
            axpy_lane(&mut acc[q], w.w_h[(r0 + q) * nh + k], hk);
        }
    }
    out[r0..r0 + B].copy_from_slice(&acc);
}

#[inline(always)]
fn sigmoid_lanes(v: &mut [Lane]) {
    for x in v {
        for l in 0..LANES {
            x[l] = fast_sigmoid(x[l]);
        }
    }
}

#[inline(always)]
fn tanh_lanes(v: &mut [Lane]) {
    for x in v {
        for l in 0..LANES {
            x[l] = fast_tanh(x[l]);
        }
    }
}

/// One time step. `gates` receives activated gates; `c`, `tc`, `h` the new
/// cell state, its tanh and the hidden output.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn step(
    w: &LayerWeights<'_>,
    x: &[Lane],
    h_prev: &[Lane],
    c_prev: &[Lane],
    gates: &mut [Lane],
    c: &mut [Lane],
    tc: &mut [Lane],
    h: &mut [Lane],
) {
    let nh = w.hidden;
    let rows = 4 * nh;
    let mut r = 0;
    while r + ROW_BLOCK <= rows {
        gate_block::<ROW_BLOCK>(w, r, x, h_prev, gates);
        r += ROW_BLOCK;
    }
    while r < rows {
        gate_block::<1>(w, r, x, h_prev, gates);
        r += 1;
    }
    let (ifg, go) = gates.split_at_mut(3 * nh);
    let (i_f, gg) = ifg.split_at_mut(2 * nh);
    sigmoid_lanes(i_f);
    tanh_lanes(gg);
    sigmoid_lanes(go);
    let (gi, gf) = i_f.split_at(nh);
    for j in 0..nh {
        for l in 0..LANES {
            c[j][l] = mul_add(gf[j][l], c_prev[j][l], gi[j][l] * gg[j][l]);
        }
    }
    tc[..nh].copy_from_slice(&c[..nh]);
    tanh_lanes(&mut tc[..nh]);
    for j in 0..nh {
        for l in 0..LANES {
            h[j][l] = go[j][l] * tc[j][l];
        }
    }
}

/// Streaming state of one layer for inference.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub h: Vec<Lane>,
    pub c: Vec<Lane>,
    h_next: Vec<Lane>,
    c_next: Vec<Lane>,
    tc: Vec<Lane>,
    gates: Vec<Lane>,
}

impl LayerState {
    pub fn new(hidden: usize) -> Self {
        LayerState {
            h: vec![ZERO_LANE; hidden],
            c: vec![ZERO_LANE; hidden],
            h_next: vec![ZERO_LANE; hidden],
            c_next: vec![ZERO_LANE; hidden],
            tc: vec![ZERO_LANE; hidden],
            gates: vec![ZERO_LANE; 4 * hidden],
        }
    }

    pub fn reset(&mut self) {
        self.h.fill(ZERO_LANE);
        self.c.fill(ZERO_LANE);
    }

    /// Advances one step on input `x`; the new output is in `self.h`.
    #[inline]
    pub fn advance(&mut self, w: &LayerWeights<'_>, x: &[Lane]) {
        step(w, x, &self.h, &self.c, &mut self.gates, &mut self.c_next, &mut self.tc, &mut self.h_next);
        core::mem::swap(&mut self.h, &mut self.h_next);
        core::mem::swap(&mut self.c, &mut self.c_next);
    }
}

/// Everything the backward pass needs from a forward pass over `steps` steps.
#[derive(Debug, Clone, Default)]
pub struct LayerTape {
    hidden: usize,
    steps: usize,
    /// `steps × 4H` activated gates.
    gates: Vec<Lane>,
    /// `steps × H` cell states.
    cells: Vec<Lane>,
    /// `steps × H` tanh of the cell states.
    tanh_cells: Vec<Lane>,
    /// `steps × H` outputs.
    outputs: Vec<Lane>,
}

impl LayerTape {
    fn prepare(&mut self, hidden: usize, steps: usize) {
        self.hidden = hidden;
        self.steps = steps;
        self.gates.resize(steps * 4 * hidden, ZERO_LANE);
        self.cells.resize(steps * hidden, ZERO_LANE);
        self.tanh_cells.resize(steps * hidden, ZERO_LANE);
        self.outputs.resize(steps * hidden, ZERO_LANE);
    }

    /// `steps × H` hidden outputs.
    pub fn outputs(&self) -> &[Lane] {
        &self.outputs[..self.steps * self.hidden]
    }

    pub fn last_output(&self) -> &[Lane] {
        let h = self.hidden;
        &self.outputs[(self.steps - 1) * h..self.steps * h]
    }
}

/// Runs the layer over `inputs` (`steps × I` lanes) from a zero state,
/// recording the tape.
pub fn forward_recording(w: &LayerWeights<'_>, inputs: &[Lane], steps: usize, tape: &mut LayerTape) {
    let (ni, nh) = (w.input, w.hidden);
    debug_assert_eq!(inputs.len(), steps * ni);
    tape.prepare(nh, steps);
    let zeros = vec![ZERO_LANE; nh];
    for t in 0..steps {
        let x = &inputs[t * ni..(t + 1) * ni];
        let (done_h, rest_h) = tape.outputs.split_at_mut(t * nh);
        let (done_c, rest_c) = tape.cells.split_at_mut(t * nh);
        let h_prev = if t == 0 { &zeros[..] } else { &done_h[(t - 1) * nh..] };
        let c_prev = if t == 0 { &zeros[..] } else { &done_c[(t - 1) * nh..] };
        step(
            w,
            x,
            h_prev,
            c_prev,
            &mut tape.gates[t * 4 * nh..(t + 1) * 4 * nh],
            &mut rest_c[..nh],
            &mut tape.tanh_cells[t * nh..(t + 1) * nh],
            &mut rest_h[..nh],
        );
    }
}

/// Per-lane gradient accumulators for one layer, reduced over lanes at the end.
#[derive(Debug, Clone)]
pub struct LaneGrads {
    w_x: Vec<Lane>,
    w_h: Vec<Lane>,
    bias: Vec<Lane>,
}

impl LaneGrads {
    pub fn new(input: usize, hidden: usize) -> Self {
        LaneGrads {
            w_x: vec![ZERO_LANE; 4 * hidden * input],
            w_h: vec![ZERO_LANE; 4 * hidden * hidden],
            bias: vec![ZERO_LANE; 4 * hidden],
        }
    }

    pub fn clear(&mut self) {
        self.w_x.fill(ZERO_LANE);
        self.w_h.fill(ZERO_LANE);
        self.bias.fill(ZERO_LANE);
    }

    /// Adds the lane sums (in lane order) into `out`.
    pub fn reduce_into(&self, out: &mut LayerGrads<'_>) {
        fn sum_into(src: &[Lane], dst: &mut [f64]) {
            for (d, s) in dst.iter_mut().zip(src) {
                let mut acc = 0.0;
                for v in s {
                    acc += v;
                }
                *d += acc;
            }
        }
        sum_into(&self.w_x, out.w_x);
        sum_into(&self.w_h, out.w_h);
        sum_into(&self.bias, out.bias);
    }
}

/// Scratch buffers for [`backward`].
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch {
    dz: Vec<Lane>,
    dh: Vec<Lane>,
    dh_next: Vec<Lane>,
    dc_next: Vec<Lane>,
}

/// Backpropagation through time.
///
/// `d_outputs` holds `∂loss/∂h_t` from above for every step (`steps × H`).
/// Weight gradients accumulate into `grads`; when `d_inputs` is given it
/// receives `∂loss/∂x_t` (`steps × I`).
pub fn backward(
    w: &LayerWeights<'_>,
    inputs: &[Lane],
    tape: &LayerTape,
    d_outputs: &[Lane],
    grads: &mut LaneGrads,
    mut d_inputs: Option<&mut [Lane]>,
    scratch: &mut BackwardScratch,
) {
    let (ni, nh) = (w.input, w.hidden);
    let steps = tape.steps;
    scratch.dz.clear();
    scratch.dz.resize(4 * nh, ZERO_LANE);
    scratch.dh.clear();
    scratch.dh.resize(nh, ZERO_LANE);
    scratch.dh_next.clear();
    scratch.dh_next.resize(nh, ZERO_LANE);
    scratch.dc_next.clear();
    scratch.dc_next.resize(nh, ZERO_LANE);
    let BackwardScratch { dz, dh, dh_next, dc_next } = scratch;

    for t in (0..steps).rev() {
        let gates = &tape.gates[t * 4 * nh..(t + 1) * 4 * nh];
        let tcs = &tape.tanh_cells[t * nh..(t + 1) * nh];
        let d_out = &d_outputs[t * nh..(t + 1) * nh];
        for j in 0..nh {
            let c_prev = if t == 0 { ZERO_LANE } else { tape.cells[(t - 1) * nh + j] };
            let (gi, gf, gg, go) = (gates[j], gates[nh + j], gates[2 * nh + j], gates[3 * nh + j]);
            let tc = tcs[j];
            let mut zi = ZERO_LANE;
            let mut zf = ZERO_LANE;
            let mut zg = ZERO_LANE;
            let mut zo = ZERO_LANE;
            for l in 0..LANES {
                let dh_l = d_out[j][l] + dh_next[j][l];
                let d_o = dh_l * tc[l];
                let dc = dc_next[j][l] + dh_l * go[l] * (1.0 - tc[l] * tc[l]);
                let d_i = dc * gg[l];
                let d_g = dc * gi[l];
                let d_f = dc * c_prev[l];
                dc_next[j][l] = dc * gf[l];
                zi[l] = d_i * gi[l] * (1.0 - gi[l]);
                zf[l] = d_f * gf[l] * (1.0 - gf[l]);
                zg[l] = d_g * (1.0 - gg[l] * gg[l]);
                zo[l] = d_o * go[l] * (1.0 - go[l]);
            }
            dz[j] = zi;
            dz[nh + j] = zf;
            dz[2 * nh + j] = zg;
            dz[3 * nh + j] = zo;
        }

        let x = &inputs[t * ni..(t + 1) * ni];
        for r in 0..4 * nh {
            let d = dz[r];
            for l in 0..LANES {
                grads.bias[r][l] += d[l];
            }
            let gx = &mut grads.w_x[r * ni..(r + 1) * ni];
            for k in 0..ni {
                for l in 0..LANES {
                    gx[k][l] = mul_add(d[l], x[k][l], gx[k][l]);
                }
            }
        }
        if t > 0 {
            let h_prev = &tape.outputs[(t - 1) * nh..t * nh];
            for r in 0..4 * nh {
                let d = dz[r];
                let gh = &mut grads.w_h[r * nh..(r + 1) * nh];
                for k in 0..nh {
                    for l in 0..LANES {
                        gh[k][l] = mul_add(d[l], h_prev[k][l], gh[k][l]);
                    }
                }
            }
        }

        // dh_{t-1} = W_hᵀ dz
        dh.fill(ZERO_LANE);
        for r in 0..4 * nh {
            let d = dz[r];
            let wh = &w.w_h[r * nh..(r + 1) * nh];
            for k in 0..nh {
                axpy_lane(&mut dh[k], wh[k], &d);
            }
        }
        core::mem::swap(dh, dh_next);

        if let Some(dx) = d_inputs.as_deref_mut() {
            let dxt = &mut dx[t * ni..(t + 1) * ni];
            dxt.fill(ZERO_LANE);
            for r in 0..4 * nh {
                let d = dz[r];
                let wx = &w.w_x[r * ni..(r + 1) * ni];
                for k in 0..ni {
                    axpy_lane(&mut dxt[k], wx[k], &d);
                }
            }
        }
    }
}
