//! The two-layer LSTM estimator: weights, feature encoding, forward pass and
//! exact gradients of the training loss.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::lstm::{
    self, BackwardScratch, Lane, LaneGrads, LayerGrads, LayerState, LayerTape, LayerWeights, LANES, ZERO_LANE,
};
use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{EventSequence, HawkesParams, STABILITY_EPS};

/// Features per time step: standardized log inter-arrival and direction code.
pub const INPUT_DIM: usize = 2;
/// Raw head outputs, one per transformed target `(μ, α1, α2, δ)`.
pub const OUTPUT_DIM: usize = 4;

/// Hidden sizes of the two recurrent layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { hidden1: 12, hidden2: 12 }
    }
}

impl Architecture {
    pub fn check(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::ShapeMismatch(alloc::format!("hidden sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn layer1_len(&self) -> usize {
        lstm::layer_size(INPUT_DIM, self.hidden1)
    }

    fn layer2_len(&self) -> usize {
        lstm::layer_size(self.hidden1, self.hidden2)
    }

    fn head_len(&self) -> usize {
        OUTPUT_DIM * (self.hidden2 + 1)
    }

    /// Total number of weights.
    pub fn weight_count(&self) -> usize {
        self.layer1_len() + self.layer2_len() + self.head_len()
    }
}

/// Mean and SD of `ln(1 + Δt)` used to standardize the first feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub log_gap_mean: f64,
    pub log_gap_sd: f64,
}

impl Default for Standardization {
    fn default() -> Self {
        Standardization { log_gap_mean: 0.0, log_gap_sd: 1.0 }
    }
}

impl Standardization {
    /// Fits the constants over all gaps; a zero SD falls back to 1.
    pub fn fit<'a>(gaps: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for path in gaps {
            for &g in path {
                let x = math::ln_1p(g);
                n += 1.0;
                let d = x - mean;
                mean += d / n;
                m2 += d * (x - mean);
            }
        }
        if n < 1.0 {
            return Self::default();
        }
        let sd = math::sqrt(m2 / n);
        Standardization { log_gap_mean: mean, log_gap_sd: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 } }
    }

    pub fn check(&self) -> Result<()> {
        if !self.log_gap_mean.is_finite() || !(self.log_gap_sd > 0.0 && self.log_gap_sd.is_finite()) {
            return Err(Error::NonFinite("standardization constants"));
        }
        Ok(())
    }

    #[inline]
    pub fn encode_gap(&self, gap: f64) -> f64 {
        (math::ln_1p(gap) - self.log_gap_mean) / self.log_gap_sd
    }
}

/// Borrowed network input: inter-arrival times and direction codes (1 or 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureView<'a> {
    pub gaps: &'a [f64],
    pub directions: &'a [u8],
}

impl FeatureView<'_> {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }
}

/// Owned network input built from an event sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoding {
    pub gaps: Vec<f64>,
    pub directions: Vec<u8>,
}

impl FeatureEncoding {
    pub fn from_sequence(seq: &EventSequence) -> Self {
        FeatureEncoding {
            gaps: seq.inter_arrivals().collect(),
            directions: seq.iter().map(|e| e.direction.code()).collect(),
        }
    }

    pub fn view(&self) -> FeatureView<'_> {
        FeatureView { gaps: &self.gaps, directions: &self.directions }
    }
}

/// Maps raw head outputs to `(μ, α1, α2, δ)`.
#[inline]
pub fn head_transform(raw: [f64; OUTPUT_DIM]) -> [f64; OUTPUT_DIM] {
    raw.map(math::softplus)
}

/// Parameters from transformed outputs `(μ, α1, α2, δ)`, `β = α1 + α2 + δ`.
///
/// Softplus underflows for very negative inputs, so every coordinate is
/// floored at the smallest values that keep the result strictly positive
/// and stationary.
pub fn params_from_transformed(t: [f64; OUTPUT_DIM]) -> HawkesParams {
    let [mu, a1, a2, delta] = t.map(|x| x.max(f64::MIN_POSITIVE));
    let delta = delta.max(4.0 * STABILITY_EPS * (a1 + a2));
    HawkesParams::new(mu, a1, a2, a1 + a2 + delta)
}

/// Recurrent estimator with weights stored in one flat vector:
/// layer 1 (`W_x`, `W_h`, `b`), layer 2 (same), head (`W`, `b`).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmEstimator {
    arch: Architecture,
    standardization: Standardization,
    weights: Vec<f64>,
}

struct Views<'a> {
    l1: LayerWeights<'a>,
    l2: LayerWeights<'a>,
    head_w: &'a [f64],
    head_b: &'a [f64],
}

fn split_layer(input: usize, hidden: usize, w: &[f64]) -> LayerWeights<'_> {
    let (w_x, rest) = w.split_at(4 * hidden * input);
    let (w_h, bias) = rest.split_at(4 * hidden * hidden);
    LayerWeights { input, hidden, w_x, w_h, bias }
}

fn split_layer_mut(input: usize, hidden: usize, w: &mut [f64]) -> LayerGrads<'_> {
    let (w_x, rest) = w.split_at_mut(4 * hidden * input);
    let (w_h, bias) = rest.split_at_mut(4 * hidden * hidden);
    LayerGrads { w_x, w_h, bias }
}

/// Buffers reused across lane groups when computing gradients.
#[derive(Debug, Clone)]
pub struct GradientScratch {
    inputs: Vec<Lane>,
    tape1: LayerTape,
    tape2: LayerTape,
    grads1: LaneGrads,
    grads2: LaneGrads,
    d_out2: Vec<Lane>,
    d_out1: Vec<Lane>,
    backward: BackwardScratch,
}

impl GradientScratch {
    pub fn new(arch: Architecture) -> Self {
        GradientScratch {
            inputs: Vec::new(),
            tape1: LayerTape::default(),
            tape2: LayerTape::default(),
            grads1: LaneGrads::new(INPUT_DIM, arch.hidden1),
            grads2: LaneGrads::new(arch.hidden1, arch.hidden2),
            d_out2: Vec::new(),
            d_out1: Vec::new(),
            backward: BackwardScratch::default(),
        }
    }
}

/// Predictions for a batch together with the time spent.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub params: Vec<HawkesParams>,
    /// Seconds for the whole batch, zero without `std`.
    pub wall_time: f64,
    /// `wall_time` divided by the batch size.
    pub per_path: f64,
}

impl LstmEstimator {
    /// All weights zero.
    pub fn zeros(arch: Architecture) -> Self {
        LstmEstimator { arch, standardization: Standardization::default(), weights: vec![0.0; arch.weight_count()] }
    }

    /// Glorot-uniform input and head weights, orthogonal recurrent weights,
    /// zero biases except a forget-gate bias of one.
    pub fn initialized<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut model = Self::zeros(arch);
        let mut off = 0;
        for (input, hidden) in [(INPUT_DIM, arch.hidden1), (arch.hidden1, arch.hidden2)] {
            let w = &mut model.weights[off..off + lstm::layer_size(input, hidden)];
            let LayerGrads { w_x, w_h, bias } = split_layer_mut(input, hidden, w);
            glorot_uniform(w_x, input, 4 * hidden, rng);
            orthogonal_columns(w_h, 4 * hidden, hidden, rng);
            bias[hidden..2 * hidden].fill(1.0);
            off += lstm::layer_size(input, hidden);
        }
        let head = &mut model.weights[off..off + OUTPUT_DIM * arch.hidden2];
        glorot_uniform(head, arch.hidden2, OUTPUT_DIM, rng);
        model
    }

    pub fn from_parts(arch: Architecture, standardization: Standardization, weights: Vec<f64>) -> Result<Self> {
        arch.check()?;
        standardization.check()?;
        if weights.len() != arch.weight_count() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} weights for {arch:?}, expected {}",
                weights.len(),
                arch.weight_count()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(LstmEstimator { arch, standardization, weights })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn set_standardization(&mut self, s: Standardization) {
        self.standardization = s;
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn views(&self) -> Views<'_> {
        let a = self.arch;
        let (l1, rest) = self.weights.split_at(a.layer1_len());
        let (l2, head) = rest.split_at(a.layer2_len());
        let (head_w, head_b) = head.split_at(OUTPUT_DIM * a.hidden2);
        Views {
            l1: split_layer(INPUT_DIM, a.hidden1, l1),
            l2: split_layer(a.hidden1, a.hidden2, l2),
            head_w,
            head_b,
        }
    }

    /// Fills `out` with `steps × INPUT_DIM` lane vectors; unused lanes are zero.
    fn encode_group(&self, paths: &[FeatureView<'_>], steps: usize, out: &mut Vec<Lane>) {
        debug_assert!(paths.len() <= LANES);
        out.clear();
        out.resize(steps * INPUT_DIM, ZERO_LANE);
        for (l, p) in paths.iter().enumerate() {
            for t in 0..steps {
                out[t * INPUT_DIM][l] = self.standardization.encode_gap(p.gaps[t]);
                out[t * INPUT_DIM + 1][l] = f64::from(p.directions[t]);
            }
        }
    }

    fn head_raw(v: &Views<'_>, h: &[Lane]) -> [Lane; OUTPUT_DIM] {
        let nh = h.len();
        let mut raw = [ZERO_LANE; OUTPUT_DIM];
        for (j, r) in raw.iter_mut().enumerate() {
            *r = [v.head_b[j]; LANES];
            for k in 0..nh {
                let w = v.head_w[j * nh + k];
                for l in 0..LANES {
                    r[l] = math::mul_add(w, h[k][l], r[l]);
                }
            }
        }
        raw
    }

    /// Transformed outputs `(μ, α1, α2, δ)` for up to `LANES` paths of equal length.
    fn predict_group(&self, paths: &[FeatureView<'_>], inputs: &mut Vec<Lane>) -> [[f64; OUTPUT_DIM]; LANES] {
        let steps = paths[0].len();
        self.encode_group(paths, steps, inputs);
        let v = self.views();
        let mut s1 = LayerState::new(self.arch.hidden1);
        let mut s2 = LayerState::new(self.arch.hidden2);
        for t in 0..steps {
            s1.advance(&v.l1, &inputs[t * INPUT_DIM..(t + 1) * INPUT_DIM]);
            s2.advance(&v.l2, &s1.h);
        }
        let raw = Self::head_raw(&v, &s2.h);
        let mut out = [[0.0; OUTPUT_DIM]; LANES];
        for (l, o) in out.iter_mut().enumerate() {
            *o = head_transform([raw[0][l], raw[1][l], raw[2][l], raw[3][l]]);
        }
        out
    }

    fn check_batch(paths: &[FeatureView<'_>]) {
        let steps = paths[0].len();
        assert!(steps >= 1, "sequences must have at least one step");
        for p in paths {
            assert!(p.gaps.len() == steps && p.directions.len() == steps, "all sequences must share one length");
        }
    }

    /// Transformed outputs `(μ, α1, α2, δ)` for each path.
    pub fn predict_transformed(&self, paths: &[FeatureView<'_>]) -> Vec<[f64; OUTPUT_DIM]> {
        if paths.is_empty() {
            return Vec::new();
        }
        Self::check_batch(paths);
        let mut inputs = Vec::new();
        let mut out = Vec::with_capacity(paths.len());
        for group in paths.chunks(LANES) {
            let pred = self.predict_group(group, &mut inputs);
            out.extend_from_slice(&pred[..group.len()]);
        }
        out
    }

    /// Estimate for one sequence. Panics on an empty or ragged input.
    pub fn forward(&self, seq: FeatureView<'_>) -> HawkesParams {
        params_from_transformed(self.predict_transformed(&[seq])[0])
    }

    /// Estimates for sequences of one common length, with timing.
    pub fn predict_batch(&self, paths: &[FeatureView<'_>]) -> BatchPrediction {
        let clock = Stopwatch::start();
        let params: Vec<_> = self.predict_transformed(paths).into_iter().map(params_from_transformed).collect();
        let wall_time = clock.seconds();
        let per_path = if params.is_empty() { 0.0 } else { wall_time / params.len() as f64 };
        BatchPrediction { params, wall_time, per_path }
    }

    /// Adds the gradient of `Σ_i loss_i` over up to `LANES` paths into `grad`
    /// and returns `Σ_i loss_i`, where `loss_i` is the mean squared error of
    /// the transformed outputs against `targets[i]`.
    pub fn group_gradient(
        &self,
        paths: &[FeatureView<'_>],
        targets: &[[f64; OUTPUT_DIM]],
        scratch: &mut GradientScratch,
        grad: &mut [f64],
    ) -> f64 {
        assert!(!paths.is_empty() && paths.len() <= LANES && paths.len() == targets.len());
        assert_eq!(grad.len(), self.weights.len());
        let steps = paths[0].len();
        let a = self.arch;
        let v = self.views();
        self.encode_group(paths, steps, &mut scratch.inputs);
        lstm::forward_recording(&v.l1, &scratch.inputs, steps, &mut scratch.tape1);
        lstm::forward_recording(&v.l2, scratch.tape1.outputs(), steps, &mut scratch.tape2);
        let h_last = scratch.tape2.last_output();
        let raw = Self::head_raw(&v, h_last);

        // Loss and ∂loss/∂raw per lane; padded lanes carry zero gradient.
        let mut d_raw = [ZERO_LANE; OUTPUT_DIM];
        let mut loss = 0.0;
        for (l, y) in targets.iter().enumerate() {
            let mut lane_loss = 0.0;
            for j in 0..OUTPUT_DIM {
                let out = math::softplus(raw[j][l]);
                let err = out - y[j];
                lane_loss += err * err;
                d_raw[j][l] = 2.0 * err / OUTPUT_DIM as f64 * math::sigmoid(raw[j][l]);
            }
            loss += lane_loss / OUTPUT_DIM as f64;
        }

        let (g1, rest) = grad.split_at_mut(a.layer1_len());
        let (g2, g_head) = rest.split_at_mut(a.layer2_len());
        let (g_head_w, g_head_b) = g_head.split_at_mut(OUTPUT_DIM * a.hidden2);
        let nh2 = a.hidden2;
        for j in 0..OUTPUT_DIM {
            g_head_b[j] += d_raw[j].iter().sum::<f64>();
            for k in 0..nh2 {
                let mut s = 0.0;
                for l in 0..LANES {
                    s += d_raw[j][l] * h_last[k][l];
                }
                g_head_w[j * nh2 + k] += s;
            }
        }

        scratch.d_out2.clear();
        scratch.d_out2.resize(steps * nh2, ZERO_LANE);
        {
            let last = &mut scratch.d_out2[(steps - 1) * nh2..];
            for j in 0..OUTPUT_DIM {
                for k in 0..nh2 {
                    let w = v.head_w[j * nh2 + k];
                    for l in 0..LANES {
                        last[k][l] = math::mul_add(w, d_raw[j][l], last[k][l]);
                    }
                }
            }
        }
        scratch.d_out1.clear();
        scratch.d_out1.resize(steps * a.hidden1, ZERO_LANE);
        scratch.grads2.clear();
        lstm::backward(
            &v.l2,
            scratch.tape1.outputs(),
            &scratch.tape2,
            &scratch.d_out2,
            &mut scratch.grads2,
            Some(&mut scratch.d_out1),
            &mut scratch.backward,
        );
        scratch.grads1.clear();
        lstm::backward(
            &v.l1,
            &scratch.inputs,
            &scratch.tape1,
            &scratch.d_out1,
            &mut scratch.grads1,
            None,
            &mut scratch.backward,
        );
        scratch.grads1.reduce_into(&mut split_layer_mut(INPUT_DIM, a.hidden1, g1));
        scratch.grads2.reduce_into(&mut split_layer_mut(a.hidden1, a.hidden2, g2));
        loss
    }

    /// Mean loss over the batch and its gradient.
    pub fn loss_and_gradient(&self, paths: &[FeatureView<'_>], targets: &[[f64; OUTPUT_DIM]]) -> (f64, Vec<f64>) {
        assert!(!paths.is_empty() && paths.len() == targets.len());
        Self::check_batch(paths);
        let mut grad = vec![0.0; self.weights.len()];
        let mut scratch = GradientScratch::new(self.arch);
        let mut total = 0.0;
        for (p, y) in paths.chunks(LANES).zip(targets.chunks(LANES)) {
            total += self.group_gradient(p, y, &mut scratch, &mut grad);
        }
        let n = paths.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }

    /// Mean loss over the batch without gradients.
    pub fn loss(&self, paths: &[FeatureView<'_>], targets: &[[f64; OUTPUT_DIM]]) -> f64 {
        let preds = self.predict_transformed(paths);
        mean_loss(&preds, targets)
    }
}

/// Mean over samples of the per-sample mean squared error.
pub fn mean_loss(preds: &[[f64; OUTPUT_DIM]], targets: &[[f64; OUTPUT_DIM]]) -> f64 {
    assert_eq!(preds.len(), targets.len());
    if preds.is_empty() {
        return 0.0;
    }
    let total: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, y)| p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / OUTPUT_DIM as f64)
        .sum();
    total / preds.len() as f64
}

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
fn glorot_uniform<R: Rng + ?Sized>(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    for x in w {
        *x = dist.sample(rng);
    }
}

/// Row-major `rows × cols` matrix with orthonormal columns (`rows >= cols`).
fn orthogonal_columns<R: Rng + ?Sized>(w: &mut [f64], rows: usize, cols: usize, rng: &mut R) {
    debug_assert!(rows >= cols && w.len() == rows * cols);
    loop {
        for x in w.iter_mut() {
            *x = StandardNormal.sample(rng);
        }
        // Modified Gram-Schmidt over columns.
        let mut ok = true;
        for j in 0..cols {
            for i in 0..j {
                let dot: f64 = (0..rows).map(|r| w[r * cols + i] * w[r * cols + j]).sum();
                for r in 0..rows {
                    w[r * cols + j] -= dot * w[r * cols + i];
                }
            }
            let norm = math::sqrt((0..rows).map(|r| w[r * cols + j] * w[r * cols + j]).sum());
            if !(norm > 1e-8) {
                ok = false;
                break;
            }
            for r in 0..rows {
                w[r * cols + j] /= norm;
            }
        }
        if ok {
            return;
        }
    }
}
