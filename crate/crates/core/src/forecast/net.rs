//! Recurrent and feed-forward networks with hand-written backpropagation.
//!
//! The recurrent cell keeps an H-dimensional hidden state and evolves as
//!
//! ```text
//!   s_t = relu(W_s * [s_{t-1}; i_t] + b_s)
//!   o_t = relu(W_o * [s_t;     i_t] + b_o)
//! ```
//!
//! with the output function applied to the *updated* state. Gradients are
//! exact analytic derivatives of the mean-squared-error loss (through time
//! for the recurrent cell), using subgradient 0 for relu at the kink.

use super::ForecastError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense row-major matrix, sized for desk-scale networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out = A*x + b
    fn affine(&self, x: &[f64], b: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = b[r];
            for (w, xv) in self.row(r).iter().zip(x) {
                acc += w * xv;
            }
            *o = acc;
        }
    }

    fn seeded(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        // uniform in [-a, a], a = sqrt(1/fan_in)
        let a = (1.0 / cols as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
        Self { rows, cols, data }
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ForecastError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(ForecastError::ModelFormat(format!("unknown activation {other:?}"))),
        }
    }

    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => relu(z),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn grad(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => relu_grad(z),
            Activation::Identity => 1.0,
        }
    }
}

/// One (input window, target) pair for training and gradient checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub window: Vec<f64>,
    pub target: f64,
}

impl Example {
    pub fn new(window: Vec<f64>, target: f64) -> Self {
        Self { window, target }
    }
}

/// A model that exposes its parameters as one flat vector and produces
/// exact gradients of the batch MSE loss. The flat layout allows a single
/// momentum optimizer and a model-agnostic finite-difference oracle.
pub trait GradientModel {
    fn forward(&self, window: &[f64]) -> Result<f64, ForecastError>;
    fn param_vector(&self) -> Vec<f64>;
    fn load_param_vector(&mut self, params: &[f64]) -> Result<(), ForecastError>;

    /// Mean squared error over the batch and its gradient in flat layout.
    fn loss_and_gradient(&self, batch: &[Example]) -> Result<(f64, Vec<f64>), ForecastError>;

    /// All pre-activation values visited while evaluating `window`, in
    /// evaluation order. Used to detect relu-kink proximity.
    fn preactivations(&self, window: &[f64]) -> Result<Vec<f64>, ForecastError>;

    fn batch_loss(&self, batch: &[Example]) -> Result<f64, ForecastError> {
        if batch.is_empty() {
            return Err(ForecastError::EmptyDataset);
        }
        let mut acc = 0.0;
        for ex in batch {
            let y = self.forward(&ex.window)?;
            let e = y - ex.target;
            acc += e * e;
        }
        Ok(acc / batch.len() as f64)
    }
}

// ---------------------------------------------------------------------------
// Recurrent network
// ---------------------------------------------------------------------------

/// Parameters of the recurrent cell. `w_s` is H x (H+I), `w_o` is O x (H+I).
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
    pub w_s: Matrix,
    pub b_s: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
}

impl RnnParams {
    pub fn new(
        hidden: usize,
        input: usize,
        output: usize,
        w_s: Matrix,
        b_s: Vec<f64>,
        w_o: Matrix,
        b_o: Vec<f64>,
    ) -> Result<Self, ForecastError> {
        if w_s.rows != hidden || w_s.cols != hidden + input {
            return Err(ForecastError::DimensionMismatch(format!(
                "w_s must be {}x{}, got {}x{}",
                hidden,
                hidden + input,
                w_s.rows,
                w_s.cols
            )));
        }
        if w_o.rows != output || w_o.cols != hidden + input {
            return Err(ForecastError::DimensionMismatch(format!(
                "w_o must be {}x{}, got {}x{}",
                output,
                hidden + input,
                w_o.rows,
                w_o.cols
            )));
        }
        if b_s.len() != hidden || b_o.len() != output {
            return Err(ForecastError::DimensionMismatch("bias length".into()));
        }
        let all_finite = w_s.data.iter().chain(&w_o.data).chain(&b_s).chain(&b_o);
        if all_finite.clone().any(|v| !v.is_finite()) {
            return Err(ForecastError::DimensionMismatch("non-finite parameter".into()));
        }
        Ok(Self { hidden, input, output, w_s, b_s, w_o, b_o })
    }

    pub fn zeros(hidden: usize, input: usize, output: usize) -> Self {
        Self {
            hidden,
            input,
            output,
            w_s: Matrix::zeros(hidden, hidden + input),
            b_s: vec![0.0; hidden],
            w_o: Matrix::zeros(output, hidden + input),
            b_o: vec![0.0; output],
        }
    }

    /// Deterministic seeded init, biases zero.
    pub fn seeded(hidden: usize, input: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            hidden,
            input,
            output,
            w_s: Matrix::seeded(hidden, hidden + input, &mut rng),
            b_s: vec![0.0; hidden],
            w_o: Matrix::seeded(output, hidden + input, &mut rng),
            b_o: vec![0.0; output],
        }
    }

    /// One recurrent step: returns the updated state and the output read off
    /// the updated state.
    pub fn step(&self, s_prev: &[f64], input: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
        if s_prev.len() != self.hidden {
            return Err(ForecastError::DimensionMismatch(format!(
                "state length {} != H {}",
                s_prev.len(),
                self.hidden
            )));
        }
        if input.len() != self.input {
            return Err(ForecastError::DimensionMismatch(format!(
                "input length {} != I {}",
                input.len(),
                self.input
            )));
        }
        let mut x = Vec::with_capacity(self.hidden + self.input);
        x.extend_from_slice(s_prev);
        x.extend_from_slice(input);
        let mut s = vec![0.0; self.hidden];
        self.w_s.affine(&x, &self.b_s, &mut s);
        for v in &mut s {
            *v = relu(*v);
        }
        let mut xo = Vec::with_capacity(self.hidden + self.input);
        xo.extend_from_slice(&s);
        xo.extend_from_slice(input);
        let mut o = vec![0.0; self.output];
        self.w_o.affine(&xo, &self.b_o, &mut o);
        for v in &mut o {
            *v = relu(*v);
        }
        Ok((s, o))
    }

    /// Feeds a window of scalar samples through the cell from a zero state
    /// and returns the final output. Requires I = O = 1.
    pub fn forward_window(&self, window: &[f64]) -> Result<f64, ForecastError> {
        if self.input != 1 || self.output != 1 {
            return Err(ForecastError::DimensionMismatch(format!(
                "scalar window forward requires I=O=1, model has I={} O={}",
                self.input, self.output
            )));
        }
        if window.is_empty() {
            return Err(ForecastError::DimensionMismatch("empty input window".into()));
        }
        let mut s = vec![0.0; self.hidden];
        let mut out = 0.0;
        for (idx, &v) in window.iter().enumerate() {
            let (s_next, o) = self.step(&s, &[v])?;
            s = s_next;
            if idx + 1 == window.len() {
                out = o[0];
            }
        }
        Ok(out)
    }

    fn param_count(&self) -> usize {
        self.w_s.data.len() + self.b_s.len() + self.w_o.data.len() + self.b_o.len()
    }

    /// Forward pass keeping everything backprop needs; relu is applied to
    /// `z_*` copies so the raw pre-activations stay available.
    fn forward_trace(&self, window: &[f64]) -> Result<RnnTrace, ForecastError> {
        if self.input != 1 || self.output != 1 {
            return Err(ForecastError::DimensionMismatch("training requires I=O=1".into()));
        }
        if window.is_empty() {
            return Err(ForecastError::DimensionMismatch("empty input window".into()));
        }
        let h = self.hidden;
        let mut states = Vec::with_capacity(window.len() + 1);
        states.push(vec![0.0; h]);
        let mut z_states = Vec::with_capacity(window.len());
        for &v in window {
            let mut x = states.last().expect("state present").clone();
            x.push(v);
            let mut z = vec![0.0; h];
            self.w_s.affine(&x, &self.b_s, &mut z);
            let s: Vec<f64> = z.iter().map(|&zv| relu(zv)).collect();
            z_states.push(z);
            states.push(s);
        }
        let last_input = *window.last().expect("non-empty window");
        let mut xo = states.last().expect("state present").clone();
        xo.push(last_input);
        let mut z_out = vec![0.0; self.output];
        self.w_o.affine(&xo, &self.b_o, &mut z_out);
        let y = relu(z_out[0]);
        Ok(RnnTrace { states, z_states, z_out, y })
    }
}

struct RnnTrace {
    /// s_0 .. s_T
    states: Vec<Vec<f64>>,
    /// pre-activations of s_1 .. s_T
    z_states: Vec<Vec<f64>>,
    z_out: Vec<f64>,
    y: f64,
}

impl GradientModel for RnnParams {
    fn forward(&self, window: &[f64]) -> Result<f64, ForecastError> {
        self.forward_window(window)
    }

    fn param_vector(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w_s.data);
        p.extend_from_slice(&self.b_s);
        p.extend_from_slice(&self.w_o.data);
        p.extend_from_slice(&self.b_o);
        p
    }

    fn load_param_vector(&mut self, params: &[f64]) -> Result<(), ForecastError> {
        if params.len() != self.param_count() {
            return Err(ForecastError::DimensionMismatch(format!(
                "expected {} params, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let (ws, rest) = params.split_at(self.w_s.data.len());
        let (bs, rest) = rest.split_at(self.b_s.len());
        let (wo, bo) = rest.split_at(self.w_o.data.len());
        self.w_s.data.copy_from_slice(ws);
        self.b_s.copy_from_slice(bs);
        self.w_o.data.copy_from_slice(wo);
        self.b_o.copy_from_slice(bo);
        Ok(())
    }

    fn loss_and_gradient(&self, batch: &[Example]) -> Result<(f64, Vec<f64>), ForecastError> {
        if batch.is_empty() {
            return Err(ForecastError::EmptyDataset);
        }
        let h = self.hidden;
        let n = batch.len() as f64;
        let mut g_ws = Matrix::zeros(h, h + 1);
        let mut g_bs = vec![0.0; h];
        let mut g_wo = Matrix::zeros(1, h + 1);
        let mut g_bo = vec![0.0; 1];
        let mut loss = 0.0;

        for ex in batch {
            let trace = self.forward_trace(&ex.window)?;
            let err = trace.y - ex.target;
            loss += err * err;
            // d(mean loss)/dy for this example
            let dy = 2.0 * err / n;

            // output layer
            let go = dy * relu_grad(trace.z_out[0]);
            let s_last = trace.states.last().expect("state present");
            let last_input = *ex.window.last().expect("non-empty window");
            for (c, sv) in s_last.iter().enumerate() {
                *g_wo.at_mut(0, c) += go * sv;
            }
            *g_wo.at_mut(0, h) += go * last_input;
            g_bo[0] += go;

            // backpropagation through time
            let mut ds: Vec<f64> = (0..h).map(|r| self.w_o.at(0, r) * go).collect();
            for t in (0..ex.window.len()).rev() {
                let z = &trace.z_states[t];
                let s_prev = &trace.states[t];
                let input = ex.window[t];
                let mut ds_prev = vec![0.0; h];
                for r in 0..h {
                    let gs = ds[r] * relu_grad(z[r]);
                    if gs == 0.0 {
                        continue;
                    }
                    for (c, spv) in s_prev.iter().enumerate() {
                        *g_ws.at_mut(r, c) += gs * spv;
                    }
                    *g_ws.at_mut(r, h) += gs * input;
                    g_bs[r] += gs;
                    for (c, d) in ds_prev.iter_mut().enumerate() {
                        *d += self.w_s.at(r, c) * gs;
                    }
                }
                ds = ds_prev;
            }
        }

        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend_from_slice(&g_ws.data);
        grad.extend_from_slice(&g_bs);
        grad.extend_from_slice(&g_wo.data);
        grad.extend_from_slice(&g_bo);
        Ok((loss / n, grad))
    }

    fn preactivations(&self, window: &[f64]) -> Result<Vec<f64>, ForecastError> {
        let trace = self.forward_trace(window)?;
        let mut z: Vec<f64> = trace.z_states.into_iter().flatten().collect();
        z.extend(trace.z_out);
        Ok(z)
    }
}

// ---------------------------------------------------------------------------
// Multi-layer perceptron
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Feed-forward stack; layer l maps `weights.cols()` inputs to
/// `weights.rows()` outputs. The final layer must have width 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<MlpLayer>,
}

impl MlpParams {
    pub fn new(layers: Vec<(Matrix, Vec<f64>, Activation)>) -> Result<Self, ForecastError> {
        if layers.is_empty() {
            return Err(ForecastError::DimensionMismatch("mlp needs at least one layer".into()));
        }
        let mut built = Vec::with_capacity(layers.len());
        let mut prev_out: Option<usize> = None;
        for (i, (weights, bias, activation)) in layers.into_iter().enumerate() {
            if bias.len() != weights.rows() {
                return Err(ForecastError::DimensionMismatch(format!(
                    "layer {i}: bias length {} != rows {}",
                    bias.len(),
                    weights.rows()
                )));
            }
            if let Some(prev) = prev_out {
                if weights.cols() != prev {
                    return Err(ForecastError::DimensionMismatch(format!(
                        "layer {i}: input width {} != previous output {prev}",
                        weights.cols()
                    )));
                }
            }
            prev_out = Some(weights.rows());
            built.push(MlpLayer { weights, bias, activation });
        }
        if prev_out != Some(1) {
            return Err(ForecastError::DimensionMismatch("final layer width must be 1".into()));
        }
        Ok(Self { layers: built })
    }

    /// Relu stack `input_width -> hidden... -> 1` with a relu output clamp.
    pub fn seeded(input_width: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_width];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            layers.push(MlpLayer {
                weights: Matrix::seeded(w[1], w[0], &mut rng),
                bias: vec![0.0; w[1]],
                activation: Activation::Relu,
            });
        }
        Self { layers }
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn forward_window(&self, window: &[f64]) -> Result<f64, ForecastError> {
        let trace = self.forward_trace(window)?;
        Ok(trace.y)
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len() + l.bias.len()).sum()
    }

    fn forward_trace(&self, window: &[f64]) -> Result<MlpTrace, ForecastError> {
        if window.len() != self.input_width() {
            return Err(ForecastError::DimensionMismatch(format!(
                "window length {} != input width {}",
                window.len(),
                self.input_width()
            )));
        }
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(window.to_vec());
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = vec![0.0; layer.weights.rows()];
            layer.weights.affine(activations.last().expect("input present"), &layer.bias, &mut z);
            let a: Vec<f64> = z.iter().map(|&zv| layer.activation.apply(zv)).collect();
            zs.push(z);
            activations.push(a);
        }
        let y = activations.last().expect("output present")[0];
        Ok(MlpTrace { activations, zs, y })
    }
}

struct MlpTrace {
    /// a_0 (the input) .. a_L
    activations: Vec<Vec<f64>>,
    /// pre-activations z_1 .. z_L
    zs: Vec<Vec<f64>>,
    y: f64,
}

impl GradientModel for MlpParams {
    fn forward(&self, window: &[f64]) -> Result<f64, ForecastError> {
        self.forward_window(window)
    }

    fn param_vector(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            p.extend_from_slice(&layer.weights.data);
            p.extend_from_slice(&layer.bias);
        }
        p
    }

    fn load_param_vector(&mut self, params: &[f64]) -> Result<(), ForecastError> {
        if params.len() != self.param_count() {
            return Err(ForecastError::DimensionMismatch(format!(
                "expected {} params, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let wlen = layer.weights.data.len();
            layer.weights.data.copy_from_slice(&params[off..off + wlen]);
            off += wlen;
            let blen = layer.bias.len();
            layer.bias.copy_from_slice(&params[off..off + blen]);
            off += blen;
        }
        Ok(())
    }

    fn loss_and_gradient(&self, batch: &[Example]) -> Result<(f64, Vec<f64>), ForecastError> {
        if batch.is_empty() {
            return Err(ForecastError::EmptyDataset);
        }
        let n = batch.len() as f64;
        let mut g_w: Vec<Matrix> =
            self.layers.iter().map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols())).collect();
        let mut g_b: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
        let mut loss = 0.0;

        for ex in batch {
            let trace = self.forward_trace(&ex.window)?;
            let err = trace.y - ex.target;
            loss += err * err;
            let mut da = vec![2.0 * err / n];
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let z = &trace.zs[l];
                let a_in = &trace.activations[l];
                let mut da_prev = vec![0.0; layer.weights.cols()];
                for r in 0..layer.weights.rows() {
                    let g = da[r] * layer.activation.grad(z[r]);
                    if g == 0.0 {
                        continue;
                    }
                    for (c, av) in a_in.iter().enumerate() {
                        *g_w[l].at_mut(r, c) += g * av;
                    }
                    g_b[l][r] += g;
                    for (c, d) in da_prev.iter_mut().enumerate() {
                        *d += layer.weights.at(r, c) * g;
                    }
                }
                da = da_prev;
            }
        }

        let mut grad = Vec::with_capacity(self.param_count());
        for (w, b) in g_w.into_iter().zip(g_b) {
            grad.extend_from_slice(&w.data);
            grad.extend(b);
        }
        Ok((loss / n, grad))
    }

    fn preactivations(&self, window: &[f64]) -> Result<Vec<f64>, ForecastError> {
        let trace = self.forward_trace(window)?;
        Ok(trace.zs.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rnn_outputs_zero() {
        let rnn = RnnParams::zeros(3, 1, 1);
        let (s, o) = rnn.step(&[0.0; 3], &[5.0]).unwrap();
        assert_eq!(s, vec![0.0; 3]);
        assert_eq!(o, vec![0.0]);
        assert_eq!(rnn.forward_window(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn rnn_step_hand_example() {
        // H=1, I=1: W_s=[[1,1]], b_s=[0], W_o=[[1,0]], b_o=[0]
        let rnn = RnnParams::new(
            1,
            1,
            1,
            Matrix::from_rows(&[vec![1.0, 1.0]]),
            vec![0.0],
            Matrix::from_rows(&[vec![1.0, 0.0]]),
            vec![0.0],
        )
        .unwrap();
        let (s, o) = rnn.step(&[0.5], &[0.25]).unwrap();
        assert_eq!(s, vec![0.75]);
        assert_eq!(o, vec![0.75]);
    }

    #[test]
    fn rnn_negative_preactivations_clamp_to_zero() {
        let rnn = RnnParams::new(
            1,
            1,
            1,
            Matrix::from_rows(&[vec![-1.0, -1.0]]),
            vec![-0.5],
            Matrix::from_rows(&[vec![-2.0, -2.0]]),
            vec![-0.1],
        )
        .unwrap();
        let (s, o) = rnn.step(&[0.5], &[0.25]).unwrap();
        assert_eq!(s, vec![0.0]);
        assert_eq!(o, vec![0.0]);
    }

    #[test]
    fn rnn_two_step_manual_unroll() {
        let rnn = RnnParams::new(
            1,
            1,
            1,
            Matrix::from_rows(&[vec![0.5, 1.0]]),
            vec![0.1],
            Matrix::from_rows(&[vec![2.0, -1.0]]),
            vec![0.05],
        )
        .unwrap();
        // s1 = relu(0.5*0 + 1.0*0.3 + 0.1) = 0.4
        // s2 = relu(0.5*0.4 + 1.0*0.2 + 0.1) = 0.5
        // o  = relu(2.0*0.5 - 1.0*0.2 + 0.05) = 0.85
        let y = rnn.forward_window(&[0.3, 0.2]).unwrap();
        assert!((y - 0.85).abs() < 1e-15);
    }

    #[test]
    fn rnn_forward_is_deterministic() {
        let rnn = RnnParams::seeded(8, 1, 1, 42);
        let w: Vec<f64> = (0..20).map(|i| (i as f64) / 20.0).collect();
        assert_eq!(rnn.forward_window(&w).unwrap(), rnn.forward_window(&w).unwrap());
    }

    #[test]
    fn rnn_dimension_mismatch() {
        let rnn = RnnParams::zeros(3, 1, 1);
        assert!(rnn.step(&[0.0; 2], &[1.0]).is_err());
        assert!(rnn.step(&[0.0; 3], &[1.0, 2.0]).is_err());
        let multi = RnnParams::zeros(3, 2, 1);
        assert!(multi.forward_window(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mlp = MlpParams::new(vec![
            (Matrix::zeros(4, 3), vec![0.0; 4], Activation::Relu),
            (Matrix::zeros(1, 4), vec![0.0], Activation::Relu),
        ])
        .unwrap();
        assert_eq!(mlp.forward_window(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn identity_mean_layer() {
        let mlp = MlpParams::new(vec![(
            Matrix::from_rows(&[vec![0.25; 4]]),
            vec![0.0],
            Activation::Identity,
        )])
        .unwrap();
        let y = mlp.forward_window(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((y - 2.5).abs() < 1e-15);
    }

    #[test]
    fn mlp_rejects_wrong_window_length() {
        let mlp = MlpParams::seeded(5, &[4], 1);
        assert!(mlp.forward_window(&[1.0; 4]).is_err());
    }

    #[test]
    fn mlp_rejects_non_chaining_layers() {
        let bad = MlpParams::new(vec![
            (Matrix::zeros(4, 3), vec![0.0; 4], Activation::Relu),
            (Matrix::zeros(1, 5), vec![0.0], Activation::Relu),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn dead_output_has_zero_gradient() {
        // output bias is strongly negative: y = 0 and stays 0 under small
        // perturbations, so every upstream gradient must be 0
        let mut mlp = MlpParams::seeded(3, &[4], 7);
        let mut p = mlp.param_vector();
        let n = p.len();
        p[n - 1] = -100.0;
        mlp.load_param_vector(&p).unwrap();
        let batch = [Example::new(vec![0.3, 0.1, 0.2], 0.8)];
        let (_, grad) = mlp.loss_and_gradient(&batch).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_gradient_is_mean_of_per_example_gradients() {
        let rnn = RnnParams::seeded(4, 1, 1, 3);
        let batch: Vec<Example> = (0..5)
            .map(|i| {
                let w: Vec<f64> = (0..6).map(|j| ((i * 7 + j) as f64 * 0.13).sin()).collect();
                Example::new(w, (i as f64) * 0.1)
            })
            .collect();
        let (_, g_batch) = rnn.loss_and_gradient(&batch).unwrap();
        let mut mean = vec![0.0; g_batch.len()];
        for ex in &batch {
            let (_, g) = rnn.loss_and_gradient(std::slice::from_ref(ex)).unwrap();
            for (m, gv) in mean.iter_mut().zip(&g) {
                *m += gv / batch.len() as f64;
            }
        }
        for (a, b) in g_batch.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn param_vector_roundtrip() {
        let rnn = RnnParams::seeded(4, 1, 1, 11);
        let mut other = RnnParams::zeros(4, 1, 1);
        other.load_param_vector(&rnn.param_vector()).unwrap();
        assert_eq!(rnn, other);
        let mlp = MlpParams::seeded(6, &[5, 4], 11);
        let mut other = MlpParams::seeded(6, &[5, 4], 99);
        other.load_param_vector(&mlp.param_vector()).unwrap();
        assert_eq!(mlp, other);
    }
}
