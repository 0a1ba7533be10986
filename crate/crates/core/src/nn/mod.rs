//! Minimal dense-network engine: ReLU MLP with a 2-way softmax head,
//! numerically stable cross-entropy, and exact reverse-mode gradients with
//! respect to both parameters and inputs. The input gradients are what the
//! evasion attacks consume.
//!
//! Batches are processed in fixed-size row chunks that may run on worker
//! threads; chunk boundaries and reduction order are constants, so results
//! are bitwise identical no matter how many threads execute.

mod adam;
mod model_io;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use model_io::{load_model, save_model, ModelMeta};
pub use train::{evaluate, train, Confusion, Evaluation, TrainConfig, TrainedModel};

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::Real;

/// Output classes: normal (0) and anomaly (1).
pub const OUTPUT_CLASSES: usize = 2;

/// Row-chunk width for gradient computation.
const GRAD_CHUNK: usize = 64;
/// Row-chunk width for inference.
const INFER_CHUNK: usize = 512;

/// One fully connected layer: `z = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in` weight matrix.
    pub weights: Array2<Real>,
    /// `out` bias vector.
    pub biases: Array1<Real>,
}

impl DenseLayer {
    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// A ReLU multilayer perceptron with a softmax head over two classes.
/// Dropout (inverted, so inference needs no rescaling) applies after each
/// hidden activation and only when training masks are supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub dropout_rate: f64,
}

/// Parameter gradients plus the gradient with respect to the input batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Per-layer weight gradients (empty when parameters were skipped).
    pub weights: Vec<Array2<Real>>,
    /// Per-layer bias gradients (empty when parameters were skipped).
    pub biases: Vec<Array1<Real>>,
    /// d loss / d input, one row per batch row.
    pub input: Array2<Real>,
}

/// Output of a single-sample forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub logits: Array1<Real>,
    pub probabilities: Array1<Real>,
    pub predicted_class: usize,
}

impl Mlp {
    /// He-uniform initialized network with the given layer widths
    /// (`[input, hidden..., 2]`) and zero biases.
    pub fn new(dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(CoreError::config("a network needs at least input and output widths"));
        }
        if *dims.last().unwrap() != OUTPUT_CLASSES {
            return Err(CoreError::config(format!(
                "output width must be {OUTPUT_CLASSES}, got {}",
                dims.last().unwrap()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(CoreError::config("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(CoreError::config(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let weights = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-limit..limit) as Real
            });
            layers.push(DenseLayer {
                weights,
                biases: Array1::zeros(fan_out),
            });
        }
        Ok(Mlp { layers, dropout_rate })
    }

    /// Build a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<DenseLayer>, dropout_rate: f64) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(CoreError::config("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(CoreError::shape(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        if layers.last().unwrap().output_dim() != OUTPUT_CLASSES {
            return Err(CoreError::shape(format!(
                "final layer must output {OUTPUT_CLASSES} classes"
            )));
        }
        Ok(Mlp { layers, dropout_rate })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    /// Layer widths including input and output: `[in, hidden..., 2]`.
    pub fn architecture(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(DenseLayer::output_dim));
        dims
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(CoreError::shape(format!(
                "input has {} features, model expects {}",
                cols,
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Deterministic forward pass (dropout off). Returns logits `Z(x)`.
    pub fn forward_infer(&self, x: ArrayView2<Real>) -> Result<Array2<Real>> {
        self.check_input(x.ncols())?;
        if x.nrows() <= INFER_CHUNK {
            return Ok(self.infer_chunk(x));
        }
        let chunks: Vec<ArrayView2<Real>> = x.axis_chunks_iter(Axis(0), INFER_CHUNK).collect();
        let parts: Vec<Array2<Real>> = chunks.into_par_iter().map(|c| self.infer_chunk(c)).collect();
        let views: Vec<ArrayView2<Real>> = parts.iter().map(Array2::view).collect();
        Ok(concatenate(Axis(0), &views).expect("chunk widths match"))
    }

    fn infer_chunk(&self, x: ArrayView2<Real>) -> Array2<Real> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            if l < last {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        a
    }

    /// Single-sample inference: logits, softmax probabilities, argmax class.
    pub fn predict(&self, x: ArrayView1<Real>) -> Result<Prediction> {
        let batch = x.insert_axis(Axis(0));
        let logits = self.forward_infer(batch)?;
        let logits = logits.row(0).to_owned();
        let probabilities = softmax_row(logits.view());
        let predicted_class = argmax(logits.view());
        Ok(Prediction {
            logits,
            probabilities,
            predicted_class,
        })
    }

    /// Per-row cross-entropy loss at `x` (dropout off).
    pub fn loss_rows(&self, x: ArrayView2<Real>, y: ArrayView2<Real>) -> Result<Array1<Real>> {
        let logits = self.forward_infer(x)?;
        Ok(cross_entropy_from_logits(logits.view(), y))
    }

    /// Sample inverted-dropout masks for every hidden layer of a batch.
    /// Entries are `1 / keep` with probability `keep = 1 - dropout_rate`,
    /// else 0. Returns `None` when the rate is zero.
    pub fn sample_masks(&self, batch_rows: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Array2<Real>>> {
        if self.dropout_rate == 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout_rate;
        let scale = (1.0 / keep) as Real;
        let masks = self.layers[..self.layers.len() - 1]
            .iter()
            .map(|layer| {
                Array2::from_shape_fn((batch_rows, layer.output_dim()), |_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Some(masks)
    }

    /// Forward + reverse pass over a batch.
    ///
    /// Returns gradients of the summed per-row loss scaled by `scale`
    /// (`1/batch` for mean-loss training, `1` for per-sample input
    /// gradients) together with the unscaled per-row losses. `masks`
    /// enables dropout; `with_params` controls whether the (more
    /// expensive) parameter gradients are produced.
    pub fn batch_gradients(
        &self,
        x: ArrayView2<Real>,
        y: ArrayView2<Real>,
        masks: Option<&[Array2<Real>]>,
        scale: Real,
        with_params: bool,
    ) -> Result<(Gradients, Array1<Real>)> {
        self.check_input(x.ncols())?;
        if y.nrows() != x.nrows() || y.ncols() != OUTPUT_CLASSES {
            return Err(CoreError::shape(format!(
                "labels must be {} x {}, got {} x {}",
                x.nrows(),
                OUTPUT_CLASSES,
                y.nrows(),
                y.ncols()
            )));
        }
        if let Some(masks) = masks {
            if masks.len() != self.layers.len() - 1 {
                return Err(CoreError::shape("one dropout mask per hidden layer required"));
            }
            for (mask, layer) in masks.iter().zip(&self.layers) {
                if mask.dim() != (x.nrows(), layer.output_dim()) {
                    return Err(CoreError::shape("dropout mask shape mismatch"));
                }
            }
        }

        let n = x.nrows();
        if n <= GRAD_CHUNK {
            let mask_views: Option<Vec<ArrayView2<Real>>> =
                masks.map(|ms| ms.iter().map(Array2::view).collect());
            let (grads, losses) = self.grad_chunk(x, y, mask_views.as_deref(), scale, with_params);
            return Ok((grads, losses));
        }

        let ranges: Vec<(usize, usize)> = (0..n)
            .step_by(GRAD_CHUNK)
            .map(|start| (start, (start + GRAD_CHUNK).min(n)))
            .collect();
        let parts: Vec<(Gradients, Array1<Real>)> = ranges
            .into_par_iter()
            .map(|(start, end)| {
                let xc = x.slice(s![start..end, ..]);
                let yc = y.slice(s![start..end, ..]);
                let mask_views: Option<Vec<ArrayView2<Real>>> =
                    masks.map(|ms| ms.iter().map(|m| m.slice(s![start..end, ..])).collect());
                self.grad_chunk(xc, yc, mask_views.as_deref(), scale, with_params)
            })
            .collect();

        // Fixed-order reduction keeps the result independent of scheduling.
        let mut parts = parts.into_iter();
        let (mut grads, first_losses) = parts.next().expect("at least one chunk");
        let mut losses = first_losses.to_vec();
        let mut inputs = vec![grads.input];
        for (g, l) in parts {
            if with_params {
                for (acc, w) in grads.weights.iter_mut().zip(&g.weights) {
                    *acc += w;
                }
                for (acc, b) in grads.biases.iter_mut().zip(&g.biases) {
                    *acc += b;
                }
            }
            inputs.push(g.input);
            losses.extend_from_slice(l.as_slice().expect("contiguous"));
        }
        let views: Vec<ArrayView2<Real>> = inputs.iter().map(Array2::view).collect();
        grads.input = concatenate(Axis(0), &views).expect("chunk widths match");
        Ok((grads, Array1::from_vec(losses)))
    }

    fn grad_chunk(
        &self,
        x: ArrayView2<Real>,
        y: ArrayView2<Real>,
        masks: Option<&[ArrayView2<Real>]>,
        scale: Real,
        with_params: bool,
    ) -> (Gradients, Array1<Real>) {
        let depth = self.layers.len();
        // Forward, caching the input of every layer and each pre-activation.
        let mut inputs: Vec<Array2<Real>> = Vec::with_capacity(depth);
        let mut pre_acts: Vec<Array2<Real>> = Vec::with_capacity(depth - 1);
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            inputs.push(a);
            if l < depth - 1 {
                let mut h = z.mapv(relu);
                if let Some(masks) = masks {
                    h *= &masks[l];
                }
                pre_acts.push(z);
                a = h;
            } else {
                a = z; // logits
            }
        }
        let logits = a;
        let losses = cross_entropy_from_logits(logits.view(), y);
        let probs = softmax_rows(logits.view());

        // Output-layer local gradient: softmax(z) - y.
        let mut delta = (&probs - &y) * scale;
        let mut weight_grads: Vec<Array2<Real>> = Vec::new();
        let mut bias_grads: Vec<Array1<Real>> = Vec::new();
        if with_params {
            weight_grads = vec![Array2::zeros((0, 0)); depth];
            bias_grads = vec![Array1::zeros(0); depth];
        }
        let mut input_grad = Array2::zeros((0, 0));
        for l in (0..depth).rev() {
            if with_params {
                weight_grads[l] = delta.t().dot(&inputs[l]);
                bias_grads[l] = delta.sum_axis(Axis(0));
            }
            let mut upstream = delta.dot(&self.layers[l].weights);
            if l == 0 {
                input_grad = upstream;
                break;
            }
            if let Some(masks) = masks {
                upstream *= &masks[l - 1];
            }
            // ReLU gate; the subgradient at exactly zero is taken as zero.
            upstream.zip_mut_with(&pre_acts[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = upstream;
        }
        (
            Gradients {
                weights: weight_grads,
                biases: bias_grads,
                input: input_grad,
            },
            losses,
        )
    }

    /// Per-sample gradients of the loss with respect to the inputs, plus
    /// per-sample losses. Dropout is off: attack gradients are evaluated in
    /// inference mode.
    pub fn input_gradients(
        &self,
        x: ArrayView2<Real>,
        y: ArrayView2<Real>,
    ) -> Result<(Array2<Real>, Array1<Real>)> {
        let (grads, losses) = self.batch_gradients(x, y, None, 1.0, false)?;
        Ok((grads.input, losses))
    }
}

fn relu(v: Real) -> Real {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Index of the largest entry (first on ties).
pub fn argmax(row: ArrayView1<Real>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of one logit row.
pub fn softmax_row(logits: ArrayView1<Real>) -> Array1<Real> {
    let max = logits.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let exp: Array1<Real> = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<Real>) -> Array2<Real> {
    let mut out = Array2::zeros(logits.raw_dim());
    for (mut o, row) in out.rows_mut().into_iter().zip(logits.rows()) {
        o.assign(&softmax_row(row));
    }
    out
}

/// Per-row categorical cross-entropy computed in fused log-softmax form:
/// `J = logsumexp(z) - z . y`. Never evaluates `log(0)`.
pub fn cross_entropy_from_logits(logits: ArrayView2<Real>, y: ArrayView2<Real>) -> Array1<Real> {
    let mut losses = Array1::zeros(logits.nrows());
    for (i, (z, yy)) in logits.rows().into_iter().zip(y.rows()).enumerate() {
        let max = z.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<Real>().ln();
        let dot: Real = z.iter().zip(yy.iter()).map(|(&a, &b)| a * b).sum();
        losses[i] = lse - dot;
    }
    losses
}

/// Plain-definition cross-entropy `-sum(y_i ln p_i)` over probabilities.
/// Terms with `y_i == 0` contribute nothing regardless of `p_i`.
pub fn cross_entropy_from_probs(probs: ArrayView1<Real>, y: ArrayView1<Real>) -> Real {
    probs
        .iter()
        .zip(y.iter())
        .map(|(&p, &yy)| if yy == 0.0 { 0.0 } else { -yy * p.ln() })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn tol() -> Real {
        if cfg!(feature = "f32") {
            1e-4
        } else {
            1e-10
        }
    }

    #[test]
    fn zero_model_predicts_fifty_fifty() {
        let model = Mlp::from_layers(
            vec![DenseLayer {
                weights: Array2::zeros((2, 3)),
                biases: Array1::zeros(2),
            }],
            0.0,
        )
        .unwrap();
        let p = model.predict(array![1.0, -2.0, 3.0].view()).unwrap();
        assert_eq!(p.probabilities[0], 0.5);
        assert_eq!(p.probabilities[1], 0.5);
    }

    #[test]
    fn single_linear_layer_matches_hand_computation() {
        // z = W x + b with hand-set 2x2 weights.
        let model = Mlp::from_layers(
            vec![DenseLayer {
                weights: array![[1.0, 2.0], [3.0, -4.0]],
                biases: array![0.5, -1.0],
            }],
            0.0,
        )
        .unwrap();
        let p = model.predict(array![2.0, 1.0].view()).unwrap();
        assert_abs_diff_eq!(p.logits[0], 1.0 * 2.0 + 2.0 * 1.0 + 0.5, epsilon = tol());
        assert_abs_diff_eq!(p.logits[1], 3.0 * 2.0 - 4.0 * 1.0 - 1.0, epsilon = tol());
    }

    #[test]
    fn softmax_stays_in_simplex_for_extreme_logits() {
        for logits in [
            array![1e6, -1e6],
            array![-1e6, -1e6],
            array![1e6, 1e6],
            array![0.0, 709.0],
        ] {
            let p = softmax_row(logits.view());
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)), "{p:?}");
            assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12 as Real);
        }
    }

    #[test]
    fn perfect_probability_gives_zero_loss_and_uniform_gives_ln2() {
        assert_eq!(
            cross_entropy_from_probs(array![1.0, 0.0].view(), array![1.0, 0.0].view()),
            0.0
        );
        let ln2 = (2.0 as Real).ln();
        assert_abs_diff_eq!(
            cross_entropy_from_probs(array![0.5, 0.5].view(), array![0.0, 1.0].view()),
            ln2,
            epsilon = tol()
        );
        assert_abs_diff_eq!(
            cross_entropy_from_logits(array![[0.0, 0.0]].view(), array![[1.0, 0.0]].view())[0],
            ln2,
            epsilon = tol()
        );
    }

    #[test]
    fn fused_loss_matches_naive_formula_on_random_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let z = array![[
                rng.random_range(-30.0..30.0) as Real,
                rng.random_range(-30.0..30.0) as Real
            ]];
            let y = if rng.random::<bool>() {
                array![[1.0, 0.0]]
            } else {
                array![[0.0, 1.0]]
            };
            let fused = cross_entropy_from_logits(z.view(), y.view())[0];
            let naive = cross_entropy_from_probs(softmax_row(z.row(0)).view(), y.row(0));
            assert_abs_diff_eq!(fused, naive, epsilon = tol());
        }
    }

    #[test]
    fn output_layer_gradient_is_softmax_minus_y() {
        // z = (0,0), y = (1,0): dJ/dz = (-0.5, 0.5). With an identity-ish
        // single layer and x = e_1 the bias gradient equals dJ/dz.
        let model = Mlp::from_layers(
            vec![DenseLayer {
                weights: Array2::zeros((2, 2)),
                biases: Array1::zeros(2),
            }],
            0.0,
        )
        .unwrap();
        let x = array![[1.0, 0.0]];
        let y = array![[1.0, 0.0]];
        let (grads, _) = model.batch_gradients(x.view(), y.view(), None, 1.0, true).unwrap();
        assert_abs_diff_eq!(grads.biases[0][0], -0.5, epsilon = tol());
        assert_abs_diff_eq!(grads.biases[0][1], 0.5, epsilon = tol());
    }

    #[test]
    fn single_layer_input_gradient_matches_closed_form() {
        // For logits z = W x + b: dJ/dx = W^T (softmax(z) - y).
        let model = Mlp::from_layers(
            vec![DenseLayer {
                weights: array![[0.7, -1.2, 0.4], [-0.3, 0.9, 1.1]],
                biases: array![0.2, -0.5],
            }],
            0.0,
        )
        .unwrap();
        let x = array![[0.3, -0.8, 1.5]];
        let y = array![[0.0, 1.0]];
        let (dx, _) = model.input_gradients(x.view(), y.view()).unwrap();
        let logits = model.forward_infer(x.view()).unwrap();
        let p = softmax_row(logits.row(0));
        let residual = array![p[0] - 0.0, p[1] - 1.0];
        let expected = model.layers[0].weights.t().dot(&residual);
        for j in 0..3 {
            assert_abs_diff_eq!(dx[[0, j]], expected[j], epsilon = tol());
        }
    }

    #[test]
    fn chunked_and_unchunked_inference_agree() {
        let model = Mlp::new(&[5, 8, 2], 0.0, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((INFER_CHUNK * 2 + 17, 5), |_| {
            rng.random_range(-2.0..2.0) as Real
        });
        let full = model.forward_infer(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = model.predict(row).unwrap();
            assert_eq!(single.logits[0], full[[i, 0]], "row {i}");
            assert_eq!(single.logits[1], full[[i, 1]], "row {i}");
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let model = Mlp::new(&[4, 3, 2], 0.0, 0).unwrap();
        let x = Array2::<Real>::zeros((1, 5));
        match model.forward_infer(x.view()) {
            Err(CoreError::Shape(_)) => {}
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn argmax_of_logits_equals_argmax_of_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = Mlp::new(&[6, 10, 2], 0.0, 5).unwrap();
        for _ in 0..100 {
            let x = Array1::from_shape_fn(6, |_| rng.random_range(-3.0..3.0) as Real);
            let p = model.predict(x.view()).unwrap();
            assert_eq!(argmax(p.logits.view()), argmax(p.probabilities.view()));
            assert_eq!(p.predicted_class, argmax(p.logits.view()));
        }
    }
}
