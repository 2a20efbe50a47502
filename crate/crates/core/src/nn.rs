//! Minimal multilayer perceptron with manual backpropagation and Adam.
//!
//! The networks in this crate are small (widest layer 128), so gradients
//! are computed by hand rather than through an autodiff dependency; that
//! also keeps the Jacobians needed by the adaptation laws directly
//! accessible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
    LeakyRelu,
}

const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// Fully connected feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Serialized form: layer widths, activation tags, and row-major weights.
#[derive(Serialize, Deserialize)]
struct MlpWire {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut widths = vec![self.input_dim()];
        widths.extend(self.layers.iter().map(|l| l.weights.nrows()));
        MlpWire {
            widths,
            activations: self.layers.iter().map(|l| l.activation).collect(),
            weights: self
                .layers
                .iter()
                .map(|l| {
                    let mut flat = Vec::with_capacity(l.weights.len());
                    for r in 0..l.weights.nrows() {
                        for c in 0..l.weights.ncols() {
                            flat.push(l.weights[(r, c)]);
                        }
                    }
                    flat
                })
                .collect(),
            biases: self.layers.iter().map(|l| l.bias.iter().copied().collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let wire = MlpWire::deserialize(d)?;
        if wire.widths.len() < 2
            || wire.activations.len() != wire.widths.len() - 1
            || wire.weights.len() != wire.activations.len()
            || wire.biases.len() != wire.activations.len()
        {
            return Err(D::Error::custom("inconsistent network shape"));
        }
        let mut layers = Vec::new();
        for i in 0..wire.activations.len() {
            let (rows, cols) = (wire.widths[i + 1], wire.widths[i]);
            if wire.weights[i].len() != rows * cols || wire.biases[i].len() != rows {
                return Err(D::Error::custom("weight block size mismatch"));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_iterator(rows, cols, wire.weights[i].iter().copied()),
                bias: DVector::from_column_slice(&wire.biases[i]),
                activation: wire.activations[i],
            });
        }
        Ok(Mlp { layers })
    }
}

/// Activations cached by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (length = layer count).
    inputs: Vec<DVector<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<DVector<f64>>,
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                        DVector::zeros(l.bias.len()),
                    )
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.0 += &b.0;
            a.1 += &b.1;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in self.layers.iter_mut() {
            *w *= factor;
            *b *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|x| x.is_finite()) && b.iter().all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// Glorot-uniform initialization: weights drawn from
    /// `U(±√(6/(fan_in + fan_out)))`, biases zero.
    pub fn glorot_init(
        widths: &[usize],
        activations: &[Activation],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid_argument(
                "network needs at least input and output widths",
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid_argument("zero-width layer"));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::invalid_argument(format!(
                "expected {} activation tags, got {}",
                widths.len() - 1,
                activations.len()
            )));
        }
        let mut layers = Vec::new();
        for i in 0..activations.len() {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layers.push(Layer {
                weights: DMatrix::from_fn(fan_out, fan_in, |_, _| {
                    rng.random_range(-limit..=limit)
                }),
                bias: DVector::zeros(fan_out),
                activation: activations[i],
            });
        }
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid_argument("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[1].weights.ncols() != w[0].weights.nrows() {
                return Err(Error::invalid_argument("incompatible layer dimensions"));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<(DVector<f64>, ForwardCache)> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let z = &layer.weights * &x + &layer.bias;
            inputs.push(x);
            let y = z.map(|v| layer.activation.value(v));
            preacts.push(z);
            x = y;
        }
        Ok((x, ForwardCache { inputs, preacts }))
    }

    /// Plain inference without gradient caching.
    pub fn infer(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid_argument(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = input.clone();
        for layer in &self.layers {
            let z = &layer.weights * &x + &layer.bias;
            x = z.map(|v| layer.activation.value(v));
        }
        Ok(x)
    }

    /// Backpropagate `dloss_doutput` through the cached forward pass.
    /// Returns the parameter gradients and the loss gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dloss_doutput: &DVector<f64>,
    ) -> Result<(Gradients, DVector<f64>)> {
        if cache.inputs.len() != self.layers.len() || cache.preacts.len() != self.layers.len() {
            return Err(Error::InvalidState(
                "forward cache does not match network depth".into(),
            ));
        }
        if dloss_doutput.len() != self.output_dim() {
            return Err(Error::invalid_argument("output gradient dimension mismatch"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dloss_doutput.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.preacts[idx];
            if z.len() != layer.bias.len() || cache.inputs[idx].len() != layer.weights.ncols() {
                return Err(Error::InvalidState(
                    "forward cache does not match network shape".into(),
                ));
            }
            // δ ← δ ⊙ σ'(z)
            let mut local = delta;
            for i in 0..local.len() {
                local[i] *= layer.activation.derivative(z[i]);
            }
            let dw = &local * cache.inputs[idx].transpose();
            let db = local.clone();
            delta = layer.weights.transpose() * &local;
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Backpropagate a gradient taken with respect to the final layer's
    /// pre-activation (the logit). Losses that fold the output
    /// nonlinearity into their gradient (e.g. cross-entropy through a
    /// sigmoid) stay numerically stable this way.
    pub fn backward_from_logit(
        &self,
        cache: &ForwardCache,
        dloss_dlogit: &DVector<f64>,
    ) -> Result<(Gradients, DVector<f64>)> {
        if cache.inputs.len() != self.layers.len() || cache.preacts.len() != self.layers.len() {
            return Err(Error::InvalidState(
                "forward cache does not match network depth".into(),
            ));
        }
        if dloss_dlogit.len() != self.output_dim() {
            return Err(Error::invalid_argument("logit gradient dimension mismatch"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dloss_dlogit.clone();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.preacts[idx];
            let mut local = delta;
            if idx != last {
                for i in 0..local.len() {
                    local[i] *= layer.activation.derivative(z[i]);
                }
            }
            let dw = &local * cache.inputs[idx].transpose();
            let db = local.clone();
            delta = layer.weights.transpose() * &local;
            grads.push((dw, db));
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Jacobian of the output with respect to the selected input
    /// coordinates, by forward-mode tangent propagation (one tangent
    /// column per selected coordinate).
    pub fn jacobian_wrt_inputs(&self, input: &DVector<f64>, cols: &[usize]) -> Result<DMatrix<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::invalid_argument("input dimension mismatch"));
        }
        if cols.iter().any(|&c| c >= input.len()) {
            return Err(Error::invalid_argument("tangent column out of range"));
        }
        let mut x = input.clone();
        let mut tangents = DMatrix::zeros(input.len(), cols.len());
        for (j, &c) in cols.iter().enumerate() {
            tangents[(c, j)] = 1.0;
        }
        for layer in &self.layers {
            let z = &layer.weights * &x + &layer.bias;
            let mut jz = &layer.weights * tangents;
            for r in 0..jz.nrows() {
                let d = layer.activation.derivative(z[r]);
                for c in 0..jz.ncols() {
                    jz[(r, c)] *= d;
                }
            }
            x = z.map(|v| layer.activation.value(v));
            tangents = jz;
        }
        Ok(tangents)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// First/second-moment state for the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<(DMatrix<f64>, DVector<f64>)>,
    v: Vec<(DMatrix<f64>, DVector<f64>)>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let zeros: Vec<_> = net
            .layers
            .iter()
            .map(|l| {
                (
                    DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    DVector::zeros(l.bias.len()),
                )
            })
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Hyperparameters of one Adam update.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction, descending along `grads`.
pub fn adam_step(
    net: &mut Mlp,
    grads: &Gradients,
    state: &mut AdamState,
    params: &AdamParams,
) -> Result<()> {
    if grads.layers.len() != net.layers.len() {
        return Err(Error::invalid_argument("gradient layer count mismatch"));
    }
    if !grads.is_finite() {
        return Err(Error::invalid_argument("non-finite gradient"));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - params.beta1.powi(t);
    let bc2 = 1.0 - params.beta2.powi(t);
    for (idx, layer) in net.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[idx];
        if gw.shape() != layer.weights.shape() || gb.len() != layer.bias.len() {
            return Err(Error::invalid_argument("gradient shape mismatch"));
        }
        let (mw, mb) = &mut state.m[idx];
        let (vw, vb) = &mut state.v[idx];
        for r in 0..gw.nrows() {
            for c in 0..gw.ncols() {
                let g = gw[(r, c)];
                mw[(r, c)] = params.beta1 * mw[(r, c)] + (1.0 - params.beta1) * g;
                vw[(r, c)] = params.beta2 * vw[(r, c)] + (1.0 - params.beta2) * g * g;
                let m_hat = mw[(r, c)] / bc1;
                let v_hat = vw[(r, c)] / bc2;
                layer.weights[(r, c)] -= params.lr * m_hat / (v_hat.sqrt() + params.epsilon);
            }
        }
        for i in 0..gb.len() {
            let g = gb[i];
            mb[i] = params.beta1 * mb[i] + (1.0 - params.beta1) * g;
            vb[i] = params.beta2 * vb[i] + (1.0 - params.beta2) * g * g;
            let m_hat = mb[i] / bc1;
            let v_hat = vb[i] / bc2;
            layer.bias[i] -= params.lr * m_hat / (v_hat.sqrt() + params.epsilon);
        }
    }
    Ok(())
}

/// Aggregate relative discrepancy `‖a − b‖ / (‖a‖ + ‖b‖ + ε)` used by the
/// gradient-checking tests.
pub fn relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    diff.sqrt() / (na.sqrt() + nb.sqrt() + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(widths: &[usize], acts: &[Activation], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::glorot_init(widths, acts, &mut rng).unwrap()
    }

    fn random_vector(len: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Scalar loss ½‖y − target‖² and its output gradient.
    fn loss_and_grad(y: &DVector<f64>, target: &DVector<f64>) -> (f64, DVector<f64>) {
        let diff = y - target;
        (0.5 * diff.norm_squared(), diff)
    }

    fn flatten_params(net: &Mlp) -> Vec<f64> {
        let mut out = Vec::new();
        for l in net.layers() {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    fn flatten_grads(g: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &g.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    fn set_params(net: &mut Mlp, flat: &[f64]) {
        let mut it = flat.iter();
        let layers = net.layers.len();
        for idx in 0..layers {
            let l = &mut net.layers[idx];
            for i in 0..l.weights.len() {
                l.weights[i] = *it.next().unwrap();
            }
            for i in 0..l.bias.len() {
                l.bias[i] = *it.next().unwrap();
            }
        }
    }

    #[test]
    fn glorot_variance_and_determinism() {
        let widths = [4usize, 8, 2];
        let acts = [Activation::Tanh, Activation::Identity];
        let mut var_sum = 0.0;
        let draws = 1000;
        for seed in 0..draws {
            let net = random_net(&widths, &acts, seed);
            let w = &net.layers()[0].weights;
            let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
            var_sum += w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w.len() as f64;
            assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        }
        let var = var_sum / draws as f64;
        let expected = 2.0 / (4.0 + 8.0);
        assert!(
            (var - expected).abs() < 0.2 * expected,
            "variance {var} vs expected {expected}"
        );

        let a = random_net(&widths, &acts, 7);
        let b = random_net(&widths, &acts, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn glorot_rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Mlp::glorot_init(&[], &[], &mut rng).is_err());
        assert!(Mlp::glorot_init(&[4], &[], &mut rng).is_err());
        assert!(Mlp::glorot_init(&[4, 2], &[], &mut rng).is_err());
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer {
            weights: DMatrix::identity(3, 3),
            bias: DVector::zeros(3),
            activation: Activation::Identity,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let x = DVector::from_column_slice(&[0.3, -1.2, 2.5]);
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_weights_tanh_outputs_zero() {
        let layer = Layer {
            weights: DMatrix::zeros(2, 4),
            bias: DVector::zeros(2),
            activation: Activation::Tanh,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let (y, _) = net.forward(&random_vector(4, 1)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = random_net(&[3, 2], &[Activation::Tanh], 0);
        assert!(net.forward(&random_vector(4, 0)).is_err());
    }

    #[test]
    fn gradient_check_all_activations() {
        let cases: [(&[usize], &[Activation]); 4] = [
            (&[4, 8, 2], &[Activation::Tanh, Activation::Identity]),
            (&[5, 6, 1], &[Activation::LeakyRelu, Activation::Sigmoid]),
            (
                &[3, 7, 5, 2],
                &[Activation::Tanh, Activation::Sigmoid, Activation::Identity],
            ),
            (&[6, 4], &[Activation::Tanh]),
        ];
        for (case, (widths, acts)) in cases.iter().enumerate() {
            let net = random_net(widths, acts, 100 + case as u64);
            let x = random_vector(widths[0], 200 + case as u64);
            let target = random_vector(*widths.last().unwrap(), 300 + case as u64);

            let (y, cache) = net.forward(&x).unwrap();
            let (_, dy) = loss_and_grad(&y, &target);
            let (grads, dx) = net.backward(&cache, &dy).unwrap();

            // parameter gradients vs central finite differences
            let h = 1e-5;
            let base = flatten_params(&net);
            let mut numeric = Vec::with_capacity(base.len());
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus[i] += h;
                let mut minus = base.clone();
                minus[i] -= h;
                let mut np = net.clone();
                set_params(&mut np, &plus);
                let (yp, _) = np.forward(&x).unwrap();
                let mut nm = net.clone();
                set_params(&mut nm, &minus);
                let (ym, _) = nm.forward(&x).unwrap();
                let (lp, _) = loss_and_grad(&yp, &target);
                let (lm, _) = loss_and_grad(&ym, &target);
                numeric.push((lp - lm) / (2.0 * h));
            }
            let analytic = flatten_grads(&grads);
            let err = relative_discrepancy(&analytic, &numeric);
            assert!(err < 1e-5, "case {case}: parameter gradient error {err}");

            // input gradient vs central finite differences
            let mut numeric_dx = Vec::with_capacity(x.len());
            for i in 0..x.len() {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let (yp, _) = net.forward(&xp).unwrap();
                let (ym, _) = net.forward(&xm).unwrap();
                let (lp, _) = loss_and_grad(&yp, &target);
                let (lm, _) = loss_and_grad(&ym, &target);
                numeric_dx.push((lp - lm) / (2.0 * h));
            }
            let dx_vec: Vec<f64> = dx.iter().copied().collect();
            let err_dx = relative_discrepancy(&dx_vec, &numeric_dx);
            assert!(err_dx < 1e-5, "case {case}: input gradient error {err_dx}");
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = random_net(&[4, 6, 3], &[Activation::Tanh, Activation::Sigmoid], 11);
        let x = random_vector(4, 12);
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, dx) = net.backward(&cache, &DVector::zeros(3)).unwrap();
        assert!(flatten_grads(&grads).iter().all(|&g| g == 0.0));
        assert!(dx.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let net = random_net(&[4, 6, 3], &[Activation::Tanh, Activation::Sigmoid], 11);
        let other = random_net(&[4, 5, 3], &[Activation::Tanh, Activation::Sigmoid], 11);
        let (_, cache) = other.forward(&random_vector(4, 1)).unwrap();
        let result = net.backward(&cache, &DVector::zeros(3));
        assert!(matches!(result, Err(Error::InvalidState(_))));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let net = random_net(
            &[5, 8, 3],
            &[Activation::Tanh, Activation::Identity],
            21,
        );
        let x = random_vector(5, 22);
        let cols = [0usize, 2, 4];
        let jac = net.jacobian_wrt_inputs(&x, &cols).unwrap();
        let h = 1e-6;
        for (j, &c) in cols.iter().enumerate() {
            let mut xp = x.clone();
            xp[c] += h;
            let mut xm = x.clone();
            xm[c] -= h;
            let fd = (net.infer(&xp).unwrap() - net.infer(&xm).unwrap()) / (2.0 * h);
            for r in 0..3 {
                assert!(
                    (jac[(r, j)] - fd[r]).abs() < 1e-6,
                    "J[{r},{j}] = {} vs fd {}",
                    jac[(r, j)],
                    fd[r]
                );
            }
        }
    }

    #[test]
    fn adam_noop_on_zero_gradients() {
        let mut net = random_net(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], 31);
        let before = flatten_params(&net);
        let mut state = AdamState::new(&net);
        let grads = Gradients::zeros_like(&net);
        adam_step(&mut net, &grads, &mut state, &AdamParams::default()).unwrap();
        assert_eq!(flatten_params(&net), before);
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        // single 1×1 identity layer: output = w·x + b; loss (y − 3)² at x = 1
        let layer = Layer {
            weights: DMatrix::from_element(1, 1, 0.0),
            bias: DVector::zeros(1),
            activation: Activation::Identity,
        };
        let mut net = Mlp::from_layers(vec![layer]).unwrap();
        let mut state = AdamState::new(&net);
        let params = AdamParams {
            lr: 1e-2,
            ..AdamParams::default()
        };
        let x = DVector::from_element(1, 1.0);
        let target = DVector::from_element(1, 3.0);
        for _ in 0..2000 {
            let (y, cache) = net.forward(&x).unwrap();
            let (_, dy) = loss_and_grad(&y, &target);
            let (grads, _) = net.backward(&cache, &dy).unwrap();
            adam_step(&mut net, &grads, &mut state, &params).unwrap();
        }
        let (y, _) = net.forward(&x).unwrap();
        assert!((y[0] - 3.0).abs() < 1e-3, "converged to {}", y[0]);
    }

    #[test]
    fn adam_rejects_nonfinite_gradients() {
        let mut net = random_net(&[2, 2], &[Activation::Identity], 41);
        let mut state = AdamState::new(&net);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].0[(0, 0)] = f64::NAN;
        assert!(adam_step(&mut net, &grads, &mut state, &AdamParams::default()).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut net = random_net(&[3, 5, 2], &[Activation::Tanh, Activation::Identity], 51);
            let mut state = AdamState::new(&net);
            let x = random_vector(3, 52);
            let target = random_vector(2, 53);
            for _ in 0..50 {
                let (y, cache) = net.forward(&x).unwrap();
                let (_, dy) = loss_and_grad(&y, &target);
                let (grads, _) = net.backward(&cache, &dy).unwrap();
                adam_step(&mut net, &grads, &mut state, &AdamParams::default()).unwrap();
            }
            flatten_params(&net)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn serialization_round_trip() {
        let net = random_net(
            &[4, 6, 2],
            &[Activation::LeakyRelu, Activation::Sigmoid],
            61,
        );
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
    }
}
