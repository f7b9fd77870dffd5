//! Small feed-forward generator mapping latent vectors to null-space
//! coefficients, with hand-written reverse-mode gradients.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activated value; ReLU uses the
    /// zero branch at the kink.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Dense layer, `weights` stored row-major with shape `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorNet {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub latent_dim: usize,
    pub out_dim: usize,
    pub alpha_scale: f64,
}

/// Intermediate values of one forward pass, needed for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of every layer; `inputs[0]` is the latent vector.
    inputs: Vec<Vec<f64>>,
    /// Raw (unscaled) network output.
    pub raw: Vec<f64>,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &GeneratorNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, c)| *a += c);
            b.iter_mut().zip(ob).for_each(|(a, c)| *a += c);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Builds a generator whose hidden layers use a seeded Glorot-uniform
/// initialization and whose output layer is zero, so `G(z) = 0` until
/// training moves it.
pub fn init_generator(
    latent_dim: usize,
    out_dim: usize,
    hidden: &[usize],
    activation: Activation,
    alpha_scale: f64,
    seed: u64,
) -> Result<GeneratorNet> {
    if out_dim == 0 {
        return Err(Error::InvalidInput(
            "generator output dimension must be positive (is the null space empty?)".into(),
        ));
    }
    if latent_dim == 0 {
        return Err(Error::InvalidInput("latent dimension must be positive".into()));
    }
    if hidden.contains(&0) {
        return Err(Error::InvalidInput("hidden layer widths must be positive".into()));
    }
    if !(alpha_scale >= 0.0 && alpha_scale.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid alpha scale {alpha_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(latent_dim);
    widths.extend_from_slice(hidden);
    widths.push(out_dim);
    let last = widths.len() - 2;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(idx, pair)| {
            let mut layer = Layer::zeros(pair[0], pair[1]);
            if idx < last {
                let limit = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
                for w in layer.weights.iter_mut() {
                    *w = rng.random_range(-limit..limit);
                }
            }
            layer
        })
        .collect();
    Ok(GeneratorNet {
        layers,
        activation,
        latent_dim,
        out_dim,
        alpha_scale,
    })
}

impl GeneratorNet {
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.latent_dim {
            return Err(Error::Shape(format!(
                "latent vector has length {} but the generator expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        Ok(())
    }

    /// Null-space coefficients for latent `z`.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_traced(z)?.0)
    }

    /// Forward pass that also returns the trace needed by [`Self::backward`].
    pub fn forward_traced(&self, z: &[f64]) -> Result<(Vec<f64>, Trace)> {
        self.check_latent(z)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = z.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut next = layer.apply(&current);
            if idx < last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            inputs.push(std::mem::replace(&mut current, next));
        }
        let scaled = current.iter().map(|v| v * self.alpha_scale).collect();
        Ok((scaled, Trace { inputs, raw: current }))
    }

    /// Gradients of `upstream . G(z)` with respect to every parameter.
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<Gradients> {
        if upstream.len() != self.out_dim {
            return Err(Error::Shape(format!(
                "upstream gradient has length {} but the generator outputs {}",
                upstream.len(),
                self.out_dim
            )));
        }
        let mut delta: Vec<f64> = upstream.iter().map(|g| g * self.alpha_scale).collect();
        let mut layers = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[idx];
            let mut dw = vec![0.0; layer.weights.len()];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let row = &mut dw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g = d * x);
                }
            }
            if idx > 0 {
                let mut back = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d != 0.0 {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        back.iter_mut().zip(row).for_each(|(b, w)| *b += d * w);
                    }
                }
                back.iter_mut()
                    .zip(input)
                    .for_each(|(b, a)| *b *= self.activation.derivative_from_output(*a));
                layers[idx] = (dw, std::mem::replace(&mut delta, back));
            } else {
                layers[idx] = (dw, std::mem::take(&mut delta));
            }
        }
        Ok(Gradients { layers })
    }

    /// All parameters in layer order (weights then bias per layer).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for layer in self.layers.iter_mut() {
            layer.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("generator has no layers".into()));
        }
        let mut width = self.latent_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs != width
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::Shape(format!("layer {i} does not chain")));
            }
            width = l.outputs;
        }
        if width != self.out_dim {
            return Err(Error::Shape("final layer width differs from out_dim".into()));
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let net: GeneratorNet = serde_json::from_slice(&std::fs::read(path)?)?;
        net.validate()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randomized(net: &mut GeneratorNet, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..net.num_params())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        net.set_flat(&vals).unwrap();
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = init_generator(4, 6, &[64, 64], Activation::Tanh, 1.0, 11).unwrap();
        let b = init_generator(4, 6, &[64, 64], Activation::Tanh, 1.0, 11).unwrap();
        assert_eq!(a, b);
        let c = init_generator(4, 6, &[64, 64], Activation::Tanh, 1.0, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fresh_net_outputs_zero() {
        let net = init_generator(3, 5, &[16], Activation::Tanh, 2.5, 0).unwrap();
        for z in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
            assert!(net.forward(&z).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn layer_shapes_chain() {
        let net = init_generator(4, 6, &[64, 64], Activation::Tanh, 1.0, 0).unwrap();
        let shapes: Vec<(usize, usize)> =
            net.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
        assert_eq!(shapes, vec![(4, 64), (64, 64), (64, 6)]);
        net.validate().unwrap();
    }

    #[test]
    fn zero_outdim_rejected() {
        assert!(init_generator(2, 0, &[8], Activation::Tanh, 1.0, 0).is_err());
        assert!(init_generator(0, 2, &[8], Activation::Tanh, 1.0, 0).is_err());
    }

    #[test]
    fn zero_scale_gives_zero() {
        let mut net = init_generator(2, 3, &[5], Activation::Tanh, 0.0, 0).unwrap();
        randomized(&mut net, 1);
        assert!(net.forward(&[0.3, -0.8]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_hand_product() {
        let mut net = init_generator(2, 2, &[], Activation::Tanh, 3.0, 0).unwrap();
        net.layers[0].weights = vec![1.0, 2.0, -1.0, 0.5];
        // W z = [1*2 + 2*(-1), -1*2 + 0.5*(-1)] = [0, -2.5]
        let out = net.forward(&[2.0, -1.0]).unwrap();
        assert_eq!(out, vec![0.0, -7.5]);
    }

    #[test]
    fn tanh_output_bounded_by_final_weights() {
        let mut net = init_generator(3, 4, &[7], Activation::Tanh, 1.0, 0).unwrap();
        randomized(&mut net, 5);
        let last = net.layers.last().unwrap();
        let bound = last
            .weights
            .chunks_exact(last.inputs)
            .zip(&last.bias)
            .map(|(r, b)| r.iter().map(|w| w.abs()).sum::<f64>() + b.abs())
            .fold(0.0, f64::max);
        for z in [[10.0, -10.0, 3.0], [0.0, 0.0, 0.0], [-50.0, 20.0, 1.0]] {
            let out = net.forward(&z).unwrap();
            assert!(out.iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut net = init_generator(3, 4, &[6, 6], Activation::Tanh, 1.5, 0).unwrap();
        randomized(&mut net, 9);
        let z = [0.2, -0.4, 1.1];
        let base = net.forward(&z).unwrap();
        net.alpha_scale *= 2.0;
        let doubled = net.forward(&z).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn wrong_latent_length() {
        let net = init_generator(3, 4, &[6], Activation::Tanh, 1.0, 0).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape(_))));
        let (_, trace) = net.forward_traced(&[0.0; 3]).unwrap();
        assert!(net.backward(&trace, &[1.0]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = init_generator(3, 2, &[8], Activation::Tanh, 1.0, 0).unwrap();
        randomized(&mut net, 2);
        let (_, trace) = net.forward_traced(&[0.5, 0.1, -0.3]).unwrap();
        let g = net.backward(&trace, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_additive_in_upstream() {
        let mut net = init_generator(3, 2, &[8], Activation::Relu, 0.7, 0).unwrap();
        randomized(&mut net, 3);
        let (_, trace) = net.forward_traced(&[0.5, 0.1, -0.3]).unwrap();
        let g1 = net.backward(&trace, &[1.0, -2.0]).unwrap();
        let g2 = net.backward(&trace, &[0.25, 3.0]).unwrap();
        let g12 = net.backward(&trace, &[1.25, 1.0]).unwrap();
        let mut sum = g1.clone();
        sum.add_assign(&g2);
        for (a, b) in sum.flatten().iter().zip(g12.flatten()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    /// Central-difference oracle over every parameter.
    fn fd_gradient(net: &GeneratorNet, z: &[f64], up: &[f64], h: f64) -> Vec<f64> {
        let base = net.flatten();
        let objective = |p: &[f64]| {
            let mut n = net.clone();
            n.set_flat(p).unwrap();
            n.forward(z)
                .unwrap()
                .iter()
                .zip(up)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        (0..base.len())
            .map(|i| {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[i] += h;
                minus[i] -= h;
                (objective(&plus) - objective(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = init_generator(3, 2, &[8], Activation::Tanh, 1.3, 0).unwrap();
        randomized(&mut net, 21);
        let z = [0.4, -1.2, 0.9];
        let up = [0.7, -1.1];
        let (_, trace) = net.forward_traced(&z).unwrap();
        let analytic = net.backward(&trace, &up).unwrap().flatten();
        let numeric = fd_gradient(&net, &z, &up, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel <= 1e-4 || (a - n).abs() < 1e-9, "{a} vs {n}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut net = init_generator(2, 3, &[4], Activation::Relu, 0.5, 0).unwrap();
        randomized(&mut net, 8);
        let dir = std::env::temp_dir().join(format!("rbfgen-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gen.json");
        net.save_json(&path).unwrap();
        assert_eq!(GeneratorNet::load_json(&path).unwrap(), net);
        std::fs::remove_dir_all(&dir).ok();
    }
}
