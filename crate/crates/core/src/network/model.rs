use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::spec::{LayerSpec, NetworkSpec};
use crate::ops::{
    conv_backward_with, conv_forward, fc_backward, fc_forward, pool_backward, pool_forward, relu,
    relu_backward, sgd_update, softmax_cross_entropy, ConvParams, FcParams, PoolIndex,
};
use crate::tensor::Tensor;

/// Trainable state of one layer. Pooling and loss rows carry none.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv(ConvParams),
    Fc(FcParams),
    None,
}

impl LayerParams {
    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::Conv(p) => vec![&p.kernel, &p.bias],
            LayerParams::Fc(p) => vec![&p.weights, &p.bias],
            LayerParams::None => vec![],
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::Conv(p) => vec![&mut p.kernel, &mut p.bias],
            LayerParams::Fc(p) => vec![&mut p.weights, &mut p.bias],
            LayerParams::None => vec![],
        }
    }
}

/// Parameter-shaped gradient container, one entry per layer row.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(LayerParams::tensors)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.tensors_mut().into_iter().zip(b.tensors()) {
                ta.add_assign(tb)?;
            }
        }
        Ok(())
    }

    fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.tensors_mut().into_iter().for_each(|t| t.scale(factor));
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().all(Tensor::all_finite)
    }
}

/// Which side of every ReLU kink and which pooling winner a forward pass
/// used. Two inputs with equal patterns lie in the same smooth piece of
/// the network function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationPattern {
    relu_active: Vec<bool>,
    pool_winners: Vec<usize>,
}

/// Statistics from one [`Model::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Fraction of the batch misclassified by the pre-update forward pass.
    pub error_rate: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    params: Vec<LayerParams>,
    seed: u64,
}

/// Per-layer values kept from the forward pass for the backward pass.
enum Cached {
    Conv { input: Tensor, pre_activation: Tensor },
    Pool(PoolIndex),
    Fc { input: Tensor, pre_activation: Option<Tensor> },
    Loss,
}

struct ForwardTrace {
    cache: Vec<Cached>,
    logits: Tensor,
}

impl Model {
    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases,
    /// drawn layer by layer from a ChaCha8 stream seeded with `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_channels = 1;
        let mut fc_in = spec.feature_len()?;
        let mut params = Vec::with_capacity(spec.layers().len());
        for layer in spec.layers() {
            let p = match *layer {
                LayerSpec::Convolution {
                    kernel_h,
                    kernel_w,
                    out_channels,
                } => {
                    let mut p = ConvParams::zeros(out_channels, in_channels, kernel_h, kernel_w)?;
                    let taps = kernel_h * kernel_w;
                    glorot_fill(&mut p.kernel, in_channels * taps, out_channels * taps, &mut rng);
                    in_channels = out_channels;
                    LayerParams::Conv(p)
                }
                LayerSpec::FullyConnected { out_dim } => {
                    let mut p = FcParams::zeros(out_dim, fc_in)?;
                    glorot_fill(&mut p.weights, fc_in, out_dim, &mut rng);
                    fc_in = out_dim;
                    LayerParams::Fc(p)
                }
                LayerSpec::Pooling { .. } | LayerSpec::Loss => LayerParams::None,
            };
            params.push(p);
        }
        Ok(Self { spec, params, seed })
    }

    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_parts(spec: NetworkSpec, params: Vec<LayerParams>, seed: u64) -> Result<Self> {
        let template = Self::new(spec.clone(), 0)?;
        if template.params.len() != params.len() {
            return Err(Error::Shape(format!(
                "spec has {} rows but {} parameter entries were given",
                template.params.len(),
                params.len()
            )));
        }
        for (row, (want, got)) in template.params.iter().zip(&params).enumerate() {
            let (want, got) = (want.tensors(), got.tensors());
            if want.len() != got.len() || want.iter().zip(&got).any(|(a, b)| a.shape() != b.shape()) {
                return Err(Error::Shape(format!(
                    "row {}: parameter shapes {:?} do not match spec {:?}",
                    row + 1,
                    got.iter().map(|t| t.shape()).collect::<Vec<_>>(),
                    want.iter().map(|t| t.shape()).collect::<Vec<_>>()
                )));
            }
        }
        Ok(Self { spec, params, seed })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.param_tensors().map(Tensor::len).sum()
    }

    pub fn param_tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().flat_map(LayerParams::tensors)
    }

    /// All parameters concatenated in row order (kernel/weights before bias).
    pub fn flat_params(&self) -> Vec<f64> {
        self.param_tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut rest = values;
        for t in self.params.iter_mut().flat_map(LayerParams::tensors_mut) {
            let (head, tail) = rest.split_at(t.len());
            t.data_mut().copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        let (h, w) = self.spec.input_size();
        image.expect_shape(&[1, h, w], "network input")
    }

    fn pad_for(&self, p: &ConvParams) -> usize {
        let (kh, kw) = p.kernel_size();
        self.spec.padding().amount(kh, kw).expect("validated at spec construction")
    }

    fn last_fc_row(&self) -> usize {
        self.params
            .iter()
            .rposition(|p| matches!(p, LayerParams::Fc(_)))
            .expect("validated head")
    }

    fn forward_trace(&self, image: &Tensor, keep_cache: bool) -> Result<ForwardTrace> {
        self.check_image(image)?;
        let last_fc = self.last_fc_row();
        let mut x = image.clone();
        let mut cache = Vec::with_capacity(if keep_cache { self.params.len() } else { 0 });
        for (row, (layer, params)) in self.spec.layers().iter().zip(&self.params).enumerate() {
            let entry = match (layer, params) {
                (LayerSpec::Convolution { .. }, LayerParams::Conv(p)) => {
                    let z = conv_forward(&x, p, self.pad_for(p))?;
                    let a = relu(&z);
                    let input = std::mem::replace(&mut x, a);
                    Cached::Conv {
                        input,
                        pre_activation: z,
                    }
                }
                (LayerSpec::Pooling { window_h, window_w }, LayerParams::None) => {
                    let (y, index) = pool_forward(&x, (*window_h, *window_w))?;
                    x = y;
                    Cached::Pool(index)
                }
                (LayerSpec::FullyConnected { .. }, LayerParams::Fc(p)) => {
                    let z = fc_forward(&x, p)?;
                    let (next, pre_activation) = if row == last_fc {
                        (z, None)
                    } else {
                        (relu(&z), Some(z))
                    };
                    let input = std::mem::replace(&mut x, next);
                    Cached::Fc { input, pre_activation }
                }
                (LayerSpec::Loss, LayerParams::None) => Cached::Loss,
                _ => return Err(Error::Internal(format!("row {}: parameters do not match layer kind", row + 1))),
            };
            if keep_cache {
                cache.push(entry);
            }
        }
        if !x.all_finite() {
            return Err(Error::Numeric(format!("non-finite logits {:?}", x.data())));
        }
        Ok(ForwardTrace { cache, logits: x })
    }

    /// Logits for one (1, H, W) image.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(image, false)?.logits)
    }

    /// Class with the largest logit; ties go to class 0.
    pub fn predict(&self, image: &Tensor) -> Result<usize> {
        Ok(argmax_class(self.forward(image)?.data()))
    }

    pub fn activation_pattern(&self, image: &Tensor) -> Result<ActivationPattern> {
        let trace = self.forward_trace(image, true)?;
        let mut pattern = ActivationPattern {
            relu_active: Vec::new(),
            pool_winners: Vec::new(),
        };
        for entry in &trace.cache {
            match entry {
                Cached::Conv { pre_activation, .. }
                | Cached::Fc {
                    pre_activation: Some(pre_activation),
                    ..
                } => pattern.relu_active.extend(pre_activation.data().iter().map(|&v| v > 0.0)),
                Cached::Pool(index) => pattern.pool_winners.extend_from_slice(index.argmax()),
                _ => {}
            }
        }
        Ok(pattern)
    }

    /// Loss, parameter gradients, and logits for a single labelled image.
    pub fn loss_and_gradients(&self, image: &Tensor, label: usize) -> Result<(f64, Gradients, Tensor)> {
        let trace = self.forward_trace(image, true)?;
        let loss = softmax_cross_entropy(&trace.logits, label)?;
        let mut upstream = loss.logit_grad;
        let mut grads: Vec<LayerParams> = vec![LayerParams::None; self.params.len()];

        for (row, entry) in trace.cache.iter().enumerate().rev() {
            match (entry, &self.params[row]) {
                (Cached::Loss, _) => {}
                (Cached::Fc { input, pre_activation }, LayerParams::Fc(p)) => {
                    if let Some(z) = pre_activation {
                        upstream = relu_backward(z, &upstream)?;
                    }
                    let (gx, gp) = fc_backward(input, p, &upstream)?;
                    grads[row] = LayerParams::Fc(gp);
                    upstream = gx;
                }
                (Cached::Pool(index), LayerParams::None) => {
                    upstream = pool_backward(index, &upstream)?;
                }
                (Cached::Conv { input, pre_activation }, LayerParams::Conv(p)) => {
                    let dz = relu_backward(pre_activation, &upstream)?;
                    let g = conv_backward_with(input, p, self.pad_for(p), &dz, row > 0)?;
                    grads[row] = LayerParams::Conv(g.params);
                    if let Some(gx) = g.input {
                        upstream = gx;
                    }
                }
                _ => return Err(Error::Internal(format!("row {}: cache does not match parameters", row + 1))),
            }
        }
        Ok((loss.loss, Gradients { layers: grads }, trace.logits))
    }

    /// One forward/backward/update over a batch with batch-mean gradients.
    ///
    /// Per-sample gradients may be computed in parallel; they are summed in
    /// batch order so the update is independent of thread scheduling.
    pub fn train_step(&mut self, images: &[&Tensor], labels: &[usize], learning_rate: f64) -> Result<StepStats> {
        if images.is_empty() {
            return Err(Error::Domain("train_step needs a non-empty batch".into()));
        }
        if images.len() != labels.len() {
            return Err(Error::Domain(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= crate::network::NUM_CLASSES) {
            return Err(Error::Domain(format!("label {bad} is not 0 or 1")));
        }
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Domain(format!("invalid learning rate {learning_rate}")));
        }

        let per_sample: Vec<(f64, Gradients, Tensor)> = images
            .par_iter()
            .zip(labels.par_iter())
            .map(|(img, &label)| self.loss_and_gradients(img, label))
            .collect::<Result<_>>()?;

        let n = images.len() as f64;
        let mut wrong = 0usize;
        let mut loss_sum = 0.0;
        let mut total: Option<Gradients> = None;
        for ((loss, grads, logits), &label) in per_sample.into_iter().zip(labels) {
            loss_sum += loss;
            if argmax_class(logits.data()) != label {
                wrong += 1;
            }
            match total.as_mut() {
                None => total = Some(grads),
                Some(t) => t.add_assign(&grads)?,
            }
        }
        let mut total = total.expect("non-empty batch");
        total.scale(1.0 / n);
        if !loss_sum.is_finite() || !total.all_finite() {
            return Err(Error::Numeric("non-finite loss or gradient in batch".into()));
        }

        for (p, g) in self.params.iter_mut().zip(&total.layers) {
            for (pt, gt) in p.tensors_mut().into_iter().zip(g.tensors()) {
                sgd_update(pt, gt, learning_rate)?;
            }
        }
        Ok(StepStats {
            error_rate: wrong as f64 / n,
            mean_loss: loss_sum / n,
        })
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax_class(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

fn glorot_fill(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    t.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::spec::{build_table1_network, Padding};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::new(
            vec![
                LayerSpec::conv(3, 3),
                LayerSpec::pool(2),
                LayerSpec::conv(3, 4),
                LayerSpec::pool(2),
                LayerSpec::fc(2),
                LayerSpec::Loss,
            ],
            (12, 12),
            Padding::Valid,
        )
        .unwrap()
    }

    fn ramp_image(h: usize, w: usize) -> Tensor {
        Tensor::new(&[1, h, w], (0..h * w).map(|i| ((i * 37) % 101) as f64 / 101.0).collect()).unwrap()
    }

    #[test]
    fn argmax_ties_go_to_class_zero() {
        assert_eq!(argmax_class(&[0.9, 0.1]), 0);
        assert_eq!(argmax_class(&[0.1, 0.9]), 1);
        assert_eq!(argmax_class(&[0.5, 0.5]), 0);
    }

    #[test]
    fn glorot_bounds_and_zero_biases() {
        let model = Model::new(build_table1_network((64, 64)).unwrap(), 3).unwrap();
        for p in model.params() {
            if let LayerParams::Conv(c) = p {
                let (kh, kw) = c.kernel_size();
                let limit = (6.0 / ((c.in_channels() + c.out_channels()) * kh * kw) as f64).sqrt();
                assert!(c.kernel.max_abs() <= limit);
                assert!(c.bias.data().iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn zero_image_yields_fc_bias() {
        let mut model = Model::new(tiny_spec(), 1).unwrap();
        if let LayerParams::Fc(p) = &mut model.params_mut()[4] {
            p.bias.data_mut().copy_from_slice(&[0.25, -0.75]);
        }
        let logits = model.forward(&Tensor::zeros(&[1, 12, 12]).unwrap()).unwrap();
        assert_eq!(logits.data(), &[0.25, -0.75]);
    }

    #[test]
    fn forward_is_deterministic_and_seeded() {
        let spec = tiny_spec();
        let img = ramp_image(12, 12);
        let a = Model::new(spec.clone(), 9).unwrap();
        let b = Model::new(spec.clone(), 9).unwrap();
        let c = Model::new(spec, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flat_params(), c.flat_params());
        let la = a.forward(&img).unwrap();
        assert_eq!(la.data().len(), 2);
        assert_eq!(la.data(), b.forward(&img).unwrap().data());
        assert_eq!(la.data(), a.forward(&img).unwrap().data());
    }

    #[test]
    fn wrong_image_shape_is_rejected() {
        let model = Model::new(tiny_spec(), 1).unwrap();
        assert!(matches!(model.forward(&Tensor::zeros(&[1, 11, 12]).unwrap()), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_rate_step_keeps_parameters() {
        let mut model = Model::new(tiny_spec(), 4).unwrap();
        let before = model.clone();
        let img = ramp_image(12, 12);
        let stats = model.train_step(&[&img, &img], &[0, 1], 0.0).unwrap();
        assert_eq!(model, before);
        // Same image with both labels: exactly one of the two is wrong.
        assert_eq!(stats.error_rate, 0.5);
    }

    #[test]
    fn batch_matching_predictions_has_zero_error() {
        let mut model = Model::new(tiny_spec(), 6).unwrap();
        let imgs: Vec<Tensor> = (0..4).map(|s| {
            let mut t = ramp_image(12, 12);
            t.data_mut().iter_mut().for_each(|v| *v = (*v * (s + 2) as f64).fract());
            t
        }).collect();
        let refs: Vec<&Tensor> = imgs.iter().collect();
        let labels: Vec<usize> = imgs.iter().map(|i| model.predict(i).unwrap()).collect();
        let stats = model.train_step(&refs, &labels, 0.01).unwrap();
        assert_eq!(stats.error_rate, 0.0);
    }

    #[test]
    fn small_step_does_not_increase_loss() {
        let mut model = Model::new(tiny_spec(), 12).unwrap();
        let img = ramp_image(12, 12);
        let (before, _, _) = model.loss_and_gradients(&img, 1).unwrap();
        model.train_step(&[&img], &[1], 1e-4).unwrap();
        let (after, _, _) = model.loss_and_gradients(&img, 1).unwrap();
        assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn empty_batch_and_bad_labels_are_domain_errors() {
        let mut model = Model::new(tiny_spec(), 1).unwrap();
        assert!(matches!(model.train_step(&[], &[], 0.1), Err(Error::Domain(_))));
        let img = ramp_image(12, 12);
        assert!(matches!(model.train_step(&[&img], &[2], 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_params_round_trip() {
        let mut model = Model::new(tiny_spec(), 2).unwrap();
        let mut flat = model.flat_params();
        flat.iter_mut().for_each(|v| *v *= 2.0);
        model.set_flat_params(&flat).unwrap();
        assert_eq!(model.flat_params(), flat);
        assert!(model.set_flat_params(&flat[1..]).is_err());
    }
}
