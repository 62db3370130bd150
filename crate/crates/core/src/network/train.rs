use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, LayerStack};
use crate::error::{Error, Result};
use crate::tensor::{ops, Tensor};

/// Anything that yields `(input, label)` pairs by index.
pub trait LabeledSet {
    fn len(&self) -> usize;
    fn input(&self, i: usize) -> &Tensor<f32>;
    fn label(&self, i: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LabeledSet for [(Tensor<f32>, usize)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn input(&self, i: usize) -> &Tensor<f32> {
        &self[i].0
    }
    fn label(&self, i: usize) -> usize {
        self[i].1
    }
}

impl LabeledSet for Vec<(Tensor<f32>, usize)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn input(&self, i: usize) -> &Tensor<f32> {
        &self[i].0
    }
    fn label(&self, i: usize) -> usize {
        self[i].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f32,
    pub momentum: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 40,
            seed: 0,
            weight_decay: 1e-4,
            momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config("learning_rate and weight_decay must be ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and decoupled-from-bias weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Option<Gradients<f32>>,
}

impl Sgd {
    pub fn new(learning_rate: f32, momentum: f32, weight_decay: f32) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: None,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    }

    pub fn step(&mut self, model: &mut LayerStack<f32>, grads: &Gradients<f32>) {
        let velocity = self.velocity.get_or_insert_with(|| Gradients::zeros_like(model));
        for (li, layer) in model.layers.iter().enumerate() {
            for (pi, p) in layer.params.iter().enumerate() {
                let g = grads.per_layer[li][pi].data();
                let v = velocity.per_layer[li][pi].data_mut();
                // weight decay on weights only (param 0), never on biases
                let wd = if pi == 0 { self.weight_decay } else { 0.0 };
                for ((vv, &gv), &pv) in v.iter_mut().zip(g).zip(p.data()) {
                    *vv = self.momentum * *vv + gv + wd * pv;
                }
            }
        }
        let mut update = velocity.clone();
        update.scale(self.learning_rate);
        model.apply_update(&update);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean cross-entropy per epoch.
    pub loss_curve: Vec<f32>,
}

/// Mean cross-entropy and its parameter gradient over `batch`.
pub fn ce_batch_gradient<S: LabeledSet + ?Sized>(
    model: &LayerStack<f32>,
    data: &S,
    batch: &[usize],
) -> Result<(f32, Gradients<f32>)> {
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0f32;
    for &i in batch {
        let trace = model.forward(data.input(i))?;
        let label = data.label(i);
        loss += ops::softmax_ce(trace.logits(), label)?;
        let d = ops::softmax_ce_backward(trace.logits(), label)?;
        let (g, _) = model.backward(&trace, &d, &[])?;
        total.add_assign(&g)?;
    }
    let inv = 1.0 / batch.len() as f32;
    total.scale(inv);
    Ok((loss * inv, total))
}

/// Plain minibatch training on cross-entropy with SGD + momentum.
pub fn train_erm<S: LabeledSet + ?Sized>(
    model: &mut LayerStack<f32>,
    data: &S,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let k = model.num_classes();
    if let Some(bad) = (0..data.len()).find(|&i| data.label(i) >= k) {
        return Err(Error::Index {
            what: "class label",
            index: data.label(bad),
            len: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut sgd = Sgd::from_config(cfg);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = ce_batch_gradient(model, data, batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::numeric(format!("training loss at epoch {epoch}")));
            }
            epoch_loss += loss as f64 * batch.len() as f64;
            sgd.step(model, &grads);
        }
        loss_curve.push((epoch_loss / data.len() as f64) as f32);
    }
    Ok(TrainOutcome { loss_curve })
}

/// Generic minibatch loop used by callers with their own batch gradient.
pub fn train_on_batches<F>(
    model: &mut LayerStack<f32>,
    sgd: &mut Sgd,
    batches: &[Vec<usize>],
    mut batch_grad: F,
) -> Result<Vec<f32>>
where
    F: FnMut(&LayerStack<f32>, &[usize]) -> Result<(f32, Gradients<f32>)>,
{
    let mut losses = Vec::with_capacity(batches.len());
    for batch in batches {
        let (loss, grads) = batch_grad(model, batch)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::numeric("batch loss"));
        }
        sgd.step(model, &grads);
        losses.push(loss);
    }
    Ok(losses)
}

pub fn predict(model: &LayerStack<f32>, x: &Tensor<f32>) -> Result<usize> {
    Ok(model.logits(x)?.argmax())
}

pub fn accuracy<S: LabeledSet + ?Sized>(model: &LayerStack<f32>, data: &S) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("accuracy over empty set".into()));
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        if predict(model, data.input(i))? == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerSpec;
    use rand::Rng;

    fn toy() -> Vec<(Tensor<f32>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..200)
            .map(|_| {
                let a: f32 = rng.random_range(-1.0..1.0);
                let b: f32 = rng.random_range(-1.0..1.0);
                let label = usize::from(a + 0.5 * b > 0.0);
                // push points away from the boundary so the margin is positive
                let shift = if label == 1 { 0.2 } else { -0.2 };
                (Tensor::from_vec(vec![a + shift, b]), label)
            })
            .collect()
    }

    fn dense_model() -> LayerStack<f32> {
        let mut m = LayerStack::from_specs(
            &[2],
            vec![LayerSpec::Dense {
                inputs: 2,
                outputs: 2,
                bias: true,
            }],
            0,
        )
        .unwrap();
        m.init_kaiming(4);
        m
    }

    #[test]
    fn separable_toy_reaches_perfect_accuracy() {
        let data = toy();
        let mut model = dense_model();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 16,
            epochs: 50,
            seed: 1,
            weight_decay: 0.0,
            momentum: 0.9,
        };
        let out = train_erm(&mut model, &data, &cfg).unwrap();
        assert_eq!(accuracy(&model, &data).unwrap(), 1.0);
        for w in out.loss_curve[5..].windows(2) {
            assert!(w[1] <= w[0] + 1e-3, "loss rose: {:?}", w);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = toy();
        let mut model = dense_model();
        let before = model.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        train_erm(&mut model, &data, &cfg).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = toy();
        let cfg = TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        };
        let mut a = dense_model();
        let mut b = dense_model();
        let la = train_erm(&mut a, &data, &cfg).unwrap();
        let lb = train_erm(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn rejects_out_of_range_labels_and_empty_data() {
        let mut model = dense_model();
        let bad = vec![(Tensor::from_vec(vec![0.0f32, 0.0]), 5)];
        assert!(train_erm(&mut model, &bad, &TrainConfig::default()).is_err());
        let empty: Vec<(Tensor<f32>, usize)> = Vec::new();
        assert!(train_erm(&mut model, &empty, &TrainConfig::default()).is_err());
    }

    #[test]
    fn nan_loss_aborts_with_epoch() {
        let mut model = dense_model();
        let data = vec![(Tensor::from_vec(vec![f32::MAX, f32::MAX]), 0)];
        let cfg = TrainConfig {
            learning_rate: 1e30,
            epochs: 3,
            ..TrainConfig::default()
        };
        let err = train_erm(&mut model, &data, &cfg).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }), "{err}");
    }
}
