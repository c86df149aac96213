//! Identification training: SGD with momentum, a plateau-driven learning
//! rate ladder with boosted rates for newly added layers, a stratified
//! validation split, and a finite-difference gradient checker.

mod gradcheck;
mod schedule;
mod toy;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, Network, Param, Tape};
use crate::tensor::{softmax_cross_entropy, Scalar, Tensor};

pub use gradcheck::{
    gradcheck, gradcheck_with_step, taylor_remainders, GradcheckReport, GroupError, TaylorProbe, GRADCHECK_STEP, GRADIENT_FLOOR,
    MAX_GRADCHECK_PARAMS,
};
pub use schedule::{LrSchedule, LrUpdate, LR_LADDER};
pub use toy::{toy_dataset, toy_network, toy_train_config, TOY_BATCH_SIZE, TOY_BN10_GAMMA, TOY_IMAGE_SIZE};

/// Velocity buffers for classic momentum: `v ← μ·v + g; p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct SgdmState<T: Scalar = f32> {
    pub momentum: f64,
    velocity: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> SgdmState<T> {
    /// Zero velocity for every learnable parameter.
    pub fn new(params: &[Param<T>], momentum: f64) -> Self {
        SgdmState {
            momentum,
            velocity: params
                .iter()
                .map(|p| p.learnable.then(|| vec![T::zero(); p.data.len()]))
                .collect(),
        }
    }

    pub fn velocity(&self, index: usize) -> Option<&[T]> {
        self.velocity.get(index).and_then(|v| v.as_deref())
    }
}

/// One momentum update of every learnable parameter. `lr_for` gives the
/// effective learning rate of each parameter.
pub fn sgdm_step<T: Scalar>(
    params: &mut [Param<T>],
    grads: &Gradients<T>,
    state: &mut SgdmState<T>,
    lr_for: impl Fn(&Param<T>) -> f64,
) -> Result<()> {
    if params.len() != grads.grads.len() || params.len() != state.velocity.len() {
        return Err(Error::dim("parameter groups", params.len(), grads.grads.len().min(state.velocity.len())));
    }
    let mu = T::from_f64(state.momentum);
    for ((p, g), v) in params.iter_mut().zip(&grads.grads).zip(&mut state.velocity) {
        let (Some(g), Some(v)) = (g, v) else { continue };
        if g.len() != p.data.len() || v.len() != p.data.len() {
            return Err(Error::dim(format!("{} gradient", p.name), p.data.len(), g.len()));
        }
        let lr = T::from_f64(lr_for(p));
        for ((w, &gi), vi) in p.data.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = mu * *vi + gi;
            *w = *w - lr * *vi;
        }
    }
    Ok(())
}

/// Labeled images ready for the network.
#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar = f32> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.images.shape().n {
            return Err(Error::Dataset(format!(
                "{} labels for {} images",
                self.labels.len(),
                self.images.shape().n
            )));
        }
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            if l >= self.num_classes {
                return Err(Error::Dataset(format!("label {l} out of range [0, {})", self.num_classes)));
            }
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Dataset(format!("class {empty} has no images")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Fraction of each class held out for validation.
    pub validation_fraction: f64,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    /// Layer prefixes whose learning rate is boosted while on the first rung.
    pub new_layers: Vec<String>,
    pub patience: usize,
    pub min_delta: f64,
    /// Stop after the first epoch whose running training accuracy exceeds this.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            validation_fraction: 0.02,
            epochs: 20,
            seed: 0,
            momentum: 0.9,
            new_layers: vec!["bn10".into(), "fc".into(), "gdc10".into()],
            patience: 3,
            min_delta: 1e-3,
            target_train_accuracy: None,
        }
    }
}

/// Per-class held-out count: `round(fraction · n)`, at least one, and never
/// the whole class.
pub fn validation_count(class_size: usize, fraction: f64) -> usize {
    if class_size < 2 {
        return 0;
    }
    ((fraction * class_size as f64).round() as usize).clamp(1, class_size - 1)
}

/// Stratified split into (train, validation) sample indices. Each class is
/// shuffled with the seed and its first `validation_count` members held out.
pub fn validation_split(labels: &[usize], num_classes: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut per_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l < num_classes {
            per_class[l].push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for members in &mut per_class {
        members.shuffle(&mut rng);
        let k = validation_count(members.len(), fraction);
        val.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    /// Global learning rate used during this epoch.
    pub lr: f64,
    pub rung: usize,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungTransition {
    pub after_epoch: usize,
    pub from_lr: f64,
    pub to_lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub transitions: Vec<RungTransition>,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainingLog {
    /// Line-delimited JSON, one epoch record per line.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("epoch record serializes"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

/// Couples a forward pass with its backward pass so backward cannot run
/// without recorded intermediates.
pub struct Backprop<'a, T: Scalar = f32> {
    net: &'a Network<T>,
    pending: Option<(Tape<T>, Tensor<T>)>,
}

impl<'a, T: Scalar> Backprop<'a, T> {
    pub fn new(net: &'a Network<T>) -> Self {
        Backprop { net, pending: None }
    }

    /// Training-mode forward; returns the mean loss and logits.
    pub fn forward(&mut self, batch: &Tensor<T>, labels: &[usize], seed: u64) -> Result<(T, Tensor<T>)> {
        let (logits, tape) = self.net.forward_train(batch, seed)?;
        let (loss, grad) = softmax_cross_entropy(&logits, labels)?;
        self.pending = Some((tape, grad));
        Ok((loss, logits))
    }

    /// Gradients of the last forward's loss. Consumes the recorded pass.
    pub fn backward(&mut self) -> Result<(Gradients<T>, Tape<T>)> {
        let (tape, grad) = self
            .pending
            .take()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        let grads = self.net.backward(&tape, &grad)?;
        Ok((grads, tape))
    }
}

/// Mean loss and its gradients for one batch.
pub fn backward<T: Scalar>(net: &Network<T>, batch: &Tensor<T>, labels: &[usize], seed: u64) -> Result<(T, Gradients<T>)> {
    let mut bp = Backprop::new(net);
    let (loss, _) = bp.forward(batch, labels, seed)?;
    let (grads, _) = bp.backward()?;
    Ok((loss, grads))
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Inference-mode mean loss and accuracy over `indices`.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset<T>, indices: &[usize], batch_size: usize) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for chunk in indices.chunks(batch_size.max(1)) {
        let x = data.images.gather(chunk)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
        let logits = net.forward(&x, crate::network::Mode::Inference)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss.as_f64() * chunk.len() as f64;
        correct += (0..chunk.len()).filter(|&n| argmax(logits.sample(n)) == labels[n]).count();
    }
    Ok((loss_sum / indices.len() as f64, correct as f64 / indices.len() as f64))
}

/// Trains `net` in place. Deterministic for a given seed.
pub fn fit<T: Scalar>(net: &mut Network<T>, data: &Dataset<T>, config: &TrainConfig) -> Result<TrainingLog> {
    fit_with(net, data, config, |_, measured| measured)
}

/// [`fit`] with a hook that maps each epoch's measured validation loss to the
/// value fed to the learning-rate schedule.
pub fn fit_with<T: Scalar>(
    net: &mut Network<T>,
    data: &Dataset<T>,
    config: &TrainConfig,
    mut validation_signal: impl FnMut(usize, f64) -> f64,
) -> Result<TrainingLog> {
    data.validate()?;
    if data.num_classes != net.config().num_classes {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, network has {}",
            data.num_classes,
            net.config().num_classes
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    let (train_idx, val_idx) = validation_split(&data.labels, data.num_classes, config.validation_fraction, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_F00D);
    let mut schedule = LrSchedule::new(config.patience, config.min_delta);
    let mut state = SgdmState::new(net.params(), config.momentum);
    let mut log = TrainingLog {
        epochs: Vec::new(),
        transitions: Vec::new(),
        train_size: train_idx.len(),
        val_size: val_idx.len(),
    };
    let is_new = |p: &Param<T>| config.new_layers.iter().any(|l| p.layer() == l || p.layer().starts_with(&format!("{l}.")));

    for epoch in 1..=config.epochs {
        let (lr, rung, boost) = (schedule.lr(), schedule.rung(), schedule.new_layer_multiplier());
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let x = data.images.gather(chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let mut bp = Backprop::new(&*net);
            let (loss, logits) = bp.forward(&x, &labels, rng.gen())?;
            let (grads, tape) = bp.backward()?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
            correct += (0..chunk.len()).filter(|&n| argmax(logits.sample(n)) == labels[n]).count();
            net.update_running_stats(&tape);
            sgdm_step(net.params_mut(), &grads, &mut state, |p| if is_new(p) { lr * boost } else { lr })?;
        }
        let train_loss = loss_sum / order.len().max(1) as f64;
        let train_accuracy = correct as f64 / order.len().max(1) as f64;
        let (val_loss, _) = evaluate(net, data, &val_idx, config.batch_size)?;
        let update = schedule.update(validation_signal(epoch, val_loss));
        if update.advanced {
            log.transitions.push(RungTransition {
                after_epoch: epoch,
                from_lr: lr,
                to_lr: update.global_lr,
            });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            lr,
            rung,
            momentum: config.momentum,
        });
        if config.target_train_accuracy.is_some_and(|t| train_accuracy > t) {
            break;
        }
    }
    Ok(log)
}
