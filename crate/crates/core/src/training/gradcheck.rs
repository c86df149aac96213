use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{count_params, Init, Network, NetworkConfig, ParamScope, Variant};
use crate::tensor::{softmax_cross_entropy, Shape, Tensor};

/// Largest network (full parameter count) the checker will perturb.
pub const MAX_GRADCHECK_PARAMS: usize = 50_000;
pub const GRADCHECK_STEP: f64 = 1e-3;
/// Group norms below `GRADIENT_FLOOR / step` are treated as an exactly
/// vanishing gradient (for example a bias followed by batch normalization).
/// It sits at the rounding level of an `f64` central difference.
pub const GRADIENT_FLOOR: f64 = 1e-10;
const GRADCHECK_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub name: String,
    pub len: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, GRADIENT_FLOOR / step)` over the group.
    pub rel_error: f64,
    pub analytic_norm: f64,
    /// Elements whose ±step perturbation changed a ReLU/max-pool decision
    /// and were re-measured with a smaller step.
    pub kink_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub variant: Variant,
    pub step: f64,
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
}

struct Probe {
    net: Network<f64>,
    x: Tensor<f64>,
    labels: Vec<usize>,
    dropout_seed: u64,
}

impl Probe {
    fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let total = count_params(config, ParamScope::Full);
        if total > MAX_GRADCHECK_PARAMS {
            return Err(Error::Refused(format!(
                "gradient check on {total} parameters exceeds the limit of {MAX_GRADCHECK_PARAMS}"
            )));
        }
        let mut net = Network::<f64>::build(config.clone(), Init::Random { seed })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for p in net.params_mut().iter_mut().filter(|p| p.learnable && p.name.ends_with(".bias")) {
            p.data.iter_mut().for_each(|b| *b = rng.gen_range(0.05..0.25));
        }
        let shape: Shape = net.input_shape(GRADCHECK_BATCH);
        let x = Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.gen::<f64>()).collect())?;
        let labels = (0..GRADCHECK_BATCH).map(|i| i % config.num_classes).collect();
        Ok(Probe {
            net,
            x,
            labels,
            dropout_seed: rng.gen(),
        })
    }

    fn loss(&self) -> Result<(f64, u64)> {
        let (logits, tape) = self.net.forward_train(&self.x, self.dropout_seed)?;
        let (loss, _) = softmax_cross_entropy(&logits, &self.labels)?;
        Ok((loss, tape.activation_signature()))
    }
}

/// Compares the analytic gradient of every learnable parameter group of a
/// small network against central finite differences, all in `f64`.
///
/// The loss is the training-mode mean cross-entropy on a seeded random
/// batch (batch statistics and a fixed dropout mask included).
pub fn gradcheck(config: &NetworkConfig, seed: u64) -> Result<GradcheckReport> {
    gradcheck_with_step(config, seed, GRADCHECK_STEP)
}

/// [`gradcheck`] with an explicit initial finite-difference step.
pub fn gradcheck_with_step(config: &NetworkConfig, seed: u64, step: f64) -> Result<GradcheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = Probe::new(config, seed)?;
    let (_, grads) = super::backward(&probe.net, &probe.x, &probe.labels, probe.dropout_seed)?;
    let (_, base_sig) = probe.loss()?;
    let mut groups = Vec::new();
    for pi in 0..probe.net.params().len() {
        let Some(analytic) = grads.grads[pi].clone() else { continue };
        let mut numeric = Vec::with_capacity(analytic.len());
        let mut fallbacks = 0;
        for j in 0..analytic.len() {
            let orig = probe.net.params()[pi].data[j];
            let mut h = step;
            let estimate = loop {
                probe.net.params_mut()[pi].data[j] = orig + h;
                let (lp, sp) = probe.loss()?;
                probe.net.params_mut()[pi].data[j] = orig - h;
                let (lm, sm) = probe.loss()?;
                probe.net.params_mut()[pi].data[j] = orig;
                let estimate = (lp - lm) / (2.0 * h);
                if (sp == base_sig && sm == base_sig) || h < step * 1e-5 {
                    break estimate;
                }
                fallbacks += 1;
                h /= 8.0;
            };
            numeric.push(estimate);
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let p = &probe.net.params()[pi];
        groups.push(GroupError {
            name: p.name.clone(),
            len: p.data.len(),
            rel_error: diff / na.max(nn).max(GRADIENT_FLOOR / step),
            analytic_norm: na,
            kink_fallbacks: fallbacks,
        });
    }
    let max_rel_error = groups.iter().map(|g| g.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        variant: config.variant(),
        step,
        groups,
        max_rel_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorProbe {
    pub eta: f64,
    /// `|L(θ+ηd) − L(θ) − η·∇L·d|`.
    pub remainder: f64,
    /// The perturbed pass made the same ReLU and max-pool decisions as the
    /// unperturbed one, so the loss is smooth on the segment.
    pub same_branch: bool,
}

/// First-order Taylor remainders along a seeded random unit direction over
/// all learnable parameters, one per `eta`. On a single branch they shrink
/// quadratically in `eta`.
pub fn taylor_remainders(config: &NetworkConfig, seed: u64, etas: &[f64]) -> Result<Vec<TaylorProbe>> {
    let mut probe = Probe::new(config, seed)?;
    let (base, grads) = super::backward(&probe.net, &probe.x, &probe.labels, probe.dropout_seed)?;
    let (_, base_sig) = probe.loss()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let mut direction: Vec<Option<Vec<f64>>> = grads
        .grads
        .iter()
        .map(|g| g.as_ref().map(|g| g.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let norm = direction.iter().flatten().flatten().map(|d| d * d).sum::<f64>().sqrt();
    direction.iter_mut().flatten().flatten().for_each(|d| *d /= norm);
    let slope: f64 = grads
        .grads
        .iter()
        .zip(&direction)
        .filter_map(|(g, d)| Some(g.as_ref()?.iter().zip(d.as_ref()?).map(|(a, b)| a * b).sum::<f64>()))
        .sum();
    let originals: Vec<Vec<f64>> = probe.net.params().iter().map(|p| p.data.clone()).collect();
    let mut out = Vec::with_capacity(etas.len());
    for &eta in etas {
        for ((p, d), orig) in probe.net.params_mut().iter_mut().zip(&direction).zip(&originals) {
            if let Some(d) = d {
                for ((w, &o), &di) in p.data.iter_mut().zip(orig).zip(d) {
                    *w = o + eta * di;
                }
            }
        }
        let (moved, sig) = probe.loss()?;
        out.push(TaylorProbe {
            eta,
            remainder: (moved - base - eta * slope).abs(),
            same_branch: sig == base_sig,
        });
    }
    for (p, orig) in probe.net.params_mut().iter_mut().zip(originals) {
        p.data = orig;
    }
    Ok(out)
}
