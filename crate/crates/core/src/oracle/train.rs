use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::{forward_unchecked, LabeledDataset, WeightSet};
use crate::graph::{Nonlinearity, NormProfile, SlotId, StemElement, StemVineNetwork, VineBody};
use crate::linalg::{matmul, transposed_matmul, Matrix};

/// Most weight matrices the trainer accepts.
pub const TRAIN_MAX_WEIGHTS: usize = 6;
/// Largest feature width the trainer accepts.
pub const TRAIN_MAX_DIM: usize = 32;

/// Minibatch SGD on cross-entropy plus `½λ_wd Σ w²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 20,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Param(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Param(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Trained weights and the network with measured profiles: `s` is each
/// weight's spectral norm, `b` its distance to the initialization, which is
/// attached as the reference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: StemVineNetwork,
    pub weights: WeightSet,
    pub initial: WeightSet,
    /// Full-data objective after the last epoch.
    pub final_loss: f64,
}

fn check_trainable(net: &StemVineNetwork) -> Result<()> {
    net.ensure_valid()?;
    if net.weight_count() > TRAIN_MAX_WEIGHTS {
        return Err(Error::Size(format!(
            "trainer supports at most {TRAIN_MAX_WEIGHTS} weight matrices, got {}",
            net.weight_count()
        )));
    }
    if net.width() > TRAIN_MAX_DIM {
        return Err(Error::Size(format!(
            "trainer supports widths up to {TRAIN_MAX_DIM}, got {}",
            net.width()
        )));
    }
    let all = net
        .stem
        .iter()
        .chain(net.vines.iter().flat_map(|v| v.body.elements()));
    for el in all {
        if let StemElement::Nonlin { act, .. } = el {
            if !matches!(
                act,
                Nonlinearity::Relu | Nonlinearity::Identity | Nonlinearity::LeakyRelu { .. }
            ) {
                return Err(Error::Unsupported(format!(
                    "trainer cannot differentiate {act}"
                )));
            }
        }
    }
    Ok(())
}

/// Gaussian initialization with variance `1/in_dim`.
pub fn init_weights(net: &StemVineNetwork, seed: u64) -> WeightSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    net.weight_slots()
        .into_iter()
        .map(|slot| {
            let sd = 1.0 / (slot.in_dim as f64).sqrt();
            let data = (0..slot.in_dim * slot.out_dim)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let w = Matrix::from_vec(slot.out_dim, slot.in_dim, data).expect("finite entries");
            (slot.id, w)
        })
        .collect()
}

/// Backpropagates `grad` (w.r.t. the output of `el`) through `el`, whose
/// input was `h`. Weight gradients accumulate into `dw`.
fn back_element(
    el: &StemElement,
    w: Option<&Matrix>,
    h: &Matrix,
    grad: &Matrix,
    dw: Option<&mut Matrix>,
) -> Matrix {
    match el {
        StemElement::Weight { .. } => {
            let w = w.expect("weight bound");
            let g = transposed_matmul(grad, h).expect("shapes checked");
            dw.expect("gradient slot")
                .add_assign(&g)
                .expect("shapes checked");
            matmul(grad, w).expect("shapes checked")
        }
        StemElement::Nonlin { act, .. } => {
            let mut out = grad.clone();
            for (o, &x) in out.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *o *= act.derivative(x);
            }
            out
        }
    }
}

fn cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let (n, k) = logits.shape();
    let mut grad = Matrix::zeros(n, k);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate().take(n) {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let y = label - 1;
        loss += z.ln() + max - row[y];
        let g = grad.row_mut(i);
        for c in 0..k {
            g[c] = (row[c] - max).exp() / z / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    (loss / n as f64, grad)
}

/// Mean cross-entropy plus `½λ Σ w²`, and its gradient for every slot.
pub fn loss_and_gradients(
    net: &StemVineNetwork,
    weights: &WeightSet,
    x: &Matrix,
    labels: &[usize],
    weight_decay: f64,
) -> Result<(f64, WeightSet)> {
    crate::eval::check_weights(net, weights)?;
    if x.cols() != net.input_dim() || x.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "batch is {}x{} with {} labels, network expects {} features",
            x.rows(),
            x.cols(),
            labels.len(),
            net.input_dim()
        )));
    }
    let k = net.output_dim();
    if let Some(&y) = labels.iter().find(|&&y| y == 0 || y > k) {
        return Err(Error::Label {
            label: y,
            classes: k,
        });
    }
    let trace = forward_unchecked(net, weights, x);
    let (ce, out_grad) = cross_entropy(trace.output(), labels);

    let mut grads: WeightSet = weights
        .iter()
        .map(|(id, w)| (id.clone(), w.scale(weight_decay)))
        .collect();
    let decay: f64 = weights
        .values()
        .map(|w| w.as_slice().iter().map(|v| v * v).sum::<f64>())
        .sum();

    let stem_ids: Vec<Option<SlotId>> = {
        let mut k = 0;
        net.stem
            .iter()
            .map(|el| {
                el.is_weight().then(|| {
                    k += 1;
                    SlotId::Stem(k)
                })
            })
            .collect()
    };
    let by_target = net.vines_by_target();
    let mut vgrad: Vec<Option<Matrix>> = vec![None; net.vertex_count()];
    *vgrad.last_mut().expect("output vertex") = Some(out_grad);

    let add = |slot: &mut Option<Matrix>, g: Matrix| match slot {
        Some(acc) => acc.add_assign(&g).expect("shapes checked"),
        None => *slot = Some(g),
    };

    for t in (1..net.vertex_count()).rev() {
        let Some(g) = vgrad[t].take() else { continue };
        for &vi in &by_target[t] {
            let vine = &net.vines[vi];
            let input = &trace.vertices[vine.u - 1];
            let gin = match &vine.body {
                VineBody::Identity => g.clone(),
                VineBody::Chain(els) => {
                    let outs = &trace.vine_outputs[vi];
                    let ids: Vec<Option<SlotId>> = {
                        let mut k = 0;
                        els.iter()
                            .map(|el| {
                                el.is_weight().then(|| {
                                    k += 1;
                                    SlotId::Vine {
                                        vine: vine.key(),
                                        index: k,
                                    }
                                })
                            })
                            .collect()
                    };
                    let mut cur = g.clone();
                    for e in (0..els.len()).rev() {
                        let h = if e == 0 { input } else { &outs[e - 1] };
                        let id = ids[e].as_ref();
                        cur = back_element(
                            &els[e],
                            id.map(|i| &weights[i]),
                            h,
                            &cur,
                            id.and_then(|i| grads.get_mut(i)),
                        );
                    }
                    cur
                }
            };
            add(&mut vgrad[vine.u - 1], gin);
        }
        let id = stem_ids[t - 1].as_ref();
        let gin = back_element(
            &net.stem[t - 1],
            id.map(|i| &weights[i]),
            &trace.vertices[t - 1],
            &g,
            id.and_then(|i| grads.get_mut(i)),
        );
        add(&mut vgrad[t - 1], gin);
    }
    Ok((ce + 0.5 * weight_decay * decay, grads))
}

/// Trains `net` on `data` from a seeded initialization.
pub fn train_tiny(
    net: &StemVineNetwork,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.check()?;
    check_trainable(net)?;
    if data.classes != net.output_dim() || data.input_dim() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset is {} features / {} classes, network is {} / {}",
            data.input_dim(),
            data.classes,
            net.input_dim(),
            net.output_dim()
        )));
    }
    let initial = init_weights(net, cfg.seed);
    let mut weights = initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let sub = data.subset(batch)?;
            let (loss, grads) =
                loss_and_gradients(net, &weights, &sub.x, &sub.labels, cfg.weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "loss diverged in epoch {}",
                    epoch + 1
                )));
            }
            for (id, g) in &grads {
                let w = weights.get_mut(id).expect("same slots");
                *w = w.sub(&g.scale(cfg.learning_rate))?;
            }
        }
    }
    let (final_loss, _) =
        loss_and_gradients(net, &weights, &data.x, &data.labels, cfg.weight_decay)?;
    if !final_loss.is_finite()
        || weights
            .values()
            .any(|w| w.as_slice().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Train("training produced non-finite values".into()));
    }

    let mut measured = Vec::new();
    for (id, w) in &weights {
        let s = w.spectral_norm()?;
        let b = w.sub(&initial[id])?.norm_2_1_of_transpose();
        measured.push((id.clone(), s, b));
    }
    let trained = net.map_profiles(|id, _| {
        let (_, s, b) = measured
            .iter()
            .find(|(k, _, _)| k == id)
            .expect("every slot");
        NormProfile::new(*s, *b).with_reference(initial[id].clone())
    });
    Ok(TrainedModel {
        net: trained,
        weights,
        initial,
        final_loss,
    })
}
