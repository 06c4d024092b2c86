//! Covering-number bounds for stem-vine networks.
//!
//! The cover of the whole hypothesis class is built constructively, vertex
//! by vertex, from one single-matrix cover per weight slot:
//!
//! * a weight slot with spectral bound `s` whose input is covered at radius
//!   `r` is covered at radius `(s + 1)·r`, using a single-matrix cover of
//!   resolution `r` for the slot itself;
//! * a `ρ`-Lipschitz nonlinearity maps a radius `r` cover to a `ρ·r` cover
//!   at no cost;
//! * at a vertex where vines land, the radii of the stem branch and of every
//!   vine branch add up, and the cover sizes multiply. An identity vine
//!   passes its input cover through unchanged and adds no factor.
//!
//! Setting the input radius to `1/ᾱ`, where `ᾱ` is the total expansion from
//! input to output, makes the output radius exactly 1. Scaling by `ε` then
//! gives `log N(H, ε) ≤ R/ε²` with `R` the sum of the per-slot terms
//! `b²·‖F_in‖²/ε̂² · log(2W²)`.
//!
//! The feature norms `‖F_in‖` follow the same sweep with gains `s` and `ρ`
//! (using `σ(0) = 0`), and sum at vine junctions by the triangle inequality.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{
    NormProfile, SlotId, SlotLocation, StemElement, StemVineNetwork, VineBody, VineKey,
};

/// Single-matrix covering bound `⌈a²B²/ε²⌉ · log(2dm)`.
///
/// Bounds the log covering number, under the Frobenius norm, of
/// `{X·Wᵀ : ‖Wᵀ‖_{2,1} ≤ a}` for `X` with `‖X‖_F ≤ B`, `d` input features and
/// `m` outputs.
pub fn maurey_log_cover(a: f64, b: f64, d: usize, m: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Param(format!(
            "cover radius must be positive, got {eps}"
        )));
    }
    if !(a >= 0.0 && a.is_finite() && b >= 0.0 && b.is_finite()) {
        return Err(Error::Param(format!(
            "norm bounds must be nonnegative, got a={a}, B={b}"
        )));
    }
    if d == 0 || m == 0 {
        return Err(Error::Param("dimensions must be positive".into()));
    }
    let count = (a * a * b * b / (eps * eps)).ceil();
    Ok(count * (2.0 * d as f64 * m as f64).ln())
}

/// Output radius of a chain cover: `Σ_j ε_j ρ_j ∏_{l>j} ρ_l s_l`.
pub fn chain_radius(radii: &[f64], lipschitz: &[f64], spectral: &[f64]) -> Result<f64> {
    if radii.len() != lipschitz.len() || radii.len() != spectral.len() {
        return Err(Error::Param(format!(
            "sequence lengths differ: {} radii, {} Lipschitz constants, {} spectral bounds",
            radii.len(),
            lipschitz.len(),
            spectral.len()
        )));
    }
    let mut total = 0.0;
    // walk backwards carrying ∏_{l>j} ρ_l s_l
    let mut tail = 1.0;
    for j in (0..radii.len()).rev() {
        total += radii[j] * lipschitz[j] * tail;
        tail *= lipschitz[j] * spectral[j];
    }
    Ok(total)
}

/// Result of one forward sweep over the network with per-element gains.
struct Sweep {
    vertex: Vec<f64>,
    slot_inputs: BTreeMap<SlotId, f64>,
    vine_outputs: BTreeMap<VineKey, f64>,
}

/// Propagates a scalar through the network: weight slots multiply by
/// `weight_gain(profile)`, nonlinearities by their Lipschitz constant, and
/// vine outputs are added at their end vertex.
fn sweep(net: &StemVineNetwork, start: f64, weight_gain: impl Fn(&NormProfile) -> f64) -> Sweep {
    let by_target = net.vines_by_target();
    let gain = |el: &StemElement| match el {
        StemElement::Weight { profile, .. } => weight_gain(profile),
        StemElement::Nonlin { act, .. } => act.lipschitz(),
    };
    let mut vertex = Vec::with_capacity(net.vertex_count());
    vertex.push(start);
    let mut slot_inputs = BTreeMap::new();
    let mut vine_outputs = BTreeMap::new();
    let mut k = 0;
    for (j, el) in net.stem.iter().enumerate() {
        if el.is_weight() {
            k += 1;
            slot_inputs.insert(SlotId::Stem(k), vertex[j]);
        }
        let mut next = gain(el) * vertex[j];
        for &vi in &by_target[j + 1] {
            let vine = &net.vines[vi];
            let mut value = vertex[vine.u - 1];
            if let VineBody::Chain(els) = &vine.body {
                let mut idx = 0;
                for el in els {
                    if el.is_weight() {
                        idx += 1;
                        slot_inputs.insert(
                            SlotId::Vine {
                                vine: vine.key(),
                                index: idx,
                            },
                            value,
                        );
                    }
                    value *= gain(el);
                }
            }
            vine_outputs.insert(vine.key(), value);
            next += value;
        }
        vertex.push(next);
    }
    Sweep {
        vertex,
        slot_inputs,
        vine_outputs,
    }
}

fn check_norm_inputs(net: &StemVineNetwork, input_norm: f64) -> Result<()> {
    net.ensure_valid()?;
    if !(input_norm >= 0.0 && input_norm.is_finite()) {
        return Err(Error::Param(format!(
            "input norm must be finite and nonnegative, got {input_norm}"
        )));
    }
    let all = net
        .stem
        .iter()
        .chain(net.vines.iter().flat_map(|v| v.body.elements()));
    for el in all {
        if let StemElement::Nonlin { act, .. } = el {
            if !act.zero_preserving() {
                return Err(Error::Unsupported(format!(
                    "norm propagation needs σ(0) = 0, but {act} does not preserve zero"
                )));
            }
        }
    }
    Ok(())
}

/// Upper bounds on the Frobenius norm of the feature at every vertex and at
/// the input of every weight slot.
#[derive(Debug, Clone, PartialEq)]
pub struct NormBounds {
    /// Index 0 is vertex 1 (the input).
    pub vertex: Vec<f64>,
    pub slot_inputs: BTreeMap<SlotId, f64>,
}

pub fn propagate_norms(net: &StemVineNetwork, input_norm: f64) -> Result<NormBounds> {
    check_norm_inputs(net, input_norm)?;
    let s = sweep(net, input_norm, |p| p.s);
    Ok(NormBounds {
        vertex: s.vertex,
        slot_inputs: s.slot_inputs,
    })
}

/// Lipschitz constant of the whole network implied by the profile bounds,
/// with respect to the Euclidean (Frobenius) norm.
pub fn lipschitz_bound(net: &StemVineNetwork) -> Result<f64> {
    net.ensure_valid()?;
    Ok(*sweep(net, 1.0, |p| p.s)
        .vertex
        .last()
        .expect("output vertex"))
}

/// Normalized cover radii (output radius 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusTable {
    /// Total radius expansion from input to output.
    pub alpha_bar: f64,
    /// Index 0 is vertex 1; `vertex[0] = 1/ᾱ` and the last entry is 1.
    pub vertex: Vec<f64>,
    /// Radius of each vine's output cover.
    pub vines: BTreeMap<VineKey, f64>,
    /// Resolution of each slot's single-matrix cover (its input radius).
    pub slots: BTreeMap<SlotId, f64>,
}

pub fn propagate_radii(net: &StemVineNetwork) -> Result<RadiusTable> {
    net.ensure_valid()?;
    let raw = sweep(net, 1.0, |p| p.s + 1.0);
    let alpha_bar = *raw.vertex.last().expect("output vertex");
    let norm = |x: f64| x / alpha_bar;
    Ok(RadiusTable {
        alpha_bar,
        vertex: raw.vertex.iter().copied().map(norm).collect(),
        vines: raw
            .vine_outputs
            .into_iter()
            .map(|(k, v)| (k, norm(v)))
            .collect(),
        slots: raw
            .slot_inputs
            .into_iter()
            .map(|(k, v)| (k, norm(v)))
            .collect(),
    })
}

/// Norm bounds and normalized radii side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationTable {
    pub vertex_norms: Vec<f64>,
    pub vertex_radii: Vec<f64>,
    pub vine_radii: BTreeMap<VineKey, f64>,
    pub alpha_bar: f64,
}

pub fn propagation_table(net: &StemVineNetwork, input_norm: f64) -> Result<PropagationTable> {
    let norms = propagate_norms(net, input_norm)?;
    let radii = propagate_radii(net)?;
    Ok(PropagationTable {
        vertex_norms: norms.vertex,
        vertex_radii: radii.vertex,
        vine_radii: radii.vines,
        alpha_bar: radii.alpha_bar,
    })
}

/// One weight slot's contribution to `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTerm {
    pub slot: SlotId,
    pub location: SlotLocation,
    pub s: f64,
    pub b: f64,
    /// Bound on `‖F_in‖_F`, the Frobenius norm of the slot's input feature.
    pub input_norm_bound: f64,
    /// Normalized cover resolution `ε̂` for this slot.
    pub radius_share: f64,
    /// `log(2W²)`.
    pub log_width: f64,
    /// `b² ‖F_in‖² / ε̂² · log(2W²)`.
    pub log_term: f64,
}

/// One term per weight matrix, stem slots first. Identity vines contribute
/// nothing.
pub fn covering_terms(net: &StemVineNetwork, input_norm: f64) -> Result<Vec<LayerTerm>> {
    let norms = propagate_norms(net, input_norm)?;
    let radii = propagate_radii(net)?;
    let w = net.width() as f64;
    let log_width = (2.0 * w * w).ln();
    Ok(net
        .weight_slots()
        .into_iter()
        .map(|slot| {
            let input_norm_bound = norms.slot_inputs[&slot.id];
            let radius_share = radii.slots[&slot.id];
            let b = slot.profile.b;
            let ratio = b * input_norm_bound / radius_share;
            LayerTerm {
                slot: slot.id,
                location: slot.location,
                s: slot.profile.s,
                b,
                input_norm_bound,
                radius_share,
                log_width,
                log_term: ratio * ratio * log_width,
            }
        })
        .collect())
}

/// `R` such that `log N(H, ε) ≤ R/ε²` for every `ε > 0`.
pub fn total_r(net: &StemVineNetwork, input_norm: f64) -> Result<f64> {
    Ok(covering_terms(net, input_norm)?
        .iter()
        .map(|t| t.log_term)
        .sum())
}
