//! Stem-vine architecture model.
//!
//! Vertices are numbered from 1. Vertex 1 receives the input; stem element
//! `j` (1-based) maps vertex `j` to vertex `j + 1`, so a stem of `K` elements
//! has `K + 1` vertices. A vine `(u, v, copy)` reads the feature at vertex `u`
//! and its output is added to the feature at vertex `v`.

mod format;
mod template;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, ProfileBound, Result};
use crate::linalg::Matrix;

pub use format::{
    load_network, parse_network, parse_network_file, serialize_network, serialize_network_file,
    ArchitectureFile, SCHEMA_VERSION,
};
pub use template::{
    resnet34_template, ResNetProfiles, ResNetWidths, RESNET34_BLOCKS, RESNET34_PROJECTION_BLOCKS,
    RESNET34_STEM_WEIGHTS, RESNET34_WEIGHTED_VINES,
};

/// Relative slack allowed when checking a concrete weight against its profile.
pub const PROFILE_SLACK: f64 = 1e-9;

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Identity,
    /// `log(1 + eˣ)`. 1-Lipschitz but `σ(0) = log 2`, so norm propagation
    /// refuses it.
    Softplus,
}

impl Nonlinearity {
    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::LeakyRelu { .. } => "leaky_relu",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Identity => "identity",
            Nonlinearity::Softplus => "softplus",
        }
    }

    /// Lipschitz constant ρ with respect to the Euclidean norm.
    pub fn lipschitz(&self) -> f64 {
        // every built-in kind is 1-Lipschitz; leaky slope lies in (0, 1)
        1.0
    }

    pub fn zero_preserving(&self) -> bool {
        !matches!(self, Nonlinearity::Softplus)
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
            Nonlinearity::Softplus => {
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative at `x`, taking the right derivative at kinks.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Nonlinearity::Tanh => 1.0 - x.tanh().powi(2),
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Softplus => 1.0 / (1.0 + (-x).exp()),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match *self {
            Nonlinearity::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => {
                Err(format!("leaky_relu slope {slope} outside (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::LeakyRelu { slope } => write!(f, "leaky_relu({slope})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Declared bounds for one weight slot: `‖W‖_σ ≤ s` and
/// `‖(W − M)ᵀ‖_{2,1} ≤ b` for reference `M` (zero when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct NormProfile {
    pub s: f64,
    pub b: f64,
    pub reference: Option<Matrix>,
}

impl NormProfile {
    pub fn new(s: f64, b: f64) -> Self {
        Self {
            s,
            b,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: Matrix) -> Self {
        self.reference = Some(reference);
        self
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(format!("spectral bound s = {} must be positive", self.s));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(format!(
                "reference bound b = {} must be nonnegative",
                self.b
            ));
        }
        Ok(())
    }

    /// Measures `weight` and checks it against this profile.
    pub fn measure(&self, slot: &SlotId, weight: &Matrix) -> Result<MeasuredNorms> {
        let spectral = weight.spectral_norm()?;
        let distance = match &self.reference {
            Some(m) => weight
                .sub(m)
                .map_err(|e| Error::Dimension(format!("reference for {slot}: {e}")))?
                .norm_2_1_of_transpose(),
            None => weight.norm_2_1_of_transpose(),
        };
        if spectral > self.s * (1.0 + PROFILE_SLACK) {
            return Err(Error::ProfileViolation {
                slot: slot.clone(),
                bound: ProfileBound::Spectral,
                measured: spectral,
                declared: self.s,
            });
        }
        if distance > self.b * (1.0 + PROFILE_SLACK) {
            return Err(Error::ProfileViolation {
                slot: slot.clone(),
                bound: ProfileBound::ReferenceDistance,
                measured: distance,
                declared: self.b,
            });
        }
        Ok(MeasuredNorms { spectral, distance })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredNorms {
    pub spectral: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StemElement {
    Weight {
        in_dim: usize,
        out_dim: usize,
        profile: NormProfile,
    },
    Nonlin {
        dim: usize,
        act: Nonlinearity,
    },
}

impl StemElement {
    pub fn weight(in_dim: usize, out_dim: usize, profile: NormProfile) -> Self {
        StemElement::Weight {
            in_dim,
            out_dim,
            profile,
        }
    }

    pub fn nonlin(dim: usize, act: Nonlinearity) -> Self {
        StemElement::Nonlin { dim, act }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            StemElement::Weight { in_dim, .. } => *in_dim,
            StemElement::Nonlin { dim, .. } => *dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            StemElement::Weight { out_dim, .. } => *out_dim,
            StemElement::Nonlin { dim, .. } => *dim,
        }
    }

    pub fn is_weight(&self) -> bool {
        matches!(self, StemElement::Weight { .. })
    }

    pub fn profile(&self) -> Option<&NormProfile> {
        match self {
            StemElement::Weight { profile, .. } => Some(profile),
            StemElement::Nonlin { .. } => None,
        }
    }

    pub fn profile_mut(&mut self) -> Option<&mut NormProfile> {
        match self {
            StemElement::Weight { profile, .. } => Some(profile),
            StemElement::Nonlin { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VineBody {
    Identity,
    Chain(Vec<StemElement>),
}

impl VineBody {
    pub fn elements(&self) -> &[StemElement] {
        match self {
            VineBody::Identity => &[],
            VineBody::Chain(els) => els,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.elements().iter().filter(|e| e.is_weight()).count()
    }
}

/// Residual branch from vertex `u` to vertex `v`; `copy` distinguishes
/// parallel vines between the same pair of vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Vine {
    pub u: usize,
    pub v: usize,
    pub copy: usize,
    pub body: VineBody,
}

impl Vine {
    pub fn identity(u: usize, v: usize) -> Self {
        Self {
            u,
            v,
            copy: 1,
            body: VineBody::Identity,
        }
    }

    pub fn chain(u: usize, v: usize, elements: Vec<StemElement>) -> Self {
        Self {
            u,
            v,
            copy: 1,
            body: VineBody::Chain(elements),
        }
    }

    pub fn with_copy(mut self, copy: usize) -> Self {
        self.copy = copy;
        self
    }

    pub fn key(&self) -> VineKey {
        VineKey {
            u: self.u,
            v: self.v,
            copy: self.copy,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.body, VineBody::Identity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VineKey {
    pub u: usize,
    pub v: usize,
    pub copy: usize,
}

impl fmt::Display for VineKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V({},{},{})", self.u, self.v, self.copy)
    }
}

/// Identifier of a weight slot.
///
/// Stem weights are numbered by their order among stem weights (`A1`,
/// `A2`, ...); vine weights by their order inside the vine body
/// (`V15-19-1.A1`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotId {
    Stem(usize),
    Vine { vine: VineKey, index: usize },
}

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotId::Stem(k) => write!(f, "A{k}"),
            SlotId::Vine { vine, index } => {
                write!(f, "V{}-{}-{}.A{}", vine.u, vine.v, vine.copy, index)
            }
        }
    }
}

impl FromStr for SlotId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Param(format!("malformed slot id {s:?}"));
        let num = |t: &str| t.parse::<usize>().ok().filter(|&x| x > 0).ok_or_else(bad);
        if let Some(k) = s.strip_prefix('A') {
            return Ok(SlotId::Stem(num(k)?));
        }
        let rest = s.strip_prefix('V').ok_or_else(bad)?;
        let (triple, idx) = rest.split_once(".A").ok_or_else(bad)?;
        let parts: Vec<&str> = triple.split('-').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(SlotId::Vine {
            vine: VineKey {
                u: num(parts[0])?,
                v: num(parts[1])?,
                copy: num(parts[2])?,
            },
            index: num(idx)?,
        })
    }
}

/// Where a weight slot sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotLocation {
    /// Stem element index (1-based); the slot reads vertex `element`.
    Stem { element: usize },
    /// Element index inside the vine body (1-based).
    Vine { vine: VineKey, element: usize },
}

impl fmt::Display for SlotLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotLocation::Stem { element } => write!(f, "stem:{element}"),
            SlotLocation::Vine { vine, element } => {
                write!(f, "vine:{}-{}-{}:{element}", vine.u, vine.v, vine.copy)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotInfo {
    pub id: SlotId,
    pub location: SlotLocation,
    pub in_dim: usize,
    pub out_dim: usize,
    pub profile: NormProfile,
}

/// A broken structural rule, reported as data by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyStem,
    ZeroDim {
        place: String,
    },
    /// Adjacent elements disagree on the feature dimension at a vertex.
    DimMismatch {
        place: String,
        expected: usize,
        found: usize,
    },
    VineOrderViolation {
        vine: VineKey,
    },
    VineOutOfRange {
        vine: VineKey,
        vertex_count: usize,
    },
    VineAttachment {
        vine: VineKey,
        vertex: usize,
        rule: &'static str,
    },
    DuplicateVine {
        vine: VineKey,
    },
    InvalidParameter {
        place: String,
        reason: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyStem => f.write_str("stem has no elements"),
            Violation::ZeroDim { place } => write!(f, "{place}: zero dimension"),
            Violation::DimMismatch {
                place,
                expected,
                found,
            } => write!(f, "{place}: expected dimension {expected}, found {found}"),
            Violation::VineOrderViolation { vine } => {
                write!(f, "{vine}: start vertex must precede end vertex")
            }
            Violation::VineOutOfRange { vine, vertex_count } => {
                write!(f, "{vine}: vertices must lie in 1..={vertex_count}")
            }
            Violation::VineAttachment { vine, vertex, rule } => {
                write!(f, "{vine}: vertex {vertex} {rule}")
            }
            Violation::DuplicateVine { vine } => write!(f, "{vine}: duplicate vine triple"),
            Violation::InvalidParameter { place, reason } => write!(f, "{place}: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StemVineNetwork {
    pub stem: Vec<StemElement>,
    pub vines: Vec<Vine>,
}

impl StemVineNetwork {
    pub fn new(stem: Vec<StemElement>, vines: Vec<Vine>) -> Self {
        Self { stem, vines }
    }

    /// Builds a network and rejects it if [`validate`] reports anything.
    pub fn validated(stem: Vec<StemElement>, vines: Vec<Vine>) -> Result<Self> {
        let net = Self::new(stem, vines);
        net.ensure_valid()?;
        Ok(net)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Semantic(violations))
        }
    }

    pub fn vertex_count(&self) -> usize {
        vertex_count(self)
    }

    pub fn input_dim(&self) -> usize {
        self.stem.first().map(StemElement::in_dim).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.stem.last().map(StemElement::out_dim).unwrap_or(0)
    }

    /// Feature dimension at each vertex, index 0 being vertex 1.
    pub fn vertex_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.stem.len() + 1);
        dims.push(self.input_dim());
        dims.extend(self.stem.iter().map(StemElement::out_dim));
        dims
    }

    /// Maximum feature dimension over all stem vertices and vine bodies.
    pub fn width(&self) -> usize {
        let stem = self.vertex_dims().into_iter().max().unwrap_or(0);
        let vines = self
            .vines
            .iter()
            .flat_map(|v| v.body.elements())
            .flat_map(|e| [e.in_dim(), e.out_dim()])
            .max()
            .unwrap_or(0);
        stem.max(vines)
    }

    /// Vine indices grouped by end vertex (index 0 being vertex 1).
    pub(crate) fn vines_by_target(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertex_count()];
        for (i, vine) in self.vines.iter().enumerate() {
            if (1..=out.len()).contains(&vine.v) {
                out[vine.v - 1].push(i);
            }
        }
        out
    }

    /// Every weight slot: stem weights in order, then vine weights in vine
    /// order.
    pub fn weight_slots(&self) -> Vec<SlotInfo> {
        let mut slots = Vec::new();
        let mut k = 0;
        for (j, el) in self.stem.iter().enumerate() {
            if let StemElement::Weight {
                in_dim,
                out_dim,
                profile,
            } = el
            {
                k += 1;
                slots.push(SlotInfo {
                    id: SlotId::Stem(k),
                    location: SlotLocation::Stem { element: j + 1 },
                    in_dim: *in_dim,
                    out_dim: *out_dim,
                    profile: profile.clone(),
                });
            }
        }
        for vine in &self.vines {
            let mut k = 0;
            for (j, el) in vine.body.elements().iter().enumerate() {
                if let StemElement::Weight {
                    in_dim,
                    out_dim,
                    profile,
                } = el
                {
                    k += 1;
                    slots.push(SlotInfo {
                        id: SlotId::Vine {
                            vine: vine.key(),
                            index: k,
                        },
                        location: SlotLocation::Vine {
                            vine: vine.key(),
                            element: j + 1,
                        },
                        in_dim: *in_dim,
                        out_dim: *out_dim,
                        profile: profile.clone(),
                    });
                }
            }
        }
        slots
    }

    pub fn weight_count(&self) -> usize {
        self.stem.iter().filter(|e| e.is_weight()).count()
            + self
                .vines
                .iter()
                .map(|v| v.body.weight_count())
                .sum::<usize>()
    }

    pub fn profile_mut(&mut self, slot: &SlotId) -> Option<&mut NormProfile> {
        match slot {
            SlotId::Stem(k) => self
                .stem
                .iter_mut()
                .filter(|e| e.is_weight())
                .nth(k.checked_sub(1)?)
                .and_then(StemElement::profile_mut),
            SlotId::Vine { vine, index } => {
                let v = self.vines.iter_mut().find(|v| v.key() == *vine)?;
                match &mut v.body {
                    VineBody::Identity => None,
                    VineBody::Chain(els) => els
                        .iter_mut()
                        .filter(|e| e.is_weight())
                        .nth(index.checked_sub(1)?)
                        .and_then(StemElement::profile_mut),
                }
            }
        }
    }

    /// Applies `f` to every weight profile, stem and vine alike.
    pub fn map_profiles(&self, mut f: impl FnMut(&SlotId, &NormProfile) -> NormProfile) -> Self {
        let mut out = self.clone();
        for slot in self.weight_slots() {
            let updated = f(&slot.id, &slot.profile);
            *out.profile_mut(&slot.id).expect("slot exists") = updated;
        }
        out
    }
}

pub fn vertex_count(net: &StemVineNetwork) -> usize {
    net.stem.len() + 1
}

/// Checks every structural rule; an empty list means the network is valid.
pub fn validate(net: &StemVineNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    if net.stem.is_empty() {
        out.push(Violation::EmptyStem);
        return out;
    }
    check_chain(&net.stem, "stem", &mut out);

    let dims = net.vertex_dims();
    let count = net.vertex_count();
    let mut seen = BTreeSet::new();
    for vine in &net.vines {
        let key = vine.key();
        if vine.copy == 0 {
            out.push(Violation::InvalidParameter {
                place: key.to_string(),
                reason: "copy index must be positive".into(),
            });
        }
        if !seen.insert(key) {
            out.push(Violation::DuplicateVine { vine: key });
        }
        if vine.u < 1 || vine.v < 1 || vine.u > count || vine.v > count {
            out.push(Violation::VineOutOfRange {
                vine: key,
                vertex_count: count,
            });
            continue;
        }
        if vine.u >= vine.v {
            out.push(Violation::VineOrderViolation { vine: key });
            continue;
        }
        // vertex j (> 1) is produced by stem element j - 1
        let follows_nonlin = |vertex: usize| {
            vertex >= 2 && matches!(net.stem[vertex - 2], StemElement::Nonlin { .. })
        };
        if vine.u != 1 && !follows_nonlin(vine.u) {
            out.push(Violation::VineAttachment {
                vine: key,
                vertex: vine.u,
                rule: "is neither the input vertex nor after a nonlinearity",
            });
        }
        if !follows_nonlin(vine.v) {
            out.push(Violation::VineAttachment {
                vine: key,
                vertex: vine.v,
                rule: "does not follow a nonlinearity",
            });
        }
        let (din, dout) = (dims[vine.u - 1], dims[vine.v - 1]);
        match &vine.body {
            VineBody::Identity => {
                if din != dout {
                    out.push(Violation::DimMismatch {
                        place: format!("{key} identity body"),
                        expected: dout,
                        found: din,
                    });
                }
            }
            VineBody::Chain(els) => {
                let place = key.to_string();
                if els.is_empty() {
                    out.push(Violation::InvalidParameter {
                        place: place.clone(),
                        reason: "chain body is empty (use an identity body)".into(),
                    });
                    continue;
                }
                check_chain(els, &place, &mut out);
                if els[0].in_dim() != din {
                    out.push(Violation::DimMismatch {
                        place: format!("{place} input"),
                        expected: din,
                        found: els[0].in_dim(),
                    });
                }
                let last = els.last().expect("nonempty").out_dim();
                if last != dout {
                    out.push(Violation::DimMismatch {
                        place: format!("{place} output"),
                        expected: dout,
                        found: last,
                    });
                }
            }
        }
    }
    out
}

fn check_chain(els: &[StemElement], what: &str, out: &mut Vec<Violation>) {
    for (j, el) in els.iter().enumerate() {
        let place = format!("{what} element {}", j + 1);
        if el.in_dim() == 0 || el.out_dim() == 0 {
            out.push(Violation::ZeroDim {
                place: place.clone(),
            });
        }
        let param = match el {
            StemElement::Weight { profile, .. } => profile.check().err().or_else(|| {
                profile.reference.as_ref().and_then(|m| {
                    (m.shape() != (el.out_dim(), el.in_dim())).then(|| {
                        format!(
                            "reference is {}x{}, slot needs {}x{}",
                            m.rows(),
                            m.cols(),
                            el.out_dim(),
                            el.in_dim()
                        )
                    })
                })
            }),
            StemElement::Nonlin { act, .. } => act.check().err(),
        };
        if let Some(reason) = param {
            out.push(Violation::InvalidParameter {
                place: place.clone(),
                reason,
            });
        }
        if j > 0 && els[j - 1].out_dim() != el.in_dim() {
            out.push(Violation::DimMismatch {
                place,
                expected: els[j - 1].out_dim(),
                found: el.in_dim(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> NormProfile {
        NormProfile::new(1.0, 1.0)
    }

    fn block(d: usize) -> StemVineNetwork {
        StemVineNetwork::new(
            vec![
                StemElement::weight(d, d, p()),
                StemElement::nonlin(d, Nonlinearity::Relu),
                StemElement::weight(d, d, p()),
                StemElement::nonlin(d, Nonlinearity::Relu),
            ],
            vec![Vine::identity(1, 5)],
        )
    }

    #[test]
    fn chain_without_vines_is_valid() {
        let net = StemVineNetwork::new(
            vec![
                StemElement::weight(3, 4, p()),
                StemElement::nonlin(4, Nonlinearity::Relu),
                StemElement::weight(4, 2, p()),
            ],
            vec![],
        );
        assert!(validate(&net).is_empty());
        assert_eq!(net.vertex_count(), 4);
        assert_eq!(net.vertex_dims(), vec![3, 4, 4, 2]);
        assert_eq!(net.width(), 4);
    }

    #[test]
    fn single_weight_and_nonlin_has_three_vertices() {
        let net = StemVineNetwork::new(
            vec![
                StemElement::weight(2, 2, p()),
                StemElement::nonlin(2, Nonlinearity::Identity),
            ],
            vec![],
        );
        assert_eq!(vertex_count(&net), 3);
    }

    #[test]
    fn empty_stem_is_reported() {
        assert_eq!(
            validate(&StemVineNetwork::new(vec![], vec![])),
            vec![Violation::EmptyStem]
        );
    }

    #[test]
    fn vine_order_violation() {
        let mut net = block(3);
        net.vines = vec![Vine::identity(5, 3)];
        let v = validate(&net);
        assert!(
            matches!(v.as_slice(), [Violation::VineOrderViolation { .. }]),
            "{v:?}"
        );
    }

    #[test]
    fn vine_output_dim_mismatch() {
        let mut net = block(3);
        net.vines = vec![Vine::chain(1, 5, vec![StemElement::weight(3, 2, p())])];
        let v = validate(&net);
        assert!(
            matches!(
                v.as_slice(),
                [Violation::DimMismatch {
                    expected: 3,
                    found: 2,
                    ..
                }]
            ),
            "{v:?}"
        );
    }

    #[test]
    fn vine_must_land_after_nonlinearity() {
        let mut net = block(3);
        net.vines = vec![Vine::identity(1, 4)];
        let v = validate(&net);
        assert!(matches!(
            v.as_slice(),
            [Violation::VineAttachment { vertex: 4, .. }]
        ));
        net.vines = vec![Vine::identity(2, 5)];
        let v = validate(&net);
        assert!(matches!(
            v.as_slice(),
            [Violation::VineAttachment { vertex: 2, .. }]
        ));
    }

    #[test]
    fn duplicate_vine_and_out_of_range() {
        let mut net = block(3);
        net.vines = vec![Vine::identity(1, 5), Vine::identity(1, 5)];
        assert_eq!(
            validate(&net),
            vec![Violation::DuplicateVine {
                vine: VineKey {
                    u: 1,
                    v: 5,
                    copy: 1
                }
            }]
        );
        net.vines = vec![Vine::identity(1, 5), Vine::identity(1, 5).with_copy(2)];
        assert!(validate(&net).is_empty());
        net.vines = vec![Vine::identity(1, 9)];
        assert!(matches!(
            validate(&net)[0],
            Violation::VineOutOfRange { .. }
        ));
    }

    #[test]
    fn bad_parameters_are_reported() {
        let net = StemVineNetwork::new(
            vec![
                StemElement::weight(2, 2, NormProfile::new(0.0, -1.0)),
                StemElement::nonlin(2, Nonlinearity::LeakyRelu { slope: 1.5 }),
            ],
            vec![],
        );
        assert_eq!(validate(&net).len(), 2);
    }

    #[test]
    fn slot_ids_round_trip_through_strings() {
        let ids = [
            SlotId::Stem(3),
            SlotId::Vine {
                vine: VineKey {
                    u: 15,
                    v: 19,
                    copy: 1,
                },
                index: 1,
            },
        ];
        for id in ids.clone() {
            assert_eq!(id.to_string().parse::<SlotId>().unwrap(), id);
        }
        assert_eq!(ids[1].to_string(), "V15-19-1.A1");
        for bad in ["", "A0", "B1", "V1-2.A1", "V1-2-3.B1", "Ax"] {
            assert!(bad.parse::<SlotId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn identity_vines_add_no_weight_slots() {
        let mut net = block(3);
        assert_eq!(net.weight_count(), 2);
        net.vines.push(Vine::identity(3, 5));
        assert_eq!(net.weight_count(), 2);
        net.vines
            .push(Vine::chain(1, 3, vec![StemElement::weight(3, 3, p())]));
        assert_eq!(net.weight_count(), 3);
        assert_eq!(net.weight_slots().len(), 3);
    }

    #[test]
    fn profile_measurement_checks_both_bounds() {
        let w = Matrix::from_rows(&[[3.0, 4.0]]);
        let slot = SlotId::Stem(1);
        let m = NormProfile::new(5.0, 5.0).measure(&slot, &w).unwrap();
        assert!((m.spectral - 5.0).abs() < 1e-9);
        assert_eq!(m.distance, 5.0);
        assert!(matches!(
            NormProfile::new(4.0, 5.0).measure(&slot, &w),
            Err(Error::ProfileViolation {
                bound: ProfileBound::Spectral,
                ..
            })
        ));
        let near = NormProfile::new(5.0, 0.1).with_reference(Matrix::from_rows(&[[3.0, 4.05]]));
        assert!(near.measure(&slot, &w).is_ok());
        let far = NormProfile::new(5.0, 0.1).with_reference(Matrix::from_rows(&[[0.0, 0.0]]));
        assert!(matches!(
            far.measure(&slot, &w),
            Err(Error::ProfileViolation {
                bound: ProfileBound::ReferenceDistance,
                ..
            })
        ));
    }
}
