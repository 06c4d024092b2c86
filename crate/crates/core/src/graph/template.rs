//! The 34-layer residual network in stem-vine form.
//!
//! Stem: `A1, σ1, A2, σ2, …, A33, σ33, σ34, A34, σ35` (69 elements, 70
//! vertices). Block `i` (1..=16) is `A(2i), σ(2i), A(2i+1), σ(2i+1)` and is
//! bridged by the vine `V(4i−1, 4i+3, 1)`. Blocks 4, 8 and 14 change the
//! stage width and their vines carry one projection matrix; the other 13
//! vines are identities.

use crate::error::{Error, Result};

use super::{Nonlinearity, NormProfile, StemElement, StemVineNetwork, Vine};

pub const RESNET34_STEM_WEIGHTS: usize = 34;
pub const RESNET34_BLOCKS: usize = 16;
/// Blocks whose vine carries a projection matrix.
pub const RESNET34_PROJECTION_BLOCKS: [usize; 3] = [4, 8, 14];
/// `(u, v, copy)` of the weighted vines.
pub const RESNET34_WEIGHTED_VINES: [(usize, usize, usize); 3] =
    [(15, 19, 1), (31, 35, 1), (55, 59, 1)];

/// Feature widths. Stages hold 3, 4, 6 and 3 blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResNetWidths {
    pub input: usize,
    pub stages: [usize; 4],
    pub classes: usize,
}

impl ResNetWidths {
    pub fn uniform(d: usize) -> Self {
        Self {
            input: d,
            stages: [d; 4],
            classes: d,
        }
    }

    fn stage_of_block(block: usize) -> usize {
        match block {
            1..=3 => 0,
            4..=7 => 1,
            8..=13 => 2,
            _ => 3,
        }
    }
}

/// Norm profiles: 34 for the stem weights, 3 for the vine projections in
/// block order 4, 8, 14.
#[derive(Debug, Clone, PartialEq)]
pub struct ResNetProfiles {
    pub stem: Vec<NormProfile>,
    pub vines: Vec<NormProfile>,
}

impl ResNetProfiles {
    pub fn uniform(s: f64, b: f64) -> Self {
        Self {
            stem: vec![NormProfile::new(s, b); RESNET34_STEM_WEIGHTS],
            vines: vec![NormProfile::new(s, b); RESNET34_PROJECTION_BLOCKS.len()],
        }
    }
}

pub fn resnet34_template(
    profiles: &ResNetProfiles,
    widths: &ResNetWidths,
) -> Result<StemVineNetwork> {
    if profiles.stem.len() != RESNET34_STEM_WEIGHTS {
        return Err(Error::Template(format!(
            "expected {RESNET34_STEM_WEIGHTS} stem profiles, got {}",
            profiles.stem.len()
        )));
    }
    if profiles.vines.len() != RESNET34_PROJECTION_BLOCKS.len() {
        return Err(Error::Template(format!(
            "expected {} vine profiles, got {}",
            RESNET34_PROJECTION_BLOCKS.len(),
            profiles.vines.len()
        )));
    }
    if widths.input == 0 || widths.classes == 0 || widths.stages.contains(&0) {
        return Err(Error::Template("widths must be positive".into()));
    }

    let relu = Nonlinearity::Relu;
    let st = widths.stages;
    let mut stem = Vec::with_capacity(69);
    stem.push(StemElement::weight(
        widths.input,
        st[0],
        profiles.stem[0].clone(),
    ));
    stem.push(StemElement::nonlin(st[0], relu));

    let mut vines = Vec::with_capacity(RESNET34_BLOCKS);
    let mut projections = profiles.vines.iter();
    for block in 1..=RESNET34_BLOCKS {
        let prev = if block == 1 {
            st[0]
        } else {
            st[ResNetWidths::stage_of_block(block - 1)]
        };
        let cur = st[ResNetWidths::stage_of_block(block)];
        let first = 2 * block;
        stem.push(StemElement::weight(
            prev,
            cur,
            profiles.stem[first - 1].clone(),
        ));
        stem.push(StemElement::nonlin(cur, relu));
        stem.push(StemElement::weight(cur, cur, profiles.stem[first].clone()));
        stem.push(StemElement::nonlin(cur, relu));

        let (u, v) = (4 * block - 1, 4 * block + 3);
        let vine = if RESNET34_PROJECTION_BLOCKS.contains(&block) {
            let profile = projections
                .next()
                .expect("three projection profiles")
                .clone();
            Vine::chain(u, v, vec![StemElement::weight(prev, cur, profile)])
        } else {
            if prev != cur {
                return Err(Error::Template(format!(
                    "identity vine of block {block} needs equal widths, got {prev} and {cur}"
                )));
            }
            Vine::identity(u, v)
        };
        vines.push(vine);
    }

    // σ34 sits after the last vine junction and cannot merge with σ33
    stem.push(StemElement::nonlin(st[3], relu));
    stem.push(StemElement::weight(
        st[3],
        widths.classes,
        profiles.stem[RESNET34_STEM_WEIGHTS - 1].clone(),
    ));
    stem.push(StemElement::nonlin(widths.classes, Nonlinearity::Identity));

    let net = StemVineNetwork::new(stem, vines);
    net.ensure_valid()
        .map_err(|e| Error::Template(format!("template failed validation: {e}")))?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate, SlotId, StemElement};

    #[test]
    fn structural_constants() {
        let net = resnet34_template(
            &ResNetProfiles::uniform(1.0, 1.0),
            &ResNetWidths::uniform(4),
        )
        .unwrap();
        assert_eq!(net.vertex_count(), 70);
        assert_eq!(net.stem.len(), 69);
        assert_eq!(net.vines.len(), 16);
        assert!(validate(&net).is_empty());
        let weighted: Vec<_> = net
            .vines
            .iter()
            .filter(|v| !v.is_identity())
            .map(|v| (v.u, v.v, v.copy))
            .collect();
        assert_eq!(weighted, RESNET34_WEIGHTED_VINES.to_vec());
        assert_eq!(net.weight_count(), 37);
        assert_eq!(net.stem.iter().filter(|e| e.is_weight()).count(), 34);
        // σ33 and σ34 are adjacent
        assert!(matches!(net.stem[65], StemElement::Nonlin { .. }));
        assert!(matches!(net.stem[66], StemElement::Nonlin { .. }));
    }

    #[test]
    fn stage_widths_flow_through_projections() {
        let widths = ResNetWidths {
            input: 3,
            stages: [4, 5, 6, 7],
            classes: 2,
        };
        let net = resnet34_template(&ResNetProfiles::uniform(1.0, 1.0), &widths).unwrap();
        assert_eq!(net.input_dim(), 3);
        assert_eq!(net.output_dim(), 2);
        assert_eq!(net.width(), 7);
        let slots = net.weight_slots();
        let proj: Vec<_> = slots
            .iter()
            .filter(|s| matches!(s.id, SlotId::Vine { .. }))
            .map(|s| (s.in_dim, s.out_dim))
            .collect();
        assert_eq!(proj, vec![(4, 5), (5, 6), (6, 7)]);
    }

    #[test]
    fn profile_count_mismatch() {
        let mut p = ResNetProfiles::uniform(1.0, 1.0);
        p.stem.pop();
        assert!(matches!(
            resnet34_template(&p, &ResNetWidths::uniform(2)),
            Err(Error::Template(_))
        ));
        let mut p = ResNetProfiles::uniform(1.0, 1.0);
        p.vines.push(NormProfile::new(1.0, 1.0));
        assert!(matches!(
            resnet34_template(&p, &ResNetWidths::uniform(2)),
            Err(Error::Template(_))
        ));
    }
}
