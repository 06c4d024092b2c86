//! Rademacher and generalization bounds, and the certificate report.
//!
//! With `log N(H, ε) ≤ R/ε²`, the entropy integral with lower limit
//! `α = 1/n` gives
//!
//! ```text
//! Rad ≤ 4/n^{3/2} + (18/n)·√R·ln n
//! ```
//!
//! and with probability at least `1 − δ` over the sample the expected 0-1
//! risk is at most
//!
//! ```text
//! ramp + 8/n^{3/2} + (36/n)·√R·ln n + 3·√(ln(1/δ)/(2n)).
//! ```

use std::fmt::Write as _;

use serde::Serialize;

use crate::bounds::{covering_terms, lipschitz_bound, propagate_radii, LayerTerm};
use crate::error::{Error, Result};
use crate::eval::{check_weights, predict, ramp_risk_of_outputs, zero_one_of_outputs};
use crate::eval::{LabeledDataset, WeightSet};
use crate::graph::{StemVineNetwork, PROFILE_SLACK};
use crate::TOOL_VERSION;

/// Schema tag of the emitted report.
pub const REPORT_VERSION: &str = "svcert/1";

fn check_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Param(format!(
            "sample size must be at least 2, got {n}"
        )));
    }
    Ok(n as f64)
}

fn check_r(r: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Param(format!(
            "R must be finite and nonnegative, got {r}"
        )));
    }
    Ok(())
}

/// Entropy-integral bound with `α = 1/n`: `4/n^{3/2} + (18/n)·√R·ln n`.
pub fn dudley_bound(r: f64, n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    check_r(r)?;
    Ok(4.0 / nf.powf(1.5) + 18.0 / nf * r.sqrt() * nf.ln())
}

/// Entropy-integral bound at its minimizing lower limit `α = 3√(R/n)`:
/// `4α/√n + (12/n)·√R·ln(√n/α)`. Returns 0 at `R = 0`.
pub fn dudley_bound_optimal_alpha(r: f64, n: usize) -> Result<f64> {
    let nf = check_n(n)?;
    check_r(r)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    let alpha = 3.0 * (r / nf).sqrt();
    Ok(4.0 * alpha / nf.sqrt() + 12.0 / nf * r.sqrt() * (nf.sqrt() / alpha).ln())
}

/// The additive pieces of the generalization bound, in summation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundComponents {
    pub ramp: f64,
    pub sample: f64,
    pub complexity: f64,
    pub confidence: f64,
}

impl BoundComponents {
    pub fn new(ramp_risk: f64, r: f64, n: usize, delta: f64) -> Result<Self> {
        let nf = check_n(n)?;
        check_r(r)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Param(format!("δ must lie in (0, 1), got {delta}")));
        }
        if !(0.0..=1.0).contains(&ramp_risk) {
            return Err(Error::Param(format!(
                "ramp risk must lie in [0, 1], got {ramp_risk}"
            )));
        }
        Ok(Self {
            ramp: ramp_risk,
            sample: 8.0 / nf.powf(1.5),
            complexity: 36.0 / nf * r.sqrt() * nf.ln(),
            confidence: 3.0 * ((1.0 / delta).ln() / (2.0 * nf)).sqrt(),
        })
    }

    pub fn total(&self) -> f64 {
        self.ramp + self.sample + self.complexity + self.confidence
    }

    /// Everything except the empirical ramp risk.
    pub fn remainder(&self) -> f64 {
        self.sample + self.complexity + self.confidence
    }
}

/// `ramp + 8/n^{3/2} + (36/n)·√R·ln n + 3·√(ln(1/δ)/(2n))`.
pub fn generalization_bound(ramp_risk: f64, r: f64, n: usize, delta: f64) -> Result<f64> {
    Ok(BoundComponents::new(ramp_risk, r, n, delta)?.total())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSummary {
    pub vertices: usize,
    pub stem_elements: usize,
    pub stem_weights: usize,
    pub vines: usize,
    pub identity_vines: usize,
    pub weight_matrices: usize,
    pub width: usize,
}

impl NetworkSummary {
    pub fn of(net: &StemVineNetwork) -> Self {
        Self {
            vertices: net.vertex_count(),
            stem_elements: net.stem.len(),
            stem_weights: net.stem.iter().filter(|e| e.is_weight()).count(),
            vines: net.vines.len(),
            identity_vines: net.vines.iter().filter(|v| v.is_identity()).count(),
            weight_matrices: net.weight_count(),
            width: net.width(),
        }
    }
}

/// A complete generalization certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub tool_version: String,
    pub network: NetworkSummary,
    pub terms: Vec<LayerTerm>,
    pub alpha_bar: f64,
    pub lipschitz: f64,
    pub input_norm: f64,
    pub r: f64,
    pub n: usize,
    pub lambda: f64,
    pub delta: f64,
    pub empirical_ramp_risk: f64,
    pub training_error: f64,
    pub rademacher_bound: f64,
    pub components: BoundComponents,
    pub generalization_bound: f64,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    version: &'static str,
    tool_version: &'a str,
    network: &'a NetworkSummary,
    sample: SampleDoc,
    complexity: ComplexityDoc,
    bound: BoundDoc,
    term: Vec<TermDoc>,
}

#[derive(Serialize)]
struct SampleDoc {
    n: usize,
    lambda: f64,
    delta: f64,
    input_norm: f64,
    empirical_ramp_risk: f64,
    training_error: f64,
}

#[derive(Serialize)]
struct ComplexityDoc {
    alpha_bar: f64,
    lipschitz: f64,
    r: f64,
    rademacher_bound: f64,
}

#[derive(Serialize)]
struct BoundDoc {
    ramp: f64,
    sample: f64,
    complexity: f64,
    confidence: f64,
    generalization: f64,
}

#[derive(Serialize)]
struct TermDoc {
    slot: String,
    location: String,
    s: f64,
    b: f64,
    input_norm_bound: f64,
    radius_share: f64,
    log_width: f64,
    log_term: f64,
}

/// Column header of [`BoundReport::to_csv`].
pub const CSV_HEADER: &str = "slot,location,s,b,input_norm_bound,radius_share,log_width,log_term";

impl BoundReport {
    /// The `svcert/1` TOML document.
    pub fn to_toml(&self) -> String {
        let doc = ReportDoc {
            version: REPORT_VERSION,
            tool_version: &self.tool_version,
            network: &self.network,
            sample: SampleDoc {
                n: self.n,
                lambda: self.lambda,
                delta: self.delta,
                input_norm: self.input_norm,
                empirical_ramp_risk: self.empirical_ramp_risk,
                training_error: self.training_error,
            },
            complexity: ComplexityDoc {
                alpha_bar: self.alpha_bar,
                lipschitz: self.lipschitz,
                r: self.r,
                rademacher_bound: self.rademacher_bound,
            },
            bound: BoundDoc {
                ramp: self.components.ramp,
                sample: self.components.sample,
                complexity: self.components.complexity,
                confidence: self.components.confidence,
                generalization: self.generalization_bound,
            },
            term: self
                .terms
                .iter()
                .map(|t| TermDoc {
                    slot: t.slot.to_string(),
                    location: t.location.to_string(),
                    s: t.s,
                    b: t.b,
                    input_norm_bound: t.input_norm_bound,
                    radius_share: t.radius_share,
                    log_width: t.log_width,
                    log_term: t.log_term,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("report fields are finite and serializable")
    }

    /// The per-term table as CSV, header first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for t in &self.terms {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                t.slot,
                t.location,
                t.s,
                t.b,
                t.input_norm_bound,
                t.radius_share,
                t.log_width,
                t.log_term
            );
        }
        out
    }
}

/// Measures every bound weight against its declared profile, tightens the
/// profile to the measured values and assembles the certificate.
///
/// A weight outside its declared profile refuses the certificate with
/// [`Error::ProfileViolation`].
pub fn certify(
    net: &StemVineNetwork,
    weights: &WeightSet,
    data: &LabeledDataset,
    lambda: f64,
    delta: f64,
) -> Result<BoundReport> {
    net.ensure_valid()?;
    check_weights(net, weights)?;
    if data.classes != net.output_dim() {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, network outputs {}",
            data.classes,
            net.output_dim()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Param(format!(
            "margin λ must be positive, got {lambda}"
        )));
    }
    let n = data.len();
    check_n(n)?;

    let mut measured = Vec::new();
    for slot in net.weight_slots() {
        let m = slot.profile.measure(&slot.id, &weights[&slot.id])?;
        measured.push((slot.id, m));
    }
    let tightened = net.map_profiles(|id, p| {
        let (_, m) = measured
            .iter()
            .find(|(k, _)| k == id)
            .expect("every slot measured");
        let mut q = p.clone();
        let s = m.spectral * (1.0 + PROFILE_SLACK);
        if s > 0.0 && s < p.s {
            q.s = s;
        }
        q.b = m.distance.min(p.b);
        q
    });

    let input_norm = data.x.frobenius_norm();
    let terms = covering_terms(&tightened, input_norm)?;
    let r: f64 = terms.iter().map(|t| t.log_term).sum();
    let alpha_bar = propagate_radii(&tightened)?.alpha_bar;
    let lipschitz = lipschitz_bound(&tightened)?;

    let logits = predict(net, weights, &data.x)?;
    let ramp = ramp_risk_of_outputs(&logits, &data.labels, lambda)?;
    let training_error = zero_one_of_outputs(&logits, &data.labels)?;
    let components = BoundComponents::new(ramp, r, n, delta)?;

    Ok(BoundReport {
        tool_version: TOOL_VERSION.to_string(),
        network: NetworkSummary::of(net),
        terms,
        alpha_bar,
        lipschitz,
        input_norm,
        r,
        n,
        lambda,
        delta,
        empirical_ramp_risk: ramp,
        training_error,
        rademacher_bound: dudley_bound(r, n)?,
        components,
        generalization_bound: components.total(),
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::graph::{Nonlinearity, NormProfile, SlotId, StemElement, Vine};
    use crate::linalg::Matrix;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn dudley_cases() {
        assert_eq!(dudley_bound(0.0, 100).unwrap(), 4.0 / 1000.0);
        let v = dudley_bound(4.0, 100).unwrap();
        assert!(rel(v, 1.661_861_266_955_712_892_492_953_847_4) < 1e-14);
        let (a, b) = (
            dudley_bound(1.0, 50).unwrap(),
            dudley_bound(4.0, 50).unwrap(),
        );
        let base = 4.0 / 50f64.powf(1.5);
        assert!(rel(b - base, 2.0 * (a - base)) < 1e-14);
        assert!(matches!(dudley_bound(1.0, 1), Err(Error::Param(_))));
        assert!(matches!(dudley_bound(-1.0, 10), Err(Error::Param(_))));
    }

    #[test]
    fn optimal_alpha_cases() {
        assert_eq!(dudley_bound_optimal_alpha(0.0, 10).unwrap(), 0.0);
        let v = dudley_bound_optimal_alpha(4.0, 100).unwrap();
        assert!(rel(v, 0.915_218_572_022_408_728_133_642_232_2) < 1e-14);
        for n in [2usize, 10, 100, 10_000] {
            for r in [0.01, 0.5, 4.0, 30.0] {
                let alpha = 3.0 * (r / n as f64).sqrt();
                if alpha <= (n as f64).sqrt() {
                    let opt = dudley_bound_optimal_alpha(r, n).unwrap();
                    assert!(opt <= dudley_bound(r, n).unwrap() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn generalization_cases() {
        let v = generalization_bound(0.1, 1.0, 10_000, 0.01).unwrap();
        assert!(rel(v, 0.178_688_039_220_668_648_375_748_248_75) < 1e-12);
        let v = generalization_bound(0.0, 0.0, 2, (-1.0f64).exp()).unwrap();
        assert!(rel(v, 2.0 * 2f64.sqrt() + 1.5) < 1e-15);
        let lo = generalization_bound(0.2, 3.0, 500, 0.01).unwrap();
        let hi = generalization_bound(0.2, 3.0, 500, 0.1).unwrap();
        assert!(lo > hi);
        assert!(generalization_bound(0.0, 0.0, 10, 0.0).is_err());
        assert!(generalization_bound(0.0, 0.0, 10, 1.0).is_err());
        assert!(generalization_bound(1.5, 0.0, 10, 0.5).is_err());
    }

    #[test]
    fn monotone_on_sample_grid() {
        let mut prev = f64::INFINITY;
        for n in [8usize, 16, 100, 1000, 10_000, 100_000, 1_000_000] {
            let c = BoundComponents::new(0.3, 2.0, n, 0.05).unwrap();
            assert!(c.remainder() < prev);
            prev = c.remainder();
        }
        let a = generalization_bound(0.1, 1.0, 100, 0.05).unwrap();
        assert!(generalization_bound(0.1, 2.0, 100, 0.05).unwrap() > a);
        assert!(generalization_bound(0.2, 1.0, 100, 0.05).unwrap() > a);
    }

    fn toy() -> (StemVineNetwork, WeightSet, LabeledDataset) {
        let net = StemVineNetwork::new(
            vec![
                StemElement::weight(2, 2, NormProfile::new(5.0, 5.0)),
                StemElement::nonlin(2, Nonlinearity::Relu),
                StemElement::weight(2, 2, NormProfile::new(5.0, 5.0)),
                StemElement::nonlin(2, Nonlinearity::Identity),
            ],
            vec![Vine::identity(1, 3)],
        );
        let mut w = WeightSet::new();
        w.insert(
            SlotId::Stem(1),
            Matrix::from_rows(&[[1.0, 0.5], [-0.5, 1.0]]),
        );
        w.insert(
            SlotId::Stem(2),
            Matrix::from_rows(&[[2.0, 0.0], [0.0, -1.0]]),
        );
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.5, -0.5], [-1.0, 0.2]]);
        let data = LabeledDataset::new(x, vec![1, 2, 1, 2], 2).unwrap();
        (net, w, data)
    }

    #[test]
    fn certificate_is_consistent_and_deterministic() {
        let (net, w, data) = toy();
        let rep = certify(&net, &w, &data, 1.0, 0.05).unwrap();
        assert_eq!(rep.terms.len(), 2);
        assert_eq!(rep.r, rep.terms.iter().map(|t| t.log_term).sum::<f64>());
        let c = &rep.components;
        assert_eq!(
            rep.generalization_bound,
            c.ramp + c.sample + c.complexity + c.confidence
        );
        let direct = generalization_bound(rep.empirical_ramp_risk, rep.r, 4, 0.05).unwrap();
        assert_eq!(rep.generalization_bound, direct);
        assert!(rep.generalization_bound >= rep.empirical_ramp_risk);
        // profiles tightened to the measured norms
        assert!((rep.terms[1].s - 2.0).abs() < 1e-8);
        assert!((rep.terms[1].b - 3.0).abs() < 1e-12);
        let again = certify(&net, &w, &data, 1.0, 0.05).unwrap();
        assert_eq!(rep.to_toml(), again.to_toml());
        assert_eq!(rep.to_csv(), again.to_csv());
        assert!(rep.to_toml().starts_with("version = \"svcert/1\""));
        assert_eq!(rep.to_csv().lines().count(), 3);
    }

    #[test]
    fn zero_weights_give_zero_r() {
        let (net, mut w, data) = toy();
        for m in w.values_mut() {
            *m = Matrix::zeros(2, 2);
        }
        let rep = certify(&net, &w, &data, 1.0, 0.05).unwrap();
        assert_eq!(rep.r, 0.0);
        let expected = rep.empirical_ramp_risk
            + 8.0 / 4f64.powf(1.5)
            + 0.0
            + 3.0 * ((1.0 / 0.05f64).ln() / 8.0).sqrt();
        assert!(rel(rep.generalization_bound, expected) < 1e-15);
    }

    #[test]
    fn violated_profile_refuses_certificate() {
        let (mut net, w, data) = toy();
        net.profile_mut(&SlotId::Stem(2)).unwrap().s = 1.5;
        match certify(&net, &w, &data, 1.0, 0.05) {
            Err(Error::ProfileViolation { slot, .. }) => assert_eq!(slot, SlotId::Stem(2)),
            other => panic!("expected profile violation, got {other:?}"),
        }
        let (mut net, w, data) = toy();
        net.profile_mut(&SlotId::Stem(1)).unwrap().b = 0.1;
        assert!(matches!(
            certify(&net, &w, &data, 1.0, 0.05),
            Err(Error::ProfileViolation { .. })
        ));
    }

    #[test]
    fn report_parses_back_as_toml() {
        let (net, w, data) = toy();
        let rep = certify(&net, &w, &data, 0.5, 0.1).unwrap();
        let v: toml::Value = toml::from_str(&rep.to_toml()).unwrap();
        assert_eq!(
            v["bound"]["generalization"].as_float().unwrap(),
            rep.generalization_bound
        );
        assert_eq!(v["term"].as_array().unwrap().len(), 2);
        assert_eq!(v["network"]["vertices"].as_integer().unwrap(), 5);
    }
}
