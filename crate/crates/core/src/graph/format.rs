//! The `stemvine/1` architecture text format.
//!
//! The format is TOML:
//!
//! ```toml
//! version = "stemvine/1"
//!
//! [[stem]]
//! type = "weight"      # output-major matrix, out x in
//! in = 4
//! out = 8
//! s = 1.5              # spectral-norm bound
//! b = 0.3              # reference-distance bound
//!
//! [[stem]]
//! type = "nonlin"
//! dim = 8
//! kind = "relu"        # relu | leaky_relu | tanh | identity | softplus
//! # slope = 0.1        # required for leaky_relu, rejected otherwise
//!
//! [[vines]]            # no body: identity vine
//! u = 1
//! v = 3
//! copy = 1             # optional, defaults to 1
//!
//! [[vines]]
//! u = 1
//! v = 3
//! copy = 2
//! [[vines.body]]
//! type = "weight"
//! in = 4
//! out = 8
//! s = 1.0
//! b = 0.5
//!
//! [weights]            # optional, slot id -> SVM1 file relative to this file
//! A1 = "A1.svm"
//! [references]         # optional, slot id -> SVM1 reference matrix
//! A1 = "A1.init.svm"
//! ```
//!
//! Slot ids are `A<k>` for the k-th stem weight and `V<u>-<v>-<copy>.A<k>`
//! for the k-th weight inside a vine.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::linalg::load_matrix;

use super::{Nonlinearity, NormProfile, SlotId, StemElement, StemVineNetwork, Vine, VineBody};

pub const SCHEMA_VERSION: &str = "stemvine/1";

/// A parsed architecture file together with its optional matrix references.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureFile {
    pub network: StemVineNetwork,
    pub weights: BTreeMap<SlotId, PathBuf>,
    pub references: BTreeMap<SlotId, PathBuf>,
}

impl ArchitectureFile {
    pub fn new(network: StemVineNetwork) -> Self {
        Self {
            network,
            weights: BTreeMap::new(),
            references: BTreeMap::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchDoc {
    version: Spanned<String>,
    stem: Vec<ElementDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    vines: Vec<VineDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    weights: BTreeMap<String, Spanned<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    references: BTreeMap<String, Spanned<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementDoc {
    #[serde(rename = "type")]
    ty: Spanned<String>,
    #[serde(rename = "in", default, skip_serializing_if = "Option::is_none")]
    in_dim: Option<usize>,
    #[serde(rename = "out", default, skip_serializing_if = "Option::is_none")]
    out_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VineDoc {
    u: usize,
    v: usize,
    #[serde(default = "one")]
    copy: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    body: Vec<ElementDoc>,
}

fn one() -> usize {
    1
}

fn syntax_at(text: &str, offset: usize, message: impl Into<String>) -> Error {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn element_from_doc(text: &str, doc: ElementDoc) -> Result<StemElement> {
    let at = doc.ty.span().start;
    let need = |v: Option<usize>, key: &str| {
        v.ok_or_else(|| {
            syntax_at(
                text,
                at,
                format!("{} element needs `{key}`", doc.ty.get_ref()),
            )
        })
    };
    let needf = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| {
            syntax_at(
                text,
                at,
                format!("{} element needs `{key}`", doc.ty.get_ref()),
            )
        })
    };
    let reject = |present: bool, key: &str| {
        if present {
            Err(syntax_at(
                text,
                at,
                format!("`{key}` is not valid for a {} element", doc.ty.get_ref()),
            ))
        } else {
            Ok(())
        }
    };
    match doc.ty.get_ref().as_str() {
        "weight" => {
            reject(doc.dim.is_some(), "dim")?;
            reject(doc.kind.is_some(), "kind")?;
            reject(doc.slope.is_some(), "slope")?;
            Ok(StemElement::weight(
                need(doc.in_dim, "in")?,
                need(doc.out_dim, "out")?,
                NormProfile::new(needf(doc.s, "s")?, needf(doc.b, "b")?),
            ))
        }
        "nonlin" => {
            reject(doc.in_dim.is_some(), "in")?;
            reject(doc.out_dim.is_some(), "out")?;
            reject(doc.s.is_some(), "s")?;
            reject(doc.b.is_some(), "b")?;
            let dim = need(doc.dim, "dim")?;
            let kind = doc
                .kind
                .as_ref()
                .ok_or_else(|| syntax_at(text, at, "nonlin element needs `kind`"))?;
            let k_at = kind.span().start;
            let act = match (kind.get_ref().as_str(), doc.slope) {
                ("leaky_relu", Some(slope)) => Nonlinearity::LeakyRelu { slope },
                ("leaky_relu", None) => return Err(syntax_at(text, k_at, "leaky_relu needs a slope")),
                ("relu" | "tanh" | "identity" | "softplus", Some(_)) => {
                    return Err(syntax_at(text, k_at, "slope is only valid for leaky_relu"))
                }
                ("relu", None) => Nonlinearity::Relu,
                ("tanh", None) => Nonlinearity::Tanh,
                ("identity", None) => Nonlinearity::Identity,
                ("softplus", None) => Nonlinearity::Softplus,
                (other, _) => {
                    return Err(syntax_at(
                        text,
                        k_at,
                        format!(
                            "unknown nonlinearity {other:?}, expected relu, leaky_relu, tanh, identity or softplus"
                        ),
                    ))
                }
            };
            Ok(StemElement::nonlin(dim, act))
        }
        other => Err(syntax_at(
            text,
            at,
            format!("unknown element type {other:?}, expected weight or nonlin"),
        )),
    }
}

fn element_to_doc(el: &StemElement) -> ElementDoc {
    let mut doc = ElementDoc {
        ty: Spanned::new(0..0, String::new()),
        in_dim: None,
        out_dim: None,
        s: None,
        b: None,
        dim: None,
        kind: None,
        slope: None,
    };
    match el {
        StemElement::Weight {
            in_dim,
            out_dim,
            profile,
        } => {
            doc.ty = Spanned::new(0..0, "weight".into());
            doc.in_dim = Some(*in_dim);
            doc.out_dim = Some(*out_dim);
            doc.s = Some(profile.s);
            doc.b = Some(profile.b);
        }
        StemElement::Nonlin { dim, act } => {
            doc.ty = Spanned::new(0..0, "nonlin".into());
            doc.dim = Some(*dim);
            doc.kind = Some(Spanned::new(0..0, act.name().to_string()));
            if let Nonlinearity::LeakyRelu { slope } = act {
                doc.slope = Some(*slope);
            }
        }
    }
    doc
}

/// Parses architecture text. Structural problems are reported as
/// [`Error::Semantic`] with every violation found.
pub fn parse_network_file(text: &str) -> Result<ArchitectureFile> {
    let doc: ArchDoc = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        syntax_at(text, offset, e.message().to_string())
    })?;
    if doc.version.get_ref() != SCHEMA_VERSION {
        return Err(syntax_at(
            text,
            doc.version.span().start,
            format!(
                "unsupported version {:?}, expected {SCHEMA_VERSION:?}",
                doc.version.get_ref()
            ),
        ));
    }
    let stem = doc
        .stem
        .into_iter()
        .map(|el| element_from_doc(text, el))
        .collect::<Result<Vec<_>>>()?;
    let vines = doc
        .vines
        .into_iter()
        .map(|v| {
            let body = if v.body.is_empty() {
                VineBody::Identity
            } else {
                VineBody::Chain(
                    v.body
                        .into_iter()
                        .map(|el| element_from_doc(text, el))
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            Ok(Vine {
                u: v.u,
                v: v.v,
                copy: v.copy,
                body,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let network = StemVineNetwork::new(stem, vines);
    network.ensure_valid()?;

    let known: Vec<SlotId> = network.weight_slots().into_iter().map(|s| s.id).collect();
    let slot_table =
        |table: BTreeMap<String, Spanned<String>>| -> Result<BTreeMap<SlotId, PathBuf>> {
            table
                .into_iter()
                .map(|(key, path)| {
                    let id: SlotId = key
                        .parse()
                        .map_err(|e: Error| syntax_at(text, path.span().start, e.to_string()))?;
                    if !known.contains(&id) {
                        return Err(syntax_at(
                            text,
                            path.span().start,
                            format!("network has no weight slot {id}"),
                        ));
                    }
                    Ok((id, PathBuf::from(path.into_inner())))
                })
                .collect()
        };
    let weights = slot_table(doc.weights)?;
    let references = slot_table(doc.references)?;
    Ok(ArchitectureFile {
        network,
        weights,
        references,
    })
}

pub fn parse_network(text: &str) -> Result<StemVineNetwork> {
    parse_network_file(text).map(|f| f.network)
}

pub fn serialize_network_file(file: &ArchitectureFile) -> String {
    let net = &file.network;
    let table = |m: &BTreeMap<SlotId, PathBuf>| {
        m.iter()
            .map(|(k, v)| (k.to_string(), Spanned::new(0..0, v.display().to_string())))
            .collect()
    };
    let doc = ArchDoc {
        version: Spanned::new(0..0, SCHEMA_VERSION.to_string()),
        stem: net.stem.iter().map(element_to_doc).collect(),
        vines: net
            .vines
            .iter()
            .map(|v| VineDoc {
                u: v.u,
                v: v.v,
                copy: v.copy,
                body: v.body.elements().iter().map(element_to_doc).collect(),
            })
            .collect(),
        weights: table(&file.weights),
        references: table(&file.references),
    };
    toml::to_string(&doc).expect("architecture documents always serialize")
}

/// Serializes the network structure and profile bounds. Reference matrices
/// are not part of the text; attach them through the `[references]` table.
pub fn serialize_network(net: &StemVineNetwork) -> String {
    serialize_network_file(&ArchitectureFile::new(net.clone()))
}

/// Reads an architecture file, loads its reference matrices into the
/// profiles and resolves weight paths against the file's directory.
pub fn load_network(
    path: impl AsRef<Path>,
) -> Result<(StemVineNetwork, BTreeMap<SlotId, PathBuf>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file = parse_network_file(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut network = file.network;
    for (slot, rel) in &file.references {
        let m = load_matrix(base.join(rel))?;
        network
            .profile_mut(slot)
            .expect("slot checked during parse")
            .reference = Some(m);
    }
    network.ensure_valid()?;
    let weights = file
        .weights
        .into_iter()
        .map(|(k, p)| (k, base.join(p)))
        .collect();
    Ok((network, weights))
}
