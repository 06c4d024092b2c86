//! Forward evaluation and the margin, ramp-loss and risk functionals.
//!
//! Instances are rows: a batch `X` is `n × n₀` and the feature at vertex `j`
//! is an `n × dim(j)` matrix. Labels are 1-based.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{SlotId, StemElement, StemVineNetwork, Vine, VineBody, VineKey};
use crate::linalg::{self, dim_to_u32, matmul_transposed, read_f64s, read_u32, Matrix};

/// Concrete weights keyed by slot.
pub type WeightSet = BTreeMap<SlotId, Matrix>;

const DATASET_MAGIC: &[u8; 4] = b"SVD1";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(x: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} instances but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if classes == 0 {
            return Err(Error::Param("class count must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y == 0 || y > classes) {
            return Err(Error::Label {
                label: bad,
                classes,
            });
        }
        Ok(Self { x, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    /// The rows at `indices`, in that order. Panics on an out-of-range index.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let cols = self.x.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(self.x.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(
            Matrix::from_vec(indices.len(), cols, data)?,
            labels,
            self.classes,
        )
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&dim_to_u32(self.x.rows())?.to_le_bytes())?;
        w.write_all(&dim_to_u32(self.x.cols())?.to_le_bytes())?;
        w.write_all(&dim_to_u32(self.classes)?.to_le_bytes())?;
        for x in self.x.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
        for &y in &self.labels {
            w.write_all(&dim_to_u32(y)?.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        linalg::read_exact(&mut r, &mut magic, "magic")?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format(format!(
                "expected dataset magic SVD1, found {magic:?}"
            )));
        }
        let n = read_u32(&mut r, "n")? as usize;
        let n0 = read_u32(&mut r, "n0")? as usize;
        let k = read_u32(&mut r, "k")? as usize;
        let data = read_f64s(&mut r, n * n0)?;
        let labels = (0..n)
            .map(|_| read_u32(&mut r, "labels").map(|y| y as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after labels".into()));
        }
        Self::new(Matrix::from_vec(n, n0, data)?, labels, k)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read(bytes.as_slice())
    }
}

/// Features at every vertex, plus the outputs of each element inside every
/// vine body (in network vine order).
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTrace {
    pub vertices: Vec<Matrix>,
    pub vine_outputs: Vec<Vec<Matrix>>,
}

impl VertexTrace {
    /// Feature at vertex `j` (1-based).
    pub fn at(&self, j: usize) -> &Matrix {
        &self.vertices[j - 1]
    }

    pub fn output(&self) -> &Matrix {
        self.vertices.last().expect("trace has the input vertex")
    }
}

/// Checks that every slot is bound to a matrix of the right shape.
pub fn check_weights(net: &StemVineNetwork, weights: &WeightSet) -> Result<()> {
    for slot in net.weight_slots() {
        let w = weights
            .get(&slot.id)
            .ok_or_else(|| Error::Eval(format!("weight slot {} is unbound", slot.id)))?;
        if w.shape() != (slot.out_dim, slot.in_dim) {
            return Err(Error::Dimension(format!(
                "weight {} is {}x{}, slot expects {}x{} (out x in)",
                slot.id,
                w.rows(),
                w.cols(),
                slot.out_dim,
                slot.in_dim
            )));
        }
    }
    Ok(())
}

/// Evaluates the network on the rows of `x`, recording every vertex.
pub fn forward(net: &StemVineNetwork, weights: &WeightSet, x: &Matrix) -> Result<VertexTrace> {
    net.ensure_valid()?;
    check_weights(net, weights)?;
    if x.cols() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} features, network expects {}",
            x.cols(),
            net.input_dim()
        )));
    }
    Ok(forward_unchecked(net, weights, x))
}

/// Network output only.
pub fn predict(net: &StemVineNetwork, weights: &WeightSet, x: &Matrix) -> Result<Matrix> {
    forward(net, weights, x).map(|t| t.vertices.into_iter().last().expect("output vertex"))
}

pub(crate) fn apply_element(el: &StemElement, w: Option<&Matrix>, h: &Matrix) -> Matrix {
    match el {
        StemElement::Weight { .. } => {
            matmul_transposed(h, w.expect("weight bound")).expect("shapes checked")
        }
        StemElement::Nonlin { act, .. } => h.map(|v| act.apply(v)),
    }
}

fn run_vine(vine: &Vine, weights: &WeightSet, input: &Matrix) -> Vec<Matrix> {
    match &vine.body {
        VineBody::Identity => Vec::new(),
        VineBody::Chain(els) => {
            let key: VineKey = vine.key();
            let mut outs: Vec<Matrix> = Vec::with_capacity(els.len());
            let mut k = 0;
            for el in els {
                let w = if el.is_weight() {
                    k += 1;
                    weights.get(&SlotId::Vine {
                        vine: key,
                        index: k,
                    })
                } else {
                    None
                };
                let h = outs.last().unwrap_or(input);
                let next = apply_element(el, w, h);
                outs.push(next);
            }
            outs
        }
    }
}

/// Forward pass without validation; callers guarantee a valid network and
/// bound, correctly shaped weights.
pub(crate) fn forward_unchecked(
    net: &StemVineNetwork,
    weights: &WeightSet,
    x: &Matrix,
) -> VertexTrace {
    let by_target = net.vines_by_target();
    let mut vertices = Vec::with_capacity(net.vertex_count());
    vertices.push(x.clone());
    let mut vine_outputs = vec![Vec::new(); net.vines.len()];
    let mut k = 0;
    for (j, el) in net.stem.iter().enumerate() {
        let w = if el.is_weight() {
            k += 1;
            weights.get(&SlotId::Stem(k))
        } else {
            None
        };
        let mut next = apply_element(el, w, &vertices[j]);
        // vertex j + 2 (1-based) receives its vines
        for &vi in &by_target[j + 1] {
            let vine = &net.vines[vi];
            let input = &vertices[vine.u - 1];
            let outs = run_vine(vine, weights, input);
            next.add_assign(outs.last().unwrap_or(input))
                .expect("vine dims validated");
            vine_outputs[vi] = outs;
        }
        vertices.push(next);
    }
    VertexTrace {
        vertices,
        vine_outputs,
    }
}

/// `v_y − max_{i≠y} v_i` for a 1-based label `y`.
pub fn margin(v: &[f64], y: usize) -> Result<f64> {
    if v.len() < 2 {
        return Err(Error::Param(format!(
            "margin needs at least two classes, got {}",
            v.len()
        )));
    }
    if y == 0 || y > v.len() {
        return Err(Error::Label {
            label: y,
            classes: v.len(),
        });
    }
    let best_other = v
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y - 1)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(v[y - 1] - best_other)
}

/// Ramp loss: 0 below `−λ`, 1 above 0, linear in between.
pub fn ramp_loss(r: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Param(format!(
            "margin λ must be positive, got {lambda}"
        )));
    }
    Ok(if r < -lambda {
        0.0
    } else if r <= 0.0 {
        1.0 + r / lambda
    } else {
        1.0
    })
}

/// Index (0-based) of the largest entry; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_pairing(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} outputs but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Param("empty dataset".into()));
    }
    Ok(())
}

pub fn ramp_risk_of_outputs(logits: &Matrix, labels: &[usize], lambda: f64) -> Result<f64> {
    check_pairing(logits, labels)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += ramp_loss(-margin(logits.row(i), y)?, lambda)?;
    }
    Ok(total / labels.len() as f64)
}

pub fn zero_one_of_outputs(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_pairing(logits, labels)?;
    let k = logits.cols();
    let mut wrong = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        if y == 0 || y > k {
            return Err(Error::Label {
                label: y,
                classes: k,
            });
        }
        if argmax(logits.row(i)) != y - 1 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / labels.len() as f64)
}

fn outputs_for(
    net: &StemVineNetwork,
    weights: &WeightSet,
    data: &LabeledDataset,
) -> Result<Matrix> {
    if data.classes != net.output_dim() {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, network outputs {}",
            data.classes,
            net.output_dim()
        )));
    }
    predict(net, weights, &data.x)
}

/// Mean ramp loss of the negated margins over the dataset.
pub fn empirical_ramp_risk(
    net: &StemVineNetwork,
    weights: &WeightSet,
    data: &LabeledDataset,
    lambda: f64,
) -> Result<f64> {
    ramp_loss(0.0, lambda)?;
    ramp_risk_of_outputs(&outputs_for(net, weights, data)?, &data.labels, lambda)
}

/// Fraction of instances whose argmax output differs from the label.
pub fn zero_one_error(
    net: &StemVineNetwork,
    weights: &WeightSet,
    data: &LabeledDataset,
) -> Result<f64> {
    zero_one_of_outputs(&outputs_for(net, weights, data)?, &data.labels)
}
