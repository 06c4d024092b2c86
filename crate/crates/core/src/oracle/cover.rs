use crate::error::{Error, Result};
use crate::graph::Nonlinearity;
use crate::linalg::{matmul_transposed, Matrix};

/// Largest cloud [`exact_cover`] accepts.
pub const EXACT_COVER_LIMIT: usize = 20;
/// Largest `rows·cols` a grid weight matrix may have.
pub const GRID_MAX_ENTRIES: usize = 6;
/// Largest number of grid candidates enumerated before filtering.
pub const GRID_MAX_POINTS: usize = 2_000_000;

/// A finite set of equally shaped matrices under the Frobenius distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Matrix>,
}

impl PointCloud {
    pub fn new(points: Vec<Matrix>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Param("point cloud must be nonempty".into()))?;
        let shape = first.shape();
        if let Some(p) = points.iter().find(|p| p.shape() != shape) {
            return Err(Error::Dimension(format!(
                "point cloud mixes shapes {:?} and {:?}",
                shape,
                p.shape()
            )));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Matrix] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.points[i].frobenius_distance(&self.points[j])
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                d = d.max(self.distance(i, j));
            }
        }
        d
    }

    /// Largest Frobenius norm over the cloud.
    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(Matrix::frobenius_norm)
            .fold(0.0, f64::max)
    }

    /// One row per point, holding its entries row-major. For single-output
    /// classes this is the hypothesis-by-instance score table.
    pub fn score_matrix(&self) -> Matrix {
        let cols = self.points[0].as_slice().len();
        let data = self
            .points
            .iter()
            .flat_map(|p| p.as_slice().iter().copied())
            .collect();
        Matrix::from_vec(self.len(), cols, data).expect("uniform point shapes")
    }
}

/// An ε-net of a cloud made of cloud points.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub count: usize,
    /// Indices of the centers.
    pub centers: Vec<usize>,
    /// For every point, the index of a center within ε.
    pub assignment: Vec<usize>,
}

impl Cover {
    /// Recomputes every point-to-center distance.
    pub fn verify(&self, cloud: &PointCloud, eps: f64) -> bool {
        self.assignment.len() == cloud.len()
            && self.centers.len() == self.count
            && self
                .assignment
                .iter()
                .enumerate()
                .all(|(i, &c)| self.centers.contains(&c) && cloud.distance(i, c) <= eps)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Param(format!(
            "cover radius must be positive, got {eps}"
        )));
    }
    Ok(())
}

/// First-fit net in insertion order: a point becomes a center unless an
/// earlier center lies within ε.
pub fn greedy_cover(cloud: &PointCloud, eps: f64) -> Result<Cover> {
    check_eps(eps)?;
    let mut centers: Vec<usize> = Vec::new();
    let mut assignment = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        match centers.iter().find(|&&c| cloud.distance(i, c) <= eps) {
            Some(&c) => assignment.push(c),
            None => {
                centers.push(i);
                assignment.push(i);
            }
        }
    }
    Ok(Cover {
        count: centers.len(),
        centers,
        assignment,
    })
}

/// Farthest-point net: starts at the first point and repeatedly adds the
/// point farthest from all centers until every point is within ε.
pub fn greedy_cover_farthest(cloud: &PointCloud, eps: f64) -> Result<Cover> {
    check_eps(eps)?;
    let n = cloud.len();
    let mut centers = vec![0];
    let mut nearest: Vec<(f64, usize)> = (0..n).map(|i| (cloud.distance(i, 0), 0)).collect();
    loop {
        let (far, &(d, _)) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(b.0.cmp(&a.0)))
            .expect("nonempty cloud");
        if d <= eps {
            break;
        }
        centers.push(far);
        for (i, slot) in nearest.iter_mut().enumerate() {
            let d = cloud.distance(i, far);
            if d < slot.0 {
                *slot = (d, far);
            }
        }
    }
    Ok(Cover {
        count: centers.len(),
        centers,
        assignment: nearest.into_iter().map(|(_, c)| c).collect(),
    })
}

/// Size of a minimum ε-net with centers among the cloud points, found by
/// exhaustive search. Clouds above [`EXACT_COVER_LIMIT`] points are refused.
pub fn exact_cover(cloud: &PointCloud, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    let n = cloud.len();
    if n > EXACT_COVER_LIMIT {
        return Err(Error::Size(format!(
            "exact cover supports at most {EXACT_COVER_LIMIT} points, got {n}"
        )));
    }
    let balls: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cloud.distance(i, j) <= eps)
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };

    fn search(covered: u32, full: u32, depth: usize, balls: &[u32]) -> bool {
        if covered == full {
            return true;
        }
        if depth == 0 {
            return false;
        }
        // the lowest uncovered point must be in some chosen ball
        let p = (!covered & full).trailing_zeros() as usize;
        balls
            .iter()
            .filter(|&&b| b & (1 << p) != 0)
            .any(|&b| search(covered | b, full, depth - 1, balls))
    }

    Ok((1..=n)
        .find(|&k| search(0, full, k, &balls))
        .expect("the cloud covers itself"))
}

/// Every `rows × cols` matrix with entries in `step·ℤ ∩ [−a, a]` whose
/// transposed (2,1) group norm is at most `a`.
pub fn grid_matrices(a: f64, step: f64, rows: usize, cols: usize) -> Result<Vec<Matrix>> {
    if !(a >= 0.0 && a.is_finite() && step > 0.0 && step.is_finite()) {
        return Err(Error::Param(format!(
            "need a ≥ 0 and step > 0, got a={a}, step={step}"
        )));
    }
    let entries = rows * cols;
    if entries == 0 {
        return Err(Error::Param(
            "grid matrices need positive dimensions".into(),
        ));
    }
    if entries > GRID_MAX_ENTRIES {
        return Err(Error::Size(format!(
            "grid needs rows·cols ≤ {GRID_MAX_ENTRIES}, got {entries}"
        )));
    }
    let k_max = (a / step + 1e-9).floor() as i64;
    let levels = (2 * k_max + 1) as usize;
    let total = levels
        .checked_pow(entries as u32)
        .filter(|&t| t <= GRID_MAX_POINTS)
        .ok_or_else(|| {
            Error::Size(format!(
                "grid of {levels}^{entries} candidates exceeds {GRID_MAX_POINTS}"
            ))
        })?;
    let limit = a * (1.0 + 1e-12);
    let mut out = Vec::new();
    let mut digits = vec![0usize; entries];
    for _ in 0..total {
        let data: Vec<f64> = digits
            .iter()
            .map(|&d| (d as i64 - k_max) as f64 * step)
            .collect();
        let m = Matrix::from_vec(rows, cols, data)?;
        if m.norm_2_1_of_transpose() <= limit {
            out.push(m);
        }
        // odometer increment, last entry fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < levels {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// The discretized single-matrix class `{X·Wᵀ}` over the `m × d` grid
/// matrices of [`grid_matrices`].
pub fn grid_single_matrix_class(
    x: &Matrix,
    a: f64,
    step: f64,
    d: usize,
    m: usize,
) -> Result<PointCloud> {
    if x.cols() != d {
        return Err(Error::Dimension(format!(
            "instances have {} features, class expects {d}",
            x.cols()
        )));
    }
    let points = grid_matrices(a, step, m, d)?
        .iter()
        .map(|w| matmul_transposed(x, w))
        .collect::<Result<Vec<_>>>()?;
    PointCloud::new(points)
}

/// One stage of a composed grid class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStage {
    pub a: f64,
    pub step: f64,
    pub out_dim: usize,
}

/// `{σ₂(σ₁(X·W₁ᵀ)·W₂ᵀ)}` over two grids, with the pieces needed to compare
/// against a per-stage cover construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedClass {
    /// The composed outputs.
    pub cloud: PointCloud,
    /// Stage-one outputs `X·W₁ᵀ`.
    pub stage1: PointCloud,
    /// Stage-one features after `σ₁`, in the order of `stage1`.
    pub hidden: Vec<Matrix>,
    pub stage2_weights: Vec<Matrix>,
    /// Largest spectral norm among the stage-two grid matrices.
    pub stage2_spectral: f64,
    /// Largest Frobenius norm among the hidden features.
    pub hidden_norm: f64,
}

impl ComposedClass {
    /// Stage-two outputs `σ₂(H·W₂ᵀ)` for one hidden feature `H`.
    pub fn stage2_cloud(&self, hidden: &Matrix, act: Nonlinearity) -> Result<PointCloud> {
        let points = self
            .stage2_weights
            .iter()
            .map(|w| matmul_transposed(hidden, w).map(|z| z.map(|v| act.apply(v))))
            .collect::<Result<Vec<_>>>()?;
        PointCloud::new(points)
    }
}

pub fn composed_grid_class(
    x: &Matrix,
    first: GridStage,
    act1: Nonlinearity,
    second: GridStage,
    act2: Nonlinearity,
) -> Result<ComposedClass> {
    let d0 = x.cols();
    let w1 = grid_matrices(first.a, first.step, first.out_dim, d0)?;
    let w2 = grid_matrices(second.a, second.step, second.out_dim, first.out_dim)?;
    let stage1 = w1
        .iter()
        .map(|w| matmul_transposed(x, w))
        .collect::<Result<Vec<_>>>()?;
    let hidden: Vec<Matrix> = stage1.iter().map(|z| z.map(|v| act1.apply(v))).collect();
    let mut points = Vec::with_capacity(hidden.len() * w2.len());
    for h in &hidden {
        for w in &w2 {
            points.push(matmul_transposed(h, w)?.map(|v| act2.apply(v)));
        }
    }
    let mut stage2_spectral: f64 = 0.0;
    for w in &w2 {
        stage2_spectral = stage2_spectral.max(w.spectral_norm()?);
    }
    let hidden_norm = hidden
        .iter()
        .map(Matrix::frobenius_norm)
        .fold(0.0, f64::max);
    Ok(ComposedClass {
        cloud: PointCloud::new(points)?,
        stage1: PointCloud::new(stage1)?,
        hidden,
        stage2_weights: w2,
        stage2_spectral,
        hidden_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalars(v: &[f64]) -> PointCloud {
        PointCloud::new(v.iter().map(|&x| Matrix::from_rows(&[[x]])).collect()).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    let d = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                    Matrix::from_vec(2, 3, d).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn small_covers() {
        let one = scalars(&[0.3]);
        assert_eq!(greedy_cover(&one, 0.01).unwrap().count, 1);
        assert_eq!(exact_cover(&one, 0.01).unwrap(), 1);
        let two = scalars(&[0.0, 2.0]);
        assert_eq!(greedy_cover(&two, 0.5).unwrap().count, 2);
        assert_eq!(greedy_cover(&two, 3.0).unwrap().count, 1);
        let eps = 1.0;
        let line = scalars(&[0.0, 1.1 * eps, 2.2 * eps]);
        // no cloud point lies within ε of both neighbours
        assert_eq!(exact_cover(&line, eps).unwrap(), 3);
        assert_eq!(
            exact_cover(&scalars(&[0.0, 0.9 * eps, 1.8 * eps]), eps).unwrap(),
            1
        );
        assert!(greedy_cover(&line, 0.0).is_err());
    }

    #[test]
    fn empty_and_mixed_clouds_rejected() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::Param(_))));
        let mixed = vec![Matrix::zeros(1, 2), Matrix::zeros(2, 1)];
        assert!(matches!(PointCloud::new(mixed), Err(Error::Dimension(_))));
    }

    #[test]
    fn greedy_nets_cover_by_recomputation() {
        let cloud = random_cloud(50, 11);
        for eps in [0.3, 0.8, 1.5] {
            for cover in [
                greedy_cover(&cloud, eps).unwrap(),
                greedy_cover_farthest(&cloud, eps).unwrap(),
            ] {
                assert!(cover.verify(&cloud, eps));
                for i in 0..cloud.len() {
                    let c = cover.assignment[i];
                    let direct: f64 = cloud.points()[i]
                        .as_slice()
                        .iter()
                        .zip(cloud.points()[c].as_slice())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    assert!(direct <= eps + 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_never_exceeds_greedy() {
        for seed in 0..8 {
            let cloud = random_cloud(14, seed);
            for eps in [0.5, 1.0, 2.0] {
                let exact = exact_cover(&cloud, eps).unwrap();
                assert!(exact <= greedy_cover(&cloud, eps).unwrap().count);
                assert!(exact <= greedy_cover_farthest(&cloud, eps).unwrap().count);
            }
            let diam = cloud.diameter();
            assert_eq!(exact_cover(&cloud, diam).unwrap(), 1);
        }
        assert!(matches!(
            exact_cover(&random_cloud(21, 0), 1.0),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn exact_cover_matches_brute_force_subsets() {
        for seed in 0..4 {
            let cloud = random_cloud(10, 100 + seed);
            let n = cloud.len();
            for eps in [0.7, 1.2] {
                let mut best = n;
                for mask in 1u32..(1 << n) {
                    let k = mask.count_ones() as usize;
                    if k >= best {
                        continue;
                    }
                    let covers = (0..n).all(|i| {
                        (0..n).any(|c| mask & (1 << c) != 0 && cloud.distance(i, c) <= eps)
                    });
                    if covers {
                        best = k;
                    }
                }
                assert_eq!(exact_cover(&cloud, eps).unwrap(), best);
            }
        }
    }

    #[test]
    fn grid_census() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]);
        assert_eq!(
            grid_single_matrix_class(&x, 1.0, 0.5, 1, 1).unwrap().len(),
            5
        );
        let zero = grid_single_matrix_class(&x, 0.0, 0.25, 1, 1).unwrap();
        assert_eq!(zero.len(), 1);
        assert!(zero.points()[0].is_zero());
        // 1×2 grid with step 1, a = 1: (0,0), (±1,0), (0,±1)
        assert_eq!(grid_matrices(1.0, 1.0, 1, 2).unwrap().len(), 5);
        // 2×1 grid, rows are scalars: |w1| + |w2| ≤ 1
        assert_eq!(grid_matrices(1.0, 1.0, 2, 1).unwrap().len(), 5);
        assert!(matches!(grid_matrices(1.0, 0.5, 7, 1), Err(Error::Size(_))));
        assert!(matches!(
            grid_single_matrix_class(&x, 1.0, 0.5, 2, 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn grid_respects_norm_budget() {
        for w in grid_matrices(1.0, 0.25, 2, 2).unwrap() {
            assert!(w.norm_2_1_of_transpose() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn composed_class_shapes() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]);
        let c = composed_grid_class(
            &x,
            GridStage {
                a: 1.0,
                step: 0.5,
                out_dim: 1,
            },
            Nonlinearity::Relu,
            GridStage {
                a: 1.0,
                step: 0.5,
                out_dim: 2,
            },
            Nonlinearity::Identity,
        )
        .unwrap();
        assert_eq!(c.cloud.len(), c.stage1.len() * c.stage2_weights.len());
        assert_eq!(c.cloud.points()[0].shape(), (3, 2));
        assert!(c.stage2_spectral <= 1.0 + 1e-9);
        let s2 = c
            .stage2_cloud(&c.hidden[0], Nonlinearity::Identity)
            .unwrap();
        assert_eq!(s2.len(), c.stage2_weights.len());
    }
}
