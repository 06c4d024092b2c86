//! Oracle comparisons printed as PASS/FAIL tables.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stemvine::bounds::{chain_radius, covering_terms, maurey_log_cover, total_r};
use stemvine::cert::dudley_bound;
use stemvine::oracle::{
    composed_grid_class, exact_rademacher, greedy_cover, grid_single_matrix_class,
    monte_carlo_rademacher, GridStage,
};
use stemvine::{Matrix, Nonlinearity, NormProfile, StemElement, StemVineNetwork, Vine};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Greedy covers of single-matrix and two-stage grid classes against the
/// single-matrix bound and the per-stage product bound.
pub fn oracle_cover(seed: u64) -> Result<bool> {
    let mut all = true;
    println!(
        "{:<34} {:>8} {:>12} {:>12}  status",
        "instance", "greedy", "ln greedy", "ln bound"
    );
    for (d, m) in [(1, 1), (2, 1), (1, 2), (2, 2), (4, 1)] {
        for a in [0.5, 1.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((d * 10 + m) as u64);
            let x = gaussian(4, d, &mut rng);
            let cloud = grid_single_matrix_class(&x, a, a / 4.0, d, m)?;
            for eps in [0.25, 0.5, 1.0] {
                let count = greedy_cover(&cloud, eps)?.count;
                let bound = maurey_log_cover(a, x.frobenius_norm(), d, m, eps)?;
                let ok = (count as f64).ln() <= bound + 1e-12;
                all &= ok;
                println!(
                    "{:<34} {count:>8} {:>12.4} {bound:>12.4}  {}",
                    format!("single d={d} m={m} a={a} eps={eps}"),
                    (count as f64).ln(),
                    status(ok)
                );
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000);
    for case in 0..3 {
        let x = gaussian(3, 2, &mut rng);
        let class = composed_grid_class(
            &x,
            GridStage {
                a: 1.0,
                step: 0.25,
                out_dim: 1,
            },
            Nonlinearity::Relu,
            GridStage {
                a: 1.0,
                step: 0.25,
                out_dim: 2,
            },
            Nonlinearity::Identity,
        )?;
        for (e1, e2) in [(0.5, 0.5), (0.25, 1.0)] {
            let radius = chain_radius(&[e1, e2], &[1.0, 1.0], &[1.0, class.stage2_spectral])?;
            let count = greedy_cover(&class.cloud, radius)?.count;
            let bound = maurey_log_cover(1.0, x.frobenius_norm(), 2, 1, e1)?
                + maurey_log_cover(1.0, class.hidden_norm, 1, 2, e2)?;
            let ok = (count as f64).ln() <= bound + 1e-12;
            all &= ok;
            println!(
                "{:<34} {count:>8} {:>12.4} {bound:>12.4}  {}",
                format!("composed #{case} eps=({e1},{e2})"),
                (count as f64).ln(),
                status(ok)
            );
        }
    }
    Ok(all)
}

/// Exact and Monte-Carlo Rademacher complexities of one-output linear grid
/// classes on unit-norm points, against the entropy-integral bound.
pub fn oracle_rademacher(seed: u64, trials: usize) -> Result<bool> {
    if trials == 0 {
        return Err(crate::usage("--trials must be positive"));
    }
    let n = 10;
    let mut all = true;
    println!(
        "{:<12} {:>10} {:>10} {:>10}  status",
        "instance", "exact", "estimate", "bound"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in [1usize, 2, 3] {
        for rep in 0..3 {
            let mut x = gaussian(n, d, &mut rng);
            for i in 0..n {
                let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                x.row_mut(i).iter_mut().for_each(|v| *v /= norm);
            }
            let scores = grid_single_matrix_class(&x, 1.0, 0.25, d, 1)?.score_matrix();
            let exact = exact_rademacher(&scores)?;
            let estimate = monte_carlo_rademacher(&scores, trials, seed.wrapping_add(rep))?;
            let net = StemVineNetwork::new(
                vec![
                    StemElement::weight(d, 1, NormProfile::new(1.0, 1.0)),
                    StemElement::nonlin(1, Nonlinearity::Identity),
                ],
                vec![],
            );
            let bound = dudley_bound(total_r(&net, x.frobenius_norm())?, n)?;
            let ok = exact <= bound;
            all &= ok;
            println!(
                "{:<12} {exact:>10.5} {estimate:>10.5} {bound:>10.5}  {}",
                format!("d={d} #{rep}"),
                status(ok)
            );
        }
    }
    Ok(all)
}

/// Moves the last weight of a chain into a vine spanning the shortened stem
/// and checks the covering terms keep their count and factors.
pub fn sweep_placement(seed: u64, cases: usize) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = true;
    println!(
        "{:<6} {:>5} {:>7} {:>12} {:>11}  status",
        "case", "width", "layers", "chain terms", "vine terms"
    );
    for case in 0..cases {
        let d = rng.random_range(2..=5);
        let layers = rng.random_range(1..=4);
        let profiles: Vec<NormProfile> = (0..=layers)
            .map(|_| NormProfile::new(rng.random_range(0.2..2.0), rng.random_range(0.0..2.0)))
            .collect();
        let block = |p: &NormProfile| {
            [
                StemElement::weight(d, d, p.clone()),
                StemElement::nonlin(d, Nonlinearity::Relu),
            ]
        };
        let chain = StemVineNetwork::new(profiles.iter().flat_map(block).collect(), vec![]);
        let stem: Vec<_> = profiles[..layers].iter().flat_map(block).collect();
        let end = stem.len() + 1;
        let vined = StemVineNetwork::new(
            stem,
            vec![Vine::chain(
                1,
                end,
                vec![StemElement::weight(d, d, profiles[layers].clone())],
            )],
        );
        let shape = |net: &StemVineNetwork| -> Result<Vec<(u64, u64)>> {
            let mut v: Vec<_> = covering_terms(net, 1.0)?
                .iter()
                .map(|t| ((t.b * t.b).to_bits(), t.log_width.to_bits()))
                .collect();
            v.sort();
            Ok(v)
        };
        let (a, b) = (shape(&chain)?, shape(&vined)?);
        let ok = a == b;
        all &= ok;
        println!(
            "{case:<6} {d:>5} {:>7} {:>12} {:>11}  {}",
            layers + 1,
            a.len(),
            b.len(),
            status(ok)
        );
    }
    Ok(all)
}
