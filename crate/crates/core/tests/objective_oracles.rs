//! Objective functions checked against naive dense re-computations.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prmf_core::domain::{
    pmf_objective, predict, prmf_objective, prmf_objective_terms, FactorMatrix, HyperParams,
    PrecisionMatrix, PriorCovariance, Rating, SparseRatings, SymmetricSparse,
};

struct Instance {
    m: usize,
    n: usize,
    d: usize,
    /// Dense rating matrix with NaN for missing entries.
    dense: Vec<Vec<f64>>,
    ratings: SparseRatings,
    u: FactorMatrix,
    v: FactorMatrix,
    theta: PrecisionMatrix,
    sigma: PriorCovariance,
}

fn random_instance(seed: u64, m: usize, n: usize, d: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense = vec![vec![f64::NAN; n]; m];
    let mut triples = Vec::new();
    for (i, row) in dense.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if rng.random_bool(0.6) {
                let r = rng.random_range(1..=5) as f64;
                *cell = r;
                triples.push(Rating::new(i, j, r));
            }
        }
    }
    let mut gen = |rows: usize| {
        FactorMatrix::from_vec(rows, d, (0..rows * d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    };
    let u = gen(m);
    let v = gen(n);
    // diagonally dominant so Θ + shift·I is positive definite
    let mut theta_entries = Vec::new();
    let mut sigma_entries = Vec::new();
    for i in 0..m {
        theta_entries.push((i, i, 2.0 + rng.random_range(0.0..1.0)));
        sigma_entries.push((i, i, rng.random_range(0.1..2.0)));
        for k in (i + 1)..m {
            if rng.random_bool(0.5) {
                theta_entries.push((i, k, rng.random_range(-0.4..0.4)));
            }
            if rng.random_bool(0.5) {
                sigma_entries.push((i, k, rng.random_range(-0.5..0.5)));
            }
        }
    }
    Instance {
        m,
        n,
        d,
        dense,
        ratings: SparseRatings::new(m, n, triples).unwrap(),
        u,
        v,
        theta: PrecisionMatrix::new(SymmetricSparse::from_entries(m, theta_entries).unwrap()),
        sigma: PriorCovariance::new(SymmetricSparse::from_entries(m, sigma_entries).unwrap()).unwrap(),
    }
}

/// Term-by-term accumulation over the dense indicator matrix.
fn naive_pmf(inst: &Instance, lu: f64, lv: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..inst.m {
        for j in 0..inst.n {
            let w = if inst.dense[i][j].is_nan() { 0.0 } else { 1.0 };
            if w == 0.0 {
                continue;
            }
            let mut pred = 0.0;
            for k in 0..inst.d {
                pred += inst.u.row(i)[k] * inst.v.row(j)[k];
            }
            total += 0.5 * w * (inst.dense[i][j] - pred).powi(2);
        }
    }
    for i in 0..inst.m {
        for k in 0..inst.d {
            total += 0.5 * lu * inst.u.row(i)[k].powi(2);
        }
    }
    for j in 0..inst.n {
        for k in 0..inst.d {
            total += 0.5 * lv * inst.v.row(j)[k].powi(2);
        }
    }
    total
}

/// Dense linear-algebra evaluation; log-determinant through LU rather than Cholesky.
fn dense_prmf(inst: &Instance, p: &HyperParams) -> f64 {
    let u = inst.u.to_dmatrix();
    let theta = inst.theta.to_dense();
    let sigma = inst.sigma.to_dense();
    let gram = &u * u.transpose() + p.beta * &sigma;
    let trace = (&theta * gram).trace();
    let shifted = &theta + DMatrix::identity(inst.m, inst.m) * (p.lambda_u / p.alpha);
    let det = shifted.lu().determinant();
    assert!(det > 0.0);
    let l1: f64 = theta.iter().map(|v| v.abs()).sum();
    naive_pmf(inst, p.lambda_u, p.lambda_v)
        + 0.5 * p.alpha * (trace - (p.dim as f64 + p.beta) * det.ln() + p.gamma * l1)
}

fn params(d: usize) -> HyperParams {
    HyperParams {
        dim: d,
        lambda_u: 0.3,
        lambda_v: 0.15,
        alpha: 0.7,
        beta: 2.5,
        gamma: 0.05,
        ..HyperParams::default()
    }
}

#[test]
fn pmf_objective_matches_naive_accumulation() {
    for seed in 0..10 {
        let inst = random_instance(seed, 5, 5, 3);
        let got = pmf_objective(&inst.ratings, &inst.u, &inst.v, 0.2, 0.05).unwrap();
        let want = naive_pmf(&inst, 0.2, 0.05);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn prmf_objective_matches_dense_oracle() {
    for seed in 0..10 {
        let inst = random_instance(100 + seed, 5, 6, 2);
        let p = params(2);
        let got = prmf_objective(&inst.ratings, &inst.u, &inst.v, &inst.theta, Some(&inst.sigma), &p).unwrap();
        let want = dense_prmf(&inst, &p);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn pmf_part_of_joint_objective_is_pmf_objective() {
    let inst = random_instance(7, 5, 5, 3);
    let p = params(3);
    let terms =
        prmf_objective_terms(&inst.ratings, &inst.u, &inst.v, &inst.theta, Some(&inst.sigma), &p).unwrap();
    let pmf = pmf_objective(&inst.ratings, &inst.u, &inst.v, p.lambda_u, p.lambda_v).unwrap();
    assert_eq!(terms.pmf_part(), pmf);
}

fn permute_instance(inst: &Instance, perm: &[usize]) -> (SparseRatings, FactorMatrix, PrecisionMatrix, PriorCovariance) {
    let triples = inst
        .ratings
        .triples()
        .iter()
        .map(|r| Rating::new(perm[r.user], r.item, r.value))
        .collect();
    let mut rows = vec![Vec::new(); inst.m];
    for i in 0..inst.m {
        rows[perm[i]] = inst.u.row(i).to_vec();
    }
    (
        SparseRatings::new(inst.m, inst.n, triples).unwrap(),
        FactorMatrix::from_rows(&rows).unwrap(),
        PrecisionMatrix::new(inst.theta.permuted(perm).unwrap()),
        PriorCovariance::new(inst.sigma.permuted(perm).unwrap()).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_objective_is_invariant_under_user_relabeling(
        seed in 0u64..1000,
        perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let inst = random_instance(seed, 5, 4, 2);
        let p = params(2);
        let base = prmf_objective(&inst.ratings, &inst.u, &inst.v, &inst.theta, Some(&inst.sigma), &p).unwrap();
        let (r, u, t, s) = permute_instance(&inst, &perm);
        let moved = prmf_objective(&r, &u, &inst.v, &t, Some(&s), &p).unwrap();
        prop_assert!((base - moved).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn predict_is_homogeneous_before_clamping(
        u in prop::collection::vec(-3.0f64..3.0, 4),
        v in prop::collection::vec(-3.0f64..3.0, 4),
        a in -5.0f64..5.0,
    ) {
        let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
        let lhs = predict(&scaled, &v, None).unwrap();
        let rhs = a * predict(&u, &v, None).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn l1_contribution_scales_linearly(seed in 0u64..1000) {
        let inst = random_instance(seed, 5, 3, 2);
        let p = HyperParams { beta: 0.0, ..params(2) };
        let once = prmf_objective_terms(&inst.ratings, &inst.u, &inst.v, &inst.theta, None, &p).unwrap();
        let doubled = PrecisionMatrix::new(inst.theta.scaled(2.0));
        let twice = prmf_objective_terms(&inst.ratings, &inst.u, &inst.v, &doubled, None, &p).unwrap();
        prop_assert_eq!(twice.sparsity, 2.0 * once.sparsity);
    }
}
