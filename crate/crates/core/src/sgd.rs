//! Latent-factor phase: stochastic gradient descent over observed ratings
//! with the `Θ` coupling term, `Θ` held fixed.

use rand::seq::SliceRandom;

use crate::domain::{
    dot, latent_objective, FactorMatrix, HyperParams, PrecisionMatrix, Rating, SparseRatings,
};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Epoch count and step-size policy of one latent phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    pub shuffle: bool,
    /// Geometric decay applied per epoch; `1.0` keeps the rate constant.
    pub decay: f64,
}

impl EpochSchedule {
    pub fn new(epochs: usize, learning_rate: f64, shuffle: bool, decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::usage(format!("learning rate must be > 0, got {learning_rate}")));
        }
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::usage(format!("decay must lie in (0, 1], got {decay}")));
        }
        Ok(EpochSchedule {
            epochs,
            learning_rate,
            shuffle,
            decay,
        })
    }

    /// Shuffled, constant-rate schedule of `params.epochs` epochs.
    pub fn from_params(params: &HyperParams) -> Self {
        EpochSchedule {
            epochs: params.epochs,
            learning_rate: params.learning_rate,
            shuffle: true,
            decay: 1.0,
        }
    }

    pub fn rate_at(&self, global_epoch: usize) -> f64 {
        self.learning_rate * self.decay.powi(global_epoch as i32)
    }
}

/// Gaussian factor initialisation, mean 0 and standard deviation `1/√d`.
pub fn init_factors(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
) -> (FactorMatrix, FactorMatrix) {
    let std = 1.0 / (dim as f64).sqrt();
    let mut rng = rng::stream(seed, Purpose::FactorInit, 0);
    let u = FactorMatrix::gaussian(num_users, dim, std, &mut rng);
    let v = FactorMatrix::gaussian(num_items, dim, std, &mut rng);
    (u, v)
}

#[derive(Clone, Copy, Debug)]
struct StepWeights {
    lambda_u: f64,
    lambda_v: f64,
    alpha: f64,
    learning_rate: f64,
}

/// Scratch buffers reused across steps: `[grad_u | grad_v]`.
struct Scratch(Vec<f64>);

fn step(
    r: &Rating,
    u: &mut FactorMatrix,
    v: &mut FactorMatrix,
    theta: &PrecisionMatrix,
    w: StepWeights,
    scratch: &mut Scratch,
) -> Result<()> {
    let d = u.dim();
    let (du, dv) = scratch.0.split_at_mut(d);
    let ui = u.row(r.user);
    let vj = v.row(r.item);
    let delta = r.value - dot(ui, vj);
    for k in 0..d {
        du[k] = delta * vj[k] - w.lambda_u * ui[k];
        dv[k] = delta * ui[k] - w.lambda_v * vj[k];
    }
    if w.alpha != 0.0 {
        // α Θ_{i*} U over the nonzeros of row i, all read before any write
        coupling(du, theta.row(r.user), u.values(), w.alpha);
    }
    let lr = w.learning_rate;
    for (x, g) in u.row_mut(r.user).iter_mut().zip(du.iter()) {
        *x += lr * g;
    }
    for (x, g) in v.row_mut(r.item).iter_mut().zip(dv.iter()) {
        *x += lr * g;
    }
    if u.row(r.user).iter().chain(v.row(r.item)).any(|x| !x.is_finite()) {
        return Err(Error::SgdDivergence {
            user: r.user,
            item: r.item,
            rating: r.value,
        });
    }
    Ok(())
}

/// `acc −= α Σ_k θ_ik U_k` for the nonzeros `(k, θ_ik)` of one row of `Θ`.
fn coupling(acc: &mut [f64], row: &[(usize, f64)], u: &[f64], alpha: f64) {
    match acc.len() {
        5 => coupling_fixed::<5>(acc, row, u, alpha),
        10 => coupling_fixed::<10>(acc, row, u, alpha),
        20 => coupling_fixed::<20>(acc, row, u, alpha),
        d => {
            for &(nb, t) in row {
                let coef = alpha * t;
                for (g, x) in acc.iter_mut().zip(&u[nb * d..(nb + 1) * d]) {
                    *g -= coef * x;
                }
            }
        }
    }
}

fn coupling_fixed<const D: usize>(acc: &mut [f64], row: &[(usize, f64)], u: &[f64], alpha: f64) {
    let mut sum = [0.0; D];
    for &(nb, t) in row {
        let x: &[f64; D] = u[nb * D..(nb + 1) * D].try_into().expect("row of width D");
        for c in 0..D {
            sum[c] += t * x[c];
        }
    }
    for (g, s) in acc.iter_mut().zip(sum) {
        *g -= alpha * s;
    }
}

fn check_shapes(
    train: &SparseRatings,
    u: &FactorMatrix,
    v: &FactorMatrix,
    theta: &PrecisionMatrix,
) -> Result<()> {
    if u.rows() != train.num_users() || v.rows() != train.num_items() || u.dim() != v.dim() {
        return Err(Error::usage("factor shapes do not match the rating matrix"));
    }
    if theta.size() != u.rows() {
        return Err(Error::usage("theta size does not match the number of users"));
    }
    Ok(())
}

/// One simultaneous update of `U_i` and `V_j` for an observed rating:
///
/// `U_i ← U_i + θ(Δ V_j − λu U_i − α Θ_{i*} U)`,
/// `V_j ← V_j + θ(Δ U_i − λv V_j)`, with `Δ = R_ij − U_i V_jᵀ`,
///
/// where both right-hand sides read the pre-update rows.
pub fn sgd_step(
    rating: Rating,
    u: &mut FactorMatrix,
    v: &mut FactorMatrix,
    theta: &PrecisionMatrix,
    params: &HyperParams,
) -> Result<()> {
    if rating.user >= u.rows() || rating.item >= v.rows() || u.dim() != v.dim() {
        return Err(Error::usage("rating indices or factor dims out of range"));
    }
    if params.alpha != 0.0 && theta.size() != u.rows() {
        return Err(Error::usage("theta size does not match the number of users"));
    }
    let w = StepWeights {
        lambda_u: params.lambda_u,
        lambda_v: params.lambda_v,
        alpha: params.alpha,
        learning_rate: params.learning_rate,
    };
    let mut scratch = Scratch(vec![0.0; 2 * u.dim()]);
    step(&rating, u, v, theta, w, &mut scratch)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatentPhaseReport {
    /// Latent-phase objective after each epoch.
    pub objective_trace: Vec<f64>,
}

/// Runs `schedule.epochs` epochs of SGD, each visiting every training rating
/// once. With shuffling, the visiting order of global epoch `e` is derived
/// from `(params.seed, e)`; `epoch_offset` is the number of epochs already
/// run by earlier phases of the same training run.
pub fn run_latent_phase(
    train: &SparseRatings,
    u: &mut FactorMatrix,
    v: &mut FactorMatrix,
    theta: &PrecisionMatrix,
    params: &HyperParams,
    schedule: &EpochSchedule,
    epoch_offset: usize,
) -> Result<LatentPhaseReport> {
    check_shapes(train, u, v, theta)?;
    let mut report = LatentPhaseReport::default();
    let triples = train.triples();
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut scratch = Scratch(vec![0.0; 2 * u.dim()]);

    for e in 0..schedule.epochs {
        let global = epoch_offset + e;
        if schedule.shuffle {
            order.clear();
            order.extend(0..triples.len());
            order.shuffle(&mut rng::stream(params.seed, Purpose::EpochShuffle, global as u64));
        }
        let w = StepWeights {
            lambda_u: params.lambda_u,
            lambda_v: params.lambda_v,
            alpha: params.alpha,
            learning_rate: schedule.rate_at(global),
        };
        for &t in &order {
            step(&triples[t], u, v, theta, w, &mut scratch)?;
        }
        report
            .objective_trace
            .push(latent_objective(train, u, v, theta, params)?);
    }
    Ok(report)
}

/// Plain PMF: the latent phase with the coupling switched off, from a
/// seeded Gaussian initialisation.
pub fn pmf_train(
    train: &SparseRatings,
    params: &HyperParams,
    schedule: &EpochSchedule,
) -> Result<(FactorMatrix, FactorMatrix, LatentPhaseReport)> {
    params.validate()?;
    let (mut u, mut v) = init_factors(train.num_users(), train.num_items(), params.dim, params.seed);
    let pmf_params = HyperParams {
        alpha: 0.0,
        ..params.clone()
    };
    let theta = PrecisionMatrix::zeros(train.num_users());
    let report = run_latent_phase(train, &mut u, &mut v, &theta, &pmf_params, schedule, 0)?;
    Ok((u, v, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SymmetricSparse;

    fn params(lambda: f64, alpha: f64, lr: f64) -> HyperParams {
        HyperParams {
            dim: 2,
            lambda_u: lambda,
            lambda_v: lambda,
            alpha,
            learning_rate: lr,
            ..HyperParams::default()
        }
    }

    #[test]
    fn hand_computed_step() {
        let mut u = FactorMatrix::zeros(1, 2);
        let mut v = FactorMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        sgd_step(
            Rating::new(0, 0, 2.0),
            &mut u,
            &mut v,
            &PrecisionMatrix::zeros(1),
            &params(0.0, 0.0, 0.1),
        )
        .unwrap();
        assert!((u.row(0)[0] - 0.2).abs() < 1e-15 && (u.row(0)[1] - 0.2).abs() < 1e-15);
        assert_eq!(v.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn diagonal_coupling_shrinks_user_row() {
        let mut u = FactorMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let mut v = FactorMatrix::from_rows(&[vec![0.5, 0.25]]).unwrap();
        let r = 1.0; // = U_i · V_j, so Δ = 0
        sgd_step(
            Rating::new(0, 0, r),
            &mut u,
            &mut v,
            &PrecisionMatrix::identity(1),
            &params(0.0, 1.0, 0.1),
        )
        .unwrap();
        assert!((u.row(0)[0] - 0.9).abs() < 1e-15);
        assert!((u.row(0)[1] - 1.8).abs() < 1e-15);
        assert_eq!(v.row(0), &[0.5, 0.25]);
    }

    #[test]
    fn divergence_carries_triple() {
        let mut u = FactorMatrix::from_rows(&[vec![1e200, 1e200]]).unwrap();
        let mut v = FactorMatrix::from_rows(&[vec![1e200, 1e200]]).unwrap();
        let err = sgd_step(
            Rating::new(0, 0, 3.0),
            &mut u,
            &mut v,
            &PrecisionMatrix::zeros(1),
            &params(0.0, 0.0, 0.1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SgdDivergence { user: 0, item: 0, .. }));
    }

    #[test]
    fn empty_training_set_leaves_factors_unchanged() {
        let train = SparseRatings::empty(2, 3);
        let (mut u, mut v) = init_factors(2, 3, 2, 5);
        let (u0, v0) = (u.clone(), v.clone());
        let p = params(0.1, 0.5, 0.1);
        let sched = EpochSchedule::new(1, 0.1, true, 1.0).unwrap();
        run_latent_phase(&train, &mut u, &mut v, &PrecisionMatrix::identity(2), &p, &sched, 0).unwrap();
        assert_eq!(u, u0);
        assert_eq!(v, v0);
    }

    #[test]
    fn users_without_ratings_are_never_touched() {
        let train = SparseRatings::new(
            3,
            2,
            vec![Rating::new(0, 0, 4.0), Rating::new(0, 1, 2.0), Rating::new(1, 1, 5.0)],
        )
        .unwrap();
        let theta = PrecisionMatrix::new(
            SymmetricSparse::from_entries(3, vec![(0, 0, 1.0), (0, 1, -0.3), (1, 1, 1.0)]).unwrap(),
        );
        let (mut u, mut v) = init_factors(3, 2, 2, 9);
        let untouched = u.row(2).to_vec();
        let sched = EpochSchedule::new(5, 0.05, true, 1.0).unwrap();
        run_latent_phase(&train, &mut u, &mut v, &theta, &params(0.01, 0.5, 0.05), &sched, 0).unwrap();
        assert_eq!(u.row(2), untouched.as_slice());
    }

    #[test]
    fn schedule_validation_and_decay() {
        assert!(EpochSchedule::new(1, 0.0, true, 1.0).is_err());
        assert!(EpochSchedule::new(1, 0.1, true, 0.0).is_err());
        assert!(EpochSchedule::new(1, 0.1, true, 1.5).is_err());
        let s = EpochSchedule::new(3, 0.1, true, 0.5).unwrap();
        assert_eq!(s.rate_at(2), 0.025);
    }
}
