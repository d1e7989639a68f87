//! Self-normalised importance-sampling evidence estimates and a Laplace
//! fit for building oracle proposals. These serve as slow-but-simple
//! references against which the quadrature engine is checked.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bayes::GaussianPrior;
use crate::error::{Error, Result};
use crate::opt::nelder_mead;
use crate::recombination::log_sum_exp;

/// SNIS evidence estimate and its effective sample size.
#[derive(Debug, Clone, Copy)]
pub struct SnisEstimate {
    pub log_evidence: f64,
    pub ess: f64,
    pub n: usize,
}

/// Estimate `ln E_pi[exp(log_lik)]` by importance sampling from an
/// arbitrary Gaussian proposal. With `proposal == prior` this reduces to
/// plain prior Monte Carlo.
pub fn snis_evidence<F>(
    log_lik: F,
    prior: &GaussianPrior,
    proposal: &GaussianPrior,
    n: usize,
    seed: u64,
) -> Result<SnisEstimate>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    assert!(n >= 2);
    let points = proposal.sample(n, seed);
    let log_w: Vec<f64> = points
        .par_iter()
        .map(|p| log_lik(p) + prior.log_density(p) - proposal.log_density(p))
        .collect();
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights { ess: 0.0 });
    }
    let log_evidence = lse - (n as f64).ln();
    let lse2 = log_sum_exp(&log_w.iter().map(|&w| 2.0 * w).collect::<Vec<_>>());
    let ess = (2.0 * lse - lse2).exp();
    Ok(SnisEstimate { log_evidence, ess, n })
}

/// Gaussian approximation at the posterior mode: Nelder-Mead search for
/// the MAP point followed by a central-difference Hessian of the negative
/// log posterior. Indefinite Hessians are repaired by eigenvalue flooring.
pub fn laplace_fit<F>(
    log_post: F,
    x0: &DVector<f64>,
    step: f64,
    max_evals: usize,
) -> Result<GaussianPrior>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = x0.len();
    let neg = |x: &DVector<f64>| -log_post(x);
    let (mode, _) = nelder_mead(&neg, x0, step, max_evals);

    let h = 1e-4;
    let f0 = neg(&mode);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let val = if i == j {
                let mut xp = mode.clone();
                let mut xm = mode.clone();
                xp[i] += h;
                xm[i] -= h;
                (neg(&xp) - 2.0 * f0 + neg(&xm)) / (h * h)
            } else {
                let mut xpp = mode.clone();
                let mut xpm = mode.clone();
                let mut xmp = mode.clone();
                let mut xmm = mode.clone();
                xpp[i] += h;
                xpp[j] += h;
                xpm[i] += h;
                xpm[j] -= h;
                xmp[i] -= h;
                xmp[j] += h;
                xmm[i] -= h;
                xmm[j] -= h;
                (neg(&xpp) - neg(&xpm) - neg(&xmp) + neg(&xmm)) / (4.0 * h * h)
            };
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }

    // covariance = inverse Hessian, with the spectrum floored to keep it
    // positive definite when the mode sits near a flat direction
    let sym = (&hess + hess.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(1e-8f64, f64::max);
    let floor = 1e-8 * max_ev;
    let mut cov = DMatrix::zeros(d, d);
    for k in 0..d {
        let lam = eig.eigenvalues[k].max(floor);
        let u = eig.eigenvectors.column(k);
        cov += (&u * u.transpose()) / lam;
    }
    GaussianPrior::new(mode, cov)
}

/// Plain Monte Carlo estimate of a Gaussian-pushforward expectation; used
/// as a cross-check oracle in tests elsewhere.
pub fn gaussian_expectation<F>(
    mean: &DVector<f64>,
    chol_l: &DMatrix<f64>,
    f: F,
    n: usize,
    seed: u64,
) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mean.len();
    let mut acc = 0.0;
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        acc += f(&(mean + chol_l * z));
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_lik(var: f64) -> impl Fn(&DVector<f64>) -> f64 + Sync {
        move |x: &DVector<f64>| {
            let d = x.len() as f64;
            -0.5 * (x.norm_squared() / var + d * (2.0 * std::f64::consts::PI * var).ln())
        }
    }

    #[test]
    fn snis_matches_conjugate_evidence() {
        let prior = GaussianPrior::isotropic(3, 1.0);
        let lik_var = 0.5;
        let s = lik_var + 1.0;
        let truth = -0.5 * 3.0 * (2.0 * std::f64::consts::PI * s).ln();
        let est = snis_evidence(quad_lik(lik_var), &prior, &prior, 200_000, 9).unwrap();
        assert!(
            (est.log_evidence - truth).abs() < 0.02,
            "snis {} vs analytic {}",
            est.log_evidence,
            truth
        );
        assert!(est.ess > 1000.0);
    }

    #[test]
    fn laplace_proposal_beats_prior_proposal_overlap() {
        let prior = GaussianPrior::isotropic(2, 2.0);
        let lik = quad_lik(0.05);
        let log_post = |x: &DVector<f64>| lik(x) + prior.log_density(x);
        let fit = laplace_fit(log_post, &DVector::from_vec(vec![0.5, -0.5]), 0.5, 4000).unwrap();
        assert!(fit.mean.norm() < 0.05, "mode at {:?}", fit.mean);
        let from_fit = snis_evidence(&lik, &prior, &fit, 20_000, 4).unwrap();
        let from_prior = snis_evidence(&lik, &prior, &prior, 20_000, 4).unwrap();
        assert!(from_fit.ess > from_prior.ess);
        let s = 0.05 + 4.0;
        let truth = -0.5 * 2.0 * (2.0 * std::f64::consts::PI * s).ln();
        assert!((from_fit.log_evidence - truth).abs() < 0.02);
    }

    #[test]
    fn laplace_covariance_matches_conjugate_posterior() {
        let prior = GaussianPrior::isotropic(1, 1.0);
        let lik = quad_lik(0.25);
        let log_post = |x: &DVector<f64>| lik(x) + prior.log_density(x);
        let fit = laplace_fit(log_post, &DVector::from_vec(vec![0.3]), 0.3, 2000).unwrap();
        let post_var = 1.0 / (1.0 / 0.25 + 1.0);
        approx::assert_relative_eq!(fit.cov[(0, 0)], post_var, max_relative = 1e-2);
    }

    #[test]
    fn gaussian_expectation_recovers_second_moment() {
        let mean = DVector::from_vec(vec![1.0]);
        let l = DMatrix::from_vec(1, 1, vec![2.0]);
        let m2 = gaussian_expectation(&mean, &l, |x| x[0] * x[0], 400_000, 7);
        // E[x^2] = mu^2 + var = 1 + 4
        assert!((m2 - 5.0).abs() < 0.05, "{m2}");
    }
}
