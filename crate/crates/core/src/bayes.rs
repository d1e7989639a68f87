//! Prior, likelihood, and unnormalised posterior shared by every
//! inference engine in the crate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ecm::{impedance, EcmParams};
use crate::error::{Error, Result};

/// Log-likelihood floor applied when the parameters are degenerate.
pub const LOG_LIK_FLOOR: f64 = -1e300;

const LN_2PI: f64 = 1.8378770664093453;

/// Full parameter vector: circuit parameters plus `ln sigma^2` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub ecm: EcmParams,
    pub log_sigma2: f64,
}

impl Theta {
    pub fn dim(&self) -> usize {
        2 + 2 * self.ecm.n_pairs()
    }

    /// Flat vector `{ r_total, r_prime..., tau_std..., ln sigma^2 }`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.ecm.to_vec();
        v.push(self.log_sigma2);
        v
    }

    pub fn from_slice(n_pairs: usize, v: &[f64]) -> Result<Self> {
        let expected = 2 + 2 * n_pairs;
        if v.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: v.len() });
        }
        Ok(Self {
            ecm: EcmParams::from_slice(n_pairs, &v[..expected - 1])?,
            log_sigma2: v[expected - 1],
        })
    }
}

/// How the error term enters the Gaussian observation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResidualMode {
    /// Gaussian noise on the residual `y_obs - y_ecm` (the standard reading).
    #[default]
    Standard,
    /// The density evaluated at the squared error itself, for fidelity
    /// experiments with the quartic-penalty variant.
    LiteralSquared,
}

/// Gaussian log-likelihood of a dataset under a candidate parameter set.
///
/// Each frequency contributes two residuals (real and imaginary channel).
/// Degenerate parameters map to [`LOG_LIK_FLOOR`] instead of erroring, so
/// the function is total.
pub fn log_likelihood(theta: &Theta, data: &Dataset, mode: ResidualMode) -> f64 {
    if theta.ecm.r_prime.iter().any(|v| !v.is_finite())
        || theta.ecm.tau_std.iter().any(|v| !v.is_finite())
        || !theta.ecm.r_total.is_finite()
        || !theta.log_sigma2.is_finite()
    {
        return LOG_LIK_FLOOR;
    }
    let (re, im) = match impedance(&theta.ecm, &data.std) {
        Ok(z) => z,
        Err(_) => return LOG_LIK_FLOOR,
    };
    let sigma2 = theta.log_sigma2.exp();
    let mut quad = 0.0;
    for j in 0..data.len() {
        let mut er = data.y_re[j] - re[j];
        let mut ei = data.y_im[j] - im[j];
        if mode == ResidualMode::LiteralSquared {
            er *= er;
            ei *= ei;
        }
        quad += er * er + ei * ei;
    }
    let n = 2.0 * data.len() as f64;
    let ll = -0.5 * n * (LN_2PI + theta.log_sigma2) - 0.5 * quad / sigma2;
    if ll.is_finite() {
        ll
    } else {
        LOG_LIK_FLOOR
    }
}

/// Multivariate normal prior over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::NonPsdCovariance);
                }
            }
        }
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NonPsdCovariance)?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * LN_2PI + log_det);
        Ok(Self { mean, cov, chol, log_norm })
    }

    /// Isotropic prior `N(0, scale^2 I)` of dimension `d`.
    pub fn isotropic(d: usize, scale: f64) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d) * scale * scale)
            .expect("isotropic covariance is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let z = self.chol.l().solve_lower_triangular(&diff).expect("triangular solve");
        self.log_norm - 0.5 * z.norm_squared()
    }

    /// `n` deterministic seeded draws via the Cholesky factor.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        (0..n)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                &self.mean + self.chol.l() * z
            })
            .collect()
    }
}

/// Prior specification as read from JSON: either a diagonal or a full
/// covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
}

impl PriorSpec {
    pub fn build(&self) -> Result<GaussianPrior> {
        let d = self.mean.len();
        let cov = if let Some(diag) = &self.cov_diag {
            if diag.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: diag.len() });
            }
            DMatrix::from_diagonal(&DVector::from_vec(diag.clone()))
        } else if let Some(full) = &self.cov {
            if full.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: full.len() });
            }
            DMatrix::from_fn(d, d, |i, j| full[i][j])
        } else {
            return Err(Error::Schema("prior needs cov_diag or cov".into()));
        };
        GaussianPrior::new(DVector::from_vec(self.mean.clone()), cov)
    }

    pub fn from_prior(prior: &GaussianPrior) -> Self {
        Self {
            mean: prior.mean.iter().copied().collect(),
            cov_diag: None,
            cov: Some(
                (0..prior.dim())
                    .map(|i| (0..prior.dim()).map(|j| prior.cov[(i, j)]).collect())
                    .collect(),
            ),
        }
    }
}

/// Unnormalised log posterior: `log_likelihood + log_prior`.
pub fn log_posterior_unnorm(
    theta: &Theta,
    data: &Dataset,
    prior: &GaussianPrior,
    mode: ResidualMode,
) -> f64 {
    let x = DVector::from_vec(theta.to_vec());
    log_likelihood(theta, data, mode) + prior.log_density(&x)
}
