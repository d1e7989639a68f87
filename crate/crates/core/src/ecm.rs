//! RC-pair equivalent-circuit impedance in the non-dimensional canonical
//! parameterisation, plus the direct complex-impedance form used as an
//! equivalence oracle.
//!
//! The canonical form expresses the real part as a sum of shifted tanh
//! transitions and the imaginary part as a scaled mixture of hyperbolic
//! secant bumps over log angular frequency. All model parameters are
//! unconstrained reals; positivity of the physical quantities is enforced
//! by the transform itself.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unconstrained standardised model parameters.
///
/// `r_total` is the log of the total real-axis resistance, `r_prime[i]`
/// maps to a dimensionless resistance via `r_i = exp(-exp(r_prime[i]))`,
/// and `tau_std[i]` is the time constant on the standardised log-frequency
/// scale of the dataset at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmParams {
    pub r_total: f64,
    pub r_prime: Vec<f64>,
    pub tau_std: Vec<f64>,
}

impl EcmParams {
    pub fn new(r_total: f64, r_prime: Vec<f64>, tau_std: Vec<f64>) -> Self {
        assert_eq!(r_prime.len(), tau_std.len(), "r_prime/tau_std length mismatch");
        assert!(!r_prime.is_empty(), "need at least one RC pair");
        Self { r_total, r_prime, tau_std }
    }

    pub fn n_pairs(&self) -> usize {
        self.r_prime.len()
    }

    /// Dimensionless resistances `r_i = exp(-exp(r_prime_i))`, each in (0,1).
    pub fn r_fractions(&self) -> Vec<f64> {
        self.r_prime.iter().map(|&rp| (-rp.exp()).exp()).collect()
    }

    /// Flat parameter vector `{ r_total, r_prime..., tau_std... }`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 2 * self.n_pairs());
        v.push(self.r_total);
        v.extend_from_slice(&self.r_prime);
        v.extend_from_slice(&self.tau_std);
        v
    }

    pub fn from_slice(n_pairs: usize, theta: &[f64]) -> Result<Self> {
        let expected = 1 + 2 * n_pairs;
        if theta.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: theta.len() });
        }
        Ok(Self {
            r_total: theta[0],
            r_prime: theta[1..1 + n_pairs].to_vec(),
            tau_std: theta[1 + n_pairs..].to_vec(),
        })
    }
}

/// Physical circuit quantities derived from [`EcmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub r_total_ohm: f64,
    pub r0_ohm: f64,
    pub r_ohm: Vec<f64>,
    pub tau_s: Vec<f64>,
    pub c_farad: Vec<f64>,
    pub lambda: Vec<f64>,
    pub r_re: f64,
    pub r_im: f64,
}

/// Empirical standardisation of the log angular frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyStandardization {
    pub mu_omega: f64,
    pub sigma_omega: f64,
    /// Standardised log angular frequencies, zero mean and unit variance.
    pub omega_std: Vec<f64>,
}

impl FrequencyStandardization {
    /// Build from frequencies in Hz; uses the population standard deviation
    /// of `ln(2 pi f)`.
    pub fn from_freqs_hz(freqs_hz: &[f64]) -> Result<Self> {
        if freqs_hz.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 frequencies, got {}",
                freqs_hz.len()
            )));
        }
        if freqs_hz.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::InvalidGrid("non-positive or non-finite frequency".into()));
        }
        let ln_omega: Vec<f64> = freqs_hz
            .iter()
            .map(|&f| (2.0 * std::f64::consts::PI * f).ln())
            .collect();
        let n = ln_omega.len() as f64;
        let mu = ln_omega.iter().sum::<f64>() / n;
        let var = ln_omega.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::InvalidGrid("zero variance in log frequency".into()));
        }
        let sigma = var.sqrt();
        let omega_std = ln_omega.iter().map(|&x| (x - mu) / sigma).collect();
        Ok(Self { mu_omega: mu, sigma_omega: sigma, omega_std })
    }

    /// Log angular frequencies `ln w` recovered from the standardised grid.
    pub fn ln_omega(&self) -> Vec<f64> {
        self.omega_std
            .iter()
            .map(|&s| self.sigma_omega * s + self.mu_omega)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.omega_std.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_std.is_empty()
    }
}

const SUM_R_TOL: f64 = 1e-12;

/// Map the canonical parameters to physical circuit quantities.
///
/// Fails with [`Error::DegenerateParams`] when the dimensionless
/// resistances leave no room for the series resistance `r_0 = 1 - sum r_i`.
pub fn to_physical(p: &EcmParams, std: &FrequencyStandardization) -> Result<PhysicalParams> {
    let r = p.r_fractions();
    let sum_r: f64 = r.iter().sum();
    if sum_r >= 1.0 - SUM_R_TOL {
        return Err(Error::DegenerateParams { sum_r });
    }
    let r_total_ohm = p.r_total.exp();
    let r0 = 1.0 - sum_r;
    let r_ohm: Vec<f64> = r.iter().map(|&ri| ri * r_total_ohm).collect();
    let sum_r_ohm: f64 = r_ohm.iter().sum();
    // ln tau_i = -sigma_w * tau_std_i - mu_w, so ln(w tau_i) vanishes at the
    // breakpoint frequency of pair i.
    let tau_s: Vec<f64> = p
        .tau_std
        .iter()
        .map(|&t| (-std.sigma_omega * t - std.mu_omega).exp())
        .collect();
    let c_farad: Vec<f64> = tau_s
        .iter()
        .zip(&r_ohm)
        .map(|(&tau, &ri)| tau / ri)
        .collect();
    let lambda: Vec<f64> = r_ohm.iter().map(|&ri| ri / sum_r_ohm).collect();
    Ok(PhysicalParams {
        r_total_ohm,
        r0_ohm: r0 * r_total_ohm,
        r_ohm,
        tau_s,
        c_farad,
        lambda,
        r_re: r_total_ohm,
        r_im: std::f64::consts::FRAC_PI_2 * sum_r_ohm,
    })
}

/// Canonical impedance over the standardised grid.
///
/// Returns `(Re[Z], Im[Z])` with the imaginary part stored as the positive
/// semicircle magnitude (`-Im` in Nyquist convention).
pub fn impedance(p: &EcmParams, std: &FrequencyStandardization) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = p.r_fractions();
    let sum_r: f64 = r.iter().sum();
    if sum_r >= 1.0 - SUM_R_TOL {
        return Err(Error::DegenerateParams { sum_r });
    }
    let r_total = p.r_total.exp();
    let r0 = 1.0 - sum_r;
    let r_im = std::f64::consts::FRAC_PI_2 * sum_r * r_total;
    let lambda: Vec<f64> = r.iter().map(|&ri| ri / sum_r).collect();

    let m = std.omega_std.len();
    let mut re = Vec::with_capacity(m);
    let mut im = Vec::with_capacity(m);
    for &w_std in &std.omega_std {
        let mut re_acc = r0;
        let mut im_acc = 0.0;
        for i in 0..r.len() {
            // ln(w tau_i) = sigma_w (w_std - tau_std_i)
            let lwt = std.sigma_omega * (w_std - p.tau_std[i]);
            re_acc += 0.5 * r[i] * (1.0 - lwt.tanh());
            im_acc += lambda[i] / std::f64::consts::PI * sech(lwt);
        }
        re.push(r_total * re_acc);
        im.push(r_im * im_acc);
    }
    Ok((re, im))
}

/// Direct complex impedance `Z = R_0 + sum R_i / (1 + j w C_i R_i)`.
pub fn impedance_direct(r0: f64, r: &[f64], c: &[f64], omega: &[f64]) -> Vec<Complex64> {
    assert_eq!(r.len(), c.len());
    omega
        .iter()
        .map(|&w| {
            let mut z = Complex64::new(r0, 0.0);
            for (&ri, &ci) in r.iter().zip(c) {
                z += ri / Complex64::new(1.0, w * ci * ri);
            }
            z
        })
        .collect()
}

#[inline]
pub fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

#[inline]
pub fn csch(x: f64) -> f64 {
    1.0 / x.sinh()
}
