//! Four-layer warped-GP transformation chain.
//!
//! The base GP lives in h space (square-root normalised log likelihood).
//! Backward transformations recover g (square-root normalised likelihood),
//! f (normalised likelihood) and the log-scaled likelihood itself, with
//! moment matching for the log and square layers. The scaling constant
//! `beta` never gets exponentiated; consumers combine it in log space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpState;

/// Scaling and floor constants recomputed from the full observed set of
/// log-likelihood values on every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpConstants {
    pub alpha: f64,
    pub beta: f64,
}

impl WarpConstants {
    pub fn from_log_liks(ys: &[f64]) -> Self {
        assert!(!ys.is_empty());
        let beta = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let alpha = ys.iter().map(|&y| (y - beta).exp()).fold(f64::INFINITY, f64::min);
        Self { alpha, beta }
    }
}

/// Which warp layers are active. The full chain is the default; partial
/// chains exist for ablation comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpLayers {
    pub scaling: bool,
    pub sqrt: bool,
    pub log: bool,
}

impl Default for WarpLayers {
    fn default() -> Self {
        Self { scaling: true, sqrt: true, log: true }
    }
}

impl WarpLayers {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.log {
            parts.push("log");
        }
        if self.sqrt {
            parts.push("sqrt");
        }
        if self.scaling {
            parts.push("scaling");
        }
        if parts.is_empty() {
            parts.push("none");
        }
        parts.join("+")
    }
}

/// Forward warp of observed log-likelihood values into base-GP targets
/// for the full four-layer chain: f = exp(y - beta), g = sqrt(2(f -
/// alpha)), h = ln(g + 1).
pub fn forward(ys: &[f64], consts: &WarpConstants) -> Result<Vec<f64>> {
    forward_layers(ys, consts, WarpLayers::default())
}

/// Forward warp with a configurable layer subset. Without the scaling
/// layer the intermediate likelihood values may overflow to infinity;
/// the caller is expected to detect non-finite targets.
pub fn forward_layers(ys: &[f64], consts: &WarpConstants, layers: WarpLayers) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ys.len());
    for &y in ys {
        let f = if layers.scaling { (y - consts.beta).exp() } else { y.exp() };
        let g = if layers.sqrt {
            let rad = 2.0 * (f - consts.alpha);
            if rad < -2e-15 {
                return Err(Error::NegativeRadicand { f, alpha: consts.alpha });
            }
            rad.max(0.0).sqrt()
        } else {
            f
        };
        let h = if layers.log { g.ln_1p() } else { g };
        out.push(h);
    }
    Ok(out)
}

/// Backward transform of base-GP target values to log-likelihood values.
pub fn backward(hs: &[f64], consts: &WarpConstants) -> Vec<f64> {
    hs.iter()
        .map(|&h| {
            let g = h.exp_m1();
            let f = consts.alpha + 0.5 * g * g;
            f.ln() + consts.beta
        })
        .collect()
}

/// Warped surrogate: base GP over forward-warped targets plus the warp
/// constants in effect when the targets were computed.
#[derive(Debug, Clone)]
pub struct WarpedSurrogate {
    pub base: GpState,
    pub consts: WarpConstants,
    pub layers: WarpLayers,
}

impl WarpedSurrogate {
    pub fn new(base: GpState, consts: WarpConstants) -> Self {
        Self { base, consts, layers: WarpLayers::default() }
    }

    pub fn with_layers(base: GpState, consts: WarpConstants, layers: WarpLayers) -> Self {
        Self { base, consts, layers }
    }

    /// g-space moments by exact log-normal matching of `exp(h) - 1`.
    ///
    /// The cross-covariance uses the log-normal cross moment
    /// `m(x) m(y) (exp sigma_h(x,y) - 1)` with `m = exp(mu_h + sigma_h/2)`.
    pub fn moments_g(&self, points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let (mu_h, cov_h) = self.moments_h(points);
        lognormal_moments(&mu_h, &cov_h)
    }

    /// f-space moments: exact second-order moments of `alpha + g^2 / 2`
    /// under the Gaussian-matched g. Negative diagonal entries are clamped.
    pub fn moments_f(&self, points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let (mu_g, cov_g) = self.moments_g(points);
        square_moments(self.consts.alpha, &mu_g, &cov_g)
    }

    /// Log-domain e-space mean: `ln mu_f + beta` per point. Never
    /// exponentiates beta.
    pub fn log_mu_e(&self, points: &[DVector<f64>]) -> Vec<f64> {
        let (mu_f, _) = self.moments_f(points);
        mu_f.iter().map(|&m| m.ln() + self.consts.beta).collect()
    }

    /// Largest observed h target: beta normalisation puts the observed
    /// maximum there, so predictive means above it are interpolation
    /// artifacts that the exp layer would amplify catastrophically.
    fn h_cap(&self) -> f64 {
        self.base.targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Base-GP posterior moments, mean clamped at the observed maximum.
    pub fn moments_h(&self, points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let cap = self.h_cap();
        let mut mu = self.base.predict_mean(points);
        for v in mu.iter_mut() {
            *v = v.min(cap);
        }
        let mut cov = self.base.predict_cov(points, points);
        for i in 0..points.len() {
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        (mu, cov)
    }

    /// Diagonal-only g moments, cheaper than [`Self::moments_g`] when the
    /// cross terms are not needed (candidate scoring).
    pub fn g_mean_var(&self, points: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
        let cap = self.h_cap();
        let mut mu_h = self.base.predict_mean(points);
        for v in mu_h.iter_mut() {
            *v = v.min(cap);
        }
        let var_h = self.base.predict_var(points);
        let n = points.len();
        let mut mu_g = DVector::zeros(n);
        let mut var_g = DVector::zeros(n);
        for i in 0..n {
            if self.layers.log {
                let m = (mu_h[i] + 0.5 * var_h[i]).exp();
                mu_g[i] = m - 1.0;
                var_g[i] = m * m * (var_h[i].exp_m1()).max(0.0);
            } else {
                mu_g[i] = mu_h[i];
                var_g[i] = var_h[i];
            }
        }
        (mu_g, var_g)
    }

    /// Diagonal predictive mean in normalised-likelihood space through
    /// whichever layers are active; cheap enough for dense query sets.
    /// Mean-only: excludes the predictive-variance term so unexplored
    /// regions do not contribute spurious evidence mass.
    pub fn f_mean_diag(&self, points: &[DVector<f64>]) -> DVector<f64> {
        let (mu_g, _) = self.g_mean_var(points);
        if !self.layers.sqrt {
            return mu_g;
        }
        DVector::from_fn(points.len(), |i, _| self.consts.alpha + 0.5 * mu_g[i] * mu_g[i])
    }

    /// g-space cross-covariance between two point sets.
    pub fn g_cross_cov(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
        let cov_h = self.base.predict_cov(a, b);
        if !self.layers.log {
            return cov_h;
        }
        let (mu_a, var_a) = (self.base.predict_mean(a), self.base.predict_var(a));
        let (mu_b, var_b) = (self.base.predict_mean(b), self.base.predict_var(b));
        let ma = DVector::from_fn(a.len(), |i, _| (mu_a[i] + 0.5 * var_a[i]).exp());
        let mb = DVector::from_fn(b.len(), |i, _| (mu_b[i] + 0.5 * var_b[i]).exp());
        DMatrix::from_fn(a.len(), b.len(), |i, j| ma[i] * mb[j] * cov_h[(i, j)].exp_m1())
    }

    /// Normalised-likelihood-space moments through whichever layers are
    /// active. For the full chain this equals [`Self::moments_f`].
    pub fn predictive_moments(&self, points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let (mut mu, mut cov) = self.moments_h(points);
        if self.layers.log {
            let (m, c) = lognormal_moments(&mu, &cov);
            mu = m;
            cov = c;
        }
        if self.layers.sqrt {
            let (m, c) = square_moments(self.consts.alpha, &mu, &cov);
            mu = m;
            cov = c;
        }
        (mu, cov)
    }

    /// Additive log-domain shift that undoes the scaling layer: `beta`
    /// when scaling is active, zero otherwise.
    pub fn beta_shift(&self) -> f64 {
        if self.layers.scaling {
            self.consts.beta
        } else {
            0.0
        }
    }
}

fn lognormal_moments(mu_h: &DVector<f64>, cov_h: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu_h.len();
    let m = DVector::from_fn(n, |i, _| (mu_h[i] + 0.5 * cov_h[(i, i)]).exp());
    let mu_g = DVector::from_fn(n, |i, _| m[i] - 1.0);
    let mut cov_g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cov_g[(i, j)] = m[i] * m[j] * cov_h[(i, j)].exp_m1();
        }
        cov_g[(i, i)] = cov_g[(i, i)].max(0.0);
    }
    (mu_g, cov_g)
}

fn square_moments(
    alpha: f64,
    mu_g: &DVector<f64>,
    cov_g: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mu_g.len();
    let mu_f = DVector::from_fn(n, |i, _| alpha + 0.5 * (mu_g[i] * mu_g[i] + cov_g[(i, i)]));
    let mut cov_f = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s = cov_g[(i, j)];
            cov_f[(i, j)] = 0.5 * s * s + mu_g[i] * s * mu_g[j];
        }
        cov_f[(i, i)] = cov_f[(i, i)].max(0.0);
    }
    (mu_f, cov_f)
}
