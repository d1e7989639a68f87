//! Exact Gaussian-process regression with a squared-exponential kernel,
//! per-dimension lengthscales, and multi-start marginal-likelihood
//! hyperparameter fitting.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Column chunk size for parallel cross-covariance solves.
const CHUNK: usize = 256;

use crate::error::{Error, Result};
use crate::opt::nelder_mead;

const LN_2PI: f64 = 1.8378770664093453;

/// Squared-exponential kernel with automatic relevance determination.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub output_scale: f64,
    pub lengthscales: DVector<f64>,
}

impl Kernel {
    pub fn new(output_scale: f64, lengthscales: DVector<f64>) -> Self {
        assert!(output_scale > 0.0 && output_scale.is_finite());
        assert!(lengthscales.iter().all(|&l| l > 0.0 && l.is_finite()));
        Self { output_scale, lengthscales }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    pub fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            let z = (a[i] - b[i]) / self.lengthscales[i];
            s += z * z;
        }
        self.output_scale * self.output_scale * (-0.5 * s).exp()
    }

    fn gram(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval(&a[i], &b[j]))
    }
}

/// Immutable GP posterior state over zero-mean targets.
#[derive(Debug, Clone)]
pub struct GpState {
    pub kernel: Kernel,
    pub inputs: Vec<DVector<f64>>,
    pub targets: DVector<f64>,
    pub jitter: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl GpState {
    /// Condition on observations. The jitter ladder starts at
    /// `1e-10 * output_scale^2` and escalates tenfold up to `1e-4` of the
    /// signal variance before failing.
    pub fn fit(kernel: Kernel, inputs: Vec<DVector<f64>>, targets: DVector<f64>) -> Result<Self> {
        assert_eq!(inputs.len(), targets.len());
        if inputs.is_empty() {
            return Ok(Self {
                kernel,
                inputs,
                targets,
                jitter: 0.0,
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let n = inputs.len();
        let gram = kernel.gram(&inputs, &inputs);
        let s2 = kernel.output_scale * kernel.output_scale;
        let mut jitter = 1e-10 * s2;
        let max_jitter = 1e-4 * s2;
        loop {
            let mut k = gram.clone();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(k) {
                let alpha = chol.solve(&targets);
                return Ok(Self { kernel, inputs, targets, jitter, chol: Some(chol), alpha });
            }
            jitter *= 10.0;
            if jitter > max_jitter {
                return Err(Error::CholeskyFailure { max_jitter });
            }
        }
    }

    pub fn n_obs(&self) -> usize {
        self.inputs.len()
    }

    pub fn predict_mean(&self, queries: &[DVector<f64>]) -> DVector<f64> {
        if self.inputs.is_empty() {
            return DVector::zeros(queries.len());
        }
        let vals: Vec<f64> = queries
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let kx = self.kernel.gram(&self.inputs, chunk);
                let m = kx.transpose() * &self.alpha;
                m.iter().copied().collect::<Vec<_>>()
            })
            .collect();
        DVector::from_vec(vals)
    }

    /// `L^{-1} K(X, Q)`, solved in parallel column chunks.
    fn whitened_cross(&self, queries: &[DVector<f64>]) -> Option<DMatrix<f64>> {
        let chol = self.chol.as_ref()?;
        let n = self.inputs.len();
        let blocks: Vec<DMatrix<f64>> = queries
            .par_chunks(CHUNK)
            .map(|chunk| {
                let kx = self.kernel.gram(&self.inputs, chunk);
                chol.l().solve_lower_triangular(&kx).expect("triangular solve")
            })
            .collect();
        let mut out = DMatrix::zeros(n, queries.len());
        let mut col = 0;
        for b in blocks {
            out.view_mut((0, col), (n, b.ncols())).copy_from(&b);
            col += b.ncols();
        }
        Some(out)
    }

    /// Posterior cross-covariance between two query sets.
    pub fn predict_cov(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
        let mut cov = self.kernel.gram(a, b);
        if let (Some(va), Some(vb)) = (self.whitened_cross(a), self.whitened_cross(b)) {
            cov -= va.transpose() * vb;
        }
        cov
    }

    /// Posterior variance at each query, clamped to be non-negative.
    pub fn predict_var(&self, queries: &[DVector<f64>]) -> DVector<f64> {
        let s2 = self.kernel.output_scale * self.kernel.output_scale;
        match self.whitened_cross(queries) {
            None => DVector::from_element(queries.len(), s2),
            Some(v) => DVector::from_fn(queries.len(), |j, _| {
                (s2 - v.column(j).norm_squared()).max(0.0)
            }),
        }
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        match &self.chol {
            None => 0.0,
            Some(chol) => {
                let n = self.n_obs() as f64;
                let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                -0.5 * self.targets.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * LN_2PI
            }
        }
    }
}

/// Maximise the log marginal likelihood over kernel hyperparameters with
/// seeded multi-start Nelder-Mead in log space. Never fails: returns the
/// best kernel found (the data-scaled heuristic start when all restarts
/// fall over).
pub fn fit_hyperparams(
    inputs: &[DVector<f64>],
    targets: &DVector<f64>,
    restarts: usize,
    seed: u64,
) -> Kernel {
    assert!(inputs.len() >= 2, "need at least 2 observations");
    let d = inputs[0].len();
    let n = inputs.len();

    // data-scale heuristics for the starting point
    let mut spans = vec![0.0f64; d];
    for k in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in inputs {
            lo = lo.min(x[k]);
            hi = hi.max(x[k]);
        }
        spans[k] = (hi - lo).max(1e-3);
    }
    let y_std = {
        let mean = targets.sum() / n as f64;
        let var = targets.iter().map(|&y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
        var.sqrt().max(1e-8)
    };

    // box the search: lengthscales far outside the data span (either way)
    // produce near-singular grams whose interpolants overshoot wildly once
    // pushed through the exp layer
    let lo_ls: Vec<f64> = spans.iter().map(|s| (s / 100.0).ln()).collect();
    let hi_ls: Vec<f64> = spans.iter().map(|s| (s * 10.0).ln()).collect();
    let (lo_scale, hi_scale) = ((y_std * 1e-3).ln(), (y_std * 1e3).ln());
    let objective = |log_params: &DVector<f64>| -> f64 {
        if log_params.iter().any(|v| !v.is_finite()) {
            return 1e12;
        }
        if log_params[0] < lo_scale || log_params[0] > hi_scale {
            return 1e12;
        }
        for k in 0..d {
            if log_params[1 + k] < lo_ls[k] || log_params[1 + k] > hi_ls[k] {
                return 1e12;
            }
        }
        let kernel = Kernel::new(
            log_params[0].exp(),
            DVector::from_fn(d, |i, _| log_params[1 + i].exp()),
        );
        match GpState::fit(kernel, inputs.to_vec(), targets.clone()) {
            Ok(gp) => {
                let lml = gp.log_marginal_likelihood();
                if lml.is_finite() {
                    -lml
                } else {
                    1e12
                }
            }
            Err(_) => 1e12,
        }
    };

    let mut base = DVector::zeros(1 + d);
    base[0] = y_std.ln();
    for k in 0..d {
        base[1 + k] = (0.3 * spans[k]).ln();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (base.clone(), objective(&base));
    for r in 0..restarts.max(1) {
        let start = if r == 0 {
            base.clone()
        } else {
            DVector::from_fn(1 + d, |i, _| base[i] + rng.gen_range(-1.0..1.0))
        };
        let (x, fx) = nelder_mead(&objective, &start, 0.4, 120 * (1 + d));
        if fx < best.1 {
            best = (x, fx);
        }
    }
    Kernel::new(best.0[0].exp(), DVector::from_fn(d, |i, _| best.0[1 + i].exp()))
}
