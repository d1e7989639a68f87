//! Candidate generation (midpoint heuristic plus supersampling) and
//! positively-weighted kernel recombination.
//!
//! Recombination reduces a large weighted candidate set to at most M+1
//! points with strictly positive weights while exactly preserving the
//! weighted means of M feature functions and the total mass.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bayes::GaussianPrior;
use crate::error::{Error, Result};
use crate::warp::WarpedSurrogate;

const LN_2PI: f64 = 1.8378770664093453;

/// Midpoints with all pairs enumerated up to this many observed points;
/// beyond it a scored random subset is kept.
const MIDPOINT_FULL_LIMIT: usize = 64;

/// Gaussian mixture proposal over the high-uncertainty region, with a
/// wide prior component retained for coverage of the integration measure.
#[derive(Debug, Clone)]
pub struct ProposalMixture {
    pub means: Vec<DVector<f64>>,
    /// Per-component diagonal covariance, parallel to `means`: each
    /// midpoint appears once at the half-lengthscale width (exploration)
    /// and once at the posterior-scale width (exploitation).
    pub var_diags: Vec<DVector<f64>>,
    /// Midpoint component weights; positive, sum to `1 - prior_weight`.
    pub weights: Vec<f64>,
    pub prior: GaussianPrior,
    pub prior_weight: f64,
}

impl ProposalMixture {
    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x.len();
        let mut terms = Vec::with_capacity(self.means.len() + 1);
        if self.prior_weight > 0.0 {
            terms.push(self.prior_weight.ln() + self.prior.log_density(x));
        }
        for (c, (mean, &w)) in self.means.iter().zip(&self.weights).enumerate() {
            let vd = &self.var_diags[c];
            let log_norm: f64 =
                -0.5 * (d as f64 * LN_2PI + vd.iter().map(|v| v.ln()).sum::<f64>());
            let mut q = 0.0;
            for i in 0..d {
                let z = x[i] - mean[i];
                q += z * z / vd[i];
            }
            terms.push(w.ln() + log_norm - 0.5 * q);
        }
        log_sum_exp(&terms)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.prior.dim();
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                if u < self.prior_weight || self.means.is_empty() {
                    let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                    &self.prior.mean + self.prior_chol_l() * z
                } else {
                    // draw a midpoint component by cumulative weight
                    let target = (u - self.prior_weight) / (1.0 - self.prior_weight);
                    let mut acc = 0.0;
                    let mut idx = self.means.len() - 1;
                    let total: f64 = self.weights.iter().sum();
                    for (c, &w) in self.weights.iter().enumerate() {
                        acc += w / total;
                        if target <= acc {
                            idx = c;
                            break;
                        }
                    }
                    DVector::from_fn(d, |i, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        self.means[idx][i] + self.var_diags[idx][i].sqrt() * z
                    })
                }
            })
            .collect()
    }

    fn prior_chol_l(&self) -> DMatrix<f64> {
        nalgebra::Cholesky::new(self.prior.cov.clone())
            .expect("prior covariance is positive definite")
            .l()
    }
}

/// Build the midpoint-heuristic proposal from the observed inputs of the
/// surrogate. Component weights follow `sigma_g * pi'` with
/// `pi' = mu_g * pi`, scored in log domain; a prior component with fixed
/// weight keeps the mixture supported over the integration measure.
pub fn build_proposal(
    surrogate: &WarpedSurrogate,
    prior: &GaussianPrior,
    n_heur: usize,
    seed: u64,
) -> ProposalMixture {
    let obs = &surrogate.base.inputs;
    let n = obs.len();
    assert!(n >= 2, "midpoint proposal needs at least 2 observed points");

    let mut midpoints: Vec<DVector<f64>> = Vec::new();
    if n <= MIDPOINT_FULL_LIMIT {
        for r in 0..n {
            for s in (r + 1)..n {
                midpoints.push((&obs[r] + &obs[s]) * 0.5);
            }
        }
    } else {
        // random pair subset, scored below, keep the top n_heur
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_6470);
        let n_draw = 2 * n_heur;
        for _ in 0..n_draw {
            let r = rng.gen_range(0..n);
            let mut s = rng.gen_range(0..n - 1);
            if s >= r {
                s += 1;
            }
            midpoints.push((&obs[r] + &obs[s]) * 0.5);
        }
    }

    let (mu_g, var_g) = surrogate.g_mean_var(&midpoints);
    let mut scored: Vec<(usize, f64)> = midpoints
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let pos = mu_g[i].max(0.0);
            let score = if pos > 0.0 && var_g[i] > 0.0 {
                var_g[i].ln() + pos.ln() + prior.log_density(p)
            } else {
                f64::NEG_INFINITY
            };
            (i, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(n_heur);
    scored.retain(|&(_, s)| s.is_finite());

    // two width sets per midpoint: the half-lengthscale width explores
    // around the peak, and the f-weighted spread of the observations
    // (an estimate of the posterior scale per dimension) exploits the
    // core once the likelihood is sharp
    let d = obs[0].len();
    let targets = &surrogate.base.targets;
    let alpha = surrogate.consts.alpha;
    let f_obs: Vec<f64> = targets
        .iter()
        .map(|&h| {
            let g = h.exp_m1().max(0.0);
            alpha + 0.5 * g * g
        })
        .collect();
    let f_sum: f64 = f_obs.iter().sum();
    let lengthscales = &surrogate.base.kernel.lengthscales;
    let wide = DVector::from_fn(d, |k, _| {
        let half = 0.5 * lengthscales[k];
        half * half
    });
    let narrow = DVector::from_fn(d, |k, _| {
        if f_sum > 0.0 {
            let mean: f64 = obs.iter().zip(&f_obs).map(|(x, &w)| w * x[k]).sum::<f64>() / f_sum;
            let var: f64 = obs
                .iter()
                .zip(&f_obs)
                .map(|(x, &w)| w * (x[k] - mean) * (x[k] - mean))
                .sum::<f64>()
                / f_sum;
            var.max(1e-12).min(wide[k])
        } else {
            wide[k]
        }
    });

    if scored.is_empty() {
        // all component weights underflowed: prior-only mixture
        return ProposalMixture {
            means: Vec::new(),
            var_diags: Vec::new(),
            weights: Vec::new(),
            prior: prior.clone(),
            prior_weight: 1.0,
        };
    }

    let log_scores: Vec<f64> = scored.iter().map(|&(_, s)| s).collect();
    let lse = log_sum_exp(&log_scores);
    let prior_weight = 0.25;
    let mut means = Vec::with_capacity(2 * scored.len());
    let mut var_diags = Vec::with_capacity(2 * scored.len());
    let mut weights = Vec::with_capacity(2 * scored.len());
    for (&(i, s), vd) in scored.iter().flat_map(|sc| [(sc, &wide), (sc, &narrow)]) {
        means.push(midpoints[i].clone());
        var_diags.push(vd.clone());
        weights.push(0.5 * (1.0 - prior_weight) * (s - lse).exp());
    }
    ProposalMixture { means, var_diags, weights, prior: prior.clone(), prior_weight }
}

/// Supersampled candidate set with the importance weights needed by both
/// the recombination step and the uncertainty-sampling diagnostics.
#[derive(Debug, Clone)]
pub struct SuperSample {
    pub points: Vec<DVector<f64>>,
    /// Normalised weights correcting the draws to the prior measure.
    pub w_prior: Vec<f64>,
    /// Normalised weights correcting the draws to the uncertainty target
    /// `A(theta) = sigma_g * pi' / Z_A`.
    pub w_uncertainty: Vec<f64>,
    /// Per-point log of `pi / A-tilde` up to the shared normalising
    /// constant: the importance correction from the uncertainty target
    /// back to the prior measure. `-inf` where the target has no mass.
    pub log_pi_over_a: Vec<f64>,
    /// Estimate of the uncertainty-target normalising constant.
    pub z_a: f64,
    pub ess: f64,
}

/// Draw `n_super` candidates from the proposal and compute the
/// importance corrections. Errors with [`Error::DegenerateWeights`] only
/// when the prior weights carry no mass at all; a collapsed uncertainty
/// target is reported through `ess` and left to the caller.
pub fn supersample(
    proposal: &ProposalMixture,
    surrogate: &WarpedSurrogate,
    prior: &GaussianPrior,
    n_super: usize,
    seed: u64,
) -> Result<SuperSample> {
    assert!(n_super >= 1);
    let points = proposal.sample(n_super, seed);
    let (mu_g, var_g) = surrogate.g_mean_var(&points);

    let scores: Vec<(f64, f64, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let log_pi = prior.log_density(p);
            let log_q = proposal.log_density(p);
            let w_pi = (log_pi - log_q).exp();
            // A-tilde up to its normalising constant, kept in log domain so
            // small prior densities cannot underflow the weight
            let su = var_g[i].max(0.0) * mu_g[i].max(0.0);
            let w_a = if su > 0.0 { (su.ln() + log_pi - log_q).exp() } else { 0.0 };
            // pi / A-tilde: the log_pi factors cancel
            let lpa = if su > 0.0 { -su.ln() } else { f64::NEG_INFINITY };
            (w_pi, w_a, lpa)
        })
        .collect();

    let mut w_prior: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let w_a_raw: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let log_pi_over_a: Vec<f64> = scores.iter().map(|s| s.2).collect();
    let z_a = w_a_raw.iter().sum::<f64>() / n_super as f64;

    let sum_pi: f64 = w_prior.iter().sum();
    if sum_pi <= 0.0 {
        return Err(Error::DegenerateWeights { ess: 0.0 });
    }
    for w in &mut w_prior {
        *w /= sum_pi;
    }

    let sum_a: f64 = w_a_raw.iter().sum();
    let (w_uncertainty, ess) = if sum_a > 0.0 {
        let w: Vec<f64> = w_a_raw.iter().map(|&v| v / sum_a).collect();
        let ess = 1.0 / w.iter().map(|&v| v * v).sum::<f64>();
        (w, ess)
    } else {
        (vec![0.0; n_super], 0.0)
    };

    Ok(SuperSample { points, w_prior, w_uncertainty, log_pi_over_a, z_a, ess })
}

/// Systematic resampling to `n_out` equal-weight indices.
pub fn resample_indices(weights: &[f64], n_out: usize, seed: u64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: f64 = rng.gen::<f64>() / n_out as f64;
    let mut out = Vec::with_capacity(n_out);
    let mut acc = 0.0;
    let mut i = 0;
    for k in 0..n_out {
        let u = (start + k as f64 / n_out as f64) * total;
        while acc + weights[i] < u && i + 1 < weights.len() {
            acc += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Systematic resampling to an equal-weight subset of size `n_out`.
pub fn resample_equal_weight(
    points: &[DVector<f64>],
    weights: &[f64],
    n_out: usize,
    seed: u64,
) -> Vec<DVector<f64>> {
    assert_eq!(points.len(), weights.len());
    resample_indices(weights, n_out, seed).into_iter().map(|i| points[i].clone()).collect()
}

/// Sparse quadrature nodes with strictly positive weights.
#[derive(Debug, Clone)]
pub struct QuadratureNodes {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureNodes {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Carathéodory reduction: keep at most M+1 of the candidates with
/// positive weights so that the weighted mean of every feature column and
/// the total mass are preserved exactly.
///
/// `features` has one row per candidate and M columns. Candidates with
/// zero weight are dropped up front. The elimination removes, at each
/// step, the candidate with the smallest weight-to-null-direction ratio.
pub fn recombine(
    candidates: &[DVector<f64>],
    features: &DMatrix<f64>,
    weights: &[f64],
) -> QuadratureNodes {
    assert_eq!(candidates.len(), features.nrows());
    assert_eq!(candidates.len(), weights.len());
    let m = features.ncols();
    let rows = m + 1; // features plus the mass constraint

    let mut active: Vec<usize> = (0..candidates.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut w: Vec<f64> = weights.to_vec();

    if active.len() <= rows {
        return QuadratureNodes {
            points: active.iter().map(|&i| candidates[i].clone()).collect(),
            weights: active.iter().map(|&i| w[i]).collect(),
        };
    }

    // window of rows+1 active candidates; each pass eliminates at least one
    let mut window: Vec<usize> = active[..rows + 1].to_vec();

    while active.len() > rows {
        // columns = augmented features of the window members; zero-padded to
        // square so the thin SVD still exposes a null-space vector
        let a = DMatrix::from_fn(window.len(), window.len(), |r, c| {
            let idx = window[c];
            if r < m {
                features[(idx, r)]
            } else if r == m {
                1.0
            } else {
                0.0
            }
        });
        let svd = a.svd(false, true);
        let v_t = svd.v_t.expect("svd vt");
        let mut c: Vec<f64> = (0..window.len()).map(|j| v_t[(v_t.nrows() - 1, j)]).collect();
        if !c.iter().any(|&v| v > 1e-14) {
            for v in &mut c {
                *v = -*v;
            }
        }

        // smallest weight-to-direction ratio among positive components
        let mut t = f64::INFINITY;
        for (j, &cj) in c.iter().enumerate() {
            if cj > 1e-14 {
                t = t.min(w[window[j]] / cj);
            }
        }
        if !t.is_finite() {
            // numerically null direction; drop the smallest-weight member
            let (jmin, _) = window
                .iter()
                .enumerate()
                .min_by(|a, b| w[*a.1].partial_cmp(&w[*b.1]).unwrap())
                .unwrap();
            let idx = window.remove(jmin);
            w[idx] = 0.0;
            active.retain(|&i| i != idx);
        } else {
            for (j, &cj) in c.iter().enumerate() {
                w[window[j]] = (w[window[j]] - t * cj).max(0.0);
            }
            // remove zeroed members (at least the ratio minimiser)
            let mut removed: Vec<usize> = Vec::new();
            window.retain(|&idx| {
                if w[idx] <= 1e-300 {
                    removed.push(idx);
                    false
                } else {
                    true
                }
            });
            if removed.is_empty() {
                // guard against fp ties: force-drop the minimiser
                let (jmin, _) = window
                    .iter()
                    .enumerate()
                    .min_by(|a, b| w[*a.1].partial_cmp(&w[*b.1]).unwrap())
                    .unwrap();
                let idx = window.remove(jmin);
                w[idx] = 0.0;
                removed.push(idx);
            }
            active.retain(|i| !removed.contains(i));
        }

        // refill the window from remaining active candidates
        for &idx in active.iter() {
            if window.len() >= rows + 1 {
                break;
            }
            if !window.contains(&idx) {
                window.push(idx);
            }
        }
        if window.len() <= rows {
            break;
        }
    }

    QuadratureNodes {
        points: active.iter().map(|&i| candidates[i].clone()).collect(),
        weights: active.iter().map(|&i| w[i]).collect(),
    }
}

/// Nyström feature map from the g-space predictive covariance at a random
/// landmark subset of the candidates. Returns one row per candidate with
/// at most `m_features` columns; rank-deficient spectra yield fewer.
pub fn nystrom_features(
    surrogate: &WarpedSurrogate,
    candidates: &[DVector<f64>],
    m_features: usize,
    seed: u64,
) -> DMatrix<f64> {
    let n = candidates.len();
    let n_land = (2 * m_features).min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates for the landmark subset
    for i in 0..n_land {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let landmarks: Vec<DVector<f64>> = idx[..n_land].iter().map(|&i| candidates[i].clone()).collect();

    let gram = surrogate.g_cross_cov(&landmarks, &landmarks);
    let sym = (&gram + gram.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut keep: Vec<usize> = (0..n_land)
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * max_ev.max(1e-300))
        .collect();
    keep.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal)
    });
    keep.truncate(m_features);

    let cross = surrogate.g_cross_cov(candidates, &landmarks);
    let mut phi = DMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        let scale = 1.0 / eig.eigenvalues[k].sqrt();
        for r in 0..n {
            phi[(r, col)] = scale * cross.row(r).transpose().dot(&u.clone_owned());
        }
    }
    phi
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}
