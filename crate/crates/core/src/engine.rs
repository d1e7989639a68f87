//! Batch Bayesian quadrature engine: warped-surrogate fitting, candidate
//! recombination, evidence estimates and run bookkeeping.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::GaussianPrior;
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparams, GpState};
use crate::opt::nelder_mead;
use crate::recombination::{
    build_proposal, log_sum_exp, ProposalMixture, nystrom_features, recombine, resample_equal_weight, supersample,
};
use crate::warp::{forward_layers, WarpConstants, WarpLayers, WarpedSurrogate};

/// Run configuration. The plateau rule stops the loop when the change in
/// the standardized log evidence variance stays below `conv_tol` for
/// `conv_window` consecutive iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasqConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    pub conv_tol: f64,
    pub conv_window: usize,
    pub n_super: usize,
    pub n_heur: usize,
    pub hyper_restarts: usize,
    pub seed: u64,
    pub layers: WarpLayers,
}

impl Default for BasqConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            max_iters: 25,
            conv_tol: 0.5,
            conv_window: 3,
            n_super: 2048,
            n_heur: 64,
            hyper_restarts: 4,
            seed: 0,
            layers: WarpLayers::default(),
        }
    }
}

/// Evidence estimate in log domain. `lev_standardized` is the variance
/// term with the `2*beta` shift removed, used for the plateau rule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub lem: f64,
    pub lev: f64,
    pub lev_standardized: f64,
    pub n_evals: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub n_evals: usize,
    pub wall_time_s: f64,
    pub lem: f64,
    pub lev: f64,
    pub lev_standardized: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

/// Full output of a quadrature run, including the fitted surrogate and
/// the final node set so downstream consumers can reuse them.
pub struct BasqResult {
    pub estimate: EvidenceEstimate,
    pub history: RunHistory,
    pub surrogate: WarpedSurrogate,
    pub nodes: Vec<DVector<f64>>,
    pub node_weights: Vec<f64>,
    pub inputs: Vec<DVector<f64>>,
    pub log_liks: Vec<f64>,
}

fn eval_batch<F>(log_lik: &F, points: &[DVector<f64>]) -> Vec<f64>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    points.par_iter().map(|p| log_lik(p)).collect()
}

/// Hyperparameters are fit on at most this many points; conditioning
/// still uses the full set. Keeps the marginal-likelihood optimisation
/// from dominating the run as observations accumulate.
const HYPERFIT_MAX: usize = 256;

fn fit_surrogate(
    inputs: &[DVector<f64>],
    log_liks: &[f64],
    layers: WarpLayers,
    restarts: usize,
    seed: u64,
) -> Result<(WarpedSurrogate, WarpConstants)> {
    let consts = WarpConstants::from_log_liks(log_liks);
    let hs = forward_layers(log_liks, &consts, layers)?;
    if hs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    let targets = DVector::from_vec(hs.clone());

    let n = inputs.len();
    let kernel = if n > HYPERFIT_MAX {
        // fit on the highest-valued observations: the evidence mass lives
        // in the peak region, and the span-relative lengthscale box then
        // scales to the peak's extent rather than the whole prior
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| hs[b].partial_cmp(&hs[a]).unwrap());
        idx.truncate(HYPERFIT_MAX);
        let sub_x: Vec<DVector<f64>> = idx.iter().map(|&i| inputs[i].clone()).collect();
        let sub_y = DVector::from_fn(idx.len(), |k, _| hs[idx[k]]);
        fit_hyperparams(&sub_x, &sub_y, restarts, seed)
    } else {
        fit_hyperparams(inputs, &targets, restarts, seed)
    };
    let base = GpState::fit(kernel, inputs.to_vec(), targets)?;
    Ok((WarpedSurrogate::with_layers(base, consts, layers), consts))
}

/// Evidence at a fixed node set: prior-weighted f-space moments pushed
/// back through the beta shift. A non-positive mean sum maps to -inf.
fn evidence_at_nodes(
    surrogate: &WarpedSurrogate,
    nodes: &[DVector<f64>],
    weights: &[f64],
) -> (f64, f64, f64) {
    let (mu_f, sigma_f) = surrogate.predictive_moments(nodes);
    let beta = surrogate.beta_shift();
    let mean_sum: f64 = weights.iter().zip(mu_f.iter()).map(|(&w, &m)| w * m).sum();
    let lem = if mean_sum > 0.0 { mean_sum.ln() + beta } else { f64::NEG_INFINITY };
    let mut var_sum = 0.0;
    for k in 0..nodes.len() {
        for l in 0..nodes.len() {
            var_sum += weights[k] * weights[l] * sigma_f[(k, l)];
        }
    }
    let lev_std = if var_sum > 0.0 { var_sum.ln() } else { f64::NEG_INFINITY };
    (lem, lev_std + 2.0 * beta, lev_std)
}

/// Run batch Bayesian quadrature against an arbitrary total
/// log-likelihood function. Evaluations within a batch run in parallel;
/// the returned ordering is stable so runs are seed-deterministic.
pub fn run<F>(log_lik: F, prior: &GaussianPrior, config: &BasqConfig) -> Result<BasqResult>
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let started = Instant::now();
    let mut inputs = prior.sample(config.batch_size, config.seed);
    let mut log_liks = eval_batch(&log_lik, &inputs);
    let mut records = Vec::new();
    let mut converged = false;
    let m_features = config.batch_size.saturating_sub(1).max(1);

    let (mut surrogate, _) = fit_surrogate(
        &inputs,
        &log_liks,
        config.layers,
        config.hyper_restarts,
        config.seed,
    )?;

    let mut nodes: Vec<DVector<f64>> = Vec::new();
    let mut node_weights: Vec<f64> = Vec::new();

    for iter in 0..config.max_iters {
        let it_seed = config.seed.wrapping_add(1 + iter as u64);

        let proposal = build_proposal(&surrogate, prior, config.n_heur, it_seed);
        let ss = supersample(&proposal, &surrogate, prior, config.n_super, it_seed ^ 0x5353)?;
        // candidates follow the uncertainty target; their weights correct
        // back to the prior so the quadrature still represents pi
        let phi = nystrom_features(&surrogate, &ss.points, m_features, it_seed ^ 0x4e59);
        let quad = recombine(&ss.points, &phi, &ss.w_prior);

        let batch = quad.points.clone();
        let new_liks = eval_batch(&log_lik, &batch);
        inputs.extend(batch.iter().cloned());
        log_liks.extend(new_liks);

        // polish: evaluate where the (unclamped) surrogate mean peaks,
        // found by simplex ascents in lengthscale-whitened coordinates
        // from the top observed points. Pins the apex and corrects
        // interpolation overshoot with a handful of queries.
        let mut order: Vec<usize> = (0..log_liks.len()).collect();
        order.sort_by(|&a, &b| log_liks[b].partial_cmp(&log_liks[a]).unwrap());
        let ls = surrogate.base.kernel.lengthscales.clone();
        for &start in order.iter().take(3) {
            let x0 = inputs[start].clone();
            let neg_mu = |u: &DVector<f64>| {
                let x = DVector::from_fn(x0.len(), |k, _| x0[k] + ls[k] * u[k]);
                -surrogate.base.predict_mean(std::slice::from_ref(&x))[0]
            };
            let (up, _) = nelder_mead(&neg_mu, &DVector::zeros(x0.len()), 0.25, 200);
            let xp = DVector::from_fn(x0.len(), |k, _| x0[k] + ls[k] * up[k]);
            log_liks.push(log_lik(&xp));
            inputs.push(xp);
        }

        let (refit, _) = fit_surrogate(
            &inputs,
            &log_liks,
            config.layers,
            config.hyper_restarts,
            config.seed,
        )?;
        surrogate = refit;
        nodes = quad.points;
        node_weights = quad.weights;

        let (lem, lev, lev_std) = evidence_at_nodes(&surrogate, &nodes, &node_weights);
        records.push(IterationRecord {
            iter,
            n_evals: inputs.len(),
            wall_time_s: started.elapsed().as_secs_f64(),
            lem,
            lev,
            lev_standardized: lev_std,
        });

        if plateau_reached(&records, config.conv_tol, config.conv_window) {
            converged = true;
            break;
        }
    }

    // a run that never entered the loop still needs an estimate
    if nodes.is_empty() {
        let quad = fallback_nodes(&surrogate, prior, config)?;
        nodes = quad.0;
        node_weights = quad.1;
    }

    let (node_lem, lev, lev_std) = evidence_at_nodes(&surrogate, &nodes, &node_weights);
    // the final mean estimate uses a dense importance-sampled pass over
    // the surrogate mean; the node rule carries most of the variance of
    // the per-iteration estimates, the variance term still comes from it
    let lem = final_mean_estimate(&surrogate, prior, config).unwrap_or(node_lem);
    let estimate = EvidenceEstimate {
        lem,
        lev,
        lev_standardized: lev_std,
        n_evals: inputs.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    Ok(BasqResult {
        estimate,
        history: RunHistory { records, converged },
        surrogate,
        nodes,
        node_weights,
        inputs,
        log_liks,
    })
}

/// Unnormalised importance estimate of the prior mean of the surrogate
/// likelihood: `(1/N) sum mu_f(x) pi(x) / q(x)` with `x ~ q`, the final
/// proposal mixture. Returns the log estimate plus the beta shift, or
/// `None` when the mean underflows to zero.
fn final_mean_estimate(
    surrogate: &WarpedSurrogate,
    prior: &GaussianPrior,
    config: &BasqConfig,
) -> Option<f64> {
    let proposal = final_proposal(surrogate, prior);
    let n = 16 * config.n_super;
    let pts = proposal.sample(n, config.seed ^ 0xf1a5);
    let acc: f64 = pts
        .par_chunks(4096)
        .map(|chunk| {
            let mu_f = surrogate.f_mean_diag(chunk);
            chunk
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let w = (prior.log_density(p) - proposal.log_density(p)).exp();
                    w * mu_f[i].max(0.0)
                })
                .sum::<f64>()
        })
        .sum();
    let mean = acc / n as f64;
    if mean > 0.0 && mean.is_finite() {
        Some(mean.ln() + surrogate.beta_shift())
    } else {
        None
    }
}

/// Proposal for the final evidence pass: components sit on the highest
/// observed points (which include the polished apex) at the f-weighted
/// posterior scale, with wide twins and a prior component for coverage.
fn final_proposal(surrogate: &WarpedSurrogate, prior: &GaussianPrior) -> ProposalMixture {
    let obs = &surrogate.base.inputs;
    let targets = &surrogate.base.targets;
    let alpha = surrogate.consts.alpha;
    let d = obs[0].len();
    let f_obs: Vec<f64> = targets
        .iter()
        .map(|&h| {
            let g = h.exp_m1().max(0.0);
            alpha + 0.5 * g * g
        })
        .collect();
    let f_sum: f64 = f_obs.iter().sum();
    if f_sum <= 0.0 {
        return ProposalMixture {
            means: Vec::new(),
            var_diags: Vec::new(),
            weights: Vec::new(),
            prior: prior.clone(),
            prior_weight: 1.0,
        };
    }
    let narrow = DVector::from_fn(d, |k, _| {
        let mean: f64 = obs.iter().zip(&f_obs).map(|(x, &w)| w * x[k]).sum::<f64>() / f_sum;
        let var: f64 = obs
            .iter()
            .zip(&f_obs)
            .map(|(x, &w)| w * (x[k] - mean) * (x[k] - mean))
            .sum::<f64>()
            / f_sum;
        var.max(1e-12)
    });
    let wide = &narrow * 9.0;

    let mut idx: Vec<usize> = (0..obs.len()).collect();
    idx.sort_by(|&a, &b| f_obs[b].partial_cmp(&f_obs[a]).unwrap());
    idx.truncate(64);
    let top_sum: f64 = idx.iter().map(|&i| f_obs[i]).sum();
    let prior_weight = 0.25;
    let mut means = Vec::with_capacity(2 * idx.len());
    let mut var_diags = Vec::with_capacity(2 * idx.len());
    let mut weights = Vec::with_capacity(2 * idx.len());
    for &i in &idx {
        for vd in [&narrow, &wide] {
            means.push(obs[i].clone());
            var_diags.push(vd.clone());
            weights.push(0.5 * (1.0 - prior_weight) * f_obs[i] / top_sum);
        }
    }
    ProposalMixture { means, var_diags, weights, prior: prior.clone(), prior_weight }
}

fn plateau_reached(records: &[IterationRecord], tol: f64, window: usize) -> bool {
    if records.len() < window + 1 {
        return false;
    }
    let tail = &records[records.len() - (window + 1)..];
    tail.windows(2).all(|pair| {
        let a = pair[0].lev_standardized;
        let b = pair[1].lev_standardized;
        a.is_finite() && b.is_finite() && (b - a).abs() < tol
    })
}

fn fallback_nodes(
    surrogate: &WarpedSurrogate,
    prior: &GaussianPrior,
    config: &BasqConfig,
) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    let pts = prior.sample(config.n_super.min(512), config.seed ^ 0xfa11);
    let uniform = vec![1.0 / pts.len() as f64; pts.len()];
    let phi = nystrom_features(surrogate, &pts, config.batch_size.saturating_sub(1).max(1), config.seed);
    let quad = recombine(&pts, &phi, &uniform);
    Ok((quad.points, quad.weights))
}

/// Proposal used when drawing approximate posterior samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorProposal {
    /// Importance-sample directly from the prior.
    Prior,
    /// Importance-sample from the surrogate-informed mixture built from
    /// midpoints of the observed inputs (better overlap at high SNR).
    SurrogateMixture,
}

/// Self-normalised importance samples from the surrogate posterior
/// `mu_e * pi / E[mu_e]`. Errors with [`Error::DegenerateWeights`] when
/// the effective sample size drops below 10.
pub fn posterior_samples(
    result: &BasqResult,
    prior: &GaussianPrior,
    proposal: PosteriorProposal,
    n_out: usize,
    n_is: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let (points, log_q): (Vec<DVector<f64>>, Vec<f64>) = match proposal {
        PosteriorProposal::Prior => {
            let pts = prior.sample(n_is, seed);
            let lq: Vec<f64> = pts.iter().map(|p| prior.log_density(p)).collect();
            (pts, lq)
        }
        PosteriorProposal::SurrogateMixture => {
            let mix = build_proposal(&result.surrogate, prior, 64, seed ^ 0x706f);
            let pts = mix.sample(n_is, seed);
            let lq: Vec<f64> = pts.iter().map(|p| mix.log_density(p)).collect();
            (pts, lq)
        }
    };

    let log_mu_e = result.surrogate.log_mu_e(&points);
    let log_w: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| log_mu_e[i] + prior.log_density(p) - log_q[i])
        .collect();
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights { ess: 0.0 });
    }
    let w: Vec<f64> = log_w.iter().map(|&lw| (lw - lse).exp()).collect();
    let ess = 1.0 / w.iter().map(|&v| v * v).sum::<f64>();
    if ess < 10.0 {
        return Err(Error::DegenerateWeights { ess });
    }
    Ok(resample_equal_weight(&points, &w, n_out, seed ^ 0x7265))
}

/// Write the learning curve as CSV (`iter,n_evals,wall_time_s,lem,lev`).
pub fn write_learning_curve(history: &RunHistory, path: &std::path::Path) -> Result<()> {
    let mut out = String::from("iter,n_evals,wall_time_s,lem,lev\n");
    for r in &history.records {
        out.push_str(&format!(
            "{},{},{:.6},{:.8e},{:.8e}\n",
            r.iter, r.n_evals, r.wall_time_s, r.lem, r.lev
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
