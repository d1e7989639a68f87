//! Competing model-selection criteria (MAP fit, RMSE, BIC, ELPD) plus the
//! cross-dataset correlation and regression analyses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bayes::{log_likelihood, log_posterior_unnorm, GaussianPrior, ResidualMode, Theta};
use crate::dataset::Dataset;
use crate::ecm::impedance;
use crate::error::Result;
use crate::opt::nelder_mead;
use crate::recombination::log_sum_exp;

const LN_2PI: f64 = 1.8378770664093453;

/// Best observed parameter vector by unnormalized log posterior, refined
/// by a bounded Nelder-Mead polish. The polish result is only accepted
/// when it improves the objective, so the estimate never degrades.
pub fn map_estimate(
    inputs: &[DVector<f64>],
    data: &Dataset,
    prior: &GaussianPrior,
    model_order: usize,
    mode: ResidualMode,
) -> Result<Theta> {
    assert!(!inputs.is_empty());
    let objective = |v: &DVector<f64>| match Theta::from_slice(model_order, v.as_slice()) {
        Ok(theta) => log_posterior_unnorm(&theta, data, prior, mode),
        Err(_) => f64::NEG_INFINITY,
    };

    let mut best_idx = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, x) in inputs.iter().enumerate() {
        let v = objective(x);
        if v > best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let x0 = inputs[best_idx].clone();

    let neg = |v: &DVector<f64>| -objective(v);
    let (polished, neg_val) = nelder_mead(&neg, &x0, 0.1, 2000);
    let chosen = if -neg_val > best_val { polished } else { x0 };
    Theta::from_slice(model_order, chosen.as_slice())
}

/// Channel residuals of the model fit at `theta`, real parts first.
fn residuals(theta: &Theta, data: &Dataset) -> Result<Vec<f64>> {
    let (re, im) = impedance(&theta.ecm, &data.std)?;
    let mut res = Vec::with_capacity(2 * data.len());
    for j in 0..data.len() {
        res.push(data.y_re[j] - re[j]);
    }
    for j in 0..data.len() {
        res.push(data.y_im[j] - im[j]);
    }
    Ok(res)
}

/// Root mean squared residual over all 2m channel residuals.
pub fn rmse(theta: &Theta, data: &Dataset, mode: ResidualMode) -> Result<f64> {
    let res = residuals(theta, data)?;
    let mean_sq = res
        .iter()
        .map(|&r| {
            let e = match mode {
                ResidualMode::Standard => r,
                ResidualMode::LiteralSquared => r * r,
            };
            e * e
        })
        .sum::<f64>()
        / res.len() as f64;
    Ok(mean_sq.sqrt())
}

/// BIC = d ln m - 2 ln l(theta_map), with d = 2 + 2N and m the number of
/// frequency points.
pub fn bic(theta_map: &Theta, data: &Dataset, model_order: usize, mode: ResidualMode) -> f64 {
    let d = (2 + 2 * model_order) as f64;
    let m = data.len() as f64;
    d * m.ln() - 2.0 * log_likelihood(theta_map, data, mode)
}

/// Expected log pointwise predictive density over the 2m channel
/// residuals, Monte-Carlo estimated from posterior samples via
/// log-sum-exp. Each sample carries its own noise variance.
pub fn elpd(
    posterior_samples: &[DVector<f64>],
    data: &Dataset,
    model_order: usize,
    mode: ResidualMode,
) -> Result<f64> {
    assert!(!posterior_samples.is_empty());
    let n = posterior_samples.len();
    let mut per_sample: Vec<Vec<f64>> = Vec::with_capacity(n);
    for v in posterior_samples {
        let theta = Theta::from_slice(model_order, v.as_slice())?;
        let sigma2 = theta.log_sigma2.exp();
        let res = match residuals(&theta, data) {
            Ok(r) => r,
            // degenerate draws contribute negligible density
            Err(_) => vec![f64::INFINITY; 2 * data.len()],
        };
        let log_dens: Vec<f64> = res
            .iter()
            .map(|&r| {
                let e = match mode {
                    ResidualMode::Standard => r,
                    ResidualMode::LiteralSquared => r * r,
                };
                if e.is_finite() {
                    -0.5 * (e * e / sigma2 + sigma2.ln() + LN_2PI)
                } else {
                    -1e300
                }
            })
            .collect();
        per_sample.push(log_dens);
    }

    let n_points = 2 * data.len();
    let mut total = 0.0;
    let mut buf = vec![0.0; n];
    for j in 0..n_points {
        for (s, ld) in per_sample.iter().enumerate() {
            buf[s] = ld[j];
        }
        total += log_sum_exp(&buf) - (n as f64).ln();
    }
    Ok(total)
}

/// Per-model summary row of the selection table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCriteria {
    pub model_order: usize,
    pub lem: f64,
    pub lev_standardized: f64,
    pub rmse: f64,
    pub bic: f64,
    pub elpd: f64,
    pub theta_map: Vec<f64>,
}

/// Which criterion picked which model order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedBy {
    pub lem: usize,
    pub rmse: usize,
    pub bic: usize,
    pub elpd: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub models: Vec<ModelCriteria>,
    pub selected_by: SelectedBy,
}

impl CriteriaReport {
    /// LEM and ELPD are maximized; RMSE and BIC are minimized. Ties go
    /// to the earlier model.
    pub fn from_models(models: Vec<ModelCriteria>) -> Self {
        assert!(!models.is_empty());
        let pick = |get: &dyn Fn(&ModelCriteria) -> f64, maximize: bool| {
            let mut best = 0;
            for (i, m) in models.iter().enumerate() {
                let better = if maximize {
                    get(m) > get(&models[best])
                } else {
                    get(m) < get(&models[best])
                };
                if better {
                    best = i;
                }
            }
            models[best].model_order
        };
        let selected_by = SelectedBy {
            lem: pick(&|m| m.lem, true),
            rmse: pick(&|m| m.rmse, false),
            bic: pick(&|m| m.bic, false),
            elpd: pick(&|m| m.elpd, true),
        };
        Self { models, selected_by }
    }

    /// Text table with models as columns and criteria as rows; the
    /// winning entry on each row is marked with `*`.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<10}", "criterion"));
        for m in &self.models {
            out.push_str(&format!("{:>16}", format!("{} RC", m.model_order)));
        }
        out.push('\n');
        let rows: [(&str, Box<dyn Fn(&ModelCriteria) -> f64>, usize); 5] = [
            ("LEM", Box::new(|m: &ModelCriteria| m.lem), self.selected_by.lem),
            ("LEV(std)", Box::new(|m: &ModelCriteria| m.lev_standardized), usize::MAX),
            ("RMSE", Box::new(|m: &ModelCriteria| m.rmse), self.selected_by.rmse),
            ("BIC", Box::new(|m: &ModelCriteria| m.bic), self.selected_by.bic),
            ("ELPD", Box::new(|m: &ModelCriteria| m.elpd), self.selected_by.elpd),
        ];
        for (name, get, winner) in rows {
            out.push_str(&format!("{:<10}", name));
            for m in &self.models {
                let mark = if m.model_order == winner { "*" } else { "" };
                out.push_str(&format!("{:>16}", format!("{:.4}{}", get(m), mark)));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-dataset record of the sensitivity sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub m: f64,
    pub js: f64,
    pub snr: f64,
    pub lem: f64,
    pub lev: f64,
    pub bic: f64,
}

pub const CORRELATION_COLUMNS: [&str; 5] = ["m", "JS", "SNR", "LEM", "LEV"];

/// Pearson correlation matrix over {m, JS, SNR, LEM, LEV}. Zero-variance
/// columns get coefficient 0 against everything and are flagged.
pub fn correlation_matrix(records: &[SensitivityRecord]) -> (DMatrix<f64>, Vec<bool>) {
    assert!(records.len() >= 3, "need at least 3 records");
    let cols: Vec<Vec<f64>> = vec![
        records.iter().map(|r| r.m).collect(),
        records.iter().map(|r| r.js).collect(),
        records.iter().map(|r| r.snr).collect(),
        records.iter().map(|r| r.lem).collect(),
        records.iter().map(|r| r.lev).collect(),
    ];
    let n = records.len() as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let vars: Vec<f64> = cols
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>())
        .collect();
    let zero_var: Vec<bool> = vars.iter().map(|&v| v <= 0.0).collect();

    let k = cols.len();
    let mut corr = DMatrix::identity(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let cov: f64 = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(&a, &b)| (a - means[i]) * (b - means[j]))
                .sum();
            let c = if zero_var[i] || zero_var[j] {
                0.0
            } else {
                cov / (vars[i] * vars[j]).sqrt()
            };
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    (corr, zero_var)
}

/// OLS of LEM on BIC: Z_pred = slope * BIC + intercept; residuals are
/// |LEM - Z_pred| per record.
pub fn bic_regression(records: &[SensitivityRecord]) -> (f64, f64, Vec<f64>) {
    assert!(records.len() >= 3);
    let n = records.len() as f64;
    let mean_x: f64 = records.iter().map(|r| r.bic).sum::<f64>() / n;
    let mean_y: f64 = records.iter().map(|r| r.lem).sum::<f64>() / n;
    let sxx: f64 = records.iter().map(|r| (r.bic - mean_x).powi(2)).sum();
    let sxy: f64 =
        records.iter().map(|r| (r.bic - mean_x) * (r.lem - mean_y)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = mean_y - slope * mean_x;
    let residuals: Vec<f64> = records
        .iter()
        .map(|r| (r.lem - (slope * r.bic + intercept)).abs())
        .collect();
    (slope, intercept, residuals)
}

/// Settings for a full multi-model selection run.
#[derive(Debug, Clone)]
pub struct SelectionSettings {
    pub orders: Vec<usize>,
    pub config: crate::engine::BasqConfig,
    pub prior_scale: f64,
    pub n_elpd: usize,
    pub mode: ResidualMode,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            orders: vec![1, 2, 3, 4],
            config: crate::engine::BasqConfig::default(),
            prior_scale: 2.0,
            n_elpd: 1000,
            mode: ResidualMode::Standard,
        }
    }
}

/// Evidence and criteria for one model order.
pub fn evaluate_model(
    data: &Dataset,
    order: usize,
    settings: &SelectionSettings,
) -> Result<ModelCriteria> {
    let d = 2 + 2 * order;
    let prior = GaussianPrior::isotropic(d, settings.prior_scale);
    let mode = settings.mode;
    let lik = |v: &DVector<f64>| match Theta::from_slice(order, v.as_slice()) {
        Ok(theta) => log_likelihood(&theta, data, mode),
        Err(_) => crate::bayes::LOG_LIK_FLOOR,
    };
    let mut config = settings.config.clone();
    config.seed = settings.config.seed.wrapping_add(order as u64);
    let result = crate::engine::run(&lik, &prior, &config)?;

    let theta_map = map_estimate(&result.inputs, data, &prior, order, mode)?;
    let rmse_val = rmse(&theta_map, data, mode)?;
    let bic_val = bic(&theta_map, data, order, mode);

    // exact-MCMC posterior samples keep the ELPD estimate stable even
    // when the surrogate importance weights degenerate
    let chain = crate::ess::run_ess(&lik, &prior, settings.n_elpd, &[], config.seed ^ 0xe55);
    let elpd_val = elpd(chain.kept(), data, order, mode)?;

    Ok(ModelCriteria {
        model_order: order,
        lem: result.estimate.lem,
        lev_standardized: result.estimate.lev_standardized,
        rmse: rmse_val,
        bic: bic_val,
        elpd: elpd_val,
        theta_map: theta_map.to_vec(),
    })
}

/// Run selection across model orders. Per-model failures are returned
/// alongside the report so callers can surface them without aborting
/// the remaining orders.
pub fn run_selection(
    data: &Dataset,
    settings: &SelectionSettings,
) -> (Option<CriteriaReport>, Vec<(usize, crate::error::Error)>) {
    let results: Vec<(usize, Result<ModelCriteria>)> = settings
        .orders
        .iter()
        .map(|&order| (order, evaluate_model(data, order, settings)))
        .collect();
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (order, r) in results {
        match r {
            Ok(mc) => models.push(mc),
            Err(e) => failures.push((order, e)),
        }
    }
    let report = if models.is_empty() {
        None
    } else {
        Some(CriteriaReport::from_models(models))
    };
    (report, failures)
}
