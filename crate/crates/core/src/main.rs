//! Command-line surface: dataset generation, model selection,
//! identifiability reports, sensitivity sweeps, benchmark overlays and
//! the warp-layer ablation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ecmbq::bayes::{log_likelihood, GaussianPrior, ResidualMode, Theta};
use ecmbq::criteria::{
    bic_regression, correlation_matrix, map_estimate, run_selection, SelectionSettings,
    SensitivityRecord, CORRELATION_COLUMNS,
};
use ecmbq::dataset::{generate, preset, Dataset, NoiseSpec};
use ecmbq::ecm::EcmParams;
use ecmbq::engine::{run, write_learning_curve, BasqConfig};
use ecmbq::error::Error;
use ecmbq::ess::run_ess;
use ecmbq::identifiability::{identifiability_report, sech_identities_check};
use ecmbq::montecarlo::snis_evidence;
use ecmbq::warp::WarpLayers;

#[derive(Parser)]
#[command(name = "ecmbq", about = "Bayesian model selection for RC-pair impedance models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// RNG seed for all stochastic stages.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value_t = 25)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    conv_tol: f64,
}

impl BudgetArgs {
    fn config(&self, seed: u64) -> BasqConfig {
        BasqConfig {
            batch_size: self.batch_size,
            max_iters: self.max_iters,
            conv_tol: self.conv_tol,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic impedance dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scenario preset: "easy" or "hard".
        #[arg(long)]
        preset: Option<String>,
        /// Number of frequency points (overrides the preset default).
        #[arg(long)]
        m: Option<usize>,
        /// Custom parameters as JSON {"r_total":..,"r_prime":[..],"tau_std":[..],"log_sigma2":..}.
        #[arg(long)]
        params: Option<String>,
    },
    /// Compare model orders on a dataset with all selection criteria.
    Select {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated model orders.
        #[arg(long, default_value = "1,2,3,4", value_delimiter = ',')]
        orders: Vec<usize>,
    },
    /// Identifiability diagnostics (SNR, JS, m) from dataset metadata.
    Identify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        n_is: usize,
    },
    /// Latin-hypercube sensitivity sweep with correlation analysis.
    Sensitivity {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 256)]
        n_datasets: usize,
    },
    /// Learning-curve overlay of BASQ against ESS at matched budgets.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Oracle importance-sample count.
        #[arg(long, default_value_t = 1_000_000)]
        n_oracle: usize,
    },
    /// Warp-layer ablation over six configurations.
    Ablation {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
    },
    /// Numeric check of the hyperbolic-secant integral identities.
    Identities,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Schema(_) | Error::InvalidGrid(_) | Error::DimensionMismatch { .. } => 2,
        Error::MissingMetadata | Error::Io(_) | Error::Json(_) => 3,
        _ => 4,
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Generate { common, preset, m, params } => {
            cmd_generate(common, preset, m, params)
        }
        Command::Select { common, budget, dataset, orders } => {
            cmd_select(common, budget, dataset, orders)
        }
        Command::Identify { common, dataset, n_is } => cmd_identify(common, dataset, n_is),
        Command::Sensitivity { common, budget, n_datasets } => {
            cmd_sensitivity(common, budget, n_datasets)
        }
        Command::Benchmark { common, budget, dataset, order, n_oracle } => {
            cmd_benchmark(common, budget, dataset, order, n_oracle)
        }
        Command::Ablation { common, budget, dataset, order } => {
            cmd_ablation(common, budget, dataset, order)
        }
        Command::Identities => {
            let report = sech_identities_check();
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn write_manifest<T: Serialize>(out_dir: &Path, name: &str, config: &T) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    let manifest = serde_json::json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    std::fs::write(
        out_dir.join(format!("{name}_manifest.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, Error> {
    Dataset::load(path)
}

#[derive(serde::Deserialize)]
struct CustomParams {
    r_total: f64,
    r_prime: Vec<f64>,
    tau_std: Vec<f64>,
    log_sigma2: f64,
}

fn cmd_generate(
    common: CommonArgs,
    preset_name: Option<String>,
    m: Option<usize>,
    params_json: Option<String>,
) -> Result<(), Error> {
    let (params, noise, m_final, span) = match (&preset_name, &params_json) {
        (Some(name), None) => {
            let p = preset(name)
                .ok_or_else(|| Error::Schema(format!("unknown preset '{name}'")))?;
            (p.params, p.noise, m.unwrap_or(p.m), p.span_decades)
        }
        (None, Some(json)) => {
            let c: CustomParams = serde_json::from_str(json)
                .map_err(|e| Error::Schema(format!("bad --params: {e}")))?;
            (
                EcmParams::new(c.r_total, c.r_prime, c.tau_std),
                NoiseSpec { log_sigma2: c.log_sigma2 },
                m.unwrap_or(100),
                7.0,
            )
        }
        _ => {
            return Err(Error::Schema(
                "exactly one of --preset or --params is required".into(),
            ))
        }
    };

    let data = generate(&params, m_final, span, noise, common.seed)?;
    std::fs::create_dir_all(&common.out_dir)?;
    data.save(&common.out_dir.join("dataset.json"))?;
    data.save_csv(&common.out_dir.join("dataset.csv"))?;
    write_manifest(
        &common.out_dir,
        "generate",
        &serde_json::json!({
            "preset": preset_name,
            "m": m_final,
            "seed": common.seed,
            "theta": params.to_vec(),
            "log_sigma2": noise.log_sigma2,
        }),
    )?;
    println!("wrote {}", common.out_dir.join("dataset.json").display());
    Ok(())
}

fn cmd_select(
    common: CommonArgs,
    budget: BudgetArgs,
    dataset: PathBuf,
    orders: Vec<usize>,
) -> Result<(), Error> {
    let data = load_dataset(&dataset)?;
    let settings = SelectionSettings {
        orders: orders.clone(),
        config: budget.config(common.seed),
        ..Default::default()
    };
    write_manifest(
        &common.out_dir,
        "select",
        &serde_json::json!({
            "dataset": dataset, "orders": orders, "seed": common.seed,
            "batch_size": budget.batch_size, "max_iters": budget.max_iters,
        }),
    )?;
    let (report, failures) = run_selection(&data, &settings);
    for (order, e) in &failures {
        eprintln!("model order {order} failed: {e}");
    }
    match report {
        Some(report) => {
            std::fs::write(
                common.out_dir.join("selection.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            println!("{}", report.render_table());
            Ok(())
        }
        None => Err(failures
            .into_iter()
            .next()
            .map(|(_, e)| e)
            .unwrap_or_else(|| Error::Schema("no model orders requested".into()))),
    }
}

fn cmd_identify(common: CommonArgs, dataset: PathBuf, n_is: usize) -> Result<(), Error> {
    let data = load_dataset(&dataset)?;
    let (params, noise) = data.true_params()?;
    let report = identifiability_report(&params, &data.std, &noise, n_is, common.seed)?;
    std::fs::create_dir_all(&common.out_dir)?;
    std::fs::write(
        common.out_dir.join("identifiability.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_manifest(
        &common.out_dir,
        "identify",
        &serde_json::json!({ "dataset": dataset, "n_is": n_is, "seed": common.seed }),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Latin-hypercube draw over [0,1]^d: one stratum per sample and
/// dimension, shuffled independently.
fn latin_hypercube(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut col: Vec<f64> =
            (0..n).map(|k| (k as f64 + rng.gen::<f64>()) / n as f64).collect();
        // Fisher-Yates shuffle
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            col.swap(i, j);
        }
        cols.push(col);
    }
    (0..n).map(|k| (0..d).map(|j| cols[j][k]).collect()).collect()
}

fn cmd_sensitivity(
    common: CommonArgs,
    budget: BudgetArgs,
    n_datasets: usize,
) -> Result<(), Error> {
    // sweep ranges: m in {25..400}, r_total in [-2,2], r'_1 in [-2,2],
    // tau_std_1 in [-2,2], ln sigma2 in [-10,-1]
    let grid = latin_hypercube(n_datasets, 5, common.seed);
    let mut records = Vec::new();
    let mut failures = 0usize;
    std::fs::create_dir_all(&common.out_dir)?;

    for (k, u) in grid.iter().enumerate() {
        let m = 25 + (u[0] * 375.0) as usize;
        let r_total = -2.0 + 4.0 * u[1];
        let r1 = -2.0 + 4.0 * u[2];
        let tau1 = -2.0 + 4.0 * u[3];
        let log_sigma2 = -10.0 + 9.0 * u[4];
        let params = EcmParams::new(r_total, vec![r1, 0.1856], vec![tau1, 0.978]);
        let noise = NoiseSpec { log_sigma2 };
        let seed = common.seed.wrapping_add(k as u64);

        let row = (|| -> Result<SensitivityRecord, Error> {
            let data = generate(&params, m, 7.0, noise, seed)?;
            let ident = identifiability_report(&params, &data.std, &noise, 100_000, seed)?;
            let js = *ident.js_pairs.values().next().unwrap_or(&f64::NAN);

            let order = 2usize;
            let prior = GaussianPrior::isotropic(2 + 2 * order, 2.0);
            let lik = |v: &DVector<f64>| match Theta::from_slice(order, v.as_slice()) {
                Ok(theta) => log_likelihood(&theta, &data, ResidualMode::Standard),
                Err(_) => ecmbq::bayes::LOG_LIK_FLOOR,
            };
            let result = run(&lik, &prior, &budget.config(seed))?;
            let theta_map =
                map_estimate(&result.inputs, &data, &prior, order, ResidualMode::Standard)?;
            let bic_val =
                ecmbq::criteria::bic(&theta_map, &data, order, ResidualMode::Standard);
            Ok(SensitivityRecord {
                m: m as f64,
                js,
                snr: ident.snr,
                lem: result.estimate.lem,
                lev: result.estimate.lev_standardized,
                bic: bic_val,
            })
        })();
        match row {
            Ok(r) if r.lem.is_finite() && r.lev.is_finite() => records.push(r),
            Ok(_) => failures += 1,
            Err(e) => {
                eprintln!("dataset {k} failed: {e}");
                failures += 1;
            }
        }
    }

    let mut csv = String::from("m,js,snr,lem,lev,bic\n");
    for r in &records {
        csv.push_str(&format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            r.m, r.js, r.snr, r.lem, r.lev, r.bic
        ));
    }
    std::fs::write(common.out_dir.join("sensitivity.csv"), csv)?;

    if records.len() >= 3 {
        let (corr, flags) = correlation_matrix(&records);
        let (slope, intercept, residuals) = bic_regression(&records);
        let summary = serde_json::json!({
            "n_requested": n_datasets,
            "n_ok": records.len(),
            "n_failed": failures,
            "columns": CORRELATION_COLUMNS,
            "correlation": (0..5).map(|i| (0..5).map(|j| corr[(i,j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "zero_variance_flags": flags,
            "bic_regression": { "slope": slope, "intercept": intercept,
                "mean_residual": residuals.iter().sum::<f64>() / residuals.len() as f64 },
        });
        std::fs::write(
            common.out_dir.join("sensitivity_summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    write_manifest(
        &common.out_dir,
        "sensitivity",
        &serde_json::json!({ "n_datasets": n_datasets, "seed": common.seed,
            "batch_size": budget.batch_size, "max_iters": budget.max_iters,
            "failures": failures }),
    )?;
    Ok(())
}

fn cmd_benchmark(
    common: CommonArgs,
    budget: BudgetArgs,
    dataset: PathBuf,
    order: usize,
    n_oracle: usize,
) -> Result<(), Error> {
    let data = load_dataset(&dataset)?;
    let prior = GaussianPrior::isotropic(2 + 2 * order, 2.0);
    let lik = |v: &DVector<f64>| match Theta::from_slice(order, v.as_slice()) {
        Ok(theta) => log_likelihood(&theta, &data, ResidualMode::Standard),
        Err(_) => ecmbq::bayes::LOG_LIK_FLOOR,
    };

    let oracle = snis_evidence(&lik, &prior, &prior, n_oracle, common.seed ^ 0x0a)?;
    let result = run(&lik, &prior, &budget.config(common.seed))?;

    let checkpoints: Vec<usize> =
        result.history.records.iter().map(|r| r.n_evals).collect();
    let chain = run_ess(&lik, &prior, 4000, &checkpoints, common.seed ^ 0xe5);

    std::fs::create_dir_all(&common.out_dir)?;
    let mut csv = String::from("engine,n_evals,wall_time_s,value,oracle\n");
    for r in &result.history.records {
        csv.push_str(&format!(
            "basq,{},{:.4},{:.8e},{:.8e}\n",
            r.n_evals, r.wall_time_s, r.lem, oracle.log_evidence
        ));
    }
    for (cp, &(budget_evals, n_states)) in chain.checkpoints.iter().enumerate() {
        let kept = chain.kept_at_checkpoint(cp);
        if n_states == 0 || kept.is_empty() {
            continue;
        }
        let elpd_val =
            ecmbq::criteria::elpd(kept, &data, order, ResidualMode::Standard)?;
        csv.push_str(&format!(
            "ess-elpd,{},NA,{:.8e},{:.8e}\n",
            budget_evals, elpd_val, oracle.log_evidence
        ));
    }
    std::fs::write(common.out_dir.join("benchmark.csv"), &csv)?;
    write_learning_curve(&result.history, &common.out_dir.join("basq_curve.csv"))?;
    write_manifest(
        &common.out_dir,
        "benchmark",
        &serde_json::json!({ "dataset": dataset, "order": order, "seed": common.seed,
            "n_oracle": n_oracle, "oracle_lem": oracle.log_evidence }),
    )?;
    println!("oracle lem {:.4}; basq final {:.4}", oracle.log_evidence, result.estimate.lem);
    Ok(())
}

fn cmd_ablation(
    common: CommonArgs,
    budget: BudgetArgs,
    dataset: PathBuf,
    order: usize,
) -> Result<(), Error> {
    let data = load_dataset(&dataset)?;
    let prior = GaussianPrior::isotropic(2 + 2 * order, 2.0);
    let lik = |v: &DVector<f64>| match Theta::from_slice(order, v.as_slice()) {
        Ok(theta) => log_likelihood(&theta, &data, ResidualMode::Standard),
        Err(_) => ecmbq::bayes::LOG_LIK_FLOOR,
    };

    let configs = [
        WarpLayers { scaling: true, sqrt: true, log: true },
        WarpLayers { scaling: true, sqrt: true, log: false },
        WarpLayers { scaling: true, sqrt: false, log: true },
        WarpLayers { scaling: true, sqrt: false, log: false },
        WarpLayers { scaling: false, sqrt: true, log: true },
        WarpLayers { scaling: false, sqrt: false, log: false },
    ];

    let mut rows = Vec::new();
    for layers in configs {
        let mut config = budget.config(common.seed);
        config.layers = layers;
        let outcome = match run(&lik, &prior, &config) {
            Ok(res) => serde_json::json!({
                "layers": layers.label(),
                "lem": res.estimate.lem,
                "lev": res.estimate.lev,
                "outcome": "ok",
            }),
            Err(Error::Overflow) => serde_json::json!({
                "layers": layers.label(), "outcome": "overflow",
            }),
            Err(e) => serde_json::json!({
                "layers": layers.label(), "outcome": format!("failed: {e}"),
            }),
        };
        rows.push(outcome);
    }

    std::fs::create_dir_all(&common.out_dir)?;
    let table = serde_json::json!({ "rows": rows });
    std::fs::write(
        common.out_dir.join("ablation.json"),
        serde_json::to_string_pretty(&table)?,
    )?;
    println!("{:<20}{:>16}{:>16}", "layers", "lem", "outcome");
    for row in table["rows"].as_array().unwrap() {
        let lem = row
            .get("lem")
            .and_then(|v| v.as_f64())
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<20}{:>16}{:>16}",
            row["layers"].as_str().unwrap_or("?"),
            lem,
            row["outcome"].as_str().unwrap_or("?")
        );
    }
    write_manifest(
        &common.out_dir,
        "ablation",
        &serde_json::json!({ "dataset": dataset, "order": order, "seed": common.seed }),
    )?;
    Ok(())
}
