//! Acceptance suite: every release criterion as one test with a single
//! printed PASS line. Run with `--nocapture` to see the lines.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ecmbq::bayes::{log_likelihood, GaussianPrior, ResidualMode, Theta};
use ecmbq::criteria::{correlation_matrix, run_selection, SelectionSettings, SensitivityRecord};
use ecmbq::dataset::{generate, preset, Dataset, NoiseSpec};
use ecmbq::ecm::{impedance, sech, to_physical, EcmParams, FrequencyStandardization};
use ecmbq::engine::{run, BasqConfig};
use ecmbq::error::Error;
use ecmbq::ess::run_ess;
use ecmbq::identifiability::{js_divergence, sech_identities_check, snr_analytic};
use ecmbq::montecarlo::{laplace_fit, snis_evidence};
use ecmbq::recombination::recombine;
use ecmbq::warp::{forward, WarpConstants, WarpLayers, WarpedSurrogate};
use ecmbq::gp::{GpState, Kernel};

fn ecm_lik<'a>(
    data: &'a Dataset,
    order: usize,
) -> impl Fn(&DVector<f64>) -> f64 + Sync + 'a {
    move |v: &DVector<f64>| match Theta::from_slice(order, v.as_slice()) {
        Ok(theta) => log_likelihood(&theta, data, ResidualMode::Standard),
        Err(_) => ecmbq::bayes::LOG_LIK_FLOOR,
    }
}

fn small_settings(seed: u64) -> SelectionSettings {
    SelectionSettings {
        config: BasqConfig {
            batch_size: 40,
            max_iters: 3,
            n_super: 512,
            n_heur: 32,
            hyper_restarts: 2,
            seed,
            ..Default::default()
        },
        n_elpd: 600,
        ..Default::default()
    }
}

#[test]
fn criterion_01_oracle_evidence_agreement() {
    let data = preset("easy").unwrap().generate(101).unwrap();
    let order = 1;
    let lik = ecm_lik(&data, order);
    // tight prior covering the 1-RC misfit posterior (its noise scale
    // sits near ln sigma^2 = -5 on easy-preset data)
    let prior = GaussianPrior::new(
        DVector::from_vec(vec![0.0, 0.0, 0.5, -5.0]),
        DMatrix::identity(4, 4) * 0.25,
    )
    .unwrap();

    let config = BasqConfig {
        batch_size: 80,
        max_iters: 14,
        n_super: 1024,
        seed: 101,
        ..Default::default()
    };
    let result = run(&lik, &prior, &config).unwrap();

    // SNIS oracle from a Laplace-fit proposal for overlap
    let log_post = |v: &DVector<f64>| lik(v) + prior.log_density(v);
    let fit = laplace_fit(&log_post, &DVector::zeros(4), 0.5, 6000).unwrap();
    let oracle = snis_evidence(&lik, &prior, &fit, 1_000_000, 7).unwrap();

    let gap = (result.estimate.lem - oracle.log_evidence).abs();
    assert!(
        gap < 1.0,
        "criterion 1: FAIL (lem {} vs oracle {}, gap {gap:.3})",
        result.estimate.lem,
        oracle.log_evidence
    );
    println!(
        "criterion 1 (oracle evidence agreement): PASS (gap {gap:.3} nat, {} evals)",
        result.estimate.n_evals
    );
}

#[test]
fn criterion_02_conjugate_anchor() {
    let d = 2;
    let center = [0.4, -0.3];
    let lik_var = 0.5;
    let lik = move |x: &DVector<f64>| {
        let q: f64 = (0..d).map(|i| (x[i] - center[i]) * (x[i] - center[i])).sum();
        -0.5 * (q / lik_var + d as f64 * (2.0 * std::f64::consts::PI * lik_var).ln())
    };
    let prior = GaussianPrior::isotropic(d, 1.0);
    let s = lik_var + 1.0;
    let q: f64 = center.iter().map(|c| c * c).sum();
    let truth = -0.5 * (q / s + d as f64 * (2.0 * std::f64::consts::PI * s).ln());

    let mut worst = 0.0f64;
    for seed in 1..=5u64 {
        let config = BasqConfig {
            batch_size: 60,
            max_iters: 8,
            n_super: 2048,
            conv_tol: 0.05,
            seed,
            ..Default::default()
        };
        let res = run(&lik, &prior, &config).unwrap();
        worst = worst.max((res.estimate.lem - truth).abs());
    }
    assert!(worst < 0.1, "criterion 2: FAIL (worst gap {worst:.4})");
    println!("criterion 2 (conjugate anchor): PASS (worst gap {worst:.4} nat over 5 seeds)");
}

#[test]
fn criterion_03_easy_case_selection() {
    let p = preset("easy").unwrap();
    let mut wins = [0usize; 4]; // lem, rmse, bic, elpd
    let n_runs = 10;
    for k in 0..n_runs {
        let data = p.generate(300 + k).unwrap();
        let (report, failures) = run_selection(&data, &small_settings(300 + k));
        assert!(failures.is_empty(), "criterion 3: model failures {failures:?}");
        let sel = report.unwrap().selected_by;
        if sel.lem == 2 {
            wins[0] += 1;
        }
        if sel.rmse == 2 {
            wins[1] += 1;
        }
        if sel.bic == 2 {
            wins[2] += 1;
        }
        if sel.elpd == 2 {
            wins[3] += 1;
        }
    }
    assert!(
        wins.iter().all(|&w| w >= 9),
        "criterion 3: FAIL (wins lem/rmse/bic/elpd = {wins:?} of {n_runs})"
    );
    println!("criterion 3 (easy-case selection): PASS (wins lem/rmse/bic/elpd = {wins:?}/10)");
}

#[test]
fn criterion_04_hard_case_divergence() {
    let hard = preset("hard").unwrap();
    let easy = preset("easy").unwrap();
    let mut lem_wins = 0usize;
    let mut bic_wins = 0usize;
    let mut hard_lev1 = Vec::new();
    let mut easy_lev1 = Vec::new();
    for k in 0..10u64 {
        let data = hard.generate(400 + k).unwrap();
        let (report, failures) = run_selection(&data, &small_settings(400 + k));
        assert!(failures.is_empty(), "criterion 4: model failures {failures:?}");
        let report = report.unwrap();
        if report.selected_by.lem == 3 {
            lem_wins += 1;
        }
        if report.selected_by.bic == 3 {
            bic_wins += 1;
        }
        let m1 = report.models.iter().find(|m| m.model_order == 1).unwrap();
        hard_lev1.push(m1.lev_standardized);

        let edata = easy.generate(400 + k).unwrap();
        let (ereport, _) = run_selection(
            &edata,
            &SelectionSettings { orders: vec![1], ..small_settings(400 + k) },
        );
        easy_lev1.push(
            ereport.unwrap().models.iter().find(|m| m.model_order == 1).unwrap().lev_standardized,
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (h, e) = (mean(&hard_lev1), mean(&easy_lev1));
    assert!(
        lem_wins > bic_wins,
        "criterion 4: FAIL (lem picked 3-RC {lem_wins}/10, bic {bic_wins}/10)"
    );
    assert!(h > e, "criterion 4: FAIL (hard 1-RC lev {h:.2} <= easy {e:.2})");
    println!(
        "criterion 4 (hard-case divergence): PASS (lem {lem_wins}/10 vs bic {bic_wins}/10; lev1 hard {h:.2} > easy {e:.2})"
    );
}

#[test]
fn criterion_05_identity_suite() {
    let report = sech_identities_check();
    for c in &report.checks {
        if c.name.starts_with("B2") {
            continue;
        }
        assert!(
            c.deviation < 1e-8,
            "criterion 5: FAIL ({}: deviation {})",
            c.name,
            c.deviation
        );
    }
    assert_eq!(report.b2_resolution, "pi*b", "criterion 5: FAIL (B2 resolution)");
    println!(
        "criterion 5 (identity suite): PASS (B2 resolved as {}; printed pi/b flagged)",
        report.b2_resolution
    );
}

#[test]
fn criterion_06_snr_vs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        // r' >= -0.2 keeps each r_i = exp(-exp(r')) under 0.45, so the
        // pair fractions cannot exceed the unit budget
        let params = EcmParams::new(
            rng.gen_range(-1.0..1.0),
            vec![rng.gen_range(-0.2..1.0), rng.gen_range(-0.2..1.0)],
            vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        );
        // 9-decade window keeps the sech tails negligible against the
        // whole-line closed form
        let freqs = ecmbq::log_equispaced_grid(60, 9.0);
        let std = FrequencyStandardization::from_freqs_hz(&freqs).unwrap();
        let noise = NoiseSpec { log_sigma2: rng.gen_range(-8.0..-2.0) };
        let snr = snr_analytic(&params, &std, &noise).unwrap();

        // dense deterministic quadrature of Var[Im Z] over uniform ln w
        let phys = to_physical(&params, &std).unwrap();
        let ln_w = std.ln_omega();
        let a = ln_w.iter().cloned().fold(f64::INFINITY, f64::min);
        let b = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let im = |lw: f64| {
            let mut t = 0.0;
            for i in 0..2 {
                t += phys.lambda[i] / std::f64::consts::PI * sech(lw + phys.tau_s[i].ln());
            }
            phys.r_im * t
        };
        let n = 100_000;
        let h = (b - a) / n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let v = im(a + k as f64 * h);
            m1 += w * v;
            m2 += w * v * v;
        }
        m1 *= h / (b - a);
        m2 *= h / (b - a);
        let oracle = ((m2 - m1 * m1) / noise.sigma2()).ln();
        worst = worst.max((snr - oracle).abs() / oracle.abs().max(1.0));
    }
    assert!(worst <= 1e-3, "criterion 6: FAIL (worst relative error {worst:.2e})");
    println!("criterion 6 (SNR vs oracle): PASS (worst relative error {worst:.2e})");
}

#[test]
fn criterion_07_js_properties() {
    let freqs = ecmbq::log_equispaced_grid(40, 7.0);
    let std = FrequencyStandardization::from_freqs_hz(&freqs).unwrap();

    let same = EcmParams::new(0.0, vec![0.2, 0.2], vec![0.35, 0.35]);
    let js0 = js_divergence(&same, &std, (0, 1), 100_000, 1).unwrap();
    assert!(js0 <= 1e-3, "criterion 7: FAIL (identical-component JS {js0:.2e})");

    let mixed = EcmParams::new(0.0, vec![0.25, 0.1], vec![-0.6, 0.7]);
    let ab = js_divergence(&mixed, &std, (0, 1), 400_000, 2).unwrap();
    let ba = js_divergence(&mixed, &std, (1, 0), 400_000, 2).unwrap();
    assert!((ab - ba).abs() <= 1e-3, "criterion 7: FAIL (asymmetry {})", (ab - ba).abs());

    // the sech overlap decays with lambda * delta tau (lambda = 1/2 for
    // equal pairs), so the disjoint-support limit needs delta tau ~ 40:
    // at 21 the analytic deficit is still ~1e-2
    let sep = 21.0 / std.sigma_omega;
    let far = EcmParams::new(0.0, vec![0.1856, 0.1856], vec![-sep, sep]);
    let dtau = std.sigma_omega * 2.0 * sep;
    assert!(dtau >= 20.0);
    let js_far = js_divergence(&far, &std, (0, 1), 400_000, 3).unwrap();
    assert!(
        (js_far - std::f64::consts::LN_2).abs() <= 1e-2,
        "criterion 7: FAIL (separated JS {js_far})"
    );
    println!(
        "criterion 7 (JS properties): PASS (identical {js0:.1e}, asym {:.1e}, far-sep gap {:.1e})",
        (ab - ba).abs(),
        (js_far - std::f64::consts::LN_2).abs()
    );
}

#[test]
fn criterion_08_sensitivity_signs() {
    sensitivity_signs(256, 8);
}

fn sensitivity_signs(n_datasets: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for k in 0..n_datasets {
        let m = 25 + rng.gen_range(0..376usize);
        let params = EcmParams::new(
            rng.gen_range(-2.0..2.0),
            vec![rng.gen_range(-2.0..2.0), 0.1856],
            vec![rng.gen_range(-2.0..2.0), 0.978],
        );
        let noise = NoiseSpec { log_sigma2: rng.gen_range(-10.0..-1.0) };
        let data = match generate(&params, m, 7.0, noise, seed + k as u64) {
            Ok(d) => d,
            Err(_) => continue,
        };
        let snr = snr_analytic(&params, &data.std, &noise).unwrap();
        let js = js_divergence(&params, &data.std, (0, 1), 50_000, seed + k as u64).unwrap();

        let order = 2;
        let lik = ecm_lik(&data, order);
        let prior = GaussianPrior::isotropic(6, 2.0);
        let config = BasqConfig {
            batch_size: 30,
            max_iters: 2,
            n_super: 384,
            n_heur: 24,
            hyper_restarts: 1,
            seed: seed + k as u64,
            ..Default::default()
        };
        let res = match run(&lik, &prior, &config) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if !res.estimate.lem.is_finite() || !res.estimate.lev_standardized.is_finite() {
            continue;
        }
        records.push(SensitivityRecord {
            m: m as f64,
            js,
            snr,
            lem: res.estimate.lem,
            lev: res.estimate.lev_standardized,
            bic: 0.0,
        });
    }
    assert!(records.len() >= n_datasets * 9 / 10, "too many failures: {}", records.len());
    let (corr, _) = correlation_matrix(&records);
    // columns: m, JS, SNR, LEM, LEV
    let lem_snr = corr[(3, 2)];
    let lev_snr = corr[(4, 2)];
    let lem_m = corr[(3, 0)];
    assert!(
        lem_snr > 0.0 && lev_snr < 0.0 && lem_m > 0.0,
        "criterion 8: FAIL (corr lem-snr {lem_snr:.3}, lev-snr {lev_snr:.3}, lem-m {lem_m:.3})"
    );
    println!(
        "criterion 8 (sensitivity signs, n={}): PASS (lem-snr {lem_snr:.3} > 0, lev-snr {lev_snr:.3} < 0, lem-m {lem_m:.3} > 0)",
        records.len()
    );
}

#[test]
fn criterion_09_sample_efficiency() {
    let data = preset("easy").unwrap().generate(909).unwrap();
    let order = 2;
    let lik = ecm_lik(&data, order);
    let prior = GaussianPrior::isotropic(6, 2.0);

    // disable the plateau rule so the full 2,500-evaluation budget runs
    let config = BasqConfig {
        batch_size: 100,
        max_iters: 25,
        conv_tol: 0.0,
        seed: 909,
        ..Default::default()
    };
    let result = run(&lik, &prior, &config).unwrap();
    let budget = result.estimate.n_evals;
    assert!(budget >= 2000, "budget only reached {budget}");

    let log_post = |v: &DVector<f64>| lik(v) + prior.log_density(v);
    let fit = laplace_fit(&log_post, &DVector::zeros(6), 0.3, 8000).unwrap();
    let oracle = snis_evidence(&lik, &prior, &fit, 1_000_000, 11).unwrap();

    let chain = run_ess(&lik, &prior, 3000, &[budget], 909);
    let kept = chain.kept_at_checkpoint(0);
    assert!(kept.len() > 100, "ESS kept only {} samples at budget {budget}", kept.len());
    let elpd_val = ecmbq::criteria::elpd(kept, &data, order, ResidualMode::Standard).unwrap();

    let basq_gap = (result.estimate.lem - oracle.log_evidence).abs();
    let ess_gap = (elpd_val - oracle.log_evidence).abs();
    assert!(
        basq_gap < ess_gap,
        "criterion 9: FAIL (basq gap {basq_gap:.2} vs ess-elpd gap {ess_gap:.2} at {budget} evals)"
    );
    println!(
        "criterion 9 (sample efficiency): PASS (basq |lem-oracle| {basq_gap:.2} < ess-elpd {ess_gap:.2} at {budget} evals; basq wall {:.1} s)",
        result.estimate.wall_time_s
    );
}

#[test]
fn criterion_10_ablation() {
    let data = preset("easy").unwrap().generate(1010).unwrap();
    let order = 2;
    let lik = ecm_lik(&data, order);
    let prior = GaussianPrior::isotropic(6, 2.0);

    let configs = [
        WarpLayers { scaling: true, sqrt: true, log: true },
        WarpLayers { scaling: true, sqrt: true, log: false },
        WarpLayers { scaling: true, sqrt: false, log: true },
        WarpLayers { scaling: true, sqrt: false, log: false },
        WarpLayers { scaling: false, sqrt: true, log: true },
        WarpLayers { scaling: false, sqrt: false, log: false },
    ];
    let mut results = Vec::new();
    for layers in configs {
        let config = BasqConfig {
            batch_size: 50,
            max_iters: 4,
            n_super: 512,
            seed: 1010,
            layers,
            ..Default::default()
        };
        results.push((layers, run(&lik, &prior, &config)));
    }

    // configurations lacking the scaling layer overflow (reported, not a crash)
    for (layers, r) in &results {
        if !layers.scaling {
            assert!(
                matches!(r, Err(Error::Overflow)),
                "criterion 10: FAIL (no-scaling config {} did not report overflow)",
                layers.label()
            );
        }
    }
    let full = results[0].1.as_ref().expect("four-layer run").estimate.lem;
    for (layers, r) in &results[1..] {
        if let Ok(res) = r {
            if res.estimate.lem.is_finite() {
                assert!(
                    full >= res.estimate.lem,
                    "criterion 10: FAIL ({} lem {} > four-layer {})",
                    layers.label(),
                    res.estimate.lem,
                    full
                );
            }
        }
    }
    println!("criterion 10 (ablation): PASS (four-layer lem {full:.2} highest; no-scaling overflowed)");
}

#[test]
fn criterion_11_recombination_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst_feature = 0.0f64;
    let mut worst_mass = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(50..400usize);
        let m = rng.gen_range(1..15usize);
        let d = rng.gen_range(1..5usize);
        let cands: Vec<DVector<f64>> =
            (0..n).map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0))).collect();
        let phi = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0));
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mut target = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                target[j] += w[i] * phi[(i, j)];
            }
        }
        let nodes = recombine(&cands, &phi, &w);
        assert!(nodes.len() <= m + 1);
        assert!(nodes.weights.iter().all(|&wk| wk > 0.0), "non-positive weight");
        worst_mass = worst_mass.max((nodes.total_mass() - total).abs() / total);

        let mut got = vec![0.0; m];
        for (k, p) in nodes.points.iter().enumerate() {
            let row = cands.iter().position(|c| c == p).unwrap();
            for j in 0..m {
                got[j] += nodes.weights[k] * phi[(row, j)];
            }
        }
        for j in 0..m {
            let scale = target[j].abs().max(1.0);
            worst_feature = worst_feature.max((got[j] - target[j]).abs() / scale);
        }
    }
    assert!(worst_feature < 1e-8, "criterion 11: FAIL (feature error {worst_feature:.2e})");
    assert!(worst_mass < 1e-10, "criterion 11: FAIL (mass error {worst_mass:.2e})");
    println!(
        "criterion 11 (recombination exactness): PASS (feature {worst_feature:.1e}, mass {worst_mass:.1e})"
    );
}

#[test]
fn criterion_12_warp_moment_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    let mut worst = 0.0f64;
    for state in 0..20 {
        // random 1-d surrogate state
        let n = rng.gen_range(5..15usize);
        let inputs: Vec<DVector<f64>> =
            (0..n).map(|_| DVector::from_vec(vec![rng.gen_range(-2.0..2.0)])).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..5.0)).collect();
        let consts = WarpConstants::from_log_liks(&ys);
        let hs = forward(&ys, &consts).unwrap();

        // round trip
        let back = ecmbq::warp::backward(&hs, &consts);
        for (y, b) in ys.iter().zip(&back) {
            assert!((y - b).abs() < 1e-9, "round trip {y} -> {b}");
        }

        // fitted hyperparameters keep the interpolant sane, as the engine
        // always does; arbitrary kernels can overshoot catastrophically
        // under the exp layer
        let kernel = ecmbq::gp::fit_hyperparams(&inputs, &DVector::from_vec(hs.clone()), 2, state);
        let base = GpState::fit(kernel, inputs, DVector::from_vec(hs)).unwrap();
        let surrogate = WarpedSurrogate::new(base, consts);

        let queries = vec![
            DVector::from_vec(vec![rng.gen_range(-1.5..1.5)]),
            DVector::from_vec(vec![rng.gen_range(-1.5..1.5)]),
        ];
        let (mu_h, cov_h) = surrogate.moments_h(&queries);
        let (mu_g, cov_g) = surrogate.moments_g(&queries);
        let (mu_f, cov_f) = surrogate.moments_f(&queries);

        // 10^6-sample oracles: the g moments against the exact exp(h)-1
        // pushforward of the Gaussian h, the f moments against the square
        // transform of the moment-matched Gaussian g (which is the
        // distributional assumption the square layer makes)
        let n_mc = 4_000_000;
        let lh11 = cov_h[(0, 0)].sqrt();
        let lh21 = if lh11 > 0.0 { cov_h[(0, 1)] / lh11 } else { 0.0 };
        let lh22 = (cov_h[(1, 1)] - lh21 * lh21).max(0.0).sqrt();
        let lg11 = cov_g[(0, 0)].sqrt();
        let lg21 = if lg11 > 0.0 { cov_g[(0, 1)] / lg11 } else { 0.0 };
        let lg22 = (cov_g[(1, 1)] - lg21 * lg21).max(0.0).sqrt();
        let mut s_g = [0.0f64; 2];
        let mut s_gg = [[0.0f64; 2]; 2];
        let mut s_f = [0.0f64; 2];
        let mut s_ff = [[0.0f64; 2]; 2];
        let mut mc = ChaCha8Rng::seed_from_u64(5000 + state);
        for _ in 0..n_mc {
            let z1: f64 = rand_distr::StandardNormal.sample(&mut mc);
            let z2: f64 = rand_distr::StandardNormal.sample(&mut mc);
            let h = [mu_h[0] + lh11 * z1, mu_h[1] + lh21 * z1 + lh22 * z2];
            let g = [h[0].exp() - 1.0, h[1].exp() - 1.0];
            let gn = [mu_g[0] + lg11 * z1, mu_g[1] + lg21 * z1 + lg22 * z2];
            let f = [
                consts.alpha + 0.5 * gn[0] * gn[0],
                consts.alpha + 0.5 * gn[1] * gn[1],
            ];
            for i in 0..2 {
                s_g[i] += g[i];
                s_f[i] += f[i];
                for j in 0..2 {
                    s_gg[i][j] += g[i] * g[j];
                    s_ff[i][j] += f[i] * f[j];
                }
            }
        }
        let nf = n_mc as f64;
        let mut chk = |tag: &str, e: f64, st: u64, w: &mut f64| {
            if e > 0.01 { println!("state {st} {tag}: err {e:.4}"); }
            *w = w.max(e);
        };
        for i in 0..2 {
            // small means under wide predictive distributions are only
            // measurable to the MC noise floor sd/1000; floor the scale at sd
            let scale_g = mu_g[i].abs().max(cov_g[(i, i)].sqrt()).max(1e-3);
            chk("mu_g", (s_g[i] / nf - mu_g[i]).abs() / scale_g, state, &mut worst);
            let scale_f = mu_f[i].abs().max(cov_f[(i, i)].sqrt()).max(1e-6);
            chk("mu_f", (s_f[i] / nf - mu_f[i]).abs() / scale_f, state, &mut worst);
            for j in 0..2 {
                // off-diagonal entries can be exactly zero; measure the error
                // on the correlation scale sqrt(var_i var_j), where the MC
                // noise floor at 10^6 samples sits near 1e-3
                let emp_g = s_gg[i][j] / nf - (s_g[i] / nf) * (s_g[j] / nf);
                let scale = cov_g[(i, j)].abs().max((cov_g[(i, i)] * cov_g[(j, j)]).sqrt()).max(1e-9);
                chk("cov_g", (emp_g - cov_g[(i, j)]).abs() / scale, state, &mut worst);
                let emp_f = s_ff[i][j] / nf - (s_f[i] / nf) * (s_f[j] / nf);
                let scale = cov_f[(i, j)].abs().max((cov_f[(i, i)] * cov_f[(j, j)]).sqrt()).max(1e-12);
                chk("cov_f", (emp_f - cov_f[(i, j)]).abs() / scale, state, &mut worst);
            }
        }
    }
    assert!(worst < 0.01, "criterion 12: FAIL (worst relative error {worst:.3})");
    println!("criterion 12 (warp moment matching): PASS (worst relative error {worst:.4})");
}

use rand_distr::Distribution;

#[test]
fn impedance_channels_match_direct_circuit_formula() {
    // spot check tying the dataset path to the textbook circuit formula
    let params = EcmParams::new(0.2, vec![0.3, -0.1], vec![-0.5, 0.8]);
    let freqs = ecmbq::log_equispaced_grid(30, 6.0);
    let std = FrequencyStandardization::from_freqs_hz(&freqs).unwrap();
    let (re, im) = impedance(&params, &std).unwrap();
    let phys = to_physical(&params, &std).unwrap();
    let omega: Vec<f64> = freqs.iter().map(|f| 2.0 * std::f64::consts::PI * f).collect();
    let z = ecmbq::ecm::impedance_direct(phys.r0_ohm, &phys.r_ohm, &phys.c_farad, &omega);
    for j in 0..freqs.len() {
        assert!((re[j] - z[j].re).abs() < 1e-9);
        assert!((im[j] + z[j].im).abs() < 1e-9); // positive-imaginary convention
    }
}
