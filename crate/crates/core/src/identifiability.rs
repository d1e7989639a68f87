//! Identifiability diagnostics: closed-form SNR, importance-sampled
//! Jensen-Shannon divergence between the scaled sech peaks (with a
//! noise-marginalised extension), and a numeric check of the hyperbolic
//! secant integral identities the derivations rest on.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NoiseSpec;
use crate::ecm::{csch, sech, to_physical, EcmParams, FrequencyStandardization};
use crate::error::Result;

pub const LN_2: f64 = std::f64::consts::LN_2;

/// x*csch(x) with the x -> 0 limit of 1.
fn x_csch(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        x * csch(x)
    }
}

/// Closed-form SNR = ln(Var[Im Z] / sigma2_noise) under the uniform
/// log-frequency measure on [a, b]. The double-sum term of A runs over
/// i != j; the diagonal contributes the plain lambda_i^2 sum.
pub fn snr_analytic(
    params: &EcmParams,
    std: &FrequencyStandardization,
    noise: &NoiseSpec,
) -> Result<f64> {
    let phys = to_physical(params, std)?;
    let ln_omega = std.ln_omega();
    let a = ln_omega.iter().cloned().fold(f64::INFINITY, f64::min);
    let b = ln_omega.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(b > a, "frequency range must span more than one point");

    let r_total = params.r_total.exp();
    let r_fracs = params.r_fractions();
    let r0 = 1.0 - r_fracs.iter().sum::<f64>();
    let lam = &phys.lambda;
    let n = lam.len();

    let mut big_a: f64 = lam.iter().map(|&l| l * l).sum();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dtau = std.sigma_omega * (params.tau_std[i] - params.tau_std[j]);
            big_a += lam[i] * lam[j] * x_csch(dtau);
        }
    }

    let e1 = r_total * std::f64::consts::PI * (1.0 - r0) / (2.0 * (b - a));
    let e2 = r_total * r_total * (1.0 - r0) * (1.0 - r0) * big_a / (2.0 * (b - a));
    let var = e2 - e1 * e1;
    Ok((var / noise.sigma2()).ln())
}

/// Scaled sech density of peak `i`: (lambda/pi) sech(lambda (x + sigma_w tau_std)).
fn peak_density(lambda: f64, sigma_omega: f64, tau_std: f64, x: f64) -> f64 {
    lambda / std::f64::consts::PI * sech(lambda * (x + sigma_omega * tau_std))
}

/// Inverse-CDF draw from the standard sech density (1/pi) sech(x).
fn sample_standard_sech<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    (0.5 * std::f64::consts::PI * u).tan().ln()
}

/// Proposal over the overlap region: the two peaks plus a wide sech
/// component (scale 2) centred between the lambda-scaled peak locations.
struct JsProposal {
    lam: [f64; 2],
    center: [f64; 2],
    wide_center: f64,
}

impl JsProposal {
    fn new(lam_i: f64, lam_j: f64, sigma_omega: f64, tau_i: f64, tau_j: f64) -> Self {
        let delta = sigma_omega * (lam_j * tau_j - lam_i * tau_i).abs();
        Self {
            lam: [lam_i, lam_j],
            center: [-sigma_omega * tau_i, -sigma_omega * tau_j],
            wide_center: -(sigma_omega * lam_i * tau_i + 0.5 * delta),
        }
    }

    fn density(&self, x: f64) -> f64 {
        let mut d = 0.0;
        for k in 0..2 {
            d += 0.25 * self.lam[k] / std::f64::consts::PI
                * sech(self.lam[k] * (x - self.center[k]));
        }
        d + 0.5 / (2.0 * std::f64::consts::PI) * sech(0.5 * (x - self.wide_center))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        if u < 0.25 {
            self.center[0] + sample_standard_sech(rng) / self.lam[0]
        } else if u < 0.5 {
            self.center[1] + sample_standard_sech(rng) / self.lam[1]
        } else {
            self.wide_center + 2.0 * sample_standard_sech(rng)
        }
    }
}

fn js_importance<Pi, Pj>(p_i: Pi, p_j: Pj, proposal: &JsProposal, n_is: usize, seed: u64) -> f64
where
    Pi: Fn(f64) -> f64,
    Pj: Fn(f64) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n_is {
        let x = proposal.sample(&mut rng);
        let g = proposal.density(x);
        let pi = p_i(x);
        let pj = p_j(x);
        let m = 0.5 * (pi + pj);
        if m <= 0.0 || g <= 0.0 {
            continue;
        }
        if pi > 0.0 {
            acc += 0.5 * pi / g * (pi / m).ln();
        }
        if pj > 0.0 {
            acc += 0.5 * pj / g * (pj / m).ln();
        }
    }
    (acc / n_is as f64).clamp(0.0, LN_2)
}

/// Importance-sampled JS divergence between the scaled sech peaks `i`
/// and `j` of the model. Deterministic under seed.
pub fn js_divergence(
    params: &EcmParams,
    std: &FrequencyStandardization,
    pair: (usize, usize),
    n_is: usize,
    seed: u64,
) -> Result<f64> {
    let (i, j) = pair;
    assert_ne!(i, j);
    let phys = to_physical(params, std)?;
    let (li, lj) = (phys.lambda[i], phys.lambda[j]);
    let (ti, tj) = (params.tau_std[i], params.tau_std[j]);
    let sw = std.sigma_omega;
    let proposal = JsProposal::new(li, lj, sw, ti, tj);
    Ok(js_importance(
        |x| peak_density(li, sw, ti, x),
        |x| peak_density(lj, sw, tj, x),
        &proposal,
        n_is,
        seed,
    ))
}

/// Log-normal hyperparameters of the noise-variance prior used by the
/// noisy JS extension.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoisePrior {
    pub mu_sigma: f64,
    pub sigma_sigma: f64,
}

/// Noise-marginalised peak density: the mean magnitude of a Gaussian
/// observation of the clean density, averaged over the log-normal noise
/// prior by quadrature over its standard-normal driver, renormalised.
fn noisy_peak(
    lambda: f64,
    sigma_omega: f64,
    tau_std: f64,
    noise: &NoisePrior,
) -> impl Fn(f64) -> f64 + '_ + Copy {
    move |x: f64| {
        let mu = peak_density(lambda, sigma_omega, tau_std, x);
        folded_mean_over_lognormal(mu, noise)
    }
}

/// E_{s2 ~ LogNormal}[ E|v| : v ~ N(mu, s2) ] via Simpson quadrature in
/// the standard-normal driver z with s2 = exp(mu_sigma + sigma_sigma z).
fn folded_mean_over_lognormal(mu: f64, noise: &NoisePrior) -> f64 {
    if noise.sigma_sigma <= 0.0 {
        return folded_mean(mu, noise.mu_sigma.exp().sqrt());
    }
    let n = 80;
    let (lo, hi) = (-6.0f64, 6.0f64);
    let h = (hi - lo) / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..=n {
        let z = lo + k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let pdf = (-0.5 * z * z).exp();
        let s2 = (noise.mu_sigma + noise.sigma_sigma * z).exp();
        num += w * pdf * folded_mean(mu, s2.sqrt());
        den += w * pdf;
    }
    num / den
}

/// Mean of |v| for v ~ N(mu, sigma^2).
fn folded_mean(mu: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return mu.abs();
    }
    let z = mu / sigma;
    sigma * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp()
        + mu * erf(z / std::f64::consts::SQRT_2)
}

fn erf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26, abs error < 1.5e-7
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let y = 1.0
        - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
            + 0.254829592)
            * t
            * (-x * x).exp();
    sign * y
}

/// JS divergence between the noise-marginalised peak distributions.
pub fn js_noisy(
    params: &EcmParams,
    std: &FrequencyStandardization,
    pair: (usize, usize),
    noise_prior: &NoisePrior,
    n_is: usize,
    seed: u64,
) -> Result<f64> {
    let (i, j) = pair;
    assert_ne!(i, j);
    let phys = to_physical(params, std)?;
    let (li, lj) = (phys.lambda[i], phys.lambda[j]);
    let (ti, tj) = (params.tau_std[i], params.tau_std[j]);
    let sw = std.sigma_omega;

    let raw_i = noisy_peak(li, sw, ti, noise_prior);
    let raw_j = noisy_peak(lj, sw, tj, noise_prior);
    // renormalise over a range wide enough for both tails
    let span = 60.0 + sw * (ti.abs() + tj.abs());
    let zi = adaptive_simpson(&raw_i, -span, span, 1e-10, 30);
    let zj = adaptive_simpson(&raw_j, -span, span, 1e-10, 30);

    let proposal = JsProposal::new(li, lj, sw, ti, tj);
    Ok(js_importance(
        |x| raw_i(x) / zi,
        |x| raw_j(x) / zj,
        &proposal,
        n_is,
        seed,
    ))
}

/// One sech identity check: name, numeric value, expected value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub numeric: f64,
    pub expected: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SechIdentityReport {
    pub checks: Vec<IdentityCheck>,
    /// "pi*b" or "pi/b": whichever the quadrature supports for the
    /// scaled-argument integral.
    pub b2_resolution: String,
}

/// Integrate the sech identity suite on [-50, 50] with adaptive Simpson
/// and report the deviations. The scaled-argument integral is compared
/// against both candidate closed forms and the matching one is recorded.
pub fn sech_identities_check() -> SechIdentityReport {
    let pi = std::f64::consts::PI;
    let quad = |f: &dyn Fn(f64) -> f64| adaptive_simpson(f, -50.0, 50.0, 1e-12, 40);

    let mut checks = Vec::new();
    let mut push = |name: &str, numeric: f64, expected: f64| {
        checks.push(IdentityCheck {
            name: name.to_string(),
            numeric,
            expected,
            deviation: (numeric - expected).abs(),
        });
    };

    push("B1: int sech", quad(&|x| sech(x)), pi);

    let (a2, b2) = (0.0, 2.0);
    let v2 = quad(&|x| sech((x - a2) / b2));
    let dev_times = (v2 - pi * b2).abs();
    let dev_over = (v2 - pi / b2).abs();
    let b2_resolution = if dev_times < dev_over { "pi*b" } else { "pi/b" };
    push("B2: int sech((x-a)/b), a=0 b=2", v2, pi * b2);

    push("B3: int sech ln sech", quad(&|x| sech(x) * sech(x).ln()), -pi * LN_2);
    for a in [0.5, 1.0, 3.0] {
        push(
            &format!("B4: int sech(x) sech(x-a), a={a}"),
            quad(&|x| sech(x) * sech(x - a)),
            2.0 * a * csch(a),
        );
    }
    push("B5: int sech^2", quad(&|x| sech(x) * sech(x)), 2.0);

    SechIdentityReport { checks, b2_resolution: b2_resolution.to_string() }
}

/// Recursive adaptive Simpson quadrature.
pub fn adaptive_simpson<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> f64 {
    fn simpson<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
    }
    fn rec<F: Fn(f64) -> f64 + ?Sized>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (left, flm) = simpson(f, a, fa, m, fm);
        let (right, frm) = simpson(f, m, fm, b, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, fm, tol, max_depth)
}

/// Per-dataset identifiability summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub snr: f64,
    pub m: usize,
    /// JS divergence per ordered pair key "i-j" with i < j.
    pub js_pairs: BTreeMap<String, f64>,
    /// Delta tau per the same keys.
    pub delta_tau: BTreeMap<String, f64>,
}

pub fn identifiability_report(
    params: &EcmParams,
    std: &FrequencyStandardization,
    noise: &NoiseSpec,
    n_is: usize,
    seed: u64,
) -> Result<IdentifiabilityReport> {
    let snr = snr_analytic(params, std, noise)?;
    let n = params.n_pairs();
    let mut js_pairs = BTreeMap::new();
    let mut delta_tau = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let key = format!("{i}-{j}");
            js_pairs.insert(
                key.clone(),
                js_divergence(params, std, (i, j), n_is, seed.wrapping_add((i * n + j) as u64))?,
            );
            delta_tau
                .insert(key, std.sigma_omega * (params.tau_std[i] - params.tau_std[j]));
        }
    }
    Ok(IdentifiabilityReport { snr, m: std.len(), js_pairs, delta_tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::log_equispaced_grid;
    use approx::assert_relative_eq;

    fn std_grid(m: usize, span: f64) -> FrequencyStandardization {
        FrequencyStandardization::from_freqs_hz(&log_equispaced_grid(m, span)).unwrap()
    }

    #[test]
    fn snr_noise_doubling_and_shift_invariance() {
        let params = EcmParams::new(0.3, vec![0.2, 0.1], vec![-0.9, 0.8]);
        let std = std_grid(50, 7.0);
        let s1 = snr_analytic(&params, &std, &NoiseSpec { log_sigma2: -4.0 }).unwrap();
        let s2 = snr_analytic(&params, &std, &NoiseSpec { log_sigma2: -4.0 + LN_2 }).unwrap();
        assert_relative_eq!(s1 - s2, LN_2, max_relative = 1e-12);

        // adding c to r_total while scaling sigma2 by exp(2c) is a no-op
        let c = 0.7;
        let shifted = EcmParams::new(0.3 + c, vec![0.2, 0.1], vec![-0.9, 0.8]);
        let s3 =
            snr_analytic(&shifted, &std, &NoiseSpec { log_sigma2: -4.0 + 2.0 * c }).unwrap();
        assert!((s1 - s3).abs() < 1e-9, "{s1} vs {s3}");
    }

    #[test]
    fn snr_coincident_taus_use_csch_limit() {
        let params = EcmParams::new(0.0, vec![0.15, 0.15], vec![0.3, 0.3]);
        let snr = snr_analytic(&params, &std_grid(40, 7.0), &NoiseSpec { log_sigma2: -5.0 })
            .unwrap();
        assert!(snr.is_finite());
        // with identical peaks, A = (sum lambda)^2 + extra diagonal mass;
        // here lambda = {1/2, 1/2}: A = 0.25+0.25 + 2*2*0.25*1 = 1.5
        let nearly = EcmParams::new(0.0, vec![0.15, 0.15], vec![0.3, 0.3 + 1e-9]);
        let snr2 = snr_analytic(&nearly, &std_grid(40, 7.0), &NoiseSpec { log_sigma2: -5.0 })
            .unwrap();
        assert_relative_eq!(snr, snr2, max_relative = 1e-9);
    }

    #[test]
    fn snr_matches_quadrature_oracle() {
        // variance of Im Z over uniform ln(omega) by dense quadrature;
        // the closed form extends the sech integrals to the whole line,
        // so keep the peaks centred and the window wide
        let params = EcmParams::new(0.2, vec![0.25, 0.05], vec![-0.2, 0.25]);
        let std = std_grid(80, 12.0);
        let noise = NoiseSpec { log_sigma2: -3.0 };
        let snr = snr_analytic(&params, &std, &noise).unwrap();

        let ln_w = std.ln_omega();
        let a = ln_w.iter().cloned().fold(f64::INFINITY, f64::min);
        let b = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let phys = to_physical(&params, &std).unwrap();
        // sech argument is ln(omega * tau_i) = lw + ln tau_i
        let im = |lw: f64| {
            let mut t = 0.0;
            for i in 0..2 {
                t += phys.lambda[i] / std::f64::consts::PI * sech(lw + phys.tau_s[i].ln());
            }
            phys.r_im * t
        };
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let v = im(a + k as f64 * h);
            m1 += w * v;
            m2 += w * v * v;
        }
        m1 *= h / (b - a);
        m2 *= h / (b - a);
        let var = m2 - m1 * m1;
        let oracle = (var / noise.sigma2()).ln();
        assert!(
            (snr - oracle).abs() / oracle.abs().max(1.0) < 1e-3,
            "snr {snr} vs oracle {oracle}"
        );
    }

    #[test]
    fn peak_densities_integrate_to_one() {
        for (lam, tau) in [(0.5, -0.978), (0.25, 0.901), (1.0, 0.0)] {
            let z = adaptive_simpson(&|x| peak_density(lam, 2.0, tau, x), -200.0, 200.0, 1e-10, 40);
            assert_relative_eq!(z, 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn js_identical_zero_and_symmetry() {
        let params = EcmParams::new(0.0, vec![0.2, 0.2], vec![0.4, 0.4]);
        let std = std_grid(30, 7.0);
        let js = js_divergence(&params, &std, (0, 1), 20_000, 3).unwrap();
        assert!(js < 1e-3, "js {js}");

        let params = EcmParams::new(0.0, vec![0.2, 0.1], vec![-0.6, 0.7]);
        let a = js_divergence(&params, &std, (0, 1), 2_000_000, 5).unwrap();
        let b = js_divergence(&params, &std, (1, 0), 2_000_000, 5).unwrap();
        assert!((a - b).abs() < 2e-3, "{a} vs {b}");
        assert!(a >= 0.0 && a <= LN_2);
    }

    #[test]
    fn js_far_separated_approaches_ln2() {
        let params = EcmParams::new(0.0, vec![0.1856, 0.1856], vec![-20.0, 20.0]);
        let std = std_grid(30, 7.0);
        let js = js_divergence(&params, &std, (0, 1), 200_000, 7).unwrap();
        assert!((js - LN_2).abs() < 1e-2, "js {js}");
    }

    #[test]
    fn js_deterministic_and_variance_shrinks() {
        let params = EcmParams::new(0.0, vec![0.2, 0.1], vec![-0.3, 0.45]);
        let std = std_grid(30, 7.0);
        let a = js_divergence(&params, &std, (0, 1), 50_000, 11).unwrap();
        let b = js_divergence(&params, &std, (0, 1), 50_000, 11).unwrap();
        assert_eq!(a, b);

        let spread = |n_is: usize| {
            let vals: Vec<f64> = (0..20)
                .map(|s| js_divergence(&params, &std, (0, 1), n_is, 100 + s).unwrap())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64)
                .sqrt()
        };
        let s_small = spread(4_000);
        let s_large = spread(16_000);
        // quadrupling N_IS should halve the std, within 30% slack
        assert!(
            s_large < 0.5 * s_small * 1.3,
            "std {s_small} -> {s_large}"
        );
    }

    #[test]
    fn js_noisy_reduces_to_noise_free_and_stays_in_range() {
        let params = EcmParams::new(0.0, vec![0.2, 0.1], vec![-0.5, 0.6]);
        let std = std_grid(30, 7.0);
        let clean = js_divergence(&params, &std, (0, 1), 300_000, 9).unwrap();
        let tiny = NoisePrior { mu_sigma: -40.0, sigma_sigma: 0.0 };
        let noisy = js_noisy(&params, &std, (0, 1), &tiny, 300_000, 9).unwrap();
        assert!((clean - noisy).abs() < 2e-3, "{clean} vs {noisy}");

        let wide = NoisePrior { mu_sigma: -3.0, sigma_sigma: 1.0 };
        let v = js_noisy(&params, &std, (0, 1), &wide, 100_000, 9).unwrap();
        assert!(v.is_finite() && (0.0..=LN_2).contains(&v));
    }

    #[test]
    fn js_noisy_matches_grid_oracle() {
        let params = EcmParams::new(0.0, vec![0.2, 0.1], vec![-0.5, 0.6]);
        let std = std_grid(30, 7.0);
        let noise = NoisePrior { mu_sigma: -4.0, sigma_sigma: 0.5 };
        let est = js_noisy(&params, &std, (0, 1), &noise, 400_000, 13).unwrap();

        // dense trapezoid oracle over the renormalised marginals
        let phys = to_physical(&params, &std).unwrap();
        let f_i = noisy_peak(phys.lambda[0], std.sigma_omega, params.tau_std[0], &noise);
        let f_j = noisy_peak(phys.lambda[1], std.sigma_omega, params.tau_std[1], &noise);
        let (lo, hi, n) = (-80.0, 80.0, 8000);
        let h = (hi - lo) / n as f64;
        let mut zi = 0.0;
        let mut zj = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let x = lo + k as f64 * h;
            zi += w * f_i(x) * h;
            zj += w * f_j(x) * h;
        }
        let mut js = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            let x = lo + k as f64 * h;
            let pi = f_i(x) / zi;
            let pj = f_j(x) / zj;
            let m = 0.5 * (pi + pj);
            if pi > 0.0 {
                js += w * h * 0.5 * pi * (pi / m).ln();
            }
            if pj > 0.0 {
                js += w * h * 0.5 * pj * (pj / m).ln();
            }
        }
        assert!((est - js).abs() < 1e-2, "is {est} vs grid {js}");
    }

    #[test]
    fn sech_identity_suite() {
        let report = sech_identities_check();
        let by_name = |prefix: &str| {
            report
                .checks
                .iter()
                .find(|c| c.name.starts_with(prefix))
                .unwrap()
        };
        assert!(by_name("B1").deviation < 1e-8);
        assert!(by_name("B3").deviation < 1e-7);
        assert!(by_name("B5").deviation < 1e-8);
        for c in report.checks.iter().filter(|c| c.name.starts_with("B4")) {
            assert!(c.deviation < 1e-7, "{}: {}", c.name, c.deviation);
        }
        // the scaled-argument integral follows substitution, not the
        // printed reciprocal form
        assert_eq!(report.b2_resolution, "pi*b");
        let b2 = by_name("B2");
        assert_relative_eq!(b2.numeric, 2.0 * std::f64::consts::PI, max_relative = 1e-8);
    }

    #[test]
    fn report_covers_all_pairs() {
        let params = EcmParams::new(0.0, vec![0.2, 0.15, 0.1], vec![-0.9, 0.2, 0.95]);
        let std = std_grid(25, 7.0);
        let rep = identifiability_report(&params, &std, &NoiseSpec { log_sigma2: -4.0 }, 20_000, 1)
            .unwrap();
        assert_eq!(rep.js_pairs.len(), 3);
        assert_eq!(rep.delta_tau.len(), 3);
        assert_eq!(rep.m, 25);
        assert!(rep.snr.is_finite());
        for v in rep.js_pairs.values() {
            assert!((0.0..=LN_2).contains(v));
        }
    }
}
