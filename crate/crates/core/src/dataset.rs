//! Synthetic EIS dataset generation, frequency standardisation, and
//! JSON/CSV persistence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::ecm::{impedance, EcmParams, FrequencyStandardization};
use crate::error::{Error, Result};

/// Homoskedastic observation-noise specification, stored as `ln sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub log_sigma2: f64,
}

impl NoiseSpec {
    pub fn sigma(&self) -> f64 {
        (0.5 * self.log_sigma2).exp()
    }

    pub fn sigma2(&self) -> f64 {
        self.log_sigma2.exp()
    }
}

/// Generator record kept with synthetic datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub true_model: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub log_sigma2: Option<f64>,
    pub seed: Option<u64>,
}

/// Observed impedance spectrum plus its frequency standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub freqs_hz: Vec<f64>,
    pub y_re: Vec<f64>,
    pub y_im: Vec<f64>,
    pub std: FrequencyStandardization,
    pub meta: Option<DatasetMeta>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    freqs_hz: Vec<f64>,
    y_re: Vec<f64>,
    y_im: Vec<f64>,
    #[serde(default)]
    meta: Option<DatasetMeta>,
    // unknown keys in legacy files are ignored by serde default behaviour
}

impl Dataset {
    pub fn new(freqs_hz: Vec<f64>, y_re: Vec<f64>, y_im: Vec<f64>, meta: Option<DatasetMeta>) -> Result<Self> {
        if y_re.len() != freqs_hz.len() || y_im.len() != freqs_hz.len() {
            return Err(Error::Schema(format!(
                "channel lengths {}/{} do not match {} frequencies",
                y_re.len(),
                y_im.len(),
                freqs_hz.len()
            )));
        }
        if !freqs_hz.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidGrid("frequencies must be strictly increasing".into()));
        }
        let std = FrequencyStandardization::from_freqs_hz(&freqs_hz)?;
        Ok(Self { freqs_hz, y_re, y_im, std, meta })
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    /// True generator parameters, when the dataset is synthetic.
    pub fn true_params(&self) -> Result<(EcmParams, NoiseSpec)> {
        let meta = self.meta.as_ref().ok_or(Error::MissingMetadata)?;
        let n = meta.true_model.ok_or(Error::MissingMetadata)?;
        let theta = meta.theta.as_ref().ok_or(Error::MissingMetadata)?;
        let params = EcmParams::from_slice(n, theta)?;
        let log_sigma2 = meta.log_sigma2.ok_or(Error::MissingMetadata)?;
        Ok((params, NoiseSpec { log_sigma2 }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DatasetFile {
            freqs_hz: self.freqs_hz.clone(),
            y_re: self.y_re.clone(),
            y_im: self.y_im.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: DatasetFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{path:?}: {e}")))?;
        Self::new(file.freqs_hz, file.y_re, file.y_im, file.meta)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("freq_hz,y_re,y_im\n");
        for j in 0..self.len() {
            out.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", self.freqs_hz[j], self.y_re[j], self.y_im[j]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Log-equispaced frequency grid of `m` points spanning `span_decades`
/// decades centred on 1 rad/s.
pub fn log_equispaced_grid(m: usize, span_decades: f64) -> Vec<f64> {
    let half = 0.5 * span_decades * std::f64::consts::LN_10;
    let pi2 = 2.0 * std::f64::consts::PI;
    (0..m)
        .map(|i| {
            let ln_w = -half + 2.0 * half * i as f64 / (m - 1) as f64;
            ln_w.exp() / pi2
        })
        .collect()
}

/// Named scenario presets for reproduction experiments.
#[derive(Debug, Clone)]
pub struct Preset {
    pub params: EcmParams,
    pub noise: NoiseSpec,
    pub m: usize,
    pub span_decades: f64,
}

/// Look up a scenario preset by name.
///
/// `easy`: two well-separated RC pairs (delta tau about 9.1) with very
/// low noise. `hard`: three RC pairs, two nearly coincident (minimum
/// delta tau about 0.36), with high noise.
pub fn preset(name: &str) -> Option<Preset> {
    match name {
        "easy" => Some(Preset {
            params: EcmParams::new(0.0, vec![0.1856, 0.1856], vec![-0.978, 0.978]),
            noise: NoiseSpec { log_sigma2: -9.97 },
            m: 100,
            span_decades: 7.0,
        }),
        "hard" => Some(Preset {
            params: EcmParams::new(
                0.0,
                vec![0.3266, 0.3266, 0.3266],
                vec![-0.978, 0.901, 0.978],
            ),
            noise: NoiseSpec { log_sigma2: -1.6 },
            m: 100,
            span_decades: 7.0,
        }),
        _ => None,
    }
}

impl Preset {
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        generate(&self.params, self.m, self.span_decades, self.noise, seed)
    }
}

/// Generate a synthetic dataset from known parameters.
///
/// Gaussian noise of variance `exp(noise.log_sigma2)` is added
/// independently to the real and imaginary channels. Deterministic under
/// `seed`.
pub fn generate(
    true_params: &EcmParams,
    m: usize,
    span_decades: f64,
    noise: NoiseSpec,
    seed: u64,
) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::InvalidGrid(format!("m = {m} < 2")));
    }
    let freqs = log_equispaced_grid(m, span_decades);
    let std = FrequencyStandardization::from_freqs_hz(&freqs)?;
    let (clean_re, clean_im) = impedance(true_params, &std)?;
    let sigma = noise.sigma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y_re, y_im) = if sigma > 0.0 {
        let dist = Normal::new(0.0, sigma).expect("positive sigma");
        let y_re = clean_re.iter().map(|&v| v + dist.sample(&mut rng)).collect();
        let y_im = clean_im.iter().map(|&v| v + dist.sample(&mut rng)).collect();
        (y_re, y_im)
    } else {
        (clean_re, clean_im)
    };
    Dataset::new(
        freqs,
        y_re,
        y_im,
        Some(DatasetMeta {
            true_model: Some(true_params.n_pairs()),
            theta: Some(true_params.to_vec()),
            log_sigma2: Some(noise.log_sigma2),
            seed: Some(seed),
        }),
    )
}
