//! Run configuration, read from TOML. Every field has a default; the
//! defaults are the method's published constants.

use implicit_keypoints::extraction::{CandidateMode, ExtractionConfig, VoteMode};
use implicit_keypoints::metrics::{default_thresholds, MatchRule};
use implicit_keypoints::nn::{Activation, AdamConfig, FitConfig, LossWeights, NetConfig, PosEncConfig};
use implicit_keypoints::sampling::SampleConfig;
use implicit_keypoints::{Aabb, Error};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Keypoint sphere radius, shared by sampling, fitting and extraction.
    pub radius: f64,
    /// Marching Cubes lattice points per axis over [-1, 1]^3.
    pub resolution: usize,
    pub dataset: DatasetConfig,
    pub sampling: SamplingConfig,
    pub network: NetworkConfig,
    pub extraction: ExtractionSection,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub shapes: usize,
    pub keypoints: usize,
    /// Defaults to three radii.
    pub min_separation: Option<f64>,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_volume: usize,
    pub n_surface: usize,
    pub icosphere_level: u32,
    pub resample_per_epoch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub omega: f64,
    pub activation: Activation,
    pub posenc_bands: usize,
    pub lambda_sdf: f64,
    pub lambda_grad: f64,
    pub lambda_normal: f64,
    pub epochs: usize,
    /// Epochs for the stacked-UDF head.
    pub udf_epochs: usize,
    pub lr: f64,
    /// Cosine-anneal the learning rate to this value; constant when unset.
    pub lr_final: Option<f64>,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    pub grid_size: f64,
    pub epsilon: f64,
    pub n_vote: f64,
    pub n_max: usize,
    pub max_merge_rounds: usize,
    pub vote_mode: VoteMode,
    pub candidates: CandidateMode,
    pub density_normalization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// mIoU thresholds run evenly from 0 to `threshold_max`.
    pub threshold_max: f64,
    pub threshold_count: usize,
    pub match_rule: MatchRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            radius: implicit_keypoints::geometry::DEFAULT_RADIUS,
            resolution: implicit_keypoints::isosurface::DEFAULT_RESOLUTION,
            dataset: DatasetConfig::default(),
            sampling: SamplingConfig::default(),
            network: NetworkConfig::default(),
            extraction: ExtractionSection::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            shapes: 10,
            keypoints: 8,
            min_separation: None,
            category: "synthetic".into(),
        }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let s = SampleConfig::default();
        Self {
            n_volume: s.n_volume,
            n_surface: s.n_surface,
            icosphere_level: s.icosphere_level,
            resample_per_epoch: false,
        }
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        let w = LossWeights::default();
        let fit = FitConfig::default();
        Self {
            hidden: net.hidden,
            omega: net.omega,
            activation: net.activation,
            posenc_bands: net.posenc.bands,
            lambda_sdf: w.lambda1,
            lambda_grad: w.lambda2,
            lambda_normal: w.lambda3,
            epochs: fit.epochs,
            udf_epochs: fit.epochs,
            lr: AdamConfig::default().lr,
            lr_final: None,
            batch_size: fit.batch_size,
        }
    }
}

impl Default for ExtractionSection {
    fn default() -> Self {
        let e = ExtractionConfig::default();
        Self {
            grid_size: e.grid_size,
            epsilon: e.epsilon,
            n_vote: e.n_vote,
            n_max: e.n_max,
            max_merge_rounds: e.max_merge_rounds,
            vote_mode: e.vote_mode,
            candidates: e.candidates,
            density_normalization: e.density_normalization,
        }
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            threshold_max: 0.1,
            threshold_count: 11,
            match_rule: MatchRule::Greedy,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn min_separation(&self) -> f64 {
        self.dataset.min_separation.unwrap_or(3.0 * self.radius)
    }

    /// Box keypoints are drawn from: the unit box shrunk by the radius so
    /// every sphere fits inside the grid.
    pub fn keypoint_bounds(&self) -> Aabb {
        Aabb::unit().expanded(-self.radius)
    }

    pub fn sample_config(&self, seed: u64) -> SampleConfig {
        SampleConfig {
            n_volume: self.sampling.n_volume,
            n_surface: self.sampling.n_surface,
            bounds: Aabb::unit(),
            icosphere_level: self.sampling.icosphere_level,
            seed,
        }
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            hidden: self.network.hidden.clone(),
            out_dim: 1,
            omega: self.network.omega,
            posenc: PosEncConfig {
                bands: self.network.posenc_bands,
                include_raw: true,
            },
            activation: self.network.activation,
            latent_dim: 0,
        }
    }

    pub fn fit_config(&self, seed: u64, udf: bool) -> FitConfig {
        FitConfig {
            net: self.net_config(),
            weights: LossWeights {
                lambda1: self.network.lambda_sdf,
                lambda2: self.network.lambda_grad,
                lambda3: self.network.lambda_normal,
            },
            adam: AdamConfig {
                lr: self.network.lr,
                ..AdamConfig::default()
            },
            epochs: if udf {
                self.network.udf_epochs
            } else {
                self.network.epochs
            },
            batch_size: self.network.batch_size,
            seed,
            sampling: self.sample_config(seed),
            resample_per_epoch: self.sampling.resample_per_epoch,
            lr_final: self.network.lr_final,
        }
    }

    pub fn extraction_config(&self) -> ExtractionConfig {
        let e = &self.extraction;
        ExtractionConfig {
            grid_size: e.grid_size,
            radius: self.radius,
            epsilon: e.epsilon,
            n_vote: e.n_vote,
            n_max: e.n_max,
            max_merge_rounds: e.max_merge_rounds,
            vote_mode: e.vote_mode,
            candidates: e.candidates,
            density_normalization: e.density_normalization,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        default_thresholds(self.metrics.threshold_max, self.metrics.threshold_count)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Invalid(format!("config: {m}")));
        if !(self.radius > 0.0 && self.radius < 1.0) {
            return bad("radius must lie in (0, 1)");
        }
        if self.resolution < 2 {
            return bad("resolution must be at least 2");
        }
        if self.dataset.shapes == 0 || self.dataset.keypoints == 0 {
            return bad("dataset needs at least one shape and one keypoint");
        }
        if self.min_separation() < 0.0 {
            return bad("min_separation must be nonnegative");
        }
        if self.metrics.threshold_count < 2 || !(self.metrics.threshold_max > 0.0) {
            return bad("need at least two mIoU thresholds and a positive maximum");
        }
        self.sample_config(0).validate()?;
        self.fit_config(0, false).validate()?;
        self.extraction_config().validate()?;
        Ok(())
    }
}
