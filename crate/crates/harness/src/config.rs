//! Flat TOML experiment configuration.
//!
//! A config file is a list of `key = value` lines. Keys missing from the file
//! keep the value of the preset selected by the subcommand, unknown keys are
//! rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use muonlab_core::matcore::NsCoefficients;
use muonlab_core::optim::{AdamParams, OptimizerSpec, Orthogonalizer};
use muonlab_core::problems::{LabelFormat, MlpLoss, QuadraticScale};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable that relocates relative output directories.
pub const OUT_ROOT_ENV: &str = "MUONLAB_OUT_ROOT";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Quadratic,
    LinearMse,
    Mlp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QProfile {
    Identity,
    Geometric,
    #[default]
    TwoCluster,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Gaussian,
    Lowrank,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Uniformly random classes.
    #[default]
    Random,
    /// argmax of a noisy random linear teacher.
    Teacher,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelsFormat {
    #[default]
    OneHot,
    ClassIndex,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Muon,
    SimplifiedMuon,
    #[default]
    Gd,
    Nesterov,
    Adam,
    Adamw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthKind {
    #[default]
    Svd,
    NewtonSchulz,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    /// η = lr.
    #[default]
    Constant,
    /// η = lr / L.
    InverseL,
    /// η_t = ‖∇f‖_* / (rL).
    AdaptiveL,
    /// η_t = ‖∇f‖_* / L_*.
    AdaptiveLstar,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpTrain {
    /// Every layer takes optimizer steps.
    #[default]
    All,
    /// Only the diagnosed layer moves.
    Layer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemKind,
    /// Seed for problem data; each run seed is used when absent.
    pub problem_seed: Option<u64>,

    pub m: usize,
    pub n: usize,
    pub q_profile: QProfile,
    pub q_cond: f64,
    pub quadratic_scale: QuadraticScale,
    pub w_star_low: f64,
    pub w_star_high: f64,

    pub features: FeatureKind,
    pub d: usize,
    pub batch: usize,
    pub classes: usize,
    pub target_ratio: f64,
    pub labels: LabelKind,
    pub label_noise: f64,
    pub features_csv: Option<String>,
    pub labels_csv: Option<String>,
    pub labels_format: LabelsFormat,
    pub csv_header: bool,

    /// Output widths of each layer; the input width is `d`.
    pub mlp_widths: Vec<usize>,
    pub mlp_loss: MlpLoss,
    /// Diagnosed layer; the middle layer when absent.
    pub mlp_layer: Option<usize>,
    pub mlp_train: MlpTrain,

    pub optimizer: OptimizerKind,
    pub beta: f64,
    pub orthogonalizer: OrthKind,
    pub ns_steps: usize,
    pub nesterov_mu: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,

    pub schedule: ScheduleName,
    pub lr: f64,
    pub iters: usize,
    pub cadence: usize,
    pub diag_j: bool,
    pub diag_l: bool,
    pub diag_hat_j: bool,
    pub checkpoints: bool,
    pub noise_sigma: f64,
    pub noise_batch: usize,

    pub seeds: Vec<u64>,
    pub out: String,
    /// Tuning grid over `lr`; empty means no tuning.
    pub grid: Vec<f64>,
    /// Grid for baseline optimizers inside the figure suites.
    pub baseline_grid: Vec<f64>,
    pub ratio_samples: usize,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
}

/// `count` points from 10^lo to 10^hi, evenly spaced in the exponent.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            problem: ProblemKind::Quadratic,
            problem_seed: None,
            m: 15,
            n: 20,
            q_profile: QProfile::TwoCluster,
            q_cond: 1e4,
            quadratic_scale: QuadraticScale::Half,
            w_star_low: -50.0,
            w_star_high: 50.0,
            features: FeatureKind::Gaussian,
            d: 196,
            batch: 400,
            classes: 10,
            target_ratio: 1.41,
            labels: LabelKind::Random,
            label_noise: 0.5,
            features_csv: None,
            labels_csv: None,
            labels_format: LabelsFormat::OneHot,
            csv_header: false,
            mlp_widths: vec![8, 6, 4],
            mlp_loss: MlpLoss::SoftmaxCe,
            mlp_layer: None,
            mlp_train: MlpTrain::All,
            optimizer: OptimizerKind::Gd,
            beta: 0.9,
            orthogonalizer: OrthKind::Svd,
            ns_steps: 5,
            nesterov_mu: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            schedule: ScheduleName::InverseL,
            lr: 1.0,
            iters: 4000,
            cadence: 10,
            diag_j: true,
            diag_l: true,
            diag_hat_j: true,
            checkpoints: false,
            noise_sigma: 0.0,
            noise_batch: 1,
            seeds: vec![1],
            out: "out/run".into(),
            grid: Vec::new(),
            baseline_grid: Vec::new(),
            ratio_samples: 1000,
            workers: 1,
        }
    }
}

/// Starting values for each subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Run,
    RatioStudy,
    Fig1,
    Fig2,
    Fig3,
    Spectra,
}

impl Preset {
    pub fn config(self) -> ExperimentConfig {
        let base = ExperimentConfig::default();
        match self {
            Preset::Run => base,
            Preset::RatioStudy => ExperimentConfig {
                name: "ratio_study".into(),
                out: "out/ratio_study".into(),
                ..base
            },
            Preset::Fig1 => ExperimentConfig {
                name: "fig1".into(),
                optimizer: OptimizerKind::Muon,
                schedule: ScheduleName::Constant,
                grid: logspace(-3.0, 1.0, 9),
                cadence: 40,
                diag_j: false,
                diag_l: false,
                diag_hat_j: false,
                seeds: (1..=50).collect(),
                out: "out/fig1".into(),
                ..base
            },
            Preset::Fig2 => ExperimentConfig {
                name: "fig2".into(),
                problem: ProblemKind::LinearMse,
                features: FeatureKind::Lowrank,
                classes: 100,
                optimizer: OptimizerKind::Muon,
                schedule: ScheduleName::Constant,
                grid: logspace(-4.0, 0.0, 9),
                baseline_grid: logspace(-3.0, 1.0, 9),
                iters: 500,
                cadence: 10,
                diag_hat_j: false,
                out: "out/fig2".into(),
                ..base
            },
            Preset::Fig3 => ExperimentConfig {
                name: "fig3".into(),
                problem: ProblemKind::Mlp,
                features: FeatureKind::Lowrank,
                d: 10,
                batch: 120,
                classes: 4,
                labels: LabelKind::Teacher,
                optimizer: OptimizerKind::SimplifiedMuon,
                schedule: ScheduleName::Constant,
                grid: logspace(-4.0, 0.0, 9),
                baseline_grid: logspace(-3.0, 1.0, 9),
                iters: 200,
                cadence: 10,
                checkpoints: true,
                seeds: (1..=5).collect(),
                out: "out/fig3".into(),
                ..base
            },
            Preset::Spectra => ExperimentConfig {
                name: "spectra".into(),
                problem: ProblemKind::LinearMse,
                features: FeatureKind::Gaussian,
                d: 784,
                batch: 1000,
                seeds: (1..=5).collect(),
                out: "out/spectra".into(),
                ..base
            },
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file body over `preset`.
    pub fn from_toml_over(text: &str, preset: Preset) -> Result<Self, HarnessError> {
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let mut table = toml::Table::try_from(preset.config()).map_err(|e| HarnessError::Config(e.to_string()))?;
        for (key, value) in overlay {
            table.insert(key, value);
        }
        let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_over(&text, preset)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.iters < 1 {
            return fail("iters must be at least 1".into());
        }
        if self.cadence < 1 {
            return fail("cadence must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return fail("seeds must be distinct".into());
        }
        if self.seeds.iter().chain(&self.problem_seed).any(|&s| s > i64::MAX as u64) {
            return fail("seeds must fit in a signed 64-bit integer".into());
        }
        if self.m == 0 || self.n == 0 || self.d == 0 || self.batch == 0 || self.classes == 0 {
            return fail("dimensions must be positive".into());
        }
        if !(self.w_star_low < self.w_star_high) {
            return fail("w_star_low must be below w_star_high".into());
        }
        if !(0.0..1.0).contains(&self.beta) {
            return fail(format!("beta {} not in [0, 1)", self.beta));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be finite and nonnegative", self.lr));
        }
        if self.grid.iter().chain(&self.baseline_grid).any(|g| !(*g > 0.0 && g.is_finite())) {
            return fail("grid values must be positive and finite".into());
        }
        if !(self.noise_sigma >= 0.0) || self.noise_batch == 0 {
            return fail("noise_sigma must be nonnegative and noise_batch at least 1".into());
        }
        if self.problem == ProblemKind::Mlp {
            if self.mlp_widths.is_empty() {
                return fail("mlp_widths must not be empty".into());
            }
            if self.mlp_layer.is_some_and(|l| l >= self.mlp_widths.len()) {
                return fail("mlp_layer out of range".into());
            }
            if self.mlp_widths.last() != Some(&self.classes) {
                return fail("the last MLP width must equal classes".into());
            }
        }
        if self.features == FeatureKind::Csv && self.features_csv.is_none() {
            return fail("features = \"csv\" needs features_csv".into());
        }
        if self.labels == LabelKind::Csv && self.labels_csv.is_none() {
            return fail("labels = \"csv\" needs labels_csv".into());
        }
        Ok(())
    }

    pub fn optimizer_spec(&self) -> OptimizerSpec {
        let orth = match self.orthogonalizer {
            OrthKind::Svd => Orthogonalizer::Svd,
            OrthKind::NewtonSchulz => Orthogonalizer::NewtonSchulz {
                steps: self.ns_steps,
                coefficients: NsCoefficients::default(),
            },
        };
        let adam = AdamParams {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        };
        match self.optimizer {
            OptimizerKind::Muon => OptimizerSpec::Muon {
                beta: self.beta,
                orthogonalizer: orth,
            },
            OptimizerKind::SimplifiedMuon => OptimizerSpec::SimplifiedMuon { orthogonalizer: orth },
            OptimizerKind::Gd => OptimizerSpec::Gd,
            OptimizerKind::Nesterov => OptimizerSpec::Nesterov { mu: self.nesterov_mu },
            OptimizerKind::Adam => OptimizerSpec::Adam(adam),
            OptimizerKind::Adamw => OptimizerSpec::AdamW(adam),
        }
    }

    pub fn label_format(&self) -> LabelFormat {
        match self.labels_format {
            LabelsFormat::OneHot => LabelFormat::OneHot,
            LabelsFormat::ClassIndex => LabelFormat::ClassIndex { classes: self.classes },
        }
    }

    /// Output directory, relocated under `MUONLAB_OUT_ROOT` when it is relative.
    pub fn out_dir(&self) -> PathBuf {
        let out = PathBuf::from(&self.out);
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) if out.is_relative() && !root.is_empty() => PathBuf::from(root).join(out),
            _ => out,
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }
}
