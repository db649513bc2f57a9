//! End-to-end run: unmix the low-resolution cube, synthesize dead-leaves
//! training pairs from its abundances, train, super-resolve, remix, evaluate.
//!
//! Every artifact is written under one output directory together with
//! `manifest.json`, which records the effective configuration, its hash, the
//! derived seeds and the SHA-256 of each artifact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset;
use crate::deadleaves::{generate_dataset, GeneratorConfig, ValueMode, ValueSource};
use crate::degradation::{upsample, DegradationSpec};
use crate::error::{Error, Result};
use crate::image::{AbundanceMap, SpectralCube};
use crate::io;
use crate::metrics::{evaluate, MetricReport};
use crate::noise::NoiseConfig;
use crate::rng::derive_seed;
use crate::srnet::{save_checkpoint, super_resolve, train_on, EpochLog, NetworkParams, TrainConfig};
use crate::unmixing::{unmix, Backend, Decomposition, DEFAULT_MATERIALS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// High-resolution side lengths of each synthetic map.
    pub height: usize,
    pub width: usize,
    pub count: usize,
    #[serde(default = "half")]
    pub noisy_fraction: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            height: 64,
            width: 64,
            count: 200,
            noisy_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Low-resolution input cube.
    pub input: PathBuf,
    /// Optional high-resolution ground truth for evaluation.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    pub scale: u32,
    #[serde(default = "default_materials")]
    pub materials: usize,
    #[serde(default)]
    pub backend: Backend,
    /// Degradation blur; defaults to `scale`.
    #[serde(default)]
    pub blur_sigma: Option<f64>,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Training settings. `train.seed` is replaced by a seed derived from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    /// Noise level fed to the network at inference.
    #[serde(default)]
    pub sigma_hint: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_materials() -> usize {
    DEFAULT_MATERIALS
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, scale: u32) -> Self {
        PipelineConfig {
            input: input.into(),
            reference: None,
            scale,
            materials: DEFAULT_MATERIALS,
            backend: Backend::MinVol,
            blur_sigma: None,
            synthetic: SyntheticConfig::default(),
            noise: NoiseConfig::default(),
            train: TrainConfig::default(),
            sigma_hint: 0.0,
            seed: 0,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column())))
    }

    pub fn degradation(&self) -> Result<DegradationSpec> {
        match self.blur_sigma {
            Some(s) => DegradationSpec::with_sigma(self.scale, s),
            None => DegradationSpec::new(self.scale),
        }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            master: self.seed,
            generator: derive_seed(self.seed, 1),
            train: derive_seed(self.seed, 2),
        }
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            height: self.synthetic.height,
            width: self.synthetic.width,
            materials: self.materials,
            scale_factor: self.scale,
            value_mode: ValueMode::Empirical,
            seed: self.seeds().generator,
            noisy_fraction: self.synthetic.noisy_fraction,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.materials == 0 {
            return Err(Error::Config("materials must be at least 1".into()));
        }
        if !(self.sigma_hint >= 0.0 && self.sigma_hint.is_finite()) {
            return Err(Error::Config(format!("sigma hint must be non-negative, got {}", self.sigma_hint)));
        }
        if self.synthetic.count == 0 {
            return Err(Error::Config("synthetic dataset size must be at least 1".into()));
        }
        self.degradation()?;
        self.generator().validate()?;
        self.noise.validate()?;
        self.train_config().validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub generator: u64,
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub stage: String,
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pipeline: MetricReport,
    pub bicubic: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub config_hash: String,
    pub seeds: Seeds,
    pub artifacts: Vec<Artifact>,
    pub evaluation: Option<EvaluationReport>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 of the written manifest.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

pub struct PipelineOutcome {
    pub decomposition: Decomposition,
    pub params: NetworkParams,
    pub log: Vec<EpochLog>,
    pub abundances_sr: AbundanceMap,
    pub cube_sr: SpectralCube,
    pub manifest: RunManifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Recorder<'a> {
    out: &'a Path,
    artifacts: Vec<Artifact>,
}

impl Recorder<'_> {
    fn record(&mut self, stage: &str, rel: &str) -> Result<()> {
        let path = self.out.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(Artifact {
            stage: stage.into(),
            path: rel.into(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn record_raster(&mut self, stage: &str, stem: &str) -> Result<()> {
        self.record(stage, &format!("{stem}.json"))?;
        self.record(stage, &format!("{stem}.raw"))
    }
}

/// Runs every stage, writing artifacts under `out`. `progress` receives one
/// line per stage and per training epoch.
pub fn run_pipeline(config: &PipelineConfig, out: impl AsRef<Path>, progress: &mut dyn FnMut(&str)) -> Result<PipelineOutcome> {
    config.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rec = Recorder { out, artifacts: Vec::new() };
    let scale = config.scale;

    progress("unmix");
    let (cube, decomposition) = (|| -> Result<_> {
        let cube = io::load_cube(&config.input)?;
        let d = unmix(&cube, config.materials, config.backend)?;
        io::save_endmembers(&d.endmembers, out.join("endmembers.csv"))?;
        io::save_matrix(d.endmembers.pinv(), out.join("pinv.csv"))?;
        io::save_abundance(&d.abundances, out.join("abundances_lr"))?;
        if let Some(offset) = &d.offset {
            io::write_csv_rows([offset.clone()], out.join("offset.csv"))?;
        }
        Ok((cube, d))
    })()
    .map_err(|e| e.in_stage("unmix"))?;
    rec.record("unmix", "endmembers.csv")?;
    rec.record("unmix", "pinv.csv")?;
    rec.record_raster("unmix", "abundances_lr")?;
    if decomposition.offset.is_some() {
        rec.record("unmix", "offset.csv")?;
    }

    progress("gen-dl");
    let data_dir = out.join("dataset");
    let data = (|| -> Result<_> {
        let source = ValueSource::empirical(&decomposition.abundances);
        generate_dataset(&config.generator(), &source, &config.degradation()?, config.synthetic.count, &data_dir)?;
        dataset::load(&data_dir)
    })()
    .map_err(|e| e.in_stage("gen-dl"))?;
    rec.record("gen-dl", "dataset/meta.json")?;

    progress("train");
    let train_config = config.train_config();
    let mut log_lines = String::new();
    let outcome = train_on(&data, &train_config, &config.noise, decomposition.endmembers.pinv(), |e| {
        let line = serde_json::to_string(e).expect("log entry serializes");
        progress(&line);
        log_lines.push_str(&line);
        log_lines.push('\n');
    })
    .map_err(|e| e.in_stage("train"))?;
    (|| -> Result<()> {
        let log_path = out.join("train_log.jsonl");
        fs::write(&log_path, &log_lines).map_err(|e| Error::io(&log_path, e))?;
        save_checkpoint(&outcome.params, scale, Some(&train_config), Some(&config.noise), out.join("model"))?;
        Ok(())
    })()
    .map_err(|e| e.in_stage("train"))?;
    rec.record("train", "train_log.jsonl")?;
    rec.record("train", "model.json")?;
    rec.record("train", "model.bin")?;

    progress("sr");
    let abundances_sr = (|| -> Result<_> {
        let a = super_resolve(&outcome.params, &decomposition.abundances, config.sigma_hint, scale)?;
        io::save_abundance(&a, out.join("abundances_sr"))?;
        Ok(a)
    })()
    .map_err(|e| e.in_stage("sr"))?;
    rec.record_raster("sr", "abundances_sr")?;

    progress("reconstruct");
    let cube_sr = (|| -> Result<_> {
        let c = decomposition.reconstruct(&abundances_sr)?;
        io::save_cube(&c, out.join("hsi_sr"))?;
        Ok(c)
    })()
    .map_err(|e| e.in_stage("reconstruct"))?;
    rec.record_raster("reconstruct", "hsi_sr")?;

    let evaluation = match &config.reference {
        None => None,
        Some(reference) => {
            progress("eval");
            let report = (|| -> Result<_> {
                let reference = io::load_cube(reference)?;
                let report = EvaluationReport {
                    pipeline: evaluate(&reference, &cube_sr, scale)?,
                    bicubic: evaluate(&reference, &upsample(&cube, scale)?, scale)?,
                };
                let path = out.join("report.json");
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
                Ok(report)
            })()
            .map_err(|e| e.in_stage("eval"))?;
            rec.record("eval", "report.json")?;
            Some(report)
        }
    };

    let manifest = RunManifest {
        config: config.clone(),
        config_hash: config.hash(),
        seeds: config.seeds(),
        artifacts: rec.artifacts,
        evaluation,
    };
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(PipelineOutcome {
        decomposition,
        params: outcome.params,
        log: outcome.log,
        abundances_sr,
        cube_sr,
        manifest,
    })
}
