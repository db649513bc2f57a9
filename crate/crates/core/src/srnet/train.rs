//! Training on synthetic pairs and inference on real abundances.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::layers::{l1_loss_backward, l1_loss_forward};
use super::network::{backward, forward, forward_with_cache, NetworkParams, DEFAULT_BLOCKS, DEFAULT_FEATURES};
use super::tensor::Tensor4;
use crate::dataset::{self, Dataset, Pair};
use crate::error::{Error, Result};
use crate::image::AbundanceMap;
use crate::noise::{build_input_stack, prepare_training_sample, NoiseConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Low-resolution side of the random training crops.
    pub patch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub features: usize,
    pub blocks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 1,
            patch_size: 16,
            learning_rate: 1e-4,
            seed: 0,
            features: DEFAULT_FEATURES,
            blocks: DEFAULT_BLOCKS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patch_size == 0 || self.features == 0 {
            return Err(Error::Config("epochs, batch size, patch size and features must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_l1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Entry 0 is the untrained network on full clean samples; entry `e ≥ 1`
    /// is the mean training loss of epoch `e`.
    pub log: Vec<EpochLog>,
}

/// Mean L1 error of the network on every full clean sample.
pub fn evaluate(params: &NetworkParams, pairs: &[Pair], scale: u32) -> Result<f64> {
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let run = || -> Result<f64> {
            let input = Tensor4::from_images(&[&build_input_stack(&p.lr, 0.0)?])?;
            let target = Tensor4::from_images(&[&p.hr])?;
            l1_loss_forward(&forward(params, &input, scale)?, &target)
        };
        total += run().map_err(|e| e.in_sample(i))?;
    }
    Ok(total / pairs.len() as f64)
}

fn random_crop<R: Rng + ?Sized>(pair: &Pair, patch: usize, scale: usize, rng: &mut R) -> Result<Pair> {
    let (h, w) = (pair.lr.height(), pair.lr.width());
    let (ph, pw) = (patch.min(h), patch.min(w));
    if (ph, pw) == (h, w) {
        return Ok(pair.clone());
    }
    let r = rng.random_range(0..=h - ph);
    let c = rng.random_range(0..=w - pw);
    Ok(Pair {
        lr: pair.lr.crop(r, c, ph, pw)?,
        hr: pair.hr.crop(r * scale, c * scale, ph * scale, pw * scale)?,
    })
}

/// Trains on in-memory pairs. Deterministic for a given seed.
///
/// Shuffling, cropping and noise draw from separate streams, so two runs that
/// differ only in noise mode see identical samples and crops.
pub fn train_on(
    data: &Dataset,
    config: &TrainConfig,
    noise: &NoiseConfig,
    pinv: &DMatrix<f64>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    noise.validate()?;
    let meta = &data.meta;
    if data.pairs.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let scale = meta.degradation.scale;
    let materials = meta.generator.materials;
    if pinv.ncols() != materials {
        return Err(Error::InvalidInput(format!(
            "pseudo-inverse has {} materials, dataset {materials}",
            pinv.ncols()
        )));
    }

    let mut params = NetworkParams::init(materials, config.features, config.blocks, &mut rng::child(config.seed, 0));
    let mut adam = AdamState::for_tensors(config.learning_rate, &params.tensors());
    let mut shuffle_rng = rng::child(config.seed, 1);
    let mut crop_rng = rng::child(config.seed, 2);
    let mut noise_rng = rng::child(config.seed, 3);

    let first = EpochLog {
        epoch: 0,
        mean_l1: evaluate(&params, &data.pairs, scale)?,
    };
    on_epoch(&first);
    let mut log = vec![first];

    let mut order: Vec<usize> = (0..data.pairs.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let mut prep = || -> Result<()> {
                    let crop = random_crop(&data.pairs[i], config.patch_size, scale as usize, &mut crop_rng)?;
                    let s = prepare_training_sample(&crop, meta.noisy[i], noise, pinv, &mut noise_rng)?;
                    inputs.push(s.input);
                    targets.push(s.target);
                    Ok(())
                };
                prep().map_err(|e| e.in_sample(i))?;
            }
            let input = Tensor4::from_images(&inputs.iter().collect::<Vec<_>>())?;
            let target = Tensor4::from_images(&targets.iter().collect::<Vec<_>>())?;
            let (pred, cache) = forward_with_cache(&params, &input, scale)?;
            loss_sum += l1_loss_forward(&pred, &target)?;
            batches += 1;
            let grad = l1_loss_backward(&pred, &target)?;
            let (grads, _) = backward(&params, &cache, &grad, false)?;
            adam_step(&mut params.tensors_mut(), &grads.tensors(), &mut adam);
        }
        let entry = EpochLog {
            epoch,
            mean_l1: loss_sum / batches as f64,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

/// Loads the dataset directory and trains on it.
pub fn train(
    dataset_dir: impl AsRef<Path>,
    config: &TrainConfig,
    noise: &NoiseConfig,
    pinv: &DMatrix<f64>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let data = dataset::load(dataset_dir)?;
    train_on(&data, config, noise, pinv, on_epoch)
}

/// Runs the network on real low-resolution abundances with noise-level hint `sigma_hint`.
pub fn super_resolve(params: &NetworkParams, a_lr: &AbundanceMap, sigma_hint: f64, scale: u32) -> Result<AbundanceMap> {
    if a_lr.materials() != params.materials {
        return Err(Error::InvalidInput(format!(
            "network was trained for {} materials, abundances have {}",
            params.materials,
            a_lr.materials()
        )));
    }
    let input = Tensor4::from_images(&[&build_input_stack(a_lr, sigma_hint)?])?;
    forward(params, &input, scale)?.to_image(0)
}
