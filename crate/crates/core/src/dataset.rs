//! Synthetic dataset layout.
//!
//! ```text
//! <dir>/meta.json            generator config, degradation, count, noisy flags
//! <dir>/hr_00000.{json,raw}  high-resolution abundance map
//! <dir>/lr_00000.{json,raw}  its degraded counterpart
//! ```
//!
//! Noise is not baked into the files; it is injected at training time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deadleaves::GeneratorConfig;
use crate::degradation::DegradationSpec;
use crate::error::{Error, Result};
use crate::image::AbundanceMap;
use crate::io;

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: GeneratorConfig,
    pub degradation: DegradationSpec,
    pub count: usize,
    pub noisy: Vec<bool>,
}

/// A training pair: `hr` is the target, `lr` the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub hr: AbundanceMap,
    pub lr: AbundanceMap,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub pairs: Vec<Pair>,
}

pub fn stem(dir: &Path, kind: &str, index: usize) -> PathBuf {
    dir.join(format!("{kind}_{index:05}"))
}

pub fn write_pair(dir: &Path, index: usize, hr: &AbundanceMap, lr: &AbundanceMap) -> Result<()> {
    io::save_abundance(hr, stem(dir, "hr", index))?;
    io::save_abundance(lr, stem(dir, "lr", index))
}

pub fn write_meta(dir: &Path, meta: &DatasetMeta) -> Result<()> {
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(meta).expect("meta serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_meta(dir: impl AsRef<Path>) -> Result<DatasetMeta> {
    let path = dir.as_ref().join(META_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| {
        Error::format(&path, 0, format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    if meta.noisy.len() != meta.count {
        return Err(Error::format(
            &path,
            0,
            format!("{} noisy flags for {} samples", meta.noisy.len(), meta.count),
        ));
    }
    Ok(meta)
}

/// Loads sample `index`, checking it against the dataset metadata.
pub fn load_pair(dir: impl AsRef<Path>, meta: &DatasetMeta, index: usize) -> Result<Pair> {
    let dir = dir.as_ref();
    let load = || -> Result<Pair> {
        let hr = io::load_abundance(stem(dir, "hr", index))?;
        let lr = io::load_abundance(stem(dir, "lr", index))?;
        let g = &meta.generator;
        let s = g.scale_factor as usize;
        if hr.dims() != (g.height, g.width, g.materials)
            || lr.dims() != (g.height / s, g.width / s, g.materials)
        {
            return Err(Error::InvalidInput(format!(
                "pair shapes {:?}/{:?} disagree with meta.json",
                hr.dims(),
                lr.dims()
            )));
        }
        Ok(Pair { hr, lr })
    };
    load().map_err(|e| e.in_sample(index))
}

pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;
    let pairs = (0..meta.count)
        .map(|i| load_pair(dir, &meta, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { meta, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deadleaves::{generate_dataset, ValueMode, ValueSource};

    fn config(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            value_mode: ValueMode::Dirichlet,
            seed,
            ..GeneratorConfig::new(16, 16, 3, 2)
        }
    }

    #[test]
    fn layout_and_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DegradationSpec::new(2).unwrap();
        let meta = generate_dataset(&config(1), &ValueSource::dirichlet(3), &spec, 4, dir.path()).unwrap();
        assert_eq!(meta.noisy, vec![false, true, false, true]);
        for i in 0..4 {
            assert!(dir.path().join(format!("hr_{i:05}.raw")).exists());
            assert!(dir.path().join(format!("lr_{i:05}.json")).exists());
        }
        let ds = load(dir.path()).unwrap();
        assert_eq!(ds.meta, meta);
        assert_eq!(ds.pairs.len(), 4);
        assert!(ds.pairs.iter().all(|p| p.hr.dims() == (16, 16, 3) && p.lr.dims() == (8, 8, 3)));
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let spec = DegradationSpec::new(2).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = tempfile::tempdir().unwrap();
        let src = ValueSource::dirichlet(3);
        generate_dataset(&config(7), &src, &spec, 3, a.path()).unwrap();
        generate_dataset(&config(7), &src, &spec, 3, b.path()).unwrap();
        generate_dataset(&config(8), &src, &spec, 3, c.path()).unwrap();
        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        for f in ["meta.json", "hr_00000.raw", "lr_00002.raw"] {
            assert_eq!(read(a.path(), f), read(b.path(), f));
        }
        assert_ne!(read(a.path(), "hr_00000.raw"), read(c.path(), "hr_00000.raw"));
    }

    #[test]
    fn missing_sample_names_index() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DegradationSpec::new(2).unwrap();
        generate_dataset(&config(1), &ValueSource::dirichlet(3), &spec, 3, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("lr_00001.raw")).unwrap();
        match load(dir.path()) {
            Err(Error::Sample { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected sample error, got {other:?}"),
        }
    }
}
