use std::fs;
use std::path::Path;

use dlsr::dataset;
use dlsr::deadleaves::{generate_dataset, GeneratorConfig, ValueMode, ValueSource};
use dlsr::degradation::{degrade, DegradationSpec};
use dlsr::io;
use dlsr::noise::NoiseConfig;
use dlsr::phantom::{generate_phantom, PhantomConfig};
use dlsr::pipeline::{run_pipeline, PipelineConfig, SyntheticConfig};
use dlsr::srnet::{load_checkpoint, save_checkpoint, super_resolve, train_on, TrainConfig};
use dlsr::unmixing::{unmix, Backend, DEFAULT_MATERIALS};
use dlsr::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::args::*;

pub struct Context {
    pub seed: Option<u64>,
    pub config: Map<String, Value>,
    pub quiet: bool,
}

impl Context {
    pub fn new(seed: Option<u64>, config: Option<&Path>, quiet: bool) -> Result<Self> {
        let config = match config {
            None => Map::new(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => return Err(Error::Config(format!("{}: expected a JSON object", path.display()))),
                    Err(e) => return Err(Error::Config(format!("{}: {e}", path.display()))),
                }
            }
        };
        Ok(Context { seed, config, quiet })
    }

    fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Deserializes `config[key]`, or the default when absent.
    fn section<T: DeserializeOwned + Default>(&self, key: &str) -> Result<T> {
        match self.config.get(key) {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("config field `{key}`: {e}"))),
        }
    }

    fn field<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.config.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Error::Config(format!("config field `{key}`: {e}"))),
        }
    }

    fn seed_or_config(&self) -> Result<u64> {
        Ok(match self.seed {
            Some(s) => s,
            None => self.field("seed")?.unwrap_or(0),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn apply_noise(noise: &mut NoiseConfig, args: &NoiseArgs) {
    if let Some(m) = args.noise_mode {
        noise.mode = m;
    }
    if let Some(s) = args.sigma_max {
        noise.sigma_max = s;
        if args.lambda.is_none() {
            noise.lambda = 2.0 / s;
        }
    }
    if let Some(l) = args.lambda {
        noise.lambda = l;
    }
}

pub fn unmix_cmd(ctx: &Context, args: &UnmixArgs, out: &Path) -> Result<()> {
    if args.materials == 0 {
        return Err(Error::InvalidInput("--materials must be at least 1".into()));
    }
    let cube = io::load_cube(&args.input)?;
    let d = unmix(&cube, args.materials, args.backend)?;
    create_dir(out)?;
    match args.backend {
        Backend::MinVol => {
            io::save_endmembers(&d.endmembers, out.join("endmembers.csv"))?;
            io::save_abundance(&d.abundances, out.join("abundances_lr"))?;
        }
        Backend::Pca => {
            io::save_endmembers(&d.endmembers, out.join("components.csv"))?;
            io::save_abundance(&d.abundances, out.join("coefficients"))?;
            if let Some(offset) = &d.offset {
                io::write_csv_rows([offset.clone()], out.join("offset.csv"))?;
            }
        }
    }
    io::save_matrix(d.endmembers.pinv(), out.join("pinv.csv"))?;
    ctx.progress(&format!(
        "unmixed {}x{}x{} into {} {} components",
        cube.height(),
        cube.width(),
        cube.bands(),
        args.materials,
        args.backend
    ));
    Ok(())
}

pub fn gen_dl_cmd(ctx: &Context, args: &GenDlArgs, out: &Path) -> Result<()> {
    let synthetic: SyntheticConfig = ctx.section("synthetic")?;
    let scale = match args.scale {
        Some(s) => s,
        None => ctx
            .field("scale")?
            .ok_or_else(|| Error::Config("--scale is required".into()))?,
    };
    let blur: Option<f64> = args.blur_sigma.or(ctx.field("blur_sigma")?);
    let spec = match blur {
        Some(s) => DegradationSpec::with_sigma(scale, s)?,
        None => DegradationSpec::new(scale)?,
    };
    let source = match &args.source {
        Some(path) => {
            let map = io::load_abundance(path)?;
            if let Some(m) = args.materials.filter(|&m| m != map.materials()) {
                return Err(Error::InvalidInput(format!(
                    "--materials {m} disagrees with the source's {} channels",
                    map.materials()
                )));
            }
            ValueSource::empirical(&map)
        }
        None => {
            let m = match args.materials {
                Some(m) => m,
                None => ctx.field("materials")?.unwrap_or(DEFAULT_MATERIALS),
            };
            ValueSource::dirichlet(m)
        }
    };
    let config = GeneratorConfig {
        height: args.height.unwrap_or(synthetic.height),
        width: args.width.unwrap_or(synthetic.width),
        materials: source.materials(),
        scale_factor: scale,
        value_mode: if args.source.is_some() { ValueMode::Empirical } else { ValueMode::Dirichlet },
        seed: ctx.seed_or_config()?,
        noisy_fraction: args.noisy_fraction.unwrap_or(synthetic.noisy_fraction),
    };
    config.validate()?;
    let count = args.count.unwrap_or(synthetic.count);
    let meta = generate_dataset(&config, &source, &spec, count, out)?;
    ctx.progress(&format!(
        "wrote {} pairs ({} noisy-flagged) to {}",
        meta.count,
        meta.noisy.iter().filter(|&&b| b).count(),
        out.display()
    ));
    Ok(())
}

pub fn degrade_cmd(ctx: &Context, args: &DegradeArgs, out: &Path) -> Result<()> {
    let spec = match args.blur_sigma {
        Some(s) => DegradationSpec::with_sigma(args.scale, s)?,
        None => DegradationSpec::new(args.scale)?,
    };
    let cube = io::load_cube(&args.input)?;
    let lr = degrade(&cube, &spec)?;
    create_dir(out)?;
    io::save_cube(&lr, out.join(&args.name))?;
    ctx.progress(&format!("degraded to {}x{}x{}", lr.height(), lr.width(), lr.bands()));
    Ok(())
}

pub fn train_cmd(ctx: &Context, args: &TrainArgs, out: &Path) -> Result<()> {
    let mut config: TrainConfig = ctx.section("train")?;
    let mut noise: NoiseConfig = ctx.section("noise")?;
    if let Some(s) = ctx.seed {
        config.seed = s;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { config.$f = v; } )* };
    }
    set!(epochs, batch_size, patch_size, learning_rate, features, blocks);
    apply_noise(&mut noise, &args.noise);
    config.validate()?;
    noise.validate()?;

    let endmembers = io::load_endmembers(&args.endmembers)?;
    let data = dataset::load(&args.dataset)?;
    create_dir(out)?;
    let mut log = String::new();
    let outcome = train_on(&data, &config, &noise, endmembers.pinv(), |e| {
        let line = serde_json::to_string(e).expect("log entry serializes");
        ctx.progress(&line);
        log.push_str(&line);
        log.push('\n');
    })?;
    write_text(&out.join("train_log.jsonl"), &log)?;
    save_checkpoint(&outcome.params, data.meta.degradation.scale, Some(&config), Some(&noise), out.join("model"))?;
    Ok(())
}

pub fn sr_cmd(ctx: &Context, args: &SrArgs, out: &Path) -> Result<()> {
    let (params, manifest) = load_checkpoint(&args.checkpoint)?;
    let a = io::load_abundance(&args.abundance)?;
    let sr = super_resolve(&params, &a, args.sigma, manifest.scale)?;
    create_dir(out)?;
    io::save_abundance(&sr, out.join(&args.name))?;
    ctx.progress(&format!("super-resolved to {}x{}x{}", sr.height(), sr.width(), sr.materials()));
    Ok(())
}

pub fn reconstruct_cmd(ctx: &Context, args: &ReconstructArgs, out: &Path) -> Result<()> {
    let a = io::load_abundance(&args.abundance)?;
    let s = io::load_endmembers(&args.endmembers)?;
    let mut cube = dlsr::reconstruct(&a, &s)?;
    if let Some(path) = &args.offset {
        let rows = io::read_csv_rows(path)?;
        let offset = rows.first().filter(|r| r.len() == cube.bands()).ok_or_else(|| Error::Format {
            path: path.clone(),
            offset: 0,
            message: format!("expected one row of {} values", cube.bands()),
        })?;
        for p in 0..cube.pixels() {
            for (v, o) in cube.pixel_mut(p).iter_mut().zip(offset) {
                *v += o;
            }
        }
    }
    create_dir(out)?;
    io::save_cube(&cube, out.join(&args.name))?;
    ctx.progress(&format!("reconstructed {}x{}x{}", cube.height(), cube.width(), cube.bands()));
    Ok(())
}

pub fn eval_cmd(_ctx: &Context, args: &EvalArgs) -> Result<()> {
    let reference = io::load_cube(&args.reference)?;
    let test = io::load_cube(&args.test)?;
    let report = dlsr::evaluate(&reference, &test, args.scale)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

pub fn phantom_cmd(ctx: &Context, args: &PhantomArgs, out: &Path) -> Result<()> {
    let config = PhantomConfig {
        blur_sigma: args.blur_sigma,
        ..PhantomConfig::new(
            args.height,
            args.width,
            args.bands,
            args.materials,
            args.scale,
            ctx.seed_or_config()?,
        )
    };
    let phantom = generate_phantom(&config)?;
    phantom.save(out)?;
    write_text(
        &out.join("phantom.json"),
        &serde_json::to_string_pretty(&config).expect("config serializes"),
    )?;
    ctx.progress(&format!("wrote phantom to {}", out.display()));
    Ok(())
}

pub fn pipeline_cmd(ctx: &Context, args: &PipelineArgs, out: &Path) -> Result<()> {
    let mut v = ctx.config.clone();
    let mut put = |k: &str, val: Value| {
        v.insert(k.to_string(), val);
    };
    if let Some(p) = &args.input {
        put("input", Value::from(p.to_string_lossy().into_owned()));
    }
    if let Some(p) = &args.reference {
        put("reference", Value::from(p.to_string_lossy().into_owned()));
    }
    if let Some(s) = args.scale {
        put("scale", s.into());
    }
    if let Some(m) = args.materials {
        put("materials", m.into());
    }
    if let Some(b) = args.backend {
        put("backend", b.to_string().into());
    }
    if let Some(h) = args.sigma_hint {
        put("sigma_hint", h.into());
    }
    if let Some(s) = ctx.seed {
        put("seed", s.into());
    }
    for key in ["input", "scale"] {
        if !v.contains_key(key) {
            return Err(Error::Config(format!("`{key}` must be given in --config or as a flag")));
        }
    }
    let mut config: PipelineConfig =
        serde_json::from_value(Value::Object(v)).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
    if let Some(n) = args.count {
        config.synthetic.count = n;
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(f) = args.features {
        config.train.features = f;
    }
    if let Some(b) = args.blocks {
        config.train.blocks = b;
    }
    apply_noise(&mut config.noise, &args.noise);

    let outcome = run_pipeline(&config, out, &mut |msg| ctx.progress(msg))?;
    ctx.progress(&format!("manifest {}", outcome.manifest.hash()));
    if let Some(ev) = &outcome.manifest.evaluation {
        println!("{}", serde_json::to_string(ev).expect("report serializes"));
    }
    Ok(())
}
