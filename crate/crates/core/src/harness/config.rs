//! Flat `section.key = value` configuration files. `#` starts a comment.
//! Every key must be consumed by the loader; leftovers are reported as
//! unknown-key errors rather than silently ignored.

use std::collections::BTreeMap;

use crate::dynamics::{Scheme, SimConfig};
use crate::error::{Error, Result};
use crate::harness::study::{DensitySpec, Functional, StudySpec};
use crate::kernels::{CommWeight, Domain, InteractionKernel};

#[derive(Debug, Clone)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() || !key.contains('.') {
                return Err(Error::InvalidConfig(format!(
                    "line {}: keys use the form `section.key`",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate key `{key}`")));
            }
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("`{key}` = `{v}` is not a number"))),
        }
    }

    fn need_f64(&mut self, key: &str) -> Result<f64> {
        self.take_f64(key)?
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("`{key}` = `{v}` is not an integer"))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::InvalidConfig(format!("unknown key `{key}`")));
        }
        Ok(())
    }
}

/// A parsed configuration: the simulation block plus the optional initial
/// density and study blocks.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub sim: SimConfig,
    pub density: DensitySpec,
    pub study: Option<StudyBlock>,
}

#[derive(Debug, Clone)]
pub struct StudyBlock {
    pub epsilons: Vec<f64>,
    pub p: f64,
    pub functionals: Vec<Functional>,
    pub workers: usize,
}

impl LoadedConfig {
    pub fn study_spec(&self) -> Result<StudySpec> {
        let block = self
            .study
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config has no study.* section".into()))?;
        StudySpec::new(
            self.sim.clone(),
            self.density.clone(),
            block.epsilons.clone(),
            block.p,
            block.functionals.clone(),
            block.workers,
        )
    }
}

fn parse_domain(raw: &mut RawConfig) -> Result<Domain> {
    let kind = raw.take("domain.kind").unwrap_or_else(|| "euclidean".into());
    let dim = raw.take_usize("domain.dim")?.unwrap_or(1);
    match kind.as_str() {
        "euclidean" => {
            if raw.take("domain.period").is_some() {
                return Err(Error::InvalidConfig(
                    "`domain.period` only applies to torus domains".into(),
                ));
            }
            Domain::euclidean(dim)
        }
        "torus" => {
            let period = raw.need_f64("domain.period")?;
            Domain::torus(dim, period)
        }
        other => Err(Error::InvalidConfig(format!("unknown domain kind `{other}`"))),
    }
}

fn parse_kernel(raw: &mut RawConfig, dim: usize) -> Result<InteractionKernel> {
    let family = raw.take("kernel.family").unwrap_or_else(|| "zero".into());
    match family.as_str() {
        "gaussian" => Ok(InteractionKernel::Gaussian {
            amplitude: raw.need_f64("kernel.amplitude")?,
            width: raw.need_f64("kernel.width")?,
        }),
        "morse_smoothed" => Ok(InteractionKernel::MorseSmoothed {
            c_rep: raw.need_f64("kernel.c_rep")?,
            l_rep: raw.need_f64("kernel.l_rep")?,
            c_att: raw.need_f64("kernel.c_att")?,
            l_att: raw.need_f64("kernel.l_att")?,
        }),
        "coulomb" => match dim {
            1 => Ok(InteractionKernel::Coulomb1d),
            2 => Ok(InteractionKernel::Coulomb2d),
            3 => Ok(InteractionKernel::Coulomb3d),
            d => Err(Error::InvalidConfig(format!("no Coulomb kernel in dimension {d}"))),
        },
        "zero" => Ok(InteractionKernel::Zero),
        other => Err(Error::InvalidConfig(format!("unknown kernel family `{other}`"))),
    }
}

fn parse_comm(raw: &mut RawConfig) -> Result<CommWeight> {
    let family = raw.take("comm.family").unwrap_or_else(|| "constant".into());
    match family.as_str() {
        "constant" => Ok(CommWeight::Constant { k: raw.take_f64("comm.k")?.unwrap_or(0.0) }),
        "cucker_smale" => Ok(CommWeight::CuckerSmale {
            k: raw.need_f64("comm.k")?,
            beta: raw.need_f64("comm.beta")?,
        }),
        other => Err(Error::InvalidConfig(format!("unknown communication family `{other}`"))),
    }
}

fn parse_density(raw: &mut RawConfig) -> Result<DensitySpec> {
    let kind = raw.take("init.density").unwrap_or_else(|| "gaussian".into());
    match kind.as_str() {
        "gaussian" => Ok(DensitySpec::Gaussian {
            center: raw.take_f64("init.center")?.unwrap_or(0.0),
            spread: raw.take_f64("init.spread")?.unwrap_or(1.0),
        }),
        "uniform" => Ok(DensitySpec::Uniform {
            lo: raw.take_f64("init.lo")?.unwrap_or(-1.0),
            hi: raw.take_f64("init.hi")?.unwrap_or(1.0),
        }),
        "two_cluster" => Ok(DensitySpec::TwoCluster {
            separation: raw.take_f64("init.separation")?.unwrap_or(2.0),
            spread: raw.take_f64("init.spread")?.unwrap_or(0.25),
        }),
        other => Err(Error::InvalidConfig(format!("unknown density `{other}`"))),
    }
}

fn parse_study(raw: &mut RawConfig) -> Result<Option<StudyBlock>> {
    let epsilons = match raw.take("study.epsilons") {
        None => {
            for key in ["study.p", "study.functionals", "study.workers"] {
                if raw.take(key).is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "`{key}` requires `study.epsilons`"
                    )));
                }
            }
            return Ok(None);
        }
        Some(list) => list
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("bad epsilon `{}` in study.epsilons", tok.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    let p = raw.take_f64("study.p")?.unwrap_or(2.0);
    let functionals = match raw.take("study.functionals") {
        None => Functional::default_set(),
        Some(list) => list
            .split(',')
            .map(|tok| Functional::from_key(tok.trim()))
            .collect::<Result<Vec<_>>>()?,
    };
    let workers = raw.take_usize("study.workers")?.unwrap_or(4).max(1);
    Ok(Some(StudyBlock { epsilons, p, functionals, workers }))
}

pub fn load_str(text: &str) -> Result<LoadedConfig> {
    let mut raw = RawConfig::parse(text)?;
    let domain = parse_domain(&mut raw)?;
    let kernel = parse_kernel(&mut raw, domain.dim())?;
    let comm = parse_comm(&mut raw)?;
    let sim = SimConfig {
        epsilon: raw.take_f64("sim.epsilon")?.unwrap_or(0.1),
        gamma: raw.need_f64("sim.gamma")?,
        n: raw
            .take_usize("sim.n")?
            .ok_or_else(|| Error::InvalidConfig("missing required key `sim.n`".into()))?,
        domain,
        kernel,
        comm,
        t_final: raw.need_f64("sim.t_final")?,
        dt: raw.need_f64("sim.dt")?,
        scheme: match raw.take("sim.scheme").as_deref() {
            None | Some("imex_exact_damping") => Scheme::ImexExactDamping,
            Some("explicit_rk2") => Scheme::ExplicitRk2,
            Some(other) => {
                return Err(Error::InvalidConfig(format!("unknown scheme `{other}`")))
            }
        },
        seed: raw
            .take("sim.seed")
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::InvalidConfig(format!("`sim.seed` = `{v}` is not an integer")))
            })
            .transpose()?
            .unwrap_or(0),
        snapshot_stride: raw.take_usize("sim.snapshot_stride")?,
    };
    let density = parse_density(&mut raw)?;
    let study = parse_study(&mut raw)?;
    raw.finish()?;
    sim.validate()?;
    Ok(LoadedConfig { sim, density, study })
}

pub fn load_file(path: &std::path::Path) -> Result<LoadedConfig> {
    load_str(&std::fs::read_to_string(path)?)
}
