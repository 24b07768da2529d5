//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! [sim]
//! pattern = default
//! scales = 1, 4, 16
//! bit_depth = 8
//!
//! [train]
//! iterations = 3000
//! seed = 7
//!
//! [net]
//! base_channels = 8
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use autonet::UpsampleMode;

use crate::error::{Error, Result};
use crate::imgcore::parse_pattern;
use crate::pipeline::{NetSettings, TrainConfig};
use crate::sim::SimConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?;
                section = name.trim().to_string();
                ini.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            ini.sections
                .entry(section.clone())
                .or_default()
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ini)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse {v:?}"))),
        }
    }

    /// Rejects keys the loader does not know about, to catch typos.
    fn check_known(&self, known: &[(&str, &[&str])]) -> Result<()> {
        for (sec, keys) in &self.sections {
            let allowed = known
                .iter()
                .find(|(s, _)| s == sec)
                .ok_or_else(|| Error::Config(format!("unknown section [{sec}]")))?
                .1;
            if let Some(k) = keys.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::Config(format!("unknown key [{sec}] {k}")));
            }
        }
        Ok(())
    }
}

/// Simulation, training and network settings for one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub net: NetSettings,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

pub fn parse_scales(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad exposure scale {t:?}")))
        })
        .collect()
}

impl RunConfig {
    pub fn from_ini(text: &str) -> Result<Self> {
        let ini = Ini::parse(text)?;
        ini.check_known(&[
            ("", &[]),
            ("sim", &["pattern", "scales", "bit_depth"]),
            (
                "train",
                &[
                    "patch_size",
                    "batch_size",
                    "iterations",
                    "lr",
                    "beta1",
                    "beta2",
                    "seed",
                    "augment",
                    "epsilon_l",
                    "lambda",
                ],
            ),
            ("net", &["depth", "base_channels", "adapt_width", "upsample"]),
        ])?;
        let mut cfg = RunConfig::default();
        if let Some(p) = ini.get("sim", "pattern") {
            cfg.sim.pattern = parse_pattern(p)?;
        }
        if let Some(s) = ini.get("sim", "scales") {
            cfg.sim.exposure_scales = parse_scales(s)?;
        }
        if let Some(b) = ini.parsed("sim", "bit_depth")? {
            cfg.sim.bit_depth = b;
        }
        let t = &mut cfg.train;
        macro_rules! set {
            ($sec:literal, $key:literal, $field:expr) => {
                if let Some(v) = ini.parsed($sec, $key)? {
                    $field = v;
                }
            };
        }
        set!("train", "patch_size", t.patch_size);
        set!("train", "batch_size", t.batch_size);
        set!("train", "iterations", t.iterations);
        set!("train", "lr", t.lr);
        set!("train", "beta1", t.beta1);
        set!("train", "beta2", t.beta2);
        set!("train", "seed", t.seed);
        set!("train", "epsilon_l", t.epsilon_l);
        set!("train", "lambda", t.lambda);
        if let Some(a) = ini.get("train", "augment") {
            t.augment = parse_bool(a).ok_or_else(|| Error::Config(format!("[train] augment: {a:?}")))?;
        }
        let n = &mut cfg.net;
        set!("net", "depth", n.depth);
        set!("net", "base_channels", n.base_channels);
        set!("net", "adapt_width", n.adapt_width);
        if let Some(u) = ini.get("net", "upsample") {
            n.upsample = UpsampleMode::parse(u).ok_or_else(|| Error::Config(format!("[net] upsample: {u:?}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.train.validate()?;
        self.net.validate()
    }

    /// Canonical text form, parseable by [`RunConfig::from_ini`].
    pub fn to_ini(&self) -> String {
        let scales: Vec<String> = self.sim.exposure_scales.iter().map(|s| s.to_string()).collect();
        let t = &self.train;
        let n = &self.net;
        format!(
            "[sim]\npattern = {}\nscales = {}\nbit_depth = {}\n\n\
             [train]\npatch_size = {}\nbatch_size = {}\niterations = {}\nlr = {}\nbeta1 = {}\nbeta2 = {}\n\
             seed = {}\naugment = {}\nepsilon_l = {}\nlambda = {}\n\n\
             [net]\ndepth = {}\nbase_channels = {}\nadapt_width = {}\nupsample = {}\n",
            self.sim.pattern,
            scales.join(", "),
            self.sim.bit_depth,
            t.patch_size,
            t.batch_size,
            t.iterations,
            t.lr,
            t.beta1,
            t.beta2,
            t.seed,
            t.augment,
            t.epsilon_l,
            t.lambda,
            n.depth,
            n.base_channels,
            n.adapt_width,
            n.upsample.as_str()
        )
    }
}

/// Run metadata stored after the architecture lines of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub sim: SimConfig,
    pub epsilon_l: f64,
    /// `ldr`, `ln` or `linear`.
    pub stage: String,
}

impl RunConfig {
    pub fn checkpoint_echo(&self, stage: &str) -> String {
        let scales: Vec<String> = self.sim.exposure_scales.iter().map(|s| s.to_string()).collect();
        format!(
            "sim.pattern={}\nsim.scales={}\nsim.bit_depth={}\n{}stage={stage}\n",
            self.sim.pattern,
            scales.join(","),
            self.sim.bit_depth,
            self.train.echo()
        )
    }
}

impl CheckpointMeta {
    pub fn from_echo(echo: &str) -> Result<Self> {
        let map = autonet::checkpoint::parse_echo(echo);
        let get = |k: &str| map.get(k).ok_or_else(|| Error::Config(format!("checkpoint lacks {k}")));
        let sim = SimConfig {
            pattern: parse_pattern(get("sim.pattern")?)?,
            exposure_scales: parse_scales(get("sim.scales")?)?,
            bit_depth: get("sim.bit_depth")?
                .parse()
                .map_err(|_| Error::Config("checkpoint has a bad sim.bit_depth".into()))?,
        };
        sim.validate()?;
        let epsilon_l = get("train.epsilon_l")?
            .parse()
            .map_err(|_| Error::Config("checkpoint has a bad train.epsilon_l".into()))?;
        Ok(Self {
            sim,
            epsilon_l,
            stage: get("stage")?.clone(),
        })
    }
}
