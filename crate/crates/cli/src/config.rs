//! Run configuration: defaults, then a `key = value` file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use tokendrop_core::config::{parse_key_values, parse_list, parse_value};
use tokendrop_core::pipeline::{Scheme, StageCostModel, ToyTaskConfig};
use tokendrop_core::{CompactionNetwork, CostTable, DropPlan, McnParams, NetProfile, OmselConfig, RingParams};

use crate::error::{CliError, CliResult};

/// Score distribution fed to the median-selection benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreInput {
    /// Column sums of MCN over random attention.
    Mcn,
    /// Uniform reals in `[-8, 8)`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileChoice {
    All,
    Named(String),
    Custom { bandwidth: f64, latency: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub ell: u32,
    pub frac_bits: u32,
    pub mcn: McnParams,
    pub omsel: OmselConfig,
    pub input: ScoreInput,
    pub network: CompactionNetwork,
    /// Vector lengths for the selection benchmark.
    pub n: Vec<usize>,
    pub trials: u32,
    /// Initial token counts for the pipeline model.
    pub m0: Vec<usize>,
    pub layers: usize,
    pub drop_layers: Vec<usize>,
    pub profile: ProfileChoice,
    pub schemes: Vec<Scheme>,
    pub calibration: Option<PathBuf>,
    pub out: PathBuf,
    pub trace: bool,
    pub workers: usize,
    pub toy: ToyTaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            ell: 64,
            frac_bits: 12,
            mcn: McnParams::default(),
            omsel: OmselConfig::default(),
            input: ScoreInput::Mcn,
            network: CompactionNetwork::default(),
            n: vec![8, 16, 32, 64, 128, 256],
            trials: 100,
            m0: vec![128],
            layers: 12,
            drop_layers: vec![1, 5, 8],
            profile: ProfileChoice::All,
            schemes: Scheme::ALL.to_vec(),
            calibration: None,
            out: PathBuf::from("out"),
            trace: false,
            workers: 0,
            toy: ToyTaskConfig::default(),
        }
    }
}

fn cfg_err(e: tokendrop_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("invalid value for {key}: {value:?}"))),
    }
}

pub fn parse_schemes(value: &str) -> CliResult<Vec<Scheme>> {
    if value == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim) {
        let s: Scheme = part.parse().map_err(cfg_err)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out.sort();
    Ok(out)
}

impl RunConfig {
    /// Applies one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_value(key, v).map_err(cfg_err)?,
            "ring.ell" => self.ell = parse_value(key, v).map_err(cfg_err)?,
            "ring.frac_bits" => self.frac_bits = parse_value(key, v).map_err(cfg_err)?,
            "mcn.n_exp" => self.mcn.n_exp = parse_value(key, v).map_err(cfg_err)?,
            "mcn.offset" => self.mcn.offset = parse_value(key, v).map_err(cfg_err)?,
            "omsel.constant_n" => self.omsel.constant_n_division = parse_bool(key, v)?,
            "omsel.max_rounds" => {
                self.omsel.max_rounds = if v == "auto" { None } else { Some(parse_value(key, v).map_err(cfg_err)?) }
            }
            "omsel.input" => {
                self.input = match v {
                    "mcn" => ScoreInput::Mcn,
                    "uniform" => ScoreInput::Uniform,
                    _ => return Err(CliError::Config(format!("invalid value for {key}: {v:?}"))),
                }
            }
            "compaction" => self.network = v.parse().map_err(cfg_err)?,
            "n" => self.n = parse_list(key, v).map_err(cfg_err)?,
            "trials" => self.trials = parse_value(key, v).map_err(cfg_err)?,
            "plan.m0" => self.m0 = parse_list(key, v).map_err(cfg_err)?,
            "plan.layers" => self.layers = parse_value(key, v).map_err(cfg_err)?,
            "plan.drop_layers" => self.drop_layers = parse_list(key, v).map_err(cfg_err)?,
            "profile" => {
                self.profile = match v {
                    "all" => ProfileChoice::All,
                    "custom" => match self.profile {
                        ProfileChoice::Custom { .. } => self.profile.clone(),
                        _ => ProfileChoice::Custom { bandwidth: f64::NAN, latency: f64::NAN },
                    },
                    name => ProfileChoice::Named(name.to_string()),
                }
            }
            "net.bandwidth" | "net.latency" => {
                let x: f64 = parse_value(key, v).map_err(cfg_err)?;
                let (mut bandwidth, mut latency) = match self.profile {
                    ProfileChoice::Custom { bandwidth, latency } => (bandwidth, latency),
                    _ => (f64::NAN, f64::NAN),
                };
                if key == "net.bandwidth" {
                    bandwidth = x;
                } else {
                    latency = x;
                }
                self.profile = ProfileChoice::Custom { bandwidth, latency };
            }
            "scheme" => self.schemes = parse_schemes(v)?,
            "calibration" => self.calibration = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "trace" => self.trace = parse_bool(key, v)?,
            "workers" => self.workers = parse_value(key, v).map_err(cfg_err)?,
            "toy.m" => self.toy.m = parse_value(key, v).map_err(cfg_err)?,
            "toy.signal" => self.toy.signal = parse_value(key, v).map_err(cfg_err)?,
            "toy.heads" => self.toy.heads = parse_value(key, v).map_err(cfg_err)?,
            "toy.boost" => self.toy.boost = parse_value(key, v).map_err(cfg_err)?,
            "toy.sinks" => self.toy.sinks = parse_value(key, v).map_err(cfg_err)?,
            "toy.outlier_rate" => self.toy.outlier_rate = parse_value(key, v).map_err(cfg_err)?,
            "toy.trials" => self.toy.trials = parse_value(key, v).map_err(cfg_err)?,
            _ => return Err(CliError::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (k, v) in parse_key_values(text).map_err(cfg_err)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> CliResult<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn ring(&self) -> CliResult<RingParams> {
        RingParams::new(self.ell, self.frac_bits).map_err(cfg_err)
    }

    pub fn profiles(&self) -> CliResult<Vec<NetProfile>> {
        match &self.profile {
            ProfileChoice::All => Ok(NetProfile::presets().to_vec()),
            ProfileChoice::Named(name) => NetProfile::by_name(name)
                .map(|p| vec![p])
                .ok_or_else(|| CliError::Config(format!("unknown profile {name:?}"))),
            ProfileChoice::Custom { bandwidth, latency } => {
                if bandwidth.is_nan() || latency.is_nan() {
                    return Err(CliError::Config("custom profile needs net.bandwidth and net.latency".into()));
                }
                Ok(vec![NetProfile::new("custom", *bandwidth, *latency).map_err(cfg_err)?])
            }
        }
    }

    pub fn plan(&self, m0: usize) -> CliResult<DropPlan> {
        DropPlan::new(m0, self.layers, self.drop_layers.clone()).map_err(cfg_err)
    }

    /// Stage model with the ring's cost table and the calibration file, if any.
    pub fn cost_model(&self) -> CliResult<StageCostModel> {
        let mut model =
            StageCostModel { costs: CostTable::for_ring(&self.ring()?), mcn: self.mcn, ..StageCostModel::default() };
        if let Some(path) = &self.calibration {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            for (k, v) in parse_key_values(&text).map_err(cfg_err)? {
                model.set(&k, &v).map_err(cfg_err)?;
            }
        }
        model.validate().map_err(cfg_err)?;
        Ok(model)
    }

    /// Checks every field; nothing runs or is written before this passes.
    pub fn validate(&self) -> CliResult<()> {
        self.ring()?;
        if self.mcn.n_exp == 0 {
            return Err(CliError::Config("mcn.n_exp must be >= 1".into()));
        }
        if !self.mcn.offset.is_finite() {
            return Err(CliError::Config("mcn.offset must be finite".into()));
        }
        if self.omsel.max_rounds == Some(0) {
            return Err(CliError::Config("omsel.max_rounds must be >= 1".into()));
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 2 || n % 2 != 0) {
            return Err(CliError::Config("n must list even lengths >= 2".into()));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be >= 1".into()));
        }
        if self.m0.is_empty() {
            return Err(CliError::Config("plan.m0 must not be empty".into()));
        }
        for &m0 in &self.m0 {
            self.plan(m0)?;
        }
        if self.schemes.is_empty() {
            return Err(CliError::Config("no scheme selected".into()));
        }
        self.profiles()?;
        self.cost_model()?;
        let toy_depths = tokendrop_core::pipeline::DropDepth::ALL;
        for d in toy_depths {
            self.toy.validate(d).map_err(cfg_err)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 9\nn = 8, 16\nscheme = pre, baseline\nprofile = wan\nomsel.max_rounds = 5\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n, vec![8, 16]);
        assert_eq!(cfg.schemes, vec![Scheme::Baseline, Scheme::PreDrop]);
        assert_eq!(cfg.omsel.max_rounds, Some(5));
        assert_eq!(cfg.profiles().unwrap()[0].name, "wan");
        cfg.validate().unwrap();
        cfg.set("seed", "10").unwrap();
        assert_eq!(cfg.seed, 10);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("seed", "-1").is_err());
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("scheme", "sideways").is_err());
        cfg.set("n", "7").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("profile", "custom").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("net.bandwidth", "1e9").unwrap();
        cfg.set("net.latency", "0.01").unwrap();
        cfg.validate().unwrap();
        let mut cfg = RunConfig::default();
        cfg.set("ring.ell", "20").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("plan.drop_layers", "1, 13").unwrap();
        assert!(cfg.validate().is_err());
    }
}
