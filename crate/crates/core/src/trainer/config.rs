use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foresight::{ForesightConfig, HorizonMode, PerturbTarget, Selection};
use crate::numkernel::AdamConfig;
use crate::shlstm::{ModelConfig, StepMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Foresight refinement before every prediction.
    Ufrnn,
    /// Plain stochastic hierarchical LSTM.
    Sh,
    /// Adaptive Gaussian noise on the hidden state, no selection.
    ShNoise,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ufrnn, Variant::Sh, Variant::ShNoise];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ufrnn => "ufrnn",
            Variant::Sh => "sh",
            Variant::ShNoise => "sh_noise",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ufrnn" => Ok(Variant::Ufrnn),
            "sh" => Ok(Variant::Sh),
            "sh_noise" => Ok(Variant::ShNoise),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected ufrnn, sh or sh_noise)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
    /// Write measured seconds into the metrics file instead of 0.
    pub record_wall_time: bool,
    pub model: ModelConfig,
    /// Off turns the ufrnn variant into sh (ablation switch).
    pub foresight_enabled: bool,
    pub foresight: ForesightConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            variant: Variant::Ufrnn,
            epochs: 3000,
            batch_size: 5,
            seed: 0,
            checkpoint_every: 100,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            record_wall_time: false,
            model: ModelConfig::default(),
            foresight_enabled: true,
            foresight: ForesightConfig::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    /// The variant actually run, after the foresight switch.
    pub fn effective_variant(&self) -> Variant {
        if self.variant == Variant::Ufrnn && !self.foresight_enabled {
            Variant::Sh
        } else {
            self.variant
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config("lr and clip_norm must be positive".into()));
        }
        self.model.validate()?;
        self.foresight.validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "variant" => self.variant = v.parse()?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "clip_norm" => self.clip_norm = num(key, v)?,
            "record_wall_time" => self.record_wall_time = boolean(key, v)?,
            "model.lower_hidden" => {
                let n = num(key, v)?;
                self.model.modalities.iter_mut().for_each(|m| m.lower_hidden = n);
            }
            "model.shared_hidden" => self.model.shared_hidden = num(key, v)?,
            "model.tau_low" => self.model.tau_low = num(key, v)?,
            "model.tau_shared" => self.model.tau_shared = num(key, v)?,
            "model.t_max" => self.model.t_max = num(key, v)?,
            "model.step_mode" => {
                self.model.step_mode = match v {
                    "fixed" => StepMode::Fixed,
                    "proxy" => StepMode::Proxy,
                    _ => return Err(Error::Config(format!("{key}: expected fixed or proxy, got {v:?}"))),
                }
            }
            "foresight.enabled" => self.foresight_enabled = boolean(key, v)?,
            "foresight.n_candidates" => self.foresight.n_candidates = num(key, v)?,
            "foresight.t_max" => self.foresight.t_max = num(key, v)?,
            "foresight.sigma_min" => self.foresight.sigma_min = num(key, v)?,
            "foresight.sigma_max" => self.foresight.sigma_max = num(key, v)?,
            "foresight.include_unperturbed" => self.foresight.include_unperturbed = boolean(key, v)?,
            "foresight.perturb_target" => {
                self.foresight.perturb_target = match v {
                    "shared_h" => PerturbTarget::SharedH,
                    "shared_hc" => PerturbTarget::SharedHc,
                    "all_h" => PerturbTarget::AllH,
                    _ => return Err(Error::Config(format!("{key}: expected shared_h, shared_hc or all_h, got {v:?}"))),
                }
            }
            "foresight.horizon" => {
                self.foresight.horizon = match v {
                    "fixed" => HorizonMode::Fixed,
                    "effective" => HorizonMode::Effective,
                    _ => return Err(Error::Config(format!("{key}: expected fixed or effective, got {v:?}"))),
                }
            }
            "foresight.selection" => {
                self.foresight.selection = match v.split_once(':') {
                    None if v == "argmax" => Selection::Argmax,
                    Some(("fixed", k)) => Selection::Fixed(num(key, k)?),
                    _ => return Err(Error::Config(format!("{key}: expected argmax or fixed:K, got {v:?}"))),
                }
            }
            "foresight.variance_trigger" => {
                self.foresight.variance_trigger = if v == "none" { None } else { Some(num(key, v)?) };
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a `key = value` file on top of the defaults. Blank lines and
    /// `#` comments are ignored; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainingConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = TrainingConfig::parse("# toy\nvariant = sh_noise\nepochs = 200\nforesight.n_candidates = 3 # fewer\nforesight.selection = fixed:1\n").unwrap();
        assert_eq!(cfg.variant, Variant::ShNoise);
        assert_eq!(cfg.epochs, 200);
        assert_eq!(cfg.batch_size, 5);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.foresight.n_candidates, 3);
        assert_eq!(cfg.foresight.selection, Selection::Fixed(1));
        assert_eq!(cfg.checkpoint_every, 100);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = TrainingConfig::parse("epochs = 10\nfoo.bar = 1\n").unwrap_err();
        assert!(err.to_string().contains("foo.bar"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn bad_values() {
        assert!(TrainingConfig::parse("epochs = many").is_err());
        assert!(TrainingConfig::parse("epochs = 0").is_err());
        assert!(TrainingConfig::parse("variant = lstm").is_err());
        assert!(TrainingConfig::parse("just words").is_err());
    }

    #[test]
    fn foresight_switch() {
        let cfg = TrainingConfig::parse("foresight.enabled = false").unwrap();
        assert_eq!(cfg.effective_variant(), Variant::Sh);
    }
}
