use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ReceptiveMode;
use crate::problems::ProblemKind;
use crate::trainer::TrainConfig;
use crate::weighting::WeightConfig;

/// Grid size written `<nh>x<nw>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub nh: usize,
    pub nw: usize,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nh, self.nw)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed resolution '{s}', expected <nh>x<nw>"));
        let (a, b) = s.trim().split_once('x').ok_or_else(bad)?;
        let nh: usize = a.parse().map_err(|_| bad())?;
        let nw: usize = b.parse().map_err(|_| bad())?;
        if nh < 3 || nw < 3 {
            return Err(Error::Config(format!("resolution {s} is below the 3x3 minimum")));
        }
        Ok(Self { nh, nw })
    }
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub resolution: Resolution,
    pub acc_order: usize,
    pub channels: usize,
    pub mode: ReceptiveMode,
    pub weights: WeightConfig,
    pub epochs_adam: usize,
    pub lr: f64,
    pub epochs_lbfgs: usize,
    pub history: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub output: PathBuf,
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("problem", &["name", "resolution", "acc_order"]),
    ("model", &["channels", "mode"]),
    ("train", &["weights", "epochs_adam", "lr", "epochs_lbfgs", "history", "eval_every", "seed"]),
    ("output", &["dir"]),
];

/// Accepted shorthands for keys.
fn canonical(key: &str) -> &str {
    match key {
        "problem" => "name",
        "fd" | "acc" => "acc_order",
        "ch" => "channels",
        "res" => "resolution",
        "out" | "output" => "dir",
        "adam" => "epochs_adam",
        "lbfgs" => "epochs_lbfgs",
        other => other,
    }
}

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

impl RunConfig {
    /// Defaults for `problem`: its usual weights and a desk-scale budget.
    pub fn new(problem: &str) -> Result<Self> {
        let kind = ProblemKind::by_name(problem)?;
        let (resolution, weights) = match kind {
            ProblemKind::Linear(_) => (Resolution { nh: 32, nw: 64 }, WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0])),
            ProblemKind::NavierStokes(_) => (Resolution { nh: 16, nw: 192 }, WeightConfig::Dimensional(vec![128.0, 1.0])),
        };
        let t = TrainConfig::default();
        Ok(Self {
            problem: problem.to_string(),
            resolution,
            acc_order: t.acc_order,
            channels: 4,
            mode: ReceptiveMode::Mrf,
            weights,
            epochs_adam: t.epochs_adam,
            lr: t.lr,
            epochs_lbfgs: t.epochs_lbfgs,
            history: t.history,
            eval_every: t.eval_every,
            seed: t.seed,
            output: PathBuf::from(format!("runs/{}", problem.replace(':', "-"))),
        })
    }

    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical(key.trim());
        let value = value.trim();
        match key {
            "name" => {
                ProblemKind::by_name(value)?;
                self.problem = value.to_string();
            }
            "resolution" => self.resolution = value.parse()?,
            "acc_order" => self.acc_order = parse_num(key, value)?,
            "channels" => self.channels = parse_num(key, value)?,
            "mode" => self.mode = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "weights" => self.weights = value.parse()?,
            "epochs_adam" => self.epochs_adam = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "epochs_lbfgs" => self.epochs_lbfgs = parse_num(key, value)?,
            "history" => self.history = parse_num(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "dir" => self.output = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match canonical(key.trim()) {
            "name" => self.problem.clone(),
            "resolution" => self.resolution.to_string(),
            "acc_order" => self.acc_order.to_string(),
            "channels" => self.channels.to_string(),
            "mode" => self.mode.to_string(),
            "weights" => self.weights.to_string(),
            "epochs_adam" => self.epochs_adam.to_string(),
            "lr" => format!("{:e}", self.lr),
            "epochs_lbfgs" => self.epochs_lbfgs.to_string(),
            "history" => self.history.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "seed" => self.seed.to_string(),
            "dir" => self.output.display().to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs_adam: self.epochs_adam,
            lr: self.lr,
            epochs_lbfgs: self.epochs_lbfgs,
            history: self.history,
            weights: self.weights.clone(),
            acc_order: self.acc_order,
            seed: self.seed,
            eval_every: self.eval_every,
            checkpoint_dir: Some(self.output.clone()),
        }
    }

    /// Checks that do not touch the file system.
    pub fn validate(&self) -> Result<()> {
        ProblemKind::by_name(&self.problem)?;
        if !(2..=8).contains(&self.acc_order) || !self.acc_order.is_multiple_of(2) {
            return Err(Error::Config(format!("acc_order must be 2, 4, 6 or 8, got {}", self.acc_order)));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        let half = self.acc_order / 2;
        if self.resolution.nh <= half || self.resolution.nw <= half {
            return Err(Error::Config(format!(
                "resolution {} too small for accuracy order {}",
                self.resolution, self.acc_order
            )));
        }
        self.train_config().validate()
    }

    /// Normalised text form; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, (section, keys)) in SECTIONS.iter().enumerate() {
            if i > 0 {
                s.push('\n');
            }
            s.push_str(&format!("[{section}]\n"));
            for key in keys.iter() {
                s.push_str(&format!("{key} = {}\n", self.get(key).expect("known key")));
            }
        }
        s
    }

    /// Parse the sectioned `key = value` format. `#` starts a comment.
    /// Keys not given keep the problem defaults; `name` must come first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(Error::Config(format!("line {}: unknown section [{name}]", n + 1)));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = canonical(k.trim());
            let home = section_of(key).ok_or_else(|| Error::Config(format!("line {}: unknown key '{}'", n + 1, k.trim())))?;
            if let Some(s) = &section {
                if s != home {
                    return Err(Error::Config(format!("line {}: key '{key}' belongs in [{home}]", n + 1)));
                }
            }
            pairs.push((key.to_string(), v.trim().to_string()));
        }
        let name = pairs
            .iter()
            .find(|(k, _)| k == "name")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Config("config has no problem name".into()))?;
        let mut cfg = Self::new(&name)?;
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_strings() {
        assert_eq!("32x64".parse::<Resolution>().unwrap(), Resolution { nh: 32, nw: 64 });
        for bad in ["32", "32x", "x64", "32*64", "2x64", "-1x4"] {
            assert!(matches!(bad.parse::<Resolution>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::new("elliptic").unwrap();
        c.set("fd", "6").unwrap();
        c.set("mode", "fixed:5").unwrap();
        c.set("weights", "dynamic:0.1,1").unwrap();
        c.set("lr", "0.001").unwrap();
        let text = c.to_text();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn partial_config_takes_problem_defaults() {
        let c = RunConfig::parse("[problem]\nname = ns-swirl\n").unwrap();
        assert_eq!(c.weights, WeightConfig::Dimensional(vec![128.0, 1.0]));
        assert_eq!(c.resolution, Resolution { nh: 16, nw: 192 });
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "[problem]\nname = elliptic\nresolution = 32by64\n",
            "[problem]\nname = nope\n",
            "[problem]\nname = elliptic\n[model]\nepochs_adam = 3\n",
            "[problem]\nname = elliptic\nflavour = 1\n",
            "[train]\nseed = 1\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
        let mut c = RunConfig::new("elliptic").unwrap();
        c.acc_order = 5;
        assert!(c.validate().is_err());
    }
}
