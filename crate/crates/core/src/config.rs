//! Line-oriented `key=value` description of a weight, a domain and a grid.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{Domain, Grading, RadialGrid, Theta, Weight, DEFAULT_ELEMENTS, DEFAULT_RATIO};

pub const KEYS: [&str; 12] = [
    "n", "p0", "beta", "k", "theta", "theta_c", "theta_m", "domain", "R", "eps_hole", "grid_M", "grid_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaKind {
    Zero,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainChoice {
    Ball,
    Annulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub n: usize,
    pub p0: f64,
    pub beta: f64,
    pub k: f64,
    pub theta: ThetaKind,
    pub theta_c: f64,
    pub theta_m: f64,
    pub domain: DomainChoice,
    #[serde(rename = "R")]
    pub radius: f64,
    pub eps_hole: f64,
    #[serde(rename = "grid_M")]
    pub grid_m: usize,
    pub grid_ratio: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            n: 3,
            p0: 1.0,
            beta: 0.0,
            k: 2.0,
            theta: ThetaKind::Zero,
            theta_c: 0.0,
            theta_m: 1.0,
            domain: DomainChoice::Ball,
            radius: 1.0,
            eps_hole: 0.1,
            grid_m: DEFAULT_ELEMENTS,
            grid_ratio: DEFAULT_RATIO,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| config_err(key, format!("cannot parse `{value}`")))
}

impl LabConfig {
    /// Parses `key=value` lines; `#` starts a comment. Unknown or repeated
    /// keys are errors; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(config_err(key, "unknown key"));
            }
            if !seen.insert(key.to_string()) {
                return Err(config_err(key, "repeated key"));
            }
            match key {
                "n" => cfg.n = parse_num(key, value)?,
                "p0" => cfg.p0 = parse_num(key, value)?,
                "beta" => cfg.beta = parse_num(key, value)?,
                "k" => cfg.k = parse_num(key, value)?,
                "theta" => {
                    cfg.theta = match value {
                        "zero" => ThetaKind::Zero,
                        "power" => ThetaKind::Power,
                        other => return Err(config_err(key, format!("expected zero|power, got `{other}`"))),
                    }
                }
                "theta_c" => cfg.theta_c = parse_num(key, value)?,
                "theta_m" => cfg.theta_m = parse_num(key, value)?,
                "domain" => {
                    cfg.domain = match value {
                        "ball" => DomainChoice::Ball,
                        "annulus" => DomainChoice::Annulus,
                        other => return Err(config_err(key, format!("expected ball|annulus, got `{other}`"))),
                    }
                }
                "R" => cfg.radius = parse_num(key, value)?,
                "eps_hole" => cfg.eps_hole = parse_num(key, value)?,
                "grid_M" => cfg.grid_m = parse_num(key, value)?,
                "grid_ratio" => cfg.grid_ratio = parse_num(key, value)?,
                _ => unreachable!(),
            }
        }
        cfg.weight()?;
        cfg.domain()?;
        cfg.grid()?;
        Ok(cfg)
    }

    /// Emits every key, in the canonical order.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let theta = match self.theta {
            ThetaKind::Zero => "zero",
            ThetaKind::Power => "power",
        };
        let domain = match self.domain {
            DomainChoice::Ball => "ball",
            DomainChoice::Annulus => "annulus",
        };
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "p0={}", self.p0);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "theta={theta}");
        let _ = writeln!(s, "theta_c={}", self.theta_c);
        let _ = writeln!(s, "theta_m={}", self.theta_m);
        let _ = writeln!(s, "domain={domain}");
        let _ = writeln!(s, "R={}", self.radius);
        let _ = writeln!(s, "eps_hole={}", self.eps_hole);
        let _ = writeln!(s, "grid_M={}", self.grid_m);
        let _ = writeln!(s, "grid_ratio={}", self.grid_ratio);
        s
    }

    pub fn weight(&self) -> Result<Weight> {
        let theta = match self.theta {
            ThetaKind::Zero => Theta::Zero,
            ThetaKind::Power => Theta::Power { c: self.theta_c, m: self.theta_m },
        };
        Weight::new(self.p0, self.beta, self.k, theta).map_err(|e| config_err("p0/beta/k/theta", e.to_string()))
    }

    pub fn domain(&self) -> Result<Domain> {
        let d = match self.domain {
            DomainChoice::Ball => Domain::ball(self.n, self.radius),
            DomainChoice::Annulus => Domain::annulus(self.n, self.eps_hole, self.radius),
        };
        d.map_err(|e| config_err("n/domain/R/eps_hole", e.to_string()))
    }

    pub fn grading(&self) -> Grading {
        if self.grid_ratio == 1.0 {
            Grading::Uniform
        } else {
            Grading::Geometric { ratio: self.grid_ratio }
        }
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        let d = self.domain()?;
        RadialGrid::for_domain(&d, self.grid_m, self.grading())
            .map_err(|e| config_err("grid_M/grid_ratio", e.to_string()))
    }

    pub fn grid_with(&self, elements: usize) -> Result<RadialGrid> {
        let d = self.domain()?;
        RadialGrid::for_domain(&d, elements, self.grading()).map_err(|e| config_err("grid_M", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_roundtrip() {
        let text = "# weight\nn=5\np0=1\nbeta=1\nk=2\ndomain=ball\nR=1\ngrid_M=256 # comment\n";
        let cfg = LabConfig::parse(text).unwrap();
        assert_eq!(cfg.n, 5);
        assert_eq!(cfg.grid_m, 256);
        assert_eq!(LabConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_named() {
        let err = LabConfig::parse("n=3\nbogus=1\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "bogus"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_value_named() {
        let err = LabConfig::parse("p0=abc\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "p0"));
        assert!(LabConfig::parse("n=3\nn=4\n").is_err());
        assert!(LabConfig::parse("domain=annulus\neps_hole=2\n").is_err());
    }
}
