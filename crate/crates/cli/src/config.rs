use std::fs;
use std::path::Path;

use clap::ValueEnum;
use lobsim_core::book::MatchRule;
use lobsim_core::dist::{make_partition, ArrivalConfig, ArrivalSpec, DistConfig};
use lobsim_core::lyapunov::{q, Q};
use lobsim_core::sim::TimeMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    #[default]
    Ordinary,
    #[value(alias = "ordinary_binned")]
    OrdinaryBinned,
    #[value(alias = "strict_binned")]
    StrictBinned,
}

/// Every parameter a subcommand may read. Values come from defaults, then the
/// config file, then flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arrivals: ArrivalConfig,
    /// Second arrival law for the perturbation experiment; a 5% triangular
    /// bump on the bid density when absent.
    pub perturbed: Option<ArrivalConfig>,
    pub rule: RuleKind,
    pub bins: usize,
    pub n_events: u64,
    pub seeds: Vec<u64>,
    pub record_every: u64,
    pub burn_in: f64,
    pub time_mode: TimeMode,
    pub eps: f64,
    /// ℒ threshold for the conditional drift.
    pub k: f64,
    pub x: f64,
    pub y: f64,
    pub k_b: usize,
    pub k_a: usize,
    pub tolerance: f64,
    pub grid_n: usize,
    pub lower_fb: Option<f64>,
    pub max_edits: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arrivals: ArrivalConfig { p_bid: 0.5, bid: DistConfig::default(), ask: DistConfig::default() },
            perturbed: None,
            rule: RuleKind::Ordinary,
            bins: 100,
            n_events: 1_000_000,
            seeds: vec![1],
            record_every: 0,
            burn_in: 0.5,
            time_mode: TimeMode::EventCount,
            eps: 0.01,
            k: 20.0,
            x: 0.4,
            y: 0.6,
            k_b: 21,
            k_a: 79,
            tolerance: 0.02,
            grid_n: 1000,
            lower_fb: None,
            max_edits: 5,
        }
    }
}

fn parse_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

impl RunConfig {
    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        parse_file(path)
    }

    pub fn load_arrivals(path: &Path) -> Result<ArrivalConfig, CliError> {
        parse_file(path)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.spec()?;
        if let Some(p) = &self.perturbed {
            p.build().map_err(|e| CliError::Config(format!("perturbed: {e}")))?;
        }
        if self.bins < 1 {
            return bad("bins must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return bad(format!("burn_in {} outside [0, 1)", self.burn_in));
        }
        if !(self.eps > 0.0 && self.eps < 0.2) {
            return bad(format!("eps {} outside (0, 0.2)", self.eps));
        }
        if !(self.x < self.y) {
            return bad(format!("need x < y, got {} and {}", self.x, self.y));
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance {} must be nonnegative", self.tolerance));
        }
        if self.grid_n < 2 {
            return bad("grid_n must be at least 2".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<ArrivalSpec, CliError> {
        self.arrivals.build().map_err(|e| CliError::Config(format!("arrivals: {e}")))
    }

    pub fn perturbed_spec(&self) -> Result<ArrivalSpec, CliError> {
        let cfg = self.perturbed.clone().unwrap_or_else(|| ArrivalConfig {
            p_bid: self.arrivals.p_bid,
            bid: DistConfig::PiecewiseLinear { x: vec![0.0, 0.5, 1.0], density: vec![0.95, 1.05, 0.95] },
            ask: self.arrivals.ask.clone(),
        });
        cfg.build().map_err(|e| CliError::Config(format!("perturbed: {e}")))
    }

    pub fn rule(&self, spec: &ArrivalSpec) -> Result<MatchRule, CliError> {
        let part = || make_partition(self.bins, spec).map_err(|e| CliError::Config(format!("bins: {e}")));
        Ok(match self.rule {
            RuleKind::Ordinary => MatchRule::Ordinary,
            RuleKind::OrdinaryBinned => MatchRule::OrdinaryBinned(part()?),
            RuleKind::StrictBinned => MatchRule::StrictBinned(part()?),
        })
    }

    /// `eps` as the decimal it prints as.
    pub fn eps_q(&self) -> Result<Q, CliError> {
        decimal_q(self.eps).ok_or_else(|| CliError::Config(format!("eps {} has too many decimal digits", self.eps)))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn decimal_q(v: f64) -> Option<Q> {
    let s = v.to_string();
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    if frac.len() > 15 {
        return None;
    }
    let n: i64 = format!("{int}{frac}").parse().ok()?;
    Some(q(n, 10i64.pow(frac.len() as u32)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let c: RunConfig = toml::from_str("bins = 10\nseeds = [3, 4]\n[arrivals]\np_bid = 0.5\n").unwrap();
        assert_eq!((c.bins, c.seeds.clone()), (10, vec![3, 4]));
        let back: RunConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let e = toml::from_str::<RunConfig>("binz = 10").unwrap_err();
        assert!(e.to_string().contains("binz"), "{e}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.n_events = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn eps_as_rational() {
        assert_eq!(decimal_q(0.01), Some(q(1, 100)));
        assert_eq!(decimal_q(0.125), Some(q(1, 8)));
        assert_eq!(decimal_q(1.0 / 3.0), None);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let c = RunConfig { x: 0.7, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let c = RunConfig { seeds: vec![], ..RunConfig::default() };
        assert!(c.validate().is_err());
    }
}
