//! Run configuration: a TOML document plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tripsense::domain::{Projection, SlotWidth};
use tripsense::eval::{EvalOptions, StreamOptions};
use tripsense::forest::EnsembleMode;
use tripsense::fusion::{FusionParams, FusionStrategy, PreviousLabels};
use tripsense::ingest::CleaningRules;
use tripsense::quantize::QuantizerSpec;
use tripsense::synth::SynthConfig;

use crate::UsageError;

/// Input files; relative paths in a config file resolve against its directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub stops: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    /// POI category mapping; the built-in mapping when absent.
    pub mapping: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Chrono,
    Stream,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Training days per user.
    pub k: usize,
    pub previous: PreviousLabels,
    pub all_strategies: bool,
    pub warmup_days: usize,
    pub min_bucket_users: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let e = EvalOptions::default();
        let s = StreamOptions::default();
        EvalConfig {
            mode: EvalMode::Chrono,
            k: 4,
            previous: e.previous,
            all_strategies: e.all_strategies,
            warmup_days: s.warmup_days,
            min_bucket_users: s.min_bucket_users,
        }
    }
}

impl EvalConfig {
    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            previous: self.previous,
            all_strategies: self.all_strategies,
        }
    }

    pub fn stream_options(&self) -> StreamOptions {
        StreamOptions {
            warmup_days: self.warmup_days,
            min_bucket_users: self.min_bucket_users,
            previous: self.previous,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub projection: Projection,
    pub data: DataPaths,
    pub synth: SynthConfig,
    pub cleaning: CleaningRules,
    pub model: FusionParams,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let d = &mut cfg.data;
        for p in [&mut d.stops, &mut d.profiles, &mut d.pois, &mut d.mapping].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let usage = |e: tripsense::Error| UsageError(e.to_string());
        self.model.validate().map_err(usage)?;
        self.synth.validate().map_err(usage)?;
        if self.eval.k == 0 {
            return Err(UsageError("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

/// Parses `grid:<m>`, `grid:<w>x<h>`, `voronoi:<k>` or `circular:<m>`.
pub fn parse_quantizer(s: &str) -> Result<QuantizerSpec, String> {
    let (kind, arg) = s.split_once(':').ok_or_else(|| format!("expected <kind>:<value>, got {s:?}"))?;
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number {v:?}"));
    let spec = match kind {
        "grid" => {
            let (w, h) = match arg.split_once('x') {
                Some((w, h)) => (num(w)?, num(h)?),
                None => (num(arg)?, num(arg)?),
            };
            QuantizerSpec::Grid {
                cell_width: w,
                cell_height: h,
            }
        }
        "voronoi" => QuantizerSpec::Voronoi {
            clusters: arg.parse().map_err(|_| format!("bad cluster count {arg:?}"))?,
        },
        "circular" => QuantizerSpec::Circular { radius: num(arg)? },
        other => return Err(format!("unknown quantizer kind {other:?}")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

pub fn parse_weights(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad weight {p:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "exactly four weights are required".to_owned())
}

pub fn parse_slot(s: &str) -> Result<SlotWidth, String> {
    let m: u32 = s.parse().map_err(|_| format!("bad slot width {s:?}"))?;
    SlotWidth::new(m).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum StrategyArg {
    Wmv,
    ScoreStack,
    DecisionStack,
}

impl From<StrategyArg> for FusionStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Wmv => FusionStrategy::Wmv,
            StrategyArg::ScoreStack => FusionStrategy::ScoreStack,
            StrategyArg::DecisionStack => FusionStrategy::DecisionStack,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EnsembleArg {
    Bagging,
    RandomSubspace,
}

impl From<EnsembleArg> for EnsembleMode {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::Bagging => EnsembleMode::Bagging,
            EnsembleArg::RandomSubspace => EnsembleMode::RandomSubspace,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PreviousArg {
    Validated,
    Predicted,
}

impl From<PreviousArg> for PreviousLabels {
    fn from(p: PreviousArg) -> Self {
        match p {
            PreviousArg::Validated => PreviousLabels::Validated,
            PreviousArg::Predicted => PreviousLabels::Predicted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_document_keeps_defaults() {
        let cfg: RunConfig = toml::from_str(
            "jobs = 2\n[model]\nslot_width = 60\n[model.quantizer]\nkind = \"circular\"\nradius = 150.0\n",
        )
        .unwrap();
        assert_eq!(cfg.jobs, 2);
        assert_eq!(cfg.model.slot_width.minutes(), 60);
        assert_eq!(cfg.model.quantizer, QuantizerSpec::Circular { radius: 150.0 });
        assert_eq!(cfg.model.forest.n_trees, 100);
        assert_eq!(cfg.eval.k, 4);
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        assert!(toml::from_str::<RunConfig>("colour = 1\n").is_err());
    }

    #[test]
    fn quantizer_flag_forms() {
        assert_eq!(
            parse_quantizer("grid:400").unwrap(),
            QuantizerSpec::Grid {
                cell_width: 400.0,
                cell_height: 400.0
            }
        );
        assert_eq!(
            parse_quantizer("grid:200x600").unwrap(),
            QuantizerSpec::Grid {
                cell_width: 200.0,
                cell_height: 600.0
            }
        );
        assert_eq!(parse_quantizer("voronoi:100").unwrap(), QuantizerSpec::Voronoi { clusters: 100 });
        assert!(parse_quantizer("circular:-5").is_err());
        assert!(parse_quantizer("hex:5").is_err());
    }

    #[test]
    fn weights_need_four_values() {
        assert_eq!(parse_weights("4,3,2,1").unwrap(), [4.0, 3.0, 2.0, 1.0]);
        assert!(parse_weights("1,2,3").is_err());
    }
}
