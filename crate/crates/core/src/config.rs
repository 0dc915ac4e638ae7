//! Plain-text run configuration.
//!
//! One `key = value` pair per line; `#` starts a comment and blank lines are
//! ignored. Recognised keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `input` | none | panel CSV (`date,hour,price,load`); a synthetic panel is generated when absent |
//! | `output_dir` | `out` | directory for the artifacts |
//! | `seed` | `1` | seed of the synthetic generator |
//! | `synthetic_days` | `1000` | length of the synthetic panel |
//! | `point_window` | `728` | calibration window of the expert model, days |
//! | `prob_window` | `182` | calibration window of the probabilistic models, days |
//! | `vsts` | `asinh,boxcox,mlog,poly,npit` | transformations used for point forecasts |
//! | `boxcox_lambda` | `0.5` | Box-Cox exponent |
//! | `mlog_c` | `0.3333333333333333` | mirror-log offset |
//! | `poly_c` | `0.125` | polynomial transformation constant |
//! | `models` | `hs,qra,qrm,qrf,sqra,sqrm,sqrf` | probabilistic models |
//! | `quantiles` | `99` | size of the percentile grid (only 99 is supported) |
//! | `alphas` | `50..98:2` | interval levels in percent, as `a..b:step` or a comma list |
//! | `period.<name>` | whole evaluation range as `full` | named evaluation range `YYYY-MM-DD..YYYY-MM-DD` (inclusive) |
//! | `parallelism` | number of CPUs | worker threads |
//! | `iqr_scale` | `raw` | `raw` or `normalized` interquartile range in the bandwidth rule |
//! | `warm_start_chain` | `true` | warm start successive quantile levels |
//! | `cpa_instruments` | `lag` | `constant` or `lag` instruments of the predictive ability test |
//! | `initial_battery` | `1` | battery state on the first trading day |
//!
//! The default values of `boxcox_lambda`, `mlog_c` and `poly_c` are
//! placeholders, not calibrated constants.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use thiserror::Error;

use crate::evaluation::CpaInstruments;
use crate::prob_models::{ModelKind, PiLevel, ProbOptions, NUM_LEVELS};
use crate::solvers::IqrScale;
use crate::timeseries::HourlyPanel;
use crate::trading::BatteryState;
use crate::transform::{VstKind, VstParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config key {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("config file {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Named inclusive date range used to split the evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubPeriod {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl SubPeriod {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub synthetic_days: usize,
    pub point_window: usize,
    pub prob_window: usize,
    pub vsts: Vec<VstKind>,
    pub vst_params: VstParams,
    pub models: Vec<ModelKind>,
    pub quantiles: usize,
    pub alphas: Vec<PiLevel>,
    pub periods: Vec<SubPeriod>,
    pub parallelism: usize,
    pub iqr_scale: IqrScale,
    pub warm_start_chain: bool,
    pub cpa_instruments: CpaInstruments,
    pub initial_battery: BatteryState,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("out"),
            seed: 1,
            synthetic_days: 1000,
            point_window: 728,
            prob_window: 182,
            vsts: VstKind::ALL.to_vec(),
            vst_params: VstParams::default(),
            models: ModelKind::ALL.to_vec(),
            quantiles: NUM_LEVELS,
            alphas: default_alphas(),
            periods: Vec::new(),
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            iqr_scale: IqrScale::Raw,
            warm_start_chain: true,
            cpa_instruments: CpaInstruments::ConstantAndLag,
            initial_battery: BatteryState::HALF,
        }
    }
}

fn default_alphas() -> Vec<PiLevel> {
    (50..=98).step_by(2).map(|a| PiLevel::new(a).expect("even level")).collect()
}

/// Parses `a..b:step`, `a..b` (step 2) or a comma separated list.
pub fn parse_alphas(s: &str) -> Result<Vec<PiLevel>, String> {
    let s = s.trim();
    let raw: Vec<u32> = if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, step)) => (b, step),
            None => (rest, "2"),
        };
        let a: u32 = a.trim().parse().map_err(|e| format!("range start: {e}"))?;
        let b: u32 = b.trim().parse().map_err(|e| format!("range end: {e}"))?;
        let step: usize = step.trim().parse().map_err(|e| format!("range step: {e}"))?;
        if step == 0 || b < a {
            return Err(format!("empty range {s}"));
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<Result<_, _>>()?
    };
    if raw.is_empty() {
        return Err("no levels".into());
    }
    raw.into_iter()
        .map(|a| PiLevel::new(a).map_err(|e| e.to_string()))
        .collect()
}

fn parse_date_range(s: &str) -> Result<(NaiveDate, NaiveDate), String> {
    let (a, b) = s.split_once("..").ok_or("expected YYYY-MM-DD..YYYY-MM-DD")?;
    let a = NaiveDate::parse_from_str(a.trim(), "%Y-%m-%d").map_err(|e| format!("start: {e}"))?;
    let b = NaiveDate::parse_from_str(b.trim(), "%Y-%m-%d").map_err(|e| format!("end: {e}"))?;
    if b < a {
        return Err(format!("{b} precedes {a}"));
    }
    Ok((a, b))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e: T::Err| invalid(key, e.to_string()))
}

impl RunConfig {
    /// Parses a configuration text on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected key = value, got {content:?}"),
            })?;
            cfg.set(line, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Sets one key; the value is validated on its own but not against the
    /// rest of the configuration.
    pub fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse_num(key, value)?,
            "synthetic_days" => self.synthetic_days = parse_num(key, value)?,
            "point_window" => self.point_window = parse_num(key, value)?,
            "prob_window" => self.prob_window = parse_num(key, value)?,
            "vsts" => {
                self.vsts = value
                    .split(',')
                    .map(VstKind::from_str)
                    .collect::<Result<_, _>>()
                    .map_err(|e| invalid(key, e.to_string()))?
            }
            "boxcox_lambda" => self.vst_params.boxcox_lambda = parse_num(key, value)?,
            "mlog_c" => self.vst_params.mlog_c = parse_num(key, value)?,
            "poly_c" => self.vst_params.poly_c = parse_num(key, value)?,
            "models" => self.models = ModelKind::parse_list(value).map_err(|e| invalid(key, e.to_string()))?,
            "quantiles" => self.quantiles = parse_num(key, value)?,
            "alphas" => self.alphas = parse_alphas(value).map_err(|e| invalid(key, e))?,
            "parallelism" => self.parallelism = parse_num(key, value)?,
            "iqr_scale" => self.iqr_scale = value.parse().map_err(|e: String| invalid(key, e))?,
            "warm_start_chain" => self.warm_start_chain = parse_bool(value).map_err(|e| invalid(key, e))?,
            "cpa_instruments" => {
                self.cpa_instruments = match value.to_ascii_lowercase().as_str() {
                    "constant" => CpaInstruments::Constant,
                    "lag" | "constant_and_lag" => CpaInstruments::ConstantAndLag,
                    other => return Err(invalid(key, format!("expected constant or lag, got {other:?}"))),
                }
            }
            "initial_battery" => {
                let b: i32 = parse_num(key, value)?;
                self.initial_battery = BatteryState::new(b).map_err(|e| invalid(key, e.to_string()))?;
            }
            _ => {
                if let Some(name) = key.strip_prefix("period.") {
                    if name.is_empty() {
                        return Err(invalid(key, "empty period name"));
                    }
                    let (start, end) = parse_date_range(value).map_err(|e| invalid(key, e))?;
                    self.periods.retain(|p| p.name != name);
                    self.periods.push(SubPeriod {
                        name: name.to_string(),
                        start,
                        end,
                    });
                } else {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks the settings that do not depend on the data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.point_window == 0 {
            return Err(invalid("point_window", "must be positive"));
        }
        if self.prob_window < 2 {
            return Err(invalid("prob_window", "must be at least 2"));
        }
        if self.parallelism == 0 {
            return Err(invalid("parallelism", "must be positive"));
        }
        if self.quantiles != NUM_LEVELS {
            return Err(invalid("quantiles", format!("only the {NUM_LEVELS}-percentile grid is supported")));
        }
        if self.vsts.is_empty() {
            return Err(invalid("vsts", "empty list"));
        }
        if self.models.is_empty() {
            return Err(invalid("models", "empty list"));
        }
        self.vst_params
            .validate()
            .map_err(|e| invalid("vst parameters", e.to_string()))?;
        if self.input.is_none() && self.synthetic_days < crate::synth::MIN_SYNTH_DAYS {
            return Err(invalid(
                "synthetic_days",
                format!("must be at least {}", crate::synth::MIN_SYNTH_DAYS),
            ));
        }
        Ok(())
    }

    /// Checks the windows and periods against a loaded panel.
    pub fn validate_for(&self, panel: &HourlyPanel) -> Result<(), ConfigError> {
        let n = panel.num_days();
        if n <= self.point_window + self.prob_window {
            return Err(invalid(
                "point_window",
                format!(
                    "panel has {n} days, the windows need more than {}",
                    self.point_window + self.prob_window
                ),
            ));
        }
        let first = panel.date(self.point_window + self.prob_window);
        let last = panel.date(n - 1);
        for p in &self.periods {
            if p.start < first || p.end > last {
                return Err(invalid(
                    &format!("period.{}", p.name),
                    format!("{}..{} is outside the evaluation range {first}..{last}", p.start, p.end),
                ));
            }
        }
        Ok(())
    }

    pub fn prob_options(&self) -> ProbOptions {
        ProbOptions {
            window: self.prob_window,
            iqr: self.iqr_scale,
            warm_start_chain: self.warm_start_chain,
            bandwidth_override: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c.point_window, 728);
        assert_eq!(c.prob_window, 182);
        assert_eq!(c.alphas.len(), 25);
        assert_eq!(c.models.len(), 7);
    }

    #[test]
    fn keys_and_periods() {
        let c = RunConfig::parse(
            "seed = 7\nalphas = 50,70,90 # trailing\nperiod.first = 2017-01-01..2017-06-30\nmodels = qra,sqra\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.alphas.iter().map(|a| a.percent()).collect::<Vec<_>>(), vec![50, 70, 90]);
        assert_eq!(c.periods[0].name, "first");
        assert_eq!(c.models, vec![ModelKind::Qra, ModelKind::Sqra]);
    }

    #[test]
    fn zero_window_is_a_config_error() {
        assert!(matches!(
            RunConfig::parse("point_window = 0"),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(matches!(RunConfig::parse("prob_window = 0"), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn unknown_key_and_syntax() {
        assert!(matches!(
            RunConfig::parse("colour = blue"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(RunConfig::parse("\nnot a pair"), Err(ConfigError::Syntax { line: 2, .. })));
    }

    #[test]
    fn alpha_ranges() {
        assert_eq!(parse_alphas("50..98:2").unwrap().len(), 25);
        assert_eq!(parse_alphas("80..90").unwrap().len(), 6);
        assert!(parse_alphas("51").is_err());
        assert!(parse_alphas("90..50").is_err());
    }
}
