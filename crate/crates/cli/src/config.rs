//! Flat key-value run configuration.
//!
//! The file format is one `section.key = value` pair per line, `#` comments,
//! blank lines ignored. Every key has a default; precedence is defaults,
//! then file values, then command-line flags. Unknown keys and malformed
//! values are rejected by name so a typo cannot silently fall back to a
//! default.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

/// Fully resolved configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub schedule: ScheduleConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub guidance: GuidanceSection,
    pub sample: SampleSection,
    pub analysis: AnalysisSection,
    pub eval: EvalSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub n_samples: usize,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub time_freq_pairs: usize,
    pub label_embed_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub label_drop_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSection {
    /// One of `cond`, `cfg`, `tcfg`, `tcfg-pooled`.
    pub mode: String,
    pub scale: f64,
    pub tie_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSection {
    pub count: usize,
    pub label: u8,
    pub noise: bool,
    pub record: bool,
    /// Path to a trained checkpoint; empty means unset.
    pub checkpoint: String,
    /// Use the analytic score of the generated dataset instead of a model.
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub embed_dim: usize,
    pub anchor_theta: f64,
    pub anchor_label: u8,
    pub n_scores: usize,
    /// Spectrum timestep as a fraction of schedule.steps.
    pub spectrum_t_fraction: f64,
    /// Alignment timesteps as fractions of schedule.steps.
    pub alignment_t_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSection {
    pub count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig { n_samples: 1000, noise_std: 0.05 },
            schedule: ScheduleConfig { steps: 100, beta_min: 1e-4, beta_max: 0.02 },
            model: ModelSection { hidden_dim: 128, time_freq_pairs: 8, label_embed_dim: 8 },
            train: TrainSection {
                iterations: 5000,
                learning_rate: 1e-3,
                batch_size: 256,
                label_drop_prob: 0.1,
            },
            guidance: GuidanceSection {
                mode: "tcfg".to_string(),
                scale: 2.0,
                tie_tolerance: 1e-9,
            },
            sample: SampleSection {
                count: 500,
                label: 0,
                noise: true,
                record: false,
                checkpoint: String::new(),
                oracle: false,
            },
            analysis: AnalysisSection {
                embed_dim: 10,
                anchor_theta: std::f64::consts::FRAC_PI_4,
                anchor_label: 0,
                n_scores: 2000,
                spectrum_t_fraction: 0.1,
                alignment_t_fractions: vec![0.1, 0.3, 0.5],
            },
            eval: EvalSection { count: 500 },
            bench: BenchSection { count: 64 },
        }
    }
}

impl RunConfig {
    /// Reads a config file and applies it over the defaults.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::Config(format!("config file not found: {}", path.display())));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines over the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key. Unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse_u64(key, value)?,
            "data.n_samples" => self.data.n_samples = parse_usize(key, value)?,
            "data.noise_std" => self.data.noise_std = parse_f64(key, value)?,
            "schedule.steps" => self.schedule.steps = parse_usize(key, value)?,
            "schedule.beta_min" => self.schedule.beta_min = parse_f64(key, value)?,
            "schedule.beta_max" => self.schedule.beta_max = parse_f64(key, value)?,
            "model.hidden_dim" => self.model.hidden_dim = parse_usize(key, value)?,
            "model.time_freq_pairs" => self.model.time_freq_pairs = parse_usize(key, value)?,
            "model.label_embed_dim" => self.model.label_embed_dim = parse_usize(key, value)?,
            "train.iterations" => self.train.iterations = parse_usize(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse_f64(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_usize(key, value)?,
            "train.label_drop_prob" => self.train.label_drop_prob = parse_f64(key, value)?,
            "guidance.mode" => self.guidance.mode = parse_mode(value)?,
            "guidance.scale" => self.guidance.scale = parse_f64(key, value)?,
            "guidance.tie_tolerance" => self.guidance.tie_tolerance = parse_f64(key, value)?,
            "sample.count" => self.sample.count = parse_usize(key, value)?,
            "sample.label" => self.sample.label = parse_u8(key, value)?,
            "sample.noise" => self.sample.noise = parse_bool(key, value)?,
            "sample.record" => self.sample.record = parse_bool(key, value)?,
            "sample.checkpoint" => self.sample.checkpoint = value.to_string(),
            "sample.oracle" => self.sample.oracle = parse_bool(key, value)?,
            "analysis.embed_dim" => self.analysis.embed_dim = parse_usize(key, value)?,
            "analysis.anchor_theta" => self.analysis.anchor_theta = parse_f64(key, value)?,
            "analysis.anchor_label" => self.analysis.anchor_label = parse_u8(key, value)?,
            "analysis.n_scores" => self.analysis.n_scores = parse_usize(key, value)?,
            "analysis.spectrum_t_fraction" => {
                self.analysis.spectrum_t_fraction = parse_f64(key, value)?
            }
            "analysis.alignment_t_fractions" => {
                self.analysis.alignment_t_fractions = parse_f64_list(key, value)?
            }
            "eval.count" => self.eval.count = parse_usize(key, value)?,
            "bench.count" => self.bench.count = parse_usize(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Serializes every key sorted by name. Parsing the output reproduces
    /// the config exactly; floats use shortest-roundtrip formatting.
    pub fn serialize(&self) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("data.n_samples".into(), self.data.n_samples.to_string()),
            ("data.noise_std".into(), self.data.noise_std.to_string()),
            ("schedule.steps".into(), self.schedule.steps.to_string()),
            ("schedule.beta_min".into(), self.schedule.beta_min.to_string()),
            ("schedule.beta_max".into(), self.schedule.beta_max.to_string()),
            ("model.hidden_dim".into(), self.model.hidden_dim.to_string()),
            ("model.time_freq_pairs".into(), self.model.time_freq_pairs.to_string()),
            ("model.label_embed_dim".into(), self.model.label_embed_dim.to_string()),
            ("train.iterations".into(), self.train.iterations.to_string()),
            ("train.learning_rate".into(), self.train.learning_rate.to_string()),
            ("train.batch_size".into(), self.train.batch_size.to_string()),
            ("train.label_drop_prob".into(), self.train.label_drop_prob.to_string()),
            ("guidance.mode".into(), self.guidance.mode.clone()),
            ("guidance.scale".into(), self.guidance.scale.to_string()),
            ("guidance.tie_tolerance".into(), self.guidance.tie_tolerance.to_string()),
            ("sample.count".into(), self.sample.count.to_string()),
            ("sample.label".into(), self.sample.label.to_string()),
            ("sample.noise".into(), self.sample.noise.to_string()),
            ("sample.record".into(), self.sample.record.to_string()),
            ("sample.checkpoint".into(), self.sample.checkpoint.clone()),
            ("sample.oracle".into(), self.sample.oracle.to_string()),
            ("analysis.embed_dim".into(), self.analysis.embed_dim.to_string()),
            ("analysis.anchor_theta".into(), self.analysis.anchor_theta.to_string()),
            ("analysis.anchor_label".into(), self.analysis.anchor_label.to_string()),
            ("analysis.n_scores".into(), self.analysis.n_scores.to_string()),
            (
                "analysis.spectrum_t_fraction".into(),
                self.analysis.spectrum_t_fraction.to_string(),
            ),
            (
                "analysis.alignment_t_fractions".into(),
                self.analysis
                    .alignment_t_fractions
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("eval.count".into(), self.eval.count.to_string()),
            ("bench.count".into(), self.bench.count.to_string()),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize, CliError> {
    value.parse().map_err(|_| type_err(key, value, "unsigned integer"))
}

fn parse_u64(key: &str, value: &str) -> Result<u64, CliError> {
    value.parse().map_err(|_| type_err(key, value, "unsigned integer"))
}

fn parse_u8(key: &str, value: &str) -> Result<u8, CliError> {
    value.parse().map_err(|_| type_err(key, value, "small unsigned integer"))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, CliError> {
    let v: f64 = value.parse().map_err(|_| type_err(key, value, "number"))?;
    if !v.is_finite() {
        return Err(type_err(key, value, "finite number"));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(type_err(key, value, "`true` or `false`")),
    }
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    if value.is_empty() {
        return Err(type_err(key, value, "comma-separated numbers"));
    }
    value.split(',').map(|part| parse_f64(key, part.trim())).collect()
}

pub fn parse_mode(value: &str) -> Result<String, CliError> {
    match value {
        "cond" | "cfg" | "tcfg" | "tcfg-pooled" => Ok(value.to_string()),
        _ => Err(CliError::Config(format!(
            "invalid guidance mode `{value}` (expected cond, cfg, tcfg, or tcfg-pooled)"
        ))),
    }
}

fn type_err(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config(format!("invalid value for `{key}`: `{value}` (expected {expected})"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_a_serialize_parse_cycle() {
        let cfg = RunConfig::default();
        let text = cfg.serialize();
        let mut reparsed = RunConfig::default();
        reparsed.seed = 999;
        reparsed.apply_text(&text).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.serialize(), text);
    }

    #[test]
    fn file_values_override_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("schedule.steps = 25\n# comment\n\nguidance.scale = 3.5\n").unwrap();
        assert_eq!(cfg.schedule.steps, 25);
        assert_eq!(cfg.guidance.scale, 3.5);
        assert_eq!(cfg.data.n_samples, 1000);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("data.n_sample = 10\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown config key"), "{msg}");
        assert!(msg.contains("data.n_sample"), "{msg}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("train.iterations = fast\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train.iterations"), "{msg}");
        assert!(msg.contains("fast"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("seed = 1\nnot a pair\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn missing_file_is_a_distinct_error() {
        let err = RunConfig::from_file(Path::new("/nonexistent/run.cfg")).unwrap_err();
        assert!(err.to_string().contains("not found"), "{err}");
    }

    #[test]
    fn mode_values_are_validated() {
        let mut cfg = RunConfig::default();
        cfg.set("guidance.mode", "tcfg-pooled").unwrap();
        assert_eq!(cfg.guidance.mode, "tcfg-pooled");
        assert!(cfg.set("guidance.mode", "tgfc").is_err());
    }

    #[test]
    fn float_list_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("analysis.alignment_t_fractions", "0.05,0.25, 0.75").unwrap();
        assert_eq!(cfg.analysis.alignment_t_fractions, vec![0.05, 0.25, 0.75]);
        let text = cfg.serialize();
        let mut again = RunConfig::default();
        again.apply_text(&text).unwrap();
        assert_eq!(again, cfg);
    }
}
