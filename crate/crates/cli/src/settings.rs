//! Configuration layering: command defaults, then the config file, then
//! command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use lpf_core::config::{AnalysisConfig, PatternSpec, Seeding};
use lpf_core::denoise::DenoiseConfig;
use lpf_core::resample::ResampleConfig;

use crate::args::{AnalysisArgs, PatternArg};
use crate::CliError;

const SECTIONS: [&str; 3] = ["analysis", "resample", "denoise"];

/// Parsed config file, by table.
#[derive(Debug, Default)]
pub struct FileConfig {
    tables: Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let tables: Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        for (key, value) in &tables {
            if !SECTIONS.contains(&key.as_str()) || !value.is_table() {
                return Err(CliError::Usage(format!(
                    "{}: unknown entry {key:?} (expected the tables {})",
                    path.display(),
                    SECTIONS.join(", ")
                )));
            }
        }
        Ok(Self { tables })
    }

    /// `base` with the keys of table `section` replacing its own. The merge
    /// goes through JSON, which keeps unset options as `null`.
    fn overlay<T: Serialize + DeserializeOwned + Clone>(&self, section: &str, base: &T) -> Result<T, CliError> {
        let Some(Value::Table(over)) = self.tables.get(section) else {
            return Ok(base.clone());
        };
        let usage = |e: serde_json::Error| CliError::Usage(format!("[{section}] {e}"));
        let mut merged = serde_json::to_value(base).map_err(usage)?;
        let fields = merged.as_object_mut().expect("configs serialize to maps");
        for (k, v) in over {
            fields.insert(k.clone(), serde_json::to_value(v).map_err(usage)?);
        }
        serde_json::from_value(merged).map_err(usage)
    }

    pub fn analysis(&self, base: &AnalysisConfig) -> Result<AnalysisConfig, CliError> {
        self.overlay("analysis", base)
    }

    pub fn resample(&self, base: &ResampleConfig) -> Result<ResampleConfig, CliError> {
        let mut out: ResampleConfig = self.overlay("resample", &ResampleOverlay::from(base))?.into_config(base);
        out.analysis = self.analysis(&base.analysis)?;
        Ok(out)
    }

    pub fn denoise(&self, base: &DenoiseConfig) -> Result<DenoiseConfig, CliError> {
        let mut out = self.overlay("denoise", &DenoiseOverlay::from(base))?.into_config(base);
        out.analysis = self.analysis(&base.analysis)?;
        Ok(out)
    }
}

// the file tables hold only the command's own keys; analysis settings live
// in [analysis]

#[derive(Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ResampleOverlay {
    conflict_radius: Option<f64>,
    conflict_factor: f64,
}

impl From<&ResampleConfig> for ResampleOverlay {
    fn from(c: &ResampleConfig) -> Self {
        Self {
            conflict_radius: c.conflict_radius,
            conflict_factor: c.conflict_factor,
        }
    }
}

impl ResampleOverlay {
    fn into_config(self, base: &ResampleConfig) -> ResampleConfig {
        ResampleConfig {
            analysis: base.analysis.clone(),
            conflict_radius: self.conflict_radius,
            conflict_factor: self.conflict_factor,
        }
    }
}

#[derive(Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct DenoiseOverlay {
    gamma: f64,
    rounds: usize,
    stop_factor: f64,
}

impl From<&DenoiseConfig> for DenoiseOverlay {
    fn from(c: &DenoiseConfig) -> Self {
        Self {
            gamma: c.gamma,
            rounds: c.rounds,
            stop_factor: c.stop_factor,
        }
    }
}

impl DenoiseOverlay {
    fn into_config(self, base: &DenoiseConfig) -> DenoiseConfig {
        DenoiseConfig {
            analysis: base.analysis.clone(),
            gamma: self.gamma,
            rounds: self.rounds,
            stop_factor: self.stop_factor,
        }
    }
}

/// Applies analysis flags over `config`.
pub fn apply_flags(config: &mut AnalysisConfig, flags: &AnalysisArgs, seed: Option<u64>) -> Result<(), CliError> {
    if let Some(r) = flags.radius {
        config.radius = r;
    }
    let kind = flags.pattern.or(match (flags.grid_n, flags.points) {
        (Some(_), None) => Some(PatternArg::Grid),
        (None, Some(_)) => Some(PatternArg::Random),
        _ => None,
    });
    match kind {
        Some(PatternArg::Grid) => {
            if flags.points.is_some() {
                return Err(CliError::Usage("--points applies to random patterns".into()));
            }
            let grid_n = match (flags.grid_n, config.pattern) {
                (Some(n), _) => n,
                (None, PatternSpec::Grid { grid_n }) => grid_n,
                (None, PatternSpec::Random { .. }) => match AnalysisConfig::default().pattern {
                    PatternSpec::Grid { grid_n } => grid_n,
                    PatternSpec::Random { .. } => unreachable!("the default pattern is a grid"),
                },
            };
            config.pattern = PatternSpec::Grid { grid_n };
        }
        Some(PatternArg::Random) => {
            if flags.grid_n.is_some() {
                return Err(CliError::Usage("--grid-n applies to grid patterns".into()));
            }
            let m = flags.points.ok_or_else(|| CliError::Usage("random patterns need --points".into()))?;
            config.pattern = PatternSpec::Random { m };
        }
        None => {}
    }
    if let Some(d) = flags.atoms {
        config.atoms = d;
    }
    if flags.lambda.is_some() {
        config.lambda = flags.lambda;
    }
    if flags.tau_p.is_some() {
        config.tau_p = flags.tau_p;
    }
    if let Some(k) = flags.outer_iters {
        config.outer_iters = k;
    }
    if let Some(k) = flags.dict_iters {
        config.dict_iters = k;
    }
    if let Some(stride) = flags.lpf_stride {
        config.seeding = Seeding::Stride { stride };
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> FileConfig {
        FileConfig { tables: text.parse().unwrap() }
    }

    #[test]
    fn file_overrides_defaults_and_flags_override_file() {
        let f = file("[analysis]\natoms = 8\nradius = 2.0\n[denoise]\ngamma = 0.25\n");
        let mut c = f.denoise(&DenoiseConfig::default()).unwrap();
        assert_eq!(c.analysis.atoms, 8);
        assert_eq!(c.gamma, 0.25);
        assert_eq!(c.rounds, DenoiseConfig::default().rounds);
        // command defaults survive where the file is silent
        assert_eq!(c.analysis.mask_factor, None);
        let flags = AnalysisArgs { atoms: Some(4), ..Default::default() };
        apply_flags(&mut c.analysis, &flags, Some(9)).unwrap();
        assert_eq!((c.analysis.atoms, c.analysis.radius, c.analysis.seed), (4, 2.0, 9));
    }

    #[test]
    fn nested_pattern_table_replaces_whole_pattern() {
        let f = file("[analysis]\npattern = { kind = \"random\", m = 300 }\n");
        let c = f.analysis(&AnalysisConfig::default()).unwrap();
        assert_eq!(c.pattern, PatternSpec::Random { m: 300 });
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(matches!(file("[analysis]\nradiuss = 1.0\n").analysis(&AnalysisConfig::default()), Err(CliError::Usage(_))));
        assert!(matches!(file("[resample]\ngamma = 1.0\n").resample(&ResampleConfig::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn pattern_flags() {
        let mut c = AnalysisConfig::default();
        apply_flags(&mut c, &AnalysisArgs { points: Some(200), ..Default::default() }, None).unwrap();
        assert_eq!(c.pattern, PatternSpec::Random { m: 200 });
        apply_flags(&mut c, &AnalysisArgs { grid_n: Some(32), ..Default::default() }, None).unwrap();
        assert_eq!(c.pattern, PatternSpec::Grid { grid_n: 32 });
        let bad = AnalysisArgs { pattern: Some(PatternArg::Grid), points: Some(5), ..Default::default() };
        assert!(apply_flags(&mut c, &bad, None).is_err());
        let bad = AnalysisArgs { radius: Some(-1.0), ..Default::default() };
        assert!(matches!(apply_flags(&mut c, &bad, None), Err(CliError::Usage(_))));
    }
}
