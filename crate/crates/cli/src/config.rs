//! Command options. Each command reads an optional TOML file whose keys are the
//! field names below (`methods` for `--method`, otherwise the long flag with
//! underscores); flags given on the command line win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cgtc_core::{AlphaAllocation, Method, PValueVariant, SplitStrategy};

use crate::error::{CliError, Result};

/// Declares an options struct whose fields are all optional, plus `over`,
/// which fills unset fields from a lower-priority source.
macro_rules! options {
    ($(#[$m:meta])* pub struct $name:ident { $($(#[$fm:meta])* pub $f:ident: Option<$t:ty>,)* }) => {
        $(#[$m])*
        pub struct $name {
            $($(#[$fm])* pub $f: Option<$t>,)*
        }

        impl $name {
            pub fn over(self, lower: Self) -> Self {
                Self { $($f: self.$f.or(lower.$f),)* }
            }
        }
    };
}

fn parse_split(s: &str) -> std::result::Result<SplitStrategy, String> {
    match s {
        "random" => Ok(SplitStrategy::Random),
        "selective" => Ok(SplitStrategy::Selective),
        _ => Err(format!("unknown split `{s}`; expected random or selective")),
    }
}

options! {
    #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct SimulateOptions {
        /// Dirichlet-process concentration.
        #[arg(long)]
        pub theta: Option<f64>,
        /// Number of samples.
        #[arg(long)]
        pub n: Option<usize>,
        /// Feature dimension.
        #[arg(long)]
        pub dim: Option<usize>,
        /// Per-coordinate feature noise variance.
        #[arg(long)]
        pub sigma2: Option<f64>,
        #[arg(long)]
        pub seed: Option<u64>,
        /// Dataset CSV to write.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

options! {
    #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct RunOptions {
        /// Comma-separated methods (default: all four).
        #[arg(long = "method", visible_alias = "methods", value_delimiter = ',')]
        pub methods: Option<Vec<Method>>,
        /// Statistic for the unseen-label test: gt, rgt or xgt.
        #[arg(long)]
        pub variant: Option<PValueVariant>,
        #[arg(long)]
        pub alpha: Option<f64>,
        /// `even`, `tuned`, or `class,unseen,seen`.
        #[arg(long)]
        pub alloc: Option<String>,
        /// Comma-separated concentration grid for simulated data.
        #[arg(long, value_delimiter = ',')]
        pub theta: Option<Vec<f64>>,
        /// Reference sample size.
        #[arg(long)]
        pub n: Option<usize>,
        #[arg(long)]
        pub reps: Option<usize>,
        /// Test points per repetition.
        #[arg(long)]
        pub tests: Option<usize>,
        #[arg(long)]
        pub seed: Option<u64>,
        /// Dataset CSV to resample from instead of simulating.
        #[arg(long)]
        pub data: Option<PathBuf>,
        #[arg(long)]
        pub sigma2: Option<f64>,
        #[arg(long)]
        pub dim: Option<usize>,
        /// Calibration share of the reference data.
        #[arg(long)]
        pub cal_fraction: Option<f64>,
        /// Size weight of the tuning loss.
        #[arg(long)]
        pub lambda: Option<f64>,
        /// Cross-validation folds for tuning.
        #[arg(long)]
        pub folds: Option<usize>,
        /// Metrics CSV (long format).
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Plot-ready CSV, one row per method and grid point.
        #[arg(long)]
        pub plot: Option<PathBuf>,
    }
}

options! {
    #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct TuneOptions {
        /// Reference dataset CSV.
        #[arg(long)]
        pub data: Option<PathBuf>,
        #[arg(long)]
        pub alpha: Option<f64>,
        #[arg(long)]
        pub lambda: Option<f64>,
        #[arg(long)]
        pub folds: Option<usize>,
        /// random or selective.
        #[arg(long, value_parser = parse_split)]
        #[serde(default, with = "split_serde")]
        pub split: Option<SplitStrategy>,
        #[arg(long)]
        pub variant: Option<PValueVariant>,
        #[arg(long)]
        pub cal_fraction: Option<f64>,
        #[arg(long)]
        pub seed: Option<u64>,
        /// TOML file receiving the selected allocation.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

options! {
    #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct PredictOptions {
        /// Reference dataset CSV.
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Comma-separated features of one query; repeatable.
        #[arg(long)]
        pub query: Option<Vec<String>>,
        /// CSV of query rows.
        #[arg(long)]
        pub queries: Option<PathBuf>,
        #[arg(long)]
        pub alpha: Option<f64>,
        /// `even`, `tuned`, or `class,unseen,seen`.
        #[arg(long)]
        pub alloc: Option<String>,
        /// Allocation TOML as written by `tune`; overrides `alloc`.
        #[arg(long)]
        pub alloc_file: Option<PathBuf>,
        #[arg(long, value_parser = parse_split)]
        #[serde(default, with = "split_serde")]
        pub split: Option<SplitStrategy>,
        #[arg(long)]
        pub variant: Option<PValueVariant>,
        #[arg(long)]
        pub cal_fraction: Option<f64>,
        #[arg(long)]
        pub seed: Option<u64>,
        /// CSV with one row per query.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

/// Keeps `Option<SplitStrategy>` readable as a plain string in TOML.
mod split_serde {
    use cgtc_core::SplitStrategy;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<SplitStrategy>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|x| x.name()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<SplitStrategy>, D::Error> {
        let v: Option<String> = Option::deserialize(d)?;
        v.map(|s| super::parse_split(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocChoice {
    Even,
    Tuned,
    Fixed(AlphaAllocation),
}

impl AllocChoice {
    pub fn parse(s: &str, alpha: f64) -> Result<Self> {
        match s {
            "even" => Ok(AllocChoice::Even),
            "tuned" => Ok(AllocChoice::Tuned),
            _ => {
                let parts: Vec<f64> = s
                    .split(',')
                    .map(|p| f64::from_str(p.trim()))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad_alloc(s))?;
                let [c, u, seen] = parts[..] else {
                    return Err(bad_alloc(s));
                };
                Ok(AllocChoice::Fixed(AlphaAllocation::new(c, u, seen, alpha)?))
            }
        }
    }
}

fn bad_alloc(s: &str) -> CliError {
    CliError::Config(format!(
        "invalid allocation `{s}`; expected even, tuned, or class,unseen,seen"
    ))
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_toml)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file_err = |reason: String| CliError::ConfigFile {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| file_err(e.to_string()))
}

pub fn save<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn required<T>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(CliError::Missing(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let flags = RunOptions {
            alpha: Some(0.2),
            ..Default::default()
        };
        let file = RunOptions {
            alpha: Some(0.1),
            reps: Some(3),
            ..Default::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.alpha, Some(0.2));
        assert_eq!(merged.reps, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunOptions>("alpha = 0.1\nbogus = 1\n").is_err());
        assert!(toml::from_str::<RunOptions>("method = [\"cgtc-random\"]\n").is_err());
        let o: RunOptions = toml::from_str("methods = [\"cgtc-random\"]\ntheta = [10, 100.5]\n").unwrap();
        assert_eq!(o.methods, Some(vec![Method::CgtcRandom]));
        assert_eq!(o.theta, Some(vec![10.0, 100.5]));
    }

    #[test]
    fn round_trip() {
        let o = TuneOptions {
            alpha: Some(0.1),
            split: Some(SplitStrategy::Selective),
            data: Some("x.csv".into()),
            ..Default::default()
        };
        let text = toml::to_string(&o).unwrap();
        assert_eq!(toml::from_str::<TuneOptions>(&text).unwrap(), o);
    }

    #[test]
    fn allocation_forms() {
        assert_eq!(AllocChoice::parse("even", 0.1).unwrap(), AllocChoice::Even);
        assert_eq!(AllocChoice::parse("tuned", 0.1).unwrap(), AllocChoice::Tuned);
        let AllocChoice::Fixed(a) = AllocChoice::parse("0.08, 0.02, 0", 0.1).unwrap() else {
            panic!("expected a fixed allocation");
        };
        assert_eq!(a.alpha_class, 0.08);
        assert!(AllocChoice::parse("0.5,0.5,0.5", 0.1).is_err());
        assert!(AllocChoice::parse("half", 0.1).is_err());
    }
}
