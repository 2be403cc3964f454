//! Plain-text `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys mirror the in-memory
//! structs with dots for nesting (`refine.lambda`, `identity.qn.memory`).
//! Missing keys keep their defaults; unknown keys and unparsable values are
//! errors. [`pipeline_config_text`] and friends print every key, so a dumped
//! file documents all pinned defaults.

use std::fmt::Write as _;
use std::path::Path;

use facecap_core::maskrefine::Connectivity;
use facecap_core::neuralseg::TrainConfig;
use facecap_core::pipeline::PipelineConfig;
use facecap_core::regressor::CascadeConfig;

use crate::error::{Error, IoContext, Result};

trait Value: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn show(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u64, f64, bool);

impl Value for Connectivity {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "4" => Some(Connectivity::Four),
            "8" => Some(Connectivity::Eight),
            _ => None,
        }
    }

    fn show(&self) -> String {
        match self {
            Connectivity::Four => "4",
            Connectivity::Eight => "8",
        }
        .into()
    }
}

impl Value for [f64; 3] {
    fn parse(s: &str) -> Option<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse().ok())
            .collect::<Option<_>>()?;
        v.try_into().ok()
    }

    fn show(&self) -> String {
        format!("{}, {}, {}", self[0], self[1], self[2])
    }
}

/// `(key, value, line)` triples in file order.
pub(crate) fn pairs(text: &str, origin: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |detail: String| Error::Config {
            file: origin.into(),
            line: i + 1,
            detail,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let k = k.trim();
        if out.iter().any(|(seen, ..)| seen == k) {
            return Err(err(format!("duplicate key {k}")));
        }
        out.push((k.into(), v.trim().into(), i + 1));
    }
    Ok(out)
}

macro_rules! config_format {
    ($ty:ty, $parse:ident, $text:ident, { $($key:literal => $($field:ident).+),* $(,)? }) => {
        pub fn $parse(text: &str, origin: &str) -> Result<$ty> {
            let mut c = <$ty>::default();
            for (k, v, line) in pairs(text, origin)? {
                let err = |detail: String| Error::Config { file: origin.into(), line, detail };
                match k.as_str() {
                    $($key => {
                        c.$($field).+ = Value::parse(&v)
                            .ok_or_else(|| err(format!("bad value {v:?} for {k}")))?;
                    })*
                    _ => return Err(err(format!("unknown key {k}"))),
                }
            }
            Ok(c)
        }

        pub fn $text(c: &$ty) -> String {
            let mut s = String::new();
            $(writeln!(s, "{} = {}", $key, Value::show(&c.$($field).+)).unwrap();)*
            s
        }
    };
}

config_format!(PipelineConfig, parse_pipeline_config, pipeline_config_text, {
    "crop_size" => crop_size,
    "crop_margin" => crop_margin,
    "refine.lambda" => refine.lambda,
    "refine.sigma" => refine.sigma,
    "refine.connectivity" => refine.connectivity,
    "keyframes.capacity" => keyframes.capacity,
    "keyframes.alpha" => keyframes.alpha,
    "keyframes.threshold" => keyframes.threshold,
    "identity.max_alternations" => identity.max_alternations,
    "identity.tolerance" => identity.tolerance,
    "identity.bound" => identity.identity_bound,
    "identity.qn.max_iterations" => identity.qn.max_iterations,
    "identity.qn.memory" => identity.qn.memory,
    "identity.qn.gradient_tolerance" => identity.qn.gradient_tolerance,
    "identity.qn.max_backtracks" => identity.qn.max_backtracks,
    "solve_identity" => solve_identity,
    "identity_convergence" => identity_convergence,
});

config_format!(TrainConfig, parse_train_config, train_config_text, {
    "learning_rate" => learning_rate,
    "momentum" => momentum,
    "weight_decay" => weight_decay,
    "loss_weights" => loss_weights,
    "batch_size" => batch_size,
    "iterations" => iterations,
    "finetune_learning_rate" => finetune_learning_rate,
});

config_format!(CascadeConfig, parse_cascade_config, cascade_config_text, {
    "stages" => stages,
    "ferns" => ferns,
    "depth" => depth,
    "features" => features,
    "shrinkage" => shrinkage,
    "feature_sigma" => feature_sigma,
    "exclude_offface_pairs" => exclude_offface_pairs,
    "offface_limit" => offface_limit,
    "seed" => seed,
});

pub fn load_pipeline_config(path: &Path) -> Result<PipelineConfig> {
    parse_pipeline_config(
        &std::fs::read_to_string(path).at(path)?,
        &path.display().to_string(),
    )
}

pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let c = parse_train_config(
        &std::fs::read_to_string(path).at(path)?,
        &path.display().to_string(),
    )?;
    c.validate()?;
    Ok(c)
}

pub fn load_cascade_config(path: &Path) -> Result<CascadeConfig> {
    let c = parse_cascade_config(
        &std::fs::read_to_string(path).at(path)?,
        &path.display().to_string(),
    )?;
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dumped_defaults_parse_back() {
        let p = PipelineConfig::default();
        assert_eq!(
            parse_pipeline_config(&pipeline_config_text(&p), "p").unwrap(),
            p
        );
        let t = TrainConfig::default();
        assert_eq!(parse_train_config(&train_config_text(&t), "t").unwrap(), t);
        let c = CascadeConfig::default();
        assert_eq!(
            parse_cascade_config(&cascade_config_text(&c), "c").unwrap(),
            c
        );
        assert!(pipeline_config_text(&p).contains("refine.lambda = 10\n"));
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# tuned\nrefine.lambda = 4.5  # weaker smoothing\n\nrefine.connectivity=8\nsolve_identity = false\n";
        let p = parse_pipeline_config(text, "p").unwrap();
        assert_eq!(p.refine.lambda, 4.5);
        assert_eq!(p.refine.connectivity, Connectivity::Eight);
        assert!(!p.solve_identity);
        assert_eq!(p.crop_size, 128);
        let t = parse_train_config("loss_weights = 1, 0, 2", "t").unwrap();
        assert_eq!(t.loss_weights, [1.0, 0.0, 2.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let e =
            parse_pipeline_config("crop_size = 64\nrefine.lambda = lots\n", "cfg.txt").unwrap_err();
        assert!(e.to_string().starts_with("cfg.txt:2:"), "{e}");
        assert!(parse_pipeline_config("nonsense = 1", "p").is_err());
        assert!(parse_pipeline_config("crop_size 64", "p").is_err());
        assert!(parse_pipeline_config("crop_size = 1\ncrop_size = 2", "p").is_err());
        assert!(parse_train_config("loss_weights = 1, 2", "t").is_err());
    }
}
