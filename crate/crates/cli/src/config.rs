//! Experiment configuration: a versioned JSON document overlaid by flags.

use std::path::{Path, PathBuf};

use clap::Args;
use fb_core::poly::{fixture, HarmonicPolynomial, Polynomial};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: u32 = 1;

/// Alias so clap parses the whole comma list as one value.
pub type Point = Vec<f64>;

fn parse_polynomial(s: &str) -> Result<Polynomial, String> {
    serde_json::from_str(s).map_err(|e| format!("inline polynomial: {e}"))
}

fn parse_point(s: &str) -> Result<Point, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("point coordinate '{t}': {e}"))
        })
        .collect()
}

/// Every tunable of every command. Values left unset fall back to the
/// command's defaults when resolved.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Config schema version (must be 1).
    #[arg(skip)]
    #[serde(default)]
    pub schema: Option<u32>,
    /// Command the config was written for.
    #[arg(skip)]
    #[serde(default)]
    pub command: Option<String>,
    /// Named fixture polynomial.
    #[arg(long)]
    #[serde(default)]
    pub fixture: Option<String>,
    /// Inline polynomial as JSON: {"n": 2, "terms": [{"exp": [1, 1], "c": 1.0}]}.
    #[arg(long, value_parser = parse_polynomial)]
    #[serde(default)]
    pub polynomial: Option<Polynomial>,
    /// Ambient dimension.
    #[arg(long)]
    #[serde(default)]
    pub n: Option<usize>,
    /// Homogeneity degree.
    #[arg(long)]
    #[serde(default)]
    pub d: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    /// Highest spectral degree.
    #[arg(long)]
    #[serde(default)]
    pub max_degree: Option<usize>,
    /// Base point, comma separated.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    #[serde(default)]
    pub point: Option<Point>,
    #[arg(long)]
    #[serde(default)]
    pub rmin: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub rmax: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub points_per_decade: Option<usize>,
    /// Compare the surface route against the closed form.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default)]
    pub validate: Option<bool>,
    /// Hölder exponent of log h.
    #[arg(long)]
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Amplitude a in log h = a·|x₁|^α.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// Exclusion radius around the anchor.
    #[arg(long)]
    #[serde(default)]
    pub delta: Option<f64>,
    /// Outer truncation radius of the layer.
    #[arg(long)]
    #[serde(default)]
    pub radius: Option<f64>,
    /// Surface resolution.
    #[arg(long)]
    #[serde(default)]
    pub resolution: Option<usize>,
    /// Id of a model written by `synth`.
    #[arg(long)]
    #[serde(default)]
    pub model: Option<String>,
    /// Number of blowup scales.
    #[arg(long)]
    #[serde(default)]
    pub scales: Option<usize>,
    /// Coarsest blowup scale.
    #[arg(long)]
    #[serde(default)]
    pub r0: Option<f64>,
    /// Ratio between consecutive blowup scales.
    #[arg(long)]
    #[serde(default)]
    pub ratio: Option<f64>,
    /// Number of Whitney anchors.
    #[arg(long)]
    #[serde(default)]
    pub anchors: Option<usize>,
    /// Target Whitney exponent.
    #[arg(long)]
    #[serde(default)]
    pub beta: Option<f64>,
    /// Output root (flag > config > FB_OUTPUT_DIR > ./fb-output).
    #[arg(long)]
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let s: Settings = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        match s.schema {
            Some(SCHEMA) => Ok(s),
            Some(v) => Err(CliError::Config(format!(
                "unsupported config schema {v} (expected {SCHEMA})"
            ))),
            None => Err(CliError::Config(format!(
                "config {} lacks \"schema\": {SCHEMA}",
                path.display()
            ))),
        }
    }

    /// Flags win over the config file.
    pub fn overlay(mut self, flags: &Settings) -> Settings {
        overlay!(
            self,
            flags,
            fixture,
            polynomial,
            n,
            d,
            trials,
            seed,
            max_degree,
            point,
            rmin,
            rmax,
            points_per_decade,
            validate,
            alpha,
            amplitude,
            delta,
            radius,
            resolution,
            model,
            scales,
            r0,
            ratio,
            anchors,
            beta,
            output_dir
        );
        self
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os("FB_OUTPUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("fb-output"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// The polynomial named by `fixture` or given inline, defaulting to xy.
    pub fn source(&self) -> Result<(String, HarmonicPolynomial), CliError> {
        match (&self.fixture, &self.polynomial) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "give either a fixture or an inline polynomial, not both".into(),
            )),
            (_, Some(p)) => {
                let hp = HarmonicPolynomial::new(p.clone())
                    .map_err(|e| CliError::Config(format!("inline polynomial: {e}")))?;
                Ok(("inline".into(), hp))
            }
            (f, None) => {
                let id = f.clone().unwrap_or_else(|| "xy".into());
                let hp = fixture(&id).map_err(|e| CliError::Config(e.to_string()))?;
                Ok((id, hp))
            }
        }
    }
}

pub fn require(cond: bool, msg: impl Into<String>) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

/// Decreasing, positive radius bounds.
pub fn check_range(rmax: f64, rmin: f64) -> Result<(), CliError> {
    require(
        rmin > 0.0 && rmin < rmax && rmax.is_finite(),
        format!("need 0 < rmin < rmax (got rmin = {rmin}, rmax = {rmax})"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let base: Settings =
            serde_json::from_str(r#"{"schema": 1, "n": 3, "trials": 5, "seed": 9}"#).unwrap();
        let flags = Settings {
            trials: Some(7),
            ..Settings::default()
        };
        let s = base.overlay(&flags);
        assert_eq!((s.n, s.trials, s.seed), (Some(3), Some(7), Some(9)));
    }

    #[test]
    fn points_parse_with_signs() {
        assert_eq!(parse_point("0.5,-1e-3, 2").unwrap(), vec![0.5, -1e-3, 2.0]);
        assert!(parse_point("0.5,x").is_err());
    }

    #[test]
    fn source_resolution() {
        assert_eq!(Settings::default().source().unwrap().0, "xy");
        let inline = Settings {
            polynomial: Some(
                parse_polynomial(
                    r#"{"n":2,"terms":[{"exp":[2,0],"c":1.0},{"exp":[0,2],"c":-1.0}]}"#,
                )
                .unwrap(),
            ),
            ..Settings::default()
        };
        assert_eq!(inline.source().unwrap().1.degree(), 2);
        let not_harmonic = Settings {
            polynomial: Some(
                parse_polynomial(r#"{"n":2,"terms":[{"exp":[2,0],"c":1.0}]}"#).unwrap(),
            ),
            ..Settings::default()
        };
        assert!(matches!(not_harmonic.source(), Err(CliError::Config(_))));
        let both = Settings {
            fixture: Some("xy".into()),
            ..inline
        };
        assert!(both.source().is_err());
    }
}
