use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::flow::IntegratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Spectrum,
    Inequality,
    Decompose,
    DriftStudy,
    VerifyIdentities,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Inequality => "inequality",
            ExperimentKind::Decompose => "decompose",
            ExperimentKind::DriftStudy => "drift-study",
            ExperimentKind::VerifyIdentities => "verify-identities",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "simulate" => ExperimentKind::Simulate,
            "spectrum" => ExperimentKind::Spectrum,
            "inequality" => ExperimentKind::Inequality,
            "decompose" => ExperimentKind::Decompose,
            "drift-study" => ExperimentKind::DriftStudy,
            "verify-identities" => ExperimentKind::VerifyIdentities,
            other => {
                return Err(LabError::Validation(format!(
                    "unknown experiment `{other}`"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Truncation `N`.
    pub n: usize,
    pub p0: f64,
    /// `h^1` size of the initial perturbation.
    pub delta: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    pub out: PathBuf,
    /// Drift-study ensemble size.
    pub ensemble: usize,
    /// Random states drawn by the inequality scan.
    pub samples: usize,
    /// Perturbations live on modes `0..support` (clipped to `n`).
    pub support: usize,
    /// Suppress the mode-0 entry of perturbations.
    pub zero_mode0: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            n: 64,
            p0: 0.5,
            delta: 1e-3,
            seed: 0,
            integrator: IntegratorConfig {
                t_end: 100.0,
                ..IntegratorConfig::default()
            },
            out: PathBuf::from("runs"),
            ensemble: 32,
            samples: 10_000,
            support: 16,
            zero_mode0: false,
        }
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::Validation(m));
        if self.n < 8 {
            return bad(format!("n must be at least 8, got {}", self.n));
        }
        if !(self.p0.is_finite() && (0.0..1.0).contains(&self.p0)) {
            return bad(format!("p0 must lie in [0, 1), got {}", self.p0));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return bad(format!(
                "delta must be finite and nonnegative, got {}",
                self.delta
            ));
        }
        if self.ensemble == 0 {
            return bad("ensemble must be positive".into());
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if self.support == 0 {
            return bad("support must be positive".into());
        }
        self.integrator.validate()?;
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped;
    /// keys accept `-` or `_`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), LabError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::Validation(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| LabError::Validation(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LabError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        self.apply_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("{key}: {e}"))
        }
        let key = key.replace('_', "-");
        match key.as_str() {
            "n" => self.n = num(&key, value)?,
            "p0" => self.p0 = num(&key, value)?,
            "delta" => self.delta = num(&key, value)?,
            "seed" => self.seed = num(&key, value)?,
            "t-end" => self.integrator.t_end = num(&key, value)?,
            "out" => self.out = PathBuf::from(value),
            "rel-tol" => self.integrator.rel_tol = num(&key, value)?,
            "abs-tol" => self.integrator.abs_tol = num(&key, value)?,
            "sample-dt" => self.integrator.sample_dt = num(&key, value)?,
            "max-step" => self.integrator.max_step = num(&key, value)?,
            "backward" => self.integrator.backward = num(&key, value)?,
            "renormalize-q" => self.integrator.renormalize_q = num(&key, value)?,
            "ensemble" => self.ensemble = num(&key, value)?,
            "samples" => self.samples = num(&key, value)?,
            "support" => self.support = num(&key, value)?,
            "zero-mode0" => self.zero_mode0 = num(&key, value)?,
            "experiment" => {
                let kind: ExperimentKind = value.parse().map_err(|e: LabError| e.to_string())?;
                if kind != self.kind {
                    return Err(format!("config is for `{kind}`, running `{}`", self.kind));
                }
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &ConfigOverrides) {
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.p0 {
            self.p0 = v;
        }
        if let Some(v) = o.delta {
            self.delta = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.t_end {
            self.integrator.t_end = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.rel_tol {
            self.integrator.rel_tol = v;
        }
    }

    /// Defaults, then the file, then flags.
    pub fn resolve(
        kind: ExperimentKind,
        file: Option<&Path>,
        overrides: &ConfigOverrides,
    ) -> Result<Self, LabError> {
        let mut cfg = Self::new(kind);
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_overrides(overrides);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub n: Option<usize>,
    pub p0: Option<f64>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
    pub out: Option<PathBuf>,
    pub rel_tol: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_flags_override() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::DriftStudy);
        cfg.apply_text("# drift\nn = 96\np0=0.4\n\nt_end = 5 # short\nzero-mode0 = true\n")
            .unwrap();
        assert_eq!(cfg.n, 96);
        assert_eq!(cfg.p0, 0.4);
        assert_eq!(cfg.integrator.t_end, 5.0);
        assert!(cfg.zero_mode0);
        cfg.apply_overrides(&ConfigOverrides {
            n: Some(32),
            rel_tol: Some(1e-8),
            ..Default::default()
        });
        assert_eq!(cfg.n, 32);
        assert_eq!(cfg.p0, 0.4);
        assert_eq!(cfg.integrator.rel_tol, 1e-8);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Simulate);
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("n 5").is_err());
        assert!(cfg.apply_text("n = -3").is_err());
        assert!(cfg.apply_text("experiment = spectrum").is_err());
        cfg.n = 4;
        assert!(matches!(cfg.validate(), Err(LabError::Validation(_))));
        cfg.n = 16;
        cfg.p0 = 1.0;
        assert!(cfg.validate().is_err());
        cfg.p0 = 0.2;
        cfg.delta = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            ExperimentKind::Simulate,
            ExperimentKind::Spectrum,
            ExperimentKind::Inequality,
            ExperimentKind::Decompose,
            ExperimentKind::DriftStudy,
            ExperimentKind::VerifyIdentities,
        ] {
            assert_eq!(k.as_str().parse::<ExperimentKind>().unwrap(), k);
        }
    }
}
