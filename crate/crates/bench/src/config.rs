//! Run configuration and its canonical, hashable form.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use autows::baselines::PropagationParams;
use autows::goggles::ClusterMethod;
use autows::label_model::{DawidSkeneParams, FillPolicy, LabelModelKind};
use autows::SynthesisConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SnubaUnipolar,
    SnubaMultipolar,
    IwsAuto,
    IwsInteractive,
    Goggles,
    FewShot,
    LabelProp,
    ZeroShot,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::SnubaUnipolar,
        Method::SnubaMultipolar,
        Method::IwsAuto,
        Method::IwsInteractive,
        Method::Goggles,
        Method::FewShot,
        Method::LabelProp,
        Method::ZeroShot,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::SnubaUnipolar => "snuba_unipolar",
            Method::SnubaMultipolar => "snuba_multipolar",
            Method::IwsAuto => "iws_auto",
            Method::IwsInteractive => "iws_interactive",
            Method::Goggles => "goggles",
            Method::FewShot => "few_shot",
            Method::LabelProp => "label_prop",
            Method::ZeroShot => "zero_shot",
        }
    }

    /// Methods whose output comes from LF votes and a label model.
    pub fn uses_lfs(self) -> bool {
        matches!(
            self,
            Method::SnubaUnipolar | Method::SnubaMultipolar | Method::IwsAuto | Method::IwsInteractive
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Everything that determines one run. `seed` drives every random choice;
/// it overrides `synthesis.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Manifest provenance key, optionally with derived transforms
    /// (`raw+pca32`). Defaults to the manifest's default; `zero_shot`
    /// defaults to the first `*_logits` provenance.
    pub provenance: Option<String>,
    /// Extra representations stacked by `goggles`.
    pub extra_provenances: Vec<String>,
    pub method: Method,
    pub label_model: LabelModelKind,
    pub synthesis: SynthesisConfig,
    pub dawid_skene: DawidSkeneParams,
    /// Automated IWS accuracy threshold; `None` uses the class-count default.
    pub iws_threshold: Option<f64>,
    pub min_pool: usize,
    /// Verdict log replayed by `iws_interactive`.
    pub verdict_log: Option<PathBuf>,
    pub goggles_method: ClusterMethod,
    pub propagation: PropagationParams,
    pub fill_policy: FillPolicy,
    /// Use only the first `label_budget` labeled examples.
    pub label_budget: Option<usize>,
    pub standardize: bool,
    /// Merge the manifest's external votes into LF methods.
    pub use_external_votes: bool,
    pub seed: u64,
    /// Cache root; not part of the cache key.
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            provenance: None,
            extra_provenances: Vec::new(),
            method: Method::SnubaUnipolar,
            label_model: LabelModelKind::DawidSkene,
            synthesis: SynthesisConfig::default(),
            dawid_skene: DawidSkeneParams::default(),
            iws_threshold: None,
            min_pool: autows::iws::DEFAULT_MIN_POOL,
            verdict_log: None,
            goggles_method: ClusterMethod::Gmm,
            propagation: PropagationParams::default(),
            fill_policy: FillPolicy::PriorSample,
            label_budget: None,
            standardize: false,
            use_external_votes: true,
            seed: 0,
            output_dir: PathBuf::from("autows-out"),
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Makes relative input paths relative to `base` (a config file's
    /// directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [Some(&mut self.manifest), self.verdict_log.as_mut()].into_iter().flatten() {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        }
    }

    /// The config as it is hashed: output location removed, the seed
    /// copied into the synthesis settings.
    pub fn canonical(&self) -> RunConfig {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.synthesis.seed = c.seed;
        c
    }

    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.canonical())?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.as_os_str().is_empty() {
            return Err(Error::Config("no manifest given".into()));
        }
        if let Some(t) = self.iws_threshold {
            if !t.is_finite() {
                return Err(Error::Config("iws_threshold must be finite".into()));
            }
        }
        if self.method == Method::IwsInteractive && self.verdict_log.is_none() {
            return Err(Error::Config(
                "iws_interactive runs need a verdict log; use `serve` for live sessions".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.id()));
        }
        assert!("snuba".parse::<Method>().is_err());
    }

    #[test]
    fn canonical_form_ignores_output_dir() {
        let a = RunConfig {
            manifest: "m.json".into(),
            output_dir: "x".into(),
            ..Default::default()
        };
        let b = RunConfig {
            output_dir: "y".into(),
            ..a.clone()
        };
        assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
        let c = RunConfig { seed: 3, ..a.clone() };
        assert_ne!(a.canonical_json().unwrap(), c.canonical_json().unwrap());
    }

    #[test]
    fn partial_config_parses() {
        let c: RunConfig = serde_json::from_str(r#"{"manifest": "m.json", "method": "goggles"}"#).unwrap();
        assert_eq!(c.method, Method::Goggles);
        assert_eq!(c.min_pool, 10);
        assert!(serde_json::from_str::<RunConfig>(r#"{"manifest": "m.json", "bogus": 1}"#).is_err());
    }
}
