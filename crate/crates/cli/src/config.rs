//! Run configuration: one TOML file per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use racedriver_core::adaptation::AdaptationConfig;
use racedriver_core::envelope::PerformanceEnvelope;
use racedriver_core::lap::SimConfig;
use racedriver_core::policy::PreviewController;
use racedriver_core::synthesis::{GeneralizeConfig, LibraryConfig};

use crate::failure::Failure;

/// Demonstration laps recorded on one track.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub track: PathBuf,
    /// Directory of lap files; every `*.csv` inside is one lap.
    pub laps: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub demos: Vec<DemoSet>,
    pub library_file: Option<PathBuf>,
    pub track: Option<PathBuf>,
    /// Sampled candidate lines written by `generalize`.
    pub samples: usize,
    pub library: LibraryConfig,
    pub generalize: GeneralizeConfig,
    /// Envelope used for target speeds; derived from the vehicle when absent.
    pub envelope: Option<PerformanceEnvelope>,
    pub sim: SimConfig,
    /// Controller gains; matched to the vehicle when absent.
    pub policy: Option<PreviewController>,
    pub adaptation: AdaptationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            demos: Vec::new(),
            library_file: None,
            track: None,
            samples: 25,
            library: LibraryConfig::default(),
            generalize: GeneralizeConfig::default(),
            envelope: None,
            sim: SimConfig::default(),
            policy: None,
            adaptation: AdaptationConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut cfg.demos {
            rebase(&mut d.track);
            rebase(&mut d.laps);
        }
        cfg.library_file.as_mut().map(rebase);
        cfg.track.as_mut().map(rebase);
        Ok(cfg)
    }

    pub fn envelope(&self) -> PerformanceEnvelope {
        self.envelope.clone().unwrap_or_else(|| self.sim.vehicle.envelope())
    }

    pub fn policy(&self) -> PreviewController {
        self.policy
            .clone()
            .unwrap_or_else(|| PreviewController::for_vehicle(&self.sim.vehicle))
    }

    /// SHA-256 of the resolved configuration in canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every file the config points at must exist.
    pub fn check_files(&self) -> Result<(), Failure> {
        let paths = self
            .demos
            .iter()
            .flat_map(|d| [&d.track, &d.laps])
            .chain(&self.library_file)
            .chain(&self.track);
        for p in paths {
            if !p.exists() {
                return Err(Failure::Usage(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
