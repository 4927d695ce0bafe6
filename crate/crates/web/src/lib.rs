//! Browser demo: candidate lines on a held-out track, speed profile against
//! envelope scale, and a local line correction by conditioning.
//!
//! Every exported method returns JSON text for the page to parse.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use racedriver_core::envelope::{estimate_speed, PerformanceEnvelope};
use racedriver_core::geometry::{Point, Track};
use racedriver_core::policy::{Provenance, TargetTrajectory};
use racedriver_core::promp::{MaskShape, Observation, ProMp};
use racedriver_core::synthesis::{
    build_library, generalize, sample_lines, target_promp, DemonstrationLibrary, GeneralizeConfig, GeneralizedLine,
    LibraryConfig, TrackDemos,
};
use racedriver_core::synthetic::{self, DemoNoise};

const WIDTH: f64 = 12.0;
const TRAINING_LAPS: usize = 12;

#[derive(Serialize)]
pub struct Outline {
    pub left: Vec<Point>,
    pub right: Vec<Point>,
}

#[derive(Serialize)]
pub struct Candidates {
    pub outline: Outline,
    pub mean: Vec<Point>,
    pub samples: Vec<Vec<Point>>,
    pub inside: Vec<f64>,
}

#[derive(Serialize)]
pub struct Speeds {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub lap_time: f64,
}

#[derive(Serialize)]
pub struct Correction {
    pub before: Vec<Point>,
    pub after: Vec<Point>,
    pub target: Point,
    /// How far each station moved (m).
    pub shift: Vec<f64>,
}

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn json(v: &impl Serialize) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(fail)
}

/// A demonstration library over the oval and the five-corner track, and a
/// generalized line on the six-corner track that neither contains.
#[wasm_bindgen]
pub struct Demo {
    track: Track,
    line: GeneralizedLine,
    prior: ProMp,
}

impl Demo {
    pub fn build(seed: u64) -> racedriver_core::Result<Self> {
        let demos = [synthetic::oval(300.0, 50.0, WIDTH)?, synthetic::five_corner(WIDTH)?]
            .into_iter()
            .enumerate()
            .map(|(k, track)| {
                let laps = synthetic::noisy_demonstrations(&track, TRAINING_LAPS, &DemoNoise::default(), seed + k as u64)?;
                Ok(TrackDemos { track, laps })
            })
            .collect::<racedriver_core::Result<Vec<_>>>()?;
        let library: DemonstrationLibrary = build_library(&demos, &LibraryConfig::default())?;
        let track = synthetic::six_corner(WIDTH)?;
        let config = GeneralizeConfig::default();
        let line = generalize(&track, &library, &config)?;
        let lines: Vec<Vec<Point>> = sample_lines(&line, &track, 12, seed)?.into_iter().map(|s| s.points).collect();
        let prior = target_promp(&lines, &track, &PerformanceEnvelope::default(), config.center_spacing)?;
        Ok(Self { track, line, prior })
    }

    pub fn n_stations(&self) -> usize {
        self.track.n_stations()
    }

    pub fn candidates(&self, count: usize, seed: u64) -> racedriver_core::Result<Candidates> {
        let samples = sample_lines(&self.line, &self.track, count, seed)?;
        Ok(Candidates {
            outline: Outline {
                left: self.track.left_border(),
                right: self.track.right_border(),
            },
            mean: self.line.mean_line.clone(),
            inside: samples.iter().map(|s| s.inside_fraction).collect(),
            samples: samples.into_iter().map(|s| s.points).collect(),
        })
    }

    pub fn speeds(&self, scale: f64) -> racedriver_core::Result<Speeds> {
        let env = PerformanceEnvelope::default().with_scale(scale.clamp(0.05, 1.0));
        let p = estimate_speed(&self.line.mean_line, &env)?;
        let mut s = Vec::with_capacity(p.v.len());
        let mut acc = 0.0;
        for dt_v in p.dt.iter().zip(&p.v) {
            s.push(acc);
            acc += dt_v.0 * dt_v.1;
        }
        Ok(Speeds {
            s,
            v: p.v,
            lap_time: p.lap_time,
        })
    }

    /// Pulls the mean line `offset` meters to the left at `station` and
    /// conditions the prior on it, optionally with a masked covariance.
    pub fn correct(&self, station: usize, offset: f64, masked: bool) -> racedriver_core::Result<Correction> {
        let station = station % self.n_stations();
        let before = TargetTrajectory::from_promp(&self.prior, Provenance::Sampled)?.line().to_vec();
        let n = self.track.normal(station);
        let target = [before[station][0] + offset * n[0], before[station][1] + offset * n[1]];
        let obs = Observation::diagonal(self.prior.basis.station(station), vec![0, 1], target.to_vec(), &[0.05, 0.05]);
        let mask = masked.then(|| self.prior.masked_covariance(6, MaskShape::RaisedCosine));
        let post = self.prior.condition(&obs, mask.as_ref())?;
        let after = TargetTrajectory::from_promp(&post, Provenance::Sampled)?.line().to_vec();
        let shift = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .collect();
        Ok(Correction {
            before,
            after,
            target,
            shift,
        })
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Demo::build(seed as u64).map_err(fail)
    }

    #[wasm_bindgen(js_name = stations)]
    pub fn stations_js(&self) -> usize {
        self.n_stations()
    }

    #[wasm_bindgen(js_name = sampleLines)]
    pub fn sample_lines_js(&self, count: usize, seed: u32) -> Result<String, JsError> {
        json(&self.candidates(count, seed as u64).map_err(fail)?)
    }

    #[wasm_bindgen(js_name = speedProfile)]
    pub fn speed_profile_js(&self, scale: f64) -> Result<String, JsError> {
        json(&self.speeds(scale).map_err(fail)?)
    }

    #[wasm_bindgen(js_name = conditionAt)]
    pub fn condition_at_js(&self, station: usize, offset: f64, masked: bool) -> Result<String, JsError> {
        json(&self.correct(station, offset, masked).map_err(fail)?)
    }
}
