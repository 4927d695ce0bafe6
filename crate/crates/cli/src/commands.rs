use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use racedriver_core::adaptation::{adaptation_loop, IterationRecord, Outcome};
use racedriver_core::envelope::estimate_speed;
use racedriver_core::geometry::{Point, Track};
use racedriver_core::io::{self, LapRecord};
use racedriver_core::lap::{run_lap, LapSummary};
use racedriver_core::policy::{Provenance, TargetTrajectory};
use racedriver_core::promp::ProMp;
use racedriver_core::synthesis::{
    build_library, generalize, sample_lines, target_promp, DemonstrationLibrary, GeneralizedLine, TrackDemos,
};
use racedriver_core::synthetic::{self, DemoNoise};

use crate::config::RunConfig;
use crate::failure::Failure;

pub type CmdResult = Result<(), Failure>;

/// Every JSON output carries the seed and config digest it came from.
#[derive(Serialize, Deserialize)]
pub struct Artifact<T> {
    pub seed: u64,
    pub config_digest: String,
    pub data: T,
}

pub struct Run {
    pub config: RunConfig,
    pub digest: String,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Self, Failure> {
        let digest = config.digest();
        let out = config.out.clone();
        fs::create_dir_all(&out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
        Ok(Self { config, digest, out })
    }

    fn meta(&self) -> Vec<(&'static str, String)> {
        vec![("seed", self.config.seed.to_string()), ("config_digest", self.digest.clone())]
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn json<T: Serialize>(&self, name: &str, data: T) -> CmdResult {
        let art = Artifact {
            seed: self.config.seed,
            config_digest: self.digest.clone(),
            data,
        };
        io::write_json(self.path(name), &art)?;
        info!("wrote {}", self.path(name).display());
        Ok(())
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.path(name);
        let f = File::create(&p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
        Ok(BufWriter::new(f))
    }

    fn lap_file(&self, name: &str, records: &[LapRecord]) -> CmdResult {
        io::write_lap(self.create(name)?, records, &self.meta())?;
        Ok(())
    }

    fn lines_file(&self, name: &str, lines: &[Vec<Point>]) -> CmdResult {
        let mut w = self.create(name)?;
        self.comment(&mut w, "#")?;
        io::write_lines(w, lines)?;
        Ok(())
    }

    fn svg(&self, name: &str, track: &Track, lines: &[(&[Point], &str)]) -> CmdResult {
        let mut w = self.create(name)?;
        writeln!(w, "<!-- seed: {} config_digest: {} -->", self.config.seed, self.digest).map_err(io_fail)?;
        w.write_all(io::render_svg(track, lines).as_bytes()).map_err(io_fail)?;
        Ok(())
    }

    fn comment(&self, w: &mut impl Write, mark: &str) -> CmdResult {
        for (k, v) in self.meta() {
            writeln!(w, "{mark} {k}: {v}").map_err(io_fail)?;
        }
        Ok(())
    }
}

fn io_fail(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let art: Artifact<T> = io::read_json(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(art.data)
}

fn required<'a>(flag: Option<&'a PathBuf>, key: Option<&'a PathBuf>, what: &str) -> Result<&'a PathBuf, Failure> {
    flag.or(key)
        .ok_or_else(|| Failure::Usage(format!("no {what} given (flag or config key)")))
}

fn lap_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(format!("no lap files in {}", dir.display())));
    }
    Ok(files)
}

#[derive(Serialize)]
struct FitReport {
    track: String,
    laps: usize,
    stations: usize,
    basis_functions: usize,
    reconstruction_rms: f64,
}

pub fn fit(run: &Run) -> CmdResult {
    let cfg = &run.config;
    if cfg.demos.is_empty() {
        return Err(Failure::Usage("config lists no demonstrations".into()));
    }
    let mut demos = Vec::new();
    for set in &cfg.demos {
        let track = io::read_track(&set.track)?;
        let laps = lap_files(&set.laps)?
            .iter()
            .map(|f| io::read_lap(f).map(|r| io::lap_points(&r)))
            .collect::<racedriver_core::Result<Vec<_>>>()?;
        demos.push(TrackDemos { track, laps });
    }
    let library = build_library(&demos, &cfg.library)?;
    let report: Vec<FitReport> = library
        .entries
        .iter()
        .map(|e| FitReport {
            track: e.track.name.clone(),
            laps: e.laps,
            stations: e.track.n_stations(),
            basis_functions: e.promp.basis.n_bf,
            reconstruction_rms: e.fit_rms,
        })
        .collect();
    for r in &report {
        println!("{}: {} laps, fit RMS {:.4} m", r.track, r.laps, r.reconstruction_rms);
    }
    run.json("library.json", &library)?;
    run.json("fit_report.json", &report)
}

#[derive(Serialize)]
struct SampleReport {
    track: String,
    samples: usize,
    inside_fraction: Vec<f64>,
    mean_line_lap_time: f64,
    mean_line_converged: bool,
    narrow_stations: Vec<usize>,
}

pub fn generalize_cmd(run: &Run, library: Option<&PathBuf>, track: Option<&PathBuf>) -> CmdResult {
    let cfg = &run.config;
    let library: DemonstrationLibrary =
        read_artifact(required(library, cfg.library_file.as_ref(), "library")?)?;
    let track = io::read_track(required(track, cfg.track.as_ref(), "track")?)?;
    let gen: GeneralizedLine = generalize(&track, &library, &cfg.generalize)?;
    let samples = sample_lines(&gen, &track, cfg.samples, cfg.seed)?;
    let lines: Vec<Vec<Point>> = samples.iter().map(|s| s.points.clone()).collect();
    let env = cfg.envelope();
    let prior = target_promp(&lines, &track, &env, cfg.generalize.center_spacing)?;
    let report = SampleReport {
        track: track.name.clone(),
        samples: samples.len(),
        inside_fraction: samples.iter().map(|s| s.inside_fraction).collect(),
        mean_line_lap_time: estimate_speed(&gen.mean_line, &env)?.lap_time,
        mean_line_converged: gen.converged,
        narrow_stations: gen.infeasible.clone(),
    };
    let worst = report.inside_fraction.iter().copied().fold(1.0, f64::min);
    println!(
        "{}: {} samples, worst inside fraction {:.3}, mean line lap {:.2} s",
        report.track, report.samples, worst, report.mean_line_lap_time
    );
    run.lines_file("samples.csv", &lines)?;
    let mut layers: Vec<(&[Point], &str)> = lines.iter().map(|l| (l.as_slice(), "#9ab")).collect();
    layers.push((&gen.mean_line, "#c22"));
    run.svg("samples.svg", &track, &layers)?;
    run.json("generalized.json", &gen)?;
    run.json("sample_report.json", &report)?;
    run.json("prior.json", &prior)
}

pub fn simulate(run: &Run, prior: &Path, track: Option<&PathBuf>) -> CmdResult {
    let cfg = &run.config;
    let promp: ProMp = read_artifact(prior)?;
    let track = io::read_track(required(track, cfg.track.as_ref(), "track")?)?;
    let target = TargetTrajectory::from_promp(&promp, Provenance::Sampled)?;
    let log = run_lap(&cfg.policy(), &target, &track, &cfg.sim)?;
    let summary = log.summary(&track);
    print_summary(&summary, target.speed.lap_time);
    let driven: Vec<Point> = log.samples.iter().map(|s| [s.state.x, s.state.y]).collect();
    run.lap_file("lap.csv", &io::lap_records(&log))?;
    run.svg("lap.svg", &track, &[(target.line(), "#9ab"), (&driven, "#c22")])?;
    run.json("summary.json", &summary)
}

fn print_summary(s: &LapSummary, predicted: f64) {
    match (s.lap_time, s.exit_station) {
        (Some(t), _) => println!("lap completed in {t:.3} s (target {predicted:.3} s)"),
        (None, Some(k)) => println!(
            "lap failed ({:?}) at station {k}, s = {:.1} m, after {:.1} m",
            s.status,
            s.exit_s.unwrap_or(f64::NAN),
            s.distance
        ),
        (None, None) => println!("lap failed ({:?}) after {:.1} m", s.status, s.distance),
    }
}

#[derive(Serialize)]
struct AdaptReport<'a> {
    outcome: Outcome,
    iterations: usize,
    first_completion: Option<usize>,
    best_lap_time: Option<f64>,
    corner_iterations: &'a [usize],
    distance_regressions: Vec<usize>,
    records: &'a [IterationRecord],
}

pub fn adapt(run: &Run, prior: &Path, track: Option<&PathBuf>) -> CmdResult {
    let cfg = &run.config;
    let promp: ProMp = read_artifact(prior)?;
    let track = io::read_track(required(track, cfg.track.as_ref(), "track")?)?;
    let policy = cfg.policy();
    let state = adaptation_loop(&promp, &track, &cfg.envelope(), &policy, &cfg.sim, &cfg.adaptation)?;
    for r in &state.records {
        let result = match r.summary.lap_time {
            Some(t) => format!("lap {t:.2} s"),
            None => format!("{:?} after {:.0} m", r.summary.status, r.summary.distance),
        };
        println!("iteration {:>3}: {result}, {} events", r.iteration, r.events.len());
    }
    println!("outcome {:?}, best lap {:?}", state.outcome, state.best_lap_time);

    let mut w = run.create("progress.csv")?;
    run.comment(&mut w, "#")?;
    writeln!(w, "iteration,completed,distance,lap_time,target_lap_time,corner").map_err(io_fail)?;
    for r in &state.records {
        let opt = |v: Option<String>| v.unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iteration,
            r.summary.completed,
            r.summary.distance,
            opt(r.summary.lap_time.map(|t| t.to_string())),
            r.target_lap_time,
            opt(r.corner.map(|c| c.to_string()))
        )
        .map_err(io_fail)?;
    }
    drop(w);
    if let Some(last) = state.history.last() {
        run.lap_file("final_lap.csv", &io::lap_records(last))?;
    }
    run.svg("final_target.svg", &track, &[(state.target.line(), "#c22")])?;
    run.json(
        "report.json",
        AdaptReport {
            outcome: state.outcome,
            iterations: state.records.len(),
            first_completion: state.first_completion(),
            best_lap_time: state.best_lap_time,
            corner_iterations: &state.corner_iterations,
            distance_regressions: state.distance_regressions(),
            records: &state.records,
        },
    )?;
    run.json("final_prior.json", &state.promp)?;
    match state.outcome {
        Outcome::Unresolvable { corner } => Err(Failure::Runtime(format!("corner {corner} could not be resolved"))),
        _ => Ok(()),
    }
}

pub const PRESETS: [&str; 6] = ["oval", "three_corner", "five_corner", "six_corner", "hairpin", "long_straight"];

fn preset(name: &str, width: f64) -> Result<Track, Failure> {
    Ok(match name {
        "oval" => synthetic::oval(300.0, 50.0, width)?,
        "three_corner" => synthetic::three_corner(width)?,
        "five_corner" => synthetic::five_corner(width)?,
        "six_corner" => synthetic::six_corner(width)?,
        "hairpin" => synthetic::hairpin(width)?,
        "long_straight" => synthetic::long_straight(width)?,
        other => return Err(Failure::Usage(format!("unknown preset {other}; one of {}", PRESETS.join(", ")))),
    })
}

/// Writes a synthetic track and noisy demonstration laps driven at the
/// envelope speed.
pub fn export(run: &Run, name: &str, laps: usize, width: f64) -> CmdResult {
    let track = preset(name, width)?;
    let mut w = run.create(&format!("{name}.csv"))?;
    run.comment(&mut w, "#")?;
    io::write_track(w, &track)?;
    run.svg(&format!("{name}.svg"), &track, &[])?;
    if laps == 0 {
        return Ok(());
    }
    let env = run.config.envelope();
    let dir = format!("{name}_laps");
    fs::create_dir_all(run.path(&dir)).map_err(io_fail)?;
    let lines = synthetic::noisy_demonstrations(&track, laps, &DemoNoise::default(), run.config.seed)?;
    for (k, line) in lines.iter().enumerate() {
        let profile = estimate_speed(line, &env)?;
        let mut t = 0.0;
        let records: Vec<LapRecord> = line
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let r = LapRecord {
                    t,
                    x: p[0],
                    y: p[1],
                    v: profile.v[i],
                    ..Default::default()
                };
                t += profile.dt[i];
                r
            })
            .collect();
        run.lap_file(&format!("{dir}/lap_{k:03}.csv"), &records)?;
    }
    println!("{name}: {} m, {laps} laps in {}", track.length().round(), run.path(&dir).display());
    Ok(())
}
