//! Command-line surface: argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use linesim_core::sim::{run_scenario, RunStatus, TickLog};

use crate::config::{ConfigError, Settings};
use crate::studies::{self, StudyError};
use crate::tracks;
use crate::tune;

const USAGE: &str = "\
linesim - deterministic line-follower simulator and experiment harness

USAGE:
  linesim sim        [FLAGS]                 run one scenario, write tick/event logs
  linesim calibrate  [FLAGS]                 run the reflectance calibration procedure
  linesim tune       [--kp-range LO:HI] [FLAGS]
                                             identify the critical gain and table gains
  linesim experiment <STUDY> [FLAGS]         run a study:
                                             pid-vs-onoff | speed-sweep | detection |
                                             fsm-timing | power | soak
  linesim report <DIR>                       re-render a study's report from its
                                             stored records without re-simulating

FLAGS:
  --config PATH      load a key=value config file
  --set KEY=VALUE    override one config key (repeatable, last wins)
  --seed N           override the master seed
  --trials N         override experiment.trials
  --jobs N           cap trial parallelism (0 = all cores)
  --out DIR          output directory (default: $LFL_OUT or ./out)
  --ticks N          soak length in control ticks (soak only, default 1000000)
  --kp-range LO:HI   gain search range for tune (default 1:60)
  --help             show this text

Outputs are deterministic: rerunning with the same config and seed rewrites
byte-identical files.
";

/// Exit codes: 0 success, 2 usage/config error, 3 simulation or study failure.
pub fn run(args: Vec<String>) -> i32 {
    match dispatch(&args) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            eprintln!();
            eprint!("{USAGE}");
            2
        }
        Err(CliError::Config(e)) => {
            eprintln!("{e}");
            2
        }
        Err(CliError::Study(e)) => {
            eprintln!("{e}");
            3
        }
        Err(CliError::Io(e)) => {
            eprintln!("{e}");
            3
        }
    }
}

enum CliError {
    Usage(String),
    Config(ConfigError),
    Study(StudyError),
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Config(c) => CliError::Config(c),
            other => CliError::Study(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

struct Invocation {
    subcommand: String,
    study_or_dir: Option<String>,
    settings: Settings,
    out_dir: PathBuf,
    soak_ticks: u64,
    kp_range: (f64, f64),
}

fn dispatch(args: &[String]) -> Result<i32, CliError> {
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        print!("{USAGE}");
        return Ok(if args.is_empty() { 2 } else { 0 });
    }
    let invocation = parse_args(args)?;
    init_thread_pool(invocation.settings.jobs);
    match invocation.subcommand.as_str() {
        "sim" => cmd_sim(&invocation),
        "calibrate" => cmd_calibrate(&invocation),
        "tune" => cmd_tune(&invocation),
        "experiment" => cmd_experiment(&invocation),
        "report" => cmd_report(&invocation),
        other => Err(CliError::Usage(format!("unknown subcommand `{other}`"))),
    }
}

fn parse_args(args: &[String]) -> Result<Invocation, CliError> {
    let subcommand = args[0].clone();
    let mut study_or_dir = None;
    let mut settings = Settings::default();
    let mut config_text: Option<(PathBuf, String)> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut out_dir: Option<PathBuf> = None;
    let mut soak_ticks = 1_000_000u64;
    let mut kp_range = (1.0, 60.0);

    let mut it = args[1..].iter().peekable();
    let need_value = |it: &mut std::iter::Peekable<std::slice::Iter<String>>,
                          flag: &str|
     -> Result<String, CliError> {
        it.next()
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("missing value for {flag}")))
    };
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => {
                let path = PathBuf::from(need_value(&mut it, "--config")?);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(ConfigError::Io(std::io::Error::new(
                        e.kind(),
                        format!("{}: {e}", path.display()),
                    )))
                })?;
                config_text = Some((path, text));
            }
            "--set" => {
                let pair = need_value(&mut it, "--set")?;
                let (k, v) = pair.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--set expects KEY=VALUE, got `{pair}`"))
                })?;
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            "--seed" => overrides.push(("seed".into(), need_value(&mut it, "--seed")?)),
            "--trials" => {
                overrides.push(("experiment.trials".into(), need_value(&mut it, "--trials")?))
            }
            "--jobs" => overrides.push(("jobs".into(), need_value(&mut it, "--jobs")?)),
            "--out" => out_dir = Some(PathBuf::from(need_value(&mut it, "--out")?)),
            "--ticks" => {
                soak_ticks = need_value(&mut it, "--ticks")?.parse().map_err(|_| {
                    CliError::Usage("--ticks expects an integer".into())
                })?;
            }
            "--kp-range" => {
                let spec = need_value(&mut it, "--kp-range")?;
                let (lo, hi) = spec.split_once(':').ok_or_else(|| {
                    CliError::Usage(format!("--kp-range expects LO:HI, got `{spec}`"))
                })?;
                kp_range = (
                    lo.parse().map_err(|_| {
                        CliError::Usage(format!("bad --kp-range low bound `{lo}`"))
                    })?,
                    hi.parse().map_err(|_| {
                        CliError::Usage(format!("bad --kp-range high bound `{hi}`"))
                    })?,
                );
            }
            "--help" | "-h" => {
                print!("{USAGE}");
                std::process::exit(0);
            }
            other if other.starts_with("--") => {
                return Err(CliError::Usage(format!("unknown flag `{other}`")));
            }
            positional => {
                if study_or_dir.is_some() {
                    return Err(CliError::Usage(format!(
                        "unexpected extra argument `{positional}`"
                    )));
                }
                study_or_dir = Some(positional.to_string());
            }
        }
    }

    if let Some((_, text)) = &config_text {
        settings.apply_str(text)?;
    }
    for (k, v) in &overrides {
        settings.apply(k, v, 0)?;
    }
    let out_dir = out_dir
        .or_else(|| std::env::var_os("LFL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Invocation {
        subcommand,
        study_or_dir,
        settings,
        out_dir,
        soak_ticks,
        kp_range,
    })
}

fn init_thread_pool(jobs: usize) {
    if jobs > 0 {
        // Ignore failure when a pool already exists (tests, repeated calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    for (name, contents) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, contents)?;
    }
    Ok(())
}

fn write_run_metadata(
    dir: &Path,
    study: &str,
    settings: &Settings,
) -> Result<(), CliError> {
    write_files(
        dir,
        &[
            ("meta.txt".into(), format!("study = {study}\n")),
            ("resolved_config.txt".into(), settings.resolved()),
        ],
    )
}

fn cmd_sim(inv: &Invocation) -> Result<i32, CliError> {
    let dir = inv.out_dir.join("sim");
    let track = tracks::load(&inv.settings.track).map_err(StudyError::from)?;
    let cfg = inv.settings.scenario()?;
    let result = run_scenario(&track, &cfg);

    let mut ticks_csv = String::from(TickLog::csv_header());
    ticks_csv.push('\n');
    for tick in &result.ticks {
        tick.write_csv_row(&mut ticks_csv);
    }
    let mut events_csv = String::from("t,from,to,trigger\n");
    for e in &result.events {
        events_csv.push_str(&format!(
            "{},{},{},{}\n",
            crate::report::sig6(e.t),
            e.from.name(),
            e.to.name(),
            e.trigger
        ));
    }
    write_run_metadata(&dir, "sim", &inv.settings)?;
    write_files(
        &dir,
        &[("ticks.csv".into(), ticks_csv), ("events.csv".into(), events_csv)],
    )?;

    let settle = inv.settings.settle;
    let measured: Vec<f64> = result
        .ticks
        .iter()
        .filter(|t| t.t >= settle)
        .map(|t| t.lateral_error_cm.abs())
        .collect();
    let mean = if measured.is_empty() {
        f64::NAN
    } else {
        measured.iter().sum::<f64>() / measured.len() as f64
    };
    println!(
        "sim: {} ticks, mean |error| {} cm, rmse {} cm, wrote {}",
        result.ticks.len(),
        crate::report::sig6(mean),
        crate::report::sig6(linesim_core::sim::rmse(
            &result.ticks,
            settle,
            f64::INFINITY
        )),
        dir.display()
    );
    match result.status {
        RunStatus::Completed => Ok(0),
        RunStatus::OffTrack { t } => {
            eprintln!("off-track at t = {t:.2} s");
            Ok(3)
        }
    }
}

fn cmd_calibrate(inv: &Invocation) -> Result<i32, CliError> {
    let dir = inv.out_dir.join("calibrate");
    let outcome = tune::run_calibration(&inv.settings)?;
    let files = tune::render_calibration(&outcome);
    write_run_metadata(&dir, "calibrate", &inv.settings)?;
    write_files(&dir, &files)?;
    print!("{}", files[0].1);
    let pass = outcome.consistency_left.pass && outcome.consistency_right.pass;
    Ok(if pass { 0 } else { 3 })
}

fn cmd_tune(inv: &Invocation) -> Result<i32, CliError> {
    let dir = inv.out_dir.join("tune");
    let outcome = tune::run_tune(&inv.settings, inv.kp_range.0, inv.kp_range.1)?;
    let files = tune::render_tune(&outcome);
    write_run_metadata(&dir, "tune", &inv.settings)?;
    write_files(&dir, &files)?;
    print!("{}", files[0].1);
    Ok(0)
}

fn cmd_experiment(inv: &Invocation) -> Result<i32, CliError> {
    let study = inv
        .study_or_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("experiment needs a study name".into()))?;
    let dir = inv.out_dir.join(study);
    let s = &inv.settings;
    let files = match study {
        "pid-vs-onoff" => {
            let records = studies::run_comparison(s, s.trials, s.seed)?;
            studies::render_comparison(&records)
        }
        "speed-sweep" => {
            let records = studies::run_speed_sweep(s, s.trials, s.seed)?;
            studies::render_speed_sweep(&records)
        }
        "detection" => {
            let records = studies::run_detection(s, s.trials.min(100), s.seed)?;
            studies::render_detection(&records)
        }
        "fsm-timing" => {
            let records = studies::run_fsm_timing(s, s.trials, s.seed)?;
            studies::render_fsm_timing(&records)
        }
        "power" => {
            let reference = studies::PowerTable::reference(s.power_capacity_mah);
            reference.validate()?;
            let simulated = studies::simulated_duty(s, s.seed)?;
            studies::render_power(&reference, &simulated, s.power_derating)
        }
        "soak" => {
            let outcome = studies::run_soak(s, inv.soak_ticks)?;
            let files = studies::render_soak(&outcome);
            write_run_metadata(&dir, study, s)?;
            write_files(&dir, &files)?;
            print!("{}", files[1].1);
            if !outcome.completed || outcome.invariant_violations > 0 {
                return Err(CliError::Study(StudyError::Failed(format!(
                    "soak: completed={} violations={}",
                    outcome.completed, outcome.invariant_violations
                ))));
            }
            return Ok(0);
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown study `{other}` (expected pid-vs-onoff | speed-sweep | detection | fsm-timing | power | soak)"
            )));
        }
    };
    write_run_metadata(&dir, study, s)?;
    write_files(&dir, &files)?;
    for (name, contents) in &files {
        if name == "report.txt" {
            print!("{contents}");
        }
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn cmd_report(inv: &Invocation) -> Result<i32, CliError> {
    let dir = PathBuf::from(
        inv.study_or_dir
            .as_deref()
            .ok_or_else(|| CliError::Usage("report needs a study directory".into()))?,
    );
    let meta = std::fs::read_to_string(dir.join("meta.txt"))?;
    let study = meta
        .lines()
        .find_map(|l| l.strip_prefix("study = "))
        .ok_or_else(|| CliError::Study(StudyError::Failed("meta.txt has no study line".into())))?
        .trim()
        .to_string();
    let settings = Settings::parse(&std::fs::read_to_string(
        dir.join("resolved_config.txt"),
    )?)?;
    let records = std::fs::read_to_string(dir.join("records.csv"))?;
    if records.lines().nth(1).is_none() {
        return Err(CliError::Study(StudyError::Failed(
            "nothing to report: records.csv has no rows".into(),
        )));
    }

    let files = match study.as_str() {
        "pid-vs-onoff" => {
            let trace = std::fs::read_to_string(dir.join("tables/trace.csv"))?;
            let parsed = studies::parse_comparison(&records, &trace)?;
            studies::render_comparison(&parsed)
        }
        "speed-sweep" => studies::render_speed_sweep(&studies::parse_sweep(&records)?),
        "detection" => studies::render_detection(&studies::parse_detection(&records)?),
        "fsm-timing" => studies::render_fsm_timing(&studies::parse_fsm_timing(&records)?),
        "power" => {
            let (reference, simulated) =
                studies::parse_power(&records, settings.power_capacity_mah)?;
            studies::render_power(&reference, &simulated, settings.power_derating)
        }
        "soak" => studies::render_soak(&studies::parse_soak(&records)?),
        other => {
            return Err(CliError::Study(StudyError::Failed(format!(
                "cannot re-render study `{other}`"
            ))));
        }
    };
    write_files(&dir, &files)?;
    println!("re-rendered {} from stored records", dir.display());
    Ok(0)
}
