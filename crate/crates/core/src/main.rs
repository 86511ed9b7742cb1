use clap::{Parser, Subcommand};
use semloc::builder::{build_semantic_map, BuildParams, LabeledCloud};
use semloc::config::Config;
use semloc::eval::{MetricsReport, Trajectory};
use semloc::ipm::oracle_sweep;
use semloc::localizer::{load_dataset, localize_sequence, LocalizerConfig, Rig, SolveStatus};
use semloc::map::{map_load_file, map_save_file};
use semloc::sim::{export_dataset, simulate, SimSpec};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "semloc", version, about = "Semantic map building, localization and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world, trajectory and observations.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract lane points and poles from a labeled point cloud.
    BuildMap {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize a dataset against a map.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory with ground truth.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep the compensated ground projection against exact references.
    IpmCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

fn data(path: &Path, e: impl Display) -> Failure {
    let msg = e.to_string();
    let shown = path.display().to_string();
    // IO errors already carry the path.
    if msg.contains(&shown) {
        Failure::Data(msg)
    } else {
        Failure::Data(format!("{shown}: {msg}"))
    }
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(|e| data(path, e))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { spec, out } => {
            let cfg = load_config(&spec)?;
            let sim = SimSpec::from_config(&cfg).map_err(|e| data(&spec, e))?;
            let bundle = simulate(&sim);
            export_dataset(&bundle, &out).map_err(|e| data(&out, e))?;
            eprintln!(
                "simulated {} frames, {} lane points, {} poles into {}",
                bundle.frames.len(),
                bundle.map.lanes().len(),
                bundle.map.poles().len(),
                out.display()
            );
        }
        Command::BuildMap { cloud, out } => {
            let points = LabeledCloud::load(&cloud).map_err(|e| data(&cloud, e))?;
            let (map, report) = build_semantic_map(&points, &BuildParams::default()).map_err(|e| data(&cloud, e))?;
            for r in &report.rejected_clusters {
                eprintln!("rejected cluster: {r}");
            }
            map_save_file(&map, &out).map_err(|e| data(&out, e))?;
            eprintln!(
                "{} lane points, {} poles (threshold {:?})",
                map.lanes().len(),
                map.poles().len(),
                report.threshold
            );
        }
        Command::Localize {
            map,
            dataset,
            config,
            out,
        } => {
            let semantic = map_load_file(&map).map_err(|e| data(&map, e))?;
            let frames = load_dataset(&dataset).map_err(|e| data(&dataset, e))?;
            let cfg = load_config(&config)?;
            let rig = Rig::from_config(&cfg).map_err(|e| data(&config, e))?;
            let loc = LocalizerConfig::from_config(&cfg).map_err(|e| data(&config, e))?;
            let result = localize_sequence(&frames, &semantic, &rig, &loc);
            let non_finite = result
                .frames
                .iter()
                .filter(|f| f.stats.status == SolveStatus::NonFinite)
                .count();
            if result.degraded_frames() > 0 {
                eprintln!("{} of {} frames kept their prior", result.degraded_frames(), frames.len());
            }
            if result.trajectory.poses.iter().any(|p| !p.translation.iter().all(|v| v.is_finite())) {
                return Err(Failure::Numerical("non-finite pose in output trajectory".into()));
            }
            result.trajectory.save(&out).map_err(|e| data(&out, e))?;
            if non_finite > 0 {
                return Err(Failure::Numerical(format!(
                    "{non_finite} frames produced non-finite residuals"
                )));
            }
        }
        Command::Evaluate { est, gt, report } => {
            let e = Trajectory::load(&est).map_err(|x| data(&est, x))?;
            let g = Trajectory::load(&gt).map_err(|x| data(&gt, x))?;
            let metrics = MetricsReport::compute(&e, &g).map_err(|x| Failure::Data(x.to_string()))?;
            print!("{}", metrics.to_table());
            if let Some(path) = report {
                std::fs::write(&path, metrics.render()).map_err(|x| data(&path, x))?;
            }
        }
        Command::IpmCheck { config } => {
            let cfg = load_config(&config)?;
            let rig = Rig::from_config(&cfg).map_err(|e| data(&config, e))?;
            let r = oracle_sweep(&rig.intrinsics, rig.mount.height, 100, 5f64.to_radians(), 2f64.to_radians());
            println!("zero_angles_max_abs_m\t{:e}", r.zero_abs);
            println!("roll_max_rel\t{:e}", r.roll_rel);
            println!("pitch_max_rel\t{:e}", r.pitch_rel);
            println!("yaw_max_rel\t{:e}", r.yaw_rel);
            println!("combined_road_max_rel\t{:e}", r.combined_rel);
            println!("combined_wide_max_rel\t{:e}", r.combined_wide_rel);
            println!("samples\t{}", r.samples);
            let all = [r.zero_abs, r.roll_rel, r.pitch_rel, r.yaw_rel, r.combined_rel, r.combined_wide_rel];
            if !all.iter().all(|v| v.is_finite()) {
                return Err(Failure::Numerical("sweep produced non-finite deviations".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Data(msg) | Failure::Numerical(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
