use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use risguard::algorithms::run_mode;
use risguard::harness::{
    aggregate_csv, detection_oracle, heatmap_csv, meta_json, realizations_csv, run_experiment, sweep, HeatmapGrid,
    SweepParameter, DEFAULT_HEATMAP_GRID,
};
use risguard::metrics::{averaged_probabilities, detection_threshold};
use risguard::scenario::{build_scenario, sensing_grid};
use risguard::{AlgorithmSettings, ExperimentSpec, Mode, ScenarioConfig, ScenarioFile};

#[derive(Parser)]
#[command(name = "risguard", version, about = "RIS-assisted ISAC design that hides sensed targets from an adversarial detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; omitted fields take the reference defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Start from the desk-scale scenario (M=2, N=16, K=2, L=4) instead of the reference one.
    #[arg(long)]
    desk: bool,
    /// Base seed; realization r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// proposed-adaptive, proposed-fixed[:n] or baseline-sense-max[:n].
    #[arg(long, default_value = "proposed-adaptive")]
    mode: String,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scenario (or several paired realizations) and write the trace.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        realizations: usize,
    },
    /// Repeat the experiment over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        realizations: usize,
        /// p-max (dBm), gamma-c (dB), gamma-s (dB) or n.
        #[arg(long)]
        param: String,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// FA/MD probability maps of the adversarial detector over the sensing region.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        realizations: usize,
        /// Azimuth x elevation, e.g. 21x21.
        #[arg(long)]
        grid: Option<String>,
        /// Energy samples averaged per decision.
        #[arg(long, default_value_t = 10)]
        ts: usize,
    },
    /// Monte Carlo check of the averaged energy detector against the closed forms.
    Oracle {
        #[arg(long)]
        omega0: f64,
        #[arg(long)]
        omega1: f64,
        /// Decision threshold; defaults to the likelihood-ratio threshold.
        #[arg(long)]
        thresh: Option<f64>,
        #[arg(long, default_value_t = 1)]
        ts: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_mode(s: &str, cfg: &ScenarioConfig) -> Result<Mode> {
    let (name, n) = match s.split_once(':') {
        Some((a, b)) => (a, Some(b.parse::<usize>().with_context(|| format!("bad reflecting-set size in `{s}`"))?)),
        None => (s, None),
    };
    let n = n.unwrap_or(cfg.initial_reflecting);
    Ok(match name {
        "proposed-adaptive" | "adaptive" => Mode::ProposedAdaptive,
        "proposed-fixed" | "fixed" => Mode::ProposedFixed(n),
        "baseline-sense-max" | "baseline" => Mode::BaselineSenseMax(n),
        _ => bail!("unknown mode `{s}`"),
    })
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once(['x', 'X']).context("grid must look like 21x21")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn load(common: &Common) -> Result<(ScenarioConfig, AlgorithmSettings, Mode)> {
    let (mut cfg, settings) = match &common.config {
        Some(p) => ScenarioFile::load(p).with_context(|| format!("reading {}", p.display()))?.resolve()?,
        None => (if common.desk { ScenarioConfig::desk() } else { ScenarioConfig::default() }, AlgorithmSettings::default()),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    settings.validate()?;
    let mode = parse_mode(&common.mode, &cfg)?;
    Ok((cfg, settings, mode))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, realizations } => {
            let (cfg, settings, mode) = load(&common)?;
            fs::create_dir_all(&common.out)?;
            let sc = build_scenario(&cfg)?;
            let out = run_mode(&sc, &cfg, &settings, mode)?;
            write(&common.out, "trace.csv", &out.trace.to_csv())?;
            write(&common.out, "timing.csv", &out.trace.timing_csv())?;
            write(&common.out, "state.json", &serde_json::to_string_pretty(&out.state)?)?;
            let mut extra = serde_json::json!({
                "command": "run",
                "mode": mode,
                "status": format!("{:?}", out.status),
                "outer_iterations": out.outer_iterations,
                "reflecting": out.partition.reflecting(),
                "max_detector_sinr_db": 10.0 * out.max_detector_sinr.log10(),
                "audit": out.audit,
            });
            if realizations > 1 {
                let mut spec = ExperimentSpec::new(cfg.clone(), mode, realizations);
                spec.settings = settings.clone();
                let agg = run_experiment(&spec)?;
                write(&common.out, "aggregate.csv", &aggregate_csv(&agg))?;
                write(&common.out, "realizations.csv", &realizations_csv(&agg))?;
                extra["realizations"] = realizations.into();
            }
            write(&common.out, "meta.json", &meta_json(&cfg, &settings, extra)?)?;
            println!(
                "{}: {:?}, max detector SINR {:.2} dB, |R| = {}",
                mode.label(),
                out.status,
                10.0 * out.max_detector_sinr.log10(),
                out.partition.nr()
            );
        }
        Command::Sweep { common, realizations, param, values } => {
            let (cfg, settings, mode) = load(&common)?;
            let parameter = SweepParameter::parse(&param)?;
            fs::create_dir_all(&common.out)?;
            let mut spec = ExperimentSpec::new(cfg.clone(), mode, realizations);
            spec.settings = settings.clone();
            let agg = sweep(&spec, parameter, &values)?;
            write(&common.out, "aggregate.csv", &aggregate_csv(&agg))?;
            write(&common.out, "realizations.csv", &realizations_csv(&agg))?;
            if let Some(tr) = agg.points.first().and_then(|p| p.trace.as_ref()) {
                write(&common.out, "trace.csv", &tr.to_csv())?;
            }
            let extra = serde_json::json!({
                "command": "sweep",
                "mode": mode,
                "parameter": parameter,
                "values": values,
                "realizations": realizations,
            });
            write(&common.out, "meta.json", &meta_json(&cfg, &settings, extra)?)?;
            print!("{}", aggregate_csv(&agg));
        }
        Command::Heatmap { common, realizations, grid, ts } => {
            let (cfg, settings, mode) = load(&common)?;
            let resolution = grid.as_deref().map(parse_grid).transpose()?.unwrap_or(DEFAULT_HEATMAP_GRID);
            fs::create_dir_all(&common.out)?;
            let mut spec = ExperimentSpec::new(cfg.clone(), mode, realizations);
            spec.settings = settings.clone();
            spec.heatmap = Some(HeatmapGrid { resolution, samples_per_decision: ts });
            let agg = run_experiment(&spec)?;
            let point = &agg.points[0];
            let Some(h) = &point.heatmap else {
                bail!("no realization completed; nothing to map");
            };
            write(&common.out, "heatmap_fa.csv", &heatmap_csv(&h.points, &h.fa))?;
            write(&common.out, "heatmap_md.csv", &heatmap_csv(&h.points, &h.md))?;
            write(&common.out, "aggregate.csv", &aggregate_csv(&agg))?;
            if let Some(tr) = &point.trace {
                write(&common.out, "trace.csv", &tr.to_csv())?;
            }
            let extra = serde_json::json!({
                "command": "heatmap",
                "mode": mode,
                "grid": resolution,
                "samples_per_decision": ts,
                "realizations": realizations,
                "grid_points": sensing_grid(&cfg, resolution).len(),
            });
            write(&common.out, "meta.json", &meta_json(&cfg, &settings, extra)?)?;
            println!("{} of {} realizations mapped", point.completed, realizations);
        }
        Command::Oracle { omega0, omega1, thresh, ts, trials, seed } => {
            let thresh = match thresh {
                Some(t) => t,
                None => detection_threshold(omega0, omega1)?,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = detection_oracle(omega0, omega1, thresh, ts, trials, &mut rng);
            let closed = averaged_probabilities(omega1 / omega0 - 1.0, ts).ok();
            let v = serde_json::json!({
                "omega0": omega0,
                "omega1": omega1,
                "thresh": thresh,
                "ts": ts,
                "trials": trials,
                "estimate": est,
                "closed_form_at_lr_threshold": closed.map(|(p, q)| serde_json::json!({"fa": p, "md": q})),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}
