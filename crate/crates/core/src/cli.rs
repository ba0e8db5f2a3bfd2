//! Command-line front end: scenario configs in, CSV metrics and plot data
//! out.
//!
//! The CLI is a thin shell — every command is a sequence of library calls,
//! so anything it produces can be reproduced programmatically. Outputs are
//! plain CSV (plus an optional gnuplot script) to keep artifacts diffable;
//! `metrics.csv` in particular is written with shortest-round-trip float
//! formatting so repeated runs with the same seeds are byte-identical.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::Vector2;

use crate::config::{load_config, Config};
use crate::controllers::ControllerKind;
use crate::error::{GimbalError, Result};
use crate::harness::{
    mean_tracking_error_window, run_scenario, train_pipeline, NetworkPlan, RunLog,
};
use crate::nn::Mlp;
use crate::parallel::map_collect;

const METRICS_HEADER: &str = "variant,window,mte_az_deg,mte_el_deg,dec_az_pct,dec_el_pct";
const RAD2DEG: f64 = 180.0 / std::f64::consts::PI;

/// Two-axis gimbal control experiments: tracking runs, compensation-network
/// training, and controller comparisons driven by TOML scenario files.
#[derive(Debug, Parser)]
#[command(name = "gimbal-lab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario under a single controller variant.
    Run {
        /// Scenario description file (TOML).
        config: PathBuf,
        /// Controller variant: adrc, nn-adrc, or ctm-adrc. Overrides the
        /// config's [controller] variant.
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Output directory (overrides config and environment defaults).
        #[arg(long)]
        out: Option<PathBuf>,
        /// metrics.csv of an earlier run; its per-window errors become the
        /// baseline for the percent-decrease columns.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Collect closed-loop excitation data and fit the compensation network.
    Train {
        /// Scenario description file (TOML).
        config: PathBuf,
        /// Network output file (default: network.net in the output dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all three controller variants on the identical scenario and
    /// tabulate per-axis tracking errors against the baseline.
    Compare {
        /// Scenario description file (TOML).
        config: PathBuf,
        /// Output directory (overrides config and environment defaults).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and executes the selected command, returning the process
/// exit code (0 ok, 2 config, 3 numeric, 4 I/O).
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            controller,
            out,
            baseline,
        } => cmd_run(&config, controller, out.as_deref(), baseline.as_deref()),
        Command::Train { config, out } => cmd_train(&config, out.as_deref()),
        Command::Compare { config, out } => cmd_compare(&config, out.as_deref()),
    }
}

fn load(config_path: &Path) -> Result<(Config, PathBuf)> {
    let cfg = load_config(config_path)?;
    let dir = match config_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok((cfg, dir))
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// A metrics table row; decreases are relative to whatever baseline the
/// command used (absent for the baseline itself or when none was given).
struct MetricRow {
    variant: &'static str,
    window: String,
    mte: Vector2<f64>,
    dec: Option<Vector2<f64>>,
}

fn percent_decrease(base: &Vector2<f64>, ours: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        (base.x - ours.x) / base.x * 100.0,
        (base.y - ours.y) / base.y * 100.0,
    )
}

fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        let (da, de) = match &r.dec {
            Some(d) => (d.x.to_string(), d.y.to_string()),
            None => (String::new(), String::new()),
        };
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant, r.window, r.mte.x, r.mte.y, da, de
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn print_metrics(rows: &[MetricRow]) {
    println!(
        "{:<10} {:<10} {:>14} {:>14} {:>12} {:>12}",
        "variant", "window", "MTE az [deg]", "MTE el [deg]", "dec az [%]", "dec el [%]"
    );
    for r in rows {
        let (da, de) = match &r.dec {
            Some(d) => (format!("{:.1}", d.x), format!("{:.1}", d.y)),
            None => ("-".to_string(), "-".to_string()),
        };
        println!(
            "{:<10} {:<10} {:>14.6} {:>14.6} {:>12} {:>12}",
            r.variant, r.window, r.mte.x, r.mte.y, da, de
        );
    }
}

/// Metric windows for a run: the full post-settling span, plus the spans
/// before and after the network swap when one is scheduled.
fn metric_windows(settle_skip: f64, swap_time: Option<f64>) -> Vec<(String, f64, f64)> {
    let mut windows = vec![("full".to_string(), settle_skip, f64::INFINITY)];
    if let Some(t_swap) = swap_time {
        windows.push(("pre-swap".to_string(), settle_skip, t_swap));
        windows.push(("post-swap".to_string(), t_swap + settle_skip, f64::INFINITY));
    }
    windows
}

fn variant_rows(
    log: &RunLog,
    variant: &'static str,
    windows: &[(String, f64, f64)],
    baseline: Option<&[MetricRow]>,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::with_capacity(windows.len());
    for (name, t0, t1) in windows {
        let mte = mean_tracking_error_window(log, *t0, *t1)?;
        let dec = baseline.and_then(|rows| {
            rows.iter()
                .find(|r| &r.window == name)
                .map(|r| percent_decrease(&r.mte, &mte))
        });
        rows.push(MetricRow {
            variant,
            window: name.clone(),
            mte,
            dec,
        });
    }
    Ok(rows)
}

/// Reads the `window -> MTE` pairs from an earlier run's metrics.csv.
fn read_baseline_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            GimbalError::config(format!("baseline metrics not found: {name}"))
        } else {
            GimbalError::Io(e)
        }
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => return Err(GimbalError::format(&name, "missing metrics header")),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(GimbalError::format(
                &name,
                format!("malformed row {line:?}"),
            ));
        }
        let az: f64 = parts[2]
            .parse()
            .map_err(|_| GimbalError::format(&name, format!("bad number {:?}", parts[2])))?;
        let el: f64 = parts[3]
            .parse()
            .map_err(|_| GimbalError::format(&name, format!("bad number {:?}", parts[3])))?;
        rows.push(MetricRow {
            variant: "baseline",
            window: parts[1].to_string(),
            mte: Vector2::new(az, el),
            dec: None,
        });
    }
    Ok(rows)
}

/// Writes angle trajectories in degrees: reference and plant position per
/// axis, one column pair per variant.
fn write_position_plot(path: &Path, logs: &[(&'static str, &RunLog)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "t,ref_az_deg,ref_el_deg")?;
    for (name, _) in logs {
        write!(w, ",{name}_az_deg,{name}_el_deg")?;
    }
    writeln!(w)?;
    let frames = logs[0].1.frames.len();
    for i in 0..frames {
        let f0 = &logs[0].1.frames[i];
        write!(
            w,
            "{},{},{}",
            f0.t,
            f0.ref_az * RAD2DEG,
            f0.ref_el * RAD2DEG
        )?;
        for (_, log) in logs {
            let f = &log.frames[i];
            write!(w, ",{},{}", f.psi_a * RAD2DEG, f.theta_m * RAD2DEG)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes tracking errors in degrees, one column pair per variant.
fn write_error_plot(path: &Path, logs: &[(&'static str, &RunLog)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "t")?;
    for (name, _) in logs {
        write!(w, ",{name}_err_az_deg,{name}_err_el_deg")?;
    }
    writeln!(w)?;
    let frames = logs[0].1.frames.len();
    for i in 0..frames {
        write!(w, "{}", logs[0].1.frames[i].t)?;
        for (_, log) in logs {
            let f = &log.frames[i];
            write!(
                w,
                ",{},{}",
                (f.ref_az - f.psi_a) * RAD2DEG,
                (f.ref_el - f.theta_m) * RAD2DEG
            )?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_gnuplot_script(dir: &Path, logs: &[(&'static str, &RunLog)]) -> Result<()> {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set xlabel 't [s]'\n\n");
    s.push_str("set ylabel 'angle [deg]'\n");
    s.push_str("plot 'plot_position.csv' using 1:2 with lines title 'reference az'");
    for (k, (name, _)) in logs.iter().enumerate() {
        s.push_str(&format!(
            ", '' using 1:{} with lines title '{name} az'",
            4 + 2 * k
        ));
    }
    s.push_str("\npause -1\n\n");
    s.push_str("set ylabel 'tracking error [deg]'\n");
    s.push_str("plot 'plot_error.csv' using 1:2 with lines");
    for k in 1..logs.len() {
        s.push_str(&format!(", '' using 1:{} with lines", 2 + 2 * k));
    }
    s.push_str("\npause -1\n");
    std::fs::write(dir.join("plots.gp"), s)?;
    Ok(())
}

/// Loads the networks a variant needs; errors if nn-adrc is selected without
/// a network file configured.
fn load_networks(
    cfg: &Config,
    dir: &Path,
    kind: ControllerKind,
) -> Result<(Option<Mlp>, Option<(f64, Mlp)>)> {
    if kind != ControllerKind::NnAdrc {
        return Ok((None, None));
    }
    let path = cfg.network_path(dir).ok_or_else(|| {
        GimbalError::config(
            "the nn-adrc variant needs a trained network: set `network` under \
             [controller] (produce one with the train command)",
        )
    })?;
    let initial = load_network_file(&path)?;
    let swap = match cfg.swap_plan(dir)? {
        Some((t, p)) => Some((t, load_network_file(&p)?)),
        None => None,
    };
    Ok((Some(initial), swap))
}

fn load_network_file(path: &Path) -> Result<Mlp> {
    if !path.exists() {
        return Err(GimbalError::config(format!(
            "network file not found: {} (produce one with the train command)",
            path.display()
        )));
    }
    Mlp::load(path)
}

fn cmd_run(
    config_path: &Path,
    controller: Option<ControllerKind>,
    out: Option<&Path>,
    baseline: Option<&Path>,
) -> Result<()> {
    let (cfg, dir) = load(config_path)?;
    let kind = controller
        .or(cfg.controller.variant)
        .unwrap_or(ControllerKind::Adrc);
    let sc = cfg.scenario(&dir)?;
    let (initial, swap) = load_networks(&cfg, &dir, kind)?;
    let plan = NetworkPlan {
        initial: initial.as_ref(),
        swap: swap.as_ref().map(|(t, m)| (*t, m)),
    };
    let log = run_scenario(&sc, kind, &plan)?;

    let out_dir = cfg.output_dir(out);
    ensure_out_dir(&out_dir)?;
    log.write_csv(&out_dir.join("run.csv"))?;

    let baseline_rows = match baseline {
        Some(p) => Some(read_baseline_metrics(p)?),
        None => None,
    };
    let swap_time = swap.as_ref().map(|(t, _)| *t);
    let windows = metric_windows(cfg.settle_skip(), swap_time);
    let rows = variant_rows(&log, kind.name(), &windows, baseline_rows.as_deref())?;
    write_metrics(&out_dir.join("metrics.csv"), &rows)?;

    let logs = [(kind.name(), &log)];
    write_position_plot(&out_dir.join("plot_position.csv"), &logs)?;
    write_error_plot(&out_dir.join("plot_error.csv"), &logs)?;
    if cfg.output.gnuplot {
        write_gnuplot_script(&out_dir, &logs)?;
    }

    print_metrics(&rows);
    if log.clamp_events > 0 {
        println!(
            "note: field-of-regard clamp engaged {} times",
            log.clamp_events
        );
    }
    if log.saturation_events > 0 {
        println!(
            "note: torque saturation engaged {} times",
            log.saturation_events
        );
    }
    println!("wrote {}", out_dir.join("metrics.csv").display());
    Ok(())
}

fn cmd_train(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let (cfg, dir) = load(config_path)?;
    let sc = cfg.training_scenario(&dir)?;
    let opts = cfg.training_options()?;
    let outcome = train_pipeline(&sc, &opts)?;

    let net_path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let out_dir = cfg.output_dir(None);
            ensure_out_dir(&out_dir)?;
            out_dir.join("network.net")
        }
    };
    if let Some(parent) = net_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    outcome.mlp.save(&net_path)?;

    let history_path = net_path.with_extension("loss.csv");
    let mut text = String::from("iter,mse\n");
    for (i, mse) in outcome.report.mse_history.iter().enumerate() {
        text.push_str(&format!("{i},{mse}\n"));
    }
    std::fs::write(&history_path, text)?;

    println!(
        "trained on {} samples in {} iterations (stopped: {:?})",
        outcome.dataset_len, outcome.report.iters, outcome.report.stop
    );
    println!(
        "final MSE {:.3e} (target variance {:.3e})",
        outcome.report.final_mse, outcome.target_variance
    );
    println!(
        "wrote {} and {}",
        net_path.display(),
        history_path.display()
    );
    Ok(())
}

/// Returns the compensation network for a comparison, training one on the
/// config's excitation scenario when no usable file exists yet.
fn obtain_network(cfg: &Config, dir: &Path, out_dir: &Path) -> Result<Mlp> {
    let target = cfg
        .network_path(dir)
        .unwrap_or_else(|| out_dir.join("network.net"));
    if target.exists() {
        return Mlp::load(&target);
    }
    println!("network {} not found; training...", target.display());
    let sc = cfg.training_scenario(dir)?;
    let opts = cfg.training_options()?;
    let outcome = train_pipeline(&sc, &opts)?;
    println!(
        "trained on {} samples, final MSE {:.3e}",
        outcome.dataset_len, outcome.report.final_mse
    );
    if let Some(parent) = target.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    outcome.mlp.save(&target)?;
    Ok(outcome.mlp)
}

fn cmd_compare(config_path: &Path, out: Option<&Path>) -> Result<()> {
    let (cfg, dir) = load(config_path)?;
    let sc = cfg.scenario(&dir)?;
    let out_dir = cfg.output_dir(out);
    ensure_out_dir(&out_dir)?;

    let network = obtain_network(&cfg, &dir, &out_dir)?;
    let swap = match cfg.swap_plan(&dir)? {
        Some((t, p)) => Some((t, load_network_file(&p)?)),
        None => None,
    };

    let kinds = ControllerKind::ALL;
    let results: Vec<Result<RunLog>> = map_collect(kinds.len(), |i| {
        let kind = kinds[i];
        let plan = if kind == ControllerKind::NnAdrc {
            NetworkPlan {
                initial: Some(&network),
                swap: swap.as_ref().map(|(t, m)| (*t, m)),
            }
        } else {
            NetworkPlan::none()
        };
        run_scenario(&sc, kind, &plan)
    });
    let mut logs = Vec::with_capacity(kinds.len());
    for r in results {
        logs.push(r?);
    }

    let swap_time = swap.as_ref().map(|(t, _)| *t);
    let windows = metric_windows(cfg.settle_skip(), swap_time);
    let adrc_rows = variant_rows(&logs[0], kinds[0].name(), &windows, None)?;
    let mut rows = Vec::new();
    for (k, kind) in kinds.iter().enumerate() {
        let base = if k == 0 {
            None
        } else {
            Some(adrc_rows.as_slice())
        };
        rows.extend(variant_rows(&logs[k], kind.name(), &windows, base)?);
    }

    let named: Vec<(&'static str, &RunLog)> = kinds
        .iter()
        .zip(logs.iter())
        .map(|(k, l)| (k.name(), l))
        .collect();
    for (name, log) in &named {
        log.write_csv(&out_dir.join(format!("run_{name}.csv")))?;
    }
    write_metrics(&out_dir.join("metrics.csv"), &rows)?;
    write_position_plot(&out_dir.join("plot_position.csv"), &named)?;
    write_error_plot(&out_dir.join("plot_error.csv"), &named)?;
    if cfg.output.gnuplot {
        write_gnuplot_script(&out_dir, &named)?;
    }

    print_metrics(&rows);
    println!("wrote {}", out_dir.join("metrics.csv").display());
    Ok(())
}
