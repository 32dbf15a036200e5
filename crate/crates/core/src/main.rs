//! Command-line interface: `repair`, `verify`, `eval` and `demo`.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible repair,
//! 3 verification failure, 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polyrepair::demo::{run_acas_desk, run_overview, run_robustbox, DemoReport};
use polyrepair::io;
use polyrepair::metrics;
use polyrepair::nn::Mode;
use polyrepair::repair::{vpolytope_repair, RepairConfig};
use polyrepair::symbolic::RefStrategy;
use polyrepair::verify;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "polyrepair",
    version,
    about = "Provable repair of feedforward networks over V-polytope specifications"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefStrategyArg {
    FirstVertex,
    Centroid,
}

impl From<RefStrategyArg> for RefStrategy {
    fn from(value: RefStrategyArg) -> Self {
        match value {
            RefStrategyArg::FirstVertex => RefStrategy::FirstVertex,
            RefStrategyArg::Centroid => RefStrategy::Centroid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Argmax,
    Argmin,
}

impl From<ModeArg> for Mode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Argmax => Mode::Argmax,
            ModeArg::Argmin => Mode::Argmin,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    PaperOverview,
    AcasDesk,
    RobustboxDesk,
}

#[derive(Subcommand)]
enum Command {
    /// Repair a network against a polytope specification.
    Repair {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Shift schedule "k0:l0,k1:l1,..."; empty for none.
        #[arg(long, default_value = "")]
        partition: String,
        /// Layer whose weights (plus all later biases) the final solve edits.
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "first-vertex")]
        ref_strategy: RefStrategyArg,
        /// Where the repaired network is written.
        #[arg(long)]
        out: PathBuf,
        /// Where the machine-readable run report is written.
        #[arg(long)]
        report: PathBuf,
        /// Dump each solver input in LP format into this directory.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        /// Classification margin for spec items that omit one.
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        feas_tol: Option<f64>,
        /// Seed for the verification sampler (echoed into the report).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a network against a specification and certify each polytope.
    Verify {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Random hull samples per polytope.
        #[arg(long, default_value_t = verify::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = verify::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate accuracy on a dataset; with a baseline, also drawdown and
    /// generalization.
    Eval {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a built-in end-to-end scenario and print its pass/fail table.
    Demo {
        #[arg(value_enum)]
        scenario: Scenario,
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Perturbed dimensions for robustbox-desk (box has 2^d vertices).
        #[arg(long, default_value_t = 5)]
        d: usize,
        /// Interior samples per box for acas-desk.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Directory for artifacts (repaired networks, reports).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct EvalReport {
    version: String,
    mode: Mode,
    rows: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drawdown: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generalization: Option<f64>,
}

fn main() -> ExitCode {
    // usage errors exit with 1; clap's default of 2 is reserved for
    // infeasible repairs
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Repair {
            network,
            spec,
            partition,
            k,
            ref_strategy,
            out,
            report,
            dump_lp,
            margin,
            feas_tol,
            seed,
        } => {
            let mut cfg = RepairConfig {
                ref_strategy: ref_strategy.into(),
                dump_dir: dump_lp,
                seed,
                ..RepairConfig::default()
            };
            if let Some(m) = margin {
                cfg.classify_margin = m;
            }
            if let Some(t) = feas_tol {
                cfg.feas_tol = t;
            }
            let net = io::load_network(&network).map_err(|e| e.to_string())?;
            let spec = io::load_spec(&spec, cfg.classify_margin).map_err(|e| e.to_string())?;
            let partition = io::parse_partition(&partition).map_err(|e| e.to_string())?;

            let outcome = vpolytope_repair(&net, &spec, &partition, k, &cfg);
            io::save_report(&report, &outcome.report).map_err(|e| e.to_string())?;
            match outcome.result {
                Ok(repaired) => {
                    io::save_network(&out, &repaired).map_err(|e| e.to_string())?;
                    println!(
                        "repair optimal: {} edits, objective {:.6e}, {} constraint rows, {:.1} ms",
                        outcome.report.edits.len(),
                        outcome.report.objective.unwrap_or(0.0),
                        outcome.report.constraint_count,
                        outcome.report.total_ms
                    );
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("repair failed: {e}");
                    Ok(e.exit_code() as u8)
                }
            }
        }
        Command::Verify {
            network,
            spec,
            samples,
            tol,
            report,
            seed,
        } => {
            let net = io::load_network(&network).map_err(|e| e.to_string())?;
            let spec = io::load_spec(&spec, 1e-4).map_err(|e| e.to_string())?;
            let vreport = verify::check_polytope(&net, &spec, samples, tol, seed);
            io::save_report(&report, &vreport).map_err(|e| e.to_string())?;
            for item in &vreport.items {
                let status = match item.status {
                    verify::ItemStatus::Certified => "certified",
                    verify::ItemStatus::SampledOnly => "sampled-only",
                    verify::ItemStatus::Failed => "FAILED",
                };
                println!(
                    "item {}: {status} (worst violation {:.3e})",
                    item.index, item.worst_violation
                );
                if let Some(w) = &item.witness {
                    if item.status == verify::ItemStatus::Failed {
                        println!(
                            "  witness: input {:?} -> output {:?} violates row {} by {:.3e}",
                            w.input, w.output, w.row, w.violation
                        );
                    }
                }
            }
            Ok(if vreport.passed { 0 } else { 3 })
        }
        Command::Eval {
            network,
            baseline,
            dataset,
            mode,
            report,
        } => {
            let net = io::load_network(&network).map_err(|e| e.to_string())?;
            let ds = io::load_dataset(&dataset, mode.into()).map_err(|e| e.to_string())?;
            if let Some((x, label)) = ds.rows.first() {
                if x.len() != net.input_width() || *label >= net.output_width() {
                    return Err("dataset does not match the network's shape".into());
                }
            }
            let accuracy = metrics::accuracy(&net, &ds);
            println!("accuracy: {accuracy:.6}");
            let mut eval = EvalReport {
                version: polyrepair::VERSION.to_string(),
                mode: mode.into(),
                rows: ds.len(),
                accuracy,
                baseline_accuracy: None,
                drawdown: None,
                generalization: None,
            };
            if let Some(base_path) = baseline {
                let base = io::load_network(&base_path).map_err(|e| e.to_string())?;
                let base_acc = metrics::accuracy(&base, &ds);
                let dd = metrics::drawdown(&base, &net, &ds);
                let gen = metrics::generalization(&base, &net, &ds);
                println!("baseline accuracy: {base_acc:.6}");
                println!("drawdown: {dd:.6}");
                println!("generalization: {gen:.6}");
                eval.baseline_accuracy = Some(base_acc);
                eval.drawdown = Some(dd);
                eval.generalization = Some(gen);
            }
            if let Some(path) = report {
                io::save_report(&path, &eval).map_err(|e| e.to_string())?;
            }
            Ok(0)
        }
        Command::Demo {
            scenario,
            seed,
            d,
            samples,
            out,
        } => {
            let (demo, repaired, repair_report): (
                DemoReport,
                Option<polyrepair::nn::Network>,
                Option<polyrepair::repair::RepairReport>,
            ) = match scenario {
                Scenario::PaperOverview => (run_overview(), None, None),
                Scenario::AcasDesk => {
                    let r = run_acas_desk(seed, samples);
                    (r.demo, r.repaired, Some(r.repair_report))
                }
                Scenario::RobustboxDesk => {
                    let r = run_robustbox(d, seed);
                    (r.demo, r.repaired, Some(r.repair_report))
                }
            };
            println!("scenario: {}", demo.scenario);
            for check in &demo.checks {
                let tag = if check.passed { "PASS" } else { "FAIL" };
                println!("[{tag}] {} — {}", check.name, check.detail);
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                io::save_report(&dir.join("demo_report.json"), &demo).map_err(|e| e.to_string())?;
                if let Some(net) = &repaired {
                    io::save_network(&dir.join("repaired.json"), net).map_err(|e| e.to_string())?;
                }
                if let Some(r) = &repair_report {
                    io::save_report(&dir.join("repair_report.json"), r)
                        .map_err(|e| e.to_string())?;
                }
            }
            Ok(if demo.passed() { 0 } else { 3 })
        }
    }
}
