use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pidaudit_core::audit::{
    correlate_csv, load_dataset, oracle_table, probe_sweep, risk_decisions, run_audit, to_ndjson,
    AuditConfig, DecoderSource, Side,
};
use pidaudit_core::dataset::write_container;
use pidaudit_core::pid::AuditVerdict;
use pidaudit_core::synth::{
    gen_gate, gen_planted_residual, gen_unlearning_sim, PlantedConfig, UnlearnSimConfig,
};
use pidaudit_core::{Error, Result};

const EXIT_FAIL: u8 = 3;

#[derive(Parser)]
#[command(name = "pidaudit", version, about = "Audit residual membership information in paired representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full audit described by a config file.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Probe one side of each dataset and print AUROC and information per file.
    ProbeSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SideArg::Base)]
        side: SideArg,
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        datasets: Vec<PathBuf>,
    },
    /// Score every sample with the risk gate and write NDJSON decisions.
    Risk {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_enum, default_value_t = DecoderArg::Independent)]
        decoders: DecoderArg,
        #[command(flatten)]
        common: Common,
    },
    /// Print the exact decomposition of a named gate.
    Oracle {
        #[arg(long)]
        gate: String,
        #[arg(long, default_value_t = 4)]
        max_q: usize,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Pearson, Spearman and OLS fit of a two-column CSV.
    Correlate {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as a PIDREP file.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Base,
    Unlearned,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Independent,
    Rine,
}

#[derive(Subcommand)]
enum SynthKind {
    /// Linear-Gaussian unlearning simulation.
    Sim {
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 2.0)]
        signal: f64,
        #[arg(long, default_value_t = 1.0)]
        retention: f64,
        #[arg(long, default_value_t = 0.0)]
        unique_b: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Named gate embedded as noisy one-hot rows.
    Gate {
        #[arg(long)]
        gate: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Retain, unlearned-forget and residual-forget population.
    Planted {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<AuditConfig> {
    let cfg = match path {
        Some(p) => AuditConfig::load(p)?,
        None => AuditConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn cmd_audit(config: &Path, common: &Common) -> Result<ExitCode> {
    let cfg = load_config(Some(config), common.seed)?;
    let report = run_audit(&cfg)?;
    let text = report.to_json();
    // The flag picks the destination without entering the recorded config.
    match common.out.as_ref().or(cfg.out.as_ref()) {
        Some(out) => {
            write_file(out, &text)?;
            for d in &report.datasets {
                println!(
                    "{}: residual {:.4} bits, unlearned {:.4} bits, synergy {:.4} bits, verdict {}",
                    d.path,
                    d.pid.i_cap,
                    d.pid.i_uniq_b,
                    d.pid.i_syn,
                    verdict_str(d.interpretation.verdict)
                );
            }
            println!("overall verdict {}; report written to {}", verdict_str(report.verdict), out.display());
        }
        None => println!("{text}"),
    }
    Ok(match report.verdict {
        AuditVerdict::Pass => ExitCode::SUCCESS,
        AuditVerdict::Fail => ExitCode::from(EXIT_FAIL),
    })
}

fn verdict_str(v: AuditVerdict) -> &'static str {
    match v {
        AuditVerdict::Pass => "pass",
        AuditVerdict::Fail => "fail",
    }
}

fn cmd_probe_sweep(config: Option<&Path>, side: SideArg, common: &Common, datasets: &[PathBuf]) -> Result<()> {
    let cfg = load_config(config, common.seed)?;
    let side = match side {
        SideArg::Base => Side::Base,
        SideArg::Unlearned => Side::Unlearned,
        SideArg::Joint => Side::Joint,
    };
    let rows = probe_sweep(datasets, &cfg, side)?;
    if let Some(out) = &common.out {
        write_file(out, &json(&rows))?;
    }
    if common.format.is_some() {
        println!("{}", json(&rows));
    } else {
        println!("path\tauroc\tmi_bits\ttest_error");
        for r in &rows {
            println!("{}\t{:.4}\t{:.4}\t{:.4}", r.path, r.auroc, r.mi_bits, r.test_error);
        }
    }
    Ok(())
}

fn cmd_risk(
    dataset: &Path,
    config: Option<&Path>,
    tau: Option<f64>,
    decoders: DecoderArg,
    common: &Common,
) -> Result<()> {
    let mut cfg = load_config(config, common.seed)?;
    if let Some(t) = tau {
        cfg.tau = t;
    }
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    let source = match decoders {
        DecoderArg::Independent => DecoderSource::Independent,
        DecoderArg::Rine => DecoderSource::Rine,
    };
    let (records, summary) = risk_decisions(&ds, &cfg, source, dataset)?;
    let lines = to_ndjson(&records);
    match &common.out {
        Some(out) => write_file(out, &lines)?,
        None => print!("{lines}"),
    }
    eprintln!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn cmd_oracle(gate: &str, max_q: usize, format: Option<Format>) -> Result<()> {
    let table = oracle_table(gate, max_q)?;
    match format {
        Some(Format::Json) => println!("{}", json(&table)),
        None => print!("{}", table.render()),
    }
    Ok(())
}

fn cmd_correlate(csv: &Path, out: Option<&Path>) -> Result<()> {
    let c = correlate_csv(csv)?;
    println!(
        "n {}  pearson {:.6}  spearman {:.6}  ols y = {:.6} x + {:.6}",
        c.n, c.pearson_r, c.spearman_rho, c.ols_slope, c.ols_intercept
    );
    let text = json(&c);
    println!("{text}");
    if let Some(out) = out {
        write_file(out, &text)?;
    }
    Ok(())
}

fn cmd_synth(kind: &SynthKind, out: Option<&Path>) -> Result<()> {
    let out = out.ok_or_else(|| Error::Invalid("synth requires --out".into()))?;
    let ds = match *kind {
        SynthKind::Sim { n, d, signal, retention, unique_b, sigma, seed } => {
            gen_unlearning_sim(&UnlearnSimConfig {
                n,
                d,
                signal_strength: signal,
                retention,
                unique_b,
                noise_sigma: sigma,
                seed,
            })?
        }
        SynthKind::Gate { ref gate, n, sigma, seed } => gen_gate(gate, n, sigma, seed)?,
        SynthKind::Planted { n, d, seed } => {
            gen_planted_residual(&PlantedConfig { n, d, seed, ..Default::default() })?.dataset
        }
    };
    write_container(&ds, out)?;
    println!("wrote {} samples ({}+{} features) to {}", ds.n(), ds.d_base(), ds.d_unlearned(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Audit { config, common } => cmd_audit(&config, &common),
        Command::ProbeSweep { config, side, common, datasets } => {
            cmd_probe_sweep(config.as_deref(), side, &common, &datasets).map(|_| ExitCode::SUCCESS)
        }
        Command::Risk { dataset, config, tau, decoders, common } => {
            cmd_risk(&dataset, config.as_deref(), tau, decoders, &common).map(|_| ExitCode::SUCCESS)
        }
        Command::Oracle { gate, max_q, format } => cmd_oracle(&gate, max_q, format).map(|_| ExitCode::SUCCESS),
        Command::Correlate { csv, out } => cmd_correlate(&csv, out.as_deref()).map(|_| ExitCode::SUCCESS),
        Command::Synth { kind, out } => cmd_synth(&kind, out.as_deref()).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            // Every error's message already embeds its sources.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
