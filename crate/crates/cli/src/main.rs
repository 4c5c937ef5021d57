//! `nilm`: ingest meter data, synthesize households, train and apply
//! seq2point disaggregation models, and score their estimates.
//!
//! Every failure ends with one line on stderr of the form
//! `error: kind=<kind> message="<text>"` and exit status 1. Usage errors
//! print the usage text and exit with status 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use nilm_core::checkpoint;
use nilm_core::config::CaseConfig;
use nilm_core::data::{
    generate_synthetic, household_from_channels, parse_meter_file, read_canonical_csv, read_series_column,
    write_canonical_csv, MeterFormat, PowerSeries, RawChannel, SyntheticHouseSpec,
};
use nilm_core::metrics::evaluate;
use nilm_core::models::{ArchitectureKind, ArchitectureSpec};
use nilm_core::pipeline::{
    disaggregate, downstream_finetune, downstream_seed, estimate_csv, pretext_seed, pretext_train, run_case, train_zsl,
    CaseInputs, Scheme,
};
use nilm_core::report::MISSING;
use nilm_core::{Error, Result};

/// Synthetic households start at 2024-01-01T00:00:00Z.
const SYNTH_START: i64 = 1_704_067_200;

#[derive(Parser)]
#[command(name = "nilm", version, about = "Self-supervised seq2point load disaggregation")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default)]
struct Common {
    /// Run seed; overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Case or generator configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    RefitCsv,
    ChannelDat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Arch {
    S2p,
    Bigru,
}

impl From<Arch> for ArchitectureKind {
    fn from(a: Arch) -> Self {
        match a {
            Arch::S2p => ArchitectureKind::S2p,
            Arch::Bigru => ArchitectureKind::Bigru,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SslScheme {
    Fssl,
    Pssl,
}

#[derive(Subcommand)]
enum Command {
    /// Resample raw meter files to one minute and write a canonical CSV.
    Ingest {
        #[arg(long, value_enum)]
        format: Format,
        /// REFIT CSV file, or the aggregate channel file for channel_dat.
        #[arg(long)]
        input: PathBuf,
        /// `name=source`: a REFIT column (e.g. `fridge=Appliance1`) or a
        /// channel file (e.g. `fridge=channel_5.dat`). Repeatable.
        #[arg(long = "channel", value_name = "NAME=SOURCE")]
        channels: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate seeded synthetic households in canonical CSV form.
    Synth {
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        houses: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train a pretext network on the case's unlabeled aggregate data.
    Pretrain {
        #[arg(long, value_enum)]
        arch: Arch,
        /// Window length; defaults to the architecture's default.
        #[arg(long)]
        window: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune a pretext checkpoint on the case's labeled source houses.
    Finetune {
        #[arg(long)]
        pretext: PathBuf,
        #[arg(long)]
        appliance: String,
        #[arg(long, value_enum)]
        scheme: SslScheme,
        #[command(flatten)]
        common: Common,
    },
    /// Train the zero-shot baseline on the case's labeled source houses.
    TrainZsl {
        #[arg(long, value_enum)]
        arch: Arch,
        #[arg(long)]
        appliance: String,
        #[arg(long)]
        window: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate an appliance signal from a household's aggregate.
    Disaggregate {
        #[arg(long)]
        model: PathBuf,
        /// Canonical household CSV.
        #[arg(long)]
        input: PathBuf,
        /// Copy this channel of the input into the truth column.
        #[arg(long)]
        truth: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a predicted series against the truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred_column: Option<String>,
        #[arg(long)]
        truth_column: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run every architecture × appliance × scheme cell of a case.
    RunCase {
        #[command(flatten)]
        common: Common,
    },
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| Error::Usage(format!("--{flag} is required")))
}

fn load_case(common: &Common) -> Result<CaseConfig> {
    let mut c = CaseConfig::from_file(required(&common.config, "config")?)?;
    if let Some(s) = common.seed {
        c.seed = s;
    }
    Ok(c)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| Error::Usage(format!("expected NAME=SOURCE, got `{s}`")))
}

fn ingest(format: Format, input: &Path, channels: &[String], common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let h = match format {
        Format::RefitCsv => {
            let parsed = parse_meter_file(input, MeterFormat::RefitCsv)?;
            report_malformed(input, parsed.malformed);
            let find = |name: &str| {
                parsed
                    .channels
                    .iter()
                    .find(|c| c.name.eq_ignore_ascii_case(name))
                    .ok_or_else(|| Error::Usage(format!("{} has no column `{name}`", input.display())))
            };
            let agg = find("aggregate")?;
            let apps: Vec<(String, &RawChannel)> = if channels.is_empty() {
                parsed
                    .channels
                    .iter()
                    .filter(|c| c.name != "aggregate")
                    .map(|c| (c.name.clone(), c))
                    .collect()
            } else {
                channels
                    .iter()
                    .map(|s| {
                        let (name, col) = split_pair(s)?;
                        Ok((name.to_string(), find(col)?))
                    })
                    .collect::<Result<_>>()?
            };
            household_from_channels(agg, &apps)?
        }
        Format::ChannelDat => {
            let load = |path: &Path| -> Result<RawChannel> {
                let parsed = parse_meter_file(path, MeterFormat::ChannelDat)?;
                report_malformed(path, parsed.malformed);
                Ok(parsed.channels.into_iter().next().expect("one channel per file"))
            };
            let agg = load(input)?;
            let raw: Vec<(String, RawChannel)> = channels
                .iter()
                .map(|s| {
                    let (name, path) = split_pair(s)?;
                    Ok((name.to_string(), load(Path::new(path))?))
                })
                .collect::<Result<_>>()?;
            let apps: Vec<(String, &RawChannel)> = raw.iter().map(|(n, c)| (n.clone(), c)).collect();
            household_from_channels(&agg, &apps)?
        }
    };
    info!("{} minutes, {} valid", h.len(), h.aggregate.valid_count());
    write_canonical_csv(&h, out)
}

fn report_malformed(path: &Path, n: usize) {
    if n > 0 {
        warn!("{}: skipped {n} malformed lines", path.display());
    }
}

fn synth(days: usize, houses: usize, common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let spec = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            SyntheticHouseSpec::from_toml(&text)?
        }
        None => SyntheticHouseSpec::desk(SYNTH_START),
    };
    if houses == 0 {
        return Err(Error::Usage("--houses must be >= 1".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let seed = common.seed.unwrap_or(0);
    for i in 1..=houses {
        let h = generate_synthetic(&spec, days, seed.wrapping_add(i as u64 - 1))?;
        write_canonical_csv(&h, out.join(format!("house_{i}.csv")))?;
    }
    Ok(())
}

fn arch_spec(case: &CaseConfig, arch: Arch, window: Option<usize>, appliance: &str) -> Result<ArchitectureSpec> {
    let kind = ArchitectureKind::from(arch);
    ArchitectureSpec::new(kind, window.unwrap_or_else(|| case.window(kind, appliance)))
}

fn pretrain(arch: Arch, window: Option<usize>, common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let case = load_case(common)?;
    let spec = arch_spec(&case, arch, window, "")?;
    let mut inputs = CaseInputs::new(&case);
    let houses = inputs.pretext_houses()?;
    let refs: Vec<_> = houses.iter().collect();
    let settings = case
        .settings()
        .with_seed(pretext_seed(case.seed, spec.kind, spec.window));
    let m = pretext_train(&spec, &refs, &settings, &case.digest())?;
    checkpoint::save(&m, out)
}

fn finetune(pretext: &Path, appliance: &str, scheme: SslScheme, common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let case = load_case(common)?;
    let base = checkpoint::load(pretext)?;
    let spec = base.model.spec.clone();
    let scheme = match scheme {
        SslScheme::Fssl => Scheme::Fssl,
        SslScheme::Pssl => Scheme::Pssl,
    };
    let mut inputs = CaseInputs::new(&case);
    let houses = inputs.source_houses(appliance, "downstream")?;
    let refs: Vec<_> = houses.iter().collect();
    let settings = case
        .settings()
        .with_seed(downstream_seed(case.seed, spec.kind, appliance));
    let m = downstream_finetune(&base, &spec, appliance, scheme, &refs, &settings)?;
    checkpoint::save(&m, out)
}

fn zsl(arch: Arch, appliance: &str, window: Option<usize>, common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let case = load_case(common)?;
    let spec = arch_spec(&case, arch, window, appliance)?;
    let mut inputs = CaseInputs::new(&case);
    let houses = inputs.source_houses(appliance, "zsl")?;
    let refs: Vec<_> = houses.iter().collect();
    let settings = case
        .settings()
        .with_seed(downstream_seed(case.seed, spec.kind, appliance));
    let m = train_zsl(&spec, appliance, &refs, &settings, &case.digest())?;
    checkpoint::save(&m, out)
}

fn disaggregate_cmd(model: &Path, input: &Path, truth: Option<&str>, common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let m = checkpoint::load(model)?;
    let h = read_canonical_csv(input)?;
    let estimate = disaggregate(&m, &h.aggregate)?;
    let truth = match truth {
        Some(name) => h
            .appliance(name)
            .cloned()
            .ok_or_else(|| Error::Usage(format!("{} has no channel `{name}`", input.display())))?,
        None => PowerSeries::new(
            h.aggregate.start,
            h.aggregate.period,
            vec![0.0; h.len()],
            vec![false; h.len()],
        )?,
    };
    write_text(out, &estimate_csv(&estimate, &truth))
}

fn evaluate_cmd(pred: &Path, truth: &Path, pc: Option<&str>, tc: Option<&str>, common: &Common) -> Result<()> {
    let p = read_series_column(pred, pc)?;
    let t = read_series_column(truth, tc)?;
    let m = evaluate(&p, &t)?;
    let sae = m.sae.map_or(MISSING.to_string(), |v| v.to_string());
    let text = format!(
        "mae_w,sae,epd_kwh_per_day,true_kwh,predicted_kwh,days\n{},{sae},{},{},{},{}\n",
        m.mae, m.epd, m.true_kwh, m.pred_kwh, m.days
    );
    match &common.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_case_cmd(common: &Common) -> Result<()> {
    let out = required(&common.out, "out")?;
    let case = load_case(common)?;
    let outcome = run_case(&case, out)?;
    print!("{}", outcome.report.to_markdown());
    let failed = outcome.failures();
    if failed > 0 {
        return Err(Error::Pipeline(format!(
            "{failed} of {} cells failed; see cells.csv",
            outcome.cells.len()
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest {
            format,
            input,
            channels,
            common,
        } => ingest(*format, input, channels, common),
        Command::Synth { days, houses, common } => synth(*days, *houses, common),
        Command::Pretrain { arch, window, common } => pretrain(*arch, *window, common),
        Command::Finetune {
            pretext,
            appliance,
            scheme,
            common,
        } => finetune(pretext, appliance, *scheme, common),
        Command::TrainZsl {
            arch,
            appliance,
            window,
            common,
        } => zsl(*arch, appliance, *window, common),
        Command::Disaggregate {
            model,
            input,
            truth,
            common,
        } => disaggregate_cmd(model, input, truth.as_deref(), common),
        Command::Evaluate {
            pred,
            truth,
            pred_column,
            truth_column,
            common,
        } => evaluate_cmd(pred, truth, pred_column.as_deref(), truth_column.as_deref(), common),
        Command::RunCase { common } => run_case_cmd(common),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message=\"{}\"", e.kind(), escape(&e.to_string()));
            if matches!(e, Error::Usage(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
