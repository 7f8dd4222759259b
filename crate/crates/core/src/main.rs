use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use flowinv::binning::{make_bins, ratio_for_bins_per_decade};
use flowinv::flowtable::flow_length_histogram;
use flowinv::inversion::{
    invert_sh_byte, invert_sh_packet, pool_estimates, syn_estimate, InversionResult,
};
use flowinv::report::{compare, emit_plot_data, metadata_path, EstimateFile, ReportMetadata};
use flowinv::sampling::{calibrate_rate, CalibrationInput};
use flowinv::trace::{
    detect_format, generate_trace, read_trace, write_pcap, write_text, ByteLenModel,
    SyntheticTraceConfig,
};
use flowinv::{
    build_flows, Error, FlowSet, FlowTableConfig, Method, ObservedDistribution, Sampler,
    SamplerConfig,
};

#[derive(Parser)]
#[command(
    name = "flowinv",
    version,
    about = "Flow construction, sampling and flow-length inversion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace with heavy-tailed flow lengths.
    Generate(GenerateArgs),
    /// Build unsampled (ground truth) flow records from a trace.
    Flows(FlowsArgs),
    /// Build flow records from a sampled trace.
    Sample(SampleArgs),
    /// Estimate the original flow-length distribution from sampled flows.
    Invert(InvertArgs),
    /// Compare an estimate against ground-truth flows over log bins.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    flows: u64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    min_len: u64,
    #[arg(long)]
    max_len: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean gap between flow starts, seconds.
    #[arg(long, default_value_t = 0.001)]
    interarrival: f64,
    /// Mean gap between packets of one flow, seconds.
    #[arg(long, default_value_t = 0.01)]
    packet_gap: f64,
    #[arg(long, default_value_t = 0.9)]
    tcp_fraction: f64,
    /// Probability that a TCP flow carries a second SYN.
    #[arg(long, default_value_t = 0.0)]
    extra_syn_prob: f64,
    /// Only flows up to this length get a second SYN.
    #[arg(long)]
    extra_syn_max_len: Option<u64>,
    /// Fixed packet size in bytes instead of uniform 40..=1500.
    #[arg(long)]
    packet_bytes: Option<u16>,
    #[arg(long, value_enum, default_value_t = OutFormat::Text)]
    format: OutFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Text,
    Pcap,
}

#[derive(Args)]
struct TableArgs {
    /// Flow expiry timeout in seconds.
    #[arg(long, default_value_t = f64::INFINITY)]
    tt: f64,
    /// Export timeout (analysis window) in seconds.
    #[arg(long, default_value_t = f64::INFINITY)]
    tw: f64,
    /// Flow buffer capacity; unlimited when omitted.
    #[arg(long)]
    nf: Option<usize>,
}

impl TableArgs {
    fn config(&self) -> flowinv::Result<FlowTableConfig> {
        FlowTableConfig::new(self.tt, self.tw, self.nf.unwrap_or(usize::MAX))
    }
}

#[derive(Args)]
struct FlowsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMethod {
    Packet,
    ShPacket,
    ShByte,
    ShSyn,
}

impl From<SampleMethod> for Method {
    fn from(m: SampleMethod) -> Method {
        match m {
            SampleMethod::Packet => Method::Packet,
            SampleMethod::ShPacket => Method::ShPacket,
            SampleMethod::ShByte => Method::ShByte,
            SampleMethod::ShSyn => Method::ShSyn,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: SampleMethod,
    /// Sampling probability (per byte for sh-byte).
    #[arg(
        long,
        conflicts_with = "target_fraction",
        required_unless_present = "target_fraction"
    )]
    p: Option<f64>,
    /// Pick p so that this fraction of packets is sampled.
    #[arg(long)]
    target_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InvertMethod {
    ShPacket,
    ShByte,
    Syn,
}

impl InvertMethod {
    fn name(self) -> &'static str {
        match self {
            InvertMethod::ShPacket => "sh-packet",
            InvertMethod::ShByte => "sh-byte",
            InvertMethod::Syn => "syn",
        }
    }
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: InvertMethod,
    #[arg(long)]
    p: f64,
    /// Mean sampled packet length for sh-byte; measured from the flows when omitted.
    #[arg(long)]
    mean_bytes: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    bins_per_decade: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    bins_per_decade: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Written next to the flows CSV by `flows` and `sample`.
#[derive(Serialize, Deserialize)]
struct FlowsMeta {
    sampler: SamplerConfig,
    flow_table: FlowTableConfig,
    packets_seen: u64,
    packets_skipped: u64,
    packets_sampled: u64,
    flows_formed: u64,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn io_fail(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn generate(args: GenerateArgs) -> CliResult {
    let config = SyntheticTraceConfig {
        num_flows: args.flows,
        alpha: args.alpha,
        min_flow_len: args.min_len,
        max_flow_len: args.max_len,
        mean_interarrival: args.interarrival,
        mean_packet_gap: args.packet_gap,
        tcp_fraction: args.tcp_fraction,
        extra_syn_prob: args.extra_syn_prob,
        extra_syn_max_len: args.extra_syn_max_len,
        byte_len_model: match args.packet_bytes {
            Some(bytes) => ByteLenModel::Fixed { bytes },
            None => ByteLenModel::Uniform { min: 40, max: 1500 },
        },
        seed: args.seed,
    };
    let trace = generate_trace(&config)?;
    let mut out = create(&args.out)?;
    match args.format {
        OutFormat::Text => write_text(&mut out, &trace.packets),
        OutFormat::Pcap => write_pcap(&mut out, &trace.packets),
    }
    .and_then(|_| out.flush())
    .map_err(io_fail(&args.out))?;
    println!(
        "{} packets in {} flows written to {}",
        trace.packets.len(),
        trace.flows.len(),
        args.out.display()
    );
    Ok(())
}

fn write_flows(
    flows: &FlowSet,
    out_path: &Path,
    sampler: SamplerConfig,
    table: FlowTableConfig,
    seen: u64,
    skipped: u64,
) -> CliResult {
    let mut out = create(out_path)?;
    flows.write_csv(&mut out)?;
    out.flush().map_err(io_fail(out_path))?;
    let meta = FlowsMeta {
        sampler,
        flow_table: table,
        packets_seen: seen,
        packets_skipped: skipped,
        packets_sampled: flows.total_packets(),
        flows_formed: flows.len() as u64,
    };
    let meta_path = metadata_path(out_path);
    let json = serde_json::to_vec_pretty(&meta).map_err(Error::from)?;
    std::fs::write(&meta_path, json).map_err(io_fail(&meta_path))?;
    println!(
        "{} of {} packets sampled into {} flows",
        meta.packets_sampled, seen, meta.flows_formed
    );
    Ok(())
}

fn flows(args: FlowsArgs) -> CliResult {
    let table = args.table.config()?;
    let trace = read_trace(&args.input, detect_format(&args.input)?)?;
    let sampler = Sampler::new(SamplerConfig::always())?;
    let flows = build_flows(&trace.packets, table, &sampler)?;
    write_flows(
        &flows,
        &args.out,
        SamplerConfig::always(),
        table,
        trace.packets.len() as u64,
        trace.skipped,
    )
}

fn sample(args: SampleArgs) -> CliResult {
    let table = args.table.config()?;
    let method = Method::from(args.method);
    let trace = read_trace(&args.input, detect_format(&args.input)?)?;
    let p = match (args.p, args.target_fraction) {
        (Some(p), _) => p,
        (None, Some(target)) => {
            let input = CalibrationInput::Pilot {
                packets: &trace.packets,
                table,
                seed: args.seed,
            };
            let p = calibrate_rate(&input, method, target)?;
            eprintln!("calibrated p = {p:e}");
            p
        }
        (None, None) => unreachable!("clap requires one of --p / --target-fraction"),
    };
    let config = SamplerConfig::new(method, p, args.seed)?;
    let sampler = Sampler::new(config)?;
    let flows = build_flows(&trace.packets, table, &sampler)?;
    write_flows(
        &flows,
        &args.out,
        config,
        table,
        trace.packets.len() as u64,
        trace.skipped,
    )
}

fn read_flows(path: &Path) -> CliResult<FlowSet> {
    let file = File::open(path).map_err(io_fail(path))?;
    FlowSet::read_csv(BufReader::new(file))
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_flows_meta(flows_path: &Path) -> Option<FlowsMeta> {
    let text = std::fs::read(metadata_path(flows_path)).ok()?;
    serde_json::from_slice(&text).ok()
}

fn invert(args: InvertArgs) -> CliResult {
    let flows = read_flows(&args.input)?;
    if flows.is_empty() {
        return Err(Failure::Data(format!(
            "{}: no sampled flows to invert",
            args.input.display()
        )));
    }
    let ratio = ratio_for_bins_per_decade(args.bins_per_decade);
    let mut mean_bytes = None;
    let (result, observed, flows_used, packets) = match args.method {
        InvertMethod::Syn => {
            let tcp = flows.tcp_only();
            let est = syn_estimate(&flows)?;
            let dist = est.distribution.ok_or_else(|| {
                Failure::Data(format!(
                    "{}: no TCP flows were sampled",
                    args.input.display()
                ))
            })?;
            let raw = dist.probs().to_vec();
            let result = InversionResult {
                p: args.p,
                p_effective: args.p,
                normalizer: 1.0,
                raw: raw.clone(),
                clamped: dist,
                negative_indices: vec![],
                approximate: false,
            };
            (result, raw, est.flows_used, tcp.total_packets())
        }
        method => {
            let hist = flow_length_histogram(&flows);
            let observed = ObservedDistribution::from_histogram(&hist, args.p)?;
            let result = if let InvertMethod::ShByte = method {
                let b = match args.mean_bytes {
                    Some(b) => b,
                    None => flows
                        .mean_packet_len()
                        .ok_or_else(|| Failure::Data("no packets to measure mean length".into()))?,
                };
                mean_bytes = Some(b);
                invert_sh_byte(&observed, args.p, b)?
            } else {
                invert_sh_packet(&observed, args.p)?
            };
            (
                result,
                observed.probs().to_vec(),
                hist.total_flows(),
                hist.total_packets(),
            )
        }
    };
    if !result.negative_indices.is_empty() {
        eprintln!(
            "warning: {} negative estimates (first at length {})",
            result.negative_indices.len(),
            result.negative_indices[0]
        );
    }
    let boundaries = make_bins(result.raw.len() as u64, ratio)?;
    let pooled = pool_estimates(&result.raw, &boundaries)?;
    let file = EstimateFile {
        method: args.method.name().to_string(),
        result,
        mean_bytes,
        flows_used,
        packets_sampled: packets,
        observed,
        pooled,
        sampler: read_flows_meta(&args.input).map(|m| m.sampler),
    };
    let mut out = create(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &file).map_err(Error::from)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(io_fail(&args.out))?;
    println!(
        "C = {:.6}, {} lengths estimated, {} negative",
        file.result.normalizer,
        file.result.raw.len(),
        file.result.negative_indices.len()
    );
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> CliResult {
    let text = std::fs::read(&args.estimate).map_err(io_fail(&args.estimate))?;
    let estimate: EstimateFile = serde_json::from_slice(&text)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.estimate.display())))?;
    let mut truth_flows = read_flows(&args.truth)?;
    // SYN estimates describe TCP flows only
    if estimate.method == InvertMethod::Syn.name() {
        truth_flows = truth_flows.tcp_only();
    }
    let truth = flow_length_histogram(&truth_flows).dense_counts();
    if truth.is_empty() {
        return Err(Failure::Data(format!("{}: no flows", args.truth.display())));
    }
    let support = truth.len().max(estimate.result.raw.len()) as u64;
    let boundaries = make_bins(support, ratio_for_bins_per_decade(args.bins_per_decade))?;
    let flows_meta = read_flows_meta(&args.truth);
    let report = compare(&truth, &estimate.result.raw, &boundaries)?
        .with_sampled(&estimate.observed)?
        .with_metadata(ReportMetadata {
            sampler: estimate.sampler,
            flow_table: flows_meta.map(|m| m.flow_table),
            packets_sampled: Some(estimate.packets_sampled),
            flows_formed: Some(estimate.flows_used),
            mean_flow_length: (estimate.flows_used > 0)
                .then(|| estimate.packets_sampled as f64 / estimate.flows_used as f64),
        });
    emit_plot_data(&report, &args.out)?;
    println!(
        "total variation {:.6}, max CCDF gap {:.6}",
        report.total_variation, report.ccdf_max_gap
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Flows(a) => flows(a),
        Command::Sample(a) => sample(a),
        Command::Invert(a) => invert(a),
        Command::Compare(a) => compare_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
