use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use spinn_gateway::aer::{build_mc_packet, parse_packet, PacketType, PacketWord};
use spinn_gateway::config::ExperimentConfig;
use spinn_gateway::experiment::{run_experiment, run_pc_session, ExperimentOutput};
use spinn_gateway::gateway::control::{decode_control_frame, encode_control_frame};
use spinn_gateway::gateway::ControlFrame;
use spinn_gateway::link::{frame_word, link_transfer, transfer_budget, AckPolicy, LinkConfig};

/// Failures that map to exit status 2: bad configuration or malformed input.
#[derive(Debug, thiserror::Error)]
enum Rejected {
    /// A codec verdict such as `ParityError`, printed on stdout.
    #[error("{0}")]
    Verdict(&'static str),
    #[error("{0}")]
    Diagnostic(String),
}

fn rejected(message: impl Into<String>) -> anyhow::Error {
    Rejected::Diagnostic(message.into()).into()
}

#[derive(Parser)]
#[command(
    name = "spinn-gateway",
    version,
    about = "Sensor-to-SpiNNaker gateway harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-loop experiment and write its artifacts.
    Run {
        /// Experiment configuration; the shipped default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Pace the virtual clock against wall time.
        #[arg(long)]
        realtime: bool,
    },
    /// Packet and link-symbol codecs.
    #[command(subcommand)]
    Codec(CodecCommand),
    /// Push packets through one handshaked link and report the outcome.
    Loopback {
        #[arg(long, default_value = "normal", value_parser = parse_ack_policy)]
        ack_policy: AckPolicy,
        #[arg(long, default_value_t = 1)]
        packets: u32,
        #[arg(long, default_value_t = LinkConfig::default().ack_timeout)]
        ack_timeout: u64,
    },
    /// PC control channel.
    #[command(subcommand)]
    Pc(PcCommand),
}

#[derive(Subcommand)]
enum CodecCommand {
    /// Build a multicast packet and print its hex form.
    Encode {
        #[arg(long, value_parser = parse_u32)]
        key: u32,
        #[arg(long, value_parser = parse_u32)]
        payload: Option<u32>,
    },
    /// Parse a hex packet and print its fields.
    Decode { hex: String },
    /// Print the link symbols a hex packet is sent as.
    Frame { hex: String },
}

#[derive(Subcommand)]
enum PcCommand {
    /// Run a session driven by control frames read from stdin; reply frames go to stdout.
    Session {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Write control frames to stdout, e.g. `set-value:5 query:6 display:1`.
    Encode { frames: Vec<String> },
    /// Read control frames from stdin and print one per line.
    Decode,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// How long each set value is held before the next frame applies.
    #[arg(long, default_value_t = 1_000)]
    hold_ms: u64,
    /// Also write the experiment artifacts here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ack_policy(s: &str) -> Result<AckPolicy, String> {
    s.parse()
}

fn parse_u32(s: &str) -> Result<u32, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("{s:?}: {e}"))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| rejected(format!("config {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| rejected(format!("config {}: {e}", path.display())))
}

fn parse_hex(hex: &str) -> Result<PacketWord> {
    hex.trim()
        .parse::<PacketWord>()
        .map_err(|e| Rejected::Verdict(e.name()).into())
}

fn print_summary(out: &ExperimentOutput) {
    let s = &out.summary;
    println!("tx {}, rx {}", s.tx_count, s.rx_count);
    for (key, count) in &s.counters {
        let freq = s
            .measured_frequencies
            .get(key)
            .map_or("-".to_string(), |f| format!("{f} mHz"));
        println!("key {key}: count {count}, measured {freq}");
    }
    if s.errors.total() > 0 {
        println!("errors: {}", format_errors(&s.errors));
    }
    for (link, stall) in &s.stalls {
        println!("{link} link stalled at symbol {}", stall.symbol_index);
    }
}

fn format_errors(errors: &spinn_gateway::gateway::ErrorCounters) -> String {
    format!(
        "parity {}, framing {}, unroutable {}, stalled {}, value_range {}, packet_type {}, control {}, unknown_key {}",
        errors.parity,
        errors.framing,
        errors.unroutable,
        errors.stalled,
        errors.value_range,
        errors.packet_type,
        errors.control,
        errors.unknown_key
    )
}

fn parse_frame_spec(spec: &str) -> Result<ControlFrame> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| rejected(format!("frame {spec:?}: expected kind:value")))?;
    let number = |s: &str| parse_u32(s).map_err(|e| rejected(format!("frame {spec:?}: {e}")));
    Ok(match kind {
        "set-value" => ControlFrame::SetValue(
            u16::try_from(number(arg)?)
                .map_err(|_| rejected(format!("frame {spec:?}: value exceeds 16 bits")))?,
        ),
        "query" => ControlFrame::QueryCounter(number(arg)?),
        "display" => ControlFrame::SetDisplayMode(
            u8::try_from(number(arg)?)
                .map_err(|_| rejected(format!("frame {spec:?}: mode exceeds 8 bits")))?,
        ),
        other => bail!(rejected(format!(
            "frame {spec:?}: unknown kind {other:?} (set-value, query, display)"
        ))),
    })
}

fn describe(frame: &ControlFrame) -> String {
    match *frame {
        ControlFrame::SetValue(v) => format!("set_value {v}"),
        ControlFrame::QueryCounter(key) => format!("query_counter key={key}"),
        ControlFrame::EventReport { key, tick } => format!("event key={key} tick={tick}"),
        ControlFrame::CounterReport { key, count } => format!("counter key={key} count={count}"),
        ControlFrame::SetDisplayMode(m) => format!("set_display_mode {m}"),
    }
}

fn read_stdin() -> Result<Vec<u8>> {
    let mut input = Vec::new();
    io::stdin()
        .read_to_end(&mut input)
        .context("reading stdin")?;
    Ok(input)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            realtime,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.realtime |= realtime;
            let output = run_experiment(cfg)?;
            output
                .write_artifacts(&out)
                .with_context(|| format!("writing artifacts to {}", out.display()))?;
            print_summary(&output);
            println!("artifacts written to {}", out.display());
        }
        Command::Codec(CodecCommand::Encode { key, payload }) => {
            println!("{}", build_mc_packet(key, payload).to_word());
        }
        Command::Codec(CodecCommand::Decode { hex }) => {
            let word = parse_hex(&hex)?;
            let packet = parse_packet(word).map_err(|e| Rejected::Verdict(e.name()))?;
            let kind = match packet.packet_type {
                PacketType::Multicast => "multicast",
            };
            match packet.payload {
                Some(p) => println!("key=0x{:08x} payload=0x{p:08x} type={kind}", packet.key),
                None => println!("key=0x{:08x} payload=none type={kind}", packet.key),
            }
        }
        Command::Codec(CodecCommand::Frame { hex }) => {
            let symbols: Vec<String> = frame_word(parse_hex(&hex)?)
                .iter()
                .map(ToString::to_string)
                .collect();
            println!("{}", symbols.join(" "));
        }
        Command::Loopback {
            ack_policy,
            packets,
            ack_timeout,
        } => {
            let config = LinkConfig {
                ack_policy,
                ack_timeout,
            };
            let packets: Vec<_> = (0..packets).map(|k| build_mc_packet(k, None)).collect();
            let report = link_transfer(&packets, config, transfer_budget(&packets, config))?;
            println!("{}", report.summary());
        }
        Command::Pc(PcCommand::Session { session }) => {
            let cfg = load_config(session.config.as_deref())?;
            let input = read_stdin()?;
            let output = run_pc_session(cfg, &input, session.hold_ms)?;
            if let Some(dir) = &session.out {
                output
                    .write_artifacts(dir)
                    .with_context(|| format!("writing artifacts to {}", dir.display()))?;
            }
            let mut stdout = io::stdout().lock();
            stdout.write_all(&output.pc_out)?;
            stdout.flush()?;
        }
        Command::Pc(PcCommand::Encode { frames }) => {
            let mut bytes = Vec::new();
            for spec in &frames {
                bytes.extend(encode_control_frame(&parse_frame_spec(spec)?));
            }
            let mut stdout = io::stdout().lock();
            stdout.write_all(&bytes)?;
            stdout.flush()?;
        }
        Command::Pc(PcCommand::Decode) => {
            let decoded = decode_control_frame(&read_stdin()?);
            for frame in &decoded.frames {
                println!("{}", describe(frame));
            }
            for error in &decoded.errors {
                eprintln!("{error}");
            }
            if !decoded.errors.is_empty() || decoded.discarded > 0 {
                bail!(rejected(format!(
                    "{} malformed frame(s), {} byte(s) discarded",
                    decoded.errors.len(),
                    decoded.discarded
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => match err.downcast_ref::<Rejected>() {
            Some(Rejected::Verdict(name)) => {
                println!("{name}");
                ExitCode::from(2)
            }
            Some(r) => {
                eprintln!("error: {r}");
                ExitCode::from(2)
            }
            None => {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        },
    }
}
