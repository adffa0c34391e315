use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use xdrive_cli::service::{port_from_env, serve};
use xdrive_cli::{answer_rows, stages, CliError, Overrides};

/// Explainable-driving sandbox: train a driving agent, harvest annotated
/// frames, and train a model that answers "why" questions about them.
#[derive(Debug, Parser)]
#[command(name = "xdrive", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train the DDPG driving agent.
    TrainAgent,
    /// Drive both tracks with the agent and store the frame log.
    Record,
    /// Sample and annotate the QA corpus.
    BuildDataset,
    /// Train the VQA model on the train split.
    TrainVqa,
    /// Evaluate the VQA model and write reports.
    EvalVqa,
    /// Every stage in order.
    Pipeline,
    /// Answer a question about one frame.
    Explain {
        /// PNG written by `build-dataset` (or any frame of the right size).
        frame: PathBuf,
        question: String,
        /// Model directory; the configured one by default.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: Format,
    },
    /// Serve the HTTP API on $XDRIVE_PORT (default 8080).
    Serve {
        /// Listen on all interfaces instead of loopback.
        #[arg(long)]
        public: bool,
    },
    /// Print the resolved configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Cmd::TrainAgent => {
            let s = stages::train_agent(&cfg)?;
            println!(
                "{} episodes on {}: first-{w} mean return {:.1}, last-{w} {:.1}; greedy rollout {:?} after {} steps, return {:.1}",
                s.episodes,
                s.track,
                s.first_mean_return,
                s.last_mean_return,
                s.greedy_end,
                s.greedy_steps,
                s.greedy_return,
                w = stages::CURVE_WINDOW,
            );
        }
        Cmd::Record => {
            for t in stages::record(&cfg)? {
                println!("{}: {} frames, {:?}", t.track, t.frames, t.end);
            }
        }
        Cmd::BuildDataset => {
            let s = stages::build_dataset(&cfg)?;
            println!(
                "{} train, {} test records in {}",
                s.train.values().sum::<usize>(),
                s.test.values().sum::<usize>(),
                cfg.corpus_dir().display()
            );
        }
        Cmd::TrainVqa => {
            let s = stages::train_vqa(&cfg, |e| {
                if (e.epoch + 1) % 10 == 0 {
                    eprintln!("epoch {:>4}  loss {:.4}  accuracy {:.3}", e.epoch + 1, e.loss, e.accuracy);
                }
            })?;
            println!(
                "{} samples, {} answers, final loss {:.4}, accuracy {:.3}",
                s.samples, s.answers, s.final_loss, s.final_accuracy
            );
        }
        Cmd::EvalVqa => print_eval(&stages::eval_vqa(&cfg)?),
        Cmd::Pipeline => print_eval(&stages::pipeline(&cfg, |m| eprintln!("{m}"))?),
        Cmd::Explain {
            frame,
            question,
            model,
            format,
        } => {
            let dir = model.unwrap_or_else(|| cfg.model_dir());
            let p = stages::explain(&dir, &frame, &question, cfg.k)?;
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::json!({ "answers": answer_rows(&p) })
                ),
                Format::Text => {
                    for (i, a) in p.answers.iter().enumerate() {
                        println!("{:>2}. {:.4}  {}", i + 1, a.prob, a.text);
                    }
                }
            }
        }
        Cmd::Serve { public } => {
            let ip = if public { Ipv4Addr::UNSPECIFIED } else { Ipv4Addr::LOCALHOST };
            let addr = SocketAddr::from((ip, port_from_env()?));
            tokio::runtime::Runtime::new()?.block_on(serve(cfg, addr))?;
        }
        Cmd::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn print_eval(e: &stages::EvalOutput) {
    print!("{}\n{}", e.test.to_text(), e.probe.to_text());
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
