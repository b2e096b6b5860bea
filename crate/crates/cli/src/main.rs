use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use structembed_cli::config::{self, PipelineConfig, KEYS};
use structembed_cli::{pipeline, CliError};

#[derive(Parser)]
#[command(name = "structembed", version, about = "Structure-preserving node embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file of key=value lines
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides as --key value or --key=value; they win over the config file
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an embedding and write it with a run manifest
    Embed(RunArgs),
    /// Detect or import communities and write the affiliation file
    Communities(RunArgs),
    /// Score an embedding (--task classify|reconstruct, --embedding PATH)
    Eval(RunArgs),
    /// Write the merged triad/community/co-occurrence pair weights
    DumpPairs(RunArgs),
    /// Write the random walks, one per line
    DumpWalks(RunArgs),
}

fn keys_help() -> String {
    let mut s = String::from("Config keys (default):\n");
    for (k, v, help) in KEYS {
        s.push_str(&format!("  {k:<28} {help} ({})\n", if v.is_empty() { "unset" } else { v }));
    }
    s
}

impl RunArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        config::load(self.config.as_deref(), &self.overrides)
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Embed(args) => {
            let out = pipeline::cmd_embed(&args.resolve()?)?;
            println!("{}", out.embedding.display());
            println!("{}", out.manifest.display());
        }
        Command::Communities(args) => println!("{}", pipeline::cmd_communities(&args.resolve()?)?.display()),
        Command::Eval(args) => {
            let files = pipeline::cmd_eval(&args.resolve()?)?;
            print!("{}", std::fs::read_to_string(&files.table).unwrap_or_default());
            println!("{}", files.records.display());
        }
        Command::DumpPairs(args) => println!("{}", pipeline::cmd_dump_pairs(&args.resolve()?)?.display()),
        Command::DumpWalks(args) => println!("{}", pipeline::cmd_dump_walks(&args.resolve()?)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut command = Cli::command().after_long_help(keys_help());
    for name in ["embed", "communities", "eval", "dump-pairs", "dump-walks"] {
        command = command.mut_subcommand(name, |s| s.after_long_help(keys_help()));
    }
    let matches = command.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
