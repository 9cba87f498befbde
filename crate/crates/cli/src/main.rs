use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use best_client::Client;
use best_core::corpus::{
    describe_corpus, image_set, load_candidates, load_references, ocr_sidecar, score_corpus,
    Averaging, CorpusSummary, Describer, FailureRecord, OutputLine, RunConfig, VqaLine, VqaReport,
    VqaRunner,
};
use best_core::sgraph::SynonymLexicon;
use best_core::vqa::{parse_dataset, score_accuracy, Mode, VqaItem};
use best_core::Error;

/// Paragraph generation from visual clues, scene-graph scoring and VQA.
#[derive(Debug, Parser)]
#[command(name = "best", version)]
struct Cli {
    /// Use deterministic mock model backends with this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Send work to a running `best serve` at this URL instead of running
    /// the pipeline in-process.
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one JSON record per image.
    Describe {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of images, or a text file listing one path per line.
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate scene graphs against references.
    Spipe {
        /// JSONL file or directory of `<id>.json` / `<id>.conllu` files.
        #[arg(long)]
        candidates: PathBuf,
        /// Directory of `<id>.json` reference graphs.
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Report path; JSON when it ends in `.json`, a text table otherwise.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "macro")]
        averaging: String,
    },
    /// Answer a VQA dataset and report accuracy.
    Vqa {
        #[arg(long)]
        config: PathBuf,
        /// JSONL with `image`, `question` and `answer` per line.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: String,
        /// Optional JSONL of answered items.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Also serve the `/v1/*` model routes from the configured backend.
        #[arg(long)]
        models: bool,
    },
}

/// Failure that ends the process.
#[derive(Debug)]
enum Fatal {
    /// Bad configuration or input: exit 1.
    Config(String),
    /// Some items failed: exit 2.
    Partial(String),
}

impl From<Error> for Fatal {
    fn from(e: Error) -> Self {
        Fatal::Config(e.to_string())
    }
}

impl From<std::io::Error> for Fatal {
    fn from(e: std::io::Error) -> Self {
        Fatal::Config(e.to_string())
    }
}

impl From<best_client::ClientError> for Fatal {
    fn from(e: best_client::ClientError) -> Self {
        Fatal::Config(e.to_string())
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, Fatal> {
    let config = RunConfig::read(path)?;
    let config = match seed {
        Some(seed) => config.with_mock_seed(seed),
        None => config,
    };
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>, Fatal> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = File::create(path)
        .map_err(|e| Fatal::Config(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn file_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

async fn describe(
    cli: &Cli,
    config: Option<&Path>,
    images: &Path,
    out: &Path,
) -> Result<(), Fatal> {
    let paths = image_set(images)?;
    let mut writer = create(out)?;
    let summary = match &cli.server {
        Some(url) => describe_remote(&Client::new(url)?, &paths, &mut writer).await?,
        None => {
            let path = config.ok_or_else(|| {
                Fatal::Config("describe needs --config unless --server is given".into())
            })?;
            let config = load_config(path, cli.seed)?;
            let describer = Describer::from_config(&config).await?;
            describe_corpus(&describer, &paths, config.run.parallelism, &mut writer).await?
        }
    };
    writer.flush()?;
    eprintln!(
        "described {} image(s), {} failure(s)",
        summary.records, summary.failures
    );
    if summary.failures > 0 {
        return Err(Fatal::Partial(format!(
            "{} of {} image(s) failed",
            summary.failures,
            paths.len()
        )));
    }
    Ok(())
}

async fn describe_remote<W: Write>(
    client: &Client,
    paths: &[PathBuf],
    out: &mut W,
) -> Result<CorpusSummary, Fatal> {
    client.health().await?;
    let mut summary = CorpusSummary::default();
    for path in paths {
        let id = file_id(path);
        let result = match std::fs::read(path) {
            Ok(bytes) => client
                .describe(&id, &bytes, ocr_sidecar(path))
                .await
                .map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        let line = match result {
            Ok(record) => {
                summary.records += 1;
                OutputLine::Record(Box::new(record))
            }
            Err(error) => {
                summary.failures += 1;
                OutputLine::Failure(FailureRecord { image: id, error })
            }
        };
        serde_json::to_writer(&mut *out, &line).map_err(Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(summary)
}

fn spipe(
    candidates: &Path,
    references: &Path,
    lexicon: &Path,
    out: &Path,
    averaging: &str,
) -> Result<(), Fatal> {
    let averaging: Averaging = averaging.parse()?;
    let lexicon = SynonymLexicon::load(lexicon)?;
    let candidates = load_candidates(candidates)?;
    let references = load_references(references)?;
    let report = score_corpus(&candidates, &references, &lexicon, averaging)?;
    let table = report.to_table();
    let mut writer = create(out)?;
    if out.extension().is_some_and(|e| e == "json") {
        serde_json::to_writer_pretty(&mut writer, &report).map_err(Error::from)?;
        writer.write_all(b"\n")?;
    } else {
        writer.write_all(table.as_bytes())?;
    }
    writer.flush()?;
    print!("{table}");
    Ok(())
}

async fn vqa(
    cli: &Cli,
    config: &Path,
    data: &Path,
    mode: &str,
    out: Option<&Path>,
) -> Result<(), Fatal> {
    let mode: Mode = mode.parse()?;
    let text = std::fs::read_to_string(data)
        .map_err(|e| Fatal::Config(format!("cannot read {}: {e}", data.display())))?;
    let items = parse_dataset(&text)?;
    if items.is_empty() {
        return Err(Fatal::Config("the VQA dataset is empty".into()));
    }
    let config = load_config(config, cli.seed)?;
    let (lines, report) = match &cli.server {
        Some(url) => vqa_remote(&Client::new(url)?, &config, items, mode).await?,
        None => {
            let runner = VqaRunner::from_config(&config, mode).await?;
            runner.run(items, mode, config.run.parallelism).await?
        }
    };
    if let Some(out) = out {
        let mut writer = create(out)?;
        for line in &lines {
            serde_json::to_writer(&mut writer, line).map_err(Error::from)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
    }
    print!("{}", report.summary());
    if report.failed > 0 {
        return Err(Fatal::Partial(format!(
            "{} of {} question(s) failed",
            report.failed,
            lines.len()
        )));
    }
    Ok(())
}

async fn vqa_remote(
    client: &Client,
    config: &RunConfig,
    items: Vec<VqaItem>,
    mode: Mode,
) -> Result<(Vec<VqaLine>, VqaReport), Fatal> {
    client.health().await?;
    let images = config.required(&config.vqa.images, "vqa.images")?;
    let mut lines = Vec::with_capacity(items.len());
    for mut item in items {
        let path = images.join(&item.image);
        let result = match std::fs::read(&path) {
            Ok(bytes) => client
                .vqa(&item.image, &bytes, &item.question, mode)
                .await
                .map_err(|e| e.to_string()),
            Err(e) => Err(format!("{}: {e}", path.display())),
        };
        lines.push(match result {
            Ok(answer) => {
                item.long_answer = Some(answer.long_answer);
                item.short_answer = Some(answer.short_answer);
                item.final_answer = answer.final_answer;
                VqaLine::Answered(item)
            }
            Err(error) => VqaLine::Failed {
                image: item.image,
                question: item.question,
                error,
            },
        });
    }
    let answered: Vec<VqaItem> = lines
        .iter()
        .filter_map(|l| match l {
            VqaLine::Answered(i) => Some(i.clone()),
            VqaLine::Failed { .. } => None,
        })
        .collect();
    let accuracy = if answered.is_empty() {
        0.0
    } else {
        score_accuracy(&answered, mode)?
    };
    let report = VqaReport {
        mode,
        accuracy,
        answered: answered.len(),
        failed: lines.len() - answered.len(),
    };
    Ok((lines, report))
}

async fn serve(cli: &Cli, config: &Path, addr: &str, models: bool) -> Result<(), Fatal> {
    let config = load_config(config, cli.seed)?;
    let state = best_server::AppState::from_config(&config).await?;
    let mut router = best_server::app(state.clone());
    if models {
        router = router.merge(best_server::model_router(
            state.describer.gateway.backend().clone(),
        ));
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Fatal::Config(format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    best_server::serve(listener, router).await?;
    Ok(())
}

async fn run(cli: &Cli) -> Result<(), Fatal> {
    match &cli.command {
        Command::Describe {
            config,
            images,
            out,
        } => describe(cli, config.as_deref(), images, out).await,
        Command::Spipe {
            candidates,
            references,
            lexicon,
            out,
            averaging,
        } => spipe(candidates, references, lexicon, out, averaging),
        Command::Vqa {
            config,
            data,
            mode,
            out,
        } => vqa(cli, config, data, mode, out.as_deref()).await,
        Command::Serve {
            config,
            addr,
            models,
        } => serve(cli, config, addr, *models).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fatal::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Fatal::Partial(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
    }
}
