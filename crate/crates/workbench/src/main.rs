use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use emocap_core::aggregation::PredictionRecord;
use emocap_core::caption::CaptionVariant;
use emocap_core::evaluation::{chance_baseline, matrix_to_text, reports_to_csv, score};
use emocap_core::gateway::{BackendConfig, BackendKind, LiveBackend, MockBackend, MockTranscript, PlaceholderMode};
use emocap_core::jsonl;
use emocap_core::scene::{validate_scene, GroundTruthSample, Judgment, SceneAnnotation};
use emocap_core::taxonomy::{generate_signal_candidates, CandidateTemplate, EmotionLabel, SignalLexicon};
use emocap_workbench::store::{predictions_header, scenes_header, truth_header, Manifest};
use emocap_workbench::stub::{StubPolicy, StubServer};
use emocap_workbench::{
    api, echo_truth_transcript, export_dataset, import_dataset, render_variant, run_experiment, ExperimentOptions,
    ExportFormat, ProjectStore,
};

#[derive(Parser)]
#[command(name = "emocap", version, about = "Caption-based emotion estimation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProjectArg {
    /// Project directory
    #[arg(long, short = 'p', default_value = ".")]
    project: PathBuf,
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// live, mock or replay (default: the project's configured backend)
    #[arg(long)]
    backend: Option<BackendKind>,
    /// OpenAI-compatible base URL, e.g. https://api.openai.com/v1
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Name of the environment variable holding the API key
    #[arg(long)]
    api_key_env: Option<String>,
}

impl BackendArgs {
    fn apply(&self, mut cfg: BackendConfig) -> BackendConfig {
        if let Some(k) = self.backend {
            cfg.kind = k;
        }
        if let Some(e) = &self.endpoint {
            cfg.endpoint = Some(e.clone());
        }
        if let Some(m) = &self.model {
            cfg.model_name = m.clone();
        }
        if let Some(t) = self.temperature {
            cfg.temperature = t;
        }
        if let Some(m) = self.max_tokens {
            cfg.max_tokens = m;
        }
        if let Some(v) = &self.api_key_env {
            cfg.api_key_env = Some(v.clone());
        }
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a project directory
    Init {
        dir: PathBuf,
        /// Lexicon JSON to start from instead of the built-in one
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        repeats: u32,
        /// Print nothing after "a high level of" instead of the literal token
        #[arg(long)]
        blank_placeholder: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Check scenes against the lexicon (a file, or the project's scenes)
    Validate {
        #[command(flatten)]
        project: ProjectArg,
        /// JSON scene, JSON array of scenes, or scenes JSON-lines file
        file: Option<PathBuf>,
    },
    /// Render captions for every annotated person
    Render {
        #[command(flatten)]
        project: ProjectArg,
        /// full, minus-interactions, minus-environments or all
        #[arg(long, default_value = "all")]
        variant: String,
    },
    /// Query the backend for every ground-truth sample, vote and score
    Predict {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, default_value = "all")]
        variant: String,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        repeats: Option<u32>,
        /// Response cache file (default: <project>/cache/completions.jsonl)
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Mock transcript JSON (default: <project>/mock.json)
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Mock backend answering each sample with its ground-truth label
        #[arg(long)]
        echo_truth: bool,
        /// Samples queried concurrently
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Score a predictions file against a ground-truth file
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        variant: CaptionVariant,
        /// Lexicon defining the label set (default: built-in)
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Directory for <variant>.json/.csv/.txt
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a redistributable dataset bundle
    Export {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: ExportFormat,
    },
    /// Replace the project's scenes and ground truth with a bundle
    Import {
        #[command(flatten)]
        project: ProjectArg,
        bundle: PathBuf,
    },
    /// Resolve annotator judgments (JSON array, two per person) into ground truth
    Resolve {
        #[command(flatten)]
        project: ProjectArg,
        file: PathBuf,
    },
    /// Per-emotion sample counts by scene type
    Stats {
        #[command(flatten)]
        project: ProjectArg,
    },
    /// Serve the HTTP API (and a UI bundle, if given)
    Serve {
        #[command(flatten)]
        project: ProjectArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Ask a backend to brainstorm physical signals for an emotion
    Candidates {
        #[arg(long)]
        emotion: String,
        /// cues or descriptions
        #[arg(long, default_value = "cues")]
        template: CandidateTemplate,
        #[command(flatten)]
        backend: BackendArgs,
        /// Fixed reply for the mock backend
        #[arg(long)]
        mock_answer: Option<String>,
    },
    /// Run a local OpenAI-compatible completions stub
    StubLlm {
        #[arg(long, default_value = "127.0.0.1:8089")]
        bind: SocketAddr,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Always answer with this text instead of picking from the prompt's list
        #[arg(long)]
        answer: Option<String>,
    },
}

fn variants(raw: &str) -> Result<Vec<CaptionVariant>> {
    if raw == "all" {
        return Ok(CaptionVariant::ALL.to_vec());
    }
    raw.split(',')
        .map(|v| v.trim().parse::<CaptionVariant>().map_err(anyhow::Error::msg))
        .collect()
}

fn read_scenes_file(path: &Path) -> Result<Vec<SceneAnnotation>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(jsonl::from_str(path, &text, &scenes_header())?);
    }
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

fn init(
    dir: &Path,
    lexicon: Option<&Path>,
    repeats: u32,
    blank: bool,
    backend: &BackendArgs,
) -> Result<()> {
    let lexicon = match lexicon {
        Some(p) => SignalLexicon::load(p)?,
        None => SignalLexicon::default_lexicon(),
    };
    let mut manifest = Manifest::new(&lexicon, backend.apply(BackendConfig::default()));
    manifest.repeats = repeats;
    if blank {
        manifest.placeholder = PlaceholderMode::Blank;
    }
    let store = ProjectStore::init_with_manifest(dir, lexicon, manifest)?;
    println!("initialized {}", store.root().display());
    Ok(())
}

fn validate(project: &Path, file: Option<&Path>) -> Result<bool> {
    let (lexicon, scenes) = match file {
        Some(f) => {
            let lexicon = match ProjectStore::open_read_only(project) {
                Ok(store) => store.lexicon().clone(),
                Err(_) => SignalLexicon::default_lexicon(),
            };
            (lexicon, read_scenes_file(f)?)
        }
        None => {
            let store = ProjectStore::open_read_only(project)?;
            (store.lexicon().clone(), store.scenes()?)
        }
    };
    let mut ok = true;
    for scene in &scenes {
        for v in validate_scene(scene, &lexicon) {
            ok = false;
            println!("{}: {v}", scene.scene_id);
        }
    }
    println!("{} scene(s) checked, {}", scenes.len(), if ok { "all valid" } else { "violations found" });
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn predict(
    project: &Path,
    variant: &str,
    backend: &BackendArgs,
    repeats: Option<u32>,
    cache: Option<PathBuf>,
    mock: Option<&Path>,
    echo_truth: bool,
    parallelism: usize,
) -> Result<()> {
    let mut store = ProjectStore::open(project)?;
    if let Some(c) = cache {
        store.set_cache_path(c);
    }
    for v in variants(variant)? {
        let mut options = ExperimentOptions::from_manifest(&store, v);
        options.backend = backend.apply(options.backend);
        options.parallelism = parallelism;
        if let Some(r) = repeats {
            options.repeats = r;
        }
        if echo_truth {
            options.backend.kind = BackendKind::Mock;
            options.mock = Some(echo_truth_transcript(&store, v, &options.backend)?);
        } else if let Some(m) = mock {
            options.mock = Some(MockTranscript::load(m)?);
        }
        let outcome = run_experiment(&store, &options)?;
        println!(
            "{v}: accuracy {:.2} ({}/{}), {} completions",
            outcome.report.accuracy, outcome.report.correct, outcome.report.total, outcome.completions_consumed
        );
    }
    print!("{}", std::fs::read_to_string(store.path("reports/table.csv"))?);
    Ok(())
}

fn evaluate(
    predictions: &Path,
    truth: &Path,
    variant: CaptionVariant,
    lexicon: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let lexicon = match lexicon {
        Some(p) => SignalLexicon::load(p)?,
        None => SignalLexicon::default_lexicon(),
    };
    let preds: Vec<PredictionRecord> = jsonl::read_all(predictions, &predictions_header())?;
    let truth: Vec<GroundTruthSample> = jsonl::read_all(truth, &truth_header())?;
    let labels = lexicon.labels();
    let report = score(&preds, &truth, variant, &labels)?;
    let baselines = chance_baseline(&truth, &labels)?;
    let csv = reports_to_csv(&[&report]);
    let grid = matrix_to_text(&report.matrix);
    print!("{csv}");
    println!(
        "chance: uniform {:.4}, majority class {:.4}",
        baselines.uniform, baselines.majority_class
    );
    print!("{grid}");
    if let Some(dir) = out {
        let base = dir.join(variant.as_str());
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        jsonl::write_bytes_atomic(&base.with_extension("json"), json.as_bytes())?;
        jsonl::write_bytes_atomic(&base.with_extension("csv"), csv.as_bytes())?;
        jsonl::write_bytes_atomic(&base.with_extension("txt"), grid.as_bytes())?;
    }
    Ok(())
}

fn resolve(project: &Path, file: &Path) -> Result<()> {
    let store = ProjectStore::open(project)?;
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let judgments: Vec<Judgment> = serde_json::from_str(&text)?;
    let mut groups: std::collections::BTreeMap<(String, String), Vec<Judgment>> = Default::default();
    for j in judgments {
        groups.entry((j.scene_id.clone(), j.person_key.clone())).or_default().push(j);
    }
    let (mut agreed, mut excluded) = (0, 0);
    for ((scene, person), js) in groups {
        let [a, b] = js.as_slice() else {
            bail!("{scene}/{person}: expected two judgments, found {}", js.len());
        };
        match store.record_judgments(a, b)? {
            emocap_core::scene::Resolution::Agreed(_) => agreed += 1,
            emocap_core::scene::Resolution::Excluded(_) => excluded += 1,
        }
    }
    println!("{agreed} agreed, {excluded} excluded");
    Ok(())
}

fn stats(project: &Path) -> Result<()> {
    let store = ProjectStore::open_read_only(project)?;
    let s = store.statistics()?;
    println!("{:<28} {:>10} {:>15} {:>6}", "Emotion", "One person", "Multiple people", "Total");
    for r in &s.rows {
        println!("{:<28} {:>10} {:>15} {:>6}", r.label.as_str(), r.one_person, r.multiple_people, r.total);
    }
    println!("{:<28} {:>10} {:>15} {:>6}", "Total", s.one_person, s.multiple_people, s.total);
    println!("unique images: {}", s.unique_scenes);
    Ok(())
}

fn candidates(
    emotion: &str,
    template: CandidateTemplate,
    backend: &BackendArgs,
    mock_answer: Option<String>,
) -> Result<()> {
    let cfg = backend.apply(BackendConfig::default());
    let label = EmotionLabel::new(emotion);
    let list = match cfg.kind {
        BackendKind::Live => generate_signal_candidates(&label, template, &LiveBackend::from_config(&cfg)?)?,
        BackendKind::Mock => {
            let answer = mock_answer.context("the mock backend needs --mock-answer")?;
            generate_signal_candidates(&label, template, &MockBackend::constant(answer))?
        }
        BackendKind::Replay => bail!("candidate generation needs a live or mock backend"),
    };
    for item in list {
        println!("{item}");
    }
    Ok(())
}

fn stub_llm(bind: SocketAddr, seed: u64, answer: Option<String>) -> Result<()> {
    let policy = match answer {
        Some(a) => StubPolicy::Constant(a),
        None => StubPolicy::PickFromList { seed },
    };
    let server = StubServer::bind(bind, policy)?;
    println!("endpoint {} (ctrl-c to stop)", server.endpoint());
    tokio::runtime::Runtime::new()?.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    println!("{} requests served", server.requests());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Init { dir, lexicon, repeats, blank_placeholder, backend } => {
            init(&dir, lexicon.as_deref(), repeats, blank_placeholder, &backend)?
        }
        Command::Validate { project, file } => return validate(&project.project, file.as_deref()),
        Command::Render { project, variant } => {
            let store = ProjectStore::open(&project.project)?;
            for v in variants(&variant)? {
                let captions = render_variant(&store, v)?;
                store.write_captions(v, &captions)?;
                println!("{v}: {} captions -> {}", captions.len(), store.captions_path(v).display());
            }
        }
        Command::Predict { project, variant, backend, repeats, cache, mock, echo_truth, parallelism } => predict(
            &project.project,
            &variant,
            &backend,
            repeats,
            cache,
            mock.as_deref(),
            echo_truth,
            parallelism,
        )?,
        Command::Evaluate { predictions, truth, variant, lexicon, out } => {
            evaluate(&predictions, &truth, variant, lexicon.as_deref(), out.as_deref())?
        }
        Command::Export { project, out, format } => {
            let store = ProjectStore::open_read_only(&project.project)?;
            for path in export_dataset(&store, &out, format)? {
                println!("{}", path.display());
            }
        }
        Command::Import { project, bundle } => {
            let store = ProjectStore::open(&project.project)?;
            let s = import_dataset(&store, &bundle)?;
            println!("imported {} samples from {} images", s.total, s.unique_scenes);
        }
        Command::Resolve { project, file } => resolve(&project.project, &file)?,
        Command::Stats { project } => stats(&project.project)?,
        Command::Serve { project, bind, ui } => {
            let store = ProjectStore::open(&project.project)?;
            tokio::runtime::Runtime::new()?.block_on(api::serve(store, bind, ui))?;
        }
        Command::Candidates { emotion, template, backend, mock_answer } => {
            candidates(&emotion, template, &backend, mock_answer)?
        }
        Command::StubLlm { bind, seed, answer } => stub_llm(bind, seed, answer)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
