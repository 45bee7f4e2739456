//! Thin CLI over the tenderscan library. All logic lives in the library;
//! this binary only parses arguments, applies overrides and maps errors to
//! exit codes (0 success, 1 config error, 2 stage failure).

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tenderscan::neuralnet::{
    build_model, evaluate_model, load_model, predict_batch, save_weights, train_model, Dataset,
};
use tenderscan::ocrfilter::{is_tender, load_keywords, run_ocr};
use tenderscan::pipeline::{
    compare_models_report, crop_filename, load_gray_png, load_manifest, run_full, save_gray_png,
    serve_listing, synthetic_training_set, write_curves, PipelineConfig, RunMetrics,
};
use tenderscan::segmenter::segment_page;

#[derive(Parser)]
#[command(name = "tenderscan", about = "Extract tender notices from e-paper PDFs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, default_value = "tenderscan.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download the configured index pages and linked issue PDFs.
    Fetch {
        #[arg(long)]
        dpi: Option<u32>,
    },
    /// Rasterize one PDF into page PNGs.
    Rasterize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long)]
        dpi: Option<u32>,
    },
    /// Segment a page image into rectangular region crops.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Train a classifier on the synthetic two-class set and save weights.
    Train {
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Samples in the generated training set.
        #[arg(long, default_value_t = 400)]
        samples: usize,
    },
    /// Classify crop images with the trained model.
    Classify {
        /// Crop PNGs.
        inputs: Vec<PathBuf>,
    },
    /// OCR one crop and apply the keyword rule.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        min_common: Option<usize>,
    },
    /// Full pipeline: fetch, rasterize, segment, classify, filter, manifest.
    Run {
        #[arg(long)]
        dpi: Option<u32>,
        #[arg(long)]
        min_common: Option<usize>,
    },
    /// Compare recorded training runs and print the selection.
    Report {
        /// JSON file with rows {arch, epochs, accuracy, precision, recall, f1}.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Serve the manifest over HTTP (read-only).
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RunRow {
    arch: String,
    epochs: usize,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn stage_err(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match PipelineConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_command(cli.command, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn run_command(cmd: Command, mut cfg: PipelineConfig) -> Result<(), ExitCode> {
    match cmd {
        Command::Fetch { dpi } => {
            if let Some(d) = dpi {
                cfg.dpi = d;
            }
            for source in &cfg.sources {
                let html = tenderscan::fetcher::fetch_index(&source.index_url, source.timeout_secs)
                    .map_err(stage_err)?;
                let links = tenderscan::fetcher::extract_pdf_links(
                    &html,
                    &source.index_url,
                    &source.link_class,
                );
                for link in links {
                    let name = link.rsplit('/').next().unwrap_or("issue.pdf");
                    let dest = cfg.workdir.join("downloads").join(&source.name).join(name);
                    let rec = tenderscan::fetcher::download_file(&link, &dest, source.timeout_secs)
                        .map_err(stage_err)?;
                    println!("{}  {}  {} bytes", rec.path.display(), rec.sha256, rec.bytes);
                }
            }
            Ok(())
        }
        Command::Rasterize { input, outdir, dpi } => {
            let dpi = dpi.unwrap_or(cfg.dpi);
            let pages =
                tenderscan::fetcher::rasterize_pdf(&input, &outdir, dpi, &cfg.rasterizer_command)
                    .map_err(stage_err)?;
            for p in pages {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Segment { input, outdir } => {
            let page = load_gray_png(&input).map_err(stage_err)?;
            let params = cfg.segmentation.for_page(page.width);
            std::fs::create_dir_all(&outdir).map_err(stage_err)?;
            for (bbox, crop) in segment_page(&page, &params) {
                let path = outdir.join(crop_filename(0, &bbox));
                save_gray_png(&crop, &path).map_err(stage_err)?;
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Train { arch, epochs, seed, samples } => {
            if let Some(a) = arch {
                cfg.model.arch = a;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let arch = cfg.model.arch().map_err(stage_err)?;
            let preset = cfg.model.preset().map_err(stage_err)?;
            let all = synthetic_training_set(samples, cfg.model.input_size, cfg.train.seed);
            let split = samples * 4 / 5;
            let train = Dataset::from_images(&all[..split], cfg.model.input_size);
            let test = Dataset::from_images(&all[split..], cfg.model.input_size);

            let mut model =
                build_model(arch, cfg.model.input_size, preset, cfg.train.seed).map_err(stage_err)?;
            std::fs::create_dir_all(&cfg.workdir).map_err(stage_err)?;
            let report = train_model(&mut model, &train, &test, &cfg.train, Some(&cfg.workdir))
                .map_err(stage_err)?;
            save_weights(&mut model, &cfg.model.weights).map_err(stage_err)?;

            let curves_dir = cfg.workdir.join("curves");
            write_curves(
                &curves_dir,
                &[(format!("{}-{}", arch.name(), cfg.train.epochs), report.history.clone())],
            )
            .map_err(stage_err)?;

            let metrics = evaluate_model(&mut model, &test).map_err(stage_err)?;
            append_run_row(&cfg, arch.name(), cfg.train.epochs, &metrics).map_err(stage_err)?;
            println!(
                "trained {} for {} epochs: test accuracy {:.4}, f1 {:.4} -> {}",
                arch.name(),
                cfg.train.epochs,
                metrics.accuracy,
                metrics.f1,
                cfg.model.weights.display()
            );
            Ok(())
        }
        Command::Classify { inputs } => {
            let mut model = load_model(&cfg.model.weights).map_err(stage_err)?;
            let images = inputs
                .iter()
                .map(|p| load_gray_png(p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(stage_err)?;
            let preds = predict_batch(&mut model, &images).map_err(stage_err)?;
            for (path, pred) in inputs.iter().zip(preds) {
                println!(
                    "{}\t{}\t{:.4}",
                    path.display(),
                    if pred.positive { "tender" } else { "other" },
                    pred.score
                );
            }
            Ok(())
        }
        Command::Filter { input, min_common } => {
            let min_common = min_common.unwrap_or(cfg.min_common);
            let keywords = load_keywords(&cfg.keywords).map_err(stage_err)?;
            let tokens = run_ocr(&input, &cfg.ocr.command).map_err(stage_err)?;
            let decision = is_tender(&tokens, &keywords, min_common, cfg.ocr.min_conf);
            println!(
                "{}\t{}\tmatched {} of {} required: {}",
                input.display(),
                if decision.is_tender { "tender" } else { "other" },
                decision.common_count,
                decision.min_common,
                decision.matched.iter().cloned().collect::<Vec<_>>().join(",")
            );
            Ok(())
        }
        Command::Run { dpi, min_common } => {
            if let Some(d) = dpi {
                cfg.dpi = d;
            }
            if let Some(m) = min_common {
                cfg.min_common = m;
            }
            let manifest = run_full(&cfg).map_err(stage_err)?;
            println!(
                "run {}: {} records -> {}",
                manifest.run_id,
                manifest.records.len(),
                cfg.manifest.display()
            );
            Ok(())
        }
        Command::Report { runs } => {
            let path = runs.unwrap_or_else(|| cfg.workdir.join("runs.json"));
            let text = std::fs::read_to_string(&path).map_err(stage_err)?;
            let rows: Vec<RunRow> = serde_json::from_str(&text).map_err(stage_err)?;
            let runs: Vec<RunMetrics> = rows
                .iter()
                .map(|r| {
                    Ok(RunMetrics {
                        arch: r.arch.parse().map_err(|e: String| e)?,
                        epochs: r.epochs,
                        metrics: tenderscan::neuralnet::Metrics {
                            accuracy: r.accuracy,
                            precision: r.precision,
                            recall: r.recall,
                            f1: r.f1,
                            loss: 0.0,
                        },
                    })
                })
                .collect::<Result<_, String>>()
                .map_err(stage_err)?;
            let report = compare_models_report(&runs).map_err(stage_err)?;
            print!("{}", report.render());
            Ok(())
        }
        Command::Serve { port } => {
            let port = port.unwrap_or(cfg.serve_port);
            let manifest = load_manifest(&cfg.manifest).map_err(stage_err)?;
            let handle = serve_listing(manifest, port).map_err(stage_err)?;
            println!("serving manifest on http://127.0.0.1:{}", handle.port);
            // block forever; the handle's worker thread owns the server
            loop {
                std::thread::park();
            }
        }
    }
}

fn append_run_row(
    cfg: &PipelineConfig,
    arch: &str,
    epochs: usize,
    m: &tenderscan::neuralnet::Metrics,
) -> std::io::Result<()> {
    let path = cfg.workdir.join("runs.json");
    let mut rows: Vec<RunRow> = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => Vec::new(),
    };
    rows.retain(|r| !(r.arch == arch && r.epochs == epochs));
    rows.push(RunRow {
        arch: arch.to_string(),
        epochs,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&rows)?)
}
