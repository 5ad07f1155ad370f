//! Subcommand dispatch for the `dpr` binary.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure.

use std::path::PathBuf;

use crate::corpus::load_corpus;
use crate::dpr_ag::AgTrainOptions;
use crate::dpr_wg::WgTrainOptions;
use crate::embedding::pretrain::encode_all;
use crate::error::Error;
use crate::recommend::{run_ablation, AblationVariant};

use super::config::{default_config_text, validate_config, PipelineConfig};
use super::pipeline::{
    run_pipeline, stage_evaluate, stage_export_edges, stage_export_masks, stage_gen_data,
    stage_generate, stage_pretrain, stage_train, Artifacts,
};

const USAGE: &str = "\
usage: dpr <command> [--config FILE] [overrides]

commands:
  init-config      print a complete default config file
  gen-data         generate the synthetic corpus into the run directory
  pretrain         train patient/drug embeddings and the matching head
  train-wg         train the weighted-graph package model
  train-ag         train the attributed-graph package model
  evaluate         score baselines and the trained model on the test split
  ablate           train and evaluate one simplified variant
  generate         build heuristic candidate packages with an audit log
  export-masks     write per-patient mask vectors
  export-edges     write the edge-classification report (dpr-ag only)
  run              execute the full pipeline and write the manifest

common flags:
  --config FILE    config file (default: dpr.toml-style text, see init-config)
  --out DIR        override [paths] out_dir
  --seed N         override the global seed
  --lr F           override the stage learning rate
  --batch N        override the stage batch size
  --neg-ratio N    override the stage negative sampling ratio
  --epochs N       override the stage epoch budget
  --threshold F    override the co-occurrence threshold (train/evaluate)
  --layers N       override the GNN layer count (1 or 2)
  --edge-dim N     override the edge attribute width (train-ag)
  --ce-weight F    override the classification loss weight (train-ag)
  --freeze-embeddings   keep pretrained drug embeddings fixed
  --variant NAME   ablation variant (ablate): wg-context wg-type ag-mask ag-type gnn-plain
";

struct ParsedArgs {
    command: String,
    config_path: Option<PathBuf>,
    overrides: Vec<(String, String)>,
    flags: Vec<String>,
}

fn parse_args(args: &[String]) -> Result<ParsedArgs, String> {
    let mut it = args.iter();
    let command = it.next().cloned().ok_or_else(|| USAGE.to_string())?;
    let mut parsed = ParsedArgs {
        command,
        config_path: None,
        overrides: Vec::new(),
        flags: Vec::new(),
    };
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--") else {
            return Err(format!("unexpected argument `{arg}`\n\n{USAGE}"));
        };
        match name {
            "freeze-embeddings" => parsed.flags.push(name.to_string()),
            _ => {
                let value = it
                    .next()
                    .ok_or_else(|| format!("flag --{name} needs a value"))?;
                if name == "config" {
                    parsed.config_path = Some(PathBuf::from(value));
                } else {
                    parsed.overrides.push((name.to_string(), value.clone()));
                }
            }
        }
    }
    Ok(parsed)
}

fn apply_overrides(
    cfg: &mut PipelineConfig,
    parsed: &ParsedArgs,
    stage_is_pretrain: bool,
) -> Result<(), String> {
    let parse_f64 = |v: &str, what: &str| {
        v.parse::<f64>()
            .map_err(|_| format!("--{what} expects a number, got `{v}`"))
    };
    let parse_usize = |v: &str, what: &str| {
        v.parse::<usize>()
            .map_err(|_| format!("--{what} expects an integer, got `{v}`"))
    };
    for (name, value) in &parsed.overrides {
        match name.as_str() {
            "out" => cfg.out_dir = PathBuf::from(value),
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| format!("--seed expects an integer, got `{value}`"))?
            }
            "lr" => {
                let v = parse_f64(value, "lr")?;
                if stage_is_pretrain {
                    cfg.pretrain.learning_rate = v;
                } else {
                    cfg.package_train.learning_rate = v;
                }
            }
            "batch" => {
                let v = parse_usize(value, "batch")?;
                if stage_is_pretrain {
                    cfg.pretrain.batch_size = v;
                } else {
                    cfg.package_train.batch_size = v;
                }
            }
            "neg-ratio" => {
                let v = parse_usize(value, "neg-ratio")?;
                if stage_is_pretrain {
                    cfg.pretrain.negative_ratio = v;
                } else {
                    cfg.package_train.negative_ratio = v;
                }
            }
            "epochs" => {
                let v = parse_usize(value, "epochs")?;
                if stage_is_pretrain {
                    cfg.pretrain.epochs = v;
                } else {
                    cfg.package_train.epochs = v;
                }
            }
            "threshold" => cfg.threshold = parse_f64(value, "threshold")?,
            "layers" => cfg.layers = parse_usize(value, "layers")?,
            "edge-dim" => cfg.edge_dim = Some(parse_usize(value, "edge-dim")?),
            "ce-weight" => cfg.ce_weight = parse_f64(value, "ce-weight")?,
            "variant" => {} // consumed by the ablate command
            other => return Err(format!("unknown flag --{other}\n\n{USAGE}")),
        }
    }
    if parsed.flags.iter().any(|f| f == "freeze-embeddings") {
        cfg.freeze_embeddings = true;
    }
    Ok(())
}

fn load_config(parsed: &ParsedArgs) -> Result<PipelineConfig, (i32, String)> {
    let mut cfg = match &parsed.config_path {
        Some(path) => validate_config(path).map_err(|e| (1, e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let stage_is_pretrain = parsed.command == "pretrain";
    apply_overrides(&mut cfg, parsed, stage_is_pretrain).map_err(|e| (1, e))?;
    Ok(cfg)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Run one CLI invocation; returns the process exit code.
pub fn run_cli(args: Vec<String>) -> i32 {
    let parsed = match parse_args(&args) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("{msg}");
            return 1;
        }
    };
    if parsed.command == "init-config" {
        print!("{}", default_config_text());
        return 0;
    }
    if parsed.command == "help" || parsed.command == "--help" {
        print!("{USAGE}");
        return 0;
    }
    let mut cfg = match load_config(&parsed) {
        Ok(cfg) => cfg,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };

    let result = match parsed.command.as_str() {
        "gen-data" => stage_gen_data(&cfg),
        "pretrain" => stage_pretrain(&cfg),
        "train-wg" => {
            cfg.model = super::config::ModelKind::Weighted;
            stage_train(&cfg)
        }
        "train-ag" => {
            cfg.model = super::config::ModelKind::Attributed;
            stage_train(&cfg)
        }
        "evaluate" => stage_evaluate(&cfg).map(|rows| {
            for (name, m) in rows {
                println!(
                    "{name}\tprecision={:.4}\trecall={:.4}\tf1={:.4}",
                    m.precision, m.recall, m.f1
                );
            }
        }),
        "ablate" => run_ablate(&cfg, &parsed),
        "generate" => stage_generate(&cfg).map(|out| {
            println!(
                "best-of-retrieved\tf1={:.4}\nbest-of-generated\tf1={:.4}",
                out.retrieved_only.f1, out.with_generated.f1
            );
        }),
        "export-masks" => stage_export_masks(&cfg),
        "export-edges" => stage_export_edges(&cfg),
        "run" => run_pipeline(&cfg).map(|manifest| {
            println!("manifest written to {}", cfg.out_dir.join("manifest.json").display());
            for (name, m) in &manifest.metrics {
                println!("{name}\tf1={:.4}", m.f1);
            }
        }),
        other => {
            eprintln!("unknown command `{other}`\n\n{USAGE}");
            return 1;
        }
    };

    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_ablate(cfg: &PipelineConfig, parsed: &ParsedArgs) -> crate::error::Result<()> {
    let variant_name = parsed
        .overrides
        .iter()
        .find(|(k, _)| k == "variant")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Config("ablate needs --variant NAME".into()))?;
    let variant = AblationVariant::parse(&variant_name)?;
    let arts = Artifacts::new(&cfg.out_dir);
    let corpus = load_corpus(&arts.corpus(), &arts.labels())?;
    let pretrained = super::checkpoint::Checkpoint::load(&arts.pretrain_ckpt())?.into_pretrain()?;
    let embeddings = encode_all(&pretrained, &corpus);
    let mut train_cfg = cfg.package_train.clone();
    train_cfg.seed = cfg.seed;
    let wg_opts = WgTrainOptions {
        train: train_cfg.clone(),
        threshold: cfg.threshold,
        layers: cfg.layers,
        freeze_embeddings: cfg.freeze_embeddings,
        variant: crate::dpr_wg::WgVariant::full(),
        mlp_hidden: match cfg.dims {
            super::config::DimPreset::Reference => 128,
            super::config::DimPreset::Compact => 32,
        },
        factor_dim: None,
    };
    let ag_opts = AgTrainOptions {
        train: train_cfg,
        threshold: cfg.threshold,
        layers: cfg.layers,
        edge_dim: cfg.edge_dim,
        ce_weight: cfg.ce_weight,
        freeze_embeddings: cfg.freeze_embeddings,
        variant: crate::dpr_ag::AgVariant::full(),
        mlp_hidden: wg_opts.mlp_hidden,
    };
    let report = run_ablation(
        variant,
        &corpus,
        &pretrained,
        &embeddings,
        &wg_opts,
        &ag_opts,
        cfg.neighbors,
    )?;
    println!(
        "{}\tprecision={:.4}\trecall={:.4}\tf1={:.4}",
        variant.name(),
        report.mean.precision,
        report.mean.recall,
        report.mean.f1
    );
    Ok(())
}
