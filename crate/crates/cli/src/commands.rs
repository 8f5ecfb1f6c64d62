//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use popseq::eval::{
    self, evaluate, interpolate as interpolate_scores, leakage_audit, load_score_file,
    synth_generate, EvalConfig, EvalTarget, FamilyWeights, GenSpec,
};
use popseq::ingest::{self, parse_log, CacheFormat, LogFormat, ParseOptions};
use popseq::model::{
    count_params, load_checkpoint, save_checkpoint, ModelConfig, ModelParams, PipelineConfig,
};
use popseq::popdyn::{
    load_pop_cache, save_pop_cache, PopConfig, PopularityTable, TimeBucketing, WindowParams,
};
use popseq::train::{fit, TrainConfig};
use popseq::{Error, Result};

use crate::config::{load_file_config, resolve, FileConfig, TrainOverrides};
use crate::manifest::RunManifest;
use crate::{
    CacheFormatArg, EvalArgs, InterpolateArgs, LeakageArgs, ParamsReportArgs, PopdynArgs,
    PreprocessArgs, SynthArgs, TargetArg, TrainArgs, TransferArgs,
};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

fn to_cache_format(arg: CacheFormatArg) -> CacheFormat {
    match arg {
        CacheFormatArg::Binary => CacheFormat::Binary,
        CacheFormatArg::Ndjson => CacheFormat::Ndjson,
    }
}

fn print_stats(stats: &ingest::DatasetStats) {
    println!(
        "users {}  items {}  actions {}  avg length {:.1}  density {:.4}%",
        stats.users,
        stats.items,
        stats.actions,
        stats.avg_length,
        stats.density * 100.0
    );
}

pub fn preprocess(args: &PreprocessArgs) -> Result<()> {
    let start = Instant::now();
    let opts = ParseOptions {
        format: match args.format {
            crate::FormatArg::Csv => LogFormat::Csv,
            crate::FormatArg::Tsv => LogFormat::Tsv,
        },
        delimiter: args.delimiter.map(|c| c as u8),
        has_header: args.header,
        user_col: args.user_col,
        item_col: args.item_col,
        time_col: args.time_col,
        rating_col: args.rating_col,
    };
    let (mut ds, report) = parse_log(&args.input, &opts)?;
    ds.build_split();
    ensure_parent(&args.out)?;
    ingest::save_cache(&ds, &args.out, to_cache_format(args.cache_format))?;
    print_stats(&ds.stats());
    if report.rows_skipped > 0 {
        eprintln!(
            "skipped {} of {} rows; first errors: {:?}",
            report.rows_skipped, report.rows_total, report.sample_errors
        );
    }
    let mut manifest = RunManifest::new(
        "preprocess",
        serde_json::json!({
            "options": opts,
            "cache_format": format!("{:?}", args.cache_format),
            "parse_report": report,
            "stats": ds.stats(),
        }),
    );
    manifest.input(&args.input)?;
    manifest.output(&args.out);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&args.out)?;
    Ok(())
}

pub fn popdyn(args: &PopdynArgs) -> Result<()> {
    let start = Instant::now();
    let ds = ingest::load_cache(&args.dataset)?;
    let bucketing = if args.calendar {
        TimeBucketing::calendar(ds.min_timestamp())?
    } else {
        TimeBucketing::fixed(
            ds.min_timestamp(),
            args.fine_days * 86_400,
            args.coarse_fine_ratio,
        )?
    };
    let pop_cfg = PopConfig {
        gamma: args.gamma,
        include_inactive: args.include_inactive,
    };
    let windows = WindowParams::new(args.k, args.m, args.n, args.offset)?;
    let table = PopularityTable::build(&ds, bucketing, pop_cfg)?;
    ensure_parent(&args.out)?;
    save_pop_cache(&table, &windows, &args.out)?;
    println!(
        "popularity table: {} items, {} fine periods, {} coarse periods, gamma {}",
        table.n_items, table.n_fine, table.n_coarse, args.gamma
    );
    let mut manifest = RunManifest::new(
        "popdyn",
        serde_json::json!({
            "gamma": args.gamma,
            "bucketing": bucketing,
            "windows": windows,
            "include_inactive": args.include_inactive,
        }),
    );
    manifest.input(&args.dataset)?;
    manifest.output(&args.out);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&args.out)?;
    Ok(())
}

const LR_GRID: [f64; 3] = [1e-4, 1e-3, 1e-2];

fn config_hash(value: &serde_json::Value) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(value.to_string().as_bytes());
    hasher
        .finalize()
        .iter()
        .take(4)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let start = Instant::now();
    let ds = ingest::load_cache(&args.dataset)?;
    let (table, windows) = load_pop_cache(&args.popcache)?;
    let file_cfg: FileConfig = match &args.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let overrides = TrainOverrides {
        d: args.d,
        heads: args.heads,
        layers: args.layers,
        max_len: args.max_len,
        dropout: args.dropout,
        lr: args.lr,
        max_epochs: args.epochs,
        batch_size: args.batch_size,
        patience: args.patience,
        weight_decay: args.weight_decay,
        negatives: args.negatives,
        loss: args.loss.clone(),
    };
    let base_model = ModelConfig {
        windows,
        ..ModelConfig::default()
    };
    let base_train = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let (model_cfg, train_cfg) = resolve(base_model, base_train, &file_cfg, &overrides)?;
    if !LR_GRID.contains(&train_cfg.lr) {
        eprintln!(
            "warning: learning rate {} is outside the usual grid {LR_GRID:?}",
            train_cfg.lr
        );
    }
    let pipeline = PipelineConfig::new(model_cfg, table.config, &table.bucketing);
    let resolved = serde_json::json!({
        "model": model_cfg,
        "train": train_cfg,
        "pipeline": pipeline,
        "seeds": args.seeds,
    });
    let out_dir = match &args.out {
        Some(dir) => dir.clone(),
        None => {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from(format!("runs/{ts}-{}", config_hash(&resolved)))
        }
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let fingerprint = ingest::fingerprint(&ds);

    let mut manifest = RunManifest::new("train", resolved);
    manifest.input(&args.dataset)?;
    manifest.input(&args.popcache)?;
    if let Some(cfg_path) = &args.config {
        manifest.input(cfg_path)?;
    }

    let mut best_ndcg = Vec::new();
    let mut best_recall = Vec::new();
    let mut best_epochs = Vec::new();
    for run_seed in seed..seed + args.seeds {
        let run_cfg = TrainConfig {
            seed: run_seed,
            ..train_cfg
        };
        let result = fit::<f32>(&ds, &table, model_cfg, &run_cfg)?;
        let ckpt = out_dir.join(format!("checkpoint-{run_seed}.ckpt"));
        save_checkpoint(&result.params, &pipeline, run_seed, &fingerprint, &ckpt)?;
        let curve_path = out_dir.join(format!("curve-{run_seed}.json"));
        let curve_json = serde_json::to_string_pretty(&result.curve)
            .map_err(|e| Error::data(format!("curve serialization: {e}")))?;
        std::fs::write(&curve_path, curve_json).map_err(|e| Error::io(&curve_path, e))?;
        println!(
            "seed {run_seed}: best epoch {} val R@10 {:.4} val N@10 {:.4} ({} epochs run)",
            result.best_epoch,
            result.best_val_recall10,
            result.best_val_ndcg10,
            result.curve.len()
        );
        manifest.seeds.push(run_seed);
        manifest.output(&ckpt);
        manifest.output(&curve_path);
        best_ndcg.push(result.best_val_ndcg10);
        best_recall.push(result.best_val_recall10);
        best_epochs.push(result.best_epoch);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let std = |xs: &[f64]| {
        let m = mean(xs);
        (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
    };
    let summary = serde_json::json!({
        "seeds": manifest.seeds,
        "val_ndcg10": {"mean": mean(&best_ndcg), "std": std(&best_ndcg), "values": best_ndcg},
        "val_recall10": {"mean": mean(&best_recall), "std": std(&best_recall), "values": best_recall},
        "best_epochs": best_epochs,
    });
    let summary_path = out_dir.join("summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary is valid json"),
    )
    .map_err(|e| Error::io(&summary_path, e))?;
    manifest.output(&summary_path);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&out_dir)?;
    if args.seeds > 1 {
        println!(
            "aggregate over {} seeds: val N@10 {:.4} ± {:.4}",
            args.seeds,
            mean(&best_ndcg),
            std(&best_ndcg)
        );
    }
    Ok(())
}

/// The popcache must have been built under the checkpoint's pipeline
/// configuration; refuse anything else.
fn check_popcache_compat(
    header_cfg: &PipelineConfig,
    table: &PopularityTable,
    windows: &WindowParams,
) -> Result<()> {
    let from_cache = PipelineConfig {
        model: ModelConfig {
            windows: *windows,
            ..header_cfg.model
        },
        pop: table.config,
        bucketing_kind: table.bucketing.kind,
        fine_len: table.bucketing.fine_len,
        coarse_fine_ratio: table.bucketing.coarse_fine_ratio,
    };
    header_cfg
        .compatible_for_transfer(&from_cache)
        .map_err(|diff| {
            Error::config(format!(
                "popularity cache does not match the checkpoint pipeline: {diff}"
            ))
        })
}

fn eval_config(seed: u64, negatives: usize, k_list: &[usize], offset: Option<i64>) -> EvalConfig {
    EvalConfig {
        k_list: k_list.to_vec(),
        negatives,
        seed,
        offset,
    }
}

fn print_metrics(prefix: &str, report: &popseq::eval::EvalReport) {
    for &(k, r, n) in &report.metrics {
        println!(
            "{prefix} R@{k} {:.4}  N@{k} {:.4}  ({} users)",
            r, n, report.metadata.eval_users
        );
    }
}

pub fn eval(args: &EvalArgs, seed: u64) -> Result<()> {
    let start = Instant::now();
    let ds = ingest::load_cache(&args.dataset)?;
    let (table, windows) = load_pop_cache(&args.popcache)?;
    let (params, header) = load_checkpoint(&args.checkpoint)?;
    check_popcache_compat(&header.config, &table, &windows)?;
    let cfg = eval_config(seed, args.negatives, &args.k_list, args.offset);
    let target = match args.target {
        TargetArg::Test => EvalTarget::Test,
        TargetArg::Valid => EvalTarget::Validation,
    };
    let report = evaluate(&params, &ds, &table, &cfg, target)?;
    ensure_parent(&args.out)?;
    report.save(&args.out)?;
    if let Some(scores_out) = &args.scores_out {
        ensure_parent(scores_out)?;
        report.save_scores(scores_out)?;
    }
    print_metrics("eval", &report);
    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({"eval": cfg, "target": target, "pipeline": header.config}),
    );
    manifest.seeds.push(seed);
    manifest.input(&args.dataset)?;
    manifest.input(&args.popcache)?;
    manifest.input(&args.checkpoint)?;
    manifest.output(&args.out);
    if let Some(scores_out) = &args.scores_out {
        manifest.output(scores_out);
    }
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&args.out)?;
    Ok(())
}

pub fn transfer(args: &TransferArgs, seed: u64) -> Result<()> {
    let start = Instant::now();
    let ds = ingest::load_cache(&args.dataset)?;
    let (params, header) = load_checkpoint(&args.checkpoint)?;
    let cfg = eval_config(seed, args.negatives, &args.k_list, args.offset);
    let outcome = match &args.popcache {
        Some(pop_path) => {
            let (table, windows) = load_pop_cache(pop_path)?;
            check_popcache_compat(&header.config, &table, &windows)?;
            let digest_before = params.digest();
            let report = evaluate(&params, &ds, &table, &cfg, EvalTarget::Test)?;
            eval::ZeroShotOutcome {
                report,
                digest_before,
                digest_after: params.digest(),
            }
        }
        None => eval::zero_shot(&params, &header.config, &ds, &cfg)?,
    };
    if outcome.digest_before != outcome.digest_after {
        return Err(Error::Numerical(
            "parameter digest changed during zero-shot inference".into(),
        ));
    }
    ensure_parent(&args.out)?;
    outcome.report.save(&args.out)?;
    if let Some(scores_out) = &args.scores_out {
        ensure_parent(scores_out)?;
        outcome.report.save_scores(scores_out)?;
    }
    print_metrics("transfer", &outcome.report);
    println!("parameter digest unchanged: {}", outcome.digest_after);
    let mut manifest = RunManifest::new(
        "transfer",
        serde_json::json!({
            "eval": cfg,
            "pipeline": header.config,
            "digest": outcome.digest_after,
        }),
    );
    manifest.seeds.push(seed);
    manifest.input(&args.dataset)?;
    manifest.input(&args.checkpoint)?;
    if let Some(pop_path) = &args.popcache {
        manifest.input(pop_path)?;
    }
    manifest.output(&args.out);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&args.out)?;
    Ok(())
}

pub fn interpolate(args: &InterpolateArgs) -> Result<()> {
    let start = Instant::now();
    let ours = popseq::eval::EvalReport::load(&args.ours)?;
    let external = load_score_file(&args.external)?;
    let blended = interpolate_scores(&ours, &external, args.alpha)?;
    ensure_parent(&args.out)?;
    blended.save(&args.out)?;
    print_metrics(&format!("interp(alpha={})", args.alpha), &blended);
    let mut manifest = RunManifest::new(
        "interpolate",
        serde_json::json!({"alpha": args.alpha}),
    );
    manifest.input(&args.ours)?;
    manifest.input(&args.external)?;
    manifest.output(&args.out);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&args.out)?;
    Ok(())
}

pub fn leakage(args: &LeakageArgs) -> Result<()> {
    let start = Instant::now();
    let ds = ingest::load_cache(&args.dataset)?;
    let report = leakage_audit(&ds);
    println!(
        "test interactions: {}\nmean future interactions of the test item in training: {:.2}\nmean future proportion: {:.2}%",
        report.test_interactions,
        report.mean_future_count,
        report.mean_future_proportion * 100.0
    );
    if let Some(out) = &args.out {
        ensure_parent(out)?;
        std::fs::write(
            out,
            serde_json::to_string_pretty(&report).expect("leakage report is valid json"),
        )
        .map_err(|e| Error::io(out, e))?;
        let mut manifest = RunManifest::new("leakage", serde_json::json!({}));
        manifest.input(&args.dataset)?;
        manifest.output(out);
        manifest.wall_seconds = start.elapsed().as_secs_f64();
        manifest.save(out)?;
    }
    Ok(())
}

pub fn params_report(args: &ParamsReportArgs) -> Result<()> {
    let file_cfg: FileConfig = match &args.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let m = &file_cfg.model;
    let defaults = ModelConfig::default();
    let cfg = ModelConfig {
        d: args.d.or(m.d).unwrap_or(defaults.d),
        heads: args.heads.or(m.heads).unwrap_or(defaults.heads),
        layers: args.layers.or(m.layers).unwrap_or(defaults.layers),
        max_len: args.max_len.or(m.max_len).unwrap_or(defaults.max_len),
        windows: WindowParams::new(args.k, args.m, args.n, 1)?,
        dropout: defaults.dropout,
    };
    cfg.validate()?;
    let d = cfg.d;
    let w = cfg.feature_width();
    let total = count_params(&cfg);
    let params: ModelParams<f32> = ModelParams::init(cfg, 0)?;
    println!("window projection    {:>8}  (d × k(m+n) = {d} × {w})", d * w);
    println!(
        "attention / layer    {:>8}  (4d²)",
        4 * d * d
    );
    println!(
        "ffn / layer          {:>8}  (2d² + 2d)",
        2 * d * d + 2 * d
    );
    println!("norms / layer        {:>8}  (4d)", 4 * d);
    println!("final norm           {:>8}  (2d)", 2 * d);
    println!("layers               {:>8}", cfg.layers);
    println!("total                {:>8}  ({:.4} M)", total, total as f64 / 1e6);
    assert_eq!(
        total,
        params.total_len(),
        "closed form disagrees with enumeration"
    );
    println!("enumeration check    {:>8}  (allocated values, equal)", params.total_len());
    println!("catalog-size independent: no per-item or per-user tables exist");
    Ok(())
}

pub fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let start = Instant::now();
    let spec = GenSpec {
        users: args.users,
        items: args.items,
        horizon: args.horizon,
        fine_len: args.fine_days * 86_400,
        events_per_user: (args.events_min, args.events_max),
        families: FamilyWeights {
            rising: args.rising,
            decaying: args.decaying,
            cyclic: args.cyclic,
        },
        trend_strength: args.strength,
        amplitude: (args.amp_lo, args.amp_hi),
    };
    let ds = synth_generate(&spec, seed)?;
    ensure_parent(&args.out)?;
    ingest::save_cache(&ds, &args.out, to_cache_format(args.cache_format))?;
    print_stats(&ds.stats());
    let mut manifest = RunManifest::new("synth", serde_json::json!({"spec": spec, "seed": seed}));
    manifest.seeds.push(seed);
    manifest.output(&args.out);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&args.out)?;
    Ok(())
}
