//! Command implementations: each resolves the pipeline it needs from the
//! run configuration, writes its artifacts, and prints a short summary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use scrm_core::ablate::run_ablation;
use scrm_core::config::TrainConfig;
use scrm_core::eval::{
    evaluate, ItemKnnScorer, MetricReport, MetricTable, ModelScorer, PopScorer, Scorer,
};
use scrm_core::graphs::{
    augment_second_order, build_complementary_first_order, build_substitutable, graph_stats,
    to_tsv, RelationGraph,
};
use scrm_core::ingest::{
    filter_dataset, fuse_sessions, parse_events, split_chronological, Catalog, DatasetSplit,
    FusedSession,
};
use scrm_core::model::checkpoint::{self, sha256_hex, Manifest};
use scrm_core::model::forward::PreparedGraphs;
use scrm_core::synth::{generate, item_name};
use scrm_core::train::train;

use crate::config::RunConfig;
use crate::{user, CliError};

/// Everything downstream of ingestion that train/evaluate/ablate share.
/// Graphs are built from the training sessions only, so evaluation never
/// sees co-occurrences from the held-out splits.
pub struct Pipeline {
    pub catalog: Catalog,
    pub split: DatasetSplit,
    pub sub: RelationGraph,
    pub comp: RelationGraph,
    pub hash_sub: String,
    pub hash_comp: String,
}

fn read_events(path: &Path) -> Result<(Vec<FusedSession>, Catalog), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| user(anyhow!("cannot read events file {}: {e}", path.display())))?;
    let events = parse_events(&text).map_err(user)?;
    Ok(fuse_sessions(&events))
}

fn filtered(cfg: &RunConfig) -> Result<(Vec<FusedSession>, Catalog), CliError> {
    let (sessions, catalog) = read_events(&cfg.events_in)?;
    filter_dataset(
        sessions,
        &catalog,
        cfg.min_item_support,
        cfg.min_session_len,
        cfg.filter_passes,
    )
    .map_err(user)
}

fn relation_graphs(sessions: &[FusedSession], n_items: usize) -> (RelationGraph, RelationGraph) {
    let sub = build_substitutable(sessions, n_items);
    let comp = augment_second_order(&build_complementary_first_order(sessions, n_items), &sub);
    (sub, comp)
}

fn prepare(cfg: &RunConfig) -> Result<Pipeline, CliError> {
    let (sessions, catalog) = filtered(cfg)?;
    let split = split_chronological(sessions, cfg.n_valid, cfg.n_test).map_err(user)?;
    let (sub, comp) = relation_graphs(&split.train.sessions, catalog.len());
    let hash_sub = sha256_hex(to_tsv(&sub).as_bytes());
    let hash_comp = sha256_hex(to_tsv(&comp).as_bytes());
    log::info!(
        "prepared {} train / {} valid / {} test sessions over {} items",
        split.train.sessions.len(),
        split.valid.sessions.len(),
        split.test.sessions.len(),
        catalog.len()
    );
    Ok(Pipeline {
        catalog,
        split,
        sub,
        comp,
        hash_sub,
        hash_comp,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| anyhow!("cannot create directory {}: {e}", dir.display()))?;
        }
    }
    fs::write(path, contents).map_err(|e| anyhow!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

/// `model.ckpt` → `model.ckpt.log.jsonl`, and so on.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).context("serializing report")?;
    write_file(path, text + "\n")
}

/// Generate a synthetic behavior log plus its planted-relation truth files.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = generate(&cfg.synth_config()).map_err(user)?;
    let events = &cfg.events_in;
    write_file(events, &corpus.events_csv)?;
    write_file(&sibling(events, ".truth-sub.tsv"), pairs_tsv(&corpus.truth_sub))?;
    write_file(&sibling(events, ".truth-comp.tsv"), pairs_tsv(&corpus.truth_comp))?;
    write_file(
        &sibling(events, ".realized-comp.tsv"),
        pairs_tsv(&corpus.realized_comp),
    )?;
    write_file(&sibling(events, ".config"), cfg.to_file_string())?;
    println!(
        "wrote {} events ({} noise) in {} sessions to {}; {} cluster pairs, {} planted complements ({} realized)",
        corpus.n_events,
        corpus.n_noise_events,
        cfg.n_sessions,
        events.display(),
        corpus.truth_sub.len(),
        corpus.truth_comp.len(),
        corpus.realized_comp.len(),
    );
    Ok(())
}

fn pairs_tsv(pairs: &BTreeSet<(usize, usize)>) -> String {
    let mut out = String::from("item_i\titem_j\n");
    for &(a, b) in pairs {
        writeln!(out, "{}\t{}", item_name(a), item_name(b)).expect("string write cannot fail");
    }
    out
}

/// Build both relation graphs from the full filtered dataset and write
/// them as TSVs with an item index and summary stats.
pub fn cmd_build_graphs(cfg: &RunConfig) -> Result<(), CliError> {
    let (sessions, catalog) = filtered(cfg)?;
    let (sub, comp) = relation_graphs(&sessions, catalog.len());
    let dir = &cfg.graphs_out;
    fs::create_dir_all(dir)
        .map_err(|e| anyhow!("cannot create directory {}: {e}", dir.display()))?;
    write_file(&dir.join("substitutable.tsv"), to_tsv(&sub))?;
    write_file(&dir.join("complementary.tsv"), to_tsv(&comp))?;
    let mut items = String::from("index\titem_id\tsupport\n");
    for (ix, id) in catalog.ids.iter().enumerate() {
        writeln!(items, "{ix}\t{id}\t{}", catalog.counts[ix]).expect("string write cannot fail");
    }
    write_file(&dir.join("items.tsv"), items)?;
    let stats = serde_json::json!({
        "n_sessions": sessions.len(),
        "n_items": catalog.len(),
        "substitutable": graph_stats(&sub),
        "complementary": graph_stats(&comp),
    });
    write_json(&dir.join("stats.json"), &stats)?;
    write_file(&dir.join("effective.config"), cfg.to_file_string())?;
    println!(
        "built graphs from {} sessions over {} items: {} substitutable edges, {} complementary → {}",
        sessions.len(),
        catalog.len(),
        sub.num_edges(),
        comp.num_edges(),
        dir.display(),
    );
    Ok(())
}

/// Train one model and write the checkpoint, epoch log and effective config.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let tc = cfg.train_config().map_err(user)?;
    let pipe = prepare(cfg)?;
    let graphs = PreparedGraphs::new(pipe.sub.clone(), pipe.comp.clone(), tc.ablation);
    let started = Instant::now();
    let outcome = train(&graphs, &pipe.split, &tc).map_err(user)?;
    let bytes = checkpoint::save(
        &outcome.params,
        tc.seed,
        tc.ablation.variant_name(),
        &pipe.hash_sub,
        &pipe.hash_comp,
    );
    write_file(&cfg.checkpoint, &bytes)?;
    let mut log_lines = String::new();
    for entry in &outcome.log {
        log_lines.push_str(&serde_json::to_string(entry).context("serializing epoch log")?);
        log_lines.push('\n');
    }
    write_file(&sibling(&cfg.checkpoint, ".log.jsonl"), log_lines)?;
    write_file(&sibling(&cfg.checkpoint, ".config"), cfg.to_file_string())?;
    let best = &outcome.log[outcome.best_epoch];
    println!(
        "trained {} ({} epochs, best {} with valid MRR@10 {:.4}) in {:.1}s → {}",
        tc.ablation.variant_name(),
        outcome.log.len(),
        outcome.best_epoch,
        best.valid_mrr10,
        started.elapsed().as_secs_f64(),
        cfg.checkpoint.display(),
    );
    Ok(())
}

fn check_manifest(manifest: &Manifest, tc: &TrainConfig, pipe: &Pipeline) -> Result<()> {
    let mut bad = Vec::new();
    let mut expect = |field: &str, want: &dyn std::fmt::Display, got: &dyn std::fmt::Display| {
        let (want, got) = (want.to_string(), got.to_string());
        if want != got {
            bad.push(format!("{field}: checkpoint has {got}, run expects {want}"));
        }
    };
    expect("n_items", &pipe.catalog.len(), &manifest.n_items);
    expect("d0", &tc.d0, &manifest.d0);
    expect("d1", &tc.d1, &manifest.d1);
    expect("k_m", &tc.k_m, &manifest.k_m);
    expect("wgat_layers", &tc.wgat_layers, &manifest.wgat_layers);
    expect("variant", &tc.ablation.variant_name(), &manifest.variant);
    expect("substitutable graph hash", &pipe.hash_sub, &manifest.graph_hash_sub);
    expect("complementary graph hash", &pipe.hash_comp, &manifest.graph_hash_comp);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("checkpoint does not match this run: {}", bad.join("; ")))
    }
}

fn metric_report(name: &str, dataset: &str, table: MetricTable, seed: u64) -> MetricReport {
    MetricReport {
        model: name.to_string(),
        dataset: dataset.to_string(),
        per_k: table.per_k,
        n_prefixes: table.n_prefixes,
        seed,
    }
}

/// Score a checkpoint on the held-out test split at K ∈ {5, 10, 20}.
pub fn cmd_evaluate(cfg: &RunConfig, with_baselines: bool) -> Result<(), CliError> {
    let tc = cfg.train_config().map_err(user)?;
    let pipe = prepare(cfg)?;
    let bytes = fs::read(&cfg.checkpoint)
        .map_err(|e| user(anyhow!("cannot read checkpoint {}: {e}", cfg.checkpoint.display())))?;
    let (params, manifest) = checkpoint::load(&bytes).map_err(user)?;
    check_manifest(&manifest, &tc, &pipe).map_err(user)?;

    let graphs = PreparedGraphs::new(pipe.sub.clone(), pipe.comp.clone(), tc.ablation);
    let scorer = ModelScorer::new(&params, &graphs, tc.k_zeta, tc.tau);
    let ks = [5usize, 10, 20];
    let dataset = cfg
        .events_in
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "events".into());
    let prefixes = &pipe.split.test.prefixes;

    let mut report = serde_json::Map::new();
    let mut add = |name: &str, scorer: &dyn Scorer| -> Result<(), CliError> {
        let table = evaluate(scorer, prefixes, &ks).map_err(user)?;
        print_metrics(name, &table);
        let value = serde_json::to_value(metric_report(name, &dataset, table, manifest.seed))
            .context("serializing metrics")?;
        report.insert(name.to_string(), value);
        Ok(())
    };
    add("scrm", &scorer)?;
    if with_baselines {
        let n = pipe.catalog.len();
        add("pop", &PopScorer::from_train(&pipe.split.train.prefixes, n))?;
        add("itemknn", &ItemKnnScorer::from_train(&pipe.split.train.sessions, n))?;
    }
    write_json(&cfg.report_out, &serde_json::Value::Object(report))?;
    write_file(&sibling(&cfg.report_out, ".config"), cfg.to_file_string())?;
    println!(
        "evaluated {} test prefixes → {}",
        prefixes.len(),
        cfg.report_out.display()
    );
    Ok(())
}

fn print_metrics(name: &str, table: &MetricTable) {
    for (k, cell) in &table.per_k {
        println!(
            "{name:>8}  K={k:<2}  HR {:.4}  MRR {:.4}  NDCG {:.4}",
            cell.hr, cell.mrr, cell.ndcg
        );
    }
}

/// Train and score the full model plus every single-switch variant.
pub fn cmd_ablate(cfg: &RunConfig, seeds: &[u64], k: usize) -> Result<(), CliError> {
    if seeds.is_empty() {
        return Err(user(anyhow!("ablation needs at least one seed")));
    }
    if k == 0 {
        return Err(user(anyhow!("report cutoff must be at least 1")));
    }
    let tc = cfg.train_config().map_err(user)?;
    let pipe = prepare(cfg)?;
    let started = Instant::now();
    let report = run_ablation(&pipe.sub, &pipe.comp, &pipe.split, &tc, seeds, k).map_err(user)?;
    write_json(&cfg.report_out, &report)?;
    write_file(&sibling(&cfg.report_out, ".config"), cfg.to_file_string())?;
    print!("{}", report.table());
    println!(
        "ablation over seeds {seeds:?} in {:.1}s → {}",
        started.elapsed().as_secs_f64(),
        cfg.report_out.display(),
    );
    Ok(())
}
