//! The command implementations behind the CLI. Each is a pure function of
//! its configuration and input files apart from the files it writes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::affinity::{self, AffinityMap};
use crate::app::config::AppConfig;
use crate::app::pipeline::{load_publishers, Engine, StampRun};
use crate::app::replay::{self, ReplayReport, ReplaySetup};
use crate::app::service::ServiceState;
use crate::app::synth::{self, SynthOutput, SynthParams};
use crate::corpus::{self, Article};
use crate::error::{Error, Result};
use crate::gazetteer::{self, Gazetteer, Level};
use crate::metrics::{self, dma_stamps, DmaTable, Evaluation};
use crate::serving::load_cities;
use crate::stamper::{RuleHistogram, StampResult, STAMP_LEN};

pub fn load_articles(path: &Path) -> Result<Vec<Article>> {
    let loaded = corpus::load_corpus(path)?;
    if !loaded.skipped.is_empty() {
        log::warn!("{}: skipped {} invalid lines", path.display(), loaded.skipped.len());
    }
    Ok(loaded.records)
}

pub fn load_stamps(path: &Path) -> Result<Vec<StampResult>> {
    let loaded = corpus::load_jsonl(path, |s: &StampResult| {
        match s.geohashes.iter().find(|g| g.len() != STAMP_LEN) {
            Some(g) => Err(Error::validation(format!("{}: geohash {g} is not length {STAMP_LEN}", s.article_id))),
            None => Ok(()),
        }
    })?;
    Ok(loaded.records)
}

/// Stamps every article of the corpus with the configured affinity map and
/// writes one result per line to `out`.
pub fn cmd_stamp(config: &AppConfig, corpus_path: &Path, out: &Path) -> Result<StampRun> {
    let affinity = affinity::load_affinity(&config.paths.affinity)?;
    let engine = Engine::from_config(config)?.with_affinity(affinity);
    let articles = load_articles(corpus_path)?;
    let run = engine.stamp_corpus(&articles)?;
    corpus::write_jsonl(out, &run.stamps)?;
    Ok(run)
}

/// Builds affinity entries for the publishers flagged strongly local.
pub fn cmd_affinity(config: &AppConfig, corpus_path: &Path, publishers_path: &Path, out: &Path) -> Result<AffinityMap> {
    let engine = Engine::from_config(config)?;
    let articles = load_articles(corpus_path)?;
    let local: BTreeSet<String> = load_publishers(publishers_path)?
        .into_iter()
        .filter(|p| p.strongly_local)
        .map(|p| p.id)
        .collect();
    let map = engine.build_affinity_map(&articles, &local)?;
    affinity::save_affinity(out, &map)?;
    Ok(map)
}

/// Paired comparison of the ensemble stamps against DMA stamps over the
/// impressions file.
pub fn cmd_eval(config: &AppConfig, stamps_path: &Path, impressions_path: &Path, dma_path: &Path, corpus_path: &Path) -> Result<Evaluation> {
    let gaz = crate::app::pipeline::load_gazetteer(config)?;
    let stamps = load_stamps(stamps_path)?;
    let articles = load_articles(corpus_path)?;
    let dma = DmaTable::load(dma_path)?;
    let records = metrics::load_impressions(impressions_path)?;
    if !records.skipped.is_empty() {
        log::warn!("{}: skipped {} invalid lines", impressions_path.display(), records.skipped.len());
    }
    let by_id = |s: Vec<StampResult>| -> BTreeMap<String, StampResult> { s.into_iter().map(|s| (s.article_id.clone(), s)).collect() };
    let baseline = dma_stamps(&stamps, &articles, &dma);
    let treatment = metrics::join_impressions(&records.records, &by_id(stamps))?;
    let baseline = metrics::join_impressions(&records.records, &by_id(baseline))?;
    metrics::evaluate(&treatment, &baseline, &gaz)
}

pub struct ReplayInputs {
    pub stamps: PathBuf,
    pub corpus: PathBuf,
    pub dma: PathBuf,
    pub requests: PathBuf,
    pub truth: PathBuf,
}

impl ReplayInputs {
    pub fn from_config(config: &AppConfig) -> Self {
        let p = &config.paths;
        ReplayInputs {
            stamps: p.stamps.clone(),
            corpus: p.corpus.clone(),
            dma: p.dma.clone(),
            requests: p.requests.clone(),
            truth: p.truth.clone(),
        }
    }
}

/// Serves the same requests from an ensemble-stamped index and a
/// DMA-stamped index and scores what each served against ground truth.
pub fn cmd_replay(config: &AppConfig, inputs: &ReplayInputs) -> Result<ReplayReport> {
    let gaz = crate::app::pipeline::load_gazetteer(config)?;
    let stamps = load_stamps(&inputs.stamps)?;
    let articles = load_articles(&inputs.corpus)?;
    let dma = DmaTable::load(&inputs.dma)?;
    let requests = replay::load_requests(&inputs.requests)?.records;
    let truth = replay::load_truth(&inputs.truth)?;
    let cities = load_cities(&config.paths.cities)?;
    let baseline = dma_stamps(&stamps, &articles, &dma);
    let setup = ReplaySetup {
        articles: &articles,
        requests: &requests,
        cities: &cities,
        truth: &truth,
        gazetteer: &gaz,
        min_k: config.min_k,
    };
    setup.compare(&stamps, &baseline)
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub articles: usize,
    pub impressions: usize,
    pub requests: usize,
    pub affinity_entries: usize,
    pub histogram: Option<RuleHistogram>,
}

/// Generates the benchmark into `out_dir`; with `pipeline` also builds the
/// affinity map and stamps the corpus there.
pub fn cmd_synth(config: &AppConfig, seed: u64, out_dir: &Path, pipeline: bool) -> Result<(SynthOutput, SynthSummary)> {
    let lt = crate::app::pipeline::load_gazetteer(config)?;
    let mut landmarks = Vec::new();
    for p in &config.paths.geocoder_gazetteer {
        landmarks.extend(gazetteer::read_records(p)?);
    }
    let mut params = SynthParams::new(seed);
    params.feed_count = config.feed_count;
    params.window_days = config.time_window_days;
    let out = synth::generate(&params, &lt, &landmarks)?;
    out.write(out_dir)?;
    let mut summary = SynthSummary {
        articles: out.articles.len(),
        impressions: out.impressions.len(),
        requests: out.requests.len(),
        affinity_entries: 0,
        histogram: None,
    };
    if pipeline {
        let mut cfg = AppConfig::load(Some(&out_dir.join(SynthOutput::CONFIG_FILE)))?;
        cfg.paths.gazetteer = config.paths.gazetteer.clone();
        cfg.paths.geocoder_gazetteer = config.paths.geocoder_gazetteer.clone();
        cfg.paths.cities = config.paths.cities.clone();
        let map = cmd_affinity(&cfg, &cfg.paths.corpus, &cfg.paths.publishers, &cfg.paths.affinity)?;
        summary.affinity_entries = map.len();
        let run = cmd_stamp(&cfg, &cfg.paths.corpus, &cfg.paths.stamps)?;
        summary.histogram = Some(run.histogram);
    }
    Ok((out, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct GazetteerReport {
    pub records: usize,
    pub per_level: BTreeMap<String, usize>,
    pub aliases: usize,
    pub shared_aliases: Vec<String>,
}

/// Loads and validates gazetteer files, reporting their contents.
pub fn cmd_gazetteer_validate(config: &AppConfig, files: &[PathBuf]) -> Result<GazetteerReport> {
    let paths: Vec<&Path> = if files.is_empty() {
        config.paths.gazetteer.iter().map(|p| p.as_path()).collect()
    } else {
        files.iter().map(|p| p.as_path()).collect()
    };
    let gaz = Gazetteer::load_many(&paths, &config.gazetteer_options())?;
    let mut per_level = BTreeMap::new();
    for level in [Level::Country, Level::State, Level::CountyOrDistrict, Level::City] {
        per_level.insert(level.to_string(), gaz.records().iter().filter(|r| r.level == level).count());
    }
    let index = gaz.alias_index();
    Ok(GazetteerReport {
        records: gaz.len(),
        per_level,
        aliases: index.len(),
        shared_aliases: index.into_iter().filter(|(_, ids)| ids.len() > 1).map(|(a, _)| a).collect(),
    })
}

/// Service state over the configured corpus and affinity map. Missing
/// corpus or affinity files start the service empty.
pub fn service_state(config: &AppConfig) -> Result<Arc<ServiceState>> {
    let affinity = if config.paths.affinity.exists() {
        affinity::load_affinity(&config.paths.affinity)?
    } else {
        log::warn!("{} not found; serving without publisher affinity", config.paths.affinity.display());
        AffinityMap::new()
    };
    let engine = Engine::from_config(config)?.with_affinity(affinity);
    let articles = if config.paths.corpus.exists() {
        load_articles(&config.paths.corpus)?
    } else {
        Vec::new()
    };
    let cities = load_cities(&config.paths.cities)?;
    Ok(Arc::new(ServiceState::new(engine, cities, articles)?))
}
