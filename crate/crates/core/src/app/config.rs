//! Application configuration: one TOML file, overridable per field through
//! `HYPERLOCAL_*` environment variables.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityParams;
use crate::error::{Error, Result};
use crate::gazetteer::GazetteerOptions;
use crate::geocoder::GeocoderConfig;

pub const ENV_PREFIX: &str = "HYPERLOCAL_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Location table files, merged in order.
    pub gazetteer: Vec<PathBuf>,
    /// Extra records known only to the offline geocoder.
    pub geocoder_gazetteer: Vec<PathBuf>,
    pub cities: PathBuf,
    pub affinity: PathBuf,
    pub corpus: PathBuf,
    pub dma: PathBuf,
    pub publishers: PathBuf,
    pub stamps: PathBuf,
    pub requests: PathBuf,
    pub truth: PathBuf,
    pub impressions: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        Paths {
            gazetteer: vec![data.join("gazetteer.tsv")],
            geocoder_gazetteer: vec![data.join("landmarks.tsv")],
            cities: data.join("popular_cities.csv"),
            affinity: PathBuf::from("affinity.jsonl"),
            corpus: PathBuf::from("corpus.jsonl"),
            dma: PathBuf::from("dma.json"),
            publishers: PathBuf::from("publishers.json"),
            stamps: PathBuf::from("stamps.jsonl"),
            requests: PathBuf::from("requests.jsonl"),
            truth: PathBuf::from("truth.jsonl"),
            impressions: PathBuf::from("impressions.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub trim_words: usize,
    pub geohash_len: usize,
    pub prefix_len: usize,
    pub tau_geohash3: f64,
    pub tau_admin: f64,
    pub min_articles: usize,
    pub time_window_days: i64,
    pub min_k: usize,
    pub feed_count: usize,
    pub max_cover_cells: usize,
    /// Short aliases (normally rejected) accepted by the gazetteer loader.
    pub short_aliases: BTreeSet<String>,
    /// Remote geocoder endpoint; empty selects the offline geocoder.
    pub geocoder_endpoint: String,
    pub geocoder_api_key: String,
    pub qps_limit: u32,
    pub geocoder_timeout_secs: f64,
    pub geocoder_cache_capacity: usize,
    pub paths: Paths,
}

impl Default for AppConfig {
    fn default() -> Self {
        let geo = GeocoderConfig::default();
        let aff = AffinityParams::default();
        AppConfig {
            trim_words: 10,
            geohash_len: 4,
            prefix_len: 2,
            tau_geohash3: aff.tau_geohash3,
            tau_admin: aff.tau_admin,
            min_articles: aff.min_articles,
            time_window_days: aff.time_window_days,
            min_k: 3,
            feed_count: 10,
            max_cover_cells: 4096,
            short_aliases: BTreeSet::new(),
            geocoder_endpoint: String::new(),
            geocoder_api_key: String::new(),
            qps_limit: geo.qps_limit,
            geocoder_timeout_secs: geo.timeout_secs,
            geocoder_cache_capacity: geo.cache_capacity,
            paths: Paths::default(),
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(format!("{ENV_PREFIX}{name}")).ok()
}

fn parse_env<T: std::str::FromStr>(name: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = env_var(name) {
        *slot = v
            .trim()
            .parse()
            .map_err(|e| Error::validation(format!("{ENV_PREFIX}{name}={v:?}: {e}")))?;
    }
    Ok(())
}

fn path_list(v: &str) -> Vec<PathBuf> {
    std::env::split_paths(v).filter(|p| !p.as_os_str().is_empty()).collect()
}

impl AppConfig {
    /// Reads `path` (or starts from defaults), applies environment overrides
    /// and validates. Relative paths in the file resolve against its
    /// directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut cfg: AppConfig = toml::from_str(&text).map_err(|e| Error::FileFormat {
                    path: p.to_owned(),
                    message: e.to_string(),
                })?;
                if let Some(dir) = p.parent() {
                    cfg.paths.resolve_against(dir);
                }
                cfg
            }
            None => AppConfig::default(),
        };
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        parse_env("TRIM_WORDS", &mut self.trim_words)?;
        parse_env("GEOHASH_LEN", &mut self.geohash_len)?;
        parse_env("PREFIX_LEN", &mut self.prefix_len)?;
        parse_env("TAU_GEOHASH3", &mut self.tau_geohash3)?;
        parse_env("TAU_ADMIN", &mut self.tau_admin)?;
        parse_env("MIN_ARTICLES", &mut self.min_articles)?;
        parse_env("TIME_WINDOW_DAYS", &mut self.time_window_days)?;
        parse_env("MIN_K", &mut self.min_k)?;
        parse_env("FEED_COUNT", &mut self.feed_count)?;
        parse_env("MAX_COVER_CELLS", &mut self.max_cover_cells)?;
        parse_env("GEOCODER_ENDPOINT", &mut self.geocoder_endpoint)?;
        parse_env("GEOCODER_API_KEY", &mut self.geocoder_api_key)?;
        parse_env("QPS_LIMIT", &mut self.qps_limit)?;
        parse_env("GEOCODER_TIMEOUT_SECS", &mut self.geocoder_timeout_secs)?;
        parse_env("GEOCODER_CACHE_CAPACITY", &mut self.geocoder_cache_capacity)?;
        if let Some(v) = env_var("SHORT_ALIASES") {
            self.short_aliases = v.split(',').map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect();
        }
        let p = &mut self.paths;
        if let Some(v) = env_var("GAZETTEER") {
            p.gazetteer = path_list(&v);
        }
        if let Some(v) = env_var("GEOCODER_GAZETTEER") {
            p.geocoder_gazetteer = path_list(&v);
        }
        parse_env("CITIES", &mut p.cities)?;
        parse_env("AFFINITY", &mut p.affinity)?;
        parse_env("CORPUS", &mut p.corpus)?;
        parse_env("DMA", &mut p.dma)?;
        parse_env("PUBLISHERS", &mut p.publishers)?;
        parse_env("STAMPS", &mut p.stamps)?;
        parse_env("REQUESTS", &mut p.requests)?;
        parse_env("TRUTH", &mut p.truth)?;
        parse_env("IMPRESSIONS", &mut p.impressions)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trim_words", self.trim_words),
            ("geohash_len", self.geohash_len),
            ("prefix_len", self.prefix_len),
            ("min_articles", self.min_articles),
            ("min_k", self.min_k),
            ("feed_count", self.feed_count),
            ("max_cover_cells", self.max_cover_cells),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        if self.geohash_len != crate::stamper::STAMP_LEN {
            return Err(Error::validation(format!(
                "geohash_len {} is not supported; stamps use length {}",
                self.geohash_len,
                crate::stamper::STAMP_LEN
            )));
        }
        if self.prefix_len > self.geohash_len {
            return Err(Error::validation("prefix_len must not exceed geohash_len"));
        }
        self.affinity_params().validate()?;
        self.geocoder_config().validate()?;
        if self.paths.gazetteer.is_empty() {
            return Err(Error::validation("at least one gazetteer file is required"));
        }
        Ok(())
    }

    pub fn affinity_params(&self) -> AffinityParams {
        AffinityParams {
            tau_geohash3: self.tau_geohash3,
            tau_admin: self.tau_admin,
            min_articles: self.min_articles,
            time_window_days: self.time_window_days,
        }
    }

    pub fn geocoder_config(&self) -> GeocoderConfig {
        GeocoderConfig {
            endpoint: self.geocoder_endpoint.clone(),
            api_key: (!self.geocoder_api_key.is_empty()).then(|| self.geocoder_api_key.clone()),
            qps_limit: self.qps_limit,
            timeout_secs: self.geocoder_timeout_secs,
            cache_capacity: self.geocoder_cache_capacity,
        }
    }

    pub fn gazetteer_options(&self) -> GazetteerOptions {
        GazetteerOptions {
            short_alias_whitelist: self.short_aliases.clone(),
        }
    }

    /// The effective configuration as TOML, with the API key masked.
    pub fn summary(&self) -> String {
        let mut shown = self.clone();
        if !shown.geocoder_api_key.is_empty() {
            shown.geocoder_api_key = "***".into();
        }
        toml::to_string(&shown).expect("config serializes")
    }
}

impl Paths {
    fn resolve_against(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        self.gazetteer.iter_mut().for_each(fix);
        self.geocoder_gazetteer.iter_mut().for_each(fix);
        for p in [
            &mut self.cities,
            &mut self.affinity,
            &mut self.corpus,
            &mut self.dma,
            &mut self.publishers,
            &mut self.stamps,
            &mut self.requests,
            &mut self.truth,
            &mut self.impressions,
        ] {
            fix(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = AppConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!((cfg.trim_words, cfg.geohash_len, cfg.prefix_len, cfg.min_k), (10, 4, 2, 3));
        assert!(cfg.summary().contains("tau_geohash3 = 0.2"));
    }

    #[test]
    fn file_values_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("app.toml");
        std::fs::write(&path, "min_k = 5\n[paths]\ncorpus = \"in/corpus.jsonl\"\n").unwrap();
        let cfg = AppConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.min_k, 5);
        assert_eq!(cfg.paths.corpus, dir.path().join("in/corpus.jsonl"));
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg = AppConfig {
            prefix_len: 5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AppConfig {
            tau_admin: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "no_such_field = 1\n").unwrap();
        assert!(AppConfig::load(Some(&path)).is_err());
    }

    #[test]
    fn api_key_masked() {
        let cfg = AppConfig {
            geocoder_api_key: "secret".into(),
            ..Default::default()
        };
        assert!(!cfg.summary().contains("secret"));
    }
}
