//! Article model, line-delimited corpus loading and geocoder query building.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRIM_WORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub url: String,
    pub publisher: String,
    pub published_at: DateTime<Utc>,
}

impl Article {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("article id is empty"));
        }
        if self.publisher.trim().is_empty() {
            return Err(Error::validation(format!(
                "article {} has no publisher",
                self.id
            )));
        }
        Ok(())
    }

    /// Title, snippet and body joined for full-text lookups. The URL is left
    /// out so that publisher names embedded in it cannot leak in as places.
    pub fn text(&self) -> String {
        [&self.title, &self.snippet, &self.body]
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// First `n` and last `n` whitespace-separated words of `field`, or the whole
/// field when it has at most `2n` words.
pub fn trim_field(field: &str, n: usize) -> String {
    let words: Vec<&str> = field.split_whitespace().collect();
    if words.len() <= 2 * n {
        return words.join(" ");
    }
    words[..n]
        .iter()
        .chain(&words[words.len() - n..])
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn build_geocode_query(article: &Article) -> String {
    build_geocode_query_with(article, DEFAULT_TRIM_WORDS)
}

/// Geocoder query: trimmed title, snippet and body joined by single spaces.
pub fn build_geocode_query_with(article: &Article, trim_words: usize) -> String {
    [&article.title, &article.snippet, &article.body]
        .iter()
        .map(|f| trim_field(f, trim_words))
        .filter(|f| !f.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub skipped: Vec<SkippedLine>,
}

/// Reads one JSON object per line. Blank lines are ignored, lines that fail
/// to parse or validate are skipped and reported; more than half invalid is
/// treated as a format error for the whole file.
pub fn load_jsonl<T, F>(path: &Path, mut validate: F) -> Result<Loaded<T>>
where
    T: DeserializeOwned,
    F: FnMut(&T) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut total = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = serde_json::from_str::<T>(&line)
            .map_err(|e| e.to_string())
            .and_then(|rec| validate(&rec).map(|_| rec).map_err(|e| e.to_string()));
        match parsed {
            Ok(rec) => records.push(rec),
            Err(reason) => {
                log::warn!("{}:{}: skipping line: {reason}", path.display(), i + 1);
                skipped.push(SkippedLine { line: i + 1, reason });
            }
        }
    }
    if skipped.len() * 2 > total {
        return Err(Error::CorpusFormat {
            path: path.to_owned(),
            invalid: skipped.len(),
            total,
        });
    }
    Ok(Loaded { records, skipped })
}

pub fn load_corpus(path: &Path) -> Result<Loaded<Article>> {
    let mut seen = HashSet::new();
    load_jsonl(path, |a: &Article| {
        a.validate()?;
        if !seen.insert(a.id.clone()) {
            return Err(Error::validation(format!("duplicate article id {}", a.id)));
        }
        Ok(())
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in records {
        let line = serde_json::to_string(&rec).expect("serializable record");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(prefix: &str, n: usize) -> String {
        (1..=n)
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn article(title: &str, snippet: &str, body: &str) -> Article {
        Article {
            id: "a1".into(),
            title: title.into(),
            snippet: snippet.into(),
            body: body.into(),
            url: "https://news.example/komo-tv-seattle/story-a1".into(),
            publisher: "komo".into(),
            published_at: "2023-02-01T12:00:00Z".parse().unwrap(),
        }
    }

    #[test]
    fn short_fields_pass_through() {
        let a = article(&words("t", 6), "", &words("b", 5));
        let q = build_geocode_query(&a);
        assert_eq!(q, format!("{} {}", words("t", 6), words("b", 5)));
        assert_eq!(q.split_whitespace().count(), 11);
    }

    #[test]
    fn long_body_keeps_both_ends() {
        let a = article("", "", &words("w", 25));
        let expected = format!(
            "{} {}",
            words("w", 10),
            (16..=25).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
        );
        assert_eq!(build_geocode_query(&a), expected);
    }

    #[test]
    fn url_never_in_query() {
        let a = article("Fire downtown", "crews respond", "More at the scene");
        assert!(!build_geocode_query(&a).contains(&a.url));
        assert!(!build_geocode_query(&a).contains("komo-tv-seattle"));
    }

    #[test]
    fn trim_collapses_whitespace() {
        assert_eq!(trim_field("  a \n b\t c  ", 10), "a b c");
        assert_eq!(trim_field("", 10), "");
    }

    #[test]
    fn article_validation() {
        let mut a = article("t", "", "");
        assert!(a.validate().is_ok());
        a.publisher = " ".into();
        assert!(a.validate().is_err());
        a.publisher = "p".into();
        a.id.clear();
        assert!(a.validate().is_err());
    }
}
