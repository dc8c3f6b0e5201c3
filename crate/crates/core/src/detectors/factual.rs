use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Mcq;

use super::text::{extract_claims, jaccard, normalize};
use super::{
    DetectError, Detection, Detector, DetectorKind, DetectorReport, Finding, Indicator,
    ReportDetail, ReportSource,
};

const KIND: DetectorKind = DetectorKind::Factual;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base {path} unavailable: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("knowledge base {path} is not valid UTF-8 (byte offset {offset})")]
    Encoding { path: PathBuf, offset: usize },
}

/// Reference facts, stored normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    facts: BTreeSet<String>,
    source: Option<PathBuf>,
}

impl KnowledgeBase {
    pub fn from_facts<I, S>(facts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut kb = KnowledgeBase::default();
        for f in facts {
            kb.insert(f.as_ref());
        }
        kb
    }

    /// Parses the line format: one fact per line, blank lines and lines
    /// starting with `#` ignored.
    pub fn parse(text: &str) -> Self {
        KnowledgeBase::from_facts(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    /// Inserts a fact after normalization. Returns false for duplicates and
    /// facts that normalize to nothing.
    pub fn insert(&mut self, fact: &str) -> bool {
        let n = normalize(fact);
        !n.is_empty() && self.facts.insert(n)
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.facts.contains(normalized)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> impl Iterator<Item = &str> {
        self.facts.iter().map(String::as_str)
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// Exact normalized match first, then the most similar fact by word-set
    /// Jaccard. Returns `(supported, best match, similarity)`.
    pub fn support<'a>(&'a self, claim: &str, threshold: f64) -> (bool, Option<&'a str>, f64) {
        if let Some(f) = self.facts.get(claim) {
            return (true, Some(f.as_str()), 1.0);
        }
        let mut best: Option<(&str, f64)> = None;
        for f in &self.facts {
            let s = jaccard(claim, f);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((f, s));
            }
        }
        match best {
            Some((f, s)) => (s >= threshold, Some(f), s),
            None => (false, None, 0.0),
        }
    }
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| KbError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| KbError::Encoding {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    let mut kb = KnowledgeBase::parse(&text);
    kb.source = Some(path.to_path_buf());
    Ok(kb)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactualReport {
    pub claims: Vec<String>,
    /// Claims with no support in the knowledge base; a subset of `claims`.
    pub missing: Vec<String>,
}

/// Unsupported factual claims (h3): flagged if any claim extracted from the
/// explanation has no match in the knowledge base.
pub fn check_facts(mcq: &Mcq, kb: &KnowledgeBase, jaccard_threshold: f64) -> DetectorReport {
    let claims = extract_claims(&mcq.explanation);
    let mut missing = Vec::new();
    let mut evidence = Vec::new();
    for c in &claims {
        let (ok, best, sim) = kb.support(c, jaccard_threshold);
        if !ok {
            missing.push(c.clone());
            evidence.push(Finding::UnsupportedClaim {
                claim: c.clone(),
                best_match: best.map(str::to_string),
                similarity: sim,
            });
        }
    }
    let detail = ReportDetail::Factual(FactualReport {
        claims,
        missing: missing.clone(),
    });
    if missing.is_empty() {
        return DetectorReport::new(KIND, Indicator::Clear, evidence, String::new(), ReportSource::Rule)
            .expect("clear report")
            .with_detail(detail);
    }
    let quoted: Vec<String> = missing.iter().map(|c| format!("\"{c}\"")).collect();
    let feedback = format!(
        "These statements in the explanation are not supported by the reference facts: {}. \
         Remove them or replace them with correct, verifiable statements.",
        quoted.join("; ")
    );
    DetectorReport::new(KIND, Indicator::Flagged, evidence, feedback, ReportSource::Rule)
        .expect("flagged report has evidence and feedback")
        .with_detail(detail)
        .suggest(Some(DetectorKind::Consistency))
}

pub struct FactualDetector {
    kb: Option<Arc<KnowledgeBase>>,
    threshold: f64,
}

impl FactualDetector {
    pub fn new(kb: Option<Arc<KnowledgeBase>>, jaccard_threshold: f64) -> Self {
        FactualDetector {
            kb,
            threshold: jaccard_threshold,
        }
    }
}

impl Detector for FactualDetector {
    fn kind(&self) -> DetectorKind {
        KIND
    }

    fn detect(&self, mcq: &Mcq) -> Result<Detection, DetectError> {
        let report = match &self.kb {
            Some(kb) => check_facts(mcq, kb, self.threshold),
            None => DetectorReport::indeterminate(KIND, "no knowledge base configured", ReportSource::Rule),
        };
        Ok(report.into())
    }
}
