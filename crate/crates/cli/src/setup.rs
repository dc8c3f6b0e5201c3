//! Turns the merged configuration into transports, detectors and agents.

use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use qrefine_core::agents::{HybridDetector, LlmDetector, LlmGenerator, Templates};
use qrefine_core::config::{DetectorMode, RunConfig, ENV_PREFIX};
use qrefine_core::detectors::{load_kb, Detector, DetectorKind, DetectorSet, KnowledgeBase};
use qrefine_core::llm::{
    Clock, FixtureTransport, Gateway, HttpTransport, ManualClock, RecordingTransport, RetryPolicy, Scenario,
    ScriptedTransport, SystemClock, Transport,
};

use crate::args::{Global, TransportSpec};

/// Environment variables holding the API key, in lookup order.
pub const KEY_VARS: [&str; 2] = ["QREFINE_API_KEY", "OPENAI_API_KEY"];

/// File, then environment, then `--set`, then the dedicated flags.
pub fn load_config(g: &Global) -> Result<RunConfig> {
    let env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    let mut cfg = RunConfig::load(g.config.as_deref(), &env, &g.set)?;
    if let Some(kb) = &g.kb {
        cfg.kb = Some(kb.clone());
    }
    if let Some(seed) = g.seed {
        cfg.llm.jitter_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_knowledge_base(cfg: &RunConfig) -> Result<Option<Arc<KnowledgeBase>>> {
    match &cfg.kb {
        Some(p) => Ok(Some(Arc::new(load_kb(p)?))),
        None => {
            log::info!("no knowledge base configured; factual checks will be indeterminate");
            Ok(None)
        }
    }
}

pub fn templates(cfg: &RunConfig) -> Result<Arc<Templates>> {
    Ok(Arc::new(match &cfg.templates {
        Some(dir) => Templates::with_overrides(dir)?,
        None => Templates::default(),
    }))
}

fn api_key() -> Option<String> {
    KEY_VARS
        .iter()
        .filter_map(|k| std::env::var(k).ok())
        .find(|v| !v.trim().is_empty())
}

pub fn gateway(cfg: &RunConfig, spec: &TransportSpec, record: Option<&std::path::Path>) -> Result<Arc<Gateway>> {
    let (transport, clock): (Arc<dyn Transport>, Arc<dyn Clock>) = match spec {
        TransportSpec::Live => {
            let key = api_key();
            let http = HttpTransport::new(
                cfg.llm.base_url.as_deref(),
                key.as_deref(),
                Duration::from_secs(cfg.llm.timeout_secs),
            )
            .with_context(|| format!("live transport needs an API key in {}", KEY_VARS.join(" or ")))?;
            (Arc::new(http), Arc::new(SystemClock))
        }
        // offline transports never need to wait
        TransportSpec::Fixtures(dir) => {
            let f = FixtureTransport::load_dir(dir).with_context(|| format!("loading fixtures from {}", dir.display()))?;
            if f.is_empty() {
                bail!("no fixtures found in {}", dir.display());
            }
            (Arc::new(f), Arc::new(ManualClock::default()))
        }
        TransportSpec::Scripted(file) => {
            let s = Scenario::load(file).with_context(|| format!("loading scenario {}", file.display()))?;
            (Arc::new(ScriptedTransport::new(s)), Arc::new(ManualClock::default()))
        }
    };
    let transport: Arc<dyn Transport> = match record {
        Some(dir) => Arc::new(
            RecordingTransport::new(transport, dir).with_context(|| format!("creating {}", dir.display()))?,
        ),
        None => transport,
    };
    let gw = Gateway::new(transport, cfg.cost_model())
        .with_retry(RetryPolicy {
            max_retries: cfg.llm.max_retries,
            ..RetryPolicy::default()
        })
        .with_rate_limit(cfg.llm.rate_limit_rpm)
        .with_clock(clock)
        .with_jitter_seed(cfg.llm.jitter_seed);
    Ok(Arc::new(gw))
}

pub fn generator(cfg: &RunConfig, gw: Arc<Gateway>, templates: Arc<Templates>) -> LlmGenerator {
    LlmGenerator::new(gw, cfg.llm.model_generator.clone(), templates)
}

/// Detectors for the configured mode. Without a gateway only the rule-based
/// set is possible.
pub fn detectors(
    cfg: &RunConfig,
    kb: Option<Arc<KnowledgeBase>>,
    llm: Option<(Arc<Gateway>, Arc<Templates>)>,
) -> DetectorSet {
    let opts = cfg.detector_options();
    let rules = DetectorSet::rule_based(kb, &opts);
    let Some((gw, templates)) = llm else {
        return rules;
    };
    let model = &cfg.llm.model_detector;
    let llm_for = |k: DetectorKind| -> Arc<dyn Detector> {
        Arc::new(LlmDetector::new(k, gw.clone(), model.clone(), templates.clone()))
    };
    match cfg.detectors.mode {
        DetectorMode::Rules => rules,
        DetectorMode::Llm => DetectorSet::new(DetectorKind::ALL.iter().map(|&k| llm_for(k)).collect()),
        DetectorMode::Hybrid => DetectorSet::new(
            DetectorKind::ALL
                .iter()
                .map(|&k| {
                    let rule = rules.get(k).expect("rule set is complete").clone();
                    Arc::new(HybridDetector::new(rule, llm_for(k))) as Arc<dyn Detector>
                })
                .collect(),
        ),
    }
}
