use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use essay_scorer::corpus::{EssaySetMeta, EssayType};
use essay_scorer::llm::{BackendError, BackendReply, FnBackend, LlmClient, RetryPolicy};
use serde::Deserialize;

#[derive(Deserialize)]
pub struct Item {
    pub id: String,
    pub kind: String,
    pub set: String,
    pub raw: String,
    pub expected: Option<BTreeMap<String, f64>>,
    pub fallback: Option<String>,
    #[serde(default)]
    pub clamped: bool,
}

fn meta(id: &str, traits: &[(&str, i64, i64)], step: f64) -> EssaySetMeta {
    EssaySetMeta {
        essay_set_id: id.into(),
        prompt_text: String::new(),
        score_min: traits[0].1,
        score_max: traits[0].2,
        score_step: step,
        trait_names: traits.iter().map(|t| t.0.to_string()).collect(),
        trait_ranges: traits
            .iter()
            .map(|t| (t.0.to_string(), (t.1, t.2)))
            .collect(),
        essay_type: EssayType::Unknown,
        score_column: None,
    }
}

pub fn metas() -> HashMap<&'static str, EssaySetMeta> {
    HashMap::from([
        (
            "overall_1_6",
            meta("overall_1_6", &[("Overall", 1, 6)], 1.0),
        ),
        (
            "overall_0_3",
            meta("overall_0_3", &[("Overall", 0, 3)], 1.0),
        ),
        ("ellipse", meta("ellipse", &[("Overall", 1, 5)], 0.5)),
        (
            "asap2",
            meta(
                "asap2",
                &[
                    ("Writing Applications", 1, 6),
                    ("Language Conventions", 1, 4),
                ],
                1.0,
            ),
        ),
    ])
}

pub fn corpus() -> Vec<Item> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/parse_corpus.jsonl");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const INPUT_MARKER: &str = "Now work on the following input:\nInput:\n";

/// Raw output embedded in a parsing prompt.
fn raw_of(prompt: &str) -> &str {
    let start = prompt.rfind(INPUT_MARKER).unwrap() + INPUT_MARKER.len();
    prompt[start..].strip_suffix("\nOutput:").unwrap()
}

/// Fallback model that answers each parsing prompt with the corpus reply for
/// the embedded raw output.
pub fn fallback_client(items: &[Item]) -> (LlmClient, Arc<AtomicUsize>) {
    let replies: HashMap<String, String> = items
        .iter()
        .filter_map(|i| Some((i.raw.clone(), i.fallback.clone()?)))
        .collect();
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let backend = FnBackend::new(move |req| {
        counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        replies
            .get(raw_of(&req.prompt))
            .map(|r| BackendReply::text(r.clone()))
            .ok_or_else(|| BackendError::Unmatched(req.prompt.chars().take(80).collect()))
    });
    (
        LlmClient::new(Arc::new(backend)).with_retry(RetryPolicy::no_delay(0)),
        calls,
    )
}
