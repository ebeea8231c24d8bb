//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::parse::{corpus, fallback_client, metas};
use common::{fixture, oracle_qwk, pairs, tree};
use essay_scorer::corpus::{
    load_asap, select_roles, split_folds, AsapColumns, EssaySetMeta, EssayType, MetaCatalog, Role,
};
use essay_scorer::evalkit::qwk;
use essay_scorer::promptkit::{
    build_parsing_prompt, build_scoring_prompt, FeatureBlock, FeatureSelection, PromptTemplate,
    LLM_OUTPUT_SLOT, PARSING_EXAMPLES,
};
use essay_scorer::runner::{BackendSpec, DatasetKind, Overrides, RunConfig, Runner, SubsamplePer};
use essay_scorer::scoreparse::{parse, parse_deterministic, ParseOptions, RangePolicy};
use essay_scorer::textstats::extract_features;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn read(rel: &str) -> String {
    fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests")
            .join(rel),
    )
    .unwrap()
}

fn within(name: &str, got: u64, want: u64, tol: u64) {
    assert!(
        got.abs_diff(want) <= tol,
        "{name} = {got}, want {want} ± {tol}"
    );
}

fn time_limit(start: Instant, limit: Duration) -> String {
    let elapsed = start.elapsed();
    assert!(elapsed < limit, "took {elapsed:?}, limit {limit:?}");
    format!("{:.2}s", elapsed.as_secs_f64())
}

fn sample_essay() -> String {
    read("fixtures/sample_essay.txt")
        .trim_end_matches('\n')
        .to_string()
}

fn criterion_1() -> String {
    let start = Instant::now();
    let f = extract_features(&sample_essay());
    let took = time_limit(start, Duration::from_secs(1));
    within("word_count", f.word_count, 279, 3);
    within("sentence_count", f.sentence_count, 14, 1);
    within("unique_word_count", f.unique_word_count, 113, 6);
    within("stopword_count", f.stopword_count, 71, 7);
    within("noun_count", f.noun_count, 50, 8);
    within("lemma_count", f.lemma_count, 133, 20);
    within(
        "dale_chall_difficult_count",
        f.dale_chall_difficult_count,
        80,
        8,
    );
    within("total_char_count", f.total_char_count, 1229, 40);
    format!(
        "words {} sentences {} unique {} stop {} nouns {} lemmas {} dale-chall {} chars {} in {took}",
        f.word_count,
        f.sentence_count,
        f.unique_word_count,
        f.stopword_count,
        f.noun_count,
        f.lemma_count,
        f.dale_chall_difficult_count,
        f.total_char_count
    )
}

fn criterion_2() -> String {
    let set1 = EssaySetMeta {
        essay_set_id: "1".into(),
        prompt_text: read("fixtures/asap_set1_prompt.txt").trim_end().to_string(),
        score_min: 1,
        score_max: 6,
        score_step: 1.0,
        trait_names: vec!["Overall".into()],
        trait_ranges: BTreeMap::new(),
        essay_type: EssayType::Argumentative,
        score_column: None,
    };
    let template = PromptTemplate::default();
    let none = build_scoring_prompt(&template.scoring_spec(&set1, &sample_essay(), None).unwrap())
        .unwrap();
    assert_eq!(none, read("golden/1_none.txt"), "no-feature prompt differs");
    let block = FeatureBlock::from_entries([
        ("total number of unique words in the essay", 113),
        ("total number of words in the essay.", 279),
        ("total number of sentences present", 14),
        ("total number of characters", 279),
        ("total number of lemma", 133),
        ("total number of nouns", 50),
        ("total number of stopwords", 71),
        (
            "total number of words that are not in the Dale-Chall word list of 3000 words recognized by 80% of fifth graders",
            80,
        ),
        ("total number of characters", 1229),
    ]);
    let top10 = build_scoring_prompt(
        &template
            .scoring_spec(&set1, &sample_essay(), Some(block))
            .unwrap(),
    )
    .unwrap();
    assert_eq!(top10, read("golden/1_top10.txt"), "top-10 prompt differs");
    let parsing = build_parsing_prompt(LLM_OUTPUT_SLOT).unwrap();
    assert_eq!(
        parsing,
        read("golden/parsing_prompt.txt"),
        "parsing prompt differs"
    );
    format!(
        "none {} bytes, top-10 {} bytes, parsing {} bytes identical",
        none.len(),
        top10.len(),
        parsing.len()
    )
}

fn criterion_3() -> String {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240531);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = [4, 6, 9, 31, 61][i % 5];
        let len = rng.gen_range(2..=300);
        let a: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let b: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
        let k = qwk(&pairs(&a, &b), n).unwrap();
        let o = oracle_qwk(&a, &b).expect("random ratings are non-degenerate");
        worst = worst.max((k - o).abs());
        assert!((k - o).abs() <= 1e-9, "set {i}: {k} vs oracle {o}");
        assert_eq!(qwk(&pairs(&a, &a), n).unwrap(), 1.0, "identity, set {i}");
        assert_eq!(
            k.to_bits(),
            qwk(&pairs(&b, &a), n).unwrap().to_bits(),
            "symmetry, set {i}"
        );
    }
    let took = time_limit(start, Duration::from_secs(10));
    format!("1000 sets, max |lib - oracle| = {worst:.1e}, in {took}")
}

fn criterion_4() -> String {
    let items = corpus();
    let m = metas();
    let (client, _) = fallback_client(&items);
    let options = ParseOptions::new("parser");
    let mut failures = 0;
    for item in &items {
        match parse(&item.raw, &m[item.set.as_str()], Some(&client), &options) {
            Ok(parsed) => {
                let expected = item.expected.as_ref().expect("unexpected success");
                assert_eq!(&parsed.scores, expected, "{}", item.id);
            }
            Err(_) => failures += 1,
        }
    }
    let rate = failures as f64 / items.len() as f64;
    assert!(rate < 0.07, "failure rate {rate}");
    let reference = items.iter().filter(|i| i.kind == "reference").count();
    assert_eq!(reference, 3);
    let expected: [(&str, &[(&str, f64)]); 3] = [
        ("overall_1_6", &[("Overall", 1.0)]),
        (
            "asap2",
            &[("Writing Applications", 2.0), ("Language Conventions", 1.0)],
        ),
        ("overall_1_6", &[("Overall", 3.0)]),
    ];
    for (example, (set, scores)) in PARSING_EXAMPLES.iter().zip(expected) {
        let parsed = parse_deterministic(example.input, &m[set], RangePolicy::Clamp).unwrap();
        let want: BTreeMap<String, f64> = scores.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(parsed.scores, want);
    }
    format!(
        "{} samples, {failures} failures ({:.1}%), reference examples exact",
        items.len(),
        rate * 100.0
    )
}

fn criterion_5() -> String {
    let start = Instant::now();
    let config = fixture("run_echo.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for dir in &dirs {
        let runner = Runner::from_file(
            &config,
            &Overrides {
                output_dir: Some(dir.path().to_path_buf()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(runner.resolved().backend, BackendSpec::Echo);
        let report = runner.run(false).unwrap();
        assert_eq!(report.average_qwk, Some(1.0), "average QWK");
        assert_eq!(report.per_set.values().map(|s| s.n).sum::<usize>(), 40);
        reports.push(report);
    }
    let took = time_limit(start, Duration::from_secs(30));
    let [a, b] = [dirs[0].path(), dirs[1].path()];
    for name in ["report.json", "report.txt"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
    assert_eq!(
        tree(&a.join("raw")),
        tree(&b.join("raw")),
        "raw outputs differ"
    );
    format!(
        "40 essays, average QWK {:.1}, reports and raw trees identical, two runs in {took}",
        reports[0].average_qwk.unwrap()
    )
}

fn criterion_6() -> String {
    let metas = MetaCatalog::load(&fixture("asap_fixture_meta.toml")).unwrap();
    let essays = load_asap(
        &fixture("asap_fixture.tsv"),
        &metas,
        &AsapColumns::default(),
    )
    .unwrap()
    .essays;
    let first = split_folds(&essays, 5, 42).unwrap();
    for _ in 0..20 {
        assert_eq!(
            split_folds(&essays, 5, 42).unwrap(),
            first,
            "split not deterministic"
        );
    }
    for (set, sizes) in first.sizes_by_set(&essays) {
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        assert!(spread <= 1, "set {set} fold sizes {sizes:?}");
    }
    let roles = select_roles(&first).unwrap();
    let mut counts: BTreeMap<(String, Role), usize> = BTreeMap::new();
    for essay in &essays {
        *counts
            .entry((essay.essay_set_id.clone(), roles[&essay.id]))
            .or_default() += 1;
    }
    let sets: BTreeSet<&str> = essays.iter().map(|e| e.essay_set_id.as_str()).collect();
    for set in &sets {
        let get = |r| counts.get(&(set.to_string(), r)).copied().unwrap_or(0);
        let (train, dev, test) = (get(Role::Train), get(Role::Dev), get(Role::Test));
        assert_eq!((train, dev, test), (6, 2, 2), "set {set}");
    }
    format!(
        "{} sets, train/dev/test 6/2/2 each (folds 3/1/1), 20 identical splits",
        sets.len()
    )
}

fn criterion_7() -> String {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let meta: toml::Value =
        toml::from_str(&fs::read_to_string(dir.join("asap_meta.toml")).unwrap()).unwrap();
    assert_eq!(meta["essay_set"].as_array().unwrap().len(), 8);
    let experiments = dir.join("experiments");
    let mut names: Vec<_> = fs::read_dir(&experiments)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 12, "one config per model and feature set");
    for path in &names {
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        let resolved = RunConfig::load(path)
            .unwrap()
            .resolve(&experiments, &Overrides::default())
            .unwrap_or_else(|e| panic!("{stem}: {e}"));
        let c = &resolved.config;
        assert_eq!(c.model.temperature, 0.0, "{stem}");
        assert_eq!(c.model.max_tokens, 4096, "{stem}");
        let kind = if stem.starts_with("asap") {
            DatasetKind::Asap
        } else {
            DatasetKind::Ellipse
        };
        assert_eq!(c.dataset.kind, kind, "{stem}");
        assert_eq!(c.split.is_some(), kind == DatasetKind::Asap, "{stem}");
        let selection: FeatureSelection = stem.splitn(3, '_').nth(2).unwrap().parse().unwrap();
        assert_eq!(c.selection.features, selection, "{stem}");
        if stem.contains("gpt4") {
            assert_eq!(c.model.name, "gpt-4-0613");
            let sub = c.subsample.expect("GPT-4 runs are subsampled");
            assert_eq!(sub.n, 500);
            let per = if kind == DatasetKind::Asap {
                SubsamplePer::Set
            } else {
                SubsamplePer::Total
            };
            assert_eq!(sub.per, per, "{stem}");
        } else {
            assert_eq!(c.model.name, "mistralai/Mistral-7B-Instruct-v0.2");
            assert!(c.subsample.is_none());
        }
    }
    // The same report shape an operator gets from a live run.
    let tmp = tempfile::tempdir().unwrap();
    let report = Runner::from_file(
        &fixture("run_echo.toml"),
        &Overrides {
            output_dir: Some(tmp.path().to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap()
    .run(false)
    .unwrap();
    let text = report.to_text();
    assert!(text.lines().any(|l| l.starts_with("Avg.")));
    format!(
        "not reproducible offline (needs licensed ASAP/ELLIPSE and live endpoints); {} experiment configs validated, report shape checked",
        names.len()
    )
}

type Criterion = (&'static str, fn() -> String);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 feature extraction on the sample essay", criterion_1),
        ("2 prompt goldens", criterion_2),
        ("3 QWK oracle equivalence", criterion_3),
        ("4 parser corpus", criterion_4),
        ("5 end-to-end echo run", criterion_5),
        ("6 fold protocol", criterion_6),
        ("7 experiment configs", criterion_7),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(payload) => {
                failed += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    let _ = panic::take_hook();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
