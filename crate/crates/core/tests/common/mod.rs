#![allow(dead_code)]

pub mod parse;

use std::path::{Path, PathBuf};

use essay_scorer::evalkit::RatingPair;
use essay_scorer::runner::{Overrides, ResolvedConfig, RunConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Brute-force QWK written straight from the pairwise form
/// `1 - sum_p (a_p - b_p)^2 / ((1/n) sum_p sum_q (a_p - b_q)^2)`.
/// `None` when the denominator vanishes.
pub fn oracle_qwk(a: &[usize], b: &[usize]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let sq = |x: usize, y: usize| (x as f64 - y as f64).powi(2);
    let observed: f64 = a.iter().zip(b).map(|(&x, &y)| sq(x, y)).sum();
    let mut expected = 0.0;
    for &x in a {
        for &y in b {
            expected += sq(x, y);
        }
    }
    expected /= n;
    (expected != 0.0).then(|| 1.0 - observed / expected)
}

pub fn pairs(a: &[usize], b: &[usize]) -> Vec<RatingPair> {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&predicted, &gold))| RatingPair {
            essay_id: i.to_string(),
            predicted,
            gold,
        })
        .collect()
}

/// The echo run config over the 40-essay fixture, writing to `out`.
pub fn echo_config(out: &Path) -> ResolvedConfig {
    fixture_config("run_echo.toml", out)
}

pub fn fixture_config(name: &str, out: &Path) -> ResolvedConfig {
    let path = fixture(name);
    RunConfig::load(&path)
        .unwrap()
        .resolve(
            path.parent().unwrap(),
            &Overrides {
                output_dir: Some(out.to_path_buf()),
                ..Default::default()
            },
        )
        .unwrap()
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}
