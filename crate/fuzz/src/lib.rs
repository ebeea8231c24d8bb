//! Shared metadata for the fuzz targets.

use std::collections::BTreeMap;
use std::path::Path;

use essay_scorer::corpus::{EssaySetMeta, EssayType, MetaCatalog};

pub const CATALOG: &str = r#"
[[essay_set]]
id = "1"
prompt = "Write a letter to your local newspaper."
score_min = 1
score_max = 6

[[essay_set]]
id = "2"
prompt = "Censorship in libraries."
score_min = 1
score_max = 6
traits = ["Writing Applications", "Language Conventions"]
trait_ranges = { "Language Conventions" = [1, 4] }
"#;

pub fn catalog() -> MetaCatalog {
    MetaCatalog::from_toml_str(CATALOG, Path::new(".")).expect("built-in catalog")
}

/// A single-trait and a multi-trait rubric, one with half-point steps.
pub fn metas() -> [EssaySetMeta; 2] {
    let single = EssaySetMeta {
        essay_set_id: "ellipse".into(),
        prompt_text: String::new(),
        score_min: 1,
        score_max: 5,
        score_step: 0.5,
        trait_names: vec!["Overall".into()],
        trait_ranges: BTreeMap::new(),
        essay_type: EssayType::Argumentative,
        score_column: None,
    };
    let multi = EssaySetMeta {
        essay_set_id: "2".into(),
        score_step: 1.0,
        score_max: 6,
        trait_names: vec!["Writing Applications".into(), "Language Conventions".into()],
        trait_ranges: BTreeMap::from([("Language Conventions".to_string(), (1, 4))]),
        ..single.clone()
    };
    [single, multi]
}

#[cfg(test)]
mod tests {
    #[test]
    fn catalog_loads() {
        assert_eq!(super::catalog().len(), 2);
    }
}
