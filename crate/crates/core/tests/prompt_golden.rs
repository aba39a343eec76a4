mod common;

use std::collections::BTreeMap;

use common::fixture;
use itref_core::prompts::{render_prompt, PromptInputs, PromptKind};

fn variables() -> BTreeMap<String, String> {
    let text = std::fs::read_to_string(fixture("prompts/variables.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixture(&format!("prompts/{name}.txt"))).unwrap()
}

/// (golden file, kind, first iteration)
pub const CASES: [(&str, PromptKind, bool); 6] = [
    ("translate", PromptKind::Translate, true),
    ("refine", PromptKind::Refine, false),
    ("refine-contrast", PromptKind::RefineContrast, false),
    ("refine-random-first", PromptKind::RefineRandom, true),
    ("refine-random-later", PromptKind::RefineRandom, false),
    ("paraphrase", PromptKind::Paraphrase, false),
];

#[test]
fn rendered_prompts_match_golden_files() {
    let vars = variables();
    for (name, kind, first) in CASES {
        let inputs = PromptInputs {
            source: (kind != PromptKind::Paraphrase).then_some(vars["source"].as_str()),
            prev_translation: (kind != PromptKind::Translate).then_some(vars["prev_translation"].as_str()),
            random_target: Some(vars["random_target"].as_str()),
            lang: &vars["lang"],
            is_first_iteration: first,
        };
        let rendered = render_prompt(kind, &inputs).unwrap();
        assert_eq!(rendered.text, golden(name), "{name}");
        assert_eq!(rendered.kind, kind);
        assert!(!rendered.text.contains("${"));
        assert!(rendered.text.ends_with("without any explanation."));
    }
}

#[test]
fn paraphrase_ignores_a_supplied_source() {
    let vars = variables();
    let inputs = PromptInputs {
        source: Some(&vars["source"]),
        prev_translation: Some(&vars["prev_translation"]),
        lang: &vars["lang"],
        ..Default::default()
    };
    let rendered = render_prompt(PromptKind::Paraphrase, &inputs).unwrap();
    assert_eq!(rendered.text, golden("paraphrase"));
    assert!(!rendered.text.contains(vars["source"].as_str()));
}
