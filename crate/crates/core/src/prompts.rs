//! The five prompt templates and their rendering.
//!
//! Templates are plain text with `${name}` placeholders. The recognised
//! names are `source`, `prev_translation`, `random_target` and `lang`.
//! For [`PromptKind::RefineRandom`] the `${prev_translation}` slot is filled
//! with the random target sentence on the first iteration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Every template must end with this instruction.
pub const NO_EXPLANATION: &str = "without any explanation.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptKind {
    Translate,
    Refine,
    RefineContrast,
    RefineRandom,
    Paraphrase,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::Translate,
        PromptKind::Refine,
        PromptKind::RefineContrast,
        PromptKind::RefineRandom,
        PromptKind::Paraphrase,
    ];

    /// Kebab-case identifier used in files and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            PromptKind::Translate => "translate",
            PromptKind::Refine => "refine",
            PromptKind::RefineContrast => "refine-contrast",
            PromptKind::RefineRandom => "refine-random",
            PromptKind::Paraphrase => "paraphrase",
        }
    }

    /// Label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            PromptKind::Translate => "Translate",
            PromptKind::Refine => "Refine",
            PromptKind::RefineContrast => "Refine_Contrast",
            PromptKind::RefineRandom => "Refine_Random",
            PromptKind::Paraphrase => "Paraphrase",
        }
    }

    pub fn from_label(label: &str) -> Option<PromptKind> {
        PromptKind::ALL.into_iter().find(|k| k.label() == label)
    }

    pub fn default_template(self) -> &'static str {
        match self {
            PromptKind::Translate => {
                "Source: ${source}\nPlease give me a translation in ${lang} without any explanation."
            }
            PromptKind::Refine => {
                "Source: ${source}\nTranslation: ${prev_translation}\nPlease give me a better ${lang} translation without any explanation."
            }
            PromptKind::RefineContrast | PromptKind::RefineRandom => {
                "Source: ${source}\nBad translation: ${prev_translation}\nPlease give me a better ${lang} translation without any explanation."
            }
            PromptKind::Paraphrase => {
                "Sentence: ${prev_translation}\nPlease give me a paraphrase in ${lang} without any explanation."
            }
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptKind::ALL
            .into_iter()
            .find(|k| k.id() == s || k.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown prompt kind `{s}`")))
    }
}

/// Variables available to a rendering call.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptInputs<'a> {
    pub source: Option<&'a str>,
    pub prev_translation: Option<&'a str>,
    pub random_target: Option<&'a str>,
    pub lang: &'a str,
    pub is_first_iteration: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
    pub variables: BTreeMap<String, String>,
}

/// One template per prompt kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<PromptKind, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: PromptKind::ALL
                .into_iter()
                .map(|k| (k, k.default_template().to_string()))
                .collect(),
        }
    }
}

const KNOWN_VARIABLES: [&str; 4] = ["source", "prev_translation", "random_target", "lang"];

impl TemplateSet {
    /// Parses a TOML table keyed by prompt kind id (`translate`,
    /// `refine-contrast`, ...). Kinds not present keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: BTreeMap<String, String> =
            toml::from_str(text).map_err(|e| Error::Config(format!("template file: {e}")))?;
        let mut set = TemplateSet::default();
        for (key, template) in table {
            let kind: PromptKind = key.parse()?;
            set.set(kind, template)?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn set(&mut self, kind: PromptKind, template: String) -> Result<()> {
        validate_template(kind, &template)?;
        self.templates.insert(kind, template);
        Ok(())
    }

    pub fn get(&self, kind: PromptKind) -> &str {
        &self.templates[&kind]
    }

    pub fn render(&self, kind: PromptKind, inputs: &PromptInputs<'_>) -> Result<RenderedPrompt> {
        render_with(kind, self.get(kind), inputs)
    }
}

/// Renders one of the built-in templates.
pub fn render_prompt(kind: PromptKind, inputs: &PromptInputs<'_>) -> Result<RenderedPrompt> {
    render_with(kind, kind.default_template(), inputs)
}

fn validate_template(kind: PromptKind, template: &str) -> Result<()> {
    let invalid = |message: String| Error::Template {
        kind: kind.id().to_string(),
        message,
    };
    for name in placeholders(template).map_err(invalid)? {
        if !KNOWN_VARIABLES.contains(&name) {
            return Err(invalid(format!("unknown placeholder `${{{name}}}`")));
        }
    }
    if !template.ends_with(NO_EXPLANATION) {
        return Err(invalid(format!("must end with \"{NO_EXPLANATION}\"")));
    }
    Ok(())
}

fn placeholders(template: &str) -> std::result::Result<Vec<&str>, String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| "unterminated placeholder".to_string())?;
        names.push(&after[..end]);
        rest = &after[end + 1..];
    }
    Ok(names)
}

fn render_with(kind: PromptKind, template: &str, inputs: &PromptInputs<'_>) -> Result<RenderedPrompt> {
    let missing = |variable: &str| Error::MissingVariable {
        kind: kind.id().to_string(),
        variable: variable.to_string(),
    };
    let mut values: BTreeMap<&str, &str> = BTreeMap::new();
    if inputs.lang.trim().is_empty() {
        return Err(missing("lang"));
    }
    values.insert("lang", inputs.lang);
    match kind {
        PromptKind::Translate => {
            values.insert("source", inputs.source.ok_or_else(|| missing("source"))?);
        }
        PromptKind::Refine | PromptKind::RefineContrast => {
            values.insert("source", inputs.source.ok_or_else(|| missing("source"))?);
            values.insert(
                "prev_translation",
                inputs.prev_translation.ok_or_else(|| missing("prev_translation"))?,
            );
        }
        PromptKind::RefineRandom => {
            values.insert("source", inputs.source.ok_or_else(|| missing("source"))?);
            if inputs.is_first_iteration {
                values.insert(
                    "random_target",
                    inputs.random_target.ok_or_else(|| missing("random_target"))?,
                );
            } else {
                values.insert(
                    "prev_translation",
                    inputs.prev_translation.ok_or_else(|| missing("prev_translation"))?,
                );
            }
        }
        PromptKind::Paraphrase => {
            values.insert(
                "prev_translation",
                inputs.prev_translation.ok_or_else(|| missing("prev_translation"))?,
            );
        }
    }
    for (name, value) in &values {
        if value.contains("${") {
            return Err(Error::Injection {
                variable: (*name).to_string(),
            });
        }
    }

    let first_random = kind == PromptKind::RefineRandom && inputs.is_first_iteration;
    let mut text = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        text.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| Error::Template {
            kind: kind.id().to_string(),
            message: "unterminated placeholder".into(),
        })?;
        let name = &after[..end];
        let slot = if first_random && name == "prev_translation" {
            "random_target"
        } else {
            name
        };
        let value = values.get(slot).ok_or_else(|| missing(slot))?;
        text.push_str(value);
        rest = &after[end + 1..];
    }
    text.push_str(rest);

    Ok(RenderedPrompt {
        kind,
        text,
        variables: values
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(source: &'a str, prev: &'a str, lang: &'a str) -> PromptInputs<'a> {
        PromptInputs {
            source: Some(source),
            prev_translation: Some(prev),
            random_target: None,
            lang,
            is_first_iteration: false,
        }
    }

    #[test]
    fn translate_wording() {
        let p = render_prompt(
            PromptKind::Translate,
            &PromptInputs {
                source: Some("Hallo Welt"),
                lang: "English",
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(
            p.text,
            "Source: Hallo Welt\nPlease give me a translation in English without any explanation."
        );
        assert_eq!(p.variables.len(), 2);
    }

    #[test]
    fn contrast_uses_bad_label() {
        let p = render_prompt(PromptKind::RefineContrast, &inputs("s", "x", "German")).unwrap();
        assert_eq!(p.text.lines().nth(1), Some("Bad translation: x"));
    }

    #[test]
    fn random_first_round_uses_random_target() {
        let first = render_prompt(
            PromptKind::RefineRandom,
            &PromptInputs {
                source: Some("s"),
                prev_translation: Some("p"),
                random_target: Some("r"),
                lang: "German",
                is_first_iteration: true,
            },
        )
        .unwrap();
        assert_eq!(first.text.lines().nth(1), Some("Bad translation: r"));
        assert_eq!(first.variables.get("random_target").map(String::as_str), Some("r"));
        assert!(!first.variables.contains_key("prev_translation"));

        let later = render_prompt(
            PromptKind::RefineRandom,
            &PromptInputs {
                is_first_iteration: false,
                ..first_inputs()
            },
        )
        .unwrap();
        assert_eq!(later.text.lines().nth(1), Some("Bad translation: p"));
    }

    fn first_inputs() -> PromptInputs<'static> {
        PromptInputs {
            source: Some("s"),
            prev_translation: Some("p"),
            random_target: Some("r"),
            lang: "German",
            is_first_iteration: true,
        }
    }

    #[test]
    fn paraphrase_omits_source() {
        let p = render_prompt(PromptKind::Paraphrase, &inputs("QUELLE", "the text", "English")).unwrap();
        assert_eq!(
            p.text,
            "Sentence: the text\nPlease give me a paraphrase in English without any explanation."
        );
        assert!(!p.text.contains("QUELLE"));
        assert!(!p.variables.contains_key("source"));
    }

    #[test]
    fn missing_variables_are_named() {
        let err = render_prompt(
            PromptKind::Refine,
            &PromptInputs {
                source: Some("s"),
                lang: "German",
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingVariable { ref variable, .. } if variable == "prev_translation"));

        let err = render_prompt(
            PromptKind::RefineRandom,
            &PromptInputs {
                random_target: None,
                ..first_inputs()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingVariable { ref variable, .. } if variable == "random_target"));

        let err = render_prompt(PromptKind::Translate, &PromptInputs { lang: "German", ..Default::default() })
            .unwrap_err();
        assert!(matches!(err, Error::MissingVariable { ref variable, .. } if variable == "source"));
    }

    #[test]
    fn placeholder_injection_rejected() {
        let err = render_prompt(PromptKind::Refine, &inputs("s", "a ${lang} b", "German")).unwrap_err();
        assert!(matches!(err, Error::Injection { ref variable } if variable == "prev_translation"));
    }

    #[test]
    fn quotes_pass_through() {
        let p = render_prompt(PromptKind::Refine, &inputs("\"q\" & 'r'", "«x»", "French")).unwrap();
        assert!(p.text.starts_with("Source: \"q\" & 'r'\nTranslation: «x»\n"));
    }

    #[test]
    fn every_rendering_ends_with_instruction_and_has_no_residue() {
        for kind in PromptKind::ALL {
            let mut i = first_inputs();
            i.is_first_iteration = kind == PromptKind::RefineRandom;
            let p = render_prompt(kind, &i).unwrap();
            assert!(p.text.ends_with(NO_EXPLANATION), "{kind}");
            assert!(!p.text.contains("${"), "{kind}");
        }
    }

    #[test]
    fn template_file_overrides_and_validation() {
        let set = TemplateSet::from_toml(
            "translate = \"Text: ${source}\\nTranslate into ${lang} without any explanation.\"\n",
        )
        .unwrap();
        let p = set
            .render(
                PromptKind::Translate,
                &PromptInputs {
                    source: Some("x"),
                    lang: "German",
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(p.text, "Text: x\nTranslate into German without any explanation.");
        assert_eq!(set.get(PromptKind::Refine), PromptKind::Refine.default_template());

        assert!(TemplateSet::from_toml("translate = \"${nope} without any explanation.\"").is_err());
        assert!(TemplateSet::from_toml("translate = \"${source} please\"").is_err());
        assert!(TemplateSet::from_toml("bogus = \"x without any explanation.\"").is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in PromptKind::ALL {
            assert_eq!(kind.id().parse::<PromptKind>().unwrap(), kind);
            assert_eq!(PromptKind::from_label(kind.label()), Some(kind));
        }
    }
}
