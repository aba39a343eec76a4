//! Tokenizers compatible with the `13a` and `zh` tokenizers of the standard
//! BLEU toolkit, plus an external-command hook for languages that need a
//! morphological analyser.

use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TokenizerKind {
    #[serde(rename = "13a")]
    T13a,
    Zh,
    /// Pipes segments, one per line, through `command` and splits its output
    /// lines on whitespace.
    ExternalHook { name: String, command: Vec<String> },
}

impl TokenizerKind {
    pub fn name(&self) -> &str {
        match self {
            TokenizerKind::T13a => "13a",
            TokenizerKind::Zh => "zh",
            TokenizerKind::ExternalHook { name, .. } => name,
        }
    }

    /// Default tokenizer for a target language. Japanese has no built-in
    /// tokenizer and needs a hook.
    pub fn for_language(code: &str, hook: Option<&TokenizerKind>) -> Result<TokenizerKind> {
        match (code, hook) {
            (_, Some(hook)) => Ok(hook.clone()),
            ("zh", None) => Ok(TokenizerKind::Zh),
            ("ja", None) => Err(Error::Config(
                "Japanese text metrics need an external tokenizer hook".into(),
            )),
            (_, None) => Ok(TokenizerKind::T13a),
        }
    }
}

static PUNCT_SYMBOLS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\{-\~\[-\` -\&\(-\+\:-\@/])").unwrap());
static PERIOD_COMMA_AFTER_NON_DIGIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([^0-9])([\.,])").unwrap());
static PERIOD_COMMA_BEFORE_NON_DIGIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\.,])([^0-9])").unwrap());
static DASH_AFTER_DIGIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9])(-)").unwrap());

/// Whitespace as understood by the toolkit's host language: Unicode
/// White_Space plus the ASCII information separators U+001C..U+001F.
pub(crate) fn is_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub(crate) fn split_spaces(s: &str) -> impl Iterator<Item = &str> {
    s.split(is_space).filter(|t| !t.is_empty())
}

fn regexp_post(line: &str) -> String {
    let line = PUNCT_SYMBOLS.replace_all(line, " ${1} ");
    let line = PERIOD_COMMA_AFTER_NON_DIGIT.replace_all(&line, "${1} ${2} ");
    let line = PERIOD_COMMA_BEFORE_NON_DIGIT.replace_all(&line, " ${1} ${2}");
    let line = DASH_AFTER_DIGIT.replace_all(&line, "${1} ${2} ");
    split_spaces(&line).collect::<Vec<_>>().join(" ")
}

/// mteval-v13a tokenization, returned as a single space-joined string.
pub fn tokenize_13a(line: &str) -> String {
    let mut line = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    regexp_post(&format!(" {line} "))
}

/// Code point ranges the `zh` tokenizer isolates. Two of the toolkit's
/// bounds are five-hex-digit literals that its host language parses as
/// two-character strings; the comparison semantics this produces are
/// reproduced here as U+2001..=U+2A6D and U+2F81..=U+2FA1.
const ZH_RANGES: [(u32, u32); 22] = [
    (0x3400, 0x4db5),
    (0x4e00, 0x9fa5),
    (0x9fa6, 0x9fbb),
    (0xf900, 0xfa2d),
    (0xfa30, 0xfa6a),
    (0xfa70, 0xfad9),
    (0x2001, 0x2a6d),
    (0x2f81, 0x2fa1),
    (0xff00, 0xffef),
    (0x2e80, 0x2eff),
    (0x3000, 0x303f),
    (0x31c0, 0x31ef),
    (0x2f00, 0x2fdf),
    (0x2ff0, 0x2fff),
    (0x3100, 0x312f),
    (0x31a0, 0x31bf),
    (0xfe10, 0xfe1f),
    (0xfe30, 0xfe4f),
    (0x2600, 0x26ff),
    (0x2700, 0x27bf),
    (0x3200, 0x32ff),
    (0x3300, 0x33ff),
];

pub fn is_zh_isolated(c: char) -> bool {
    let cp = c as u32;
    ZH_RANGES.iter().any(|&(lo, hi)| lo <= cp && cp <= hi)
}

/// Chinese tokenization: every isolated code point becomes its own token,
/// the rest goes through the 13a regular expressions (without the entity
/// and `<skipped>` handling).
pub fn tokenize_zh(line: &str) -> String {
    let mut spaced = String::with_capacity(line.len() * 3);
    for c in line.trim_matches(is_space).chars() {
        if is_zh_isolated(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    regexp_post(&spaced)
}

/// Tokenizes a batch of segments. External hooks are invoked once per
/// batch.
pub fn tokenize_batch(lines: &[&str], kind: &TokenizerKind) -> Result<Vec<String>> {
    match kind {
        TokenizerKind::T13a => Ok(lines.iter().map(|l| tokenize_13a(l)).collect()),
        TokenizerKind::Zh => Ok(lines.iter().map(|l| tokenize_zh(l)).collect()),
        TokenizerKind::ExternalHook { name, command } => run_hook(name, command, lines),
    }
}

/// Token list for one segment.
pub fn tokenize(text: &str, kind: &TokenizerKind) -> Result<Vec<String>> {
    let joined = tokenize_batch(&[text], kind)?.pop().unwrap_or_default();
    Ok(split_spaces(&joined).map(str::to_string).collect())
}

fn run_hook(name: &str, command: &[String], lines: &[&str]) -> Result<Vec<String>> {
    let fail = |status: Option<i32>, message: String| Error::Tokenizer {
        name: name.to_string(),
        status,
        message,
    };
    let (program, args) = command
        .split_first()
        .ok_or_else(|| fail(None, "empty hook command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| fail(None, format!("cannot start `{program}`: {e}")))?;
    let mut input = String::new();
    for line in lines {
        input.push_str(&line.replace('\n', " "));
        input.push('\n');
    }
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let output = child
        .wait_with_output()
        .map_err(|e| fail(None, e.to_string()))?;
    let _ = writer.join();
    if !output.status.success() {
        return Err(fail(
            output.status.code(),
            String::from_utf8_lossy(&output.stderr).trim().to_string(),
        ));
    }
    let stdout = String::from_utf8(output.stdout).map_err(|e| fail(Some(0), e.to_string()))?;
    let out: Vec<String> = stdout.lines().map(str::to_string).collect();
    if out.len() != lines.len() {
        return Err(fail(
            Some(0),
            format!("expected {} output lines, got {}", lines.len(), out.len()),
        ));
    }
    Ok(out)
}
