/// Leading labels a model sometimes prepends despite being told not to.
const LABELS: [&str; 3] = ["better translation:", "translation:", "paraphrase:"];

const QUOTE_PAIRS: [(char, char); 6] = [
    ('"', '"'),
    ('\'', '\''),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
    ('\u{201e}', '\u{201c}'),
    ('\u{00ab}', '\u{00bb}'),
];

/// Cleans a raw completion into a bare translation.
///
/// Each pass trims, drops one leading label, drops one pair of quotes that
/// wraps the whole text, and folds newline runs into a single space. Passes
/// repeat until nothing changes, which makes the function idempotent. A pass
/// that would empty a non-blank text is not applied.
pub fn sanitize_response(raw: &str) -> String {
    if raw.trim().is_empty() {
        return String::new();
    }
    let mut current = raw.trim().to_string();
    loop {
        let next = sanitize_pass(&current);
        if next == current || next.is_empty() {
            return current;
        }
        current = next;
    }
}

fn sanitize_pass(text: &str) -> String {
    let mut s = text.trim();
    if let Some(rest) = strip_label(s) {
        s = rest.trim_start();
    }
    if let Some(inner) = strip_wrapping_quotes(s) {
        s = inner;
    }
    collapse_newlines(s.trim())
}

fn strip_label(s: &str) -> Option<&str> {
    LABELS.iter().find_map(|label| {
        let head = s.get(..label.len())?;
        head.eq_ignore_ascii_case(label).then(|| &s[label.len()..])
    })
}

fn strip_wrapping_quotes(s: &str) -> Option<&str> {
    let mut chars = s.chars();
    let first = chars.next()?;
    let last = chars.next_back()?;
    QUOTE_PAIRS.iter().find_map(|&(open, close)| {
        if first != open || last != close {
            return None;
        }
        let inner = &s[open.len_utf8()..s.len() - close.len_utf8()];
        // a quote inside means the outer pair does not enclose the whole text
        (!inner.contains(open) && !inner.contains(close)).then_some(inner)
    })
}

fn collapse_newlines(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_break = false;
    for c in s.chars() {
        if c == '\n' || c == '\r' {
            if !in_break {
                out.push(' ');
                in_break = true;
            }
        } else {
            out.push(c);
            in_break = false;
        }
    }
    out
}
