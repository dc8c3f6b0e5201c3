//! Text heuristics shared by the rule-based detectors.

use std::sync::LazyLock;

use num_rational::BigRational;
use regex::Regex;

use crate::expr::{evaluate, is_expr_char, EvalOptions};
use crate::model::{Label, Mcq};

/// Lowercase, collapse whitespace, strip trailing punctuation.
///
/// Idempotent: `normalize(normalize(s)) == normalize(s)`.
pub fn normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut out = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let trimmed = out
            .trim_end_matches(|c: char| matches!(c, '.' | '!' | '?' | ';' | ':' | ',') || c.is_whitespace())
            .len();
        if trimmed == out.len() {
            break;
        }
        out.truncate(trimmed);
    }
    out
}

/// Splits on `.`, `!`, `?` when followed by whitespace or end of text, so
/// decimals such as `3.5` stay intact.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1);
            if next.is_none_or(|n| n.is_whitespace()) {
                let s = cur.trim().to_string();
                if !s.is_empty() {
                    out.push(s);
                }
                cur.clear();
            }
        }
    }
    let s = cur.trim().to_string();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

const IMPERATIVE_LEADS: &[&str] = &[
    "add", "apply", "calculate", "check", "compute", "consider", "convert", "determine", "divide",
    "evaluate", "find", "first", "identify", "let", "multiply", "note", "plug", "recall",
    "remember", "rewrite", "set", "simplify", "solve", "subtract", "substitute", "take", "use",
];

static COPULA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(is|are|was|were|be|equals|equal|has|have)\b").unwrap()
});

static UNIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\d\s*(°\s*[cfk]?|%|(km|cm|mm|nm|m|kg|mg|g|s|ms|min|h|hr|n|j|kj|w|kw|v|a|hz|mol|k|l|ml|pa|kpa|atm|ev)(/[a-z]+(\^?\d)?)?\b)",
    )
    .unwrap()
});

static DECLARED_ANSWER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:correct\s+)?(?:answer|choice|option)\s*(?:is|=|:)?\s*(?:choice\s+|option\s+)?\(?([A-D])\)?(?:[^A-Za-z0-9]|$)",
    )
    .unwrap()
});

static DECLARED_VALUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:answer|result)\s+(?:is|=|:)\s*([-−]?[0-9.(][0-9.\s+\-−×*·/÷^()]*)").unwrap()
});

static TRAILING_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:therefore|thus|so|hence)[,\s]+\(?([A-D])\)?\s*[.!]?$").unwrap()
});

fn is_answer_declaration(sentence: &str) -> bool {
    DECLARED_ANSWER.is_match(sentence) || TRAILING_LABEL.is_match(sentence.trim())
}

/// Declarative sentences from an explanation that assert something about
/// the world, normalized. Answer declarations, arithmetic steps and
/// imperative instructions are skipped.
pub fn extract_claims(explanation: &str) -> Vec<String> {
    let mut claims = Vec::new();
    for sentence in split_sentences(explanation) {
        let norm = normalize(&sentence);
        if norm.is_empty() || is_answer_declaration(&sentence) || sentence.contains('=') {
            continue;
        }
        let first = norm
            .split(|c: char| !c.is_alphanumeric())
            .find(|w| !w.is_empty())
            .unwrap_or("");
        if IMPERATIVE_LEADS.contains(&first) {
            continue;
        }
        if (COPULA.is_match(&norm) || UNIT.is_match(&norm))
            && !claims.contains(&norm) {
                claims.push(norm);
            }
    }
    claims
}

/// One `<expression> = <value>` step found in text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStep {
    pub expression: String,
    pub value: String,
    /// Byte offset of the `=` sign.
    pub offset: usize,
}

fn trim_run(s: &str) -> &str {
    s.trim().trim_end_matches('.').trim()
}

/// Every `lhs = rhs` pair whose sides are runs of arithmetic characters.
/// Chains `a = b = c` give `(a, b)` and `(b, c)`. A left side that does
/// not parse as a whole is shortened from the front one whitespace-separated
/// piece at a time, so list markers like `1.` before a step are dropped.
pub fn find_steps(text: &str) -> Vec<RawStep> {
    let eq_positions: Vec<usize> = text.match_indices('=').map(|(i, _)| i).collect();
    let mut steps = Vec::new();
    for (k, &eq) in eq_positions.iter().enumerate() {
        let lower = if k > 0 { eq_positions[k - 1] + 1 } else { 0 };
        let before = &text[lower..eq];
        let lhs_start = before
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_expr_char(c))
            .map_or(0, |(i, c)| i + c.len_utf8());
        let lhs = trim_run(&before[lhs_start..]);

        let upper = eq_positions.get(k + 1).copied().unwrap_or(text.len());
        let after = &text[eq + 1..upper];
        let rhs_end = after
            .char_indices()
            .find(|&(_, c)| !is_expr_char(c))
            .map_or(after.len(), |(i, _)| i);
        let rhs = trim_run(&after[..rhs_end]);

        if lhs.is_empty() || rhs.is_empty() || !lhs.chars().any(|c| c.is_ascii_digit()) {
            continue;
        }
        let lhs = best_suffix(lhs);
        let rhs = best_prefix(rhs);
        steps.push(RawStep {
            expression: lhs.to_string(),
            value: rhs.to_string(),
            offset: eq,
        });
    }
    steps
}

/// Longest whitespace-delimited suffix of `s` that parses.
fn best_suffix(s: &str) -> &str {
    if crate::expr::parse_expression(s).is_ok() {
        return s;
    }
    for (i, c) in s.char_indices() {
        if c.is_whitespace() {
            let tail = s[i..].trim();
            if !tail.is_empty() && crate::expr::parse_expression(tail).is_ok() {
                return tail;
            }
        }
    }
    s
}

/// Longest whitespace-delimited prefix of `s` that parses.
fn best_prefix(s: &str) -> &str {
    if crate::expr::parse_expression(s).is_ok() {
        return s;
    }
    let cuts: Vec<usize> = s
        .char_indices()
        .filter(|(_, c)| c.is_whitespace())
        .map(|(i, _)| i)
        .collect();
    for &i in cuts.iter().rev() {
        let head = s[..i].trim();
        if !head.is_empty() && crate::expr::parse_expression(head).is_ok() {
            return head;
        }
    }
    s
}

/// Numeric value of a choice such as `42`, `42 m`, `$5`, `3×10^8 m/s` or `1/2`.
/// The text must start with an arithmetic run that parses; anything after it
/// must be separated by whitespace or be a unit-like symbol.
pub fn choice_value(text: &str, opts: &EvalOptions) -> Option<BigRational> {
    let t = text.trim().trim_start_matches('$').trim();
    let end = t
        .char_indices()
        .find(|&(_, c)| !is_expr_char(c))
        .map_or(t.len(), |(i, _)| i);
    let head = t[..end].trim().trim_end_matches('.');
    if head.is_empty() {
        return None;
    }
    let rest = &t[end..];
    if let Some(c) = rest.chars().next() {
        let separated = t[..end].ends_with(char::is_whitespace);
        if !(separated || matches!(c, '%' | '°' | 'µ')) {
            return None;
        }
    }
    // Unit suffixes such as `m/s` leave a trailing `/` on the run.
    let head = best_prefix(head.trim_end_matches(['/', '^', '*', '×']));
    evaluate(head, opts).ok()
}

/// Where the explanation lands.
#[derive(Debug, Clone, PartialEq)]
pub enum Conclusion {
    /// An explicit label, e.g. "the answer is B".
    Label { label: Label, text: String },
    /// A final value, from a declaration like "the answer is 42" or from the
    /// last parseable arithmetic step.
    Value { value: BigRational, text: String },
}

fn label_declarations(text: &str) -> Vec<(usize, Label, String)> {
    let mut out = Vec::new();
    for m in DECLARED_ANSWER.captures_iter(text) {
        let g = m.get(1).unwrap();
        if let Some(l) = Label::parse(g.as_str()) {
            out.push((g.start(), l, m.get(0).unwrap().as_str().trim().to_string()));
        }
    }
    let mut offset = 0;
    for sentence in text.split_inclusive(['.', '!', '?']) {
        if let Some(c) = TRAILING_LABEL.captures(sentence.trim()) {
            if let Some(l) = Label::parse(c.get(1).unwrap().as_str()) {
                out.push((offset, l, sentence.trim().to_string()));
            }
        }
        offset += sentence.len();
    }
    out
}

/// The value of the last parseable step (computed, not as stated), or a
/// declared numeric answer, whichever appears later in the text.
pub fn final_value(text: &str, opts: &EvalOptions) -> Option<(usize, BigRational, String)> {
    let mut best: Option<(usize, BigRational, String)> = None;
    for step in find_steps(text) {
        if let Ok(v) = evaluate(&step.expression, opts) {
            best = Some((
                step.offset,
                v,
                format!("{} = {}", step.expression, step.value),
            ));
        }
    }
    for c in DECLARED_VALUE.captures_iter(text) {
        let g = c.get(1).unwrap();
        let candidate = best_prefix(trim_run(g.as_str()));
        if let Ok(v) = evaluate(candidate, opts) {
            if best.as_ref().is_none_or(|(off, _, _)| g.start() > *off) {
                best = Some((g.start(), v, c.get(0).unwrap().as_str().trim().to_string()));
            }
        }
    }
    best
}

/// The explanation's final conclusion. An explicit label wins over a value
/// when it appears later in the text.
pub fn conclusion(mcq: &Mcq, opts: &EvalOptions) -> Option<Conclusion> {
    let text = &mcq.explanation;
    let label = label_declarations(text).into_iter().max_by_key(|(off, _, _)| *off);
    let value = final_value(text, opts);
    match (label, value) {
        (Some((lo, label, t)), Some((vo, value, vt))) => {
            if lo >= vo {
                Some(Conclusion::Label { label, text: t })
            } else {
                Some(Conclusion::Value { value, text: vt })
            }
        }
        (Some((_, label, text)), None) => Some(Conclusion::Label { label, text }),
        (None, Some((_, value, text))) => Some(Conclusion::Value { value, text }),
        (None, None) => None,
    }
}

/// Labels whose choice text evaluates to exactly `value`.
pub fn matching_labels(mcq: &Mcq, value: &BigRational, opts: &EvalOptions) -> Vec<Label> {
    mcq.choices
        .iter()
        .filter(|c| choice_value(&c.text, opts).as_ref() == Some(value))
        .map(|c| c.label)
        .collect()
}

/// Word-set Jaccard similarity of two normalized strings.
pub fn jaccard(a: &str, b: &str) -> f64 {
    use std::collections::BTreeSet;
    let tokens = |s: &str| -> BTreeSet<String> {
        s.split_whitespace()
            .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_string())
            .filter(|w| !w.is_empty())
            .collect()
    };
    let (x, y) = (tokens(a), tokens(b));
    if x.is_empty() && y.is_empty() {
        return 1.0;
    }
    let inter = x.intersection(&y).count() as f64;
    let union = x.union(&y).count() as f64;
    inter / union
}
