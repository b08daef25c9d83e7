//! Total parsers for the reply formats the templates request.
//!
//! None of these fail: text that does not follow the requested format is
//! salvaged by a fallback and the result is flagged `degraded`.

use crate::model::{canonicalize_answer, Answer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAgentReply {
    pub answer: Answer,
    pub explanation: String,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAggregate {
    /// Surface strings in reply order, without duplicates or "unknown".
    pub answers: Vec<String>,
    pub explanation: String,
    pub degraded: bool,
}

const ANSWER_LABEL: &str = "answer:";
const EXPLANATION_LABEL: &str = "explanation:";
const ALL_ANSWERS_LABEL: &str = "all correct answers:";

/// ASCII case-insensitive search for `needle` in `hay[from..]`; returns a byte offset into `hay`.
fn find_ci(hay: &str, needle: &str, from: usize) -> Option<usize> {
    let h = hay.as_bytes();
    let n = needle.as_bytes();
    if n.is_empty() || h.len() < n.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn strip_terminal_period(s: &str) -> &str {
    let s = s.trim_end();
    s.strip_suffix('.').unwrap_or(s).trim()
}

fn split_first_line(s: &str) -> (&str, &str) {
    match s.find('\n') {
        Some(k) => (&s[..k], &s[k + 1..]),
        None => (s, ""),
    }
}

/// Parses `Answer: {}. Explanation: {}`.
///
/// The answer runs from the label to the period immediately preceding
/// `Explanation:`, so answers containing abbreviations survive intact.
pub fn parse_agent_reply(raw: &str) -> ParsedAgentReply {
    if let Some(a) = find_ci(raw, ANSWER_LABEL, 0) {
        let after = a + ANSWER_LABEL.len();
        if let Some(e) = find_ci(raw, EXPLANATION_LABEL, after) {
            return ParsedAgentReply {
                answer: Answer::from_text(strip_terminal_period(&raw[after..e])),
                explanation: raw[e + EXPLANATION_LABEL.len()..].trim().to_string(),
                degraded: false,
            };
        }
        let (line, rest) = split_first_line(&raw[after..]);
        return ParsedAgentReply {
            answer: Answer::from_text(strip_terminal_period(line)),
            explanation: rest.trim().to_string(),
            degraded: true,
        };
    }
    let (line, rest) = split_first_line(raw.trim_start());
    ParsedAgentReply {
        answer: Answer::from_text(line.trim()),
        explanation: rest.trim().to_string(),
        degraded: true,
    }
}

/// Scans a list of quoted strings starting just after `[`.
/// Returns the items and the byte offset just past the closing `]`.
fn scan_quoted_list(s: &str) -> Option<(Vec<String>, usize)> {
    let mut items = Vec::new();
    let mut chars = s.char_indices().peekable();
    let skip_ws = |chars: &mut std::iter::Peekable<std::str::CharIndices>| {
        while chars.next_if(|(_, c)| c.is_whitespace()).is_some() {}
    };
    loop {
        skip_ws(&mut chars);
        let (i, c) = chars.next()?;
        let quote = match c {
            ']' if items.is_empty() => return Some((items, i + 1)),
            '"' | '\'' => c,
            _ => return None,
        };
        let mut item = String::new();
        loop {
            let (_, c) = chars.next()?;
            match c {
                '\\' => {
                    let (_, esc) = chars.next()?;
                    match esc {
                        'n' => item.push('\n'),
                        't' => item.push('\t'),
                        'r' => item.push('\r'),
                        'u' => {
                            let hex: String = (0..4).filter_map(|_| chars.next().map(|(_, c)| c)).collect();
                            let code = u32::from_str_radix(&hex, 16).ok()?;
                            item.push(char::from_u32(code)?);
                        }
                        other => item.push(other),
                    }
                }
                c if c == quote => break,
                c => item.push(c),
            }
        }
        items.push(item);
        skip_ws(&mut chars);
        match chars.next()? {
            (i, ']') => return Some((items, i + 1)),
            (_, ',') => {
                skip_ws(&mut chars);
                if let Some(&(i, ']')) = chars.peek() {
                    return Some((items, i + 1));
                }
            }
            _ => return None,
        }
    }
}

fn unquote(item: &str) -> &str {
    let t = item.trim();
    for q in ['"', '\''] {
        if let Some(inner) = t.strip_prefix(q).and_then(|r| r.strip_suffix(q)) {
            return inner.trim();
        }
    }
    t.trim_matches(|c| c == '"' || c == '\'').trim()
}

fn clean_answers<I: IntoIterator<Item = String>>(items: I) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in items {
        let canon = canonicalize_answer(&item);
        if canon.is_empty() || canon == "unknown" || out.contains(&item) {
            continue;
        }
        out.push(item);
    }
    out
}

fn split_loose(segment: &str) -> Vec<String> {
    segment
        .split([',', ';', '\n'])
        .map(|s| unquote(strip_terminal_period(s)).to_string())
        .collect()
}

fn explanation_after(rest: &str) -> String {
    match find_ci(rest, EXPLANATION_LABEL, 0) {
        Some(e) => rest[e + EXPLANATION_LABEL.len()..].trim().to_string(),
        None => rest.trim_start_matches(|c: char| c == '.' || c.is_whitespace()).trim_end().to_string(),
    }
}

/// Parses `All Correct Answers: ["a", "b"]. Explanation: {}`.
pub fn parse_aggregate_reply(raw: &str) -> ParsedAggregate {
    let label = find_ci(raw, ALL_ANSWERS_LABEL, 0);
    let from = label.map_or(0, |l| l + ALL_ANSWERS_LABEL.len());
    let mut degraded = label.is_none();

    let (items, rest) = match raw[from..].find('[').map(|k| from + k) {
        Some(open) => match scan_quoted_list(&raw[open + 1..]) {
            Some((items, used)) => (items, &raw[open + 1 + used..]),
            None => {
                degraded = true;
                let body = &raw[open + 1..];
                let (interior, rest) = match body.find(']') {
                    Some(close) => (&body[..close], &body[close + 1..]),
                    None => {
                        let end = find_ci(body, EXPLANATION_LABEL, 0)
                            .or_else(|| body.find('\n'))
                            .unwrap_or(body.len());
                        (&body[..end], &body[end..])
                    }
                };
                (
                    interior.split(',').map(|s| unquote(s).to_string()).collect(),
                    rest,
                )
            }
        },
        None => {
            degraded = true;
            let body = &raw[from..];
            let end = find_ci(body, EXPLANATION_LABEL, 0)
                .or_else(|| body.find('\n'))
                .unwrap_or(body.len());
            (split_loose(&body[..end]), &body[end..])
        }
    };

    ParsedAggregate {
        answers: clean_answers(items),
        explanation: explanation_after(rest),
        degraded,
    }
}

/// Parses a free-form answer list such as `1963, 1956`.
///
/// Used for the question-only baseline, whose prompt asks for the answers
/// without a bracketed format. Only an empty reply counts as degraded.
pub fn parse_list_reply(raw: &str) -> ParsedAggregate {
    let mut body = raw.trim();
    if let Some(0) = find_ci(body, ANSWER_LABEL, 0) {
        body = body[ANSWER_LABEL.len()..].trim_start();
    }
    let items = split_loose(body)
        .into_iter()
        .map(|s| s.trim_start_matches(['-', '*']).trim().to_string())
        .collect::<Vec<_>>();
    ParsedAggregate {
        answers: clean_answers(items),
        explanation: String::new(),
        degraded: raw.trim().is_empty(),
    }
}

fn quote_json_like(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Writes answers in the reply format the aggregator prompt requests.
pub fn format_aggregate_reply<S: AsRef<str>>(answers: &[S], explanation: &str) -> String {
    let list = answers
        .iter()
        .map(|a| quote_json_like(a.as_ref()))
        .collect::<Vec<_>>()
        .join(", ");
    format!("All Correct Answers: [{list}]. Explanation: {explanation}")
}
