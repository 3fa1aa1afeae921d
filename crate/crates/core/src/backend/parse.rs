use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub kind: String,
    pub argument: String,
}

impl ParsedAction {
    pub fn new(kind: impl Into<String>, argument: impl Into<String>) -> Self {
        Self { kind: kind.into(), argument: argument.into() }
    }
}

/// Strips an `Act 3:` / `Action 3:` prefix, if present.
fn strip_act_prefix(line: &str) -> Option<&str> {
    let (head, rest) = line.split_once(':')?;
    let mut words = head.split_whitespace();
    let label = words.next()?;
    if !matches!(label, "Act" | "Action") {
        return None;
    }
    match (words.next(), words.next()) {
        (None, _) => Some(rest.trim()),
        (Some(n), None) if n.chars().all(|c| c.is_ascii_digit()) => Some(rest.trim()),
        _ => None,
    }
}

/// `Name[arg]`, or a bare `Name` when `allow_bare`.
fn parse_call(text: &str, allow_bare: bool) -> Option<ParsedAction> {
    let text = text.trim();
    let is_name = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    match text.find('[') {
        Some(open) if text.ends_with(']') => {
            let name = text[..open].trim();
            is_name(name).then(|| ParsedAction::new(name, text[open + 1..text.len() - 1].trim()))
        }
        Some(_) => None,
        None => (allow_bare && is_name(text)).then(|| ParsedAction::new(text, "")),
    }
}

/// Extracts actions from a completion. `Act N: ...` lines are always
/// considered (a bare name such as `Act 3: Compare` is accepted there);
/// other lines count only when they consist of a single `Name[argument]`
/// call. `Thought` and `Obs`/`Observation` lines are skipped.
pub fn parse_actions(completion: &str) -> Vec<ParsedAction> {
    let mut out = Vec::new();
    for raw in completion.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("Thought") || line.starts_with("Obs") {
            continue;
        }
        let parsed = match strip_act_prefix(line) {
            Some(rest) => parse_call(rest, true),
            None => parse_call(line, false),
        };
        out.extend(parsed);
    }
    out
}
