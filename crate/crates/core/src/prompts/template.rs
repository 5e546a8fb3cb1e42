//! `{{name}}` placeholder templates.
//!
//! A placeholder is `{{` + identifier + `}}`, with optional spaces inside
//! the braces. `\{{` produces a literal `{{`. Substituted values are
//! inserted verbatim and never rescanned.

use std::collections::{BTreeMap, BTreeSet};

use super::PromptError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Template {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut segments = Vec::new();
        let mut text = String::new();
        let mut rest = source;
        while let Some(pos) = rest.find("{{") {
            if rest[..pos].ends_with('\\') {
                text.push_str(&rest[..pos - 1]);
                text.push_str("{{");
                rest = &rest[pos + 2..];
                continue;
            }
            text.push_str(&rest[..pos]);
            let after = &rest[pos + 2..];
            let end = after.find("}}").ok_or_else(|| PromptError::TemplateSyntax {
                offset: source.len() - rest.len() + pos,
                reason: "unclosed placeholder".into(),
            })?;
            let name = after[..end].trim();
            if !is_ident(name) {
                return Err(PromptError::TemplateSyntax {
                    offset: source.len() - rest.len() + pos,
                    reason: format!("invalid placeholder name `{name}`"),
                });
            }
            if !text.is_empty() {
                segments.push(Segment::Text(std::mem::take(&mut text)));
            }
            segments.push(Segment::Var(name.to_string()));
            rest = &after[end + 2..];
        }
        text.push_str(rest);
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        Ok(Self { segments })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Var(v) => Some(v.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }

    /// Substitutes `vars`, which must name exactly the template's placeholders.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String, PromptError> {
        let wanted = self.placeholders();
        if let Some(missing) = wanted.iter().find(|v| !vars.contains_key(**v)) {
            return Err(PromptError::MissingVariable(missing.to_string()));
        }
        if let Some(extra) = vars.keys().find(|k| !wanted.contains(k.as_str())) {
            return Err(PromptError::UnexpectedVariable(extra.clone()));
        }
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Var(v) => out.push_str(&vars[v]),
            }
        }
        Ok(out)
    }
}
