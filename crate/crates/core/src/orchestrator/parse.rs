//! Reply conventions the agent prompts instruct.

use std::collections::BTreeMap;

use crate::dialog::{DeciderDecision, DecisionKind};

pub const DONE_SENTINEL: &str = "[DONE]";

/// Returned when a Decider reply contains no `ACCEPT:`/`REJECT:` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnparseableDecision;

/// One decision per `ACCEPT:` or `REJECT:` line, in reply order. Tagged
/// lines with nothing after the colon are skipped.
pub fn parse_decider_reply(reply: &str) -> Result<Vec<DeciderDecision>, UnparseableDecision> {
    let decisions: Vec<_> = reply
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            let (kind, rest) = match line.strip_prefix("ACCEPT:") {
                Some(rest) => (DecisionKind::Accept, rest),
                None => (DecisionKind::Reject, line.strip_prefix("REJECT:")?),
            };
            DeciderDecision::new(kind, rest)
        })
        .collect();
    if decisions.is_empty() {
        return Err(UnparseableDecision);
    }
    Ok(decisions)
}

/// True when some line of the reply is exactly `[DONE]` (surrounding
/// whitespace ignored).
pub fn is_done(reply: &str) -> bool {
    reply.lines().any(|l| l.trim() == DONE_SENTINEL)
}

/// Text of the last `ANSWER:` line, if any.
pub fn parse_answer_line(reply: &str) -> Option<String> {
    reply
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("ANSWER:"))
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(String::from)
}

/// Maps an answer such as `C`, `C.` or `(C) Metformin` to its option letter,
/// if that letter is one of `options`.
pub fn choice_letter(answer: &str, options: &BTreeMap<String, String>) -> Option<String> {
    let s = answer.trim().trim_start_matches('(');
    let mut chars = s.chars();
    let first = chars.next()?;
    if !first.is_ascii_alphabetic() || chars.next().is_some_and(char::is_alphanumeric) {
        return None;
    }
    let letter = first.to_ascii_uppercase().to_string();
    options.contains_key(&letter).then_some(letter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_accept() {
        assert_eq!(
            parse_decider_reply("ACCEPT: note penicillin allergy").unwrap(),
            [DeciderDecision::accept("note penicillin allergy")]
        );
    }

    #[test]
    fn mixed_lines_keep_order() {
        let d = parse_decider_reply("REJECT: already captured\nACCEPT: add UTI history").unwrap();
        assert_eq!(
            d,
            [DeciderDecision::reject("already captured"), DeciderDecision::accept("add UTI history")]
        );
    }

    #[test]
    fn prose_is_unparseable() {
        assert_eq!(parse_decider_reply("I think we're done here."), Err(UnparseableDecision));
        assert_eq!(parse_decider_reply("ACCEPT:   "), Err(UnparseableDecision));
        assert_eq!(parse_decider_reply("accept: lowercase"), Err(UnparseableDecision));
    }

    #[test]
    fn done_needs_its_own_line() {
        assert!(is_done("[DONE]"));
        assert!(is_done("All covered.\n  [DONE]  \n"));
        assert!(!is_done("I am [DONE] now"));
        assert!(!is_done("[done]"));
    }

    #[test]
    fn answer_line() {
        assert_eq!(
            parse_answer_line("Reasoning...\nANSWER: Meta-analysis\n"),
            Some("Meta-analysis".into())
        );
        assert_eq!(parse_answer_line("no answer here"), None);
    }

    #[test]
    fn letters() {
        let options: BTreeMap<String, String> = [("A", "x"), ("B", "y"), ("C", "z")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        assert_eq!(choice_letter("C", &options).as_deref(), Some("C"));
        assert_eq!(choice_letter(" b. ", &options).as_deref(), Some("B"));
        assert_eq!(choice_letter("(A) x", &options).as_deref(), Some("A"));
        assert_eq!(choice_letter("E", &options), None);
        assert_eq!(choice_letter("Aspirin", &options), None);
        assert_eq!(choice_letter("", &options), None);
    }
}
