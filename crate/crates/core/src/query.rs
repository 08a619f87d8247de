//! Interaction queries: free text reduced to an (action, object) pair.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionQuery {
    pub action: String,
    pub object: String,
    pub raw_text: String,
    /// Set when `action` is not part of the configured action vocabulary.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unknown_action: bool,
}

impl InteractionQuery {
    /// Builds a query from already-separated parts, flagging actions outside `vocab`.
    pub fn from_parts(
        action: &str,
        object: &str,
        raw_text: &str,
        vocab: &QueryVocabulary,
    ) -> Result<Self, ParseError> {
        let action = normalize_text(action);
        let object = normalize_text(object);
        if action.is_empty() {
            return Err(ParseError::NoActionFound { object: Some(object) });
        }
        if object.is_empty() {
            return Err(ParseError::NoObjectFound { action });
        }
        let action = vocab.canonical_action(&action).unwrap_or(action);
        Ok(Self {
            unknown_action: !vocab.actions.contains(&action),
            action,
            object,
            raw_text: raw_text.to_string(),
        })
    }

    /// Tokens fed to the text encoder: action words followed by object words.
    pub fn tokens(&self) -> Vec<String> {
        self.action
            .split_whitespace()
            .chain(self.object.split_whitespace())
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no known action in query")]
    NoActionFound { object: Option<String> },
    #[error("no known object in query (action '{action}')")]
    NoObjectFound { action: String },
}

impl ParseError {
    pub fn action(&self) -> Option<&str> {
        match self {
            ParseError::NoObjectFound { action } => Some(action),
            ParseError::NoActionFound { .. } => None,
        }
    }
}

/// Action and object phrases a query may mention.
///
/// `aliases` maps multi-word phrases ("pour water") to canonical action tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryVocabulary {
    pub actions: BTreeSet<String>,
    pub objects: BTreeSet<String>,
    pub aliases: BTreeMap<String, String>,
}

impl QueryVocabulary {
    pub fn new<A, O, S>(actions: A, objects: O, aliases: BTreeMap<String, String>) -> Self
    where
        A: IntoIterator<Item = S>,
        O: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            actions: actions.into_iter().map(|s| normalize_text(s.as_ref())).collect(),
            objects: objects.into_iter().map(|s| normalize_text(s.as_ref())).collect(),
            aliases: aliases
                .into_iter()
                .map(|(k, v)| (normalize_text(&k), normalize_text(&v)))
                .collect(),
        }
    }

    fn canonical_action(&self, phrase: &str) -> Option<String> {
        if self.actions.contains(phrase) {
            Some(phrase.to_string())
        } else {
            self.aliases.get(phrase).cloned()
        }
    }

    /// Action phrases as token lists with their canonical form, longest first.
    fn action_phrases(&self) -> Vec<(Vec<&str>, &str)> {
        let mut phrases: Vec<(Vec<&str>, &str)> = self
            .actions
            .iter()
            .map(|a| (a.split_whitespace().collect(), a.as_str()))
            .chain(
                self.aliases
                    .iter()
                    .map(|(k, v)| (k.split_whitespace().collect(), v.as_str())),
            )
            .collect();
        sort_longest_first(&mut phrases);
        phrases
    }

    fn object_phrases(&self) -> Vec<(Vec<&str>, &str)> {
        let mut phrases: Vec<(Vec<&str>, &str)> = self
            .objects
            .iter()
            .map(|o| (o.split_whitespace().collect(), o.as_str()))
            .collect();
        sort_longest_first(&mut phrases);
        phrases
    }
}

fn sort_longest_first(phrases: &mut [(Vec<&str>, &str)]) {
    phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
}

/// Lowercases, drops apostrophes, turns other punctuation into spaces and
/// collapses whitespace.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            out.push(ch);
        } else if ch == '\'' || ch == '\u{2019}' {
            continue;
        } else {
            out.push(' ');
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Finds the earliest phrase occurrence in `tokens`, skipping `taken` positions.
/// Returns (start, len, canonical).
fn find_first<'v>(
    tokens: &[&str],
    phrases: &[(Vec<&str>, &'v str)],
    taken: &[bool],
) -> Option<(usize, usize, &'v str)> {
    for start in 0..tokens.len() {
        for (words, canonical) in phrases {
            let end = start + words.len();
            if words.is_empty() || end > tokens.len() {
                continue;
            }
            if taken[start..end].iter().any(|&t| t) {
                continue;
            }
            if tokens[start..end] == words[..] {
                return Some((start, words.len(), canonical));
            }
        }
    }
    None
}

/// Extracts the first vocabulary action (longest phrase wins at a position)
/// and the first vocabulary object not overlapping it.
pub fn parse_query(text: &str, vocab: &QueryVocabulary) -> Result<InteractionQuery, ParseError> {
    let normalized = normalize_text(text);
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    let mut taken = vec![false; tokens.len()];

    let action = find_first(&tokens, &vocab.action_phrases(), &taken).map(|(s, n, a)| {
        taken[s..s + n].iter_mut().for_each(|t| *t = true);
        a.to_string()
    });
    let object = find_first(&tokens, &vocab.object_phrases(), &taken).map(|(_, _, o)| o.to_string());

    match (action, object) {
        (Some(action), Some(object)) => Ok(InteractionQuery {
            unknown_action: !vocab.actions.contains(&action),
            action,
            object,
            raw_text: text.to_string(),
        }),
        (Some(action), None) => Err(ParseError::NoObjectFound { action }),
        (None, object) => Err(ParseError::NoActionFound { object }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> QueryVocabulary {
        let aliases = [("pour water", "pour"), ("lay down", "lay"), ("sit on", "sit")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        QueryVocabulary::new(
            ["sit", "open", "pour", "lay", "grasp", "give", "take", "support"],
            ["sofa", "chair", "bottle", "vase", "bed", "table", "coffee table", "apple", "water"],
            aliases,
        )
    }

    #[test]
    fn direct_hit() {
        let q = parse_query("open the bottle", &vocab()).unwrap();
        assert_eq!((q.action.as_str(), q.object.as_str()), ("open", "bottle"));
        assert_eq!(q.raw_text, "open the bottle");
        assert!(!q.unknown_action);
    }

    #[test]
    fn missing_object() {
        assert_eq!(
            parse_query("Where can I sit?", &vocab()),
            Err(ParseError::NoObjectFound { action: "sit".into() })
        );
    }

    #[test]
    fn missing_action() {
        assert_eq!(
            parse_query("the sofa, please", &vocab()),
            Err(ParseError::NoActionFound { object: Some("sofa".into()) })
        );
    }

    #[test]
    fn multiword_alias_wins_and_is_not_reused_as_object() {
        let q = parse_query("Could you pour water into the vase", &vocab()).unwrap();
        assert_eq!((q.action.as_str(), q.object.as_str()), ("pour", "vase"));
        let q = parse_query("lay down on the bed", &vocab()).unwrap();
        assert_eq!((q.action.as_str(), q.object.as_str()), ("lay", "bed"));
    }

    #[test]
    fn longest_object_phrase() {
        let q = parse_query("support the coffee table", &vocab()).unwrap();
        assert_eq!(q.object, "coffee table");
        assert_eq!(q.tokens(), vec!["support", "coffee", "table"]);
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let a = parse_query("Give me an APPLE!", &vocab()).unwrap();
        let b = parse_query("give me an apple", &vocab()).unwrap();
        assert_eq!((a.action, a.object), (b.action, b.object));
    }

    #[test]
    fn from_parts_flags_unknown_action() {
        let q = InteractionQuery::from_parts("Fly", "sofa", "fly the sofa", &vocab()).unwrap();
        assert!(q.unknown_action);
        let q = InteractionQuery::from_parts("pour water", "vase", "", &vocab()).unwrap();
        assert_eq!(q.action, "pour");
        assert!(!q.unknown_action);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Children's   Room?! "), "childrens room");
    }
}
