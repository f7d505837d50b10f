//! Chat prompt templates with `{system}`, `{user}` and `{assistant}` slots.
//!
//! Templates are split once into literal and slot segments, so text inserted
//! into a slot is never re-scanned for placeholders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFormat", into = "RawFormat")]
pub struct PromptFormat {
    id: String,
    template: String,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct RawFormat {
    id: String,
    template: String,
}

impl TryFrom<RawFormat> for PromptFormat {
    type Error = Error;
    fn try_from(raw: RawFormat) -> Result<Self> {
        PromptFormat::new(raw.id, raw.template)
    }
}

impl From<PromptFormat> for RawFormat {
    fn from(f: PromptFormat) -> Self {
        RawFormat {
            id: f.id,
            template: f.template,
        }
    }
}

fn parse(template: &str) -> Vec<Segment> {
    const SLOTS: [(&str, Slot); 3] = [
        ("{system}", Slot::System),
        ("{user}", Slot::User),
        ("{assistant}", Slot::Assistant),
    ];
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (tag, slot) in SLOTS {
            if let Some(after) = rest.strip_prefix(tag) {
                if !text.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut text)));
                }
                segments.push(Segment::Slot(slot));
                rest = after;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        text.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    segments
}

impl PromptFormat {
    pub fn new(id: impl Into<String>, template: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let template = template.into();
        let segments = parse(&template);
        let count = |s: Slot| {
            segments
                .iter()
                .filter(|seg| matches!(seg, Segment::Slot(x) if *x == s))
                .count()
        };
        for (name, slot) in [("{user}", Slot::User), ("{assistant}", Slot::Assistant)] {
            let n = count(slot);
            if n != 1 {
                return Err(Error::PromptFormat {
                    id,
                    reason: format!("{name} must appear exactly once, found {n}"),
                });
            }
        }
        let user_at = segments
            .iter()
            .position(|s| *s == Segment::Slot(Slot::User));
        let asst_at = segments
            .iter()
            .position(|s| *s == Segment::Slot(Slot::Assistant));
        if user_at > asst_at {
            return Err(Error::PromptFormat {
                id,
                reason: "{user} must precede {assistant}".into(),
            });
        }
        Ok(Self {
            id,
            template,
            segments,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Text preceding the assistant turn, i.e. the prompt a completion
    /// endpoint continues from. System slots are filled with `system` (empty
    /// when absent).
    pub fn render_prompt(&self, system: Option<&str>, user: &str) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(Slot::System) => out.push_str(system.unwrap_or("")),
                Segment::Slot(Slot::User) => out.push_str(user),
                Segment::Slot(Slot::Assistant) => break,
            }
        }
        out
    }

    /// Full conversation including the assistant reply.
    pub fn render(&self, system: Option<&str>, user: &str, assistant: &str) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(Slot::System) => out.push_str(system.unwrap_or("")),
                Segment::Slot(Slot::User) => out.push_str(user),
                Segment::Slot(Slot::Assistant) => out.push_str(assistant),
            }
        }
        out
    }

    pub fn llama2() -> Self {
        Self::new(
            "llama2",
            "<s>[INST] <<SYS>>\n{system}\n<</SYS>>\n\n{user} [/INST] {assistant} </s>",
        )
        .expect("valid builtin")
    }

    pub fn llama3() -> Self {
        Self::new(
            "llama3",
            "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n\n{system}<|eot_id|>\
             <|start_header_id|>user<|end_header_id|>\n\n{user}<|eot_id|>\
             <|start_header_id|>assistant<|end_header_id|>\n\n{assistant}<|eot_id|>",
        )
        .expect("valid builtin")
    }

    pub fn phi3() -> Self {
        Self::new(
            "phi3",
            "<|system|>\n{system}<|end|>\n<|user|>\n{user}<|end|>\n<|assistant|>\n{assistant}<|end|>",
        )
        .expect("valid builtin")
    }

    pub fn builtins() -> Vec<Self> {
        vec![Self::llama2(), Self::llama3(), Self::phi3()]
    }

    pub fn builtin(id: &str) -> Option<Self> {
        Self::builtins().into_iter().find(|f| f.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_must_appear_once() {
        assert!(PromptFormat::new("x", "{user}").is_err());
        assert!(PromptFormat::new("x", "{user}{user}{assistant}").is_err());
        assert!(PromptFormat::new("x", "{assistant}{user}").is_err());
        assert!(PromptFormat::new("x", "U: {user}\nA: {assistant}").is_ok());
    }

    #[test]
    fn rendering_does_not_rescan_inserted_text() {
        let f = PromptFormat::new("x", "[{system}] U: {user}\nA: {assistant}!").unwrap();
        assert_eq!(f.render_prompt(None, "what is {assistant}?"), "[] U: what is {assistant}?\nA: ");
        assert_eq!(
            f.render(Some("be brief"), "hi", "yo"),
            "[be brief] U: hi\nA: yo!"
        );
    }

    #[test]
    fn builtins_are_valid() {
        for f in PromptFormat::builtins() {
            let p = f.render_prompt(Some("sys"), "question");
            assert!(p.contains("question"));
            assert!(f.render(None, "q", "ANS").contains("ANS"));
        }
        assert_eq!(
            PromptFormat::phi3().render_prompt(None, "q"),
            "<|system|>\n<|end|>\n<|user|>\nq<|end|>\n<|assistant|>\n"
        );
        assert!(PromptFormat::builtin("llama3").is_some());
        assert!(PromptFormat::builtin("gpt").is_none());
    }

    #[test]
    fn serde_validates() {
        let f: PromptFormat =
            serde_json::from_str(r#"{"id":"a","template":"{user} -> {assistant}"}"#).unwrap();
        assert_eq!(f.render_prompt(None, "x"), "x -> ");
        assert!(serde_json::from_str::<PromptFormat>(r#"{"id":"a","template":"{user}"}"#).is_err());
    }
}
