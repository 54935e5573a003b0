//! Prompt templates for pairwise answer evaluation.
//!
//! Four settings: single- or multi-turn, each with or without reference
//! answers. Rendering is a pure function of its inputs, so a fixed input
//! always yields byte-identical prompt text; the first answer passed in is
//! always presented as "Assistant A".

use peerrank_core::{Answer, Question};

use crate::{GatewayError, Result};

/// Which evaluation template to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Single,
    SingleRef,
    Multi,
    MultiRef,
}

impl PromptKind {
    /// Picks the template matching a question's shape: multi-turn when it
    /// has several turns, referenced when it carries reference answers.
    pub fn infer(question: &Question) -> PromptKind {
        match (question.is_multi_turn(), question.reference.is_some()) {
            (false, false) => PromptKind::Single,
            (false, true) => PromptKind::SingleRef,
            (true, false) => PromptKind::Multi,
            (true, true) => PromptKind::MultiRef,
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, PromptKind::SingleRef | PromptKind::MultiRef)
    }

    pub fn is_multi_turn(self) -> bool {
        matches!(self, PromptKind::Multi | PromptKind::MultiRef)
    }
}

const VERDICT_FORMAT: &str = "Output your final verdict by strictly following this format: \
\"[[A]]\" if assistant A is better, \"[[B]]\" if assistant B is better, and \"[[C]]\" for a tie.";

fn system_text(kind: PromptKind) -> String {
    let scope = match kind {
        PromptKind::Single | PromptKind::Multi => {
            "to the user question displayed below".to_string()
        }
        PromptKind::SingleRef => "to the user question displayed below, \
with reference to the provided reference answers"
            .to_string(),
        PromptKind::MultiRef => "to the user question displayed below, \
in comparison to the reference answers"
            .to_string(),
    };
    format!(
        "Please act as a judge and evaluate the quality of the responses provided by \
two AI assistants {scope}. You do not need to explain, just give your judgment. {VERDICT_FORMAT}"
    )
}

fn conversation_block(label: &str, speaker: &str, turns: &[String], replies: &[String]) -> String {
    let mut out = format!("{label}\n");
    for (question, reply) in turns.iter().zip(replies) {
        out.push_str(&format!("\nUser: {question}\n\n{speaker}: {reply}\n"));
    }
    out
}

/// Renders the (system, user) message pair for one battle. Inputs must fit
/// the template: referenced kinds need reference answers (one per turn),
/// multi-turn kinds need at least two turns, single-turn kinds exactly one.
pub fn render_prompt(
    kind: PromptKind,
    question: &Question,
    answer_a: &Answer,
    answer_b: &Answer,
) -> Result<(String, String)> {
    let reference: Option<&[String]> = question.reference.as_deref();
    if kind.needs_reference() {
        let turns = reference.map(<[String]>::len).unwrap_or(0);
        if turns < question.turns.len() {
            return Err(GatewayError::Argument(format!(
                "template needs {} reference answer(s), question {} has {turns}",
                question.turns.len(),
                question.question_id
            )));
        }
    }
    for (name, answer) in [("A", answer_a), ("B", answer_b)] {
        if answer.turns.len() < question.turns.len() {
            return Err(GatewayError::Argument(format!(
                "assistant {name} answered {} turn(s) of question {}, expected {}",
                answer.turns.len(),
                question.question_id,
                question.turns.len()
            )));
        }
    }
    if kind.is_multi_turn() && question.turns.len() < 2 {
        return Err(GatewayError::Argument(format!(
            "multi-turn template needs at least 2 turns, question {} has {}",
            question.question_id,
            question.turns.len()
        )));
    }
    if !kind.is_multi_turn() && question.turns.len() != 1 {
        return Err(GatewayError::Argument(format!(
            "single-turn template needs exactly 1 turn, question {} has {}",
            question.question_id,
            question.turns.len()
        )));
    }

    let user = match kind {
        PromptKind::Single => format!(
            "User Question: {}\n\nAssistant A's Answer: {}\n\nAssistant B's Answer: {}\n",
            question.turns[0], answer_a.turns[0], answer_b.turns[0]
        ),
        PromptKind::SingleRef => format!(
            "User Question: {}\n\nReference Answer: {}\n\n\
Assistant A's Answer: {}\n\nAssistant B's Answer: {}\n",
            question.turns[0],
            reference.expect("checked above")[0],
            answer_a.turns[0],
            answer_b.turns[0]
        ),
        PromptKind::Multi | PromptKind::MultiRef => {
            let mut user = String::new();
            if kind == PromptKind::MultiRef {
                user.push_str(&conversation_block(
                    "Reference Answer",
                    "Reference answer",
                    &question.turns,
                    reference.expect("checked above"),
                ));
                user.push('\n');
            }
            user.push_str(&conversation_block(
                "Assistant A's Conversation with User:",
                "Assistant A",
                &question.turns,
                &answer_a.turns,
            ));
            user.push('\n');
            user.push_str(&conversation_block(
                "Assistant B's Conversation with User:",
                "Assistant B",
                &question.turns,
                &answer_b.turns,
            ));
            user
        }
    };
    Ok((system_text(kind), user))
}

#[cfg(test)]
mod tests {
    use super::*;
    use peerrank_core::ModelId;

    fn question(turns: &[&str], reference: Option<&[&str]>) -> Question {
        Question {
            question_id: 1,
            category: "test".into(),
            turns: turns.iter().map(|s| s.to_string()).collect(),
            reference: reference.map(|r| r.iter().map(|s| s.to_string()).collect()),
        }
    }

    fn answer(model: &str, turns: &[&str]) -> Answer {
        Answer {
            question_id: 1,
            model: ModelId::new(model).unwrap(),
            turns: turns.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn single_template_content() {
        let q = question(&["What is 2+2?"], None);
        let a = answer("x", &["4"]);
        let b = answer("y", &["5"]);
        let (system, user) = render_prompt(PromptKind::Single, &q, &a, &b).unwrap();
        assert!(system.contains("Please act as a judge"));
        assert!(system.contains("\"[[A]]\" if assistant A is better"));
        assert!(system.contains("\"[[C]]\" for a tie"));
        assert!(user.contains("User Question: What is 2+2?"));
        assert!(user.contains("Assistant A's Answer: 4"));
        assert!(user.contains("Assistant B's Answer: 5"));
        assert!(!user.contains("Reference"));
    }

    #[test]
    fn single_ref_template_contains_reference_section() {
        let q = question(&["What is 2+2?"], Some(&["4"]));
        let a = answer("x", &["4"]);
        let b = answer("y", &["22"]);
        let (system, user) = render_prompt(PromptKind::SingleRef, &q, &a, &b).unwrap();
        assert!(system.contains("with reference to the provided reference answers"));
        assert!(user.contains("Reference Answer: 4"));
    }

    #[test]
    fn multi_template_renders_every_turn_for_both_assistants() {
        let q = question(&["first question", "second question"], None);
        let a = answer("x", &["a1", "a2"]);
        let b = answer("y", &["b1", "b2"]);
        let (_, user) = render_prompt(PromptKind::Multi, &q, &a, &b).unwrap();
        assert!(user.contains("Assistant A's Conversation with User:"));
        assert!(user.contains("Assistant B's Conversation with User:"));
        assert_eq!(user.matches("User: first question").count(), 2);
        assert_eq!(user.matches("User: second question").count(), 2);
        assert!(user.contains("Assistant A: a2"));
        assert!(user.contains("Assistant B: b1"));
    }

    #[test]
    fn multi_ref_template_prepends_reference_conversation() {
        let q = question(&["q1", "q2"], Some(&["r1", "r2"]));
        let a = answer("x", &["a1", "a2"]);
        let b = answer("y", &["b1", "b2"]);
        let (system, user) = render_prompt(PromptKind::MultiRef, &q, &a, &b).unwrap();
        assert!(system.contains("in comparison to the reference answers"));
        assert!(user.starts_with("Reference Answer\n"));
        assert!(user.contains("Reference answer: r1"));
        assert!(user.contains("Reference answer: r2"));
        let ref_pos = user.find("Reference answer: r1").unwrap();
        let a_pos = user.find("Assistant A's Conversation").unwrap();
        assert!(ref_pos < a_pos);
    }

    #[test]
    fn rendering_is_byte_identical_across_calls() {
        let q = question(&["q1", "q2"], Some(&["r1", "r2"]));
        let a = answer("x", &["a1", "a2"]);
        let b = answer("y", &["b1", "b2"]);
        let first = render_prompt(PromptKind::MultiRef, &q, &a, &b).unwrap();
        let second = render_prompt(PromptKind::MultiRef, &q, &a, &b).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn missing_reference_is_an_argument_error() {
        let q = question(&["q"], None);
        let a = answer("x", &["a"]);
        let b = answer("y", &["b"]);
        assert!(matches!(
            render_prompt(PromptKind::SingleRef, &q, &a, &b),
            Err(GatewayError::Argument(_))
        ));
    }

    #[test]
    fn turn_shape_mismatches_are_argument_errors() {
        let q = question(&["q1", "q2"], None);
        let short = answer("x", &["a1"]);
        let full = answer("y", &["b1", "b2"]);
        assert!(matches!(
            render_prompt(PromptKind::Multi, &q, &short, &full),
            Err(GatewayError::Argument(_))
        ));
        let single = question(&["q"], None);
        let a = answer("x", &["a"]);
        let b = answer("y", &["b"]);
        assert!(matches!(
            render_prompt(PromptKind::Multi, &single, &a, &b),
            Err(GatewayError::Argument(_))
        ));
    }

    #[test]
    fn kind_inference_follows_question_shape() {
        assert_eq!(PromptKind::infer(&question(&["q"], None)), PromptKind::Single);
        assert_eq!(
            PromptKind::infer(&question(&["q"], Some(&["r"]))),
            PromptKind::SingleRef
        );
        assert_eq!(PromptKind::infer(&question(&["q", "q2"], None)), PromptKind::Multi);
        assert_eq!(
            PromptKind::infer(&question(&["q", "q2"], Some(&["r", "r2"]))),
            PromptKind::MultiRef
        );
    }
}
