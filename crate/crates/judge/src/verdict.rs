//! Verdict extraction from judge completions.

use crate::{GatewayError, Result};

/// A judge's verdict: assistant A better, assistant B better, or a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    A,
    B,
    C,
}

const MARKERS: [(&str, Verdict); 3] = [
    ("[[A]]", Verdict::A),
    ("[[B]]", Verdict::B),
    ("[[C]]", Verdict::C),
];

/// Extracts the verdict from a raw completion: the LAST occurrence of
/// `[[A]]`, `[[B]]`, or `[[C]]` wins, so a judge that reasons aloud and then
/// settles is read by its final word.
pub fn parse_verdict(text: &str) -> Result<Verdict> {
    let mut last: Option<(usize, Verdict)> = None;
    for (marker, verdict) in MARKERS {
        if let Some(pos) = text.rfind(marker) {
            if last.map(|(p, _)| pos > p).unwrap_or(true) {
                last = Some((pos, verdict));
            }
        }
    }
    last.map(|(_, v)| v).ok_or_else(|| {
        let snippet: String = text.chars().take(120).collect();
        GatewayError::InvalidVerdict(format!("no [[A]]/[[B]]/[[C]] marker in completion: {snippet:?}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_markers_parse() {
        assert_eq!(parse_verdict("[[A]]").unwrap(), Verdict::A);
        assert_eq!(parse_verdict("[[B]]").unwrap(), Verdict::B);
        assert_eq!(parse_verdict("[[C]]").unwrap(), Verdict::C);
    }

    #[test]
    fn last_occurrence_wins() {
        assert_eq!(
            parse_verdict("I lean [[A]] but finally [[B]]").unwrap(),
            Verdict::B
        );
        assert_eq!(parse_verdict("[[C]] ... no wait, [[A]]").unwrap(), Verdict::A);
    }

    #[test]
    fn missing_marker_is_invalid() {
        assert!(matches!(
            parse_verdict("both are fine"),
            Err(GatewayError::InvalidVerdict(_))
        ));
        assert!(matches!(
            parse_verdict("[[D]] [A] [[AB]]"),
            Err(GatewayError::InvalidVerdict(_))
        ));
    }

    #[test]
    fn marker_embedded_in_prose_parses() {
        let text = "The final verdict, strictly following the format, is: \"[[B]]\".";
        assert_eq!(parse_verdict(text).unwrap(), Verdict::B);
    }
}
