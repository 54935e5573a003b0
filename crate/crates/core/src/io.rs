//! Flat-file formats: `questions.jsonl`, `answers.jsonl`, `reviews.jsonl`,
//! model registries, rankings, weights, and leaderboards.
//!
//! All dataset files are line-delimited JSON with UTF-8 text. Multi-turn
//! text fields serialize as a JSON array of per-turn strings and a plain
//! string when there is a single turn.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Answer, ModelId, ModelRegistry, Outcome, Question, QuestionSet, Ranking, ReviewDataset,
    ReviewRecord, ScoreVector,
};
use crate::scalar::Real;

/// Winner column of a review row: one of the two contestants or a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameWinner {
    #[serde(rename = "model_1")]
    Model1,
    #[serde(rename = "model_2")]
    Model2,
    #[serde(rename = "tie")]
    Tie,
}

/// One line of `reviews.jsonl`: the same pair judged in both presentation
/// orders (`g1_winner` forward, `g2_winner` reversed) by one judge model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReviewRow {
    pub question_id: u64,
    pub model_1: ModelId,
    pub model_2: ModelId,
    pub g1_winner: GameWinner,
    pub g2_winner: GameWinner,
    pub judge: ModelId,
}

/// Collapses the two presentation-order verdicts into one outcome: an agreed
/// winner stands, any disagreement or tie verdict becomes a tie. Judging in
/// both orders and discarding order-sensitive verdicts cancels position bias.
pub fn aggregate_dual_order(g1_winner: GameWinner, g2_winner: GameWinner) -> Outcome {
    match (g1_winner, g2_winner) {
        (GameWinner::Model1, GameWinner::Model1) => Outcome::FirstWins,
        (GameWinner::Model2, GameWinner::Model2) => Outcome::SecondWins,
        _ => Outcome::Tie,
    }
}

/// Splits an aggregated outcome back into the agreeing winner pair, the
/// inverse of [`aggregate_dual_order`] on its image.
pub fn outcome_to_winner_pair(outcome: Outcome) -> (GameWinner, GameWinner) {
    match outcome {
        Outcome::FirstWins => (GameWinner::Model1, GameWinner::Model1),
        Outcome::SecondWins => (GameWinner::Model2, GameWinner::Model2),
        Outcome::Tie => (GameWinner::Tie, GameWinner::Tie),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TextOrTurns {
    Text(String),
    Turns(Vec<String>),
}

impl TextOrTurns {
    fn into_turns(self) -> Vec<String> {
        match self {
            TextOrTurns::Text(t) => vec![t],
            TextOrTurns::Turns(ts) => ts,
        }
    }

    fn from_turns(turns: &[String]) -> TextOrTurns {
        if turns.len() == 1 {
            TextOrTurns::Text(turns[0].clone())
        } else {
            TextOrTurns::Turns(turns.to_vec())
        }
    }

    fn is_blank(&self) -> bool {
        match self {
            TextOrTurns::Text(t) => t.is_empty(),
            TextOrTurns::Turns(ts) => ts.is_empty(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct QuestionRow {
    question_id: u64,
    category: String,
    question: TextOrTurns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<TextOrTurns>,
}

#[derive(Serialize, Deserialize)]
struct AnswerRow {
    question_id: u64,
    answer_id: u64,
    model_id: String,
    answer: TextOrTurns,
}

#[derive(Serialize, Deserialize)]
struct ReviewRow {
    question_id: u64,
    model_1: String,
    model_2: String,
    g1_winner: GameWinner,
    g2_winner: GameWinner,
    judge: String,
}

fn parse_line<T: serde::de::DeserializeOwned>(line: &str, line_no: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

fn non_blank_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, line)| Ok((i + 1, line?)))
        .filter(|item| !matches!(item, Ok((_, line)) if line.trim().is_empty()))
}

/// Reads `questions.jsonl`. A missing, null, or empty `reference` maps to
/// absent; duplicate ids are rejected.
pub fn read_question_set(reader: impl BufRead) -> Result<QuestionSet> {
    let mut questions = Vec::new();
    for item in non_blank_lines(reader) {
        let (line_no, line) = item?;
        let row: QuestionRow = parse_line(&line, line_no)?;
        let reference = row
            .reference
            .filter(|r| !r.is_blank())
            .map(TextOrTurns::into_turns);
        let turns = row.question.into_turns();
        if turns.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "question has no turns".into(),
            });
        }
        questions.push(Question {
            question_id: row.question_id,
            category: row.category,
            turns,
            reference,
        });
    }
    QuestionSet::new(questions)
}

pub fn write_question_set(set: &QuestionSet, mut writer: impl Write) -> Result<()> {
    for q in set.questions() {
        let row = QuestionRow {
            question_id: q.question_id,
            category: q.category.clone(),
            question: TextOrTurns::from_turns(&q.turns),
            reference: q.reference.as_deref().map(TextOrTurns::from_turns),
        };
        writeln!(writer, "{}", serde_json::to_string(&row)?)?;
    }
    Ok(())
}

/// Reads `answers.jsonl`; every `(question_id, model_id)` pair must be unique.
pub fn read_answers(reader: impl BufRead, registry: &ModelRegistry) -> Result<Vec<Answer>> {
    let mut answers = Vec::new();
    let mut seen = BTreeSet::new();
    for item in non_blank_lines(reader) {
        let (line_no, line) = item?;
        let row: AnswerRow = parse_line(&line, line_no)?;
        let model = ModelId::new(row.model_id)?;
        if !registry.contains(&model) {
            return Err(Error::Schema(format!(
                "line {line_no}: model {model:?} not in registry"
            )));
        }
        if !seen.insert((row.question_id, model.clone())) {
            return Err(Error::Schema(format!(
                "line {line_no}: duplicate answer for question {} by {model:?}",
                row.question_id
            )));
        }
        answers.push(Answer {
            question_id: row.question_id,
            model,
            turns: row.answer.into_turns(),
        });
    }
    Ok(answers)
}

pub fn write_answers(answers: &[Answer], mut writer: impl Write) -> Result<()> {
    for (i, a) in answers.iter().enumerate() {
        let row = AnswerRow {
            question_id: a.question_id,
            answer_id: i as u64 + 1,
            model_id: a.model.as_str().to_string(),
            answer: TextOrTurns::from_turns(&a.turns),
        };
        writeln!(writer, "{}", serde_json::to_string(&row)?)?;
    }
    Ok(())
}

/// Reads `reviews.jsonl` against a known registry. Unless
/// `allow_self_review` is set (bias studies only), a judge matching either
/// contestant is rejected.
pub fn read_review_rows(
    reader: impl BufRead,
    registry: &ModelRegistry,
    allow_self_review: bool,
) -> Result<Vec<RawReviewRow>> {
    let mut rows = Vec::new();
    for item in non_blank_lines(reader) {
        let (line_no, line) = item?;
        let row: ReviewRow = parse_line(&line, line_no)?;
        let model_1 = ModelId::new(row.model_1)?;
        let model_2 = ModelId::new(row.model_2)?;
        let judge = ModelId::new(row.judge)?;
        for m in [&model_1, &model_2, &judge] {
            if !registry.contains(m) {
                return Err(Error::Schema(format!(
                    "line {line_no}: model {m:?} not in registry"
                )));
            }
        }
        if model_1 == model_2 {
            return Err(Error::Schema(format!(
                "line {line_no}: contestants must differ, both are {model_1:?}"
            )));
        }
        if !allow_self_review && (judge == model_1 || judge == model_2) {
            return Err(Error::Schema(format!(
                "line {line_no}: judge {judge:?} reviews its own battle"
            )));
        }
        rows.push(RawReviewRow {
            question_id: row.question_id,
            model_1,
            model_2,
            g1_winner: row.g1_winner,
            g2_winner: row.g2_winner,
            judge,
        });
    }
    Ok(rows)
}

pub fn write_review_rows(rows: &[RawReviewRow], mut writer: impl Write) -> Result<()> {
    for r in rows {
        let row = ReviewRow {
            question_id: r.question_id,
            model_1: r.model_1.as_str().to_string(),
            model_2: r.model_2.as_str().to_string(),
            g1_winner: r.g1_winner,
            g2_winner: r.g2_winner,
            judge: r.judge.as_str().to_string(),
        };
        writeln!(writer, "{}", serde_json::to_string(&row)?)?;
    }
    Ok(())
}

/// Aggregates raw rows into a review dataset via [`aggregate_dual_order`].
pub fn dataset_from_rows(
    rows: &[RawReviewRow],
    registry: &ModelRegistry,
    allow_self_review: bool,
) -> Result<ReviewDataset> {
    let records = rows
        .iter()
        .map(|r| ReviewRecord {
            question_id: r.question_id,
            model_a: r.model_1.clone(),
            model_b: r.model_2.clone(),
            outcome: aggregate_dual_order(r.g1_winner, r.g2_winner),
            reviewer: r.judge.clone(),
        })
        .collect();
    if allow_self_review {
        ReviewDataset::new_with_self_reviews(records, registry.clone())
    } else {
        ReviewDataset::new(records, registry.clone())
    }
}

/// Expands an aggregated dataset back into raw rows with both presentation
/// orders agreeing, so `dataset_from_rows(dataset_to_rows(d)) == d`.
pub fn dataset_to_rows(dataset: &ReviewDataset) -> Vec<RawReviewRow> {
    dataset
        .records()
        .iter()
        .map(|r| {
            let (g1, g2) = outcome_to_winner_pair(r.outcome);
            RawReviewRow {
                question_id: r.question_id,
                model_1: r.model_a.clone(),
                model_2: r.model_b.clone(),
                g1_winner: g1,
                g2_winner: g2,
                judge: r.reviewer.clone(),
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    models: Vec<String>,
}

pub fn read_registry(reader: impl BufRead) -> Result<ModelRegistry> {
    let file: RegistryFile = serde_json::from_reader(reader)?;
    ModelRegistry::from_names(file.models)
}

pub fn write_registry(registry: &ModelRegistry, mut writer: impl Write) -> Result<()> {
    let file = RegistryFile {
        models: registry.iter().map(|m| m.as_str().to_string()).collect(),
    };
    writeln!(writer, "{}", serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RankingFile {
    order: Vec<String>,
}

pub fn read_ranking(reader: impl BufRead) -> Result<Ranking> {
    let file: RankingFile = serde_json::from_reader(reader)?;
    Ranking::from_order(
        file.order
            .into_iter()
            .map(ModelId::new)
            .collect::<Result<Vec<_>>>()?,
    )
}

pub fn write_ranking(ranking: &Ranking, mut writer: impl Write) -> Result<()> {
    let file = RankingFile {
        order: ranking.order().iter().map(|m| m.as_str().to_string()).collect(),
    };
    writeln!(writer, "{}", serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_weights(reader: impl BufRead) -> Result<crate::Weights> {
    let map: std::collections::BTreeMap<String, f64> = serde_json::from_reader(reader)?;
    let weights = map
        .into_iter()
        .map(|(k, v)| Ok((ModelId::new(k)?, v)))
        .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
    crate::model::ConfidenceWeights::new(weights)
}

pub fn write_weights(weights: &crate::Weights, mut writer: impl Write) -> Result<()> {
    let map: std::collections::BTreeMap<&str, f64> =
        weights.iter().map(|(id, w)| (id.as_str(), w)).collect();
    writeln!(writer, "{}", serde_json::to_string_pretty(&map)?)?;
    Ok(())
}

/// One leaderboard row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub model_id: String,
    pub grade: f64,
    pub eliminated: bool,
}

/// A rendered leaderboard: ranked models with grades and elimination flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    /// Builds rows from a ranking, its scores, and the set of eliminated
    /// reviewers.
    pub fn build<F: Real>(
        ranking: &Ranking,
        scores: &ScoreVector<F>,
        eliminated: &BTreeSet<ModelId>,
    ) -> Result<Leaderboard> {
        if ranking.is_empty() {
            return Err(Error::Schema("cannot build a leaderboard for zero models".into()));
        }
        let mut rows = Vec::with_capacity(ranking.len());
        for (i, id) in ranking.order().iter().enumerate() {
            let grade = scores
                .get(id)
                .ok_or_else(|| Error::Schema(format!("no score for ranked model {id:?}")))?
                .to_f64()
                .ok_or_else(|| Error::Schema(format!("score for {id:?} does not fit f64")))?;
            rows.push(LeaderboardRow {
                rank: i + 1,
                model_id: id.as_str().to_string(),
                grade,
                eliminated: eliminated.contains(id),
            });
        }
        Ok(Leaderboard { rows })
    }

    pub fn rows(&self) -> &[LeaderboardRow] {
        &self.rows
    }

    /// Columnar text form, one `#rank model | Grade: g` line per model,
    /// eliminated reviewers marked.
    pub fn write_text(&self, mut writer: impl Write) -> Result<()> {
        for row in &self.rows {
            let marker = if row.eliminated { " | Eliminated" } else { "" };
            writeln!(
                writer,
                "#{:<3} {} | Grade: {}{}",
                row.rank, row.model_id, row.grade, marker
            )?;
        }
        Ok(())
    }

    /// Machine-readable record form.
    pub fn write_json(&self, mut writer: impl Write) -> Result<()> {
        writeln!(writer, "{}", serde_json::to_string_pretty(&self.rows)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConfidenceWeights;
    use proptest::prelude::*;

    fn id(s: &str) -> ModelId {
        ModelId::new(s).unwrap()
    }

    fn registry() -> ModelRegistry {
        ModelRegistry::from_names(["alpha", "beta", "gamma"]).unwrap()
    }

    #[test]
    fn question_reference_presence() {
        let data = concat!(
            r#"{"question_id":1,"category":"math","question":"2+2?","reference":"4"}"#,
            "\n",
            r#"{"question_id":2,"category":"writing","question":"a poem","reference":""}"#,
            "\n",
            r#"{"question_id":3,"category":"chat","question":"hi"}"#,
            "\n",
        );
        let set = read_question_set(data.as_bytes()).unwrap();
        assert_eq!(set.get(1).unwrap().reference, Some(vec!["4".to_string()]));
        assert_eq!(set.get(2).unwrap().reference, None);
        assert_eq!(set.get(3).unwrap().reference, None);
    }

    #[test]
    fn duplicate_question_id_is_schema_error() {
        let data = concat!(
            r#"{"question_id":1,"category":"math","question":"a"}"#,
            "\n",
            r#"{"question_id":1,"category":"math","question":"b"}"#,
            "\n",
        );
        assert!(matches!(read_question_set(data.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let data = concat!(
            r#"{"question_id":1,"category":"math","question":"a"}"#,
            "\n",
            "not json\n",
        );
        match read_question_set(data.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn multi_turn_question_round_trips() {
        let q = Question {
            question_id: 7,
            category: "roleplay".into(),
            turns: vec!["first".into(), "second".into()],
            reference: Some(vec!["r1".into(), "r2".into()]),
        };
        let set = QuestionSet::new(vec![q]).unwrap();
        let mut buf = Vec::new();
        write_question_set(&set, &mut buf).unwrap();
        assert_eq!(read_question_set(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn review_row_happy_path_and_aggregation() {
        let data = concat!(
            r#"{"question_id":1,"model_1":"alpha","model_2":"beta","g1_winner":"model_1","g2_winner":"model_1","judge":"gamma"}"#,
            "\n",
        );
        let rows = read_review_rows(data.as_bytes(), &registry(), false).unwrap();
        assert_eq!(rows.len(), 1);
        let ds = dataset_from_rows(&rows, &registry(), false).unwrap();
        assert_eq!(ds.records()[0].outcome, Outcome::FirstWins);
    }

    #[test]
    fn self_review_is_rejected_by_default() {
        let data = concat!(
            r#"{"question_id":1,"model_1":"alpha","model_2":"beta","g1_winner":"tie","g2_winner":"tie","judge":"alpha"}"#,
            "\n",
        );
        assert!(matches!(
            read_review_rows(data.as_bytes(), &registry(), false),
            Err(Error::Schema(_))
        ));
        assert!(read_review_rows(data.as_bytes(), &registry(), true).is_ok());
    }

    #[test]
    fn out_of_domain_winner_is_parse_error() {
        let data = concat!(
            r#"{"question_id":1,"model_1":"alpha","model_2":"beta","g1_winner":"model_3","g2_winner":"tie","judge":"gamma"}"#,
            "\n",
        );
        assert!(matches!(
            read_review_rows(data.as_bytes(), &registry(), false),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn dual_order_aggregation_table() {
        use GameWinner::*;
        assert_eq!(aggregate_dual_order(Model1, Model1), Outcome::FirstWins);
        assert_eq!(aggregate_dual_order(Model2, Model2), Outcome::SecondWins);
        assert_eq!(aggregate_dual_order(Tie, Tie), Outcome::Tie);
        assert_eq!(aggregate_dual_order(Model1, Model2), Outcome::Tie);
        assert_eq!(aggregate_dual_order(Model2, Model1), Outcome::Tie);
        assert_eq!(aggregate_dual_order(Model1, Tie), Outcome::Tie);
        assert_eq!(aggregate_dual_order(Tie, Model2), Outcome::Tie);
    }

    #[test]
    fn dual_order_depends_only_on_agreement_pattern() {
        use GameWinner::*;
        for g1 in [Model1, Model2, Tie] {
            for g2 in [Model1, Model2, Tie] {
                // Swapping which presentation order came first cannot change
                // the aggregated outcome.
                assert_eq!(aggregate_dual_order(g1, g2), aggregate_dual_order(g2, g1));
            }
        }
    }

    #[test]
    fn leaderboard_marks_eliminated_rows() {
        let reg = registry();
        let scores: ScoreVector<f64> = ScoreVector::new(
            [(id("alpha"), 2.0), (id("beta"), 3.0), (id("gamma"), 1.0)].into(),
        )
        .unwrap();
        let ranking = crate::model::ranking_from_scores(&scores, &reg).unwrap();
        let eliminated: BTreeSet<ModelId> = [id("gamma")].into();
        let lb = Leaderboard::build(&ranking, &scores, &eliminated).unwrap();
        assert_eq!(lb.rows().len(), 3);
        assert_eq!(lb.rows()[0].rank, 1);
        assert_eq!(lb.rows()[0].model_id, "beta");
        assert!(!lb.rows()[0].eliminated);
        assert!(lb.rows()[2].eliminated);

        let mut text = Vec::new();
        lb.write_text(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.contains("| Eliminated"));
        assert!(text.lines().count() == 3);
    }

    #[test]
    fn weights_round_trip() {
        let w: crate::Weights =
            ConfidenceWeights::new([(id("alpha"), 0.25), (id("beta"), 1.0)].into()).unwrap();
        let mut buf = Vec::new();
        write_weights(&w, &mut buf).unwrap();
        assert_eq!(read_weights(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn review_rows_round_trip_through_dataset() {
        let reg = registry();
        let records = vec![
            ReviewRecord {
                question_id: 1,
                model_a: id("alpha"),
                model_b: id("beta"),
                outcome: Outcome::SecondWins,
                reviewer: id("gamma"),
            },
            ReviewRecord {
                question_id: 2,
                model_a: id("beta"),
                model_b: id("gamma"),
                outcome: Outcome::Tie,
                reviewer: id("alpha"),
            },
        ];
        let ds = ReviewDataset::new(records, reg.clone()).unwrap();
        let rows = dataset_to_rows(&ds);
        let mut buf = Vec::new();
        write_review_rows(&rows, &mut buf).unwrap();
        let rows_back = read_review_rows(buf.as_slice(), &reg, false).unwrap();
        let ds_back = dataset_from_rows(&rows_back, &reg, false).unwrap();
        assert_eq!(ds, ds_back);
    }

    proptest! {
        #[test]
        fn question_set_round_trips(
            n in 1usize..8,
            seed in 0u64..1000,
        ) {
            let mut questions = Vec::new();
            for i in 0..n {
                let turns = if (seed + i as u64).is_multiple_of(3) {
                    vec![format!("turn-a-{i}"), format!("turn-b-{i}")]
                } else {
                    vec![format!("turn-{i}")]
                };
                let reference = if (seed + i as u64).is_multiple_of(2) {
                    Some(turns.iter().map(|t| format!("ref {t}")).collect())
                } else {
                    None
                };
                questions.push(Question {
                    question_id: i as u64,
                    category: format!("cat{}", i % 3),
                    turns,
                    reference,
                });
            }
            let set = QuestionSet::new(questions).unwrap();
            let mut buf = Vec::new();
            write_question_set(&set, &mut buf).unwrap();
            prop_assert_eq!(read_question_set(buf.as_slice()).unwrap(), set);
        }

        #[test]
        fn answers_round_trip(n in 1usize..6) {
            let reg = registry();
            let mut answers = Vec::new();
            for i in 0..n {
                answers.push(Answer {
                    question_id: i as u64,
                    model: id(["alpha", "beta", "gamma"][i % 3]),
                    turns: vec![format!("answer {i}")],
                });
            }
            let mut buf = Vec::new();
            write_answers(&answers, &mut buf).unwrap();
            prop_assert_eq!(read_answers(buf.as_slice(), &reg).unwrap(), answers);
        }
    }
}
