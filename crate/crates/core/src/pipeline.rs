//! Question answering end to end: abstraction, best parse per utterance,
//! interpretation and execution.

use std::sync::Arc;

use crate::abstraction::{abstract_question, Candidate, SynonymDict, TableIndex};
use crate::chart::{parse_best, Limits};
use crate::derivation::Derivation;
use crate::error::{Error, Result};
use crate::exec::{execute, ResultTable};
use crate::interpret::interpret;
use crate::scoring::NodeScorer;
use crate::sql::SqlQuery;
use crate::vocab::{English, Normalizer, Vocabulary};

/// Language resources and parser settings.
#[derive(Clone)]
pub struct Resources {
    pub vocab: Vocabulary,
    pub normalizer: Arc<dyn Normalizer>,
    pub synonyms: SynonymDict,
    pub limits: Limits,
    /// Add the abstraction score of an utterance to its parse score when
    /// choosing among utterances. Off by default: model score alone decides.
    pub weigh_annotations: bool,
}

impl Resources {
    pub fn english() -> Resources {
        Resources {
            vocab: Vocabulary::english(),
            normalizer: Arc::new(English),
            synonyms: SynonymDict::default(),
            limits: Limits::default(),
            weigh_annotations: false,
        }
    }

    pub fn abstract_question(&self, question: &str, index: &TableIndex) -> Vec<Candidate> {
        abstract_question(question, index, &self.vocab, self.normalizer.as_ref(), &self.synonyms)
    }
}

/// The chosen parse of one utterance.
#[derive(Clone, Debug)]
pub struct Parsed {
    /// Index into [`Answer::utterances`].
    pub utterance: usize,
    pub derivation: Derivation,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct Answer {
    pub utterances: Vec<Candidate>,
    pub best: Parsed,
    pub sql: SqlQuery,
    pub result: ResultTable,
}

/// Best derivation over all abstracted utterances of the question, in
/// descending score order (ties keep abstraction order).
pub fn rank_parses(
    utterances: &[Candidate],
    res: &Resources,
    scorer: &dyn NodeScorer,
) -> Result<Vec<Parsed>> {
    let mut out = Vec::new();
    let mut nothing = true;
    for (i, c) in utterances.iter().enumerate() {
        match parse_best(&c.utterance, &res.limits, scorer) {
            Ok((derivation, score)) => {
                nothing = false;
                let score = if res.weigh_annotations { score + c.score } else { score };
                out.push(Parsed { utterance: i, derivation, score });
            }
            Err(Error::NothingToParse) => {}
            Err(Error::NoValidTree) => nothing = false,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(if nothing { Error::NothingToParse } else { Error::NoValidTree });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.utterance.cmp(&b.utterance)));
    Ok(out)
}

/// Predict the SQL for a question without executing it.
pub fn predict(
    question: &str,
    index: &TableIndex,
    res: &Resources,
    scorer: &dyn NodeScorer,
) -> Result<(Vec<Candidate>, Parsed, SqlQuery)> {
    let utterances = res.abstract_question(question, index);
    let ranked = rank_parses(&utterances, res, scorer)?;
    let mut first_err = None;
    for p in ranked {
        match interpret(&p.derivation, &index.table) {
            Ok(sql) => return Ok((utterances, p, sql)),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or(Error::NoValidTree))
}

/// Predict and execute.
pub fn answer(question: &str, index: &TableIndex, res: &Resources, scorer: &dyn NodeScorer) -> Result<Answer> {
    let (utterances, best, sql) = predict(question, index, res, scorer)?;
    let result = execute(&sql, &index.table)?;
    Ok(Answer { utterances, best, sql, result })
}
