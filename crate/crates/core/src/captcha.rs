//! Reverse captchas: login challenges generated from stored triples.
//!
//! A challenge either asks the user to confirm a triple (the answer nudges its
//! confidence) or blanks one slot of it (the answer is counted in that slot's
//! consensus ledger). Login never depends on the answer being "right".

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusBook, ConsensusError, LedgerState, Slot, SlotKey};
use crate::graph::{Graph, GraphError, Object, Status, Triple};
use crate::ids::{ChallengeId, Counter, LedgerId, TripleId};
use crate::schema;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaptchaError {
    #[error("no live triple to build a challenge from")]
    EmptyStore,
    #[error("challenge {0} is closed")]
    ChallengeClosed(ChallengeId),
    #[error("unknown challenge {0}")]
    UnknownChallenge(ChallengeId),
    #[error("answer must not be empty")]
    EmptyAnswer,
    #[error("confirmatory answers are `yes` or `no`")]
    InvalidAnswer,
    #[error("unknown triple {0}")]
    UnknownTriple(TripleId),
    #[error("invalid captcha config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

pub type Result<T> = std::result::Result<T, CaptchaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ChallengeKind {
    FillBlank,
    Confirmatory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QuestionForm {
    ConceptCatechism,
    AttributeQuestion,
    RelationJudgment,
}

impl QuestionForm {
    /// Concept predicates ask what a thing is, literal objects are
    /// attributes, everything else is a relation between entities.
    pub fn for_triple(triple: &Triple) -> Self {
        if schema::is_concept_predicate(&triple.predicate) {
            QuestionForm::ConceptCatechism
        } else if matches!(triple.object, Object::Literal(_)) {
            QuestionForm::AttributeQuestion
        } else {
            QuestionForm::RelationJudgment
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Challenge {
    pub id: ChallengeId,
    pub kind: ChallengeKind,
    pub question_form: QuestionForm,
    pub target_triple_id: TripleId,
    pub blanked_slot: Option<Slot>,
    pub prompt: String,
    pub ledger_id: Option<LedgerId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CaptchaConfig {
    /// Top-N / bottom-N pool size.
    pub n: usize,
    pub p_fill_blank: f64,
    /// Chance that a fill-in-the-blank hides the subject instead of the object.
    pub p_blank_subject: f64,
    pub delta_consistent: f64,
    pub delta_inconsistent: f64,
    pub rng_seed: u64,
}

impl Default for CaptchaConfig {
    fn default() -> Self {
        CaptchaConfig {
            n: 5,
            p_fill_blank: 0.5,
            p_blank_subject: 0.0,
            delta_consistent: 0.1,
            delta_inconsistent: 0.1,
            rng_seed: 0,
        }
    }
}

impl CaptchaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CaptchaError::InvalidConfig("n must be at least 1"));
        }
        let prob = 0.0..=1.0;
        if !prob.contains(&self.p_fill_blank) || !prob.contains(&self.p_blank_subject) {
            return Err(CaptchaError::InvalidConfig("probabilities must lie in [0, 1]"));
        }
        if !(self.delta_consistent >= 0.0 && self.delta_inconsistent >= 0.0) {
            return Err(CaptchaError::InvalidConfig("deltas must be non-negative"));
        }
        Ok(())
    }
}

/// Live triples a challenge may target: the union of top-N and bottom-N.
pub fn candidate_pool(graph: &Graph, n: usize) -> Vec<TripleId> {
    let (top, bottom) = graph.top_and_bottom(n);
    top.into_iter().chain(bottom).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Renders the prompt for a challenge on `triple`.
pub fn render_prompt(
    graph: &Graph,
    triple: &Triple,
    kind: ChallengeKind,
    form: QuestionForm,
    slot: Option<Slot>,
) -> String {
    let subject = graph.entity(triple.subject).map(|e| e.label.as_str()).unwrap_or("");
    let predicate = triple.predicate.as_str();
    let object = graph.object_label(&triple.object);
    match (kind, slot) {
        (ChallengeKind::Confirmatory, _) => format!("Is it true that {subject} {predicate} {object}? (yes/no)"),
        (ChallengeKind::FillBlank, Some(Slot::Subject)) => format!("____ {predicate} {object} ?"),
        (ChallengeKind::FillBlank, _) => match form {
            QuestionForm::AttributeQuestion => format!("What is the {predicate} of {subject}?"),
            _ => format!("{subject} {predicate} ____ ?"),
        },
    }
}

pub fn render(challenge: &Challenge, graph: &Graph) -> Result<String> {
    let triple =
        graph.triple(challenge.target_triple_id).ok_or(CaptchaError::UnknownTriple(challenge.target_triple_id))?;
    Ok(render_prompt(graph, triple, challenge.kind, challenge.question_form, challenge.blanked_slot))
}

/// What a submission did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Outcome {
    /// Login proceeds regardless of the answer.
    pub proceed: bool,
    /// New confidence after a confirmatory answer.
    pub confidence: Option<f64>,
    /// Ledger answer key that was counted.
    pub recorded: Option<String>,
    /// Set when the ledger closed collection and opened its ambiguity vote.
    pub ambiguity_prompt: Option<String>,
}

/// Challenge registry. Challenges are immutable; each accepts one answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Captcha {
    pub config: CaptchaConfig,
    challenges: BTreeMap<ChallengeId, Challenge>,
    open: BTreeSet<ChallengeId>,
    next_challenge: Counter,
}

impl Captcha {
    pub fn new(config: CaptchaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Captcha { config, challenges: BTreeMap::new(), open: BTreeSet::new(), next_challenge: Counter::default() })
    }

    pub fn challenge(&self, id: ChallengeId) -> Option<&Challenge> {
        self.challenges.get(&id)
    }

    pub fn is_open(&self, id: ChallengeId) -> bool {
        self.open.contains(&id)
    }

    /// Draws a target uniformly from the top/bottom pool, then the kind, then
    /// the blank slot. A fill-in-the-blank whose slot ledger is no longer
    /// collecting degrades to a confirmatory question.
    pub fn generate<R: Rng + ?Sized>(
        &mut self,
        graph: &Graph,
        book: &mut ConsensusBook,
        rng: &mut R,
    ) -> Result<Challenge> {
        let pool = candidate_pool(graph, self.config.n);
        if pool.is_empty() {
            return Err(CaptchaError::EmptyStore);
        }
        let target = pool[rng.gen_range(0..pool.len())];
        let fill = rng.gen_bool(self.config.p_fill_blank);
        let slot = if rng.gen_bool(self.config.p_blank_subject) { Slot::Subject } else { Slot::Object };

        let triple = graph.triple(target).expect("pool holds stored triples");
        let form = QuestionForm::for_triple(triple);
        let mut kind = ChallengeKind::Confirmatory;
        let mut ledger = None;
        if fill {
            let key = SlotKey { triple: target, slot };
            let usable = book.ledger_for(key).is_none_or(|l| l.state == LedgerState::Collecting);
            if usable {
                kind = ChallengeKind::FillBlank;
                ledger = Some(book.open_ledger(key));
            }
        }
        Ok(self.issue(graph, target, kind, form, ledger.map(|l| (slot, l))))
    }

    /// Stores a fill-in-the-blank challenge for a known slot.
    pub fn issue_fill_blank(&mut self, graph: &Graph, book: &mut ConsensusBook, slot: SlotKey) -> Result<Challenge> {
        let triple = graph.triple(slot.triple).ok_or(CaptchaError::UnknownTriple(slot.triple))?;
        let form = QuestionForm::for_triple(triple);
        let ledger = book.open_ledger(slot);
        Ok(self.issue(graph, slot.triple, ChallengeKind::FillBlank, form, Some((slot.slot, ledger))))
    }

    /// Stores a confirmatory challenge for a known triple.
    pub fn issue_confirmatory(&mut self, graph: &Graph, triple: TripleId) -> Result<Challenge> {
        let t = graph.triple(triple).ok_or(CaptchaError::UnknownTriple(triple))?;
        let form = QuestionForm::for_triple(t);
        Ok(self.issue(graph, triple, ChallengeKind::Confirmatory, form, None))
    }

    fn issue(
        &mut self,
        graph: &Graph,
        target: TripleId,
        kind: ChallengeKind,
        form: QuestionForm,
        blank: Option<(Slot, LedgerId)>,
    ) -> Challenge {
        let triple = graph.triple(target).expect("caller checked");
        let slot = blank.map(|(s, _)| s);
        let challenge = Challenge {
            id: ChallengeId(self.next_challenge.take()),
            kind,
            question_form: form,
            target_triple_id: target,
            blanked_slot: slot,
            prompt: render_prompt(graph, triple, kind, form, slot),
            ledger_id: blank.map(|(_, l)| l),
        };
        self.challenges.insert(challenge.id, challenge.clone());
        self.open.insert(challenge.id);
        challenge
    }

    /// Applies an answer. Confirmatory: `yes` raises confidence, `no` lowers
    /// it. Fill-in-the-blank: one count in the slot ledger, which may close
    /// collection. If the ledger stopped collecting since the challenge was
    /// issued, the answer is accepted but not counted.
    pub fn submit(
        &mut self,
        id: ChallengeId,
        answer: &str,
        graph: &mut Graph,
        book: &mut ConsensusBook,
    ) -> Result<Outcome> {
        let challenge = self.challenges.get(&id).ok_or(CaptchaError::UnknownChallenge(id))?.clone();
        if !self.open.contains(&id) {
            return Err(CaptchaError::ChallengeClosed(id));
        }
        let mut outcome = Outcome { proceed: true, confidence: None, recorded: None, ambiguity_prompt: None };
        match challenge.kind {
            ChallengeKind::Confirmatory => {
                let delta = match answer.trim().to_lowercase().as_str() {
                    "yes" => self.config.delta_consistent,
                    "no" => -self.config.delta_inconsistent,
                    "" => return Err(CaptchaError::EmptyAnswer),
                    _ => return Err(CaptchaError::InvalidAnswer),
                };
                match graph.adjust_confidence(challenge.target_triple_id, delta) {
                    Ok(c) => outcome.confidence = Some(c),
                    // The triple was deleted after the challenge was issued.
                    Err(GraphError::UnknownTriple(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            ChallengeKind::FillBlank => {
                if answer.trim().is_empty() {
                    return Err(CaptchaError::EmptyAnswer);
                }
                let ledger = challenge.ledger_id.expect("fill-in-the-blank challenges carry a ledger");
                match book.record(ledger, answer) {
                    Ok(recorded) => {
                        outcome.recorded = Some(recorded.answer);
                        if recorded.cycle_closed {
                            if let Some(crate::consensus::Closing::Ambiguity(prompt)) = book.maybe_close(ledger)? {
                                outcome.ambiguity_prompt = Some(prompt);
                            }
                        }
                    }
                    Err(ConsensusError::LedgerNotCollecting(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        self.open.remove(&id);
        Ok(outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ReviewPolicy {
    /// Settle statuses and recirculate previously eliminated triples.
    Automatic,
    /// Only report the Top-N / bottom-N for a manager to act on.
    Manager,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ReviewConfig {
    pub n: usize,
    pub accept_threshold: f64,
    pub reject_threshold: f64,
    pub policy: ReviewPolicy,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig { n: 5, accept_threshold: 0.8, reject_threshold: 0.2, policy: ReviewPolicy::Automatic }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewReport {
    pub top: Vec<TripleId>,
    pub bottom: Vec<TripleId>,
    pub accepted: Vec<TripleId>,
    pub eliminated: Vec<TripleId>,
    pub recirculated: Vec<TripleId>,
    pub reverified: Vec<TripleId>,
}

/// One review round over the high- and low-score Top-N. Under the automatic
/// policy triples eliminated in earlier rounds come back as candidates first,
/// then high candidates are accepted, low candidates eliminated, and accepted
/// triples that sank below the acceptance cut go back to verification.
pub fn review_round(graph: &mut Graph, config: &ReviewConfig) -> Result<ReviewReport> {
    let mut report = ReviewReport::default();
    if config.policy == ReviewPolicy::Automatic {
        let previously_eliminated: Vec<TripleId> =
            graph.triples().filter(|t| t.status == Status::Eliminated).map(|t| t.id).collect();
        for id in previously_eliminated {
            graph.set_status(id, Status::Candidate)?;
            report.recirculated.push(id);
        }
    }
    let (top, bottom) = graph.top_and_bottom(config.n);
    report.top = top.clone();
    report.bottom = bottom.clone();
    if config.policy == ReviewPolicy::Manager {
        return Ok(report);
    }
    for id in top {
        let t = graph.triple(id).expect("listed");
        if t.status == Status::Candidate && t.confidence >= config.accept_threshold {
            graph.set_status(id, Status::Accepted)?;
            report.accepted.push(id);
        }
    }
    for id in bottom {
        let t = graph.triple(id).expect("listed");
        if report.recirculated.contains(&id) {
            continue;
        }
        match t.status {
            Status::Candidate if t.confidence <= config.reject_threshold => {
                graph.set_status(id, Status::Eliminated)?;
                report.eliminated.push(id);
            }
            Status::Accepted if t.confidence < config.accept_threshold => {
                graph.set_status(id, Status::Candidate)?;
                report.reverified.push(id);
            }
            _ => {}
        }
    }
    Ok(report)
}
