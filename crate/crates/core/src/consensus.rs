//! Relaxation consensus over free-text answers.
//!
//! A fill-in-the-blank slot collects answers into an [`AnswerLedger`]. Each
//! new answer enters with the default score; counts accumulate, and every
//! `cycle_length` submissions the least-frequent candidate is dropped (the
//! current Top-2 are never dropped). When collection closes, the Top-2 go to
//! an "unequal?" vote: an unequal fraction strictly above the threshold keeps
//! both answers, otherwise the runner-up becomes an alias of the winner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, GraphError, Object, Origin, Status};
use crate::ids::{Counter, LedgerId, TripleId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsensusError {
    #[error("ledger {0} is not collecting answers")]
    LedgerNotCollecting(LedgerId),
    #[error("ledger has no candidates")]
    EmptyLedger,
    #[error("answer is empty after normalization")]
    EmptyAnswer,
    #[error("ambiguity question needs two distinct answers")]
    SameAnswer,
    #[error("{total} votes is below the minimum of {min}")]
    TooFewVotes { total: u32, min: u32 },
    #[error("unequal votes {unequal} exceed total {total}")]
    InvalidTally { unequal: u32, total: u32 },
    #[error("ledger {0} is not in the ambiguity vote")]
    NotInAmbiguityVote(LedgerId),
    #[error("ledger {0} has not been resolved")]
    NotResolved(LedgerId),
    #[error("slot of ledger {0} has already been filled")]
    SlotAlreadyFilled(LedgerId),
    #[error("unknown ledger {0}")]
    UnknownLedger(LedgerId),
    #[error("invalid consensus config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, ConsensusError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ConsensusConfig {
    /// Default score a new candidate starts from.
    pub s0: f64,
    pub unequal_threshold: f64,
    pub cycle_length: u32,
    pub min_votes_for_resolve: u32,
    /// Completed cycles after which a live ledger stops collecting.
    pub cycles_before_vote: u32,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            s0: 1.0,
            unequal_threshold: 0.35,
            cycle_length: 20,
            min_votes_for_resolve: 10,
            cycles_before_vote: 3,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.unequal_threshold > 0.0 && self.unequal_threshold < 1.0) {
            return Err(ConsensusError::InvalidConfig("unequal threshold must lie in (0, 1)"));
        }
        if self.cycle_length < 2 {
            return Err(ConsensusError::InvalidConfig("cycle length must be at least 2"));
        }
        if self.cycles_before_vote == 0 {
            return Err(ConsensusError::InvalidConfig("cycles before vote must be at least 1"));
        }
        Ok(())
    }
}

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize(answer: &str) -> String {
    answer.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Slot {
    Subject,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlotKey {
    pub triple: TripleId,
    pub slot: Slot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub count: u64,
    /// `s0 + count`; presentational only.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LedgerState {
    Collecting,
    AmbiguityVote,
    Resolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ResolutionKind {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Resolution {
    pub kind: ResolutionKind,
    pub primary: String,
    pub secondary: Option<String>,
    /// Runner-up -> winner, present only for a single resolution with a runner-up.
    pub alias_map: BTreeMap<String, String>,
}

impl Resolution {
    pub fn answers(&self) -> Vec<&str> {
        match self.kind {
            ResolutionKind::Single => vec![self.primary.as_str()],
            ResolutionKind::Multi => std::iter::once(self.primary.as_str()).chain(self.secondary.as_deref()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub unequal: u32,
    pub total: u32,
}

/// What [`AnswerLedger::record_occurrence`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct Recorded {
    /// Normalized key the count went to.
    pub answer: String,
    /// Set when this submission closed a cycle.
    pub eliminated: Option<(String, u64)>,
    pub cycle_closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Closing {
    /// Only one candidate survived; no vote needed.
    Uncontested(Resolution),
    /// Top-2 put to the crowd with this prompt.
    Ambiguity(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnswerLedger {
    pub id: LedgerId,
    pub slot: SlotKey,
    pub candidates: BTreeMap<String, Candidate>,
    pub cycle_length: u32,
    pub submissions_this_cycle: u32,
    pub cycles_completed: u32,
    pub total_submissions: u64,
    pub state: LedgerState,
    pub s0: f64,
    pub votes: VoteTally,
    pub resolution: Option<Resolution>,
    pub filled: Vec<TripleId>,
}

impl AnswerLedger {
    pub fn new(id: LedgerId, slot: SlotKey, config: &ConsensusConfig) -> Self {
        AnswerLedger {
            id,
            slot,
            candidates: BTreeMap::new(),
            cycle_length: config.cycle_length,
            submissions_this_cycle: 0,
            cycles_completed: 0,
            total_submissions: 0,
            state: LedgerState::Collecting,
            s0: config.s0,
            votes: VoteTally::default(),
            resolution: None,
            filled: Vec::new(),
        }
    }

    pub fn total_count(&self) -> u64 {
        self.candidates.values().map(|c| c.count).sum()
    }

    pub fn record_occurrence(&mut self, answer: &str) -> Result<Recorded> {
        if self.state != LedgerState::Collecting {
            return Err(ConsensusError::LedgerNotCollecting(self.id));
        }
        let key = normalize(answer);
        if key.is_empty() {
            return Err(ConsensusError::EmptyAnswer);
        }
        let s0 = self.s0;
        let candidate = self.candidates.entry(key.clone()).or_insert(Candidate { count: 0, score: s0 });
        candidate.count += 1;
        candidate.score = s0 + candidate.count as f64;
        self.submissions_this_cycle += 1;
        self.total_submissions += 1;

        let mut recorded = Recorded { answer: key, eliminated: None, cycle_closed: false };
        if self.submissions_this_cycle >= self.cycle_length {
            recorded.eliminated = self.end_cycle()?;
            recorded.cycle_closed = true;
        }
        Ok(recorded)
    }

    /// Drops the least-frequent candidate (ties: lexicographically last)
    /// unless only the Top-2 remain.
    pub fn end_cycle(&mut self) -> Result<Option<(String, u64)>> {
        if self.candidates.is_empty() {
            return Err(ConsensusError::EmptyLedger);
        }
        self.submissions_this_cycle = 0;
        self.cycles_completed += 1;
        if self.candidates.len() <= 2 {
            return Ok(None);
        }
        // BTreeMap iterates ascending, so max_by picks the last key among equals.
        let loser = self
            .candidates
            .iter()
            .max_by(|(ka, a), (kb, b)| b.count.cmp(&a.count).then(ka.cmp(kb)))
            .map(|(k, _)| k.clone())
            .expect("non-empty");
        let removed = self.candidates.remove(&loser).expect("present");
        Ok(Some((loser, removed.count)))
    }

    /// Most frequent answer and runner-up; ties go to the lexicographically
    /// smaller answer.
    pub fn top2(&self) -> Result<(String, Option<String>)> {
        let mut ranked: Vec<(&String, u64)> = self.candidates.iter().map(|(k, c)| (k, c.count)).collect();
        if ranked.is_empty() {
            return Err(ConsensusError::EmptyLedger);
        }
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok((ranked[0].0.clone(), ranked.get(1).map(|(k, _)| (*k).clone())))
    }

    /// Stops collection. A single survivor resolves at once; otherwise the
    /// ledger moves to the ambiguity vote and the question is returned.
    pub fn close(&mut self) -> Result<Closing> {
        if self.state != LedgerState::Collecting {
            return Err(ConsensusError::LedgerNotCollecting(self.id));
        }
        match self.top2()? {
            (primary, None) => {
                let resolution =
                    Resolution { kind: ResolutionKind::Single, primary, secondary: None, alias_map: BTreeMap::new() };
                self.state = LedgerState::Resolved;
                self.resolution = Some(resolution.clone());
                Ok(Closing::Uncontested(resolution))
            }
            (primary, Some(secondary)) => {
                let prompt = ambiguity_question(&primary, &secondary)?;
                self.state = LedgerState::AmbiguityVote;
                Ok(Closing::Ambiguity(prompt))
            }
        }
    }

    pub fn cast_vote(&mut self, unequal: bool) -> Result<VoteTally> {
        if self.state != LedgerState::AmbiguityVote {
            return Err(ConsensusError::NotInAmbiguityVote(self.id));
        }
        self.votes.total += 1;
        if unequal {
            self.votes.unequal += 1;
        }
        Ok(self.votes)
    }

    pub fn resolve(&mut self, unequal_votes: u32, total_votes: u32, config: &ConsensusConfig) -> Result<Resolution> {
        if self.state != LedgerState::AmbiguityVote {
            return Err(ConsensusError::NotInAmbiguityVote(self.id));
        }
        let (primary, secondary) = self.top2()?;
        let secondary = secondary.ok_or(ConsensusError::SameAnswer)?;
        let resolution = resolve_votes(&primary, &secondary, unequal_votes, total_votes, config)?;
        self.state = LedgerState::Resolved;
        self.resolution = Some(resolution.clone());
        Ok(resolution)
    }

    /// Resolves from the ledger's own vote tally.
    pub fn resolve_with_tally(&mut self, config: &ConsensusConfig) -> Result<Resolution> {
        let VoteTally { unequal, total } = self.votes;
        self.resolve(unequal, total, config)
    }
}

/// The Top-2 ambiguity prompt.
pub fn ambiguity_question(primary: &str, secondary: &str) -> Result<String> {
    if normalize(primary) == normalize(secondary) {
        return Err(ConsensusError::SameAnswer);
    }
    Ok(format!("Is \"{primary}\" unequal to \"{secondary}\"? (unequal/equal)"))
}

/// Multi iff the unequal fraction is strictly above the threshold.
pub fn is_multi(unequal_fraction: f64, config: &ConsensusConfig) -> bool {
    unequal_fraction > config.unequal_threshold
}

/// Pure resolution of a Top-2 pair from a vote tally.
pub fn resolve_votes(
    primary: &str,
    secondary: &str,
    unequal_votes: u32,
    total_votes: u32,
    config: &ConsensusConfig,
) -> Result<Resolution> {
    if total_votes < config.min_votes_for_resolve || total_votes == 0 {
        return Err(ConsensusError::TooFewVotes { total: total_votes, min: config.min_votes_for_resolve });
    }
    if unequal_votes > total_votes {
        return Err(ConsensusError::InvalidTally { unequal: unequal_votes, total: total_votes });
    }
    if primary == secondary {
        return Err(ConsensusError::SameAnswer);
    }
    let fraction = f64::from(unequal_votes) / f64::from(total_votes);
    Ok(if is_multi(fraction, config) {
        Resolution {
            kind: ResolutionKind::Multi,
            primary: primary.to_string(),
            secondary: Some(secondary.to_string()),
            alias_map: BTreeMap::new(),
        }
    } else {
        Resolution {
            kind: ResolutionKind::Single,
            primary: primary.to_string(),
            secondary: Some(secondary.to_string()),
            alias_map: [(secondary.to_string(), primary.to_string())].into(),
        }
    })
}

/// Every ledger, one per slot, plus the alias table built from single
/// resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsensusBook {
    pub config: ConsensusConfig,
    ledgers: BTreeMap<LedgerId, AnswerLedger>,
    by_slot: BTreeMap<TripleId, BTreeMap<Slot, LedgerId>>,
    aliases: BTreeMap<String, String>,
    next_ledger: Counter,
}

impl ConsensusBook {
    pub fn new(config: ConsensusConfig) -> Result<Self> {
        config.validate()?;
        Ok(ConsensusBook {
            config,
            ledgers: BTreeMap::new(),
            by_slot: BTreeMap::new(),
            aliases: BTreeMap::new(),
            next_ledger: Counter::default(),
        })
    }

    pub fn ledger(&self, id: LedgerId) -> Option<&AnswerLedger> {
        self.ledgers.get(&id)
    }

    pub fn ledgers(&self) -> impl Iterator<Item = &AnswerLedger> {
        self.ledgers.values()
    }

    pub fn ledger_for(&self, slot: SlotKey) -> Option<&AnswerLedger> {
        self.by_slot.get(&slot.triple).and_then(|m| m.get(&slot.slot)).and_then(|id| self.ledgers.get(id))
    }

    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }

    fn ledger_mut(&mut self, id: LedgerId) -> Result<&mut AnswerLedger> {
        self.ledgers.get_mut(&id).ok_or(ConsensusError::UnknownLedger(id))
    }

    /// The slot's ledger, opened if absent.
    pub fn open_ledger(&mut self, slot: SlotKey) -> LedgerId {
        if let Some(existing) = self.ledger_for(slot) {
            return existing.id;
        }
        let id = LedgerId(self.next_ledger.take());
        self.ledgers.insert(id, AnswerLedger::new(id, slot, &self.config));
        self.by_slot.entry(slot.triple).or_default().insert(slot.slot, id);
        id
    }

    /// Follows the alias table to the canonical answer.
    pub fn canonical(&self, answer: &str) -> String {
        let mut current = normalize(answer);
        for _ in 0..=self.aliases.len() {
            match self.aliases.get(&current) {
                Some(next) if *next != current => current = next.clone(),
                _ => break,
            }
        }
        current
    }

    pub fn record(&mut self, id: LedgerId, answer: &str) -> Result<Recorded> {
        let canonical = self.canonical(answer);
        self.ledger_mut(id)?.record_occurrence(&canonical)
    }

    /// Closes collection once enough cycles have run; `None` while still collecting.
    pub fn maybe_close(&mut self, id: LedgerId) -> Result<Option<Closing>> {
        let threshold = self.config.cycles_before_vote;
        let ledger = self.ledger_mut(id)?;
        if ledger.state == LedgerState::Collecting && ledger.cycles_completed >= threshold {
            return ledger.close().map(Some);
        }
        Ok(None)
    }

    pub fn close(&mut self, id: LedgerId) -> Result<Closing> {
        self.ledger_mut(id)?.close()
    }

    pub fn vote(&mut self, id: LedgerId, unequal: bool) -> Result<VoteTally> {
        self.ledger_mut(id)?.cast_vote(unequal)
    }

    /// Resolves from the stored tally once it reaches the minimum.
    pub fn maybe_resolve(&mut self, id: LedgerId) -> Result<Option<Resolution>> {
        let config = self.config.clone();
        let ledger = self.ledger_mut(id)?;
        if ledger.state == LedgerState::AmbiguityVote && ledger.votes.total >= config.min_votes_for_resolve {
            return ledger.resolve_with_tally(&config).map(Some);
        }
        Ok(None)
    }

    pub fn resolve(&mut self, id: LedgerId, unequal: u32, total: u32) -> Result<Resolution> {
        let config = self.config.clone();
        self.ledger_mut(id)?.resolve(unequal, total, &config)
    }

    /// Writes the resolved answers into the graph as accepted triples and
    /// records the alias of a single resolution.
    pub fn apply_resolution(&mut self, graph: &mut Graph, id: LedgerId, origin: Origin) -> Result<Vec<TripleId>> {
        let ledger = self.ledgers.get(&id).ok_or(ConsensusError::UnknownLedger(id))?;
        if ledger.state != LedgerState::Resolved {
            return Err(ConsensusError::NotResolved(id));
        }
        if !ledger.filled.is_empty() {
            return Err(ConsensusError::SlotAlreadyFilled(id));
        }
        let resolution = ledger.resolution.clone().expect("resolved ledgers carry a resolution");
        let filled = fill_slot(graph, ledger.slot, &resolution.answers(), origin)?;
        for (from, to) in &resolution.alias_map {
            self.aliases.insert(from.clone(), to.clone());
        }
        self.ledger_mut(id)?.filled = filled.clone();
        Ok(filled)
    }
}

/// Resolves an answer to an entity of the given kind by normalized label,
/// falling back to `None`.
fn entity_by_answer(graph: &Graph, kind: Option<&str>, answer: &str) -> Option<crate::ids::EntityId> {
    graph.entities().filter(|e| kind.is_none_or(|k| e.kind == k)).find(|e| normalize(&e.label) == answer).map(|e| e.id)
}

fn fill_slot(graph: &mut Graph, slot: SlotKey, answers: &[&str], origin: Origin) -> Result<Vec<TripleId>> {
    let target = graph.triple(slot.triple).cloned().ok_or(GraphError::UnknownTriple(slot.triple))?;
    let mut out = Vec::with_capacity(answers.len());
    for answer in answers {
        let (subject, object) = match slot.slot {
            Slot::Object => {
                let kind = target.object.entity().and_then(|o| graph.entity(o)).map(|e| e.kind.clone());
                let object = match entity_by_answer(graph, kind.as_deref(), answer) {
                    Some(e) => Object::Entity(e),
                    None => Object::Literal(answer.to_string()),
                };
                (target.subject, object)
            }
            Slot::Subject => {
                let kind = graph.entity(target.subject).map(|e| e.kind.clone()).unwrap_or_default();
                let subject = match entity_by_answer(graph, Some(&kind), answer) {
                    Some(e) => e,
                    None => graph.add_entity(&kind, answer, BTreeMap::new(), origin)?,
                };
                (subject, target.object.clone())
            }
        };
        let id = graph.add_triple(subject, &target.predicate, object, origin, origin.source.default_confidence())?;
        if graph.triple(id).map(|t| t.status) == Some(Status::Candidate) {
            graph.set_status(id, Status::Accepted)?;
        }
        out.push(id);
    }
    Ok(out)
}
