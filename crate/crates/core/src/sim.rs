//! Seeded crowd simulation against planted ground truth.
//!
//! Each slot is an object blank with one or two true answers and five
//! distractors. Annotators answer fill-in-the-blank challenges, correctly with
//! probability `accuracy`. After the submissions the ledger closes; if the
//! Top-2 need a vote every annotator casts one.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::captcha::{Captcha, CaptchaConfig, CaptchaError};
use crate::consensus::{
    normalize, Closing, ConsensusBook, ConsensusConfig, ConsensusError, ResolutionKind, Slot, SlotKey,
};
use crate::graph::{Graph, GraphError, Object, Origin};

const DISTRACTORS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Captcha(#[from] CaptchaError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SimConfig {
    pub seed: u64,
    pub population: u32,
    pub accuracy: f64,
    pub slots: u32,
    pub submissions_per_slot: u32,
    /// How many of the slots (the first ones) carry two true answers.
    pub two_truth_slots: u32,
    /// Chance an annotator votes "unequal" when both Top-2 answers are true,
    /// and "equal" otherwise.
    pub unequal_bias: f64,
    pub consensus: ConsensusConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 42,
            population: 100,
            accuracy: 0.8,
            slots: 50,
            submissions_per_slot: 100,
            two_truth_slots: 0,
            unequal_bias: 0.9,
            consensus: ConsensusConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.population == 0 || self.slots == 0 || self.submissions_per_slot == 0 {
            return bad("population, slots and submissions must be positive");
        }
        if !(0.0..=1.0).contains(&self.accuracy) || !(0.0..=1.0).contains(&self.unequal_bias) {
            return bad("accuracy and unequal bias must lie in [0, 1]");
        }
        if self.two_truth_slots > self.slots {
            return bad("more two-truth slots than slots");
        }
        if self.population < self.consensus.min_votes_for_resolve {
            return bad("population is smaller than the votes needed to resolve");
        }
        self.consensus.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub subject: String,
    pub predicate: String,
    pub truths: Vec<String>,
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SlotReport {
    pub index: u32,
    pub truths: Vec<String>,
    pub kind: ResolutionKind,
    pub answers: Vec<String>,
    pub top1_correct: bool,
    /// Resolved answer set equals the truth set.
    pub correct: bool,
    pub cycles: u32,
    pub unequal_votes: u32,
    pub total_votes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimReport {
    pub config: SimConfig,
    pub fraction_top1_correct: f64,
    pub fraction_correct: f64,
    pub multi_answer_rate: f64,
    pub mean_cycles_to_resolve: f64,
    pub slots: Vec<SlotReport>,
}

pub fn ground_truth(config: &SimConfig) -> Vec<GroundTruth> {
    (0..config.slots)
        .map(|i| {
            let truth_count = if i < config.two_truth_slots { 2 } else { 1 };
            GroundTruth {
                subject: format!("subject {i}"),
                predicate: "answer".to_string(),
                truths: (0..truth_count).map(|k| format!("truth {i}-{k}")).collect(),
                distractors: (0..DISTRACTORS).map(|k| format!("distractor {i}-{k}")).collect(),
            }
        })
        .collect()
}

/// Runs the whole simulation. Identical configs give identical reports.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut graph = Graph::new();
    let mut book = ConsensusBook::new(config.consensus.clone())?;
    let mut captcha = Captcha::new(CaptchaConfig { rng_seed: config.seed, ..Default::default() })?;
    // Collection closes explicitly after the submissions, not by cycle count.
    book.config.cycles_before_vote = u32::MAX;

    let truths = ground_truth(config);
    let mut slots = Vec::with_capacity(truths.len());
    for (index, gt) in (0u32..).zip(&truths) {
        slots.push(run_slot(config, index, gt, &mut graph, &mut book, &mut captcha, &mut rng)?);
    }

    let n = slots.len() as f64;
    let share = |f: &dyn Fn(&SlotReport) -> bool| slots.iter().filter(|s| f(s)).count() as f64 / n;
    Ok(SimReport {
        config: config.clone(),
        fraction_top1_correct: share(&|s| s.top1_correct),
        fraction_correct: share(&|s| s.correct),
        multi_answer_rate: share(&|s| s.kind == ResolutionKind::Multi),
        mean_cycles_to_resolve: slots.iter().map(|s| f64::from(s.cycles)).sum::<f64>() / n,
        slots,
    })
}

fn run_slot(
    config: &SimConfig,
    index: u32,
    gt: &GroundTruth,
    graph: &mut Graph,
    book: &mut ConsensusBook,
    captcha: &mut Captcha,
    rng: &mut ChaCha8Rng,
) -> Result<SlotReport> {
    let subject = graph.add_entity("topic", &gt.subject, BTreeMap::new(), Origin::import())?;
    let mut truth_ids = Vec::new();
    for t in &gt.truths {
        truth_ids.push(graph.add_entity("answer", t, BTreeMap::new(), Origin::import())?);
    }
    let triple = graph.add_triple(subject, &gt.predicate, Object::Entity(truth_ids[0]), Origin::import(), 1.0)?;
    let slot = SlotKey { triple, slot: Slot::Object };

    for _ in 0..config.submissions_per_slot {
        let challenge = captcha.issue_fill_blank(graph, book, slot)?;
        let answer = if rng.gen_bool(config.accuracy) {
            &gt.truths[rng.gen_range(0..gt.truths.len())]
        } else {
            &gt.distractors[rng.gen_range(0..gt.distractors.len())]
        };
        captcha.submit(challenge.id, answer, graph, book)?;
    }
    let ledger = book.ledger_for(slot).expect("opened by the first challenge").id;

    if let Closing::Ambiguity(_) = book.close(ledger)? {
        let (a, b) = book.ledger(ledger).expect("exists").top2()?;
        let truth_keys: BTreeSet<String> = gt.truths.iter().map(|t| normalize(t)).collect();
        let both_true = b.is_some_and(|b| truth_keys.contains(&a) && truth_keys.contains(&b) && a != b);
        let p_unequal = if both_true { config.unequal_bias } else { 1.0 - config.unequal_bias };
        for _ in 0..config.population {
            book.vote(ledger, rng.gen_bool(p_unequal))?;
        }
        book.maybe_resolve(ledger)?;
    }
    book.apply_resolution(graph, ledger, Origin::system())?;

    let l = book.ledger(ledger).expect("exists");
    let resolution = l.resolution.as_ref().expect("resolved above");
    let answers: Vec<String> = resolution.answers().into_iter().map(str::to_string).collect();
    let truth_keys: BTreeSet<String> = gt.truths.iter().map(|t| normalize(t)).collect();
    let answer_keys: BTreeSet<String> = answers.iter().cloned().collect();
    Ok(SlotReport {
        index,
        truths: gt.truths.clone(),
        kind: resolution.kind,
        top1_correct: truth_keys.contains(&resolution.primary),
        correct: answer_keys == truth_keys,
        answers,
        cycles: l.cycles_completed,
        unequal_votes: l.votes.unequal,
        total_votes: l.votes.total,
    })
}
