//! All mutable state behind one deterministic command interface.
//!
//! Every mutation is a [`Command`]. Applying the same command sequence to the
//! same starting state yields the same state, including the captcha RNG, so an
//! event log of commands is enough to rebuild an engine. A command that fails
//! leaves the engine untouched.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::AnalyticsError;
use crate::captcha::{self, Captcha, CaptchaConfig, CaptchaError, Challenge, Outcome, ReviewConfig, ReviewReport};
use crate::consensus::{self, ConsensusBook, ConsensusConfig, ConsensusError, LedgerState, Resolution, VoteTally};
use crate::crowd::{Completion, Crowd, CrowdConfig, CrowdError, Group, Payload, Role, Task, User};
use crate::graph::{Entity, EntityEdit, Graph, GraphError, Object, Origin, Pattern, Status, Triple};
use crate::ids::{ChallengeId, Counter, EntityId, GroupId, LedgerId, SessionId, TaskId, TripleId, UserId};
use crate::recommend::{self, LearnerRecord, RecommendConfig, RecommendError, RecommendationReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("forbidden: {0}")]
    Forbidden(&'static str),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("user name `{0}` is taken")]
    DuplicateName(String),
    #[error("challenge {0} is not pending for this session")]
    ChallengeMismatch(ChallengeId),
    #[error("{user} already voted on {ledger}")]
    AlreadyVoted { ledger: LedgerId, user: UserId },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Crowd(#[from] CrowdError),
    #[error(transparent)]
    Captcha(#[from] CaptchaError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct EngineConfig {
    pub crowd: CrowdConfig,
    pub captcha: CaptchaConfig,
    pub consensus: ConsensusConfig,
    pub review: ReviewConfig,
    pub recommend: RecommendConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub id: SessionId,
    pub user_id: UserId,
    /// Set until the login challenge is answered.
    pub pending_challenge: Option<ChallengeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "op")]
pub enum Command {
    CreateUser {
        actor: Option<UserId>,
        role: Role,
        name: String,
    },
    Login {
        user: UserId,
    },
    Logout {
        session: SessionId,
    },
    AnswerChallenge {
        session: SessionId,
        challenge: ChallengeId,
        answer: String,
    },
    AddEntity {
        actor: UserId,
        kind: String,
        label: String,
        #[serde(default)]
        attrs: BTreeMap<String, String>,
    },
    EditEntity {
        actor: UserId,
        id: EntityId,
        edit: EntityEdit,
    },
    DeleteEntity {
        actor: UserId,
        id: EntityId,
    },
    AddTriple {
        actor: UserId,
        subject: EntityId,
        predicate: String,
        object: Object,
        confidence: Option<f64>,
    },
    UpdateTriple {
        actor: UserId,
        id: TripleId,
        status: Option<Status>,
        confidence_delta: Option<f64>,
    },
    DeleteTriple {
        actor: UserId,
        id: TripleId,
    },
    CreateGroup {
        actor: UserId,
        topic: Pattern,
        admin: Option<UserId>,
    },
    JoinGroup {
        actor: UserId,
        user: UserId,
        group: GroupId,
    },
    DissolveGroup {
        actor: UserId,
        group: GroupId,
    },
    AllocateTasks {
        actor: UserId,
        batch: u64,
    },
    AssignTask {
        actor: UserId,
        task: TaskId,
        member: UserId,
    },
    CompleteTask {
        actor: UserId,
        task: TaskId,
        payload: Payload,
    },
    PutLearnerRecord {
        actor: UserId,
        record: LearnerRecord,
    },
    CastVote {
        actor: UserId,
        ledger: LedgerId,
        unequal: bool,
    },
    Review {
        actor: UserId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoginResult {
    pub session: Session,
    pub challenge: Option<Challenge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnswerResult {
    #[serde(flatten)]
    pub outcome: Outcome,
    pub user_score: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VoteResult {
    pub ledger_id: LedgerId,
    pub tally: VoteTally,
    pub resolution: Option<Resolution>,
    pub filled: Vec<TripleId>,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Effect {
    User(User),
    Login(LoginResult),
    Answer(AnswerResult),
    Entity(Entity),
    Triple(Triple),
    Group(Group),
    Tasks(Vec<Task>),
    Task(Task),
    Completion(Completion),
    Record(LearnerRecord),
    Vote(VoteResult),
    Review(ReviewReport),
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ambiguity {
    pub ledger_id: LedgerId,
    pub triple_id: TripleId,
    pub question: String,
    pub primary: String,
    pub secondary: Option<String>,
    pub tally: VoteTally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Engine {
    pub config: EngineConfig,
    pub graph: Graph,
    pub crowd: Crowd,
    pub captcha: Captcha,
    pub book: ConsensusBook,
    learners: BTreeMap<EntityId, LearnerRecord>,
    sessions: BTreeMap<SessionId, Session>,
    next_session: Counter,
    voters: BTreeMap<LedgerId, BTreeSet<UserId>>,
    rng: ChaCha8Rng,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        Engine::with_graph(config, Graph::new())
    }

    pub fn with_graph(config: EngineConfig, graph: Graph) -> Result<Self> {
        config.recommend.validate()?;
        Ok(Engine {
            crowd: Crowd::new(config.crowd.clone()),
            captcha: Captcha::new(config.captcha.clone())?,
            book: ConsensusBook::new(config.consensus.clone())?,
            rng: ChaCha8Rng::seed_from_u64(config.captcha.rng_seed),
            graph,
            learners: BTreeMap::new(),
            sessions: BTreeMap::new(),
            next_session: Counter::default(),
            voters: BTreeMap::new(),
            config,
        })
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(&id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn learner(&self, student: EntityId) -> Option<&LearnerRecord> {
        self.learners.get(&student)
    }

    pub fn user(&self, id: UserId) -> Result<&User> {
        self.crowd.user(id).ok_or(EngineError::UnknownUser(id))
    }

    fn role(&self, id: UserId) -> Result<Role> {
        self.user(id).map(|u| u.role)
    }

    fn require_admin(&self, actor: UserId, what: &'static str) -> Result<()> {
        match self.role(actor)? {
            Role::Common => Err(EngineError::Forbidden(what)),
            Role::GroupAdmin | Role::SystemAdmin => Ok(()),
        }
    }

    fn require_system_admin(&self, actor: UserId, what: &'static str) -> Result<()> {
        match self.role(actor)? {
            Role::SystemAdmin => Ok(()),
            _ => Err(EngineError::Forbidden(what)),
        }
    }

    pub fn apply(&mut self, command: Command) -> Result<Effect> {
        match command {
            Command::CreateUser { actor, role, name } => self.create_user(actor, role, name).map(Effect::User),
            Command::Login { user } => self.login(user).map(Effect::Login),
            Command::Logout { session } => {
                self.sessions.remove(&session).ok_or(EngineError::UnknownSession(session))?;
                Ok(Effect::Done)
            }
            Command::AnswerChallenge { session, challenge, answer } => {
                self.answer_challenge(session, challenge, &answer).map(Effect::Answer)
            }
            Command::AddEntity { actor, kind, label, attrs } => {
                self.user(actor)?;
                let id = self.graph.add_entity(&kind, &label, attrs, Origin::crowd(actor))?;
                Ok(Effect::Entity(self.graph.entity(id).expect("just added").clone()))
            }
            Command::EditEntity { actor, id, edit } => {
                self.user(actor)?;
                Ok(Effect::Entity(self.graph.edit_entity(Origin::crowd(actor), id, edit)?.clone()))
            }
            Command::DeleteEntity { actor, id } => {
                self.require_admin(actor, "only admins delete entities")?;
                Ok(Effect::Entity(self.graph.delete_entity(id)?))
            }
            Command::AddTriple { actor, subject, predicate, object, confidence } => {
                self.user(actor)?;
                let origin = Origin::crowd(actor);
                let confidence = confidence.unwrap_or(origin.source.default_confidence());
                let id = self.graph.add_triple(subject, &predicate, object, origin, confidence)?;
                Ok(Effect::Triple(self.graph.triple(id).expect("just added").clone()))
            }
            Command::UpdateTriple { actor, id, status, confidence_delta } => {
                self.update_triple(actor, id, status, confidence_delta).map(Effect::Triple)
            }
            Command::DeleteTriple { actor, id } => self.delete_triple(actor, id).map(Effect::Triple),
            Command::CreateGroup { actor, topic, admin } => {
                let id = self.crowd.create_group(actor, topic, admin)?;
                Ok(Effect::Group(self.crowd.group(id).expect("just created").clone()))
            }
            Command::JoinGroup { actor, user, group } => {
                self.crowd.join_group(actor, user, group)?;
                Ok(Effect::Group(self.crowd.group(group).expect("joined").clone()))
            }
            Command::DissolveGroup { actor, group } => {
                self.crowd.dissolve_group(actor, group)?;
                Ok(Effect::Done)
            }
            Command::AllocateTasks { actor, batch } => {
                self.require_system_admin(actor, "only system admins allocate tasks")?;
                let ids = self.crowd.generate_and_allocate(&self.graph, batch)?;
                Ok(Effect::Tasks(ids.iter().filter_map(|id| self.crowd.task(*id)).cloned().collect()))
            }
            Command::AssignTask { actor, task, member } => {
                self.crowd.assign_task(actor, task, member)?;
                Ok(Effect::Task(self.crowd.task(task).expect("assigned").clone()))
            }
            Command::CompleteTask { actor, task, payload } => {
                if self.role(actor)? != Role::Common {
                    return Err(EngineError::Forbidden("only common users complete tasks"));
                }
                Ok(Effect::Completion(self.crowd.complete_task(&mut self.graph, actor, task, payload)?))
            }
            Command::PutLearnerRecord { actor, record } => {
                self.require_system_admin(actor, "only system admins upload learner records")?;
                record.validate(&self.graph)?;
                self.learners.insert(record.student_id, record.clone());
                Ok(Effect::Record(record))
            }
            Command::CastVote { actor, ledger, unequal } => self.cast_vote(actor, ledger, unequal).map(Effect::Vote),
            Command::Review { actor } => {
                self.require_system_admin(actor, "only system admins run review rounds")?;
                Ok(Effect::Review(captcha::review_round(&mut self.graph, &self.config.review)?))
            }
        }
    }

    /// The first user may take any role. Later, anonymous callers and
    /// non-system-admins may only create common users.
    fn create_user(&mut self, actor: Option<UserId>, role: Role, name: String) -> Result<User> {
        let bootstrap = self.crowd.users().next().is_none();
        if !bootstrap && role != Role::Common {
            match actor {
                Some(a) if self.role(a)? == Role::SystemAdmin => {}
                _ => return Err(EngineError::Forbidden("only system admins create privileged users")),
            }
        }
        if let Some(a) = actor {
            self.user(a)?;
        }
        let name = name.trim().to_string();
        if name.is_empty() {
            return Err(EngineError::InvalidInput("user name must not be empty".into()));
        }
        if self.crowd.find_user_by_name(&name).is_some() {
            return Err(EngineError::DuplicateName(name));
        }
        let id = self.crowd.register_user(role, name);
        Ok(self.crowd.user(id).expect("just registered").clone())
    }

    fn login(&mut self, user: UserId) -> Result<LoginResult> {
        self.user(user)?;
        let challenge = match self.captcha.generate(&self.graph, &mut self.book, &mut self.rng) {
            Ok(c) => Some(c),
            Err(CaptchaError::EmptyStore) => None,
            Err(e) => return Err(e.into()),
        };
        let id = SessionId(self.next_session.take());
        let session = Session { id, user_id: user, pending_challenge: challenge.as_ref().map(|c| c.id) };
        self.sessions.insert(id, session.clone());
        Ok(LoginResult { session, challenge })
    }

    /// Counted fill-in-the-blank answers earn the micro-reward.
    fn answer_challenge(&mut self, session: SessionId, challenge: ChallengeId, answer: &str) -> Result<AnswerResult> {
        let s = self.sessions.get(&session).ok_or(EngineError::UnknownSession(session))?;
        if s.pending_challenge != Some(challenge) {
            return Err(EngineError::ChallengeMismatch(challenge));
        }
        let user = s.user_id;
        let outcome = self.captcha.submit(challenge, answer, &mut self.graph, &mut self.book)?;
        let user_score =
            if outcome.recorded.is_some() { self.crowd.reward_user(user)? } else { self.user(user)?.score };
        self.sessions.get_mut(&session).expect("checked").pending_challenge = None;
        Ok(AnswerResult { outcome, user_score })
    }

    fn update_triple(
        &mut self,
        actor: UserId,
        id: TripleId,
        status: Option<Status>,
        delta: Option<f64>,
    ) -> Result<Triple> {
        self.require_admin(actor, "only admins change triple status or confidence")?;
        let current = self.graph.triple(id).ok_or(GraphError::UnknownTriple(id))?;
        if let Some(to) = status {
            if !current.status.can_transition_to(to) {
                return Err(GraphError::IllegalTransition { from: current.status, to }.into());
            }
        }
        if delta.is_some_and(|d| !d.is_finite()) {
            return Err(EngineError::InvalidInput("confidence delta must be finite".into()));
        }
        if let Some(to) = status {
            self.graph.set_status(id, to)?;
        }
        if let Some(d) = delta {
            self.graph.adjust_confidence(id, d)?;
        }
        Ok(self.graph.triple(id).expect("exists").clone())
    }

    /// Admins delete any triple; a common user only triples that nobody else
    /// has touched.
    fn delete_triple(&mut self, actor: UserId, id: TripleId) -> Result<Triple> {
        let role = self.role(actor)?;
        let triple = self.graph.triple(id).ok_or(GraphError::UnknownTriple(id))?;
        if role == Role::Common && !triple.provenance.iter().all(|p| p.user == Some(actor)) {
            return Err(EngineError::Forbidden("common users delete only their own triples"));
        }
        Ok(self.graph.delete_triple(id)?)
    }

    /// One vote per user per ledger. Once the tally reaches the minimum the
    /// ledger resolves and its answers are written into the graph.
    fn cast_vote(&mut self, actor: UserId, ledger: LedgerId, unequal: bool) -> Result<VoteResult> {
        self.user(actor)?;
        if self.voters.get(&ledger).is_some_and(|v| v.contains(&actor)) {
            return Err(EngineError::AlreadyVoted { ledger, user: actor });
        }
        let tally = self.book.vote(ledger, unequal)?;
        self.voters.entry(ledger).or_default().insert(actor);
        let resolution = self.book.maybe_resolve(ledger)?;
        let filled = match &resolution {
            Some(_) => self.book.apply_resolution(&mut self.graph, ledger, Origin::system())?,
            None => Vec::new(),
        };
        Ok(VoteResult { ledger_id: ledger, tally, resolution, filled })
    }

    /// Tasks an actor may see: its own, its groups', or all of them.
    pub fn visible_tasks(&self, actor: UserId) -> Result<Vec<&Task>> {
        let user = self.user(actor)?;
        Ok(self
            .crowd
            .tasks()
            .filter(|t| match user.role {
                Role::SystemAdmin => true,
                Role::GroupAdmin => self.crowd.group(t.group_id).is_some_and(|g| g.admin_user_id == actor),
                Role::Common => t.assignee_id == Some(actor),
            })
            .collect())
    }

    pub fn open_ambiguities(&self) -> Vec<Ambiguity> {
        self.book
            .ledgers()
            .filter(|l| l.state == LedgerState::AmbiguityVote)
            .filter_map(|l| {
                let (primary, secondary) = l.top2().ok()?;
                let question = consensus::ambiguity_question(&primary, secondary.as_deref()?).ok()?;
                Some(Ambiguity {
                    ledger_id: l.id,
                    triple_id: l.slot.triple,
                    question,
                    primary,
                    secondary,
                    tally: l.votes,
                })
            })
            .collect()
    }

    /// Uses the stored learner record, or an empty one for students without.
    pub fn recommendations(&self, student: EntityId, p: Option<f64>) -> Result<RecommendationReport> {
        let config = match p {
            Some(p) => RecommendConfig::new(p)?,
            None => self.config.recommend.clone(),
        };
        let empty;
        let record = match self.learners.get(&student) {
            Some(r) => r,
            None => {
                empty = LearnerRecord::new(student);
                &empty
            }
        };
        Ok(recommend::recommend(&self.graph, record, &config)?)
    }
}
