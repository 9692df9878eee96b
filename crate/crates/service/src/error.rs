use kgcrowd::analytics::AnalyticsError;
use kgcrowd::captcha::CaptchaError;
use kgcrowd::consensus::ConsensusError;
use kgcrowd::crowd::CrowdError;
use kgcrowd::engine::EngineError;
use kgcrowd::graph::GraphError;
use kgcrowd::recommend::RecommendError;
use serde::Serialize;

/// Error body returned by every failing endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(400, "BadRequest", message)
    }

    pub fn unauthenticated() -> Self {
        ApiError::new(401, "Unauthenticated", "missing or invalid session token")
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(404, "NotFound", what)
    }

    pub fn method_not_allowed() -> Self {
        ApiError::new(405, "MethodNotAllowed", "method not allowed on this route")
    }

    pub fn challenge_pending() -> Self {
        ApiError::new(403, "ChallengePending", "answer the login challenge first")
    }
}

fn graph(e: &GraphError) -> (u16, &'static str) {
    match e {
        GraphError::EmptyLabel => (422, "EmptyLabel"),
        GraphError::InvalidKind(_) => (422, "InvalidKind"),
        GraphError::EmptyPredicate => (422, "EmptyPredicate"),
        GraphError::DanglingReference(_) => (422, "DanglingReference"),
        GraphError::ConfidenceOutOfRange(_) => (422, "ConfidenceOutOfRange"),
        GraphError::EntityInUse(_) => (422, "EntityInUse"),
        GraphError::Parse { .. } => (422, "Parse"),
        GraphError::UnknownTriple(_) => (404, "UnknownTriple"),
        GraphError::UnknownEntity(_) => (404, "UnknownEntity"),
        GraphError::IllegalTransition { .. } => (409, "IllegalTransition"),
    }
}

fn consensus(e: &ConsensusError) -> (u16, &'static str) {
    match e {
        ConsensusError::LedgerNotCollecting(_) => (409, "LedgerNotCollecting"),
        ConsensusError::EmptyLedger => (409, "EmptyLedger"),
        ConsensusError::EmptyAnswer => (422, "EmptyAnswer"),
        ConsensusError::SameAnswer => (422, "SameAnswer"),
        ConsensusError::TooFewVotes { .. } => (409, "TooFewVotes"),
        ConsensusError::InvalidTally { .. } => (422, "InvalidTally"),
        ConsensusError::NotInAmbiguityVote(_) => (409, "NotInAmbiguityVote"),
        ConsensusError::NotResolved(_) => (409, "NotResolved"),
        ConsensusError::SlotAlreadyFilled(_) => (409, "SlotAlreadyFilled"),
        ConsensusError::UnknownLedger(_) => (404, "UnknownLedger"),
        ConsensusError::InvalidConfig(_) => (422, "InvalidConfig"),
        ConsensusError::Graph(g) => graph(g),
    }
}

fn crowd(e: &CrowdError) -> (u16, &'static str) {
    match e {
        CrowdError::Unauthorized => (403, "Forbidden"),
        CrowdError::NotAssignee => (403, "NotAssignee"),
        CrowdError::AlreadyInGroup(_) => (409, "AlreadyInGroup"),
        CrowdError::UnknownGroup(_) => (404, "UnknownGroup"),
        CrowdError::UnknownUser(_) => (404, "UnknownUser"),
        CrowdError::UnknownTask(_) => (404, "UnknownTask"),
        CrowdError::NotCommonUser(_) => (422, "NotCommonUser"),
        CrowdError::NotMember(_) => (422, "NotMember"),
        CrowdError::NoEligibleGroups => (409, "NoEligibleGroups"),
        CrowdError::EmptyBatch => (422, "EmptyBatch"),
        CrowdError::WrongState { .. } => (409, "WrongState"),
        CrowdError::WrongPayloadKind(_) => (422, "WrongPayloadKind"),
        CrowdError::Graph(g) => graph(g),
    }
}

fn captcha(e: &CaptchaError) -> (u16, &'static str) {
    match e {
        CaptchaError::EmptyStore => (409, "EmptyStore"),
        CaptchaError::ChallengeClosed(_) => (409, "ChallengeClosed"),
        CaptchaError::UnknownChallenge(_) => (404, "UnknownChallenge"),
        CaptchaError::EmptyAnswer => (422, "EmptyAnswer"),
        CaptchaError::InvalidAnswer => (422, "InvalidAnswer"),
        CaptchaError::UnknownTriple(_) => (404, "UnknownTriple"),
        CaptchaError::InvalidConfig(_) => (422, "InvalidConfig"),
        CaptchaError::Graph(g) => graph(g),
        CaptchaError::Consensus(c) => consensus(c),
    }
}

fn recommend(e: &RecommendError) -> (u16, &'static str) {
    match e {
        RecommendError::NoResources => (422, "NoResources"),
        RecommendError::UnstartedTopic => (422, "UnstartedTopic"),
        RecommendError::OutOfRange => (422, "OutOfRange"),
        RecommendError::UnknownStudent(_) => (404, "UnknownStudent"),
        RecommendError::InvalidRecord(_) => (422, "InvalidRecord"),
        RecommendError::InvalidThreshold(_) => (422, "InvalidThreshold"),
    }
}

fn analytics(e: &AnalyticsError) -> (u16, &'static str) {
    match e {
        AnalyticsError::NoRoute(..) => (404, "NoRoute"),
        AnalyticsError::UnknownCourse(_) => (404, "UnknownCourse"),
        AnalyticsError::UnknownStudent(_) => (404, "UnknownStudent"),
        AnalyticsError::UnknownSubgraphKind(_) => (404, "UnknownSubgraphKind"),
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match &e {
            EngineError::Forbidden(_) => (403, "Forbidden"),
            EngineError::UnknownSession(_) => (401, "Unauthenticated"),
            EngineError::UnknownUser(_) => (404, "UnknownUser"),
            EngineError::DuplicateName(_) => (409, "DuplicateName"),
            EngineError::ChallengeMismatch(_) => (409, "ChallengeMismatch"),
            EngineError::AlreadyVoted { .. } => (409, "AlreadyVoted"),
            EngineError::InvalidInput(_) => (422, "InvalidInput"),
            EngineError::Graph(g) => graph(g),
            EngineError::Crowd(c) => crowd(c),
            EngineError::Captcha(c) => captcha(c),
            EngineError::Consensus(c) => consensus(c),
            EngineError::Recommend(r) => recommend(r),
            EngineError::Analytics(a) => analytics(a),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        EngineError::from(e).into()
    }
}
