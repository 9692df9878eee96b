//! Built-in entity kinds and canonical predicates of the teaching domain.
//!
//! Kinds are open string tags; the ones listed here are what the analytics and
//! recommendation modules look for.

pub const SCHOOL: &str = "school";
pub const COURSE: &str = "course";
pub const CHAPTER: &str = "chapter";
pub const KNOWLEDGE: &str = "knowledge";
pub const RESOURCE: &str = "resource";
pub const SUBJECT: &str = "subject";
pub const EXERCISE: &str = "exercise";
pub const TEACHER: &str = "teacher";
pub const STUDENT: &str = "student";
pub const CREATOR: &str = "creator";

/// Fine-grained concept node linked to courses.
pub const KNOWLEDGE_POINT: &str = "knowledgepoint";
pub const CATEGORY: &str = "category";
pub const VIDEO: &str = "video";
pub const NOTE: &str = "note";

pub const BUILTIN_KINDS: &[&str] = &[
    SCHOOL,
    COURSE,
    CHAPTER,
    KNOWLEDGE,
    RESOURCE,
    SUBJECT,
    EXERCISE,
    TEACHER,
    STUDENT,
    CREATOR,
    KNOWLEDGE_POINT,
    CATEGORY,
    VIDEO,
    NOTE,
];

pub mod predicate {
    /// teacher -> course
    pub const OFFERS: &str = "offers";
    /// student -> course
    pub const LEARNED: &str = "learned";
    /// course -> subject
    pub const COURSE_SUBJECT: &str = "course-subject";
    /// course -> category
    pub const IN_CATEGORY: &str = "in-category";
    /// course -> knowledge point
    pub const COVERS: &str = "covers";
    /// knowledge point -- knowledge point
    pub const RELATED_TO: &str = "related-to";
    /// course -> course
    pub const PREREQUISITE: &str = "prerequisite";
    /// exercise -> knowledge point
    pub const EXERCISE_OF: &str = "exercise-of";
    /// resource (exercise, video, note, other) -> course
    pub const RESOURCE_OF: &str = "resource-of";
    /// entity -> concept; drives the concept-catechism question form
    pub const IS_A: &str = "is-a";
    pub const DEFINITION: &str = "definition";
}

pub fn is_builtin_kind(kind: &str) -> bool {
    BUILTIN_KINDS.contains(&kind)
}

/// Predicates that ask what a thing *is* rather than how it relates.
pub fn is_concept_predicate(predicate: &str) -> bool {
    matches!(predicate, predicate::IS_A | predicate::DEFINITION | "is a" | "instance-of")
}
