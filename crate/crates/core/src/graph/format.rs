//! `kgcf/1` line format.
//!
//! ```text
//! kgcf/1 <TAB> <clock> <TAB> <next entity> <TAB> <next triple>
//! entity <TAB> id <TAB> kind <TAB> label
//! attr   <TAB> entity id <TAB> key <TAB> value
//! eprov  <TAB> entity id <TAB> source <TAB> user|- <TAB> time
//! triple <TAB> id <TAB> subject <TAB> predicate <TAB> e|l <TAB> object <TAB> confidence <TAB> status
//! tprov  <TAB> triple id <TAB> source <TAB> user|- <TAB> time
//! ```
//!
//! Lines end in LF. Backslash, tab, LF and CR inside values are escaped as
//! `\\`, `\t`, `\n`, `\r`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{Entity, Graph, GraphError, Object, Provenance, Result, Source, Status, Triple};
use crate::ids::{Counter, EntityId, TripleId, UserId};

pub const FORMAT_VERSION: &str = "kgcf/1";

pub(crate) fn escape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(raw: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape `\\{other}`")),
            None => return Err("dangling escape at end of field".into()),
        }
    }
    Ok(out)
}

fn write_prov(out: &mut String, tag: &str, owner: &str, p: &Provenance) {
    let user = p.user.map(|u| u.to_string()).unwrap_or_else(|| "-".into());
    let _ = writeln!(out, "{tag}\t{owner}\t{}\t{user}\t{}", p.source.as_str(), p.logical_time);
}

/// Serializes the graph. Records appear in id order, so equal graphs export
/// to identical bytes.
pub fn export(graph: &Graph) -> String {
    let mut out = String::new();
    let _ =
        writeln!(out, "{FORMAT_VERSION}\t{}\t{}\t{}", graph.clock, graph.next_entity.peek(), graph.next_triple.peek());
    for e in graph.entities.values() {
        let _ = writeln!(out, "entity\t{}\t{}\t{}", e.id, escape(&e.kind), escape(&e.label));
        for (k, v) in &e.attrs {
            let _ = writeln!(out, "attr\t{}\t{}\t{}", e.id, escape(k), escape(v));
        }
        for p in &e.provenance {
            write_prov(&mut out, "eprov", &e.id.to_string(), p);
        }
    }
    for t in graph.triples.values() {
        let (tag, object) = match &t.object {
            Object::Entity(id) => ("e", id.to_string()),
            Object::Literal(s) => ("l", escape(s)),
        };
        let _ = writeln!(
            out,
            "triple\t{}\t{}\t{}\t{tag}\t{object}\t{}\t{}",
            t.id,
            t.subject,
            escape(&t.predicate),
            t.confidence,
            t.status.as_str()
        );
        for p in &t.provenance {
            write_prov(&mut out, "tprov", &t.id.to_string(), p);
        }
    }
    out
}

struct LineCtx {
    line: usize,
}

impl LineCtx {
    fn err(&self, message: impl Into<String>) -> GraphError {
        GraphError::Parse { line: self.line, message: message.into() }
    }

    fn fields<'a>(&self, raw: &'a str, expected: usize) -> Result<Vec<&'a str>> {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != expected {
            return Err(self.err(format!("`{}` record has {} fields, expected {expected}", fields[0], fields.len())));
        }
        Ok(fields)
    }

    fn parse<T: std::str::FromStr>(&self, raw: &str, what: &str) -> Result<T> {
        raw.parse().map_err(|_| self.err(format!("bad {what} `{raw}`")))
    }

    fn text(&self, raw: &str) -> Result<String> {
        unescape(raw).map_err(|m| self.err(m))
    }

    fn prov(&self, f: &[&str]) -> Result<Provenance> {
        let source = Source::parse(f[2]).ok_or_else(|| self.err(format!("bad source `{}`", f[2])))?;
        let user = match f[3] {
            "-" => None,
            raw => Some(self.parse::<UserId>(raw, "user id")?),
        };
        Ok(Provenance { source, user, logical_time: self.parse(f[4], "logical time")? })
    }
}

/// Parses a `kgcf/1` stream, checking the header version and referential
/// integrity. Errors carry the 1-based line number.
pub fn import(input: &str) -> Result<Graph> {
    let mut lines = input.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().expect("split yields at least one item");
    let ctx = LineCtx { line: 1 };
    let head: Vec<&str> = header.split('\t').collect();
    if head[0] != FORMAT_VERSION {
        return Err(ctx.err(format!("unsupported format version `{}`", head[0])));
    }
    if head.len() != 4 {
        return Err(ctx.err("header must carry clock and id counters"));
    }
    let clock: u64 = ctx.parse(head[1], "clock")?;
    let next_entity: u64 = ctx.parse(head[2], "entity counter")?;
    let next_triple: u64 = ctx.parse(head[3], "triple counter")?;

    let mut entities: BTreeMap<EntityId, Entity> = BTreeMap::new();
    let mut triples: BTreeMap<TripleId, Triple> = BTreeMap::new();
    let mut triple_lines: Vec<(usize, TripleId)> = Vec::new();
    let mut seen_spo = BTreeSet::new();

    for (line, raw) in lines {
        let ctx = LineCtx { line };
        if raw.is_empty() {
            continue;
        }
        let tag = raw.split('\t').next().unwrap_or_default();
        match tag {
            "entity" => {
                let f = ctx.fields(raw, 4)?;
                let id: EntityId = ctx.parse(f[1], "entity id")?;
                let kind = ctx.text(f[2])?;
                let label = ctx.text(f[3])?;
                super::validate_kind(&kind).map_err(|e| ctx.err(e.to_string()))?;
                super::validate_label(&label).map_err(|e| ctx.err(e.to_string()))?;
                if id.0 >= next_entity {
                    return Err(ctx.err(format!("{id} is not below the entity counter")));
                }
                let entity = Entity { id, kind, label, attrs: BTreeMap::new(), provenance: Vec::new() };
                if entities.insert(id, entity).is_some() {
                    return Err(ctx.err(format!("duplicate entity {id}")));
                }
            }
            "attr" => {
                let f = ctx.fields(raw, 4)?;
                let id: EntityId = ctx.parse(f[1], "entity id")?;
                let (k, v) = (ctx.text(f[2])?, ctx.text(f[3])?);
                let entity = entities.get_mut(&id).ok_or_else(|| ctx.err(format!("attr for unknown {id}")))?;
                entity.attrs.insert(k, v);
            }
            "eprov" => {
                let f = ctx.fields(raw, 5)?;
                let id: EntityId = ctx.parse(f[1], "entity id")?;
                let prov = ctx.prov(&f)?;
                let entity = entities.get_mut(&id).ok_or_else(|| ctx.err(format!("eprov for unknown {id}")))?;
                entity.provenance.push(prov);
            }
            "triple" => {
                let f = ctx.fields(raw, 8)?;
                let id: TripleId = ctx.parse(f[1], "triple id")?;
                let subject: EntityId = ctx.parse(f[2], "subject id")?;
                let predicate = ctx.text(f[3])?;
                let object = match f[4] {
                    "e" => Object::Entity(ctx.parse(f[5], "object id")?),
                    "l" => Object::Literal(ctx.text(f[5])?),
                    other => return Err(ctx.err(format!("bad object tag `{other}`"))),
                };
                let confidence: f64 = ctx.parse(f[6], "confidence")?;
                if !(0.0..=1.0).contains(&confidence) {
                    return Err(ctx.err(format!("confidence {confidence} outside [0, 1]")));
                }
                let status = Status::parse(f[7]).ok_or_else(|| ctx.err(format!("bad status `{}`", f[7])))?;
                if predicate.trim().is_empty() {
                    return Err(ctx.err("empty predicate"));
                }
                if id.0 >= next_triple {
                    return Err(ctx.err(format!("{id} is not below the triple counter")));
                }
                if !seen_spo.insert((subject, predicate.clone(), object.clone())) {
                    return Err(ctx.err(format!("duplicate (subject, predicate, object) at {id}")));
                }
                let triple = Triple { id, subject, predicate, object, confidence, status, provenance: Vec::new() };
                if triples.insert(id, triple).is_some() {
                    return Err(ctx.err(format!("duplicate triple {id}")));
                }
                triple_lines.push((line, id));
            }
            "tprov" => {
                let f = ctx.fields(raw, 5)?;
                let id: TripleId = ctx.parse(f[1], "triple id")?;
                let prov = ctx.prov(&f)?;
                let triple = triples.get_mut(&id).ok_or_else(|| ctx.err(format!("tprov for unknown {id}")))?;
                triple.provenance.push(prov);
            }
            other => return Err(ctx.err(format!("unknown record type `{other}`"))),
        }
    }

    for (line, id) in triple_lines {
        let t = &triples[&id];
        let missing = std::iter::once(t.subject).chain(t.object.entity()).find(|e| !entities.contains_key(e));
        if let Some(e) = missing {
            return Err(GraphError::Parse { line, message: format!("dangling reference to {e}") });
        }
    }

    Ok(Graph::from_parts(
        clock,
        Counter::starting_at(next_entity),
        Counter::starting_at(next_triple),
        entities.into_values().collect(),
        triples.into_values().collect(),
    ))
}
