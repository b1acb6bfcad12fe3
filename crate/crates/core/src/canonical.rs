//! Canonical relations: provenance grouped on the matching attributes.

use crate::error::{Error, Result};
use crate::relational::{Attribute, ProvenanceRelation, ProvenanceTuple, QueryKind, Value};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn tag(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

/// Semantic relation between the two sides of an attribute match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRelation {
    /// ≡: one-to-one.
    Equiv,
    /// ⊑: many left tuples to one right tuple.
    LessGeneral,
    /// ⊒: one left tuple to many right tuples.
    MoreGeneral,
}

impl MatchRelation {
    /// Whether tuples on `side` may take part in at most one evidence match.
    pub fn constrains(self, side: Side) -> bool {
        matches!(
            (self, side),
            (MatchRelation::Equiv, _) | (MatchRelation::LessGeneral, Side::Left) | (MatchRelation::MoreGeneral, Side::Right)
        )
    }

    pub fn symbol(self) -> &'static str {
        match self {
            MatchRelation::Equiv => "≡",
            MatchRelation::LessGeneral => "⊑",
            MatchRelation::MoreGeneral => "⊒",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMatch {
    pub left_attrs: Vec<String>,
    pub relation: MatchRelation,
    pub right_attrs: Vec<String>,
}

impl AttributeMatch {
    pub fn new(left: &[&str], relation: MatchRelation, right: &[&str]) -> Self {
        AttributeMatch {
            left_attrs: left.iter().map(|s| s.to_string()).collect(),
            relation,
            right_attrs: right.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn load_all(path: &Path) -> Result<Vec<AttributeMatch>> {
        crate::error::read_json(path)
    }

    pub fn attrs(&self, side: Side) -> &[String] {
        match side {
            Side::Left => &self.left_attrs,
            Side::Right => &self.right_attrs,
        }
    }
}

pub fn check_comparable(matches: &[AttributeMatch]) -> bool {
    !matches.is_empty()
}

/// Cardinality implied by a set of attribute matches and the query kinds.
///
/// Conflicting directions collapse to ≡, and AVG/MAX/MIN force ≡ because
/// their provenance cannot be grouped.
pub fn effective_relation(matches: &[AttributeMatch], kinds: [QueryKind; 2]) -> MatchRelation {
    if kinds.iter().any(|k| !k.is_additive()) {
        return MatchRelation::Equiv;
    }
    let less = matches.iter().any(|m| m.relation == MatchRelation::LessGeneral);
    let more = matches.iter().any(|m| m.relation == MatchRelation::MoreGeneral);
    match (less, more) {
        (true, false) => MatchRelation::LessGeneral,
        (false, true) => MatchRelation::MoreGeneral,
        _ => MatchRelation::Equiv,
    }
}

/// Key attributes of one side in declared order, without repeats.
pub fn key_attributes(matches: &[AttributeMatch], side: Side) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in matches {
        for a in m.attrs(side) {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTuple {
    pub row_id: String,
    pub key: Vec<Value>,
    pub impact: f64,
    /// Indices of the contributing provenance tuples.
    pub source_rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalRelation {
    pub side: Side,
    pub attributes: Vec<Attribute>,
    pub tuples: Vec<CanonicalTuple>,
    pub query_kind: QueryKind,
}

impl CanonicalRelation {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn impacts(&self) -> Vec<f64> {
        self.tuples.iter().map(|t| t.impact).collect()
    }

    pub fn total_impact(&self) -> f64 {
        self.tuples.iter().map(|t| t.impact).sum()
    }

    pub fn position(&self, row_id: &str) -> Option<usize> {
        self.tuples.iter().position(|t| t.row_id == row_id)
    }

    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.tuples.iter().enumerate().map(|(i, t)| (t.row_id.as_str(), i)).collect()
    }

    /// Views this relation as provenance over its key attributes.
    pub fn as_provenance(&self) -> ProvenanceRelation {
        ProvenanceRelation {
            schema: self.attributes.clone(),
            tuples: self
                .tuples
                .iter()
                .map(|t| ProvenanceTuple {
                    values: t.key.clone(),
                    impact: t.impact,
                })
                .collect(),
            query_kind: self.query_kind,
            integral: self.tuples.iter().all(|t| t.impact.fract() == 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum KeyPart {
    Text(String),
    Num(u64),
}

fn key_part(v: &Value) -> KeyPart {
    match v {
        Value::Text(s) => KeyPart::Text(s.trim().to_lowercase()),
        v => {
            let x = v.as_f64().unwrap();
            KeyPart::Num(if x == 0.0 { 0 } else { x.to_bits() })
        }
    }
}

fn key_label(key: &[Value]) -> String {
    key.iter()
        .map(|v| match v {
            Value::Text(s) => s.trim().to_lowercase(),
            v => v.to_string(),
        })
        .collect::<Vec<_>>()
        .join("|")
}

pub fn canonicalize(p: &ProvenanceRelation, matches: &[AttributeMatch], side: Side) -> Result<CanonicalRelation> {
    let attrs = key_attributes(matches, side);
    canonicalize_on(p, &attrs, side)
}

/// Groups `p` on `attrs` (in that order), summing impacts.
pub fn canonicalize_on(p: &ProvenanceRelation, attrs: &[String], side: Side) -> Result<CanonicalRelation> {
    let idx: Vec<usize> = attrs
        .iter()
        .map(|a| {
            p.attr_index(a).ok_or_else(|| Error::UnknownAttribute {
                attr: a.clone(),
                context: format!("{side:?} provenance"),
            })
        })
        .collect::<Result<_>>()?;
    let attributes = idx.iter().map(|&i| p.schema[i].clone()).collect();
    let mut tuples: Vec<CanonicalTuple> = Vec::new();
    if p.query_kind.is_additive() {
        let mut groups: HashMap<Vec<KeyPart>, usize> = HashMap::new();
        for (r, t) in p.tuples.iter().enumerate() {
            let key: Vec<Value> = idx.iter().map(|&i| t.values[i].clone()).collect();
            let parts: Vec<KeyPart> = key.iter().map(key_part).collect();
            match groups.get(&parts) {
                Some(&g) => {
                    tuples[g].impact += t.impact;
                    tuples[g].source_rows.push(r);
                }
                None => {
                    groups.insert(parts, tuples.len());
                    tuples.push(CanonicalTuple {
                        row_id: key_label(&key),
                        key,
                        impact: t.impact,
                        source_rows: vec![r],
                    });
                }
            }
        }
    } else {
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (r, t) in p.tuples.iter().enumerate() {
            let key: Vec<Value> = idx.iter().map(|&i| t.values[i].clone()).collect();
            let label = key_label(&key);
            let n = seen.entry(label.clone()).or_insert(0);
            *n += 1;
            let row_id = if *n == 1 { label } else { format!("{label}#{n}") };
            tuples.push(CanonicalTuple {
                row_id,
                key,
                impact: t.impact,
                source_rows: vec![r],
            });
        }
    }
    Ok(CanonicalRelation {
        side,
        attributes,
        tuples,
        query_kind: p.query_kind,
    })
}
