//! Relations, the supported query class and provenance extraction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Integer,
    Real,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, ValueKind::Text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Integer(_) => ValueKind::Integer,
            Value::Real(_) => ValueKind::Real,
            Value::Text(_) => ValueKind::Text,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Integer(i) => Some(i as f64),
            Value::Real(r) => Some(r),
            Value::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Ordering between comparable values; text never compares with numbers.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (a, b) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        }
    }

    fn parse(raw: &str, kind: ValueKind) -> std::result::Result<Value, String> {
        match kind {
            ValueKind::Text => Ok(Value::Text(raw.to_string())),
            ValueKind::Integer => raw
                .trim()
                .parse::<i64>()
                .map(Value::Integer)
                .map_err(|_| format!("{raw:?} is not an integer")),
            ValueKind::Real => match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Real(v)),
                _ => Err(format!("{raw:?} is not a finite real")),
            },
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: ValueKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Attribute { name: name.into(), kind }
    }
}

/// Declared schema of a stored relation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Schema> {
        let s: Schema = crate::error::read_json(path)?;
        check_unique(&s.attributes, &s.name)?;
        Ok(s)
    }
}

fn check_unique(attrs: &[Attribute], context: &str) -> Result<()> {
    for (i, a) in attrs.iter().enumerate() {
        if attrs[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::Schema(format!("duplicate attribute {} in {context}", a.name)));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub schema: Vec<Attribute>,
    pub rows: Vec<Vec<Value>>,
}

impl Relation {
    pub fn new(name: impl Into<String>, schema: Vec<Attribute>) -> Self {
        Relation {
            name: name.into(),
            schema,
            rows: Vec::new(),
        }
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.attr_index(name).ok_or_else(|| Error::UnknownAttribute {
            attr: name.to_string(),
            context: self.name.clone(),
        })
    }

    /// Writes the relation as CSV with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path.display().to_string(), e.into()))?;
        let io = |e: csv::Error| Error::io(path.display().to_string(), e.into());
        w.write_record(self.schema.iter().map(|a| a.name.as_str())).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }
}

/// Loads `path` against a declared schema. Empty cells are rejected.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Relation> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_csv(file, path, schema)
}

pub(crate) fn read_csv<R: std::io::Read>(input: R, path: &Path, schema: &Schema) -> Result<Relation> {
    check_unique(&schema.attributes, &schema.name)?;
    let err = |row: usize, column: usize, msg: String| Error::Load {
        path: path.to_path_buf(),
        row,
        column,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers().map_err(|e| err(1, 0, e.to_string()))?.clone();
    if header.len() != schema.attributes.len() {
        return Err(err(1, header.len(), format!("expected {} columns in header", schema.attributes.len())));
    }
    for (c, (h, a)) in header.iter().zip(&schema.attributes).enumerate() {
        if h.trim() != a.name {
            return Err(err(1, c + 1, format!("header {h:?} does not match attribute {:?}", a.name)));
        }
    }
    let mut rel = Relation::new(schema.name.clone(), schema.attributes.clone());
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| err(line, 0, e.to_string()))?;
        if rec.len() != schema.attributes.len() {
            return Err(err(line, rec.len(), format!("expected {} fields", schema.attributes.len())));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, (cell, a)) in rec.iter().zip(&schema.attributes).enumerate() {
            if cell.trim().is_empty() {
                return Err(err(line, c + 1, "empty cell (NULL values are not supported)".into()));
            }
            row.push(Value::parse(cell, a.kind).map_err(|m| err(line, c + 1, m))?);
        }
        rel.rows.push(row);
    }
    Ok(rel)
}

pub type Database = BTreeMap<String, Relation>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Relation(String),
    Join {
        left: Box<Source>,
        right: Box<Source>,
        on: Vec<(String, String)>,
    },
    Union(Vec<Source>),
    Query(Box<QuerySpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    fn holds(self, o: Ordering) -> bool {
        match self {
            CmpOp::Eq => o == Ordering::Equal,
            CmpOp::Ne => o != Ordering::Equal,
            CmpOp::Lt => o == Ordering::Less,
            CmpOp::Le => o != Ordering::Greater,
            CmpOp::Gt => o == Ordering::Greater,
            CmpOp::Ge => o != Ordering::Less,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Value(Value),
    #[serde(rename = "other_attr")]
    Attr(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Cmp {
        attr: String,
        op: CmpOp,
        #[serde(flatten)]
        rhs: Operand,
    },
    And(Vec<Condition>),
    Or(Vec<Condition>),
    Not(Box<Condition>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggKind {
    Sum,
    Count,
    Avg,
    Max,
    Min,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Attributes(Vec<String>),
    Aggregate {
        func: AggKind,
        #[serde(default)]
        attribute: Option<String>,
    },
}

/// `π_o σ_C (X)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub source: Source,
    #[serde(default)]
    pub condition: Option<Condition>,
    pub projection: Projection,
}

impl QuerySpec {
    pub fn load(path: &Path) -> Result<QuerySpec> {
        crate::error::read_json(path)
    }

    pub fn kind(&self) -> QueryKind {
        match self.projection {
            Projection::Attributes(_) => QueryKind::NonAggregate,
            Projection::Aggregate { func, .. } => match func {
                AggKind::Sum => QueryKind::Sum,
                AggKind::Count => QueryKind::Count,
                AggKind::Avg => QueryKind::Avg,
                AggKind::Max => QueryKind::Max,
                AggKind::Min => QueryKind::Min,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    NonAggregate,
    Sum,
    Count,
    Avg,
    Max,
    Min,
}

impl QueryKind {
    /// Kinds whose canonical relations are grouped by summing impacts.
    pub fn is_additive(self) -> bool {
        matches!(self, QueryKind::NonAggregate | QueryKind::Sum | QueryKind::Count)
    }
}

fn source_name(s: &Source) -> String {
    match s {
        Source::Relation(n) => n.clone(),
        Source::Join { .. } => "join".into(),
        Source::Union(_) => "union".into(),
        Source::Query(_) => "subquery".into(),
    }
}

fn eval_source(src: &Source, db: &Database) -> Result<Relation> {
    match src {
        Source::Relation(name) => db.get(name).cloned().ok_or_else(|| Error::UnknownRelation(name.clone())),
        Source::Query(q) => evaluate_query(q, db),
        Source::Union(parts) => {
            let mut iter = parts.iter();
            let first = iter.next().ok_or_else(|| Error::Query("empty union".into()))?;
            let mut out = eval_source(first, db)?;
            out.name = "union".into();
            for p in iter {
                let r = eval_source(p, db)?;
                let same = r.schema.len() == out.schema.len()
                    && r.schema.iter().zip(&out.schema).all(|(a, b)| a.kind == b.kind);
                if !same {
                    return Err(Error::Query(format!("union operand {} has an incompatible schema", r.name)));
                }
                out.rows.extend(r.rows);
            }
            Ok(out)
        }
        Source::Join { left, right, on } => {
            let l = eval_source(left, db)?;
            let r = eval_source(right, db)?;
            if on.is_empty() {
                return Err(Error::Query("join without equality predicates".into()));
            }
            let mut lk = Vec::new();
            let mut rk = Vec::new();
            for (a, b) in on {
                lk.push(l.require(a)?);
                rk.push(r.require(b)?);
            }
            let rname = source_name(right);
            let mut schema = l.schema.clone();
            for a in &r.schema {
                let name = if schema.iter().any(|s| s.name == a.name) {
                    format!("{rname}.{}", a.name)
                } else {
                    a.name.clone()
                };
                schema.push(Attribute::new(name, a.kind));
            }
            check_unique(&schema, "join")?;
            let key = |row: &[Value], idx: &[usize]| -> Option<Vec<String>> {
                idx.iter()
                    .map(|&i| match &row[i] {
                        Value::Text(s) => Some(format!("t:{s}")),
                        v => v.as_f64().map(|x| format!("n:{:?}", x)),
                    })
                    .collect()
            };
            let mut index: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
            for (k, row) in r.rows.iter().enumerate() {
                if let Some(kv) = key(row, &rk) {
                    index.entry(kv).or_default().push(k);
                }
            }
            let mut out = Relation::new("join", schema);
            for lrow in &l.rows {
                if let Some(hits) = key(lrow, &lk).and_then(|kv| index.get(&kv)) {
                    for &k in hits {
                        let mut row = lrow.clone();
                        row.extend(r.rows[k].iter().cloned());
                        out.rows.push(row);
                    }
                }
            }
            Ok(out)
        }
    }
}

fn eval_condition(c: &Condition, rel: &Relation, row: &[Value]) -> Result<bool> {
    Ok(match c {
        Condition::Cmp { attr, op, rhs } => {
            let a = &row[rel.require(attr)?];
            let b = match rhs {
                Operand::Value(v) => v,
                Operand::Attr(n) => &row[rel.require(n)?],
            };
            let o = a
                .compare(b)
                .ok_or_else(|| Error::Query(format!("cannot compare {attr} ({a}) with {b}")))?;
            op.holds(o)
        }
        Condition::And(cs) => {
            for c in cs {
                if !eval_condition(c, rel, row)? {
                    return Ok(false);
                }
            }
            true
        }
        Condition::Or(cs) => {
            for c in cs {
                if eval_condition(c, rel, row)? {
                    return Ok(true);
                }
            }
            false
        }
        Condition::Not(c) => !eval_condition(c, rel, row)?,
    })
}

fn check_condition(c: &Condition, rel: &Relation) -> Result<()> {
    match c {
        Condition::Cmp { attr, rhs, .. } => {
            rel.require(attr)?;
            if let Operand::Attr(n) = rhs {
                rel.require(n)?;
            }
            Ok(())
        }
        Condition::And(cs) | Condition::Or(cs) => cs.iter().try_for_each(|c| check_condition(c, rel)),
        Condition::Not(c) => check_condition(c, rel),
    }
}

/// `σ_C(X)` materialized, plus the index of the aggregate attribute.
fn select(q: &QuerySpec, db: &Database) -> Result<(Relation, Option<usize>)> {
    let mut rel = eval_source(&q.source, db)?;
    let agg_idx = match &q.projection {
        Projection::Attributes(attrs) => {
            for a in attrs {
                rel.require(a)?;
            }
            None
        }
        Projection::Aggregate { func, attribute } => match (func, attribute) {
            (AggKind::Count, None) => None,
            (f, None) => return Err(Error::Query(format!("{f:?} needs an attribute"))),
            (f, Some(a)) => {
                let i = rel.require(a)?;
                if *f != AggKind::Count && !rel.schema[i].kind.is_numeric() {
                    return Err(Error::Query(format!("{f:?} over non-numeric attribute {a}")));
                }
                Some(i)
            }
        },
    };
    if let Some(c) = &q.condition {
        check_condition(c, &rel)?;
        let rows = std::mem::take(&mut rel.rows);
        for row in rows {
            if eval_condition(c, &rel, &row)? {
                rel.rows.push(row);
            }
        }
    }
    Ok((rel, agg_idx))
}

pub fn evaluate_query(q: &QuerySpec, db: &Database) -> Result<Relation> {
    let (sel, agg_idx) = select(q, db)?;
    match &q.projection {
        Projection::Attributes(attrs) => {
            let idx: Vec<usize> = attrs.iter().map(|a| sel.attr_index(a).unwrap()).collect();
            let schema = idx.iter().map(|&i| sel.schema[i].clone()).collect();
            let mut out = Relation::new(sel.name.clone(), schema);
            out.rows = sel.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
            Ok(out)
        }
        Projection::Aggregate { func, attribute } => {
            let label = format!("{:?}({})", func, attribute.as_deref().unwrap_or("*")).to_uppercase();
            let nums = || sel.rows.iter().map(|r| r[agg_idx.unwrap()].clone());
            let in_kind = agg_idx.map(|i| sel.schema[i].kind);
            let (kind, value) = match func {
                AggKind::Count => (ValueKind::Integer, Value::Integer(sel.rows.len() as i64)),
                AggKind::Sum => match in_kind {
                    Some(ValueKind::Integer) => (
                        ValueKind::Integer,
                        Value::Integer(nums().map(|v| match v {
                            Value::Integer(i) => i,
                            _ => unreachable!(),
                        }).sum()),
                    ),
                    _ => (ValueKind::Real, Value::Real(nums().filter_map(|v| v.as_f64()).sum())),
                },
                AggKind::Avg => {
                    if sel.rows.is_empty() {
                        return Err(Error::EmptyAverage);
                    }
                    let s: f64 = nums().filter_map(|v| v.as_f64()).sum();
                    (ValueKind::Real, Value::Real(s / sel.rows.len() as f64))
                }
                AggKind::Max | AggKind::Min => {
                    let mut best: Option<Value> = None;
                    for v in nums() {
                        let take = match &best {
                            None => true,
                            Some(b) => {
                                let o = v.compare(b).unwrap_or(Ordering::Equal);
                                if *func == AggKind::Max {
                                    o == Ordering::Greater
                                } else {
                                    o == Ordering::Less
                                }
                            }
                        };
                        if take {
                            best = Some(v);
                        }
                    }
                    let best = best.ok_or_else(|| Error::Query(format!("{func:?} over an empty selection")))?;
                    (in_kind.unwrap(), best)
                }
            };
            let mut out = Relation::new(sel.name.clone(), vec![Attribute::new(label, kind)]);
            out.rows.push(vec![value]);
            Ok(out)
        }
    }
}

/// Aggregate result as a number (row count for non-aggregate queries).
pub fn query_scalar(q: &QuerySpec, db: &Database) -> Result<f64> {
    let r = evaluate_query(q, db)?;
    match q.projection {
        Projection::Attributes(_) => Ok(r.rows.len() as f64),
        Projection::Aggregate { .. } => Ok(r.rows[0][0].as_f64().unwrap_or(f64::NAN)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceTuple {
    pub values: Vec<Value>,
    pub impact: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRelation {
    pub schema: Vec<Attribute>,
    pub tuples: Vec<ProvenanceTuple>,
    pub query_kind: QueryKind,
    /// Every impact is an integer.
    pub integral: bool,
}

impl ProvenanceRelation {
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    pub fn total_impact(&self) -> f64 {
        self.tuples.iter().map(|t| t.impact).sum()
    }
}

pub fn extract_provenance(q: &QuerySpec, db: &Database) -> Result<ProvenanceRelation> {
    let (sel, agg_idx) = select(q, db)?;
    let kind = q.kind();
    let impact_of = |row: &[Value]| match (kind, agg_idx) {
        (QueryKind::NonAggregate | QueryKind::Count, _) | (_, None) => 1.0,
        (_, Some(i)) => row[i].as_f64().unwrap(),
    };
    let tuples: Vec<ProvenanceTuple> = sel
        .rows
        .into_iter()
        .map(|values| {
            let impact = impact_of(&values);
            ProvenanceTuple { values, impact }
        })
        .collect();
    let integral = tuples.iter().all(|t| t.impact.fract() == 0.0);
    Ok(ProvenanceRelation {
        schema: sel.schema,
        tuples,
        query_kind: kind,
        integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(name: &str, cols: &[(&str, ValueKind)], rows: &[&[Value]]) -> Relation {
        let mut r = Relation::new(name, cols.iter().map(|(n, k)| Attribute::new(*n, *k)).collect());
        r.rows = rows.iter().map(|r| r.to_vec()).collect();
        r
    }

    fn t(s: &str) -> Value {
        Value::Text(s.into())
    }

    #[test]
    fn count_and_sum_of_empty_selection_are_zero() {
        let mut db = Database::new();
        db.insert("R".into(), rel("R", &[("a", ValueKind::Integer)], &[]));
        let count: QuerySpec =
            serde_json::from_str(r#"{"source":{"relation":"R"},"projection":{"aggregate":{"func":"COUNT"}}}"#).unwrap();
        assert_eq!(query_scalar(&count, &db).unwrap(), 0.0);
        let sum: QuerySpec = serde_json::from_str(
            r#"{"source":{"relation":"R"},"projection":{"aggregate":{"func":"SUM","attribute":"a"}}}"#,
        )
        .unwrap();
        assert_eq!(query_scalar(&sum, &db).unwrap(), 0.0);
        let avg: QuerySpec = serde_json::from_str(
            r#"{"source":{"relation":"R"},"projection":{"aggregate":{"func":"AVG","attribute":"a"}}}"#,
        )
        .unwrap();
        assert!(matches!(evaluate_query(&avg, &db), Err(Error::EmptyAverage)));
    }

    #[test]
    fn join_union_and_nested_sources() {
        let mut db = Database::new();
        db.insert(
            "P".into(),
            rel(
                "P",
                &[("id", ValueKind::Integer), ("dept", ValueKind::Text)],
                &[&[Value::Integer(1), t("cs")], &[Value::Integer(2), t("ee")], &[Value::Integer(3), t("cs")]],
            ),
        );
        db.insert(
            "D".into(),
            rel(
                "D",
                &[("dept", ValueKind::Text), ("size", ValueKind::Integer)],
                &[&[t("cs"), Value::Integer(10)], &[t("ee"), Value::Integer(4)]],
            ),
        );
        let q: QuerySpec = serde_json::from_str(
            r#"{
            "source":{"join":{"left":{"relation":"P"},"right":{"relation":"D"},"on":[["dept","dept"]]}},
            "condition":{"cmp":{"attr":"size","op":">","value":5}},
            "projection":{"aggregate":{"func":"SUM","attribute":"size"}}}"#,
        )
        .unwrap();
        assert_eq!(query_scalar(&q, &db).unwrap(), 20.0);
        let p = extract_provenance(&q, &db).unwrap();
        assert_eq!(p.schema.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(), ["id", "dept", "D.dept", "size"]);
        assert_eq!(p.tuples.iter().map(|t| t.impact).collect::<Vec<_>>(), [10.0, 10.0]);

        let u: QuerySpec = serde_json::from_str(
            r#"{"source":{"union":[{"relation":"P"},{"query":{"source":{"relation":"P"},
                "condition":{"not":{"cmp":{"attr":"dept","op":"=","value":"cs"}}},
                "projection":{"attributes":["id","dept"]}}}]},
            "projection":{"aggregate":{"func":"COUNT","attribute":"id"}}}"#,
        )
        .unwrap();
        assert_eq!(query_scalar(&u, &db).unwrap(), 4.0);
    }

    #[test]
    fn max_min_avg() {
        let mut db = Database::new();
        db.insert(
            "R".into(),
            rel("R", &[("v", ValueKind::Real)], &[&[Value::Real(1.5)], &[Value::Real(4.0)], &[Value::Real(-2.0)]]),
        );
        let mk = |f: &str| -> QuerySpec {
            serde_json::from_str(&format!(
                r#"{{"source":{{"relation":"R"}},"projection":{{"aggregate":{{"func":"{f}","attribute":"v"}}}}}}"#
            ))
            .unwrap()
        };
        assert_eq!(query_scalar(&mk("MAX"), &db).unwrap(), 4.0);
        assert_eq!(query_scalar(&mk("MIN"), &db).unwrap(), -2.0);
        assert_eq!(query_scalar(&mk("AVG"), &db).unwrap(), 3.5 / 3.0);
    }

    #[test]
    fn unknown_names_are_reported() {
        let db = Database::new();
        let q: QuerySpec =
            serde_json::from_str(r#"{"source":{"relation":"Nope"},"projection":{"aggregate":{"func":"COUNT"}}}"#).unwrap();
        assert!(matches!(evaluate_query(&q, &db), Err(Error::UnknownRelation(_))));
        let mut db = Database::new();
        db.insert("R".into(), rel("R", &[("a", ValueKind::Text)], &[]));
        let q: QuerySpec = serde_json::from_str(
            r#"{"source":{"relation":"R"},"projection":{"aggregate":{"func":"SUM","attribute":"a"}}}"#,
        )
        .unwrap();
        assert!(matches!(evaluate_query(&q, &db), Err(Error::Query(_))));
    }

    #[test]
    fn csv_errors_carry_positions() {
        let schema = Schema {
            name: "R".into(),
            attributes: vec![Attribute::new("a", ValueKind::Text), Attribute::new("n", ValueKind::Integer)],
        };
        let p = Path::new("mem.csv");
        let ok = read_csv("a,n\nx,1\ny,2\n".as_bytes(), p, &schema).unwrap();
        assert_eq!(ok.rows.len(), 2);
        let empty = read_csv("a,n\n".as_bytes(), p, &schema).unwrap();
        assert!(empty.rows.is_empty());
        match read_csv("a,n\nx,1\ny,two\n".as_bytes(), p, &schema) {
            Err(Error::Load { row: 3, column: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_csv("a,n\n,1\n".as_bytes(), p, &schema) {
            Err(Error::Load { row: 2, column: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(read_csv("a,m\n".as_bytes(), p, &schema).is_err());
        let dup = Schema {
            name: "R".into(),
            attributes: vec![Attribute::new("a", ValueKind::Text), Attribute::new("a", ValueKind::Text)],
        };
        assert!(matches!(read_csv("a,a\n".as_bytes(), p, &dup), Err(Error::Schema(_))));
    }
}
