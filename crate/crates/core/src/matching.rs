//! Tuple similarity and the calibrated probabilistic tuple mapping.

use crate::canonical::{AttributeMatch, CanonicalRelation, CanonicalTuple, Side};
use crate::error::{Error, Result};
use crate::relational::Value;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

/// Lower-cased whitespace tokens.
pub fn tokens(s: &str) -> HashSet<String> {
    s.split_whitespace().map(|t| t.to_lowercase()).collect()
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

pub fn jaccard_str(a: &str, b: &str) -> f64 {
    jaccard(&tokens(a), &tokens(b))
}

pub fn euclidean(a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (a - b).abs())
}

#[derive(Clone, Debug)]
enum Feature {
    Num(f64),
    Tokens(HashSet<String>),
}

impl Feature {
    fn sim(&self, other: &Feature) -> f64 {
        match (self, other) {
            (Feature::Num(a), Feature::Num(b)) => euclidean(*a, *b),
            (Feature::Tokens(a), Feature::Tokens(b)) => jaccard(a, b),
            _ => 0.0,
        }
    }
}

/// Per attribute match, whether both sides are a single numeric attribute.
fn numeric_matches(t1: &CanonicalRelation, t2: &CanonicalRelation, matches: &[AttributeMatch]) -> Vec<bool> {
    let single_numeric = |rel: &CanonicalRelation, attrs: &[String]| {
        attrs.len() == 1
            && rel
                .attributes
                .iter()
                .find(|a| a.name == attrs[0])
                .is_some_and(|a| a.kind.is_numeric())
    };
    matches
        .iter()
        .map(|m| single_numeric(t1, &m.left_attrs) && single_numeric(t2, &m.right_attrs))
        .collect()
}

fn features(
    rel: &CanonicalRelation,
    matches: &[AttributeMatch],
    numeric: &[bool],
    side: Side,
) -> Result<Vec<Vec<Feature>>> {
    let positions: Vec<Vec<usize>> = matches
        .iter()
        .map(|m| {
            m.attrs(side)
                .iter()
                .map(|a| {
                    rel.attributes
                        .iter()
                        .position(|x| &x.name == a)
                        .ok_or_else(|| Error::UnknownAttribute {
                            attr: a.clone(),
                            context: format!("{side:?} canonical relation"),
                        })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rel
        .tuples
        .iter()
        .map(|t| feature_row(t, &positions, numeric))
        .collect())
}

fn feature_row(t: &CanonicalTuple, positions: &[Vec<usize>], numeric: &[bool]) -> Vec<Feature> {
    positions
        .iter()
        .zip(numeric)
        .map(|(pos, &num)| {
            if num {
                Feature::Num(t.key[pos[0]].as_f64().unwrap_or(f64::NAN))
            } else {
                let text: Vec<String> = pos.iter().map(|&p| value_text(&t.key[p])).collect();
                Feature::Tokens(tokens(&text.join(" ")))
            }
        })
        .collect()
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        v => v.to_string(),
    }
}

fn mean_sim(a: &[Feature], b: &[Feature]) -> f64 {
    let total: f64 = a.iter().zip(b).map(|(x, y)| x.sim(y)).sum();
    total / a.len() as f64
}

/// Mean per-attribute-match similarity of two canonical tuples.
pub fn tuple_similarity(
    t1: &CanonicalRelation,
    i: usize,
    t2: &CanonicalRelation,
    j: usize,
    matches: &[AttributeMatch],
) -> Result<f64> {
    let numeric = numeric_matches(t1, t2, matches);
    let f1 = features(t1, matches, &numeric, Side::Left)?;
    let f2 = features(t2, matches, &numeric, Side::Right)?;
    Ok(mean_sim(&f1[i], &f2[j]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleMatch {
    pub left: usize,
    pub right: usize,
    pub p: f64,
}

/// Candidate matches sorted by `(left, right)`, one per pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TupleMapping {
    pub matches: Vec<TupleMatch>,
}

/// A match addressed by canonical row ids, as stored in files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub left: String,
    pub right: String,
    pub p: f64,
}

impl TupleMapping {
    pub fn new(mut matches: Vec<TupleMatch>) -> Result<Self> {
        matches.sort_by_key(|m| (m.left, m.right));
        for w in matches.windows(2) {
            if (w[0].left, w[0].right) == (w[1].left, w[1].right) {
                return Err(Error::Invalid(format!("duplicate match ({}, {})", w[0].left, w[0].right)));
            }
        }
        if let Some(m) = matches.iter().find(|m| !(m.p > 0.0 && m.p <= 1.0)) {
            return Err(Error::Invalid(format!("match probability {} outside (0, 1]", m.p)));
        }
        Ok(TupleMapping { matches })
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn from_records(records: &[MatchRecord], t1: &CanonicalRelation, t2: &CanonicalRelation) -> Result<Self> {
        let (i1, i2) = (t1.row_index(), t2.row_index());
        let lookup = |idx: &HashMap<&str, usize>, id: &str, side: &str| {
            idx.get(id)
                .or_else(|| idx.get(id.trim().to_lowercase().as_str()))
                .copied()
                .ok_or_else(|| Error::Invalid(format!("mapping refers to unknown {side} row {id:?}")))
        };
        let matches = records
            .iter()
            .map(|r| {
                Ok(TupleMatch {
                    left: lookup(&i1, &r.left, "left")?,
                    right: lookup(&i2, &r.right, "right")?,
                    p: r.p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TupleMapping::new(matches)
    }

    pub fn to_records(&self, t1: &CanonicalRelation, t2: &CanonicalRelation) -> Vec<MatchRecord> {
        self.matches
            .iter()
            .map(|m| MatchRecord {
                left: t1.tuples[m.left].row_id.clone(),
                right: t2.tuples[m.right].row_id.clone(),
                p: m.p,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub bucket_count: usize,
    /// Pairs with similarity at or below this are not candidates.
    pub floor: f64,
    /// Use raw similarity as probability when there are no labels.
    pub raw_fallback: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            bucket_count: 50,
            floor: 0.0,
            raw_fallback: false,
        }
    }
}

/// All pairs with similarity above `floor`, sorted by `(left, right)`.
pub fn candidate_pairs(
    t1: &CanonicalRelation,
    t2: &CanonicalRelation,
    matches: &[AttributeMatch],
    floor: f64,
) -> Result<Vec<(usize, usize, f64)>> {
    let numeric = numeric_matches(t1, t2, matches);
    let f1 = features(t1, matches, &numeric, Side::Left)?;
    let f2 = features(t2, matches, &numeric, Side::Right)?;
    let empty_tokens = |rows: &[Vec<Feature>]| {
        rows.iter()
            .flatten()
            .any(|f| matches!(f, Feature::Tokens(t) if t.is_empty()))
    };
    // With only token features and floor ≥ 0, a pair scores above the floor
    // only if it shares a token in some attribute match.
    let indexed = floor >= 0.0 && !numeric.iter().any(|&n| n) && !empty_tokens(&f1) && !empty_tokens(&f2);
    let pairs: Vec<Vec<(usize, usize, f64)>> = if indexed {
        let mut index: HashMap<(usize, &str), Vec<usize>> = HashMap::new();
        for (j, row) in f2.iter().enumerate() {
            for (k, f) in row.iter().enumerate() {
                if let Feature::Tokens(ts) = f {
                    for t in ts {
                        index.entry((k, t.as_str())).or_default().push(j);
                    }
                }
            }
        }
        f1.par_iter()
            .map(|row| {
                let mut js: Vec<usize> = Vec::new();
                for (k, f) in row.iter().enumerate() {
                    if let Feature::Tokens(ts) = f {
                        for t in ts {
                            if let Some(v) = index.get(&(k, t.as_str())) {
                                js.extend_from_slice(v);
                            }
                        }
                    }
                }
                js.sort_unstable();
                js.dedup();
                js.into_iter().map(|j| (j, mean_sim(row, &f2[j]))).collect::<Vec<_>>()
            })
            .enumerate()
            .map(|(i, v)| v.into_iter().filter(|&(_, s)| s > floor).map(|(j, s)| (i, j, s)).collect())
            .collect()
    } else {
        f1.par_iter()
            .enumerate()
            .map(|(i, row)| {
                f2.iter()
                    .enumerate()
                    .map(|(j, r2)| (i, j, mean_sim(row, r2)))
                    .filter(|&(_, _, s)| s > floor)
                    .collect()
            })
            .collect()
    };
    Ok(pairs.into_iter().flatten().collect())
}

/// Isotonic (non-decreasing) fit of `values` with `weights`, pool adjacent violators.
pub fn isotonic(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let (v2, w2, c2) = blocks.pop().unwrap();
            let (v1, w1, c1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, c)| std::iter::repeat_n(v, c))
        .collect()
}

fn bucket(sim: f64, k: usize) -> usize {
    ((sim * k as f64).floor() as usize).min(k - 1)
}

/// Per-bucket probabilities estimated from labeled candidates.
///
/// A candidate counts as labeled when either endpoint occurs in a labeled
/// pair; it is true when the pair itself is labeled.
pub fn bucket_probabilities(
    candidates: &[(usize, usize, f64)],
    labels: &HashSet<(usize, usize)>,
    k: usize,
) -> Option<Vec<f64>> {
    let lefts: HashSet<usize> = labels.iter().map(|l| l.0).collect();
    let rights: HashSet<usize> = labels.iter().map(|l| l.1).collect();
    let mut labeled = vec![0.0; k];
    let mut hits = vec![0.0; k];
    for &(i, j, s) in candidates {
        if lefts.contains(&i) || rights.contains(&j) {
            let b = bucket(s, k);
            labeled[b] += 1.0;
            if labels.contains(&(i, j)) {
                hits[b] += 1.0;
            }
        }
    }
    let seen: Vec<usize> = (0..k).filter(|&b| labeled[b] > 0.0).collect();
    if seen.is_empty() {
        return None;
    }
    let ratios: Vec<f64> = seen.iter().map(|&b| hits[b] / labeled[b]).collect();
    let weights: Vec<f64> = seen.iter().map(|&b| labeled[b]).collect();
    let fitted = isotonic(&ratios, &weights);
    // empty buckets borrow from the nearest labeled bucket, lower on ties
    let mut out = vec![0.0; k];
    for (b, slot) in out.iter_mut().enumerate() {
        let pos = seen.partition_point(|&s| s < b);
        let pick = if pos < seen.len() && seen[pos] == b {
            pos
        } else if pos == 0 {
            0
        } else if pos == seen.len() || b - seen[pos - 1] <= seen[pos] - b {
            pos - 1
        } else {
            pos
        };
        *slot = fitted[pick];
    }
    Some(out)
}

/// Builds the tuple mapping from similarities, calibrated against `labels`
/// (pairs of canonical row ids known to correspond).
pub fn calibrate_mapping(
    t1: &CanonicalRelation,
    t2: &CanonicalRelation,
    matches: &[AttributeMatch],
    labels: &[(String, String)],
    cfg: &CalibrationConfig,
) -> Result<TupleMapping> {
    if cfg.bucket_count == 0 {
        return Err(Error::Calibration("bucket count must be positive".into()));
    }
    let candidates = candidate_pairs(t1, t2, matches, cfg.floor)?;
    let (i1, i2) = (t1.row_index(), t2.row_index());
    let resolved: HashSet<(usize, usize)> = labels
        .iter()
        .filter_map(|(l, r)| Some((*i1.get(l.as_str())?, *i2.get(r.as_str())?)))
        .collect();
    let probs = if resolved.is_empty() {
        None
    } else {
        bucket_probabilities(&candidates, &resolved, cfg.bucket_count)
    };
    let matches = match probs {
        Some(p) => candidates
            .into_iter()
            .map(|(i, j, s)| TupleMatch {
                left: i,
                right: j,
                p: p[bucket(s, cfg.bucket_count)].min(1.0),
            })
            .filter(|m| m.p > 0.0)
            .collect(),
        None if cfg.raw_fallback => candidates
            .into_iter()
            .map(|(i, j, s)| TupleMatch {
                left: i,
                right: j,
                p: s.min(1.0),
            })
            .collect(),
        None => {
            return Err(Error::Calibration(
                "no labeled candidate pairs; supply labels or enable the raw-similarity fallback".into(),
            ))
        }
    };
    TupleMapping::new(matches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{canonicalize_on, MatchRelation};
    use crate::relational::{Attribute, ProvenanceRelation, ProvenanceTuple, QueryKind, ValueKind};

    fn rel(side: Side, keys: &[&str]) -> CanonicalRelation {
        let p = ProvenanceRelation {
            schema: vec![Attribute::new("k", ValueKind::Text)],
            tuples: keys
                .iter()
                .map(|k| ProvenanceTuple {
                    values: vec![Value::Text(k.to_string())],
                    impact: 1.0,
                })
                .collect(),
            query_kind: QueryKind::Count,
            integral: true,
        };
        canonicalize_on(&p, &["k".into()], side).unwrap()
    }

    #[test]
    fn similarity_functions() {
        assert_eq!(jaccard_str("computer science", "Computer Engineering"), 1.0 / 3.0);
        assert_eq!(jaccard_str("CS", "CSE"), 0.0);
        assert_eq!(euclidean(3.0, 5.0), 1.0 / 3.0);
        assert_eq!(euclidean(2.5, 2.5), 1.0);
    }

    #[test]
    fn pav_pools_violators() {
        let fit = isotonic(&[0.5, 0.2, 0.8], &[1.0, 1.0, 2.0]);
        assert_eq!(fit, vec![0.35, 0.35, 0.8]);
    }

    #[test]
    fn indexed_candidates_equal_all_pairs() {
        let t1 = rel(Side::Left, &["a b", "c d", "e"]);
        let t2 = rel(Side::Right, &["b c", "x", "e f", "d"]);
        let m = [AttributeMatch::new(&["k"], MatchRelation::Equiv, &["k"])];
        let c = candidate_pairs(&t1, &t2, &m, 0.0).unwrap();
        let mut brute = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                let s = tuple_similarity(&t1, i, &t2, j, &m).unwrap();
                if s > 0.0 {
                    brute.push((i, j, s));
                }
            }
        }
        assert_eq!(c, brute);
    }

    #[test]
    fn calibration_with_exact_labels() {
        let t1 = rel(Side::Left, &["data science", "art"]);
        let t2 = rel(Side::Right, &["data science", "science", "fine art"]);
        let m = [AttributeMatch::new(&["k"], MatchRelation::Equiv, &["k"])];
        let labels = vec![("data science".to_string(), "data science".to_string())];
        let map = calibrate_mapping(&t1, &t2, &m, &labels, &CalibrationConfig::default()).unwrap();
        // (data science, science) is labeled false at 0.5, and (art, fine art)
        // shares that bucket
        assert_eq!(map.matches, vec![TupleMatch { left: 0, right: 0, p: 1.0 }]);
        assert!(calibrate_mapping(&t1, &t2, &m, &[], &CalibrationConfig::default()).is_err());
        let raw = CalibrationConfig {
            raw_fallback: true,
            ..Default::default()
        };
        assert_eq!(calibrate_mapping(&t1, &t2, &m, &[], &raw).unwrap().len(), 3);
    }

    #[test]
    fn mapping_rejects_bad_probabilities() {
        assert!(TupleMapping::new(vec![TupleMatch { left: 0, right: 0, p: 0.0 }]).is_err());
        assert!(TupleMapping::new(vec![TupleMatch { left: 0, right: 0, p: 0.5 }; 2]).is_err());
    }
}
