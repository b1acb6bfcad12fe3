//! Synthetic dataset pairs with known differences.

use crate::canonical::{AttributeMatch, MatchRelation, Side};
use crate::error::{Error, Result};
use crate::relational::{AggKind, Attribute, Projection, QuerySpec, Relation, Source, Value, ValueKind};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub d: f64,
    pub v: usize,
    pub phrase_len: usize,
    pub val_range: (i64, i64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            d: 0.2,
            v: 1000,
            phrase_len: 5,
            val_range: (1, 10),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn new(n: usize, d: f64, v: usize, seed: u64) -> Self {
        SynthConfig {
            n,
            d,
            v,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v <= 5 {
            return Err(Error::Invalid("vocabulary size must exceed 5".into()));
        }
        if !(0.0..1.0).contains(&self.d) {
            return Err(Error::Invalid("difference ratio must lie in [0, 1)".into()));
        }
        if self.val_range.0 >= self.val_range.1 {
            return Err(Error::Invalid("value range needs at least two values".into()));
        }
        if self.phrase_len == 0 {
            return Err(Error::Invalid("phrase length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dropped {
    /// The dataset the tuple was removed from.
    pub side: Side,
    pub key: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Corrupted {
    pub side: Side,
    pub key: String,
    pub original: i64,
    pub corrupted: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub dropped: Vec<Dropped>,
    pub corrupted: Vec<Corrupted>,
    pub true_matches: Vec<(String, String)>,
}

impl GoldStandard {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::error::read_json(path)
    }

    /// Q(D1) − Q(D2) implied by the recorded actions.
    pub fn signed_difference(&self, values: &std::collections::HashMap<String, i64>) -> i64 {
        let drops: i64 = self
            .dropped
            .iter()
            .map(|d| match d.side {
                Side::Left => -values[&d.key],
                Side::Right => values[&d.key],
            })
            .sum();
        let changes: i64 = self
            .corrupted
            .iter()
            .map(|c| match c.side {
                Side::Left => c.corrupted - c.original,
                Side::Right => c.original - c.corrupted,
            })
            .sum();
        drops + changes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthBundle {
    pub d1: Relation,
    pub d2: Relation,
    pub q1: QuerySpec,
    pub q2: QuerySpec,
    pub attribute_match: AttributeMatch,
    pub gold: GoldStandard,
    /// Base tuples before any change: `(id, phrase, val)`.
    pub base: Vec<(i64, String, i64)>,
}

pub const MATCH_ATTR: &str = "match_attr";

pub fn schema() -> Vec<Attribute> {
    vec![
        Attribute::new("id", ValueKind::Integer),
        Attribute::new(MATCH_ATTR, ValueKind::Text),
        Attribute::new("val", ValueKind::Integer),
    ]
}

fn sum_query(rel: &str) -> QuerySpec {
    QuerySpec {
        source: Source::Relation(rel.into()),
        condition: None,
        projection: Projection::Aggregate {
            func: AggKind::Sum,
            attribute: Some("val".into()),
        },
    }
}

fn vocabulary(rng: &mut ChaCha8Rng, v: usize) -> Vec<String> {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(v);
    while words.len() < v {
        let w: String = (0..6).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char).collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words = vocabulary(&mut rng, cfg.v);
    let (lo, hi) = cfg.val_range;
    let base: Vec<(i64, String, i64)> = (0..cfg.n)
        .map(|id| {
            let phrase: Vec<&str> = (0..cfg.phrase_len)
                .map(|_| words[rng.gen_range(0..words.len())].as_str())
                .collect();
            (id as i64, phrase.join(" "), rng.gen_range(lo..=hi))
        })
        .collect();

    let changes = (cfg.d * cfg.n as f64).round() as usize;
    // None = present on both sides
    let mut dropped_from: Vec<Option<Side>> = vec![None; cfg.n];
    let mut gold = GoldStandard::default();
    for i in sample(&mut rng, cfg.n, changes.min(cfg.n)).into_vec() {
        let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
        dropped_from[i] = Some(side);
        gold.dropped.push(Dropped {
            side,
            key: base[i].1.clone(),
        });
    }
    let survivors: Vec<usize> = (0..cfg.n).filter(|&i| dropped_from[i].is_none()).collect();
    let mut vals = [
        base.iter().map(|b| b.2).collect::<Vec<_>>(),
        base.iter().map(|b| b.2).collect::<Vec<_>>(),
    ];
    for s in sample(&mut rng, survivors.len(), changes.min(survivors.len())).into_vec() {
        let i = survivors[s];
        let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
        let old = base[i].2;
        let mut new = rng.gen_range(lo..hi);
        if new >= old {
            new += 1;
        }
        vals[side as usize][i] = new;
        gold.corrupted.push(Corrupted {
            side,
            key: base[i].1.clone(),
            original: old,
            corrupted: new,
        });
    }
    gold.true_matches = survivors.iter().map(|&i| (base[i].1.clone(), base[i].1.clone())).collect();

    let build = |name: &str, side: Side| {
        let mut r = Relation::new(name, schema());
        for (i, b) in base.iter().enumerate() {
            if dropped_from[i] != Some(side) {
                r.rows.push(vec![
                    Value::Integer(b.0),
                    Value::Text(b.1.clone()),
                    Value::Integer(vals[side as usize][i]),
                ]);
            }
        }
        r
    };
    Ok(SynthBundle {
        d1: build("D1", Side::Left),
        d2: build("D2", Side::Right),
        q1: sum_query("D1"),
        q2: sum_query("D2"),
        attribute_match: AttributeMatch::new(&[MATCH_ATTR], MatchRelation::Equiv, &[MATCH_ATTR]),
        gold,
        base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relational::{query_scalar, Database};

    fn db(b: &SynthBundle) -> Database {
        Database::from([("D1".to_string(), b.d1.clone()), ("D2".to_string(), b.d2.clone())])
    }

    #[test]
    fn no_differences_means_identical_datasets() {
        let b = generate(&SynthConfig::new(50, 0.0, 100, 3)).unwrap();
        assert_eq!(b.d1.rows, b.d2.rows);
        assert!(b.gold.dropped.is_empty() && b.gold.corrupted.is_empty());
        assert_eq!(b.gold.true_matches.len(), 50);
    }

    #[test]
    fn counts_are_forced() {
        let b = generate(&SynthConfig::new(100, 0.2, 1000, 7)).unwrap();
        assert_eq!(b.gold.dropped.len(), 20);
        assert_eq!(b.gold.corrupted.len(), 20);
        assert_eq!(b.d1.rows.len() + b.d2.rows.len(), 180);
        let dropped: HashSet<&str> = b.gold.dropped.iter().map(|d| d.key.as_str()).collect();
        assert!(b.gold.corrupted.iter().all(|c| !dropped.contains(c.key.as_str()) && c.original != c.corrupted));
    }

    #[test]
    fn deterministic_and_difference_is_explained() {
        let cfg = SynthConfig::new(200, 0.3, 50, 11);
        let (a, b) = (generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_eq!(a, b);
        let d = db(&a);
        let diff = query_scalar(&a.q1, &d).unwrap() - query_scalar(&a.q2, &d).unwrap();
        let values = a.base.iter().map(|t| (t.1.clone(), t.2)).collect();
        assert_eq!(diff, a.gold.signed_difference(&values) as f64);
    }

    #[test]
    fn words_are_six_characters() {
        let b = generate(&SynthConfig::new(5, 0.0, 10, 1)).unwrap();
        for (_, phrase, v) in &b.base {
            assert!(phrase.split(' ').all(|w| w.len() == 6));
            assert!((1..=10).contains(v));
        }
        assert!(generate(&SynthConfig::new(5, 0.0, 5, 1)).is_err());
        assert!(generate(&SynthConfig::new(5, 1.0, 10, 1)).is_err());
    }
}
