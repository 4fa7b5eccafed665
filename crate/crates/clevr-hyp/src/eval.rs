//! Scoring predicted answers against gold samples, plus a scene-diff
//! metric for comparing predicted post-action scene graphs.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::Sample;
use crate::scene::{AttrKind, Relation, Scene};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("duplicate prediction for image {image_id} pair {pair_index}")]
    Duplicate { image_id: u64, pair_index: u32 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: u64,
    pub pair_index: u32,
    pub answer: String,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    let reader = BufReader::new(File::open(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::Schema { line: i + 1, msg: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Maps free-form answer words onto the canonical answer vocabulary
/// (the same lexical variants the surface text uses).
pub fn canonical_answer(raw: &str) -> String {
    let s = raw.trim().to_lowercase();
    match s.as_str() {
        "large" => "big",
        "tiny" => "small",
        "ball" => "sphere",
        "block" => "cube",
        "metallic" | "shiny" => "metal",
        "matte" => "rubber",
        "true" => "yes",
        "false" => "no",
        other => other,
    }
    .to_string()
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Accuracy {
    pub n: u64,
    pub correct: u64,
}

impl Accuracy {
    pub fn rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        }
    }

    fn add(&mut self, hit: bool) {
        self.n += 1;
        self.correct += hit as u64;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub overall: Accuracy,
    pub accuracy: f64,
    /// Gold samples without a matching prediction; scored as incorrect.
    pub n_missing: u64,
    pub by_action: BTreeMap<String, Accuracy>,
    pub by_question: BTreeMap<String, Accuracy>,
}

/// Scores predictions keyed by (image_id, pair_index). Every gold sample is
/// scored; unmatched predictions are ignored, duplicates are an error.
pub fn score(samples: &[Sample], predictions: &[Prediction]) -> Result<EvalReport, EvalError> {
    let mut by_key: HashMap<(u64, u32), &Prediction> = HashMap::new();
    for p in predictions {
        if by_key.insert((p.image_id, p.pair_index), p).is_some() {
            return Err(EvalError::Duplicate { image_id: p.image_id, pair_index: p.pair_index });
        }
    }
    let mut overall = Accuracy::default();
    let mut n_missing = 0;
    let mut by_action: BTreeMap<String, Accuracy> = BTreeMap::new();
    let mut by_question: BTreeMap<String, Accuracy> = BTreeMap::new();
    for s in samples {
        let hit = match by_key.get(&(s.image_id, s.pair_index)) {
            Some(p) => canonical_answer(&p.answer) == s.answer.label(),
            None => {
                n_missing += 1;
                false
            }
        };
        overall.add(hit);
        by_action.entry(s.action_type.clone()).or_default().add(hit);
        by_question.entry(s.question_type.clone()).or_default().add(hit);
    }
    Ok(EvalReport { overall, accuracy: overall.rate(), n_missing, by_action, by_question })
}

/// How close a predicted post-action scene graph is to the gold one.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SceneDiff {
    /// Fraction of objects whose full attribute tuple is matched.
    pub attribute_rate: f64,
    /// Fraction of gold spatial relations that hold under the matching.
    pub relation_rate: f64,
}

fn attr_overlap(a: &crate::scene::ObjectRecord, b: &crate::scene::ObjectRecord) -> u32 {
    AttrKind::ALL.iter().filter(|&&k| a.attr(k) == b.attr(k)).count() as u32
}

/// Maximum-weight assignment between gold and predicted objects by shared
/// attribute count (bitmask DP; both scenes hold at most 10 objects).
fn best_matching(gold: &Scene, pred: &Scene) -> Vec<(usize, usize)> {
    let n = gold.objects.len();
    let m = pred.objects.len();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let weight: Vec<Vec<u32>> = gold
        .objects
        .iter()
        .map(|g| pred.objects.iter().map(|p| attr_overlap(g, p)).collect())
        .collect();
    // dp over subsets of predicted objects, gold objects taken in order
    let full = 1usize << m;
    let mut dp = vec![u32::MAX; full];
    let mut from: Vec<(usize, usize)> = vec![(usize::MAX, usize::MAX); full];
    dp[0] = 0;
    let mut best_end = (0usize, 0u32);
    for mask in 0..full {
        if dp[mask] == u32::MAX {
            continue;
        }
        let i = (mask as u32).count_ones() as usize;
        if i >= n {
            if dp[mask] > best_end.1 {
                best_end = (mask, dp[mask]);
            }
            continue;
        }
        let mut advanced = false;
        for j in 0..m {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                let v = dp[mask] + weight[i][j];
                if dp[next] == u32::MAX || v > dp[next] {
                    dp[next] = v;
                    from[next] = (mask, j);
                }
                advanced = true;
            }
        }
        if !advanced && dp[mask] > best_end.1 {
            best_end = (mask, dp[mask]);
        }
    }
    for mask in 0..full {
        if dp[mask] != u32::MAX
            && (mask as u32).count_ones() as usize == n.min(m)
            && dp[mask] > best_end.1
        {
            best_end = (mask, dp[mask]);
        }
    }
    // reconstruct: the i-th chosen bit pairs with gold object i
    let mut pairs = Vec::new();
    let mut mask = best_end.0;
    while mask != 0 {
        let (prev, j) = from[mask];
        let i = (prev as u32).count_ones() as usize;
        pairs.push((i, j));
        mask = prev;
    }
    pairs.sort_unstable();
    pairs
}

pub fn diff_scenes(gold: &Scene, pred: &Scene) -> SceneDiff {
    let denom = gold.objects.len().max(pred.objects.len());
    if denom == 0 {
        return SceneDiff { attribute_rate: 1.0, relation_rate: 1.0 };
    }
    let pairs = best_matching(gold, pred);
    let exact = pairs
        .iter()
        .filter(|(i, j)| attr_overlap(&gold.objects[*i], &pred.objects[*j]) == 4)
        .count();
    let attribute_rate = exact as f64 / denom as f64;

    let map: BTreeMap<&str, &str> = pairs
        .iter()
        .map(|&(i, j)| (gold.objects[i].id.as_str(), pred.objects[j].id.as_str()))
        .collect();
    let gold_rel = crate::scene::derive_relations(gold);
    let pred_rel = crate::scene::derive_relations(pred);
    let mut total = 0usize;
    let mut held = 0usize;
    for (a, rels) in &gold_rel {
        for r in Relation::ALL {
            for b in &rels[r] {
                total += 1;
                if let (Some(pa), Some(pb)) = (map.get(a.as_str()), map.get(b.as_str())) {
                    if pred_rel
                        .get(*pa)
                        .and_then(|m| m.get(r))
                        .is_some_and(|set| set.contains(*pb))
                    {
                        held += 1;
                    }
                }
            }
        }
    }
    let relation_rate = if total == 0 { 1.0 } else { held as f64 / total as f64 };
    SceneDiff { attribute_rate, relation_rate }
}
