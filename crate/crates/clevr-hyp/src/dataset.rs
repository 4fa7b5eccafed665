//! Dataset serialization (JSON Lines) and summary statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Answer, ANSWER_LABELS};
use crate::generator::Sample;
use crate::scene::Scene;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
}

/// What a written record carries: everything, or only what a model under
/// test may see (no scene, no programs).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportMode {
    Full,
    Test,
}

#[derive(Serialize, Deserialize)]
struct SampleJson {
    image_id: u64,
    pair_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<Scene>,
    action_text: String,
    question_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_program: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    question_program: Option<String>,
    answer: Answer,
    action_type: String,
    question_type: String,
    split: String,
}

fn to_json(s: &Sample, mode: ExportMode) -> SampleJson {
    let full = mode == ExportMode::Full;
    SampleJson {
        image_id: s.image_id,
        pair_index: s.pair_index,
        scene: full.then(|| s.scene.clone()),
        action_text: s.action_text.clone(),
        question_text: s.question_text.clone(),
        action_program: full.then(|| s.action_programs.clone()),
        question_program: full.then(|| s.question_program.clone()),
        answer: s.answer,
        action_type: s.action_type.clone(),
        question_type: s.question_type.clone(),
        split: s.split.clone(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), source }
}

pub fn write_samples_to(w: &mut impl Write, samples: &[Sample], mode: ExportMode) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut *w, &to_json(s, mode))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes one JSON record per line; the file appears atomically (written to
/// a temporary sibling, then renamed).
pub fn write_samples(path: &Path, samples: &[Sample], mode: ExportMode) -> Result<(), DatasetError> {
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(File::create(&tmp).map_err(|e| io_err(&tmp, e))?);
    write_samples_to(&mut w, samples, mode).map_err(|e| io_err(&tmp, e))?;
    w.flush().map_err(|e| io_err(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Reads fully-populated records back; schema problems are reported with
/// their line number.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let j: SampleJson = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Schema { line: n, msg: e.to_string() })?;
        let missing = |field: &str| DatasetError::Schema {
            line: n,
            msg: format!("missing field `{field}` (test-mode record?)"),
        };
        out.push(Sample {
            image_id: j.image_id,
            pair_index: j.pair_index,
            scene: j.scene.ok_or_else(|| missing("scene"))?,
            action_text: j.action_text,
            question_text: j.question_text,
            action_programs: j.action_program.ok_or_else(|| missing("action_program"))?,
            question_program: j.question_program.ok_or_else(|| missing("question_program"))?,
            answer: j.answer,
            action_type: j.action_type,
            question_type: j.question_type,
            split: j.split,
        });
    }
    Ok(out)
}

/// Corpus-level summary figures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_samples: u64,
    pub n_images: u64,
    /// Distinct (image, action text) pairs.
    pub n_action_texts: u64,
    pub avg_objects: f64,
    /// Mean action text length in words.
    pub avg_action_len: f64,
    pub avg_question_len: f64,
    /// Distinct (action text, question text) pairs over all samples.
    pub unique_pair_ratio: f64,
    pub answer_counts: Vec<(String, u64)>,
}

fn words(s: &str) -> usize {
    s.split_whitespace().count()
}

pub fn compute_stats(samples: &[Sample]) -> SplitStats {
    let mut images = BTreeSet::new();
    let mut action_texts = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    let mut obj_sum = 0usize;
    let mut alen = 0usize;
    let mut qlen = 0usize;
    let mut counts = [0u64; 27];
    for s in samples {
        // count each image's objects once, not per sample
        if images.insert(s.image_id) {
            obj_sum += s.scene.objects.len();
        }
        action_texts.insert((s.image_id, s.action_text.as_str()));
        pairs.insert((s.action_text.as_str(), s.question_text.as_str()));
        alen += words(&s.action_text);
        qlen += words(&s.question_text);
        counts[s.answer.index()] += 1;
    }
    let n = samples.len().max(1) as f64;
    SplitStats {
        n_samples: samples.len() as u64,
        n_images: images.len() as u64,
        n_action_texts: action_texts.len() as u64,
        avg_objects: obj_sum as f64 / images.len().max(1) as f64,
        avg_action_len: alen as f64 / n,
        avg_question_len: qlen as f64 / n,
        unique_pair_ratio: pairs.len() as f64 / n,
        answer_counts: ANSWER_LABELS
            .iter()
            .zip(counts)
            .map(|(l, c)| (l.to_string(), c))
            .collect(),
    }
}

/// Plain-text rendering with aligned columns.
pub fn render_stats(stats: &SplitStats) -> String {
    let mut out = String::new();
    let rows = [
        ("samples", stats.n_samples.to_string()),
        ("images", stats.n_images.to_string()),
        ("action texts", stats.n_action_texts.to_string()),
        ("avg objects / image", format!("{:.2}", stats.avg_objects)),
        ("avg action words", format!("{:.2}", stats.avg_action_len)),
        ("avg question words", format!("{:.2}", stats.avg_question_len)),
        ("unique pair ratio", format!("{:.3}", stats.unique_pair_ratio)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    let _ = writeln!(out, "\nanswer distribution:");
    let lw = stats.answer_counts.iter().map(|(l, _)| l.len()).max().unwrap_or(1);
    for (label, count) in &stats.answer_counts {
        let _ = writeln!(out, "  {label:<lw$}  {count}");
    }
    out
}
