//! Objective evaluation: voicing decision error, F0 frame error, equal error
//! rate and token error rate.

use std::path::Path;

use crate::io::read_file;
use crate::pitch::F0Track;
use crate::{Error, Result};

fn check_lengths(reference: &F0Track, hypothesis: &F0Track) -> Result<usize> {
    if reference.len() != hypothesis.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: hypothesis.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::InvalidInput("empty pitch tracks".into()));
    }
    Ok(reference.len())
}

/// Fraction of frames whose voicing flags disagree.
pub fn vde(reference: &F0Track, hypothesis: &F0Track) -> Result<f64> {
    let n = check_lengths(reference, hypothesis)?;
    let errors = reference
        .voiced()
        .iter()
        .zip(hypothesis.voiced())
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / n as f64)
}

/// Fraction of frames with a voicing error or, when both are voiced, a pitch
/// deviation of more than 20% relative to the reference.
pub fn ffe(reference: &F0Track, hypothesis: &F0Track) -> Result<f64> {
    let n = check_lengths(reference, hypothesis)?;
    let mut errors = 0usize;
    for i in 0..n {
        let (rv, hv) = (reference.voiced()[i], hypothesis.voiced()[i]);
        if rv != hv {
            errors += 1;
        } else if rv {
            let r = reference.f0()[i] as f64;
            if r <= 0.0 {
                return Err(Error::InvalidInput(format!("voiced reference frame {i} has f0 {r}")));
            }
            if (hypothesis.f0()[i] as f64 - r).abs() / r > 0.2 {
                errors += 1;
            }
        }
    }
    Ok(errors as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTrial {
    pub score: f64,
    pub is_target: bool,
}

impl ScoredTrial {
    pub fn new(score: f64, is_target: bool) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("trial score {score}")));
        }
        Ok(Self { score, is_target })
    }
}

/// Equal error rate over a threshold sweep at every distinct score plus
/// `-inf` and `+inf`, with FAR counting non-targets at `>= t` and FRR
/// counting targets below `t`. The crossing is interpolated linearly
/// between the bracketing sweep points.
pub fn eer(trials: &[ScoredTrial]) -> Result<f64> {
    if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
        return Err(Error::NonFinite(format!("trial score {}", t.score)));
    }
    let mut targets: Vec<f64> = trials.iter().filter(|t| t.is_target).map(|t| t.score).collect();
    let mut impostors: Vec<f64> = trials.iter().filter(|t| !t.is_target).map(|t| t.score).collect();
    if targets.is_empty() || impostors.is_empty() {
        return Err(Error::InvalidInput("need both target and non-target trials".into()));
    }
    targets.sort_by(f64::total_cmp);
    impostors.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = trials.iter().map(|t| t.score).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (nt, ni) = (targets.len() as f64, impostors.len() as f64);
    let point = |t: f64| {
        let below_imp = impostors.partition_point(|&s| s < t);
        let below_tgt = targets.partition_point(|&s| s < t);
        ((ni - below_imp as f64) / ni, below_tgt as f64 / nt)
    };

    let mut prev = (1.0, 0.0);
    for t in thresholds.into_iter().chain([f64::INFINITY]) {
        let (far, frr) = if t == f64::INFINITY { (0.0, 1.0) } else { point(t) };
        let d_prev = prev.0 - prev.1;
        let d = far - frr;
        if d_prev == 0.0 {
            return Ok(prev.0);
        }
        if d <= 0.0 {
            let alpha = d_prev / (d_prev - d);
            return Ok(prev.0 + alpha * (far - prev.0));
        }
        prev = (far, frr);
    }
    unreachable!("the +inf point always has FAR - FRR = -1")
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (diag + usize::from(x != y)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Edit distance normalized by the reference length (WER on words, PER on
/// phonemes).
pub fn error_rate<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Parses `score<TAB>0|1` lines; blank lines are skipped.
pub fn parse_trials(text: &str) -> Result<Vec<ScoredTrial>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::InvalidInput(format!("trials line {}: {line:?}", n + 1));
        let (score, label) = line.split_once('\t').ok_or_else(bad)?;
        let score: f64 = score.trim().parse().map_err(|_| bad())?;
        let is_target = match label.trim() {
            "1" => true,
            "0" => false,
            _ => return Err(bad()),
        };
        out.push(ScoredTrial::new(score, is_target)?);
    }
    Ok(out)
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<Vec<ScoredTrial>> {
    let bytes = read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::InvalidInput("trials file is not UTF-8".into()))?;
    parse_trials(&text)
}

/// Whitespace-separated tokens across all lines.
pub fn load_tokens(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let bytes = read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::InvalidInput("token file is not UTF-8".into()))?;
    Ok(text.split_whitespace().map(str::to_owned).collect())
}
