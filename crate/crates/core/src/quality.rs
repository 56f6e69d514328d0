//! CLIPScore and threshold gating on image-text alignment and aesthetics.
//!
//! CLIPScore here is `scale * max(0, cos(image, text))` with `scale = 100` by
//! default, which puts typical matched pairs in the 20s-30s.

use serde::{Deserialize, Serialize};

use crate::error::QualityError;

pub const DEFAULT_CLIP_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityThresholds {
    pub min_clip: f64,
    pub min_aesthetic: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self { min_clip: 20.0, min_aesthetic: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub image_id: String,
    pub clip_score: f64,
    pub aesthetic_score: f64,
}

impl ScoredPair {
    /// Assemble a pair, failing if either score is absent.
    pub fn new(image_id: &str, clip: Option<f64>, aesthetic: Option<f64>) -> Result<Self, QualityError> {
        let missing = |what| QualityError::MissingScore { id: image_id.to_string(), what };
        Ok(Self {
            image_id: image_id.to_string(),
            clip_score: clip.ok_or_else(|| missing("clip score"))?.max(0.0),
            aesthetic_score: aesthetic.ok_or_else(|| missing("aesthetic score"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityReason {
    Clip,
    Aesthetic,
}

impl QualityReason {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityReason::Clip => "clip",
            QualityReason::Aesthetic => "aesthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityDecision {
    pub passed: bool,
    pub reasons: Vec<QualityReason>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, QualityError> {
    if a.len() != b.len() {
        return Err(QualityError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if a.is_empty() || na == 0.0 || nb == 0.0 {
        return Err(QualityError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn clip_score(image_embedding: &[f64], text_embedding: &[f64]) -> Result<f64, QualityError> {
    clip_score_scaled(image_embedding, text_embedding, DEFAULT_CLIP_SCALE)
}

pub fn clip_score_scaled(image_embedding: &[f64], text_embedding: &[f64], scale: f64) -> Result<f64, QualityError> {
    Ok(scale * cosine(image_embedding, text_embedding)?.max(0.0))
}

/// Scores below a threshold fail; a score equal to it passes.
pub fn quality_decide(pair: &ScoredPair, t: &QualityThresholds) -> QualityDecision {
    let mut reasons = Vec::new();
    if pair.clip_score < t.min_clip {
        reasons.push(QualityReason::Clip);
    }
    if pair.aesthetic_score < t.min_aesthetic {
        reasons.push(QualityReason::Aesthetic);
    }
    QualityDecision { passed: reasons.is_empty(), reasons }
}
