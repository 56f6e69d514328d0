//! First-pass heuristic filters: zero fill, mean brightness, grayscale
//! variance and dark-pixel fraction.

use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::render::{RgbImage, SegMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicThresholds {
    pub min_brightness: f64,
    pub min_variance: f64,
    pub max_dark_fraction: f64,
    /// Gray values at or below this count as dark.
    pub black_level: f64,
}

impl Default for HeuristicThresholds {
    fn default() -> Self {
        Self { min_brightness: 30.0, min_variance: 300.0, max_dark_fraction: 0.3, black_level: 5.0 }
    }
}

impl HeuristicThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let vals = [self.min_brightness, self.min_variance, self.max_dark_fraction, self.black_level];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("heuristic thresholds must be finite and nonnegative".into());
        }
        if self.max_dark_fraction > 1.0 {
            return Err("max_dark_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicReason {
    ZeroFill,
    Brightness,
    Variance,
    DarkFraction,
}

impl HeuristicReason {
    pub fn as_str(self) -> &'static str {
        match self {
            HeuristicReason::ZeroFill => "zero_fill",
            HeuristicReason::Brightness => "brightness",
            HeuristicReason::Variance => "variance",
            HeuristicReason::DarkFraction => "dark_fraction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub mean: f64,
    pub variance: f64,
    pub dark_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicStats {
    /// Absent when no segmentation map was checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<f64>,
    pub mean: f64,
    pub variance: f64,
    pub dark_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDecision {
    pub passed: bool,
    pub reasons: Vec<HeuristicReason>,
    pub stats: HeuristicStats,
}

/// BT.601 luma, `(299 R + 587 G + 114 B) / 1000`. Integer weights keep gray
/// images exact (e.g. `(30, 30, 30)` maps to exactly `30.0`).
pub fn luma(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(u32::from);
    f64::from(299 * r + 587 * g + 114 * b) / 1000.0
}

/// Mean, population variance and dark fraction of the grayscale image.
pub fn image_statistics(image: &RgbImage, black_level: f64) -> Result<ImageStats, FilterError> {
    let n = image.pixels.len() / 3;
    if n == 0 {
        return Err(FilterError::EmptyImage);
    }
    let grays: Vec<f64> = image.pixels.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect();
    let mean = grays.iter().sum::<f64>() / n as f64;
    let variance = grays.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n as f64;
    let dark = grays.iter().filter(|&&g| g <= black_level).count();
    Ok(ImageStats { mean, variance, dark_fraction: dark as f64 / n as f64 })
}

pub fn object_fill_fraction(segmap: &SegMap, object_id: u16) -> f64 {
    if segmap.ids.is_empty() {
        return 0.0;
    }
    let hits = segmap.ids.iter().filter(|&&id| id == object_id).count();
    hits as f64 / segmap.ids.len() as f64
}

/// Apply every check and report all violations.
pub fn heuristic_decide(
    image: &RgbImage,
    segmap: Option<&SegMap>,
    object_id: Option<u16>,
    t: &HeuristicThresholds,
) -> Result<FilterDecision, FilterError> {
    let stats = image_statistics(image, t.black_level)?;
    let fill = match (segmap, object_id) {
        (Some(seg), Some(id)) => {
            if (seg.width, seg.height) != (image.width, image.height) {
                return Err(FilterError::SizeMismatch {
                    img_w: image.width,
                    img_h: image.height,
                    seg_w: seg.width,
                    seg_h: seg.height,
                });
            }
            Some(object_fill_fraction(seg, id))
        }
        (None, None) => None,
        _ => return Err(FilterError::MismatchedInputs),
    };

    let mut reasons = Vec::new();
    if fill == Some(0.0) {
        reasons.push(HeuristicReason::ZeroFill);
    }
    if stats.mean < t.min_brightness {
        reasons.push(HeuristicReason::Brightness);
    }
    if stats.variance < t.min_variance {
        reasons.push(HeuristicReason::Variance);
    }
    if stats.dark_fraction > t.max_dark_fraction {
        reasons.push(HeuristicReason::DarkFraction);
    }
    Ok(FilterDecision {
        passed: reasons.is_empty(),
        reasons,
        stats: HeuristicStats { fill, mean: stats.mean, variance: stats.variance, dark_fraction: stats.dark_fraction },
    })
}
