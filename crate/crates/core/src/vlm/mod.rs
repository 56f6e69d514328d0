//! Vision-language model stages: captionability verdicts and captions.
//!
//! Models are reached through a [`VlmGateway`]. Responses are parsed strictly;
//! an unparseable response is re-requested a bounded number of times, after
//! which a verdict counts as a rejection and a caption as an error.

mod batch;
mod gateway;
mod http;

use serde::{Deserialize, Serialize};

pub use batch::bounded_map;
pub use gateway::{BackoffPolicy, RetryingGateway, ScriptEntry, ScriptedGateway, VlmGateway};
pub use http::{OpenAiGateway, API_KEY_ENV};

use crate::error::{GatewayError, VlmError};
use crate::render::RgbImage;

/// Default captionability prompt. Shipped exactly as published, including
/// its truncated "BAD if >30" line.
pub const FILTER_PROMPT: &str = include_str!("../../prompts/filter.txt");
/// Default caption prompt.
pub const CAPTION_PROMPT: &str = include_str!("../../prompts/caption.txt");

pub const DEFAULT_MODEL: &str = "Qwen3-VL-8B-Instruct";
pub const CAPTION_MIN_WORDS: usize = 8;
pub const CAPTION_MAX_WORDS: usize = 20;
/// Reason attached to verdicts that never parsed.
pub const UNPARSEABLE: &str = "unparseable";

#[derive(Debug, Clone, PartialEq)]
pub struct VlmRequest {
    /// Manifest id of the image; used by scripted gateways and logs.
    pub image_id: String,
    pub model_name: String,
    pub prompt: String,
    /// PNG bytes.
    pub image: Vec<u8>,
    pub max_tokens: u32,
    pub temperature: f64,
}

/// Decoding and retry knobs shared by both VLM stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmOptions {
    pub model_name: String,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Extra attempts after an unparseable response.
    pub semantic_retries: u32,
}

impl Default for VlmOptions {
    fn default() -> Self {
        Self { model_name: DEFAULT_MODEL.to_string(), max_tokens: 64, temperature: 0.0, semantic_retries: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption {
    pub text: String,
    pub word_count: usize,
    pub length_warning: bool,
}

/// Strip surrounding whitespace and one pair of matching quotes.
fn unwrap_response(raw: &str) -> &str {
    let s = raw.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

fn is_single_line(s: &str) -> bool {
    !s.contains(['\n', '\r'])
}

/// Parse `GOOD: <reason>` / `BAD: <reason>`.
pub fn parse_verdict(raw: &str) -> Result<Verdict, VlmError> {
    let fail = || VlmError::UnparseableVerdict(raw.to_string());
    let s = unwrap_response(raw);
    if !is_single_line(s) {
        return Err(fail());
    }
    let (accepted, rest) = if let Some(rest) = s.strip_prefix("GOOD:") {
        (true, rest)
    } else if let Some(rest) = s.strip_prefix("BAD:") {
        (false, rest)
    } else {
        return Err(fail());
    };
    let reason = rest.trim();
    if reason.is_empty() {
        return Err(fail());
    }
    Ok(Verdict { accepted, reason: reason.to_string() })
}

pub fn format_verdict(v: &Verdict) -> String {
    format!("{}: {}", if v.accepted { "GOOD" } else { "BAD" }, v.reason)
}

pub fn parse_caption(raw: &str) -> Result<Caption, VlmError> {
    let s = unwrap_response(raw);
    if s.is_empty() || !is_single_line(s) {
        return Err(VlmError::UnparseableCaption(raw.to_string()));
    }
    let word_count = s.split_whitespace().count();
    Ok(Caption {
        text: s.to_string(),
        word_count,
        length_warning: !(CAPTION_MIN_WORDS..=CAPTION_MAX_WORDS).contains(&word_count),
    })
}

fn request(image_id: &str, image: &RgbImage, prompt: &str, opts: &VlmOptions) -> VlmRequest {
    VlmRequest {
        image_id: image_id.to_string(),
        model_name: opts.model_name.clone(),
        prompt: prompt.to_string(),
        image: image.encode_png(),
        max_tokens: opts.max_tokens,
        temperature: opts.temperature,
    }
}

/// Ask for a captionability verdict. Unparseable responses are retried
/// immediately; once retries run out the image is rejected as unparseable.
pub fn filter_image(
    gateway: &dyn VlmGateway,
    image_id: &str,
    image: &RgbImage,
    prompt: &str,
    opts: &VlmOptions,
) -> Result<Verdict, GatewayError> {
    let req = request(image_id, image, prompt, opts);
    for _ in 0..=opts.semantic_retries {
        if let Ok(v) = parse_verdict(&gateway.complete(&req)?) {
            return Ok(v);
        }
    }
    Ok(Verdict { accepted: false, reason: UNPARSEABLE.to_string() })
}

/// Ask for a caption, retrying unparseable responses.
pub fn caption_image(
    gateway: &dyn VlmGateway,
    image_id: &str,
    image: &RgbImage,
    prompt: &str,
    opts: &VlmOptions,
) -> Result<Caption, VlmError> {
    let req = request(image_id, image, prompt, opts);
    let mut last = None;
    for _ in 0..=opts.semantic_retries {
        match parse_caption(&gateway.complete(&req)?) {
            Ok(c) => return Ok(c),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn img() -> RgbImage {
        RgbImage::from_fn(4, 4, |x, y| [(x * 60) as u8, (y * 60) as u8, 90])
    }

    #[test]
    fn verdict_examples() {
        let v = parse_verdict("GOOD: clear chair with context").unwrap();
        assert_eq!(v, Verdict { accepted: true, reason: "clear chair with context".into() });
        assert!(!parse_verdict("BAD: extreme close-up of surface").unwrap().accepted);
        assert!(matches!(parse_verdict("The image looks fine to me."), Err(VlmError::UnparseableVerdict(_))));
    }

    #[test]
    fn caption_examples() {
        let c = parse_caption("Three trees standing on a grassy field under a cloudy sky.").unwrap();
        assert_eq!((c.word_count, c.length_warning), (11, false));
        let c = parse_caption("A chair.").unwrap();
        assert_eq!((c.word_count, c.length_warning), (2, true));
        assert!(matches!(parse_caption("line1\nline2"), Err(VlmError::UnparseableCaption(_))));
        assert!(parse_caption("  \"\"  ").is_err());
        assert_eq!(
            parse_caption("\"A red car parked on a paved road beside a row of buildings.\"\n").unwrap().word_count,
            13
        );
    }

    #[test]
    fn prompts_are_bundled() {
        assert!(FILTER_PROMPT.starts_with("You are evaluating a low-resolution synthetic render"));
        assert!(FILTER_PROMPT.contains("\"GOOD: <brief factual reason>\""));
        assert!(CAPTION_PROMPT.trim_end().ends_with("Return only the caption."));
    }

    #[test]
    fn filter_passes_stub_verdict_through() {
        let gw = ScriptedGateway::uniform("GOOD: recognizable red sphere on plane");
        let v = filter_image(&gw, "a", &img(), FILTER_PROMPT, &VlmOptions::default()).unwrap();
        assert!(v.accepted);
        assert_eq!(v.reason, "recognizable red sphere on plane");
    }

    #[test]
    fn filter_rejects_after_retries() {
        let gw = ScriptedGateway::uniform("no idea");
        let v = filter_image(&gw, "a", &img(), FILTER_PROMPT, &VlmOptions::default()).unwrap();
        assert_eq!(v, Verdict { accepted: false, reason: UNPARSEABLE.into() });
        assert_eq!(gw.calls("a"), 3);
    }

    #[test]
    fn filter_recovers_on_retry() {
        let gw =
            ScriptedGateway::default().with("a", vec![ScriptEntry::text("hmm"), ScriptEntry::text("BAD: cropped")]);
        let v = filter_image(&gw, "a", &img(), FILTER_PROMPT, &VlmOptions::default()).unwrap();
        assert_eq!(v.reason, "cropped");
        assert_eq!(gw.calls("a"), 2);
    }

    #[test]
    fn persistent_http_error_is_gateway_error() {
        let gw = ScriptedGateway::default().with("a", vec![ScriptEntry::Status(500)]);
        let retrying = RetryingGateway::new(&gw, BackoffPolicy::immediate(2));
        let r = filter_image(&retrying, "a", &img(), FILTER_PROMPT, &VlmOptions::default());
        assert!(matches!(r, Err(GatewayError::Status(500, _))));
        assert_eq!(gw.calls("a"), 3);
    }

    #[test]
    fn caption_errors_after_retries() {
        let gw = ScriptedGateway::uniform("line1\nline2");
        let r = caption_image(&gw, "a", &img(), CAPTION_PROMPT, &VlmOptions::default());
        assert!(matches!(r, Err(VlmError::UnparseableCaption(_))));
        assert_eq!(gw.calls("a"), 3);
    }

    proptest! {
        #[test]
        fn parse_verdict_is_total(s in ".*") {
            let _ = parse_verdict(&s);
        }

        #[test]
        fn verdict_format_round_trip(accepted: bool, reason in "[A-Za-z0-9][A-Za-z0-9 ,.-]{0,40}[A-Za-z0-9.]") {
            let v = Verdict { accepted, reason };
            prop_assert_eq!(parse_verdict(&format_verdict(&v)).unwrap(), v);
        }
    }
}
