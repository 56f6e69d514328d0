//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{VlmGateway, VlmRequest};
use crate::error::GatewayError;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "BLENDFORGE_VLM_API_KEY";

pub struct OpenAiGateway {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiGateway {
    /// `endpoint` is either a base URL (`http://host:8000`) or a full
    /// `.../chat/completions` URL.
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let endpoint = endpoint.trim_end_matches('/');
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else if endpoint.ends_with("/v1") {
            format!("{endpoint}/chat/completions")
        } else {
            format!("{endpoint}/v1/chat/completions")
        };
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { url, api_key, agent }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: &str, timeout: Duration) -> Self {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()), timeout)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Request body: one user message carrying the prompt and a PNG data URI.
pub fn request_body(req: &VlmRequest) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD.encode(&req.image);
    json!({
        "model": req.model_name,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": req.prompt},
                {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}
            ]
        }],
        "max_tokens": req.max_tokens,
        "temperature": req.temperature,
    })
}

/// Pull `choices[0].message.content`, accepting either a string or a list of text parts.
pub fn response_text(body: &Value) -> Result<String, GatewayError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| GatewayError::Decode("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            Ok(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""))
        }
        other => Err(GatewayError::Decode(format!("unexpected content {other}"))),
    }
}

impl VlmGateway for OpenAiGateway {
    fn complete(&self, request: &VlmRequest) -> Result<String, GatewayError> {
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send(request_body(request).to_string().as_bytes())
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(GatewayError::Status(status, text.chars().take(200).collect()));
        }
        let body: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Decode(e.to_string()))?;
        response_text(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_normalization() {
        let t = Duration::from_secs(1);
        assert_eq!(OpenAiGateway::new("http://h:1", None, t).url(), "http://h:1/v1/chat/completions");
        assert_eq!(OpenAiGateway::new("http://h:1/v1/", None, t).url(), "http://h:1/v1/chat/completions");
        assert_eq!(OpenAiGateway::new("http://h:1/x/chat/completions", None, t).url(), "http://h:1/x/chat/completions");
    }

    #[test]
    fn body_shape() {
        let req = VlmRequest {
            image_id: "i".into(),
            model_name: "Qwen3-VL-8B-Instruct".into(),
            prompt: "Describe".into(),
            image: vec![1, 2, 3],
            max_tokens: 32,
            temperature: 0.0,
        };
        let b = request_body(&req);
        assert_eq!(b["model"], "Qwen3-VL-8B-Instruct");
        assert_eq!(b["messages"][0]["content"][0]["text"], "Describe");
        assert_eq!(b["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(b["temperature"], 0.0);
    }

    #[test]
    fn content_variants() {
        let s = json!({"choices": [{"message": {"content": "GOOD: x"}}]});
        assert_eq!(response_text(&s).unwrap(), "GOOD: x");
        let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "A "}, {"text": "b"}]}}]});
        assert_eq!(response_text(&parts).unwrap(), "A b");
        assert!(matches!(response_text(&json!({"choices": []})), Err(GatewayError::Decode(_))));
    }

    /// Round trips against a throwaway HTTP server on localhost.
    mod local_server {
        use std::io::{BufRead, BufReader, Read, Write};
        use std::net::TcpListener;
        use std::thread::{self, JoinHandle};

        use super::*;
        use crate::vlm::{BackoffPolicy, RetryingGateway};

        struct Captured {
            request_line: String,
            headers: Vec<String>,
            body: String,
        }

        /// Answer one connection per scripted reply, then return what was received.
        fn serve(replies: Vec<(u16, String)>) -> (String, JoinHandle<Vec<Captured>>) {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let url = format!("http://{}", listener.local_addr().unwrap());
            let handle = thread::spawn(move || {
                let mut seen = Vec::new();
                for (status, body) in replies {
                    let (mut stream, _) = listener.accept().unwrap();
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    reader.read_line(&mut request_line).unwrap();
                    let mut headers = Vec::new();
                    let mut len = 0;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        let line = line.trim_end().to_string();
                        if line.is_empty() {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                        headers.push(line);
                    }
                    let mut buf = vec![0; len];
                    reader.read_exact(&mut buf).unwrap();
                    let reply = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    stream.write_all(reply.as_bytes()).unwrap();
                    seen.push(Captured {
                        request_line: request_line.trim_end().into(),
                        headers,
                        body: String::from_utf8(buf).unwrap(),
                    });
                }
                seen
            });
            (url, handle)
        }

        fn ok_body(text: &str) -> String {
            serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] }).to_string()
        }

        fn request() -> VlmRequest {
            VlmRequest {
                image_id: "desk/3/0".into(),
                model_name: "Qwen3-VL-8B-Instruct".into(),
                prompt: "Is this image captionable?".into(),
                image: vec![0x89, b'P', b'N', b'G'],
                max_tokens: 64,
                temperature: 0.0,
            }
        }

        #[test]
        fn posts_chat_completion_and_reads_content() {
            let (url, server) = serve(vec![(200, ok_body("GOOD: a red ball on a desk"))]);
            let g = OpenAiGateway::new(&url, Some("secret".into()), Duration::from_secs(5));
            assert_eq!(g.complete(&request()).unwrap(), "GOOD: a red ball on a desk");

            let seen = server.join().unwrap();
            assert_eq!(seen[0].request_line, "POST /v1/chat/completions HTTP/1.1");
            assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer secret")));
            let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
            assert_eq!(body["model"], "Qwen3-VL-8B-Instruct");
            assert_eq!(body["max_tokens"], 64);
            let url = body["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
            assert!(url.starts_with("data:image/png;base64,"));
        }

        #[test]
        fn server_errors_are_retried_client_errors_are_not() {
            let (url, server) = serve(vec![
                (503, "{}".into()),
                (429, "{}".into()),
                (200, ok_body("BAD: blurry")),
                (400, r#"{"error":"bad request"}"#.into()),
            ]);
            let g = RetryingGateway::new(
                OpenAiGateway::new(&url, None, Duration::from_secs(5)),
                BackoffPolicy::immediate(3),
            );
            assert_eq!(g.complete(&request()).unwrap(), "BAD: blurry");
            match g.complete(&request()) {
                Err(GatewayError::Status(400, _)) => {}
                other => panic!("expected 400, got {other:?}"),
            }
            let seen = server.join().unwrap();
            assert_eq!(seen.len(), 4);
            assert!(seen
                .iter()
                .all(|c| !c.headers.iter().any(|h| h.to_ascii_lowercase().starts_with("authorization"))));
        }

        #[test]
        fn retries_give_up_after_the_limit() {
            let (url, server) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
            let g = RetryingGateway::new(
                OpenAiGateway::new(&url, None, Duration::from_secs(5)),
                BackoffPolicy::immediate(2),
            );
            assert!(matches!(g.complete(&request()), Err(GatewayError::Status(500, _))));
            assert_eq!(server.join().unwrap().len(), 3);
        }

        #[test]
        fn malformed_body_is_a_decode_error() {
            let (url, server) = serve(vec![(200, r#"{"choices": []}"#.into())]);
            let g = OpenAiGateway::new(&url, None, Duration::from_secs(5));
            assert!(matches!(g.complete(&request()), Err(GatewayError::Decode(_))));
            server.join().unwrap();
        }

        #[test]
        fn refused_connection_is_a_transport_error() {
            let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
            let g = OpenAiGateway::new(&format!("http://127.0.0.1:{port}"), None, Duration::from_secs(2));
            let err = g.complete(&request()).unwrap_err();
            assert!(matches!(err, GatewayError::Transport(_)) && err.is_retryable());
        }
    }
}
