//! Provider that talks JSON over HTTP to a service gateway.
//!
//! Each kind posts to `<endpoint>/<route>`:
//!
//! | kind            | route        | request fields                      | response            |
//! |-----------------|--------------|-------------------------------------|---------------------|
//! | OCR             | `ocr`        | `model`, `image`                    | `{"text": ...}`     |
//! | icon / scene    | `describe`   | `model`, `prompt`, `context`, `image` | `{"text": ...}`   |
//! | tone            | `tone`       | `model`, `prompt`, `image`          | `{"tone": ...}`     |
//! | speech          | `synthesize` | `voice`, `style`, `text`            | WAV body            |
//!
//! `image` is `{"width", "height", "png_base64"}`. The API key is read from
//! the environment variable named in the config and sent as a bearer token.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::scene::{ImageCrop, SceneTone};

use super::{prompts, AiProvider, AudioClip, ServiceError, ServiceKind, ServiceRequest, ServiceResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub llm_model: String,
    pub ocr_model: String,
    pub default_voice: String,
    /// Tone name to provider voice style.
    pub voices: BTreeMap<String, String>,
    pub timeout_ms: u64,
    /// Per-kind overrides keyed by kind name (`ocr`, `synthesize`, ...).
    pub timeouts_ms: BTreeMap<String, u64>,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        let voices = SceneTone::ALL
            .iter()
            .map(|t| (t.name().to_string(), t.name().to_string()))
            .collect();
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            api_key_env: "SCENECAST_API_KEY".into(),
            llm_model: "gpt-4o".into(),
            ocr_model: "read".into(),
            default_voice: "en-US-JennyNeural".into(),
            voices,
            timeout_ms: 3000,
            timeouts_ms: BTreeMap::new(),
        }
    }
}

impl HttpProviderConfig {
    pub fn timeout_for(&self, kind: ServiceKind) -> Duration {
        Duration::from_millis(
            self.timeouts_ms
                .get(kind.name())
                .copied()
                .unwrap_or(self.timeout_ms),
        )
    }

    pub fn style_for(&self, tone: SceneTone) -> &str {
        self.voices
            .get(tone.name())
            .map(String::as_str)
            .unwrap_or(tone.name())
    }
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ServiceError> {
        let api_key = std::env::var(&config.api_key_env).ok();
        if api_key.is_none() {
            log::warn!("{} is not set; calling {} without credentials", config.api_key_env, config.endpoint);
        }
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ServiceError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn route(kind: ServiceKind) -> &'static str {
        match kind {
            ServiceKind::Ocr => "ocr",
            ServiceKind::IconDescribe | ServiceKind::SceneDescribe => "describe",
            ServiceKind::ToneClassify => "tone",
            ServiceKind::Synthesize => "synthesize",
        }
    }

    fn body(&self, request: &ServiceRequest) -> Result<Value, ServiceError> {
        let image = || {
            request
                .image
                .as_ref()
                .map(encode_image)
                .transpose()
                .map(|v| v.unwrap_or(Value::Null))
        };
        Ok(match request.kind {
            ServiceKind::Ocr => json!({ "model": self.config.ocr_model, "image": image()? }),
            ServiceKind::IconDescribe => json!({
                "model": self.config.llm_model,
                "prompt": prompts::ICON_DESCRIBE,
                "context": request.text,
                "image": image()?,
            }),
            ServiceKind::SceneDescribe => json!({
                "model": self.config.llm_model,
                "prompt": prompts::SCENE_DESCRIBE,
                "context": request.text,
                "tone": request.tone.map(|t| t.name()),
                "image": image()?,
            }),
            ServiceKind::ToneClassify => json!({
                "model": self.config.llm_model,
                "prompt": prompts::TONE_CLASSIFY,
                "image": image()?,
            }),
            ServiceKind::Synthesize => json!({
                "voice": self.config.default_voice,
                "style": self.config.style_for(request.tone.unwrap_or_default()),
                "text": request.text,
            }),
        })
    }
}

fn encode_image(crop: &ImageCrop) -> Result<Value, ServiceError> {
    let img = image::RgbImage::from_raw(crop.width, crop.height, crop.pixels.clone())
        .ok_or_else(|| ServiceError::InvalidRequest("crop buffer size mismatch".into()))?;
    let mut png = Cursor::new(Vec::new());
    img.write_to(&mut png, image::ImageFormat::Png)
        .map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
    Ok(json!({
        "width": crop.width,
        "height": crop.height,
        "png_base64": base64::engine::general_purpose::STANDARD.encode(png.into_inner()),
    }))
}

fn text_field(v: &Value, field: &str) -> Result<String, ServiceError> {
    v.get(field)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ServiceError::Decode(format!("missing string field {field:?}")))
}

impl AiProvider for HttpProvider {
    fn call(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        let kind = request.kind;
        let url = format!(
            "{}/{}",
            self.config.endpoint.trim_end_matches('/'),
            Self::route(kind)
        );
        let mut req = self
            .client
            .post(url)
            .timeout(self.config.timeout_for(kind))
            .json(&self.body(request)?);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                ServiceError::Timeout(kind)
            } else {
                ServiceError::Transport(e.to_string())
            }
        };
        let resp = req.send().map_err(map_err)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ServiceError::Provider {
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            });
        }
        if kind == ServiceKind::Synthesize {
            let bytes = resp.bytes().map_err(map_err)?;
            return AudioClip::from_wav(&bytes).map(ServiceResponse::Clip);
        }
        let v: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                ServiceError::Timeout(kind)
            } else {
                ServiceError::Decode(e.to_string())
            }
        })?;
        match kind {
            ServiceKind::ToneClassify => {
                let raw = text_field(&v, "tone").or_else(|_| text_field(&v, "text"))?;
                SceneTone::parse(&raw)
                    .map(ServiceResponse::Tone)
                    .ok_or_else(|| ServiceError::Decode(format!("unknown tone {raw:?}")))
            }
            _ => text_field(&v, "text").map(ServiceResponse::Text),
        }
    }

    fn is_live(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// One-connection-per-request HTTP stub. Replies with `body` after
    /// `delay`, and hands the request body to the returned channel.
    fn stub(
        status: u16,
        content_type: &'static str,
        body: Vec<u8>,
        delay: Duration,
        requests: usize,
    ) -> (String, std::sync::mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = std::sync::mpsc::channel();
        thread::spawn(move || {
            for stream in listener.incoming().take(requests) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let l = line.trim().to_ascii_lowercase();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if l.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                }
                let mut req_body = vec![0; len];
                reader.read_exact(&mut req_body).unwrap();
                let _ = tx.send(format!("{auth}\n{}", String::from_utf8_lossy(&req_body)));
                thread::sleep(delay);
                let head = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: {content_type}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                    body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(&body);
            }
        });
        (format!("http://{addr}"), rx)
    }

    fn provider(endpoint: String, timeout_ms: u64) -> HttpProvider {
        HttpProvider::new(HttpProviderConfig {
            endpoint,
            api_key_env: "SCENECAST_TEST_KEY_UNSET".into(),
            timeout_ms,
            ..Default::default()
        })
        .unwrap()
    }

    fn crop() -> ImageCrop {
        ImageCrop {
            width: 2,
            height: 2,
            pixels: vec![255; 12],
        }
    }

    #[test]
    fn ocr_round_trip() {
        let (url, rx) = stub(200, "application/json", br#"{"text":"Join Public Room"}"#.to_vec(), Duration::ZERO, 1);
        let p = provider(url, 3000);
        let out = p.call(&ServiceRequest::ocr(crop())).unwrap();
        assert_eq!(out, ServiceResponse::Text("Join Public Room".into()));
        let sent = rx.recv().unwrap();
        assert!(sent.contains("png_base64"));
    }

    #[test]
    fn tone_parsed() {
        let (url, _rx) = stub(200, "application/json", br#"{"tone":"Fearful"}"#.to_vec(), Duration::ZERO, 1);
        let out = provider(url, 3000).call(&ServiceRequest::tone(crop())).unwrap();
        assert_eq!(out, ServiceResponse::Tone(SceneTone::Fearful));
    }

    #[test]
    fn synthesize_reads_wav() {
        let wav = AudioClip::silence(10).to_wav();
        let (url, rx) = stub(200, "audio/wav", wav, Duration::ZERO, 1);
        let out = provider(url, 3000)
            .call(&ServiceRequest::synthesize("hi there", SceneTone::Urgent))
            .unwrap();
        assert_eq!(out, ServiceResponse::Clip(AudioClip::silence(10)));
        assert!(rx.recv().unwrap().contains("\"style\":\"urgent\""));
    }

    #[test]
    fn slow_service_times_out() {
        let (url, _rx) = stub(200, "application/json", br#"{"text":""}"#.to_vec(), Duration::from_millis(800), 1);
        let err = provider(url, 100).call(&ServiceRequest::ocr(crop())).unwrap_err();
        assert_eq!(err, ServiceError::Timeout(ServiceKind::Ocr));
    }

    #[test]
    fn error_status_surfaces() {
        let (url, _rx) = stub(503, "text/plain", b"busy".to_vec(), Duration::ZERO, 1);
        let err = provider(url, 3000).call(&ServiceRequest::ocr(crop())).unwrap_err();
        assert!(matches!(err, ServiceError::Provider { status: 503, .. }));
    }

    #[test]
    fn connection_refused_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = provider(format!("http://{addr}"), 3000)
            .call(&ServiceRequest::ocr(crop()))
            .unwrap_err();
        assert!(matches!(err, ServiceError::Transport(_)));
    }

    #[test]
    fn per_kind_timeouts() {
        let mut cfg = HttpProviderConfig::default();
        cfg.timeouts_ms.insert("synthesize".into(), 500);
        assert_eq!(cfg.timeout_for(ServiceKind::Synthesize), Duration::from_millis(500));
        assert_eq!(cfg.timeout_for(ServiceKind::Ocr), Duration::from_millis(3000));
    }
}
