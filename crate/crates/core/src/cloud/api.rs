//! HTTP surface of the control plane, over transport-neutral messages.
//!
//! Client-facing: `GET /boot`, `GET|POST /auth`, `GET /files/{os_id}/{file}`.
//! Admin (bearer token): everything under `/api`. Static admin UI: `/admin`.

use std::net::Ipv4Addr;
use std::path::{Component, Path};

use serde::Deserialize;
use serde_json::json;

use crate::http::{HttpRequest, HttpResponse};
use crate::script::{render_script, MEDIA_TYPE};

use super::{
    ByteRange, CloudError, ControlPlane, LogFilter, OsUpdate, UserUpdate, DEFAULT_PER_PAGE,
    DIGEST_HEADER,
};

fn error(status: u16, kind: &str, message: impl Into<String>) -> HttpResponse {
    HttpResponse::json(status, &json!({ "error": kind, "message": message.into() }))
}

impl From<CloudError> for HttpResponse {
    fn from(e: CloudError) -> Self {
        if e.status() >= 500 {
            tracing::error!(error = %e, "control plane failure");
        }
        error(e.status(), e.kind(), e.to_string())
    }
}

fn script_response(script: &crate::script::Script) -> HttpResponse {
    HttpResponse::new(200, MEDIA_TYPE, render_script(script))
}

fn not_found() -> HttpResponse {
    error(404, "not_found", "no such resource")
}

fn method_not_allowed() -> HttpResponse {
    error(405, "method_not_allowed", "method not allowed")
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Parses a single-range `Range` header. Unsupported forms yield `None`
/// and the whole file is served.
pub fn parse_range(header: &str, total_len: u64) -> Option<ByteRange> {
    let spec = header.trim().strip_prefix("bytes=")?;
    if spec.contains(',') {
        return None;
    }
    let (start, end) = spec.split_once('-')?;
    let (start, end) = (start.trim(), end.trim());
    if start.is_empty() {
        let suffix: u64 = end.parse().ok()?;
        if suffix == 0 {
            return Some(ByteRange {
                start: total_len,
                end: None,
            });
        }
        return Some(ByteRange {
            start: total_len.saturating_sub(suffix),
            end: None,
        });
    }
    let start: u64 = start.parse().ok()?;
    let end = if end.is_empty() {
        None
    } else {
        Some(end.parse().ok()?)
    };
    Some(ByteRange { start, end })
}

fn parse_json<T: for<'de> Deserialize<'de>>(req: &HttpRequest) -> Result<T, HttpResponse> {
    serde_json::from_slice(&req.body).map_err(|e| error(400, "bad_request", format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewOs {
    name: String,
    boot_template: String,
    #[serde(default)]
    kernel_params: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewUser {
    username: String,
    password: String,
    assigned_os: String,
}

fn respond<T: serde::Serialize>(status: u16, result: Result<T, CloudError>) -> HttpResponse {
    match result {
        Ok(v) => HttpResponse::json(status, &v),
        Err(e) => e.into(),
    }
}

fn no_content(result: Result<(), CloudError>) -> HttpResponse {
    match result {
        Ok(()) => HttpResponse::new(204, "text/plain", Vec::new()),
        Err(e) => e.into(),
    }
}

fn content_type_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

const ADMIN_PLACEHOLDER: &str = "<!doctype html>\n<title>SDB admin</title>\n<p>The admin UI bundle is not installed. Set <code>admin_ui_dir</code> in the cloud configuration to the built UI directory.</p>\n";

impl ControlPlane {
    /// Routes one request.
    pub fn handle_http(&self, req: &HttpRequest) -> HttpResponse {
        let decoded: Vec<String> = req
            .path
            .trim_matches('/')
            .split('/')
            .map(|s| percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let segments: Vec<&str> = decoded.iter().map(String::as_str).collect();
        match segments.as_slice() {
            ["boot"] => match req.method.as_str() {
                "GET" | "HEAD" => script_response(&self.boot_entry()),
                _ => method_not_allowed(),
            },
            ["auth"] => match req.method.as_str() {
                "GET" | "POST" => self.http_auth(req),
                _ => method_not_allowed(),
            },
            ["files", os_id, filename] => match req.method.as_str() {
                "GET" | "HEAD" => self.http_file(req, os_id, filename),
                _ => method_not_allowed(),
            },
            ["api", rest @ ..] => {
                if let Err(resp) = self.authorize(req) {
                    return resp;
                }
                self.http_api(req, rest)
            }
            ["admin", rest @ ..] => self.http_admin(rest),
            _ => not_found(),
        }
    }

    fn http_auth(&self, req: &HttpRequest) -> HttpResponse {
        let username = req.param("username").unwrap_or_default();
        let password = req.param("password").unwrap_or_default();
        let mac = req.param("mac").unwrap_or_default();
        let ip = req.remote.unwrap_or(Ipv4Addr::UNSPECIFIED);
        match self.authenticate_and_issue(&username, &password, &mac, ip) {
            Ok((script, _)) => script_response(&script),
            Err(e) => e.into(),
        }
    }

    fn http_file(&self, req: &HttpRequest, os_id: &str, filename: &str) -> HttpResponse {
        let range = match req.header("range") {
            Some(h) => {
                let total = self
                    .get_os(os_id)
                    .ok()
                    .and_then(|o| o.file(filename).map(|f| f.size))
                    .unwrap_or(0);
                parse_range(h, total)
            }
            None => None,
        };
        match self.serve_file(os_id, filename, range) {
            Ok(served) => {
                let mut resp = match served.range {
                    Some((start, end)) => HttpResponse::new(206, "application/octet-stream", served.bytes)
                        .with_header(
                            "content-range",
                            format!("bytes {start}-{end}/{}", served.total_len),
                        ),
                    None => HttpResponse::new(200, "application/octet-stream", served.bytes),
                };
                resp = resp
                    .with_header(DIGEST_HEADER, served.digest)
                    .with_header("accept-ranges", "bytes");
                if req.method == "HEAD" {
                    resp.body.clear();
                }
                resp
            }
            Err(CloudError::BadRange) => {
                let total = self
                    .get_os(os_id)
                    .ok()
                    .and_then(|o| o.file(filename).map(|f| f.size))
                    .unwrap_or(0);
                HttpResponse::from(CloudError::BadRange)
                    .with_header("content-range", format!("bytes */{total}"))
            }
            Err(e) => e.into(),
        }
    }

    fn authorize(&self, req: &HttpRequest) -> Result<(), HttpResponse> {
        let Some(expected) = self.config().admin_token.as_deref() else {
            return Err(error(403, "admin_disabled", "no admin token is configured"));
        };
        let presented = req
            .header("authorization")
            .and_then(|h| h.strip_prefix("Bearer "))
            .unwrap_or("");
        if constant_time_eq(presented.trim().as_bytes(), expected.as_bytes()) {
            Ok(())
        } else {
            Err(error(401, "unauthorized", "missing or invalid bearer token")
                .with_header("www-authenticate", "Bearer"))
        }
    }

    fn http_api(&self, req: &HttpRequest, rest: &[&str]) -> HttpResponse {
        let m = req.method.as_str();
        match rest {
            ["os"] => match m {
                "GET" => HttpResponse::json(200, &self.list_oses()),
                "POST" => match parse_json::<NewOs>(req) {
                    Ok(b) => respond(201, self.create_os(&b.name, &b.boot_template, &b.kernel_params)),
                    Err(r) => r,
                },
                _ => method_not_allowed(),
            },
            ["os", id] => match m {
                "GET" => respond(200, self.get_os(id)),
                "PUT" | "PATCH" => match parse_json::<OsUpdate>(req) {
                    Ok(u) => respond(200, self.update_os(id, u)),
                    Err(r) => r,
                },
                "DELETE" => no_content(self.delete_os(id)),
                _ => method_not_allowed(),
            },
            ["os", id, "files", name] => match m {
                "PUT" => respond(200, self.upload_file(id, name, &req.body)),
                "DELETE" => no_content(self.delete_file(id, name)),
                _ => method_not_allowed(),
            },
            ["users"] => match m {
                "GET" => HttpResponse::json(200, &self.list_users()),
                "POST" => match parse_json::<NewUser>(req) {
                    Ok(b) => respond(201, self.create_user(&b.username, &b.password, &b.assigned_os)),
                    Err(r) => r,
                },
                _ => method_not_allowed(),
            },
            ["users", name] => match m {
                "GET" => respond(200, self.get_user(name)),
                "PUT" | "PATCH" => match parse_json::<UserUpdate>(req) {
                    Ok(u) => respond(200, self.update_user(name, u)),
                    Err(r) => r,
                },
                "DELETE" => no_content(self.delete_user(name)),
                _ => method_not_allowed(),
            },
            ["users", name, "deactivate"] => match m {
                "POST" => respond(200, self.deactivate_user(name)),
                _ => method_not_allowed(),
            },
            ["logs"] => match m {
                "GET" => self.http_logs(req),
                _ => method_not_allowed(),
            },
            _ => not_found(),
        }
    }

    fn http_logs(&self, req: &HttpRequest) -> HttpResponse {
        let mut filter = LogFilter::default();
        let mut page = 1usize;
        let mut per_page = DEFAULT_PER_PAGE;
        for (k, v) in req.params() {
            match k.as_str() {
                "username" if !v.is_empty() => filter.username = Some(v),
                "mac" if !v.is_empty() => filter.mac = Some(v),
                "success" if !v.is_empty() => match v.as_str() {
                    "true" | "1" => filter.success = Some(true),
                    "false" | "0" => filter.success = Some(false),
                    _ => return error(400, "bad_request", "success must be true or false"),
                },
                "page" => match v.parse() {
                    Ok(p) => page = p,
                    Err(_) => return error(400, "bad_request", "page must be a positive integer"),
                },
                "per_page" => match v.parse() {
                    Ok(p) => per_page = p,
                    Err(_) => return error(400, "bad_request", "per_page must be a positive integer"),
                },
                _ => {}
            }
        }
        HttpResponse::json(200, &self.list_auth_log(&filter, page, per_page))
    }

    fn http_admin(&self, rest: &[&str]) -> HttpResponse {
        let rel: Vec<&str> = rest.iter().copied().filter(|s| !s.is_empty()).collect();
        let Some(dir) = self.config().admin_ui_dir.as_deref() else {
            return if rel.is_empty() {
                HttpResponse::new(200, "text/html; charset=utf-8", ADMIN_PLACEHOLDER)
            } else {
                not_found()
            };
        };
        let rel_path: std::path::PathBuf = if rel.is_empty() {
            "index.html".into()
        } else {
            rel.iter().collect()
        };
        if !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
            return not_found();
        }
        let full = dir.join(&rel_path);
        match std::fs::read(&full) {
            Ok(bytes) => HttpResponse::new(200, content_type_for(&full), bytes),
            // Client-side routes fall back to the SPA entry point.
            Err(_) if full.extension().is_none() => match std::fs::read(dir.join("index.html")) {
                Ok(bytes) => HttpResponse::new(200, "text/html; charset=utf-8", bytes),
                Err(_) => not_found(),
            },
            Err(_) => not_found(),
        }
    }
}
