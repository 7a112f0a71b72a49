//! OS boot templates: placeholder filling and URL scoping.
//!
//! A template is script text that may use `{{base_url}}` and `{{os_id}}`.
//! Every URL in the issued script that names a `/files/` path must name a
//! file of the template's own OS.

use crate::script::{parse_script, Script, Statement};

use super::model::OsDefinition;
use super::CloudError;

const BASE_URL: &str = "{{base_url}}";
const OS_ID: &str = "{{os_id}}";

fn fill(template: &str, base_url: &str, os_id: &str) -> Result<String, CloudError> {
    let text = template
        .replace(BASE_URL, base_url.trim_end_matches('/'))
        .replace(OS_ID, os_id);
    if let Some(start) = text.find("{{") {
        let rest = &text[start..];
        let end = rest.find("}}").map(|e| e + 2).unwrap_or(rest.len());
        return Err(CloudError::BadTemplate(format!(
            "unknown placeholder `{}`",
            &rest[..end]
        )));
    }
    Ok(text)
}

fn build(template: &str, kernel_params: &str, base_url: &str, os_id: &str) -> Result<Script, CloudError> {
    let text = fill(template, base_url, os_id)?;
    let script = parse_script(&text).map_err(|e| CloudError::BadTemplate(e.to_string()))?;
    let extra = kernel_params.trim();
    let mut kernels = 0;
    let stmts: Vec<Statement> = script
        .into_statements()
        .into_iter()
        .map(|s| match s {
            Statement::Kernel { url, params } if !extra.is_empty() => {
                kernels += 1;
                let params = if params.is_empty() {
                    extra.to_string()
                } else {
                    format!("{params} {extra}")
                };
                Statement::Kernel { url, params }
            }
            Statement::Kernel { url, params } => {
                kernels += 1;
                Statement::Kernel { url, params }
            }
            other => other,
        })
        .collect();
    if kernels == 0 {
        return Err(CloudError::BadTemplate("template loads no kernel".into()));
    }
    let script = Script::new(stmts).map_err(|e| CloudError::BadTemplate(e.to_string()))?;
    check_scope(&script, os_id).map_err(CloudError::BadTemplate)?;
    Ok(script)
}

/// Checks that a template would issue a well-formed, correctly scoped script.
pub fn validate(template: &str, kernel_params: &str, base_url: &str, os_id: &str) -> Result<(), CloudError> {
    build(template, kernel_params, base_url, os_id).map(|_| ())
}

/// Builds the script issued to a user assigned `os`.
pub fn issue(os: &OsDefinition, base_url: &str) -> Result<Script, CloudError> {
    build(&os.boot_template, &os.kernel_params, base_url, &os.os_id)
}

fn check_url(url: &str, os_id: &str) -> Result<(), String> {
    if url.contains("${") {
        return Err(format!("URL `{url}` uses a client-side variable"));
    }
    let parsed = url::Url::parse(url).map_err(|e| format!("URL `{url}` is not absolute: {e}"))?;
    let segments: Vec<&str> = parsed.path_segments().map(|s| s.collect()).unwrap_or_default();
    if segments.first() == Some(&"files") {
        let own = segments.len() == 3 && segments[1] == os_id && super::valid_filename(segments[2]);
        if !own {
            return Err(format!("URL `{url}` names files outside OS `{os_id}`"));
        }
    }
    Ok(())
}

/// URL-looking values in kernel parameters (`key=http://...`).
fn param_urls(params: &str) -> impl Iterator<Item = &str> {
    params.split_whitespace().filter_map(|tok| {
        let value = tok.split_once('=').map(|(_, v)| v).unwrap_or(tok);
        value.contains("://").then_some(value)
    })
}

/// Every URL the script fetches, or passes to the kernel, must stay inside
/// `os_id`'s files whenever it names a `/files/` path.
pub fn check_scope(script: &Script, os_id: &str) -> Result<(), String> {
    for stmt in script.statements() {
        for url in stmt.urls() {
            check_url(url, os_id)?;
        }
        if let Statement::Kernel { params, .. } = stmt {
            for url in param_urls(params) {
                check_url(url, os_id)?;
            }
        }
    }
    Ok(())
}
