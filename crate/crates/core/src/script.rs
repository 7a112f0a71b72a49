//! The iPXE script subset exchanged between the gateway portal, the control
//! plane and booting clients: `echo`, `set`, `login`, `prompt`, `chain`,
//! `kernel`, `initrd`, `boot`, `menu`, `item` and `choose`.
//!
//! Scripts are text/plain, UTF-8, LF-terminated, and start with `#!ipxe`.
//! Values may reference variables as `${name}`; names may contain `/`
//! (`${net0/mac}`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use thiserror::Error;

pub const SHEBANG: &str = "#!ipxe";
pub const MEDIA_TYPE: &str = "text/plain; charset=utf-8";

/// RFC 3986 unreserved characters stay literal; everything else is escaped.
const URL_VALUE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("script does not start with {SHEBANG}")]
    NoShebang,
    #[error("line {line}: unknown command `{command}`")]
    UnknownCommand { line: usize, command: String },
    #[error("line {line}: {reason}")]
    MalformedArgs { line: usize, reason: String },
    #[error("line {line}: boot must be the last statement and follow a kernel")]
    MisplacedBoot { line: usize },
    #[error("undefined variable `{0}`")]
    UndefinedVariable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Echo(String),
    Set { var: String, value: String },
    /// Collects `username` and `password`.
    Login,
    Prompt { var: String, message: String, masked: bool },
    Chain(String),
    Kernel { url: String, params: String },
    Initrd(String),
    Boot,
    MenuStart(String),
    MenuItem { key: String, label: String },
    Choose(String),
}

impl Statement {
    fn keyword(&self) -> &'static str {
        match self {
            Statement::Echo(_) => "echo",
            Statement::Set { .. } => "set",
            Statement::Login => "login",
            Statement::Prompt { .. } => "prompt",
            Statement::Chain(_) => "chain",
            Statement::Kernel { .. } => "kernel",
            Statement::Initrd(_) => "initrd",
            Statement::Boot => "boot",
            Statement::MenuStart(_) => "menu",
            Statement::MenuItem { .. } => "item",
            Statement::Choose(_) => "choose",
        }
    }

    /// Renders the statement as a single script line.
    pub fn render(&self) -> String {
        let mut line = self.keyword().to_string();
        let mut push = |part: &str| {
            if !part.is_empty() {
                line.push(' ');
                line.push_str(part);
            }
        };
        match self {
            Statement::Echo(text) | Statement::MenuStart(text) => push(text),
            Statement::Set { var, value } => {
                push(var);
                push(value);
            }
            Statement::Login | Statement::Boot => {}
            Statement::Prompt {
                var,
                message,
                masked,
            } => {
                if *masked {
                    push("--masked");
                }
                push(var);
                push(message);
            }
            Statement::Chain(url) | Statement::Initrd(url) | Statement::Choose(url) => push(url),
            Statement::Kernel { url, params } => {
                push(url);
                push(params);
            }
            Statement::MenuItem { key, label } => {
                push(key);
                push(label);
            }
        }
        line
    }

    /// Replaces every `${var}` with its value from `env`. Values substituted
    /// into URLs are percent-encoded.
    pub fn substitute(&self, env: &VarEnv) -> Result<Statement, ScriptError> {
        let text = |s: &str| expand(s, env, false);
        let url = |s: &str| expand(s, env, true);
        Ok(match self {
            Statement::Echo(t) => Statement::Echo(text(t)?),
            Statement::Set { var, value } => Statement::Set {
                var: var.clone(),
                value: text(value)?,
            },
            Statement::Login => Statement::Login,
            Statement::Prompt {
                var,
                message,
                masked,
            } => Statement::Prompt {
                var: var.clone(),
                message: text(message)?,
                masked: *masked,
            },
            Statement::Chain(u) => Statement::Chain(url(u)?),
            Statement::Kernel { url: u, params } => Statement::Kernel {
                url: url(u)?,
                params: text(params)?,
            },
            Statement::Initrd(u) => Statement::Initrd(url(u)?),
            Statement::Boot => Statement::Boot,
            Statement::MenuStart(t) => Statement::MenuStart(text(t)?),
            Statement::MenuItem { key, label } => Statement::MenuItem {
                key: key.clone(),
                label: text(label)?,
            },
            Statement::Choose(v) => Statement::Choose(v.clone()),
        })
    }

    /// URL-bearing arguments, in order.
    pub fn urls(&self) -> Vec<&str> {
        match self {
            Statement::Chain(u) | Statement::Initrd(u) => vec![u.as_str()],
            Statement::Kernel { url, .. } => vec![url.as_str()],
            _ => Vec::new(),
        }
    }
}

/// A parsed script. Construction validates statement arguments and the boot
/// ordering rules, so every `Script` renders to text that parses back to it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    statements: Vec<Statement>,
}

impl Script {
    pub fn new(statements: Vec<Statement>) -> Result<Script, ScriptError> {
        for (idx, stmt) in statements.iter().enumerate() {
            validate_statement(stmt, idx + 2)?;
        }
        check_boot_order(&statements, |idx| idx + 2)?;
        Ok(Script { statements })
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn into_statements(self) -> Vec<Statement> {
        self.statements
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }
}

/// Variable bindings visible to a running script.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarEnv {
    vars: BTreeMap<String, String>,
}

impl VarEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.vars.get(name).map(String::as_str)
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.vars.insert(name.into(), value.into());
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.set(name, value);
        self
    }
}

pub fn parse_script(text: &str) -> Result<Script, ScriptError> {
    let mut lines = text.split('\n').enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == SHEBANG => {}
        _ => return Err(ScriptError::NoShebang),
    }
    let mut statements = Vec::new();
    let mut line_numbers = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let stmt = parse_line(line, line_no)?;
        validate_statement(&stmt, line_no)?;
        statements.push(stmt);
        line_numbers.push(line_no);
    }
    check_boot_order(&statements, |idx| line_numbers[idx])?;
    Ok(Script { statements })
}

pub fn render_script(script: &Script) -> String {
    let mut out = String::from(SHEBANG);
    out.push('\n');
    for stmt in &script.statements {
        let _ = writeln!(out, "{}", stmt.render());
    }
    out
}

/// Substitutes every placeholder in `script`; fails on the first undefined
/// variable.
pub fn substitute(script: &Script, env: &VarEnv) -> Result<Script, ScriptError> {
    let statements = script
        .statements
        .iter()
        .map(|s| s.substitute(env))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Script { statements })
}

/// Names referenced as `${name}` in `text`, in order of appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                out.push(after[..end].to_string());
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

pub fn percent_encode(value: &str) -> String {
    utf8_percent_encode(value, URL_VALUE).to_string()
}

fn expand(text: &str, env: &VarEnv, url: bool) -> Result<String, ScriptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| ScriptError::MalformedArgs {
            line: 0,
            reason: "unterminated ${".into(),
        })?;
        let name = &after[..end];
        let value = env
            .get(name)
            .ok_or_else(|| ScriptError::UndefinedVariable(name.to_string()))?;
        if url {
            out.push_str(&percent_encode(value));
        } else {
            out.push_str(value);
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<Statement, ScriptError> {
    let malformed = |reason: &str| ScriptError::MalformedArgs {
        line: line_no,
        reason: reason.to_string(),
    };
    let (command, rest) = split_word(line);
    let single = |what: &str| -> Result<String, ScriptError> {
        let (word, extra) = split_word(rest);
        if word.is_empty() {
            return Err(malformed(&format!("{command} needs {what}")));
        }
        if !extra.is_empty() {
            return Err(malformed(&format!("{command} takes a single {what}")));
        }
        Ok(word.to_string())
    };
    let stmt = match command {
        "echo" => Statement::Echo(rest.to_string()),
        "set" => {
            let (var, value) = split_word(rest);
            if var.is_empty() {
                return Err(malformed("set needs a variable name"));
            }
            Statement::Set {
                var: var.into(),
                value: value.into(),
            }
        }
        "login" | "boot" => {
            if !rest.is_empty() {
                return Err(malformed(&format!("{command} takes no arguments")));
            }
            if command == "login" {
                Statement::Login
            } else {
                Statement::Boot
            }
        }
        "prompt" => {
            let (mut word, mut tail) = split_word(rest);
            let masked = word == "--masked";
            if masked {
                (word, tail) = split_word(tail);
            }
            if word.is_empty() {
                return Err(malformed("prompt needs a variable name"));
            }
            Statement::Prompt {
                var: word.into(),
                message: tail.into(),
                masked,
            }
        }
        "chain" => Statement::Chain(single("a URL")?),
        "initrd" => Statement::Initrd(single("a URL")?),
        "kernel" => {
            let (url, params) = split_word(rest);
            if url.is_empty() {
                return Err(malformed("kernel needs a URL"));
            }
            Statement::Kernel {
                url: url.into(),
                params: params.into(),
            }
        }
        "menu" => Statement::MenuStart(rest.to_string()),
        "item" => {
            let (key, label) = split_word(rest);
            if key.is_empty() {
                return Err(malformed("item needs a key"));
            }
            Statement::MenuItem {
                key: key.into(),
                label: label.into(),
            }
        }
        "choose" => Statement::Choose(single("variable name")?),
        other => {
            return Err(ScriptError::UnknownCommand {
                line: line_no,
                command: other.to_string(),
            })
        }
    };
    Ok(stmt)
}

fn is_var_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('-')
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
}

fn validate_statement(stmt: &Statement, line: usize) -> Result<(), ScriptError> {
    let malformed = |reason: String| ScriptError::MalformedArgs { line, reason };
    let text_ok = |field: &str, s: &str| -> Result<(), ScriptError> {
        if s.contains(['\n', '\r']) || s.trim() != s {
            return Err(malformed(format!(
                "{field} must be a single trimmed line"
            )));
        }
        check_placeholders(s).map_err(|r| malformed(format!("{field}: {r}")))
    };
    let word_ok = |field: &str, s: &str| -> Result<(), ScriptError> {
        if s.is_empty() || s.contains(char::is_whitespace) {
            return Err(malformed(format!("{field} must be a single word")));
        }
        check_placeholders(s).map_err(|r| malformed(format!("{field}: {r}")))
    };
    let var_ok = |s: &str| -> Result<(), ScriptError> {
        if is_var_name(s) {
            Ok(())
        } else {
            Err(malformed(format!("invalid variable name `{s}`")))
        }
    };
    match stmt {
        Statement::Echo(t) | Statement::MenuStart(t) => text_ok("text", t),
        Statement::Set { var, value } => {
            var_ok(var)?;
            text_ok("value", value)
        }
        Statement::Login | Statement::Boot => Ok(()),
        Statement::Prompt { var, message, .. } => {
            var_ok(var)?;
            text_ok("message", message)
        }
        Statement::Chain(u) | Statement::Initrd(u) => word_ok("url", u),
        Statement::Kernel { url, params } => {
            word_ok("url", url)?;
            text_ok("params", params)
        }
        Statement::MenuItem { key, label } => {
            if key.starts_with('-') {
                return Err(malformed("item key must not start with -".into()));
            }
            word_ok("key", key)?;
            text_ok("label", label)
        }
        Statement::Choose(var) => var_ok(var),
    }
}

fn check_placeholders(s: &str) -> Result<(), String> {
    let mut rest = s;
    while let Some(start) = rest.find("${") {
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| "unterminated ${".to_string())?;
        if !is_var_name(&after[..end]) {
            return Err(format!("invalid placeholder `${{{}}}`", &after[..end]));
        }
        rest = &after[end + 1..];
    }
    Ok(())
}

fn check_boot_order(
    statements: &[Statement],
    line_of: impl Fn(usize) -> usize,
) -> Result<(), ScriptError> {
    let mut kernel_seen = false;
    for (idx, stmt) in statements.iter().enumerate() {
        match stmt {
            Statement::Kernel { .. } => kernel_seen = true,
            Statement::Boot if !kernel_seen || idx + 1 != statements.len() => {
                return Err(ScriptError::MisplacedBoot { line: line_of(idx) })
            }
            _ => {}
        }
    }
    Ok(())
}
