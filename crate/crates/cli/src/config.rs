//! Flat `key = value` config files. Every key names a long flag of the
//! invoked subcommand (`max_depth` or `max-depth` both mean `--max-depth`);
//! the resulting tokens are placed in front of the user's own arguments so
//! that anything given on the command line wins.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Command;

use crate::CliError;

fn config_error(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Finds `--config` anywhere in `args` and returns its value together with
/// the index of the subcommand name.
pub(crate) fn locate(args: &[OsString]) -> (Option<PathBuf>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if a == "--" {
            break;
        } else if sub.is_none() && !a.starts_with('-') {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

fn scalar(path: &Path, key: &str, value: &toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        _ => Err(config_error(path, format!("key `{key}`: nested values are not supported"))),
    }
}

/// Translates the file into flag tokens for `sub`, rejecting keys the
/// subcommand does not accept.
pub(crate) fn tokens(path: &Path, text: &str, sub: &Command) -> Result<Vec<OsString>, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error(path, e.message()))?;
    let mut out = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(flag.as_str()) && flag != "config")
            .ok_or_else(|| config_error(path, format!("unknown key `{key}` for `{}`", sub.get_name())))?;
        let takes_value = arg.get_action().takes_values();
        match value {
            toml::Value::Boolean(b) if !takes_value => {
                if *b {
                    out.push(format!("--{flag}").into());
                }
            }
            toml::Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| scalar(path, key, v))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(format!("--{flag}").into());
                out.push(parts.join(",").into());
            }
            _ if !takes_value => {
                return Err(config_error(path, format!("key `{key}` is a switch and needs true or false")));
            }
            v => {
                out.push(format!("--{flag}").into());
                out.push(scalar(path, key, v)?.into());
            }
        }
    }
    Ok(out)
}
