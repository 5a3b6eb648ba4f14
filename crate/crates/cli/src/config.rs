//! Merging of `--config` key=value files into the command line.
//!
//! Config entries become extra `--key value` arguments, skipped when the
//! same flag was given explicitly, so the command line always wins.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

pub fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_text(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key '{key}'", i + 1));
        }
    }
    Ok(out)
}

/// Name of the subcommand in `matches` plus its matches.
fn subcommand(matches: &ArgMatches) -> Option<(&str, &ArgMatches)> {
    matches.subcommand()
}

/// Returns the argument list extended with config-file entries, or `None` when no `--config` was given.
pub fn merged_args(cmd: &Command, args: &[OsString], matches: &ArgMatches) -> Result<Option<Vec<OsString>>, String> {
    let Some((name, sub_matches)) = subcommand(matches) else {
        return Ok(None);
    };
    let Some(path) = sub_matches.get_one::<std::path::PathBuf>("config") else {
        return Ok(None);
    };
    let entries = parse_file(path)?;
    let sub = cmd
        .find_subcommand(name)
        .ok_or_else(|| format!("unknown subcommand {name}"))?;

    let mut extra = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
            .ok_or_else(|| {
                let valid: Vec<&str> = sub
                    .get_arguments()
                    .filter_map(|a| a.get_long())
                    .filter(|l| *l != "config" && *l != "help")
                    .collect();
                format!("unknown config key '{key}'; valid keys: {}", valid.join(", "))
            })?;
        if sub_matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "1" | "yes" => extra.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                _ => return Err(format!("config key '{key}' expects true or false, got '{value}'")),
            },
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    let mut merged = args.to_vec();
    merged.extend(extra);
    Ok(Some(merged))
}
