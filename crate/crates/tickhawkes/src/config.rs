//! `key = value` config files. Keys are long flag names without the leading
//! dashes; `#` starts a comment. Values are spliced into the argument list
//! ahead of the command-line flags so that explicit flags win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"').to_owned();
        if key.is_empty() {
            return Err(Error::format(path, format!("line {}: empty key", i + 1)));
        }
        out.push(Entry { key, value, line: i + 1 });
    }
    Ok(out)
}

/// Finds `--config PATH` or `--config=PATH` in raw arguments.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// What a flag accepts, for turning entries back into arguments.
enum Kind {
    Switch,
    Value,
}

fn flag_kind(cmd: &Command, long: &str) -> Option<Kind> {
    let arg = cmd.get_arguments().find(|a| a.get_long() == Some(long))?;
    Some(if arg.get_action().takes_values() { Kind::Value } else { Kind::Switch })
}

/// Merges config entries into `args`. Global flags go before the subcommand,
/// subcommand flags directly after it. Keys neither level knows are returned
/// for the caller to warn about.
pub fn merge_config(cmd: &Command, args: Vec<OsString>, entries: &[Entry], path: &Path) -> Result<(Vec<OsString>, Vec<Entry>)> {
    let sub_pos = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .map(|(i, _)| i);
    let sub = sub_pos.and_then(|i| cmd.find_subcommand(args[i].to_string_lossy().as_ref()));

    let mut global = Vec::new();
    let mut local = Vec::new();
    let mut unknown = Vec::new();
    for e in entries {
        if e.key == "config" {
            continue;
        }
        let (kind, target) = match (sub.and_then(|s| flag_kind(s, &e.key)), flag_kind(cmd, &e.key)) {
            (Some(k), _) => (k, &mut local),
            (None, Some(k)) => (k, &mut global),
            (None, None) => {
                unknown.push(e.clone());
                continue;
            }
        };
        match kind {
            Kind::Value => {
                target.push(OsString::from(format!("--{}", e.key)));
                target.push(OsString::from(&e.value));
            }
            Kind::Switch => match e.value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "" => target.push(OsString::from(format!("--{}", e.key))),
                "false" | "no" | "0" => {}
                other => {
                    return Err(Error::format(path, format!("line {}: {} expects true or false, got {other:?}", e.line, e.key)))
                }
            },
        }
    }

    let mut out = Vec::with_capacity(args.len() + global.len() + local.len());
    let split = sub_pos.unwrap_or(args.len());
    out.push(args[0].clone());
    out.extend(global);
    out.extend_from_slice(&args[1..split]);
    if let Some(i) = sub_pos {
        out.push(args[i].clone());
        out.extend(local);
        out.extend_from_slice(&args[i + 1..]);
    }
    Ok((out, unknown))
}

pub fn load_config(path: &Path) -> Result<Vec<Entry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn cli() -> Command {
        Command::new("t")
            .args_override_self(true)
            .arg(Arg::new("seed").long("seed").global(true))
            .subcommand(
                Command::new("train")
                    .arg(Arg::new("epochs").long("epochs"))
                    .arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)),
            )
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse_config("# hi\nbatch_size = 32  # note\n\nseed=4\n", Path::new("c")).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("batch-size", "32", 2));
        assert!(parse_config("novalue\n", Path::new("c")).is_err());
    }

    #[test]
    fn flags_override_config() {
        let entries = parse_config("epochs = 5\nseed = 1\nfast = true\nbogus = 2\n", Path::new("c")).unwrap();
        let (args, unknown) = merge_config(&cli(), os(&["t", "train", "--epochs", "9"]), &entries, Path::new("c")).unwrap();
        assert_eq!(unknown.len(), 1);
        let m = cli().get_matches_from(args);
        let (_, sub) = m.subcommand().unwrap();
        assert_eq!(sub.get_one::<String>("epochs").unwrap(), "9");
        assert!(sub.get_flag("fast"));
        assert_eq!(m.get_one::<String>("seed").unwrap(), "1");
    }

    #[test]
    fn finds_config_flag() {
        assert_eq!(config_path(&os(&["t", "--config", "a.cfg", "train"])).unwrap(), "a.cfg");
        assert_eq!(config_path(&os(&["t", "train", "--config=b.cfg"])).unwrap(), "b.cfg");
        assert!(config_path(&os(&["t", "train"])).is_none());
    }
}
