//! Flat `key = value` config files.
//!
//! Keys are long flag names of the chosen subcommand or the global flags,
//! with `-` or `_` as separator. Boolean flags take `true`/`false`; `set`
//! may repeat. Positional arguments (`model`, `lr_dir`, ...) may also be
//! given and are used when missing on the command line. A `threads` key
//! yields to the thread-count environment variable.

use std::collections::BTreeMap;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, CommandFactory};

use crate::{Cli, THREADS_ENV};

/// Positional values taken from a config file, by argument id.
#[derive(Debug, Default)]
pub struct Positionals(BTreeMap<String, String>);

impl Positionals {
    pub fn fill<T: From<String>>(&self, slot: &mut Option<T>, id: &str) {
        if slot.is_none() {
            if let Some(v) = self.0.get(id) {
                *slot = Some(T::from(v.clone()));
            }
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        out.push((k.trim().replace('-', "_"), v.to_string()));
    }
    Ok(out)
}

/// Turns file entries into extra argv tokens for flags not given on the
/// command line, and collects positional values.
pub fn merge(matches: &ArgMatches, file: &[(String, String)]) -> Result<(Vec<String>, Positionals), String> {
    let root = Cli::command();
    let (sub_name, sub_matches) = matches.subcommand().ok_or("missing subcommand")?;
    let sub = root.find_subcommand(sub_name).ok_or("unknown subcommand")?;
    let mut tokens = Vec::new();
    let mut positionals = Positionals::default();
    for (key, value) in file {
        if key == "config" {
            return Err("config files cannot include other config files".into());
        }
        let (arg, m) = match sub.get_arguments().find(|a| a.get_id() == key.as_str()) {
            Some(a) => (a, sub_matches),
            None => match root.get_arguments().find(|a| a.get_id() == key.as_str()) {
                Some(a) => (a, matches),
                None => return Err(format!("unknown config key {key:?} for {sub_name}")),
            },
        };
        let given = m.value_source(key) == Some(ValueSource::CommandLine);
        if given || (key == "threads" && std::env::var_os(THREADS_ENV).is_some()) {
            continue;
        }
        let Some(long) = arg.get_long() else {
            positionals.0.insert(key.clone(), value.clone());
            continue;
        };
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => tokens.push(format!("--{long}")),
                "false" => {}
                other => return Err(format!("{key}: expected true or false, got {other:?}")),
            },
            _ => tokens.push(format!("--{long}={value}")),
        }
    }
    Ok((tokens, positionals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_quotes_and_dashes() {
        let kv = parse("# run\nmax-params = 100\nmodel = \"imdn\"\n\nset=blocks=4\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("max_params".into(), "100".into()),
                ("model".into(), "imdn".into()),
                ("set".into(), "blocks=4".into()),
            ]
        );
        assert!(parse("nokey\n").is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let m = Cli::command().get_matches_from(["srzoo", "search", "--k", "5"]);
        let file = vec![("k".to_string(), "9".to_string()), ("max_params".to_string(), "7".to_string())];
        let (tokens, _) = merge(&m, &file).unwrap();
        assert_eq!(tokens, vec!["--max-params=7".to_string()]);
    }

    #[test]
    fn positionals_and_bools() {
        let m = Cli::command().get_matches_from(["srzoo", "inspect"]);
        let file = vec![("model".to_string(), "imdn".to_string()), ("json".to_string(), "true".to_string())];
        let (tokens, pos) = merge(&m, &file).unwrap();
        assert_eq!(tokens, vec!["--json".to_string()]);
        let mut model: Option<String> = None;
        pos.fill(&mut model, "model");
        assert_eq!(model.as_deref(), Some("imdn"));
        assert!(merge(&m, &[("bogus".into(), "1".into())]).is_err());
    }
}
