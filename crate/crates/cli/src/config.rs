//! `key = value` configuration files, merged into the command line.
//!
//! File entries go before the user's flags; an entry is dropped when the same
//! flag also appears on the command line, so flags always win.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::args::Cli;
use crate::UsageError;

pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(UsageError(format!(
                "config line {}: expected `key = value`",
                i + 1
            )));
        };
        let key = k.trim().replace('_', "-");
        let value = v.trim().to_string();
        if key.is_empty() || value.is_empty() {
            bail!(UsageError(format!(
                "config line {}: empty key or value",
                i + 1
            )));
        }
        out.push(Entry {
            key,
            value,
            line: i + 1,
        });
    }
    Ok(out)
}

/// Id of the subcommand flag named `name` (long name or alias).
fn flag_id(sub: &clap::Command, name: &str) -> Option<String> {
    sub.get_arguments()
        .find(|a| {
            a.get_long() == Some(name) || a.get_all_aliases().is_some_and(|al| al.contains(&name))
        })
        .map(|a| a.get_id().to_string())
}

/// Expands `--config FILE` into explicit flags.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let Some(pos) = strs
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(argv);
    };
    let (path, consumed) = match strs[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => match strs.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => bail!(UsageError("--config needs a file".into())),
        },
    };
    let sub_name = strs.get(1).cloned().unwrap_or_default();
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        bail!(UsageError(format!(
            "--config needs a subcommand, got `{sub_name}`"
        )));
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {path}"))?;
    let entries = parse(&text)?;

    let mut rest: Vec<String> = strs.clone();
    rest.drain(pos..pos + consumed);
    let given: HashSet<String> = rest[2..]
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .filter_map(|a| flag_id(sub, a.split('=').next().unwrap_or(a)))
        .collect();

    let mut from_file = Vec::new();
    for e in entries {
        let id = match flag_id(sub, &e.key) {
            Some(id) if e.key != "config" => id,
            _ => bail!(UsageError(format!(
                "config line {}: unknown key `{}` for {sub_name}",
                e.line, e.key
            ))),
        };
        if !given.contains(&id) {
            from_file.push(format!("--{}={}", e.key, e.value));
        }
    }
    let mut out: Vec<OsString> = rest[..2].iter().map(OsString::from).collect();
    out.extend(from_file.into_iter().map(OsString::from));
    out.extend(rest[2..].iter().map(OsString::from));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# header\ngamma_eps = 0.01,0.02  # two\n\nN=3\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(
            (e[0].key.as_str(), e[0].value.as_str()),
            ("gamma-eps", "0.01,0.02")
        );
        assert_eq!((e[1].key.as_str(), e[1].line), ("N", 4));
        assert!(parse("novalue\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("dmem-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let f = dir.join("c.conf");
        std::fs::write(&f, "N = 3\ntrials = 7\n").unwrap();
        let argv = os(&[
            "dmem",
            "toric4d-lifetime",
            "--config",
            f.to_str().unwrap(),
            "--trials",
            "9",
            "--gamma-eps",
            "0.1",
        ]);
        let out = expand(argv).unwrap();
        let out: Vec<String> = out
            .iter()
            .map(|s| s.to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            out,
            [
                "dmem",
                "toric4d-lifetime",
                "--N=3",
                "--trials",
                "9",
                "--gamma-eps",
                "0.1"
            ]
        );
        std::fs::write(&f, "bogus = 1\n").unwrap();
        let argv = os(&["dmem", "toric4d-lifetime", "--config", f.to_str().unwrap()]);
        assert!(expand(argv).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
