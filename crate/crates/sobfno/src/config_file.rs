//! Flat `key = value` config files. Every key is a long flag name without
//! the leading dashes; `true` and `false` switch boolean flags. File values
//! are spliced in ahead of the real arguments, so flags given on the command
//! line win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{}`", i + 1, raw.trim());
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.starts_with('-') || k.contains(char::is_whitespace) {
            bail!("line {}: bad key `{k}`", i + 1);
        }
        if k == "config" {
            bail!("line {}: config files cannot include other config files", i + 1);
        }
        if out.iter().any(|(seen, _)| seen == k) {
            bail!("line {}: duplicate key `{k}`", i + 1);
        }
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

/// Converts parsed pairs into command-line arguments.
pub fn to_args(pairs: &[(String, String)]) -> Vec<OsString> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => args.push(format!("--{k}").into()),
            "false" => {}
            _ => args.push(format!("--{k}={v}").into()),
        }
    }
    args
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>> {
    let mut found = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        let value = if s == "--config" {
            Some(it.next().cloned().context("--config needs a path")?)
        } else {
            s.strip_prefix("--config=").map(OsString::from)
        };
        if let Some(v) = value {
            if found.is_some() {
                bail!("--config given more than once");
            }
            found = Some(v);
        }
    }
    Ok(found)
}

/// Returns `argv` with the config file's flags inserted right after the
/// subcommand.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let extra = to_args(&parse(&text).with_context(|| format!("in config file {}", path.display()))?);
    let split = argv.len().min(2);
    let mut out = argv[..split].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_converts() {
        let pairs = parse("# run\nepochs = 5\n\nlr=0.002  # faster\nquiet = true\nverbose=false\n").unwrap();
        assert_eq!(pairs.len(), 4);
        let args: Vec<String> = to_args(&pairs).into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(args, ["--epochs=5", "--lr=0.002", "--quiet"]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("epochs 5").is_err());
        assert!(parse("--epochs = 5").is_err());
        assert!(parse("a = 1\na = 2").is_err());
        assert!(parse("config = x").is_err());
    }

    #[test]
    fn finds_config_flag() {
        let v = |s: &[&str]| s.iter().map(OsString::from).collect::<Vec<_>>();
        assert_eq!(config_path(&v(&["x", "train", "--config", "a.cfg"])).unwrap(), Some("a.cfg".into()));
        assert_eq!(config_path(&v(&["x", "train", "--config=b"])).unwrap(), Some("b".into()));
        assert_eq!(config_path(&v(&["x", "train"])).unwrap(), None);
        assert!(config_path(&v(&["x", "train", "--config"])).is_err());
    }
}
