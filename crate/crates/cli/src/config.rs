//! `--config FILE`: a JSON object whose keys name flags of the chosen
//! subcommand (`top_k` and `top-k` both work). Values are appended to argv
//! only for flags the command line leaves unset, so the command line wins.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::CommandFactory;
use serde_json::Value;
use vcrank::{Error, Result};

use crate::args::Cli;

pub fn apply_config(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&args) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let obj = match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(Error::invalid(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => {
            return Err(Error::Schema {
                path,
                line: e.line(),
                message: e.to_string(),
            })
        }
    };

    let root = Cli::command();
    let Some(sub) = args
        .iter()
        .skip(1)
        .find_map(|a| root.get_subcommands().find(|s| s.get_name() == a))
    else {
        return Ok(argv);
    };
    let present: HashSet<&str> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();

    for (key, value) in &obj {
        let name = key.replace('_', "-");
        if name == "config" || present.contains(name.as_str()) {
            continue;
        }
        let Some(arg) = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(name.as_str()))
        else {
            log::warn!("config key {key:?} is not a flag of `{}`; ignored", sub.get_name());
            continue;
        };
        if !arg.get_action().takes_values() {
            match value {
                Value::Bool(true) => argv.push(format!("--{name}").into()),
                Value::Bool(false) | Value::Null => {}
                other => return Err(Error::invalid(format!("config key {key:?}: expected a boolean, got {other}"))),
            }
            continue;
        }
        let rendered = match value {
            Value::Null => continue,
            Value::Array(items) => items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(","),
            other => scalar(other)?,
        };
        argv.push(format!("--{name}").into());
        argv.push(rendered.into());
    }
    Ok(argv)
}

fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn scalar(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(Error::invalid(format!("config value {other} is not a scalar"))),
    }
}
