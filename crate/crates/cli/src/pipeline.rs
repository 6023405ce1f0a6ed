//! Declarative batch runs. A config file lists stages that execute in file
//! order, in process; afterwards a manifest records the SHA-256 of every
//! stage output so reruns can be compared byte for byte.
//!
//! Config grammar (line-oriented, `#` comments and blank lines ignored):
//!
//! ```text
//! [vars]
//! root = /tmp/exp
//! feats = ${root}/feats.txt
//!
//! [stages]
//! stage train gmm train-aux --feats ${feats} --ali ${root}/ali.txt ...
//! stage adapt adapt map --model ... --out ${root}/sat.txt
//! ```
//!
//! `${name}` substitutes at the point it appears; variables must be defined
//! before use. Stage names must be unique. The outer `--seed` is injected
//! into every stage that does not set its own; `--threads` and
//! `--log-level` are process-wide and rejected inside stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Parser as _;
use gmmdkit::featio::common::write_atomic;
use sha2::{Digest, Sha256};

use crate::commands::{self, Command};
use crate::{Cli, Globals};

struct Stage {
    name: String,
    argv: Vec<String>,
    line_no: usize,
}

/// Replaces every `${name}` in `token` from the variable table.
fn substitute(token: &str, vars: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::new();
    let mut rest = token;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            bail!("unterminated ${{...}} in {token:?}");
        };
        let name = &after[..end];
        let value = vars
            .get(name)
            .with_context(|| format!("undefined variable ${{{name}}} in {token:?}"))?;
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn parse_config(path: &Path) -> Result<Vec<Stage>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut vars = BTreeMap::new();
    let mut stages: Vec<Stage> = Vec::new();
    let mut in_vars = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let at = || format!("{}:{line_no}", path.display());
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[vars]" => in_vars = true,
                "[stages]" => in_vars = false,
                other => bail!("{}: unknown section {other}", at()),
            }
            continue;
        }
        if in_vars {
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}: variable lines are `name = value`", at());
            };
            let (key, value) = (key.trim(), value.trim());
            ensure!(
                !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'),
                "{}: bad variable name {key:?}",
                at()
            );
            let value = substitute(value, &vars).with_context(at)?;
            if vars.insert(key.to_string(), value).is_some() {
                bail!("{}: variable {key} is defined twice", at());
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        ensure!(tokens.next() == Some("stage"), "{}: expected a `stage` line", at());
        let Some(name) = tokens.next() else {
            bail!("{}: stage line is missing a name", at());
        };
        let argv: Vec<String> =
            tokens.map(|t| substitute(t, &vars)).collect::<Result<_>>().with_context(at)?;
        ensure!(!argv.is_empty(), "{}: stage {name} has no subcommand", at());
        if stages.iter().any(|s| s.name == name) {
            bail!("{}: stage name {name} is used twice", at());
        }
        stages.push(Stage { name: name.to_string(), argv, line_no });
    }
    Ok(stages)
}

/// The values of `--out <path>` / `--out=<path>` in a stage's arguments.
fn stage_outputs(argv: &[String]) -> Vec<PathBuf> {
    let mut outputs = Vec::new();
    let mut i = 0;
    while i < argv.len() {
        if argv[i] == "--out" {
            if let Some(v) = argv.get(i + 1) {
                outputs.push(PathBuf::from(v));
                i += 2;
                continue;
            }
        } else if let Some(v) = argv[i].strip_prefix("--out=") {
            outputs.push(PathBuf::from(v));
        }
        i += 1;
    }
    outputs
}

fn has_flag(argv: &[String], flag: &str) -> bool {
    let prefix = format!("{flag}=");
    argv.iter().any(|t| t == flag || t.starts_with(&prefix))
}

pub fn run_pipeline(globals: &Globals, config: &Path, manifest: &Path) -> Result<()> {
    let stages = parse_config(config)?;
    let mut artifacts: Vec<PathBuf> = Vec::new();
    for stage in &stages {
        for flag in ["--threads", "--log-level"] {
            if has_flag(&stage.argv, flag) {
                bail!(
                    "stage {}: {flag} is process-wide; set it on the pipeline invocation",
                    stage.name
                );
            }
        }
        let mut argv = vec!["gmmdkit".to_string()];
        if !has_flag(&stage.argv, "--seed") {
            argv.push("--seed".to_string());
            argv.push(globals.seed.to_string());
        }
        argv.extend(stage.argv.iter().cloned());
        let cli = Cli::try_parse_from(&argv)
            .with_context(|| format!("stage {} (line {})", stage.name, stage.line_no))?;
        if matches!(cli.command, Command::Pipeline(_)) {
            bail!("stage {}: pipelines do not nest", stage.name);
        }
        log::info!("running stage {}", stage.name);
        commands::run(&cli.globals, &cli.command)
            .with_context(|| format!("stage {} failed", stage.name))?;
        for path in stage_outputs(&stage.argv) {
            if !artifacts.contains(&path) {
                artifacts.push(path);
            }
        }
    }
    write_manifest(&artifacts, manifest)
}

fn write_manifest(artifacts: &[PathBuf], path: &Path) -> Result<()> {
    let mut lines = Vec::new();
    for artifact in artifacts {
        let bytes = std::fs::read(artifact)
            .with_context(|| format!("artifact {} was not written", artifact.display()))?;
        lines.push(format!("{} {}", artifact.display(), hex::encode(Sha256::digest(&bytes))));
    }
    write_atomic(path, |w| {
        writeln!(w, "# artifact manifest: <path> <sha256>")?;
        for line in &lines {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    Ok(())
}
