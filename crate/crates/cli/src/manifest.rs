//! Output writing with a content-hash manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::commands::Output;
use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Manifest text: the command, the resolved settings, then one
/// `<sha256>  <path>` line per output.
pub fn manifest(command: &str, cfg: &RunConfig, outputs: &[Output]) -> String {
    let mut s = String::from("# sgrd run manifest\n");
    let _ = writeln!(s, "command = {command}");
    for (k, v) in cfg.entries() {
        let _ = writeln!(s, "{k} = {v}");
    }
    s.push_str("[files]\n");
    for o in outputs {
        let _ = writeln!(s, "{}  {}", sha256_hex(&o.bytes), o.path);
    }
    s
}

/// Writes every output plus the manifest into `dir`. Files are written to a
/// staging directory first and moved into place once all writes succeed.
pub fn write_outputs(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    outputs: &[Output],
) -> Result<(), CliError> {
    let staging = dir.join(".sgrd-staging");
    let result = stage_and_commit(dir, &staging, command, cfg, outputs);
    let _ = fs::remove_dir_all(&staging);
    result
}

fn stage_and_commit(
    dir: &Path,
    staging: &Path,
    command: &str,
    cfg: &RunConfig,
    outputs: &[Output],
) -> Result<(), CliError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e| CliError::io(p, e)
    };
    if staging.exists() {
        fs::remove_dir_all(staging).map_err(io(staging))?;
    }
    let text = manifest(command, cfg, outputs);
    let all = outputs
        .iter()
        .map(|o| (o.path.as_str(), o.bytes.as_slice()))
        .chain(std::iter::once((MANIFEST, text.as_bytes())));
    let mut staged = Vec::new();
    for (rel, bytes) in all {
        let path = staging.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&path, bytes).map_err(io(&path))?;
        staged.push(rel);
    }
    for rel in staged {
        let target = dir.join(rel);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::rename(staging.join(rel), &target).map_err(io(&target))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_every_output() {
        let outputs = vec![
            Output {
                path: "a.csv".into(),
                bytes: b"x\n".to_vec(),
            },
            Output {
                path: "snapshots/b.csv".into(),
                bytes: Vec::new(),
            },
        ];
        let text = manifest("run", &RunConfig::desk(), &outputs);
        assert!(text.contains("command = run\n"));
        assert!(text.contains(&format!("{}  a.csv\n", sha256_hex(b"x\n"))));
        assert!(text.contains(&format!("{}  snapshots/b.csv\n", sha256_hex(b""))));
    }
}
