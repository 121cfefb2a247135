use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, IoContext, Result};

/// Written last into a stage directory; its presence marks the stage complete.
pub const STAMP_FILE: &str = "stage.json";
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// Already complete with an identical configuration.
    Skipped,
}

pub fn read_stamp(dir: &Path) -> Option<Value> {
    let text = fs::read_to_string(dir.join(STAMP_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Writes `text` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, text: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_path(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, text).with_path(&tmp)?;
    fs::rename(&tmp, path).with_path(path)
}

/// Runs one stage into `dir`.
///
/// A complete stage with the same stamp is skipped. A complete stage with a
/// different stamp is refused unless `force` is set. Incomplete leftovers are
/// always cleared, so a directory never mixes outputs of two runs.
pub fn run_stage(dir: &Path, stamp: &Value, force: bool, body: impl FnOnce(&Path) -> Result<()>) -> Result<StageStatus> {
    if dir.exists() {
        if !force {
            match read_stamp(dir) {
                Some(old) if &old == stamp => {
                    log::info!("{} is up to date", dir.display());
                    return Ok(StageStatus::Skipped);
                }
                Some(_) => {
                    return Err(Error::Config(format!(
                        "{} already holds results of a different configuration; pass --force to overwrite",
                        dir.display()
                    )))
                }
                None => log::warn!("clearing incomplete stage directory {}", dir.display()),
            }
        }
        fs::remove_dir_all(dir).with_path(dir)?;
    }
    fs::create_dir_all(dir).with_path(dir)?;
    body(dir)?;
    let text = serde_json::to_string_pretty(stamp)? + "\n";
    write_atomic(&dir.join(STAMP_FILE), text.as_bytes())?;
    Ok(StageStatus::Ran)
}

/// Records a stage's stamp under `key` in the run manifest.
pub fn record_in_manifest(run_dir: &Path, key: &str, stamp: &Value) -> Result<()> {
    let path = run_dir.join(RUN_MANIFEST);
    let mut manifest: BTreeMap<String, Value> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str::<Value>(&text)?
            .get("stages")
            .and_then(|s| serde_json::from_value(s.clone()).ok())
            .unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    manifest.insert(key.to_string(), stamp.clone());
    let doc = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "stages": manifest,
    });
    write_atomic(&path, (serde_json::to_string_pretty(&doc)? + "\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn skip_refuse_and_force() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("stage");
        let mut runs = 0;
        let mut body = |d: &Path| {
            runs += 1;
            fs::write(d.join("out.txt"), "x").with_path(d)
        };
        assert_eq!(run_stage(&dir, &json!({"a": 1}), false, &mut body).unwrap(), StageStatus::Ran);
        assert_eq!(run_stage(&dir, &json!({"a": 1}), false, &mut body).unwrap(), StageStatus::Skipped);
        assert!(run_stage(&dir, &json!({"a": 2}), false, &mut body).is_err());
        fs::write(dir.join("stale.txt"), "y").unwrap();
        assert_eq!(run_stage(&dir, &json!({"a": 2}), true, &mut body).unwrap(), StageStatus::Ran);
        assert!(!dir.join("stale.txt").exists());
        assert_eq!(runs, 2);
    }

    #[test]
    fn failed_stage_is_cleared_on_retry() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("stage");
        let r = run_stage(&dir, &json!(1), false, |d| {
            fs::write(d.join("half.txt"), "x").unwrap();
            Err(Error::Config("boom".into()))
        });
        assert!(r.is_err());
        assert!(read_stamp(&dir).is_none());
        run_stage(&dir, &json!(1), false, |_| Ok(())).unwrap();
        assert!(!dir.join("half.txt").exists());
    }

    #[test]
    fn manifest_accumulates_stages() {
        let tmp = tempfile::tempdir().unwrap();
        record_in_manifest(tmp.path(), "split/EX", &json!({"seed": 7})).unwrap();
        record_in_manifest(tmp.path(), "split/HE", &json!({"seed": 7})).unwrap();
        let doc: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join(RUN_MANIFEST)).unwrap()).unwrap();
        assert_eq!(doc["stages"].as_object().unwrap().len(), 2);
    }
}
