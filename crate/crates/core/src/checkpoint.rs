//! Versioned JSON container shared by every persisted model.
//!
//! ```json
//! {"format":"rgait-checkpoint","version":1,"kind":"detector","payload":{...}}
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "rgait-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Detector,
    Reconstructor,
    Pca,
    Classifier,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: Kind,
    payload: T,
}

pub fn to_string<T: Serialize>(kind: Kind, payload: &T) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind,
        payload,
    })?)
}

pub fn from_str<T: DeserializeOwned>(kind: Kind, text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("not a checkpoint: {e}")))?;
    if env.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", env.format)));
    }
    if env.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "version {} is not supported (expected {VERSION})",
            env.version
        )));
    }
    if env.kind != kind {
        return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", env.kind)));
    }
    serde_json::from_value(env.payload).map_err(|e| Error::Checkpoint(format!("malformed payload: {e}")))
}

pub fn save<T: Serialize>(kind: Kind, payload: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_string(kind, payload)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(kind: Kind, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    from_str(kind, &text)
}
