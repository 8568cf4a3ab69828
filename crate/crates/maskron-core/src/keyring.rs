//! Key and salt material for the reversible / keyed masking strategies.
//!
//! The keyring file is a small versioned TOML document holding hex-encoded
//! material, written with owner-only permissions. Key material is never
//! printed: `Keyring` has a redacting `Debug` impl and no `Display`.
//!
//! File format (version 1):
//!
//! ```toml
//! version = 1
//! active_key = "2f0c..."    # optional, id of the most recent key
//! active_salt = "9ab1..."   # optional, id of the most recent salt
//!
//! [keys.<key_id>]
//! material = "<64 hex chars>"   # 256-bit AES / HMAC key
//!
//! [salts.<salt_id>]
//! material = "<32+ hex chars>"  # >= 128-bit hash salt
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::rngs::OsRng;
use rand::TryRngCore;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const KEY_LEN: usize = 32;
pub const SALT_LEN: usize = 16;
const KEYRING_VERSION: u64 = 1;

/// A 256-bit symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct Key(pub(crate) [u8; KEY_LEN]);

impl Key {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Key([REDACTED])")
    }
}

/// Keys and salts addressable by id, plus the active id per kind.
#[derive(Clone, Default)]
pub struct Keyring {
    keys: BTreeMap<String, Key>,
    salts: BTreeMap<String, Vec<u8>>,
    active_key: Option<String>,
    active_salt: Option<String>,
}

impl fmt::Debug for Keyring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keyring")
            .field("keys", &self.keys.keys().collect::<Vec<_>>())
            .field("salts", &self.salts.keys().collect::<Vec<_>>())
            .field("active_key", &self.active_key)
            .field("active_salt", &self.active_salt)
            .finish()
    }
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(&self, id: &str) -> Option<&Key> {
        self.keys.get(id)
    }

    pub fn salt(&self, id: &str) -> Option<&[u8]> {
        self.salts.get(id).map(Vec::as_slice)
    }

    pub fn has_key(&self, id: &str) -> bool {
        self.keys.contains_key(id)
    }

    pub fn has_salt(&self, id: &str) -> bool {
        self.salts.contains_key(id)
    }

    pub fn active_key_id(&self) -> Option<&str> {
        self.active_key.as_deref()
    }

    pub fn active_salt_id(&self) -> Option<&str> {
        self.active_salt.as_deref()
    }

    pub fn key_ids(&self) -> impl Iterator<Item = &str> {
        self.keys.keys().map(String::as_str)
    }

    pub fn salt_ids(&self) -> impl Iterator<Item = &str> {
        self.salts.keys().map(String::as_str)
    }

    pub fn insert_key(&mut self, id: impl Into<String>, key: Key) {
        let id = id.into();
        self.active_key = Some(id.clone());
        self.keys.insert(id, key);
    }

    pub fn insert_salt(&mut self, id: impl Into<String>, salt: Vec<u8>) -> Result<(), KeyringError> {
        if salt.len() < SALT_LEN {
            return Err(KeyringError::WeakSalt(salt.len()));
        }
        let id = id.into();
        self.active_salt = Some(id.clone());
        self.salts.insert(id, salt);
        Ok(())
    }

    /// Generates a fresh 256-bit key from OS entropy and registers it under
    /// a new UUID, which becomes the active key.
    pub fn keygen(&mut self) -> Result<(String, Key), KeyringError> {
        let mut material = [0u8; KEY_LEN];
        OsRng
            .try_fill_bytes(&mut material)
            .map_err(|e| KeyringError::EntropyUnavailable(e.to_string()))?;
        let id = Uuid::new_v4().to_string();
        let key = Key(material);
        self.insert_key(id.clone(), key.clone());
        Ok((id, key))
    }

    /// Generates a fresh 128-bit salt from OS entropy and registers it under
    /// a new UUID, which becomes the active salt.
    pub fn salt_gen(&mut self) -> Result<(String, Vec<u8>), KeyringError> {
        let mut material = vec![0u8; SALT_LEN];
        OsRng
            .try_fill_bytes(&mut material)
            .map_err(|e| KeyringError::EntropyUnavailable(e.to_string()))?;
        let id = Uuid::new_v4().to_string();
        self.insert_salt(id.clone(), material.clone())?;
        Ok((id, material))
    }

    pub fn load(path: &Path) -> Result<Self, KeyringError> {
        let raw = fs::read_to_string(path).map_err(|e| KeyringError::Io(path.display().to_string(), e))?;
        let file: KeyringFile = toml::from_str(&raw).map_err(|e| KeyringError::Parse(e.to_string()))?;
        if file.version != KEYRING_VERSION {
            return Err(KeyringError::UnsupportedVersion(file.version));
        }
        let mut ring = Keyring::new();
        for (id, entry) in file.keys {
            let bytes = hex::decode(&entry.material)
                .map_err(|_| KeyringError::BadMaterial(id.clone()))?;
            let material: [u8; KEY_LEN] = bytes
                .try_into()
                .map_err(|_| KeyringError::BadMaterial(id.clone()))?;
            ring.keys.insert(id, Key(material));
        }
        for (id, entry) in file.salts {
            let bytes = hex::decode(&entry.material)
                .map_err(|_| KeyringError::BadMaterial(id.clone()))?;
            if bytes.len() < SALT_LEN {
                return Err(KeyringError::WeakSalt(bytes.len()));
            }
            ring.salts.insert(id, bytes);
        }
        ring.active_key = file.active_key;
        ring.active_salt = file.active_salt;
        if let Some(id) = &ring.active_key {
            if !ring.keys.contains_key(id) {
                return Err(KeyringError::DanglingActive(id.clone()));
            }
        }
        if let Some(id) = &ring.active_salt {
            if !ring.salts.contains_key(id) {
                return Err(KeyringError::DanglingActive(id.clone()));
            }
        }
        Ok(ring)
    }

    /// Writes the keyring with owner-only (0600) permissions.
    pub fn save(&self, path: &Path) -> Result<(), KeyringError> {
        let file = KeyringFile {
            version: KEYRING_VERSION,
            active_key: self.active_key.clone(),
            active_salt: self.active_salt.clone(),
            keys: self
                .keys
                .iter()
                .map(|(id, k)| (id.clone(), MaterialEntry { material: hex::encode(k.0) }))
                .collect(),
            salts: self
                .salts
                .iter()
                .map(|(id, s)| (id.clone(), MaterialEntry { material: hex::encode(s) }))
                .collect(),
        };
        let body = toml::to_string_pretty(&file).map_err(|e| KeyringError::Parse(e.to_string()))?;
        fs::write(path, body).map_err(|e| KeyringError::Io(path.display().to_string(), e))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(path, fs::Permissions::from_mode(0o600))
                .map_err(|e| KeyringError::Io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct KeyringFile {
    version: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_salt: Option<String>,
    #[serde(default)]
    keys: BTreeMap<String, MaterialEntry>,
    #[serde(default)]
    salts: BTreeMap<String, MaterialEntry>,
}

#[derive(Serialize, Deserialize)]
struct MaterialEntry {
    material: String,
}

#[derive(Debug, thiserror::Error)]
pub enum KeyringError {
    #[error("OS entropy source unavailable: {0}")]
    EntropyUnavailable(String),
    #[error("keyring I/O error on {0}: {1}")]
    Io(String, #[source] io::Error),
    #[error("keyring parse error: {0}")]
    Parse(String),
    #[error("unsupported keyring version {0}")]
    UnsupportedVersion(u64),
    #[error("bad hex material for id {0}")]
    BadMaterial(String),
    #[error("salt too short: {0} bytes, need at least 16")]
    WeakSalt(usize),
    #[error("active id {0} does not resolve")]
    DanglingActive(String),
}
