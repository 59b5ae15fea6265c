// SPDX-License-Identifier: Apache-2.0

//! Passphrase-encrypted wallet file.
//!
//! ```json
//! {"ciphertext": "..", "format": "deon-wallet/1",
//!  "kdf": {"log_n": 15, "name": "scrypt", "p": 1, "r": 8, "salt": ".."}, "nonce": ".."}
//! ```
//!
//! The plaintext is canonical JSON holding the key seeds, the pairwise map
//! and the credentials. The file is the only place the keys are persisted.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use deon_core::codec;
use deon_core::crypto::Keypair;
use deon_core::error::{Error, Result};
use deon_core::identity::{Did, VerifiableCredential, Wallet};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "deon-wallet/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdfParams {
    pub log_n: u8,
    pub r: u32,
    pub p: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams { log_n: 15, r: 8, p: 1 }
    }
}

#[derive(Serialize, Deserialize)]
struct Kdf {
    name: String,
    log_n: u8,
    r: u32,
    p: u32,
    salt: String,
}

#[derive(Serialize, Deserialize)]
struct WalletFile {
    format: String,
    kdf: Kdf,
    nonce: String,
    ciphertext: String,
}

#[derive(Serialize, Deserialize)]
struct Plain {
    /// Seed of the primary key.
    primary: String,
    /// Seeds of every other key.
    keys: Vec<String>,
    /// peer did -> our pairwise did
    pairwise: BTreeMap<Did, Did>,
    credentials: Vec<VerifiableCredential>,
}

fn derive_key(passphrase: &str, salt: &[u8], kdf: KdfParams) -> Result<[u8; 32]> {
    let params = scrypt::Params::new(kdf.log_n, kdf.r, kdf.p, 32)
        .map_err(|e| Error::InvalidRequest(format!("scrypt parameters: {e}")))?;
    let mut key = [0u8; 32];
    scrypt::scrypt(passphrase.as_bytes(), salt, &params, &mut key)
        .map_err(|e| Error::InvalidRequest(format!("scrypt: {e}")))?;
    Ok(key)
}

fn seed(hex_text: &str) -> Result<Keypair> {
    let bytes = hex::decode(hex_text).map_err(|_| Error::Integrity("wallet key is not hex".into()))?;
    let arr: [u8; 32] = bytes.try_into().map_err(|_| Error::Integrity("wallet key has the wrong length".into()))?;
    Ok(Keypair::from_secret(&arr))
}

pub fn encode<R: RngCore + CryptoRng>(wallet: &Wallet, passphrase: &str, kdf: KdfParams, rng: &mut R) -> Result<Vec<u8>> {
    let primary = wallet.primary().ok_or_else(|| Error::InvalidRequest("wallet has no did".into()))?;
    let mut keys = Vec::new();
    let mut primary_seed = String::new();
    for (did, kp) in wallet.keys() {
        let h = hex::encode(kp.secret_bytes());
        if did == primary {
            primary_seed = h;
        } else {
            keys.push(h);
        }
    }
    let plain = Plain {
        primary: primary_seed,
        keys,
        pairwise: wallet.pairwise().clone(),
        credentials: wallet.credentials().to_vec(),
    };
    let mut salt = [0u8; 16];
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut salt);
    rng.fill_bytes(&mut nonce);
    let key = derive_key(passphrase, &salt, kdf)?;
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&nonce), codec::to_canonical_vec(&plain).as_slice())
        .map_err(|_| Error::Io("wallet encryption failed".into()))?;
    let file = WalletFile {
        format: FORMAT.into(),
        kdf: Kdf { name: "scrypt".into(), log_n: kdf.log_n, r: kdf.r, p: kdf.p, salt: hex::encode(salt) },
        nonce: hex::encode(nonce),
        ciphertext: hex::encode(ciphertext),
    };
    Ok(codec::to_canonical_vec(&file))
}

pub fn decode(bytes: &[u8], passphrase: &str) -> Result<Wallet> {
    let file: WalletFile =
        serde_json::from_slice(bytes).map_err(|e| Error::InvalidRequest(format!("wallet file: {e}")))?;
    if file.format != FORMAT || file.kdf.name != "scrypt" {
        return Err(Error::InvalidRequest(format!("unsupported wallet format {:?}", file.format)));
    }
    let unhex = |s: &str| hex::decode(s).map_err(|_| Error::InvalidRequest("wallet file: bad hex".into()));
    let salt = unhex(&file.kdf.salt)?;
    let nonce = unhex(&file.nonce)?;
    if nonce.len() != 12 {
        return Err(Error::InvalidRequest("wallet file: bad nonce".into()));
    }
    let kdf = KdfParams { log_n: file.kdf.log_n, r: file.kdf.r, p: file.kdf.p };
    let key = derive_key(passphrase, &salt, kdf)?;
    let plain = ChaCha20Poly1305::new(Key::from_slice(&key))
        .decrypt(Nonce::from_slice(&nonce), unhex(&file.ciphertext)?.as_slice())
        .map_err(|_| Error::IdentityRejected("wrong passphrase or damaged wallet file".into()))?;
    let plain: Plain = codec::from_slice(&plain).map_err(|e| Error::Integrity(format!("wallet contents: {e}")))?;

    let mut wallet = Wallet::new();
    wallet.import(seed(&plain.primary)?);
    for k in &plain.keys {
        wallet.import(seed(k)?);
    }
    for (peer, ours) in plain.pairwise {
        wallet.link_pairwise(peer, ours)?;
    }
    for vc in plain.credentials {
        wallet.store_credential(vc);
    }
    Ok(wallet)
}

pub fn save<R: RngCore + CryptoRng>(path: &Path, wallet: &Wallet, passphrase: &str, kdf: KdfParams, rng: &mut R) -> Result<()> {
    let bytes = encode(wallet, passphrase, kdf, rng)?;
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(&tmp).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load(path: &Path, passphrase: &str) -> Result<Wallet> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::NotFound(format!("no wallet at {}; run `deon onboard` first", path.display()))
        }
        _ => Error::Io(format!("{}: {e}", path.display())),
    })?;
    decode(&bytes, passphrase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const FAST: KdfParams = KdfParams { log_n: 4, r: 8, p: 1 };

    fn rng() -> rand::rngs::StdRng {
        rand::rngs::StdRng::seed_from_u64(3)
    }

    #[test]
    fn round_trip_keeps_keys_and_pairwise() {
        let mut r = rng();
        let mut w = Wallet::new();
        let (me, _) = w.create_did(&mut r);
        let peer = Wallet::new().create_did(&mut r).0;
        let pw = w.pairwise_did(&peer, &mut r);
        let bytes = encode(&w, "pass", FAST, &mut r).unwrap();
        let back = decode(&bytes, "pass").unwrap();
        assert_eq!(back.primary(), Some(&me));
        assert_eq!(back.pairwise().get(&peer), Some(&pw));
        assert_eq!(back.key(&pw).unwrap().public(), w.key(&pw).unwrap().public());
    }

    #[test]
    fn wrong_passphrase_is_rejected() {
        let mut r = rng();
        let mut w = Wallet::new();
        w.create_did(&mut r);
        let bytes = encode(&w, "pass", FAST, &mut r).unwrap();
        assert_eq!(decode(&bytes, "other").unwrap_err().code(), "identity_rejected");
    }

    #[test]
    fn file_holds_no_plaintext_key() {
        let mut r = rng();
        let mut w = Wallet::new();
        let (me, _) = w.create_did(&mut r);
        let secret = hex::encode(w.key(&me).unwrap().secret_bytes());
        let text = String::from_utf8(encode(&w, "pass", FAST, &mut r).unwrap()).unwrap();
        assert!(!text.contains(&secret));
        assert!(text.contains(FORMAT));
    }

    #[cfg(unix)]
    #[test]
    fn saved_file_is_owner_only() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w").join("wallet.json");
        let mut r = rng();
        let mut w = Wallet::new();
        w.create_did(&mut r);
        save(&path, &w, "pass", FAST, &mut r).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o600);
        assert!(load(&path, "pass").is_ok());
    }
}
