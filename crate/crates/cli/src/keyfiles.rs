//! Key material on disk. Every file holds the raw serialized bytes of a
//! single key, token, or trapdoor; the encodings are self-describing, so
//! loading verifies the file really contains the expected kind.
//!
//! Keypairs are written as `<name>.<scheme>.sk` / `<name>.<scheme>.pk`
//! where `<scheme>` is `hom` or `peks`.

use std::fs;
use std::path::{Path, PathBuf};

use objectlens_core::crypto::{
    HomKeyPair, HomPublicKey, HomSecretKey, PeksKeyPair, PeksPublicKey, PeksSecretKey,
    ReEncToken, Trapdoor,
};

use crate::CliError;

pub struct KeyPaths {
    pub sk: PathBuf,
    pub pk: PathBuf,
}

fn write_pair(dir: &Path, name: &str, scheme: &str, sk: &[u8], pk: &[u8]) -> Result<KeyPaths, CliError> {
    fs::create_dir_all(dir)?;
    let sk_path = dir.join(format!("{name}.{scheme}.sk"));
    let pk_path = dir.join(format!("{name}.{scheme}.pk"));
    fs::write(&sk_path, sk)?;
    fs::write(&pk_path, pk)?;
    Ok(KeyPaths { sk: sk_path, pk: pk_path })
}

pub fn write_hom_keypair(dir: &Path, name: &str, kp: &HomKeyPair) -> Result<KeyPaths, CliError> {
    write_pair(dir, name, "hom", &kp.sk.to_bytes(), &kp.pk.to_bytes())
}

pub fn write_peks_keypair(dir: &Path, name: &str, kp: &PeksKeyPair) -> Result<KeyPaths, CliError> {
    write_pair(dir, name, "peks", &kp.sk.to_bytes(), &kp.pk.to_bytes())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn load_hom_sk(path: &Path) -> Result<HomSecretKey, CliError> {
    Ok(HomSecretKey::from_bytes(&read(path)?)?)
}

pub fn load_hom_pk(path: &Path) -> Result<HomPublicKey, CliError> {
    Ok(HomPublicKey::from_bytes(&read(path)?)?)
}

pub fn load_peks_sk(path: &Path) -> Result<PeksSecretKey, CliError> {
    Ok(PeksSecretKey::from_bytes(&read(path)?)?)
}

pub fn load_peks_pk(path: &Path) -> Result<PeksPublicKey, CliError> {
    Ok(PeksPublicKey::from_bytes(&read(path)?)?)
}

pub fn load_reenc_token(path: &Path) -> Result<ReEncToken, CliError> {
    Ok(ReEncToken::from_bytes(&read(path)?)?)
}

pub fn load_trapdoor(path: &Path) -> Result<Trapdoor, CliError> {
    Ok(Trapdoor::from_bytes(&read(path)?)?)
}

/// Raw bytes of an artifact file, for forwarding in a request header.
pub fn load_artifact_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    read(path)
}
