//! Salted Argon2id password digests.

use argon2::{Algorithm, Argon2, Params, Version};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::model::Credential;

pub const ALGORITHM: &str = "argon2id-v19";
const DIGEST_LEN: usize = 32;
const SALT_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdfParams {
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        Self {
            m_cost_kib: 19 * 1024,
            t_cost: 2,
            p_cost: 1,
        }
    }
}

impl KdfParams {
    /// Cheap parameters for tests and simulations.
    pub fn fast() -> Self {
        Self {
            m_cost_kib: 1024,
            t_cost: 1,
            p_cost: 1,
        }
    }
}

fn derive(password: &str, salt: &[u8], m: u32, t: u32, p: u32) -> Option<Vec<u8>> {
    let params = Params::new(m, t, p, Some(DIGEST_LEN)).ok()?;
    let argon = Argon2::new(Algorithm::Argon2id, Version::V0x13, params);
    let mut out = vec![0u8; DIGEST_LEN];
    argon
        .hash_password_into(password.as_bytes(), salt, &mut out)
        .ok()?;
    Some(out)
}

pub fn hash_password(password: &str, params: KdfParams) -> Credential {
    let mut salt = [0u8; SALT_LEN];
    rand::rng().fill_bytes(&mut salt);
    let digest = derive(password, &salt, params.m_cost_kib, params.t_cost, params.p_cost)
        .expect("KDF parameters validated at startup");
    Credential {
        algorithm: ALGORITHM.to_string(),
        m_cost_kib: params.m_cost_kib,
        t_cost: params.t_cost,
        p_cost: params.p_cost,
        salt: B64.encode(salt),
        digest: B64.encode(digest),
    }
}

/// Checks `password` against `cred` using the parameters recorded in it.
/// Always runs the full KDF; unknown algorithms never verify.
pub fn verify_password(password: &str, cred: &Credential) -> bool {
    let salt = B64.decode(&cred.salt).unwrap_or_default();
    let expected = B64.decode(&cred.digest).unwrap_or_default();
    let Some(actual) = derive(password, &salt, cred.m_cost_kib, cred.t_cost, cred.p_cost) else {
        return false;
    };
    cred.algorithm == ALGORITHM && constant_time_eq(&actual, &expected)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn validate_params(params: KdfParams) -> bool {
    Params::new(params.m_cost_kib, params.t_cost, params.p_cost, Some(DIGEST_LEN)).is_ok()
}
