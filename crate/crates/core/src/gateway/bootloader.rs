//! Stand-in chainloading bootloader image.
//!
//! Layout: `SDBIPXE1\n`, the embedded script text, a NUL byte, then a
//! deterministic filler so the image spans many TFTP blocks.

pub const MAGIC: &[u8] = b"SDBIPXE1\n";
pub const DEFAULT_PADDING: usize = 64 * 1024;

pub fn embedded_script(cloud_domain: &str) -> String {
    format!("#!ipxe\nchain http://{cloud_domain}/boot\n")
}

pub fn standin(cloud_domain: &str, padding: usize) -> Vec<u8> {
    let script = embedded_script(cloud_domain);
    let mut blob = Vec::with_capacity(MAGIC.len() + script.len() + 1 + padding);
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(script.as_bytes());
    blob.push(0);
    blob.extend((0..padding).map(|i| (i.wrapping_mul(31) ^ (i >> 8)) as u8));
    blob
}

/// Returns the script embedded in a bootloader image, if it has one.
pub fn extract_script(blob: &[u8]) -> Option<String> {
    let rest = blob.strip_prefix(MAGIC)?;
    let end = rest.iter().position(|&b| b == 0)?;
    String::from_utf8(rest[..end].to_vec()).ok()
}
