use sha2::{Digest, Sha256};

/// Derives independent, replayable seeds from one experiment seed.
///
/// Each stream is identified by a role (`"design"`, `"simulation"`, ...) and an
/// index, so runs can be replayed one component at a time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStreams {
    base: u64,
}

impl SeedStreams {
    pub fn new(base: u64) -> Self {
        Self { base }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn seed(&self, role: &str, index: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(self.base.to_le_bytes());
        h.update(role.as_bytes());
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let s = u64::from_le_bytes(bytes);
        log::debug!("seed stream {role}[{index}] = {s}");
        s
    }
}
