// Stub — full implementation follows.
pub struct StorageSpec;
