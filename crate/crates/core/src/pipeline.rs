// Stub — full implementation follows.
