// Stub — full implementation follows.
pub struct Archive;
pub struct Candidate;
pub struct Evaluation;
pub struct MoaloConfig;
pub struct Sense;
