// Stub — full implementation follows.
pub struct DecisionMatrix;
pub struct GrpRanking;
