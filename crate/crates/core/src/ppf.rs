// Stub — full implementation follows.
pub struct CdfSeries;
pub struct PpfConfig;
pub struct PpfReport;
