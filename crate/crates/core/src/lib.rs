//! Approximate toggle-MRAM simulator.

pub mod allocator;
pub mod calibration;
pub mod characterization;
pub mod device;
pub mod error;
pub mod pattern;
pub mod power;
pub mod quality;

pub use allocator::{
    build_pool, tracking_overhead, translate, AddressPool, AllocationRequest, AllocationTable,
    Allocator,
};
pub use calibration::{calibrate_profile, CalibrationTargets};
pub use characterization::{
    characterize, characterize_detailed, compute_stats, sort_addresses, sweep_t_w, ErrorMap,
    ErrorStats, Granularity, SortedAddressList,
};
pub use device::{ChipModel, ChipProfile, Environment, Grade, ModelId, WriteOutcome, WriteTimings};
pub use error::{Error, Result};
pub use pattern::Pattern;
pub use power::PowerCurve;
pub use quality::{
    mse, run_image_experiment, snr, ImageBuffer, InitPattern, Packing, QualityReport, Selection,
};
