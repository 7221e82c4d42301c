//! Grid regions, main activity regions, and familiarity labels.

mod grid;
mod meanshift;
mod profile;

pub use grid::{decode_cell, encode_cell, region_of, RegionGrid, RegionId};
pub use meanshift::{mean_shift, MeanShiftParams, MeanShiftResult};
pub use profile::{
    build_profile, build_profiles, familiar_set, format_profile, label_movements,
    main_activity_region, top_regions, write_profiles, MainRegion, ProfileWindow, RegionProfile,
    WindowStart,
};
