use crate::error::{Error, Result};

/// Packed grid cell: row in the high 32 bits, column in the low 32 bits.
pub type RegionId = u64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionGrid {
    pub cell_deg: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for RegionGrid {
    fn default() -> Self {
        RegionGrid {
            cell_deg: 0.01,
            origin_lat: -90.0,
            origin_lon: -180.0,
        }
    }
}

impl RegionGrid {
    pub fn new(cell_deg: f64, origin_lat: f64, origin_lon: f64) -> Result<Self> {
        if !(cell_deg > 0.0) || !cell_deg.is_finite() {
            return Err(Error::invalid(format!("cell size must be positive, got {cell_deg}")));
        }
        Ok(RegionGrid {
            cell_deg,
            origin_lat,
            origin_lon,
        })
    }

    pub fn with_cell(cell_deg: f64) -> Result<Self> {
        let d = Self::default();
        Self::new(cell_deg, d.origin_lat, d.origin_lon)
    }

    /// (row, col) of the cell containing the point.
    pub fn cell_of(&self, lat: f64, lon: f64) -> (i64, i64) {
        (
            ((lat - self.origin_lat) / self.cell_deg).floor() as i64,
            ((lon - self.origin_lon) / self.cell_deg).floor() as i64,
        )
    }

    pub fn region_of(&self, lat: f64, lon: f64) -> RegionId {
        let (r, c) = self.cell_of(lat, lon);
        encode_cell(r, c)
    }

    pub fn cell_center(&self, row: i64, col: i64) -> (f64, f64) {
        (
            self.origin_lat + (row as f64 + 0.5) * self.cell_deg,
            self.origin_lon + (col as f64 + 0.5) * self.cell_deg,
        )
    }
}

pub fn region_of(lat: f64, lon: f64, grid: &RegionGrid) -> RegionId {
    grid.region_of(lat, lon)
}

pub fn encode_cell(row: i64, col: i64) -> RegionId {
    ((row as u32 as u64) << 32) | (col as u32 as u64)
}

pub fn decode_cell(id: RegionId) -> (i64, i64) {
    ((id >> 32) as u32 as i32 as i64, id as u32 as i32 as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_and_offsets() {
        let g = RegionGrid::default();
        assert_eq!(g.cell_of(-90.0, -180.0), (0, 0));
        assert_eq!(g.cell_of(-90.0 + 1.5 * 0.01, -180.0 + 0.5 * 0.01), (1, 0));
        assert!(RegionGrid::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn encode_round_trip_including_negative_cells() {
        for (r, c) in [(0, 0), (1, 0), (17999, 35999), (-3, 7), (5, -1)] {
            assert_eq!(decode_cell(encode_cell(r, c)), (r, c));
        }
    }

    #[test]
    fn agrees_with_division_oracle() {
        let g = RegionGrid::new(0.013, 10.0, -20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let lat: f64 = rng.random_range(-90.0..90.0);
            let lon: f64 = rng.random_range(-180.0..180.0);
            let row = ((lat - 10.0) / 0.013).floor() as i64;
            let col = ((lon + 20.0) / 0.013).floor() as i64;
            assert_eq!(region_of(lat, lon, &g), encode_cell(row, col));
        }
    }

    #[test]
    fn center_maps_back_to_cell() {
        let g = RegionGrid::default();
        let (lat, lon) = g.cell_center(12503, 31570);
        assert_eq!(g.cell_of(lat, lon), (12503, 31570));
    }
}
