//! Per-direction roughness correction to 10 m over open terrain.
//!
//! Directions are binned into twelve 30° sectors labeled by their upper
//! edge: a direction `d` falls in sector `ceil(d / 30) * 30`, and `d = 0`
//! belongs to the 360° sector. A missing direction leaves the speed as is.

use serde::{Deserialize, Serialize};

use crate::ingest::MetRecord;
use crate::{Error, Result};

pub const SECTOR_WIDTH: f64 = 30.0;
pub const SECTORS: usize = 12;

/// Accepted factor range (exclusive).
pub const FACTOR_RANGE: (f64, f64) = (0.3, 3.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessTable {
    /// `factors[i]` applies to the sector with upper edge `30 * (i + 1)`.
    factors: [f64; SECTORS],
}

impl RoughnessTable {
    /// Builds a table from `(upper_edge_degrees, factor)` pairs. All twelve
    /// edges 30, 60, ..., 360 must appear exactly once.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut factors = [None; SECTORS];
        for (edge, factor) in entries {
            if edge == 0 || edge % 30 != 0 || edge > 360 {
                return Err(Error::Config(format!("invalid roughness sector {edge}")));
            }
            if !(factor > FACTOR_RANGE.0 && factor < FACTOR_RANGE.1) {
                return Err(Error::Config(format!(
                    "roughness factor {factor} for sector {edge} outside ({}, {})",
                    FACTOR_RANGE.0, FACTOR_RANGE.1
                )));
            }
            let slot = &mut factors[(edge / 30 - 1) as usize];
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate roughness sector {edge}")));
            }
            *slot = Some(factor);
        }
        let mut out = [0.0; SECTORS];
        for (i, f) in factors.iter().enumerate() {
            out[i] = f.ok_or_else(|| {
                Error::Config(format!("roughness table missing sector {}", (i + 1) * 30))
            })?;
        }
        Ok(RoughnessTable { factors: out })
    }

    fn from_array(factors: [f64; SECTORS]) -> Self {
        RoughnessTable { factors }
    }

    pub fn identity() -> Self {
        Self::from_array([1.0; SECTORS])
    }

    /// Dachen Island. The 120° entry (1.903) is carried over as published
    /// even though its neighbors are all close to 1.0.
    pub fn dachen_island() -> Self {
        Self::from_array([
            1.029, 1.093, 1.052, 1.903, 1.035, 1.024, 1.012, 1.018, 0.943, 1.035, 1.087, 1.058,
        ])
    }

    pub fn dinghai() -> Self {
        Self::from_array([
            0.895, 0.950, 0.915, 0.905, 0.900, 0.890, 0.880, 0.885, 0.820, 0.900, 0.945, 0.920,
        ])
    }

    /// Identical to [`RoughnessTable::dinghai`] in the published table.
    pub fn shengzhou() -> Self {
        Self::dinghai()
    }

    /// Upper edge (degrees) of the sector containing `direction`.
    pub fn sector_of(direction: f64) -> u32 {
        if direction <= 0.0 {
            return 360;
        }
        let edge = (direction / SECTOR_WIDTH).ceil() * SECTOR_WIDTH;
        edge.min(360.0) as u32
    }

    pub fn factor_for_sector(&self, edge: u32) -> f64 {
        self.factors[(edge / 30 - 1) as usize]
    }

    pub fn factor(&self, direction: Option<f64>) -> f64 {
        direction.map_or(1.0, |d| self.factor_for_sector(Self::sector_of(d)))
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.factors
            .iter()
            .enumerate()
            .map(|(i, &f)| ((i as u32 + 1) * 30, f))
    }
}

pub fn correct_wind_speed(speed: f64, direction: Option<f64>, table: &RoughnessTable) -> f64 {
    speed * table.factor(direction)
}

/// Applies [`correct_wind_speed`] to every record that has a speed.
pub fn correct_records(records: &[MetRecord], table: &RoughnessTable) -> Vec<MetRecord> {
    records
        .iter()
        .map(|r| MetRecord {
            wind_speed: r.wind_speed.map(|s| correct_wind_speed(s, r.wind_dir, table)),
            ..*r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_sector_factor() {
        let t = RoughnessTable::dachen_island();
        assert!((correct_wind_speed(10.0, Some(60.0), &t) - 10.93).abs() < 1e-12);
        assert!((correct_wind_speed(10.0, Some(45.0), &t) - 10.93).abs() < 1e-12);
    }

    #[test]
    fn sector_binning() {
        assert_eq!(RoughnessTable::sector_of(0.0), 360);
        assert_eq!(RoughnessTable::sector_of(0.5), 30);
        assert_eq!(RoughnessTable::sector_of(30.0), 30);
        assert_eq!(RoughnessTable::sector_of(30.1), 60);
        assert_eq!(RoughnessTable::sector_of(359.0), 360);
        assert_eq!(RoughnessTable::sector_of(360.0), 360);
    }

    #[test]
    fn identity_table_and_missing_direction() {
        let id = RoughnessTable::identity();
        for d in [0.0, 17.0, 200.0, 360.0] {
            assert_eq!(correct_wind_speed(10.0, Some(d), &id), 10.0);
        }
        assert_eq!(correct_wind_speed(10.0, None, &RoughnessTable::dachen_island()), 10.0);
    }

    #[test]
    fn missing_sector_is_config_error() {
        let entries: Vec<(u32, f64)> = (1..12).map(|i| (i * 30, 1.0)).collect();
        assert!(matches!(
            RoughnessTable::from_entries(entries),
            Err(Error::Config(msg)) if msg.contains("360")
        ));
    }

    #[test]
    fn factor_range_enforced() {
        let mut entries: Vec<(u32, f64)> = (1..=12).map(|i| (i * 30, 1.0)).collect();
        entries[3].1 = 3.5;
        assert!(RoughnessTable::from_entries(entries).is_err());
    }

    #[test]
    fn entries_round_trip() {
        let t = RoughnessTable::dinghai();
        assert_eq!(RoughnessTable::from_entries(t.entries()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn linear_in_speed(s in 0.0f64..80.0, a in 0.0f64..5.0, d in 0.0f64..=360.0) {
            let t = RoughnessTable::dachen_island();
            let lhs = correct_wind_speed(a * s, Some(d), &t);
            let rhs = a * correct_wind_speed(s, Some(d), &t);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn order_preserving(s1 in 0.0f64..80.0, s2 in 0.0f64..80.0, d in 0.0f64..=360.0) {
            let t = RoughnessTable::shengzhou();
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(correct_wind_speed(lo, Some(d), &t) <= correct_wind_speed(hi, Some(d), &t));
        }
    }
}
