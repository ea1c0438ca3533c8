//! Named rectangular analysis regions (lat/lon bounding boxes).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegionSpec {
    pub name: String,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl RegionSpec {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }

    fn validate(&self) -> Result<()> {
        if !(self.lat_min < self.lat_max) {
            return Err(Error::InvalidData(format!(
                "region '{}': lat_min {} must be < lat_max {}",
                self.name, self.lat_min, self.lat_max
            )));
        }
        if !(self.lon_min < self.lon_max) {
            return Err(Error::InvalidData(format!(
                "region '{}': lon_min {} must be < lon_max {}",
                self.name, self.lon_min, self.lon_max
            )));
        }
        Ok(())
    }
}

pub fn validate_regions(regions: &[RegionSpec]) -> Result<()> {
    for r in regions {
        r.validate()?;
    }
    for i in 0..regions.len() {
        for j in (i + 1)..regions.len() {
            if regions[i].name == regions[j].name {
                return Err(Error::InvalidData(format!(
                    "duplicate region name '{}'",
                    regions[i].name
                )));
            }
        }
    }
    Ok(())
}

pub fn load_regions(path: &Path) -> Result<Vec<RegionSpec>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let regions: Vec<RegionSpec> = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    validate_regions(&regions)?;
    Ok(regions)
}

/// Overlaps resolve by file order: the first region containing the point wins.
pub fn first_match<'a>(regions: &'a [RegionSpec], lat: f64, lon: f64) -> Option<&'a RegionSpec> {
    regions.iter().find(|r| r.contains(lat, lon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverted_box_rejected() {
        let r = vec![RegionSpec {
            name: "bad".into(),
            lat_min: 5.0,
            lat_max: 5.0,
            lon_min: 0.0,
            lon_max: 1.0,
        }];
        assert!(validate_regions(&r).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mk = |name: &str| RegionSpec {
            name: name.into(),
            lat_min: 0.0,
            lat_max: 1.0,
            lon_min: 0.0,
            lon_max: 1.0,
        };
        assert!(validate_regions(&[mk("a"), mk("a")]).is_err());
        assert!(validate_regions(&[mk("a"), mk("b")]).is_ok());
    }

    #[test]
    fn first_match_respects_file_order() {
        let mk = |name: &str| RegionSpec {
            name: name.into(),
            lat_min: 0.0,
            lat_max: 1.0,
            lon_min: 0.0,
            lon_max: 1.0,
        };
        let regions = vec![mk("first"), mk("second")];
        assert_eq!(first_match(&regions, 0.5, 0.5).unwrap().name, "first");
    }
}
