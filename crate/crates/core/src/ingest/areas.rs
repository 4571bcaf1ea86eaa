use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Area, IngestError, SweepSample};

/// A closed ring of `[latitude, longitude]` vertices tagged with an area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaPolygon {
    pub area: Area,
    pub ring: Vec<[f64; 2]>,
}

/// Polygon file contents: `{"areas": [{"area": "park", "ring": [[lat, lon], ...]}, ...]}`.
/// File order is the tie-break for points on shared edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AreaPolygons {
    pub areas: Vec<AreaPolygon>,
}

impl AreaPolygons {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, IngestError> {
        let parse_err = |message: String| IngestError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut polys: AreaPolygons = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        for (i, p) in polys.areas.iter_mut().enumerate() {
            if p.ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(parse_err(format!("polygon {i}: non-finite vertex")));
            }
            if p.ring.len() > 1 && p.ring.first() == p.ring.last() {
                p.ring.pop();
            }
            if p.ring.len() < 3 {
                return Err(parse_err(format!("polygon {i}: fewer than 3 distinct vertices")));
            }
        }
        Ok(polys)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    /// First polygon in file order containing the point, boundary included.
    pub fn locate(&self, lat: f64, lon: f64) -> Area {
        self.areas
            .iter()
            .find(|p| point_in_ring(&p.ring, lat, lon))
            .map_or(Area::Unlabeled, |p| p.area)
    }
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let scale = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).max(1e-300);
    if cross.abs() > 1e-12 * scale {
        return false;
    }
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Even-odd containment test; points on an edge count as inside.
pub fn point_in_ring(ring: &[[f64; 2]], lat: f64, lon: f64) -> bool {
    let p = [lat, lon];
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(a, b, p) {
            return true;
        }
        // crossing of the ray towards +lon
        if (a[0] > lat) != (b[0] > lat) {
            let lon_cross = a[1] + (lat - a[0]) * (b[1] - a[1]) / (b[0] - a[0]);
            if lon < lon_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Tags each sample with the area containing the receiver's position.
/// Samples without GPS context stay unlabeled.
pub fn label_areas(mut samples: Vec<SweepSample>, polygons: &AreaPolygons) -> Vec<SweepSample> {
    for s in &mut samples {
        s.area = match s.geo {
            Some(g) => polygons.locate(g.lat_rx, g.lon_rx),
            None => Area::Unlabeled,
        };
    }
    samples
}
