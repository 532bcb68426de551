//! Centroid-containment assignment of dissemination areas (DAs) to
//! neighborhoods, and aggregation of DA census values to neighborhood level.
//!
//! Geometry is planar: coordinates are treated as Cartesian (lon, lat).

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::{Aggregation, CensusProfile, CensusVariable, DaTable, NeighborhoodId};

pub type Point = [f64; 2];

const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("ring is not closed or has fewer than 4 points")]
    InvalidRing,
    #[error("geometry has zero area")]
    DegenerateGeometry,
    #[error("centroid of `{da}` lies strictly inside several neighborhoods: {neighborhoods:?}")]
    OverlapAmbiguity {
        da: String,
        neighborhoods: Vec<String>,
    },
    #[error("all population weights are zero for `{var_id}` in `{neighborhood}`")]
    ZeroPopulationWeight {
        neighborhood: String,
        var_id: String,
    },
    #[error("weight variable `{0}` is not in the census table")]
    MissingWeight(String),
    #[error("duplicate region id `{0}`")]
    DuplicateRegion(String),
    #[error("geojson: {0}")]
    GeoJson(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

fn check_ring(ring: &[Point]) -> Result<(), GeoError> {
    if ring.len() < 4 || ring.first() != ring.last() {
        return Err(GeoError::InvalidRing);
    }
    Ok(())
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, GeoError> {
        check_ring(&exterior)?;
        for h in &holes {
            check_ring(h)?;
        }
        Ok(Polygon { exterior, holes })
    }

    /// Axis-aligned rectangle, closed counter-clockwise.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon {
            exterior: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]],
            holes: Vec::new(),
        }
    }

    fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Unsigned area and first moments (area·cx, area·cy) with holes removed.
    fn moments(&self) -> (f64, f64, f64) {
        let (mut a, mut mx, mut my) = ring_moments(&self.exterior);
        if a < 0.0 {
            (a, mx, my) = (-a, -mx, -my);
        }
        for h in &self.holes {
            let (mut ha, mut hx, mut hy) = ring_moments(h);
            if ha < 0.0 {
                (ha, hx, hy) = (-ha, -hx, -hy);
            }
            a -= ha;
            mx -= hx;
            my -= hy;
        }
        (a, mx, my)
    }

    pub fn area(&self) -> f64 {
        self.moments().0
    }

    pub fn locate(&self, p: Point) -> Location {
        if self.rings().any(|r| on_ring(r, p)) {
            return Location::Boundary;
        }
        let crossings: usize = self.rings().map(|r| ray_crossings(r, p)).sum();
        if crossings % 2 == 1 {
            Location::Inside
        } else {
            Location::Outside
        }
    }
}

/// Signed shoelace area with the matching first moments.
fn ring_moments(ring: &[Point]) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for w in ring.windows(2) {
        let [x0, y0] = w[0];
        let [x1, y1] = w[1];
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    (a / 2.0, cx / 6.0, cy / 6.0)
}

fn on_ring(ring: &[Point], p: Point) -> bool {
    ring.windows(2).any(|w| {
        let [ax, ay] = w[0];
        let [bx, by] = w[1];
        let cross = (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax);
        let scale = (bx - ax).abs().max((by - ay).abs()).max(1.0);
        cross.abs() <= EDGE_EPS * scale
            && p[0] >= ax.min(bx) - EDGE_EPS
            && p[0] <= ax.max(bx) + EDGE_EPS
            && p[1] >= ay.min(by) - EDGE_EPS
            && p[1] <= ay.max(by) + EDGE_EPS
    })
}

fn ray_crossings(ring: &[Point], p: Point) -> usize {
    ring.windows(2)
        .filter(|w| {
            let [ax, ay] = w[0];
            let [bx, by] = w[1];
            (ay > p[1]) != (by > p[1]) && p[0] < (bx - ax) * (p[1] - ay) / (by - ay) + ax
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

/// Area-weighted centroid; holes subtract.
pub fn centroid(poly: &Polygon) -> Result<Point, GeoError> {
    region_centroid(std::slice::from_ref(poly))
}

/// Centroid of a multi-polygon region.
pub fn region_centroid(parts: &[Polygon]) -> Result<Point, GeoError> {
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    for p in parts {
        let (pa, px, py) = p.moments();
        a += pa;
        mx += px;
        my += py;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in parts.iter().flat_map(|p| p.exterior.iter()) {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if !(a > 1e-12 * span * span) {
        return Err(GeoError::DegenerateGeometry);
    }
    Ok([mx / a, my / a])
}

fn locate_region(parts: &[Polygon], p: Point) -> Location {
    let mut boundary = false;
    for poly in parts {
        match poly.locate(p) {
            Location::Inside => return Location::Inside,
            Location::Boundary => boundary = true,
            Location::Outside => {}
        }
    }
    if boundary {
        Location::Boundary
    } else {
        Location::Outside
    }
}

/// Region id → (multi)polygon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometrySet {
    pub entries: BTreeMap<String, Vec<Polygon>>,
}

impl GeometrySet {
    pub fn insert(&mut self, id: impl Into<String>, parts: Vec<Polygon>) -> Result<(), GeoError> {
        let id = id.into();
        if self.entries.contains_key(&id) {
            return Err(GeoError::DuplicateRegion(id));
        }
        self.entries.insert(id, parts);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses a GeoJSON FeatureCollection of Polygon / MultiPolygon features
    /// whose `properties.id` carries the region id.
    pub fn from_geojson(text: &str) -> Result<Self, GeoError> {
        let v: Value = serde_json::from_str(text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
        let features = v
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| GeoError::GeoJson("expected a FeatureCollection".into()))?;
        let mut set = GeometrySet::default();
        for f in features {
            let id = match f.pointer("/properties/id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => return Err(GeoError::GeoJson("feature without properties.id".into())),
            };
            let geom = f
                .get("geometry")
                .ok_or_else(|| GeoError::GeoJson(format!("feature `{id}` has no geometry")))?;
            let coords = geom.get("coordinates").cloned().unwrap_or(Value::Null);
            let parts = match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![polygon_from_json(&coords)?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or_else(|| GeoError::GeoJson("bad MultiPolygon".into()))?
                    .iter()
                    .map(polygon_from_json)
                    .collect::<Result<_, _>>()?,
                other => {
                    return Err(GeoError::GeoJson(format!(
                        "unsupported geometry type {other:?} for `{id}`"
                    )))
                }
            };
            set.insert(id, parts)?;
        }
        Ok(set)
    }

    pub fn to_geojson(&self) -> Value {
        let features: Vec<Value> = self
            .entries
            .iter()
            .map(|(id, parts)| {
                let polys: Vec<Value> = parts
                    .iter()
                    .map(|p| {
                        let rings: Vec<&Vec<Point>> = p.rings().collect();
                        json!(rings)
                    })
                    .collect();
                json!({
                    "type": "Feature",
                    "properties": { "id": id },
                    "geometry": { "type": "MultiPolygon", "coordinates": polys },
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}

fn polygon_from_json(v: &Value) -> Result<Polygon, GeoError> {
    let rings: Vec<Vec<Point>> =
        serde_json::from_value(v.clone()).map_err(|e| GeoError::GeoJson(e.to_string()))?;
    let mut it = rings.into_iter();
    let exterior = it.next().ok_or(GeoError::InvalidRing)?;
    Polygon::new(exterior, it.collect())
}

/// Assigns each DA to the neighborhood strictly containing its centroid.
///
/// A centroid exactly on a boundary goes to the lexicographically first
/// neighborhood it touches; a centroid strictly inside several neighborhoods
/// is an error.
pub fn assign_da(
    da_geo: &GeometrySet,
    nbhd_geo: &GeometrySet,
) -> Result<BTreeMap<String, Option<NeighborhoodId>>, GeoError> {
    let das: Vec<(&String, &Vec<Polygon>)> = da_geo.entries.iter().collect();
    das.par_iter()
        .map(|(da, parts)| {
            let c = region_centroid(parts)?;
            let mut inside = Vec::new();
            let mut touching = Vec::new();
            // BTreeMap iteration is lexicographic by id.
            for (id, nparts) in &nbhd_geo.entries {
                match locate_region(nparts, c) {
                    Location::Inside => inside.push(id.clone()),
                    Location::Boundary => touching.push(id.clone()),
                    Location::Outside => {}
                }
            }
            let owner = match inside.len() {
                0 => touching.into_iter().next(),
                1 => inside.pop(),
                _ => {
                    return Err(GeoError::OverlapAmbiguity {
                        da: (*da).clone(),
                        neighborhoods: inside,
                    })
                }
            };
            Ok(((*da).clone(), owner.map(NeighborhoodId)))
        })
        .collect()
}

/// Neighborhood profiles plus the aggregate of DAs that fell outside every
/// neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub profiles: Vec<CensusProfile>,
    pub unassigned: Option<CensusProfile>,
}

pub const DEFAULT_WEIGHT_VAR: &str = "population";

/// Rolls DA rows up to neighborhoods by each variable's kind. `weight_var`
/// names the population column used for weighted means.
pub fn aggregate(
    assignments: &BTreeMap<String, Option<NeighborhoodId>>,
    table: &DaTable,
    catalog: &[CensusVariable],
    weight_var: &str,
) -> Result<Aggregated, GeoError> {
    let weight_col = table
        .column(weight_var)
        .ok_or_else(|| GeoError::MissingWeight(weight_var.to_string()))?;

    let mut groups: BTreeMap<Option<&NeighborhoodId>, Vec<usize>> = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let owner = assignments.get(&row.da_id).and_then(Option::as_ref);
        groups.entry(owner).or_default().push(i);
    }

    let mut profiles = Vec::new();
    let mut unassigned = None;
    for (owner, rows) in groups {
        let name = owner.map(|n| n.0.clone()).unwrap_or_else(|| "unassigned".into());
        let profile = aggregate_rows(&name, &rows, table, catalog, weight_col)?;
        match owner {
            Some(_) => profiles.push(profile),
            None => unassigned = Some(profile),
        }
    }
    Ok(Aggregated {
        profiles,
        unassigned,
    })
}

fn aggregate_rows(
    name: &str,
    rows: &[usize],
    table: &DaTable,
    catalog: &[CensusVariable],
    weight_col: usize,
) -> Result<CensusProfile, GeoError> {
    let column_sum = |col: usize| -> Option<f64> {
        let vals: Vec<f64> = rows.iter().filter_map(|&r| table.rows[r].values[col]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum())
    };
    let weighted_mean = |col: usize, var_id: &str| -> Result<Option<f64>, GeoError> {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut any = false;
        for &r in rows {
            let vals = &table.rows[r].values;
            if let (Some(v), Some(w)) = (vals[col], vals[weight_col]) {
                any = true;
                num += v * w;
                den += w;
            }
        }
        if !any {
            return Ok(None);
        }
        if den == 0.0 {
            return Err(GeoError::ZeroPopulationWeight {
                neighborhood: name.to_string(),
                var_id: var_id.to_string(),
            });
        }
        Ok(Some(num / den))
    };

    let mut profile = CensusProfile {
        neighborhood: NeighborhoodId::new(name),
        ..Default::default()
    };
    for var in catalog {
        let Some(col) = table.column(&var.var_id) else {
            continue;
        };
        let value = match var.kind.aggregation() {
            Aggregation::Sum => column_sum(col),
            Aggregation::WeightedMean => weighted_mean(col, &var.var_id)?,
            Aggregation::WeightedMeanOfMedians => {
                profile.approximate.insert(var.var_id.clone());
                weighted_mean(col, &var.var_id)?
            }
            Aggregation::RatioOfSums => {
                let linked = var
                    .numerator
                    .as_deref()
                    .and_then(|n| table.column(n))
                    .zip(var.denominator.as_deref().and_then(|d| table.column(d)));
                match linked {
                    Some((n, d)) => match (column_sum(n), column_sum(d)) {
                        (Some(n), Some(d)) if d != 0.0 => Some(n / d),
                        _ => None,
                    },
                    None => weighted_mean(col, &var.var_id)?,
                }
            }
        };
        profile.values.insert(var.var_id.clone(), value);
    }
    Ok(profile)
}

/// Full DA→neighborhood chain: assignment then aggregation.
pub fn profiles_from_geometry(
    da_geo: &GeometrySet,
    nbhd_geo: &GeometrySet,
    table: &DaTable,
    catalog: &[CensusVariable],
) -> Result<Aggregated, GeoError> {
    let assignments = assign_da(da_geo, nbhd_geo)?;
    aggregate(&assignments, table, catalog, DEFAULT_WEIGHT_VAR)
}

/// Ids of neighborhoods that received at least one DA.
pub fn covered(assignments: &BTreeMap<String, Option<NeighborhoodId>>) -> BTreeSet<NeighborhoodId> {
    assignments.values().flatten().cloned().collect()
}
