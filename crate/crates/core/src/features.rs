//! Determinant extraction: every lot becomes a [`FeatureVector`] of four
//! infrastructure distances, the neighbourhood property-value trend, vacant
//! and crime densities, and its zoning category.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geo::{haversine_distance, GeoPoint, PointIndex, QUARTER_MILE_M};
use crate::ingest::{
    CityLayers, ConversionType, InfraKind, LotStatus, PropertyAssessment, VacantLotRaw, ZoneCategory,
    ZoningLayer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "libDist")]
    LibDist,
    #[serde(rename = "parkDist")]
    ParkDist,
    #[serde(rename = "schoolDist")]
    SchoolDist,
    #[serde(rename = "transitDist")]
    TransitDist,
    #[serde(rename = "priceDiff")]
    PriceDiff,
    #[serde(rename = "vacantDensity")]
    VacantDensity,
    #[serde(rename = "crimeDensity")]
    CrimeDensity,
    #[serde(rename = "zone")]
    Zone,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::LibDist,
        Feature::ParkDist,
        Feature::SchoolDist,
        Feature::TransitDist,
        Feature::PriceDiff,
        Feature::VacantDensity,
        Feature::CrimeDensity,
        Feature::Zone,
    ];

    pub const NUMERIC: [Feature; 7] = [
        Feature::LibDist,
        Feature::ParkDist,
        Feature::SchoolDist,
        Feature::TransitDist,
        Feature::PriceDiff,
        Feature::VacantDensity,
        Feature::CrimeDensity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::LibDist => "libDist",
            Feature::ParkDist => "parkDist",
            Feature::SchoolDist => "schoolDist",
            Feature::TransitDist => "transitDist",
            Feature::PriceDiff => "priceDiff",
            Feature::VacantDensity => "vacantDensity",
            Feature::CrimeDensity => "crimeDensity",
            Feature::Zone => "zone",
        }
    }

    pub fn is_numeric(&self) -> bool {
        *self != Feature::Zone
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature `{s}`")))
    }
}

/// A non-empty subset of the determinants, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSet(Vec<Feature>);

impl FeatureSet {
    pub fn new(features: impl IntoIterator<Item = Feature>) -> Result<Self> {
        let mut v: Vec<Feature> = features.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(Error::InvalidParameter("empty feature set".into()));
        }
        Ok(FeatureSet(v))
    }

    pub fn all() -> Self {
        FeatureSet(Feature::ALL.to_vec())
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    pub fn numeric(&self) -> impl Iterator<Item = Feature> + '_ {
        self.0.iter().copied().filter(Feature::is_numeric)
    }

    pub fn has_zone(&self) -> bool {
        self.0.contains(&Feature::Zone)
    }

    /// Parses `libDist+parkDist+schoolDist` style names.
    pub fn parse(s: &str) -> Result<Self> {
        FeatureSet::new(s.split('+').map(str::parse).collect::<Result<Vec<Feature>>>()?)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(Feature::name).collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub lib_dist: f64,
    pub park_dist: f64,
    pub school_dist: f64,
    pub transit_dist: f64,
    pub price_diff: f64,
    pub vacant_density: u32,
    pub crime_density: u32,
    pub zone: ZoneCategory,
}

impl FeatureVector {
    /// Value of a numeric determinant. Panics on [`Feature::Zone`].
    pub fn numeric(&self, f: Feature) -> f64 {
        match f {
            Feature::LibDist => self.lib_dist,
            Feature::ParkDist => self.park_dist,
            Feature::SchoolDist => self.school_dist,
            Feature::TransitDist => self.transit_dist,
            Feature::PriceDiff => self.price_diff,
            Feature::VacantDensity => f64::from(self.vacant_density),
            Feature::CrimeDensity => f64::from(self.crime_density),
            Feature::Zone => panic!("zone is categorical"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledLot {
    pub id: String,
    pub location: GeoPoint,
    pub features: FeatureVector,
    pub status: LotStatus,
    pub conversion: Option<ConversionType>,
    /// No assessed property within the radius for at least one year;
    /// `priceDiff` was imputed as 0.
    pub price_flag: bool,
    /// The lot fell outside every zoning district; the zone comes from the
    /// nearest district vertex.
    pub zone_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelingDataset {
    pub city: String,
    pub rows: Vec<LabeledLot>,
    pub radius_m: f64,
}

/// Prediction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Adopt vs Available.
    Binary,
    /// Conversion type among adopted lots only.
    ConvertedOnly,
    /// Conversion type, with Available as a fourth class.
    ConversionAll,
}

impl Task {
    /// Target label for a row; `None` when the row is outside the task.
    pub fn label(&self, lot: &LabeledLot) -> Result<Option<String>> {
        match (self, lot.status) {
            (Task::Binary, s) => Ok(Some(s.to_string())),
            (Task::ConvertedOnly, LotStatus::Available) => Ok(None),
            (Task::ConversionAll, LotStatus::Available) => Ok(Some(LotStatus::Available.to_string())),
            (_, LotStatus::Adopt) => lot
                .conversion
                .map(|c| Some(c.to_string()))
                .ok_or_else(|| Error::MissingConversionLabels(lot.id.clone())),
        }
    }

    /// Rows and labels participating in the task.
    pub fn select<'a>(&self, rows: &'a [LabeledLot]) -> Result<(Vec<&'a LabeledLot>, Vec<String>)> {
        let mut kept = Vec::new();
        let mut labels = Vec::new();
        for r in rows {
            if let Some(l) = self.label(r)? {
                kept.push(r);
                labels.push(l);
            }
        }
        Ok((kept, labels))
    }

    /// The class reported as "positive" in summaries, if any.
    pub fn positive_class(&self) -> Option<&'static str> {
        match self {
            Task::Binary => Some("adopt"),
            _ => None,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Task::Binary),
            "conversion" | "converted_only" | "converted-only" => Ok(Task::ConvertedOnly),
            "conversion_all" | "all" => Ok(Task::ConversionAll),
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Binary => "binary",
            Task::ConvertedOnly => "converted_only",
            Task::ConversionAll => "conversion_all",
        })
    }
}

// ---------------------------------------------------------------------------
// Indexes and per-lot operations

/// Assessed values of one year with a spatial index over their locations.
pub struct YearValues {
    pub year: i32,
    index: PointIndex,
    values: Vec<f64>,
}

impl YearValues {
    fn new(year: i32, records: &[PropertyAssessment]) -> Self {
        let selected: Vec<&PropertyAssessment> = records.iter().filter(|r| r.year == year).collect();
        let points: Vec<GeoPoint> = selected.iter().map(|r| r.location).collect();
        YearValues {
            year,
            index: PointIndex::new(&points),
            values: selected.iter().map(|r| r.value).collect(),
        }
    }

    /// Mean value within `radius_m`, summed in id order.
    pub fn mean_within(&self, q: GeoPoint, radius_m: f64) -> Option<f64> {
        let ids = self.index.within_radius(q, radius_m);
        if ids.is_empty() {
            return None;
        }
        let sum: f64 = ids.iter().map(|&i| self.values[i]).sum();
        Some(sum / ids.len() as f64)
    }
}

/// Read-only spatial indexes over one city's layers.
pub struct CityIndexes {
    pub libraries: PointIndex,
    pub parks: PointIndex,
    pub schools: PointIndex,
    pub transit: PointIndex,
    pub lots: PointIndex,
    pub crime: PointIndex,
    pub earlier: YearValues,
    pub later: YearValues,
}

impl CityIndexes {
    pub fn new(city: &CityLayers) -> Self {
        let locs = |pts: &[crate::ingest::InfraPoint]| -> PointIndex {
            PointIndex::new(&pts.iter().map(|p| p.location).collect::<Vec<_>>())
        };
        let (y1, y2) = city.assessment_years();
        CityIndexes {
            libraries: locs(city.infrastructure(InfraKind::Library)),
            parks: locs(city.infrastructure(InfraKind::Park)),
            schools: locs(city.infrastructure(InfraKind::School)),
            transit: locs(city.infrastructure(InfraKind::TransitStop)),
            lots: PointIndex::new(&city.lots.iter().map(|l| l.location).collect::<Vec<_>>()),
            crime: PointIndex::new(&city.crime.iter().map(|c| c.location).collect::<Vec<_>>()),
            earlier: YearValues::new(y1, &city.assessments),
            later: YearValues::new(y2, &city.assessments),
        }
    }
}

/// `(libDist, parkDist, schoolDist, transitDist)` in metres.
pub fn infrastructure_distances(q: GeoPoint, idx: &CityIndexes) -> Result<(f64, f64, f64, f64)> {
    Ok((
        idx.libraries.nearest_distance(q)?,
        idx.parks.nearest_distance(q)?,
        idx.schools.nearest_distance(q)?,
        idx.transit.nearest_distance(q)?,
    ))
}

/// Later-year mean minus earlier-year mean of assessed values within the
/// radius. Returns `(0.0, true)` when either year has no property in range.
pub fn price_diff(q: GeoPoint, earlier: &YearValues, later: &YearValues, radius_m: f64) -> (f64, bool) {
    match (earlier.mean_within(q, radius_m), later.mean_within(q, radius_m)) {
        (Some(a), Some(b)) => (b - a, false),
        _ => (0.0, true),
    }
}

/// Other vacant lots within the radius; `self_id` is the lot's own position in
/// the index.
pub fn vacant_density(q: GeoPoint, self_id: usize, lots: &PointIndex, radius_m: f64) -> u32 {
    lots.count_within_radius(q, radius_m, Some(self_id)) as u32
}

pub fn crime_density(q: GeoPoint, crime: &PointIndex, radius_m: f64) -> u32 {
    crime.count_within_radius(q, radius_m, None) as u32
}

/// Category of the first district in file order that contains the lot.
/// Falls back to the district with the nearest exterior vertex (flag set).
pub fn assign_zone(q: GeoPoint, zoning: &ZoningLayer) -> (ZoneCategory, bool) {
    if let Some(d) = zoning.districts.iter().find(|d| d.contains(q)) {
        return (d.category, false);
    }
    let mut best = (f64::INFINITY, zoning.districts[0].category);
    for d in &zoning.districts {
        for v in d.polygons.iter().flat_map(|p| p.exterior()) {
            let dist = haversine_distance(q, *v);
            if dist < best.0 {
                best = (dist, d.category);
            }
        }
    }
    (best.1, true)
}

fn label_lot(
    pos: usize,
    lot: &VacantLotRaw,
    idx: &CityIndexes,
    zoning: &ZoningLayer,
    radius_m: f64,
) -> Result<LabeledLot> {
    let q = lot.location;
    let (lib_dist, park_dist, school_dist, transit_dist) = infrastructure_distances(q, idx)?;
    let (price, price_flag) = price_diff(q, &idx.earlier, &idx.later, radius_m);
    let (zone, zone_flag) = assign_zone(q, zoning);
    Ok(LabeledLot {
        id: lot.id.clone(),
        location: q,
        features: FeatureVector {
            lib_dist,
            park_dist,
            school_dist,
            transit_dist,
            price_diff: price,
            vacant_density: vacant_density(q, pos, &idx.lots, radius_m),
            crime_density: crime_density(q, &idx.crime, radius_m),
            zone,
        },
        status: lot.status,
        conversion: lot.conversion,
        price_flag,
        zone_flag,
    })
}

/// One labelled row per lot, ordered by lot id.
pub fn build_dataset(city: &CityLayers, radius_m: f64) -> Result<ModelingDataset> {
    if !(radius_m > 0.0 && radius_m.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius_m}")));
    }
    let idx = CityIndexes::new(city);
    let mut rows = city
        .lots
        .par_iter()
        .enumerate()
        .map(|(pos, lot)| label_lot(pos, lot, &idx, &city.zoning, radius_m))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(ModelingDataset {
        city: city.name.clone(),
        rows,
        radius_m,
    })
}

pub fn build_dataset_default(city: &CityLayers) -> Result<ModelingDataset> {
    build_dataset(city, QUARTER_MILE_M)
}

impl ModelingDataset {
    pub fn has_conversion(&self) -> bool {
        self.rows.iter().any(|r| r.conversion.is_some())
    }

    pub fn price_flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.price_flag).count()
    }

    pub fn zone_flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.zone_flag).count()
    }
}

// ---------------------------------------------------------------------------
// Features CSV

const BASE_COLUMNS: [&str; 12] = [
    "id",
    "lat",
    "lon",
    "libDist",
    "parkDist",
    "schoolDist",
    "transitDist",
    "priceDiff",
    "vacantDensity",
    "crimeDensity",
    "zone",
    "status",
];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes `id,lat,lon,<determinants>,zone,status[,conversion],price_flag,zone_flag`.
/// The conversion column is present when any row carries a conversion type.
pub fn write_features_csv(path: impl AsRef<Path>, ds: &ModelingDataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let with_conversion = ds.has_conversion();
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if with_conversion {
        header.push("conversion");
    }
    header.extend(["price_flag", "zone_flag"]);
    let io = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    };
    w.write_record(&header).map_err(io)?;
    for r in &ds.rows {
        let f = &r.features;
        let mut rec = vec![
            r.id.clone(),
            r.location.lat().to_string(),
            r.location.lon().to_string(),
            f.lib_dist.to_string(),
            f.park_dist.to_string(),
            f.school_dist.to_string(),
            f.transit_dist.to_string(),
            f.price_diff.to_string(),
            f.vacant_density.to_string(),
            f.crime_density.to_string(),
            f.zone.to_string(),
            r.status.to_string(),
        ];
        if with_conversion {
            rec.push(r.conversion.map(|c| c.to_string()).unwrap_or_default());
        }
        rec.push(flag(r.price_flag).into());
        rec.push(flag(r.zone_flag).into());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: impl AsRef<Path>, city: &str, radius_m: f64) -> Result<ModelingDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let with_conversion = headers.len() == BASE_COLUMNS.len() + 3;
    let mut expected: Vec<&str> = BASE_COLUMNS.to_vec();
    if with_conversion {
        expected.push("conversion");
    }
    expected.extend(["price_flag", "zone_flag"]);
    if !headers.iter().map(String::as_str).eq(expected.iter().copied()) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: format!("features header `{}` does not match `{}`", headers.join(","), expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            get(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{}: not a finite number `{}`", expected[i], get(i))))
        };
        let count = |i: usize| -> Result<u32> {
            get(i)
                .parse::<u32>()
                .map_err(|e| err(format!("{}: {e}", expected[i])))
        };
        let boolean = |i: usize| -> Result<bool> {
            match get(i) {
                "0" | "false" => Ok(false),
                "1" | "true" => Ok(true),
                other => Err(err(format!("{}: not a flag `{other}`", expected[i]))),
            }
        };
        let (lat, lon) = (num(1)?, num(2)?);
        let location = GeoPoint::new(lat, lon).map_err(|_| Error::Range {
            path: path.to_path_buf(),
            line,
            lat,
            lon,
        })?;
        let zone: ZoneCategory = get(10).parse().map_err(err)?;
        let status: LotStatus = get(11).parse().map_err(err)?;
        let (conversion, flags_at) = if with_conversion {
            let c = match get(12) {
                "" => None,
                s => Some(s.parse::<ConversionType>().map_err(err)?),
            };
            (c, 13)
        } else {
            (None, 12)
        };
        rows.push(LabeledLot {
            id: get(0).to_string(),
            location,
            features: FeatureVector {
                lib_dist: num(3)?,
                park_dist: num(4)?,
                school_dist: num(5)?,
                transit_dist: num(6)?,
                price_diff: num(7)?,
                vacant_density: count(8)?,
                crime_density: count(9)?,
                zone,
            },
            status,
            conversion,
            price_flag: boolean(flags_at)?,
            zone_flag: boolean(flags_at + 1)?,
        });
    }
    Ok(ModelingDataset {
        city: city.to_string(),
        rows,
        radius_m,
    })
}

fn lot_properties(r: &LabeledLot) -> serde_json::Map<String, Value> {
    let f = &r.features;
    let mut props = serde_json::Map::new();
    props.insert("id".into(), json!(r.id));
    props.insert("libDist".into(), json!(f.lib_dist));
    props.insert("parkDist".into(), json!(f.park_dist));
    props.insert("schoolDist".into(), json!(f.school_dist));
    props.insert("transitDist".into(), json!(f.transit_dist));
    props.insert("priceDiff".into(), json!(f.price_diff));
    props.insert("vacantDensity".into(), json!(f.vacant_density));
    props.insert("crimeDensity".into(), json!(f.crime_density));
    props.insert("zone".into(), json!(f.zone.as_str()));
    props.insert("status".into(), json!(r.status.as_str()));
    if let Some(c) = r.conversion {
        props.insert("conversion".into(), json!(c.as_str()));
    }
    props.insert("price_flag".into(), json!(r.price_flag));
    props.insert("zone_flag".into(), json!(r.zone_flag));
    props
}

pub fn point_feature(location: GeoPoint, properties: serde_json::Map<String, Value>) -> Value {
    json!({
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [location.lon(), location.lat()]},
        "properties": Value::Object(properties),
    })
}

/// One Point feature per lot carrying the same properties as the CSV.
pub fn dataset_geojson(ds: &ModelingDataset) -> Value {
    let features: Vec<Value> = ds
        .rows
        .iter()
        .map(|r| point_feature(r.location, lot_properties(r)))
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPolygon, EARTH_RADIUS_M};
    use crate::ingest::{InfraPoint, RawLayers, ZoningDistrict};

    const LAT0: f64 = 39.3;
    const LON0: f64 = -76.6;

    fn deg_per_m() -> f64 {
        180.0 / (std::f64::consts::PI * EARTH_RADIUS_M)
    }

    /// Point `m` metres north of the origin.
    fn north(m: f64) -> GeoPoint {
        GeoPoint::new(LAT0 + m * deg_per_m(), LON0).unwrap()
    }

    fn origin() -> GeoPoint {
        GeoPoint::new(LAT0, LON0).unwrap()
    }

    fn square(lat0: f64, lon0: f64, size: f64) -> GeoPolygon {
        let p = |a, b| GeoPoint::new(a, b).unwrap();
        GeoPolygon::new(
            vec![p(lat0, lon0), p(lat0, lon0 + size), p(lat0 + size, lon0 + size), p(lat0 + size, lon0)],
            vec![],
        )
        .unwrap()
    }

    fn years(values: &[(i32, f64, GeoPoint)]) -> (YearValues, YearValues) {
        let recs: Vec<PropertyAssessment> = values
            .iter()
            .enumerate()
            .map(|(i, (y, v, p))| PropertyAssessment {
                id: format!("p{i}"),
                location: *p,
                year: *y,
                value: *v,
            })
            .collect();
        (YearValues::new(2014, &recs), YearValues::new(2015, &recs))
    }

    #[test]
    fn price_diff_hand_case() {
        let (a, b) = years(&[
            (2014, 100_000.0, north(10.0)),
            (2014, 200_000.0, north(20.0)),
            (2015, 110_000.0, north(30.0)),
            (2015, 230_000.0, north(40.0)),
        ]);
        assert_eq!(price_diff(origin(), &a, &b, QUARTER_MILE_M), (20_000.0, false));
    }

    #[test]
    fn price_diff_symmetric_and_empty() {
        let (a, b) = years(&[(2014, 5.0, north(10.0)), (2015, 5.0, north(10.0))]);
        assert_eq!(price_diff(origin(), &a, &b, QUARTER_MILE_M), (0.0, false));
        let (a, b) = years(&[(2014, 5.0, north(1000.0)), (2015, 9.0, north(1000.0))]);
        assert_eq!(price_diff(origin(), &a, &b, QUARTER_MILE_M), (0.0, true));
    }

    #[test]
    fn vacant_density_cases() {
        let idx = PointIndex::new(&[origin()]);
        assert_eq!(vacant_density(origin(), 0, &idx, QUARTER_MILE_M), 0);
        let idx = PointIndex::new(&[origin(), north(100.0), north(450.0)]);
        assert_eq!(vacant_density(origin(), 0, &idx, QUARTER_MILE_M), 1);
        let k = 5;
        let idx = PointIndex::new(&vec![origin(); k]);
        for i in 0..k {
            assert_eq!(vacant_density(origin(), i, &idx, QUARTER_MILE_M) as usize, k - 1);
        }
    }

    #[test]
    fn crime_density_boundary_inclusive() {
        assert_eq!(crime_density(origin(), &PointIndex::new(&[]), QUARTER_MILE_M), 0);
        let boundary = north(QUARTER_MILE_M);
        // make sure the constructed point really sits on the boundary
        let d = haversine_distance(origin(), boundary);
        let pts = vec![north(50.0), boundary, north(500.0)];
        let expected = pts
            .iter()
            .filter(|p| haversine_distance(origin(), **p) <= QUARTER_MILE_M)
            .count() as u32;
        assert!((d - QUARTER_MILE_M).abs() < 1e-6);
        assert_eq!(crime_density(origin(), &PointIndex::new(&pts), d), 2);
        assert_eq!(crime_density(origin(), &PointIndex::new(&pts), QUARTER_MILE_M), expected);
    }

    #[test]
    fn zone_assignment_rules() {
        let res = ZoningDistrict {
            category: ZoneCategory::Residential,
            polygons: vec![square(0.0, 0.0, 1.0)],
        };
        let ind = ZoningDistrict {
            category: ZoneCategory::Industrial,
            polygons: vec![square(0.0, 0.0, 2.0)],
        };
        let bus = ZoningDistrict {
            category: ZoneCategory::Business,
            polygons: vec![square(10.0, 10.0, 1.0)],
        };
        let q = GeoPoint::new(0.5, 0.5).unwrap();
        let z = ZoningLayer { districts: vec![res.clone()] };
        assert_eq!(assign_zone(q, &z), (ZoneCategory::Residential, false));
        let z = ZoningLayer {
            districts: vec![ind.clone(), res.clone()],
        };
        assert_eq!(assign_zone(q, &z), (ZoneCategory::Industrial, false));
        let z = ZoningLayer {
            districts: vec![res, bus],
        };
        let far = GeoPoint::new(9.0, 9.5).unwrap();
        assert_eq!(assign_zone(far, &z), (ZoneCategory::Business, true));
    }

    fn infra(kind: InfraKind, pts: &[GeoPoint]) -> Vec<InfraPoint> {
        pts.iter()
            .enumerate()
            .map(|(i, p)| InfraPoint {
                id: format!("{kind}{i}"),
                location: *p,
                kind,
            })
            .collect()
    }

    fn tiny_city(libraries: &[GeoPoint]) -> CityLayers {
        let raw = RawLayers {
            lots: vec![VacantLotRaw {
                id: "b".into(),
                location: origin(),
                status: LotStatus::Adopt,
                conversion: None,
            }],
            libraries: infra(InfraKind::Library, libraries),
            parks: infra(InfraKind::Park, &[north(10.0)]),
            schools: infra(InfraKind::School, &[north(20.0)]),
            transit: infra(InfraKind::TransitStop, &[north(30.0)]),
            crime: vec![],
            assessments: vec![
                PropertyAssessment {
                    id: "x".into(),
                    location: north(5.0),
                    year: 2014,
                    value: 1.0,
                },
                PropertyAssessment {
                    id: "x".into(),
                    location: north(5.0),
                    year: 2015,
                    value: 3.0,
                },
            ],
            zoning: Some(ZoningLayer {
                districts: vec![ZoningDistrict {
                    category: ZoneCategory::Business,
                    polygons: vec![square(39.0, -77.0, 1.0)],
                }],
            }),
        };
        CityLayers::assemble("tiny", raw).unwrap()
    }

    #[test]
    fn infrastructure_distance_cases() {
        let city = tiny_city(&[origin()]);
        let ds = build_dataset(&city, QUARTER_MILE_M).unwrap();
        assert_eq!(ds.rows[0].features.lib_dist, 0.0);

        let city = tiny_city(&[north(900.0), north(300.0)]);
        let idx = CityIndexes::new(&city);
        let (lib, park, school, transit) = infrastructure_distances(origin(), &idx).unwrap();
        assert!((lib - 300.0).abs() < 1e-6);
        assert_eq!(park, haversine_distance(origin(), north(10.0)));
        assert_eq!(school, haversine_distance(origin(), north(20.0)));
        assert_eq!(transit, haversine_distance(origin(), north(30.0)));
        let ds = build_dataset(&city, QUARTER_MILE_M).unwrap();
        assert_eq!(ds.rows[0].features.price_diff, 2.0);
        assert_eq!(ds.rows[0].features.zone, ZoneCategory::Business);
    }

    #[test]
    fn feature_set_parsing() {
        let s = FeatureSet::parse("schoolDist+libDist+parkDist").unwrap();
        assert_eq!(s.to_string(), "libDist+parkDist+schoolDist");
        assert!(!s.has_zone());
        assert!(FeatureSet::parse("bogus").is_err());
        assert_eq!(FeatureSet::all().numeric().count(), 7);
    }

    #[test]
    fn task_labels() {
        let mut lot = LabeledLot {
            id: "a".into(),
            location: origin(),
            features: FeatureVector {
                lib_dist: 0.0,
                park_dist: 0.0,
                school_dist: 0.0,
                transit_dist: 0.0,
                price_diff: 0.0,
                vacant_density: 0,
                crime_density: 0,
                zone: ZoneCategory::Residential,
            },
            status: LotStatus::Adopt,
            conversion: None,
            price_flag: false,
            zone_flag: false,
        };
        assert_eq!(Task::Binary.label(&lot).unwrap().as_deref(), Some("adopt"));
        assert!(matches!(
            Task::ConvertedOnly.label(&lot),
            Err(Error::MissingConversionLabels(_))
        ));
        lot.conversion = Some(ConversionType::Qcmos);
        assert_eq!(Task::ConversionAll.label(&lot).unwrap().as_deref(), Some("qcmos"));
        lot.status = LotStatus::Available;
        lot.conversion = None;
        assert_eq!(Task::ConvertedOnly.label(&lot).unwrap(), None);
        assert_eq!(Task::ConversionAll.label(&lot).unwrap().as_deref(), Some("available"));
    }
}
