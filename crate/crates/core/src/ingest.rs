//! Loading and validation of the raw city layers.
//!
//! File formats (UTF-8, header row mandatory, `.` decimal separator):
//!
//! | layer          | columns                                   |
//! |----------------|-------------------------------------------|
//! | lots           | `id,lat,lon,status[,conversion]`          |
//! | infrastructure | `id,lat,lon` (one file per kind)          |
//! | crime          | `id,lat,lon,date` (ISO 8601 date)         |
//! | assessments    | `id,lat,lon,year,value`                   |
//!
//! Zoning is a GeoJSON `FeatureCollection` of `Polygon`/`MultiPolygon`
//! features carrying a string property `category`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, GeoPolygon};

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " `{}`"), other)),
                }
            }
        }
    };
}

label_enum!(
    /// Whether a lot has been taken up for conversion.
    LotStatus { Available => "available", Adopt => "adopt" }
);

label_enum!(ConversionType {
    CommunityGarden => "community_garden",
    Qcmos => "qcmos",
    UrbanFarm => "urban_farm",
});

label_enum!(InfraKind {
    Library => "library",
    Park => "park",
    School => "school",
    TransitStop => "transit_stop",
});

label_enum!(
    /// Zoning category, in the fixed one-hot column order.
    ZoneCategory {
        Residential => "residential",
        Industrial => "industrial",
        Business => "business",
        SpecialPurpose => "special_purpose",
    }
);

impl ZoneCategory {
    pub fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacantLotRaw {
    pub id: String,
    pub location: GeoPoint,
    pub status: LotStatus,
    pub conversion: Option<ConversionType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfraPoint {
    pub id: String,
    pub location: GeoPoint,
    pub kind: InfraKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeIncident {
    pub id: String,
    pub location: GeoPoint,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyAssessment {
    pub id: String,
    pub location: GeoPoint,
    pub year: i32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoningDistrict {
    pub category: ZoneCategory,
    /// One polygon for a GeoJSON `Polygon`, several for a `MultiPolygon`.
    pub polygons: Vec<GeoPolygon>,
}

impl ZoningDistrict {
    pub fn contains(&self, q: GeoPoint) -> bool {
        self.polygons.iter().any(|p| p.contains(q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoningLayer {
    pub districts: Vec<ZoningDistrict>,
}

/// The five raw layers of one city, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct CityLayers {
    pub name: String,
    pub lots: Vec<VacantLotRaw>,
    pub libraries: Vec<InfraPoint>,
    pub parks: Vec<InfraPoint>,
    pub schools: Vec<InfraPoint>,
    pub transit: Vec<InfraPoint>,
    pub crime: Vec<CrimeIncident>,
    pub assessments: Vec<PropertyAssessment>,
    pub zoning: ZoningLayer,
}

/// Loaded-but-unassembled layers.
#[derive(Debug, Clone, Default)]
pub struct RawLayers {
    pub lots: Vec<VacantLotRaw>,
    pub libraries: Vec<InfraPoint>,
    pub parks: Vec<InfraPoint>,
    pub schools: Vec<InfraPoint>,
    pub transit: Vec<InfraPoint>,
    pub crime: Vec<CrimeIncident>,
    pub assessments: Vec<PropertyAssessment>,
    pub zoning: Option<ZoningLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerCounts {
    pub lots: usize,
    pub adopted: usize,
    pub libraries: usize,
    pub parks: usize,
    pub schools: usize,
    pub transit: usize,
    pub crime: usize,
    pub assessments: usize,
    pub districts: usize,
}

impl fmt::Display for LayerCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lots {} (adopt {}), libraries {}, parks {}, schools {}, transit {}, crime {}, assessments {}, zoning districts {}",
            self.lots,
            self.adopted,
            self.libraries,
            self.parks,
            self.schools,
            self.transit,
            self.crime,
            self.assessments,
            self.districts
        )
    }
}

impl CityLayers {
    pub fn assemble(name: impl Into<String>, raw: RawLayers) -> Result<CityLayers> {
        let name = name.into();
        for (kind, layer) in [
            (InfraKind::Library, &raw.libraries),
            (InfraKind::Park, &raw.parks),
            (InfraKind::School, &raw.schools),
            (InfraKind::TransitStop, &raw.transit),
        ] {
            if layer.is_empty() {
                return Err(Error::MissingLayer(kind));
            }
            if let Some(p) = layer.iter().find(|p| p.kind != kind) {
                return Err(Error::Schema {
                    path: PathBuf::from(&name),
                    reason: format!("point `{}` of kind {} in the {} layer", p.id, p.kind, kind),
                });
            }
        }
        assessment_years(&raw.assessments).map_err(|reason| Error::Schema {
            path: PathBuf::from(&name),
            reason,
        })?;
        let zoning = match raw.zoning {
            Some(z) if !z.districts.is_empty() => z,
            _ => {
                return Err(Error::Schema {
                    path: PathBuf::from(&name),
                    reason: "zoning layer has no districts".into(),
                })
            }
        };
        Ok(CityLayers {
            name,
            lots: raw.lots,
            libraries: raw.libraries,
            parks: raw.parks,
            schools: raw.schools,
            transit: raw.transit,
            crime: raw.crime,
            assessments: raw.assessments,
            zoning,
        })
    }

    pub fn infrastructure(&self, kind: InfraKind) -> &[InfraPoint] {
        match kind {
            InfraKind::Library => &self.libraries,
            InfraKind::Park => &self.parks,
            InfraKind::School => &self.schools,
            InfraKind::TransitStop => &self.transit,
        }
    }

    /// The two assessment years, earlier first.
    pub fn assessment_years(&self) -> (i32, i32) {
        assessment_years(&self.assessments).expect("validated at assembly")
    }

    pub fn counts(&self) -> LayerCounts {
        LayerCounts {
            lots: self.lots.len(),
            adopted: self.lots.iter().filter(|l| l.status == LotStatus::Adopt).count(),
            libraries: self.libraries.len(),
            parks: self.parks.len(),
            schools: self.schools.len(),
            transit: self.transit.len(),
            crime: self.crime.len(),
            assessments: self.assessments.len(),
            districts: self.zoning.districts.len(),
        }
    }
}

fn assessment_years(records: &[PropertyAssessment]) -> std::result::Result<(i32, i32), String> {
    let years: BTreeSet<i32> = records.iter().map(|r| r.year).collect();
    if years.len() != 2 {
        return Err(format!(
            "assessments must cover exactly two years, found {} ({:?})",
            years.len(),
            years
        ));
    }
    let mut it = years.into_iter();
    Ok((it.next().unwrap(), it.next().unwrap()))
}

// ---------------------------------------------------------------------------
// CSV reading

struct CsvRows {
    path: PathBuf,
    reader: csv::Reader<fs::File>,
    headers: Vec<String>,
}

impl CsvRows {
    fn open(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: e.to_string(),
            })?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect();
        Ok(CsvRows {
            path: path.to_path_buf(),
            reader,
            headers,
        })
    }

    fn expect_headers(&self, options: &[&[&str]]) -> Result<usize> {
        options
            .iter()
            .position(|h| self.headers.iter().map(String::as_str).eq(h.iter().copied()))
            .ok_or_else(|| Error::Schema {
                path: self.path.clone(),
                reason: format!(
                    "header `{}` does not match `{}`",
                    self.headers.join(","),
                    options.last().unwrap().join(",")
                ),
            })
    }

    fn for_each<F>(&mut self, mut f: F) -> Result<()>
    where
        F: FnMut(&Row<'_>) -> Result<()>,
    {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| Error::Parse {
                path: self.path.clone(),
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line());
            f(&Row {
                path: &self.path,
                line,
                record: &record,
            })?;
        }
    }
}

struct Row<'a> {
    path: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn field(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("")
    }

    fn parse_err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn id(&self) -> Result<String> {
        let id = self.field(0);
        if id.is_empty() {
            return Err(self.parse_err("empty id"));
        }
        Ok(id.to_string())
    }

    fn number(&self, i: usize, name: &str) -> Result<f64> {
        let raw = self.field(i);
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.parse_err(format!("{name}: not a finite number: `{raw}`")))
    }

    fn location(&self) -> Result<GeoPoint> {
        let lat = self.number(1, "lat")?;
        let lon = self.number(2, "lon")?;
        GeoPoint::new(lat, lon).map_err(|_| Error::Range {
            path: self.path.to_path_buf(),
            line: self.line,
            lat,
            lon,
        })
    }

    fn parsed<T: FromStr<Err = String>>(&self, i: usize) -> Result<T> {
        self.field(i).parse::<T>().map_err(|e| self.parse_err(e))
    }
}

fn check_unique(seen: &mut HashSet<String>, row: &Row<'_>, id: &str) -> Result<()> {
    if !seen.insert(id.to_string()) {
        return Err(Error::DuplicateId {
            path: row.path.to_path_buf(),
            line: row.line,
            id: id.to_string(),
        });
    }
    Ok(())
}

pub fn load_lots(path: impl AsRef<Path>) -> Result<Vec<VacantLotRaw>> {
    let mut rows = CsvRows::open(path.as_ref())?;
    let variant = rows.expect_headers(&[
        &["id", "lat", "lon", "status"],
        &["id", "lat", "lon", "status", "conversion"],
    ])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    rows.for_each(|row| {
        let id = row.id()?;
        check_unique(&mut seen, row, &id)?;
        let location = row.location()?;
        let status: LotStatus = row.parsed(3)?;
        let conversion = if variant == 1 && !row.field(4).is_empty() {
            Some(row.parsed::<ConversionType>(4)?)
        } else {
            None
        };
        if conversion.is_some() && status != LotStatus::Adopt {
            return Err(row.parse_err("conversion given for a lot that is not adopted"));
        }
        out.push(VacantLotRaw {
            id,
            location,
            status,
            conversion,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn load_infrastructure(path: impl AsRef<Path>, kind: InfraKind) -> Result<Vec<InfraPoint>> {
    let mut rows = CsvRows::open(path.as_ref())?;
    rows.expect_headers(&[&["id", "lat", "lon"]])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    rows.for_each(|row| {
        let id = row.id()?;
        check_unique(&mut seen, row, &id)?;
        out.push(InfraPoint {
            id,
            location: row.location()?,
            kind,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Loads crime incidents, rejecting any dated outside `report_year`.
pub fn load_crime(path: impl AsRef<Path>, report_year: i32) -> Result<Vec<CrimeIncident>> {
    let mut rows = CsvRows::open(path.as_ref())?;
    rows.expect_headers(&[&["id", "lat", "lon", "date"]])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    rows.for_each(|row| {
        let id = row.id()?;
        check_unique(&mut seen, row, &id)?;
        let location = row.location()?;
        let raw = row.field(3);
        let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| row.parse_err(format!("date `{raw}`: {e}")))?;
        if date.year() != report_year {
            return Err(row.parse_err(format!("date {date} outside report year {report_year}")));
        }
        out.push(CrimeIncident { id, location, date });
        Ok(())
    })?;
    Ok(out)
}

pub fn load_assessments(path: impl AsRef<Path>) -> Result<Vec<PropertyAssessment>> {
    let path = path.as_ref();
    let mut rows = CsvRows::open(path)?;
    rows.expect_headers(&[&["id", "lat", "lon", "year", "value"]])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    rows.for_each(|row| {
        let id = row.id()?;
        let location = row.location()?;
        let year = row
            .field(3)
            .parse::<i32>()
            .map_err(|e| row.parse_err(format!("year: {e}")))?;
        check_unique(&mut seen, row, &format!("{id}\u{0}{year}"))
            .map_err(|_| row.parse_err(format!("duplicate assessment `{id}` for {year}")))?;
        let value = row.number(4, "value")?;
        if value < 0.0 {
            return Err(row.parse_err(format!("negative assessed value {value}")));
        }
        out.push(PropertyAssessment {
            id,
            location,
            year,
            value,
        });
        Ok(())
    })?;
    assessment_years(&out).map_err(|reason| Error::Schema {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLayerKind {
    Infrastructure(InfraKind),
    Crime { report_year: i32 },
    Assessments,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointLayer {
    Infrastructure(Vec<InfraPoint>),
    Crime(Vec<CrimeIncident>),
    Assessments(Vec<PropertyAssessment>),
}

impl PointLayer {
    pub fn len(&self) -> usize {
        match self {
            PointLayer::Infrastructure(v) => v.len(),
            PointLayer::Crime(v) => v.len(),
            PointLayer::Assessments(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_point_layer(path: impl AsRef<Path>, kind: PointLayerKind) -> Result<PointLayer> {
    Ok(match kind {
        PointLayerKind::Infrastructure(k) => PointLayer::Infrastructure(load_infrastructure(path, k)?),
        PointLayerKind::Crime { report_year } => PointLayer::Crime(load_crime(path, report_year)?),
        PointLayerKind::Assessments => PointLayer::Assessments(load_assessments(path)?),
    })
}

// ---------------------------------------------------------------------------
// Zoning GeoJSON

fn json_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: reason.into(),
    }
}

fn parse_ring(path: &Path, v: &Value) -> Result<Vec<GeoPoint>> {
    let coords = v.as_array().ok_or_else(|| json_err(path, "ring is not an array"))?;
    coords
        .iter()
        .map(|c| {
            let pair = c
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| json_err(path, "position is not [lon, lat]"))?;
            let lon = pair[0].as_f64().ok_or_else(|| json_err(path, "non-numeric lon"))?;
            let lat = pair[1].as_f64().ok_or_else(|| json_err(path, "non-numeric lat"))?;
            GeoPoint::new(lat, lon).map_err(|_| Error::Range {
                path: path.to_path_buf(),
                line: 0,
                lat,
                lon,
            })
        })
        .collect()
}

fn parse_polygon(path: &Path, v: &Value) -> Result<GeoPolygon> {
    let rings = v.as_array().ok_or_else(|| json_err(path, "polygon is not an array of rings"))?;
    let (exterior, holes) = rings
        .split_first()
        .ok_or_else(|| json_err(path, "polygon without rings"))?;
    let exterior = parse_ring(path, exterior)?;
    let holes = holes.iter().map(|h| parse_ring(path, h)).collect::<Result<Vec<_>>>()?;
    GeoPolygon::new(exterior, holes).map_err(|e| json_err(path, e.to_string()))
}

pub fn parse_zoning(path: &Path, text: &str) -> Result<ZoningLayer> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        reason: e.to_string(),
    })?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(json_err(path, "expected a FeatureCollection"));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| json_err(path, "missing features array"))?;
    let mut districts = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let category = feature
            .pointer("/properties/category")
            .and_then(Value::as_str)
            .ok_or_else(|| json_err(path, format!("feature {i}: missing string property `category`")))?;
        let category: ZoneCategory = category
            .parse()
            .map_err(|_| Error::UnknownCategory(category.to_string()))?;
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| json_err(path, format!("feature {i}: missing geometry")))?;
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| json_err(path, format!("feature {i}: missing coordinates")))?;
        let polygons = match geometry.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![parse_polygon(path, coords)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| json_err(path, format!("feature {i}: malformed MultiPolygon")))?
                .iter()
                .map(|p| parse_polygon(path, p))
                .collect::<Result<Vec<_>>>()?,
            other => {
                return Err(json_err(
                    path,
                    format!("feature {i}: unsupported geometry type {other:?}"),
                ))
            }
        };
        districts.push(ZoningDistrict { category, polygons });
    }
    if districts.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            reason: "zoning layer has no districts".into(),
        });
    }
    Ok(ZoningLayer { districts })
}

pub fn load_zoning(path: impl AsRef<Path>) -> Result<ZoningLayer> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_zoning(path, &text)
}

fn ring_json(ring: &[GeoPoint]) -> Value {
    let mut coords: Vec<Value> = ring.iter().map(|p| json!([p.lon(), p.lat()])).collect();
    if let Some(first) = ring.first() {
        coords.push(json!([first.lon(), first.lat()]));
    }
    Value::Array(coords)
}

fn polygon_json(poly: &GeoPolygon) -> Value {
    let mut rings = vec![ring_json(poly.exterior())];
    rings.extend(poly.holes().iter().map(|h| ring_json(h)));
    Value::Array(rings)
}

pub fn zoning_to_geojson(layer: &ZoningLayer) -> Value {
    let features: Vec<Value> = layer
        .districts
        .iter()
        .map(|d| {
            let geometry = if d.polygons.len() == 1 {
                json!({"type": "Polygon", "coordinates": polygon_json(&d.polygons[0])})
            } else {
                json!({
                    "type": "MultiPolygon",
                    "coordinates": d.polygons.iter().map(polygon_json).collect::<Vec<_>>(),
                })
            };
            json!({
                "type": "Feature",
                "properties": {"category": d.category.as_str()},
                "geometry": geometry,
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

// ---------------------------------------------------------------------------
// Writers

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{other:?}"),
        },
    }
}

fn write_rows<T>(
    path: &Path,
    header: &[&str],
    rows: &[T],
    mut fields: impl FnMut(&T) -> Vec<String>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_io(path))?;
    for r in rows {
        w.write_record(fields(r)).map_err(csv_io(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lots(path: impl AsRef<Path>, lots: &[VacantLotRaw]) -> Result<()> {
    let with_conversion = lots.iter().any(|l| l.conversion.is_some());
    let header: &[&str] = if with_conversion {
        &["id", "lat", "lon", "status", "conversion"]
    } else {
        &["id", "lat", "lon", "status"]
    };
    write_rows(path.as_ref(), header, lots, |l| {
        let mut f = vec![
            l.id.clone(),
            l.location.lat().to_string(),
            l.location.lon().to_string(),
            l.status.to_string(),
        ];
        if with_conversion {
            f.push(l.conversion.map(|c| c.to_string()).unwrap_or_default());
        }
        f
    })
}

pub fn write_infrastructure(path: impl AsRef<Path>, points: &[InfraPoint]) -> Result<()> {
    write_rows(path.as_ref(), &["id", "lat", "lon"], points, |p| {
        vec![p.id.clone(), p.location.lat().to_string(), p.location.lon().to_string()]
    })
}

pub fn write_crime(path: impl AsRef<Path>, incidents: &[CrimeIncident]) -> Result<()> {
    write_rows(path.as_ref(), &["id", "lat", "lon", "date"], incidents, |c| {
        vec![
            c.id.clone(),
            c.location.lat().to_string(),
            c.location.lon().to_string(),
            c.date.format("%Y-%m-%d").to_string(),
        ]
    })
}

pub fn write_assessments(path: impl AsRef<Path>, records: &[PropertyAssessment]) -> Result<()> {
    write_rows(path.as_ref(), &["id", "lat", "lon", "year", "value"], records, |a| {
        vec![
            a.id.clone(),
            a.location.lat().to_string(),
            a.location.lon().to_string(),
            a.year.to_string(),
            a.value.to_string(),
        ]
    })
}

pub fn write_zoning(path: impl AsRef<Path>, layer: &ZoningLayer) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&zoning_to_geojson(layer))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// City directories

/// Standard file names inside a city directory.
pub mod files {
    pub const LOTS: &str = "lots.csv";
    pub const LIBRARIES: &str = "libraries.csv";
    pub const PARKS: &str = "parks.csv";
    pub const SCHOOLS: &str = "schools.csv";
    pub const TRANSIT: &str = "transit.csv";
    pub const CRIME: &str = "crime.csv";
    pub const ASSESSMENTS: &str = "assessments.csv";
    pub const ZONING: &str = "zoning.geojson";
}

/// Explicit per-layer paths, as passed on the command line.
#[derive(Debug, Clone)]
pub struct LayerPaths {
    pub lots: PathBuf,
    pub libraries: PathBuf,
    pub parks: PathBuf,
    pub schools: PathBuf,
    pub transit: PathBuf,
    pub crime: PathBuf,
    pub assessments: PathBuf,
    pub zoning: PathBuf,
}

impl LayerPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        LayerPaths {
            lots: d.join(files::LOTS),
            libraries: d.join(files::LIBRARIES),
            parks: d.join(files::PARKS),
            schools: d.join(files::SCHOOLS),
            transit: d.join(files::TRANSIT),
            crime: d.join(files::CRIME),
            assessments: d.join(files::ASSESSMENTS),
            zoning: d.join(files::ZONING),
        }
    }

    pub fn load(&self, name: &str, crime_year: i32) -> Result<CityLayers> {
        let raw = RawLayers {
            lots: load_lots(&self.lots)?,
            libraries: load_infrastructure(&self.libraries, InfraKind::Library)?,
            parks: load_infrastructure(&self.parks, InfraKind::Park)?,
            schools: load_infrastructure(&self.schools, InfraKind::School)?,
            transit: load_infrastructure(&self.transit, InfraKind::TransitStop)?,
            crime: load_crime(&self.crime, crime_year)?,
            assessments: load_assessments(&self.assessments)?,
            zoning: Some(load_zoning(&self.zoning)?),
        };
        CityLayers::assemble(name, raw)
    }
}

pub fn load_city_dir(dir: impl AsRef<Path>, name: &str, crime_year: i32) -> Result<CityLayers> {
    LayerPaths::in_dir(dir).load(name, crime_year)
}

pub fn write_city_dir(dir: impl AsRef<Path>, city: &CityLayers) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = LayerPaths::in_dir(dir);
    write_lots(&p.lots, &city.lots)?;
    write_infrastructure(&p.libraries, &city.libraries)?;
    write_infrastructure(&p.parks, &city.parks)?;
    write_infrastructure(&p.schools, &city.schools)?;
    write_infrastructure(&p.transit, &city.transit)?;
    write_crime(&p.crime, &city.crime)?;
    write_assessments(&p.assessments, &city.assessments)?;
    write_zoning(&p.zoning, &city.zoning)
}
