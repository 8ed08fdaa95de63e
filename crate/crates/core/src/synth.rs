//! Seeded synthetic cities with a planted adoption rule.
//!
//! Every layer is drawn uniformly inside a bounding box. Lot status follows a
//! linear rule over the standardised features the lot actually ends up with,
//! so the labels are recoverable from the same pipeline that would process a
//! real city.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_dataset, FeatureSet, FeatureVector};
use crate::geo::{GeoPoint, GeoPolygon, QUARTER_MILE_M};
use crate::ingest::{
    CityLayers, ConversionType, CrimeIncident, InfraKind, InfraPoint, LotStatus, PropertyAssessment, RawLayers,
    VacantLotRaw, ZoneCategory, ZoningDistrict, ZoningLayer,
};
use crate::model::Preprocessor;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox {
            min_lat: 39.286,
            max_lat: 39.314,
            min_lon: -76.6275,
            max_lon: -76.5925,
        }
    }
}

impl BoundingBox {
    fn validate(&self) -> Result<()> {
        GeoPoint::new(self.min_lat, self.min_lon)?;
        GeoPoint::new(self.max_lat, self.max_lon)?;
        if !(self.max_lat > self.min_lat && self.max_lon > self.min_lon) {
            return Err(Error::Config("bounding box is degenerate".into()));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> GeoPoint {
        let lat = rng.gen_range(self.min_lat..self.max_lat);
        let lon = rng.gen_range(self.min_lon..self.max_lon);
        GeoPoint::new(lat, lon).expect("inside a validated box")
    }

    /// Position along the box, 0 at the western edge and 1 at the eastern.
    fn x_fraction(&self, p: GeoPoint) -> f64 {
        (p.lon() - self.min_lon) / (self.max_lon - self.min_lon)
    }
}

/// Weights of the planted rule, one per design column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleWeights {
    pub lib_dist: f64,
    pub park_dist: f64,
    pub school_dist: f64,
    pub transit_dist: f64,
    pub price_diff: f64,
    pub vacant_density: f64,
    pub crime_density: f64,
    /// Residential, Industrial, Business, SpecialPurpose.
    pub zone: [f64; 4],
}

impl Default for RuleWeights {
    fn default() -> Self {
        RuleWeights {
            lib_dist: -1.0,
            park_dist: -0.5,
            school_dist: -0.3,
            transit_dist: -0.8,
            price_diff: 0.3,
            vacant_density: 0.5,
            crime_density: -0.4,
            zone: [1.5, -1.5, 1.0, -1.0],
        }
    }
}

impl RuleWeights {
    pub fn zero() -> Self {
        RuleWeights {
            lib_dist: 0.0,
            park_dist: 0.0,
            school_dist: 0.0,
            transit_dist: 0.0,
            price_diff: 0.0,
            vacant_density: 0.0,
            crime_density: 0.0,
            zone: [0.0; 4],
        }
    }

    /// In design-column order: the seven numeric features, then the zone one-hot.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.lib_dist,
            self.park_dist,
            self.school_dist,
            self.transit_dist,
            self.price_diff,
            self.vacant_density,
            self.crime_density,
        ];
        v.extend_from_slice(&self.zone);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 11);
        RuleWeights {
            lib_dist: v[0],
            park_dist: v[1],
            school_dist: v[2],
            transit_dist: v[3],
            price_diff: v[4],
            vacant_density: v[5],
            crime_density: v[6],
            zone: [v[7], v[8], v[9], v[10]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub n_lots: usize,
    pub n_per_infrastructure_kind: usize,
    pub n_crime: usize,
    pub n_properties_per_year: usize,
    pub bbox: BoundingBox,
    pub weights: RuleWeights,
    /// Share of lots the noise-free rule marks as adopted; sets the threshold.
    pub adopt_fraction: f64,
    /// Probability of flipping each status label.
    pub noise: f64,
    pub crime_year: i32,
    pub assessment_year: i32,
    /// Growth between the two assessment years rises linearly from west to
    /// east by this much.
    pub price_trend: f64,
    /// Seed of the infrastructure, crime and property layers.
    pub seed: u64,
    /// Seed of the lot positions and label noise; `seed` when absent.
    pub lot_seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "synthetic".into(),
            n_lots: 2000,
            n_per_infrastructure_kind: 10,
            n_crime: 5000,
            n_properties_per_year: 3000,
            bbox: BoundingBox::default(),
            weights: RuleWeights::default(),
            adopt_fraction: 887.0 / 1907.0,
            noise: 0.05,
            crime_year: 2015,
            assessment_year: 2014,
            price_trend: 0.2,
            seed: 0,
            lot_seed: None,
        }
    }
}

impl SynthConfig {
    pub fn lot_seed(&self) -> u64 {
        self.lot_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_lots", self.n_lots),
            ("n_per_infrastructure_kind", self.n_per_infrastructure_kind),
            ("n_crime", self.n_crime),
            ("n_properties_per_year", self.n_properties_per_year),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 0.5)", self.noise)));
        }
        if !(self.adopt_fraction > 0.0 && self.adopt_fraction < 1.0) {
            return Err(Error::Config(format!("adopt_fraction {} outside (0, 1)", self.adopt_fraction)));
        }
        if !self.price_trend.is_finite() || self.weights.to_vec().iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("weights and price_trend must be finite".into()));
        }
        if NaiveDate::from_ymd_opt(self.crime_year, 1, 1).is_none() {
            return Err(Error::Config(format!("crime_year {} out of range", self.crime_year)));
        }
        self.bbox.validate()
    }
}

/// The labelling function of a generated city: standardise (with the city's
/// own statistics, or the base city's for the second city of a pair), score
/// with the weights, compare against the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub preprocessor: Preprocessor,
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl PlantedRule {
    pub fn score(&self, row: &FeatureVector) -> f64 {
        self.preprocessor
            .design(row)
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    pub fn scores(&self, rows: &[FeatureVector]) -> Vec<f64> {
        rows.iter().map(|r| self.score(r)).collect()
    }

    pub fn status(&self, row: &FeatureVector) -> LotStatus {
        if self.score(row) > self.threshold {
            LotStatus::Adopt
        } else {
            LotStatus::Available
        }
    }
}

/// Conversion type of an adopted lot from density terciles: top vacant-density
/// tercile is an urban farm, otherwise top crime-density tercile is QCMOS,
/// everything else a community garden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionRule {
    pub vacant_cutoff: u32,
    pub crime_cutoff: u32,
}

impl ConversionRule {
    fn upper_tercile(mut values: Vec<u32>) -> u32 {
        values.sort_unstable();
        values.get(2 * values.len() / 3).copied().unwrap_or(u32::MAX)
    }

    pub fn fit(adopted: &[FeatureVector]) -> Self {
        ConversionRule {
            vacant_cutoff: Self::upper_tercile(adopted.iter().map(|r| r.vacant_density).collect()),
            crime_cutoff: Self::upper_tercile(adopted.iter().map(|r| r.crime_density).collect()),
        }
    }

    pub fn classify(&self, row: &FeatureVector) -> ConversionType {
        if row.vacant_density >= self.vacant_cutoff {
            ConversionType::UrbanFarm
        } else if row.crime_density >= self.crime_cutoff {
            ConversionType::Qcmos
        } else {
            ConversionType::CommunityGarden
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCity {
    pub city: CityLayers,
    pub rule: PlantedRule,
    pub conversion_rule: ConversionRule,
    /// Lot ids whose status was flipped by label noise.
    pub flipped: Vec<String>,
}

// RNG streams per layer, so resizing one layer leaves the others unchanged.
const STREAM_LOTS: u64 = 0;
const STREAM_CRIME: u64 = 5;
const STREAM_PROPERTIES: u64 = 6;
const STREAM_NOISE: u64 = 7;

fn padded(prefix: &str, i: usize, n: usize) -> String {
    let width = n.to_string().len().max(5);
    format!("{prefix}-{:0width$}", i + 1)
}

fn zoning_grid(b: &BoundingBox) -> ZoningLayer {
    let mid_lat = 0.5 * (b.min_lat + b.max_lat);
    let mid_lon = 0.5 * (b.min_lon + b.max_lon);
    let cell = |lat0: f64, lat1: f64, lon0: f64, lon1: f64| {
        let p = |lat, lon| GeoPoint::new(lat, lon).expect("inside box");
        GeoPolygon::new(vec![p(lat0, lon0), p(lat0, lon1), p(lat1, lon1), p(lat1, lon0)], vec![])
            .expect("non-degenerate cell")
    };
    let cells = [
        (ZoneCategory::Residential, cell(b.min_lat, mid_lat, b.min_lon, mid_lon)),
        (ZoneCategory::Industrial, cell(b.min_lat, mid_lat, mid_lon, b.max_lon)),
        (ZoneCategory::Business, cell(mid_lat, b.max_lat, b.min_lon, mid_lon)),
        (ZoneCategory::SpecialPurpose, cell(mid_lat, b.max_lat, mid_lon, b.max_lon)),
    ];
    ZoningLayer {
        districts: cells
            .into_iter()
            .map(|(category, poly)| ZoningDistrict {
                category,
                polygons: vec![poly],
            })
            .collect(),
    }
}

fn unlabeled_layers(cfg: &SynthConfig) -> RawLayers {
    let b = &cfg.bbox;
    let mut rng = seed::rng_stream(cfg.lot_seed(), STREAM_LOTS);
    let lots = (0..cfg.n_lots)
        .map(|i| VacantLotRaw {
            id: padded("lot", i, cfg.n_lots),
            location: b.sample(&mut rng),
            status: LotStatus::Available,
            conversion: None,
        })
        .collect();

    let infra = |kind: InfraKind, stream: u64, prefix: &str| -> Vec<InfraPoint> {
        let mut rng = seed::rng_stream(cfg.seed, stream);
        let n = cfg.n_per_infrastructure_kind;
        (0..n)
            .map(|i| InfraPoint {
                id: padded(prefix, i, n),
                location: b.sample(&mut rng),
                kind,
            })
            .collect()
    };

    let mut rng = seed::rng_stream(cfg.seed, STREAM_CRIME);
    let jan1 = NaiveDate::from_ymd_opt(cfg.crime_year, 1, 1).expect("validated year");
    let dec31 = NaiveDate::from_ymd_opt(cfg.crime_year, 12, 31).expect("validated year");
    let days = (dec31 - jan1).num_days() + 1;
    let crime = (0..cfg.n_crime)
        .map(|i| CrimeIncident {
            id: padded("crime", i, cfg.n_crime),
            location: b.sample(&mut rng),
            date: jan1 + Duration::days(rng.gen_range(0..days)),
        })
        .collect();

    let mut rng = seed::rng_stream(cfg.seed, STREAM_PROPERTIES);
    let value = LogNormal::new(11.5, 0.5).expect("valid lognormal");
    let jitter = Normal::new(0.0, 0.02).expect("valid normal");
    let n = cfg.n_properties_per_year;
    let mut assessments = Vec::with_capacity(2 * n);
    for i in 0..n {
        let id = padded("prop", i, n);
        let location = b.sample(&mut rng);
        let before: f64 = value.sample(&mut rng);
        let growth = cfg.price_trend * b.x_fraction(location) + jitter.sample(&mut rng);
        let after = (before * (1.0 + growth)).max(0.0);
        // Whole currency units keep the CSV short.
        assessments.push(PropertyAssessment {
            id: id.clone(),
            location,
            year: cfg.assessment_year,
            value: before.round(),
        });
        assessments.push(PropertyAssessment {
            id,
            location,
            year: cfg.assessment_year + 1,
            value: after.round(),
        });
    }

    RawLayers {
        lots,
        libraries: infra(InfraKind::Library, 1, "lib"),
        parks: infra(InfraKind::Park, 2, "park"),
        schools: infra(InfraKind::School, 3, "school"),
        transit: infra(InfraKind::TransitStop, 4, "stop"),
        crime,
        assessments,
        zoning: Some(zoning_grid(b)),
    }
}

/// Generates a city together with the rules that labelled it.
pub fn generate(cfg: &SynthConfig) -> Result<GeneratedCity> {
    generate_with(cfg, None)
}

/// `reference` replaces the city's own standardisation in the planted rule,
/// so a second city is scored on the first city's scale.
fn generate_with(cfg: &SynthConfig, reference: Option<&Preprocessor>) -> Result<GeneratedCity> {
    cfg.validate()?;
    let mut city = CityLayers::assemble(cfg.name.clone(), unlabeled_layers(cfg))?;
    let ds = build_dataset(&city, QUARTER_MILE_M)?;
    let by_id: HashMap<&str, &FeatureVector> = ds.rows.iter().map(|r| (r.id.as_str(), &r.features)).collect();
    let features: Vec<FeatureVector> = city.lots.iter().map(|l| *by_id[l.id.as_str()]).collect();

    let preprocessor = match reference {
        Some(p) => p.clone(),
        None => Preprocessor::fit(&FeatureSet::all(), &features),
    };
    let mut rule = PlantedRule {
        preprocessor,
        weights: cfg.weights.to_vec(),
        threshold: 0.0,
    };
    let mut sorted = rule.scores(&features);
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n_adopt = ((cfg.adopt_fraction * sorted.len() as f64).round() as usize).clamp(1, sorted.len());
    rule.threshold = match sorted.get(n_adopt) {
        Some(&next) => 0.5 * (sorted[n_adopt - 1] + next),
        None => f64::NEG_INFINITY,
    };

    let mut rng = seed::rng_stream(cfg.lot_seed(), STREAM_NOISE);
    let mut flipped = Vec::new();
    for (lot, fv) in city.lots.iter_mut().zip(&features) {
        lot.status = rule.status(fv);
        if rng.gen::<f64>() < cfg.noise {
            lot.status = match lot.status {
                LotStatus::Adopt => LotStatus::Available,
                LotStatus::Available => LotStatus::Adopt,
            };
            flipped.push(lot.id.clone());
        }
    }

    let adopted: Vec<FeatureVector> = city
        .lots
        .iter()
        .zip(&features)
        .filter(|(l, _)| l.status == LotStatus::Adopt)
        .map(|(_, f)| *f)
        .collect();
    let conversion_rule = ConversionRule::fit(&adopted);
    for (lot, fv) in city.lots.iter_mut().zip(&features) {
        if lot.status == LotStatus::Adopt {
            lot.conversion = Some(conversion_rule.classify(fv));
        }
    }

    Ok(GeneratedCity {
        city,
        rule,
        conversion_rule,
        flipped,
    })
}

pub fn generate_city(cfg: &SynthConfig) -> Result<CityLayers> {
    generate(cfg).map(|g| g.city)
}

/// How the second city of a pair differs from the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    /// Multiplier on the infrastructure point count.
    pub infra_scale: f64,
    /// Multiplier on the crime incident count.
    pub crime_scale: f64,
    /// Multiplier on the lot count.
    pub lot_scale: f64,
    /// Added to the price trend.
    pub price_trend_offset: f64,
    /// Standard deviation of Gaussian noise added to every rule weight.
    pub weight_perturbation: f64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig::none()
    }
}

impl ShiftConfig {
    pub fn none() -> Self {
        ShiftConfig {
            infra_scale: 1.0,
            crime_scale: 1.0,
            lot_scale: 1.0,
            price_trend_offset: 0.0,
            weight_perturbation: 0.0,
        }
    }

    pub fn strong() -> Self {
        ShiftConfig {
            infra_scale: 3.0,
            crime_scale: 3.0,
            lot_scale: 1.0,
            price_trend_offset: 0.3,
            weight_perturbation: 0.8,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("infra_scale", self.infra_scale),
            ("crime_scale", self.crime_scale),
            ("lot_scale", self.lot_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.price_trend_offset.is_finite() || !(self.weight_perturbation >= 0.0) {
            return Err(Error::Config("invalid price_trend_offset or weight_perturbation".into()));
        }
        Ok(())
    }

    /// Configuration of the second city. It keeps the layer seed, so its
    /// infrastructure, crime and property draws extend the base city's; lot
    /// positions, label noise and the weight perturbation use a derived seed.
    pub fn apply(&self, cfg: &SynthConfig) -> Result<SynthConfig> {
        self.validate()?;
        let scale = |n: usize, s: f64| ((n as f64 * s).round() as usize).max(1);
        let lots = seed::derive(cfg.lot_seed(), "shifted");
        let mut rng = seed::rng(seed::derive(lots, "weights"));
        let perturb = Normal::new(0.0, self.weight_perturbation).expect("non-negative sd");
        let weights: Vec<f64> = cfg.weights.to_vec().iter().map(|w| w + perturb.sample(&mut rng)).collect();
        Ok(SynthConfig {
            name: format!("{}-shifted", cfg.name),
            n_lots: scale(cfg.n_lots, self.lot_scale),
            n_per_infrastructure_kind: scale(cfg.n_per_infrastructure_kind, self.infra_scale),
            n_crime: scale(cfg.n_crime, self.crime_scale),
            weights: RuleWeights::from_slice(&weights),
            price_trend: cfg.price_trend + self.price_trend_offset,
            lot_seed: Some(lots),
            ..cfg.clone()
        })
    }
}

/// Two cities from one seed lineage; the second is drawn from `shift.apply(cfg)`
/// and labelled on the first city's feature scale, its threshold refitted to
/// the adopt fraction.
pub fn generate_pair(cfg: &SynthConfig, shift: &ShiftConfig) -> Result<(GeneratedCity, GeneratedCity)> {
    let second = shift.apply(cfg)?;
    let first = generate(cfg)?;
    let other = generate_with(&second, Some(&first.rule.preprocessor))?;
    Ok((first, other))
}

pub fn generate_city_pair(cfg: &SynthConfig, shift: &ShiftConfig) -> Result<(CityLayers, CityLayers)> {
    generate_pair(cfg, shift).map(|(a, b)| (a.city, b.city))
}

/// A synth config file: any number of independent cities plus an optional
/// shifted pair.
///
/// ```toml
/// [[city]]
/// name = "baltimore"
/// n_lots = 1907
/// seed = 1
///
/// [pair.base]
/// name = "source"
/// seed = 3
///
/// [pair.shift]
/// crime_scale = 3.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    #[serde(default)]
    pub city: Vec<SynthConfig>,
    pub pair: Option<PairConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    pub base: SynthConfig,
    pub shift: ShiftConfig,
}

impl SynthFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: SynthFile = crate::config::from_toml_str(text)?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f: SynthFile = crate::config::load_toml(path)?;
        f.validate()?;
        Ok(f)
    }

    /// Configurations of every city the file describes, in file order.
    pub fn configs(&self) -> Result<Vec<SynthConfig>> {
        let mut out = self.city.clone();
        if let Some(p) = &self.pair {
            out.push(p.base.clone());
            out.push(p.shift.apply(&p.base)?);
        }
        Ok(out)
    }

    /// Generates every city in the same order as [`SynthFile::configs`]; the
    /// pair goes through [`generate_pair`].
    pub fn generate(&self) -> Result<Vec<(SynthConfig, GeneratedCity)>> {
        let mut out = Vec::new();
        for cfg in &self.city {
            out.push((cfg.clone(), generate(cfg)?));
        }
        if let Some(p) = &self.pair {
            let (a, b) = generate_pair(&p.base, &p.shift)?;
            out.push((p.base.clone(), a));
            out.push((p.shift.apply(&p.base)?, b));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let configs = self.configs()?;
        if configs.is_empty() {
            return Err(Error::Config("no [[city]] or [pair] section".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for c in &configs {
            c.validate()?;
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate city name `{}`", c.name)));
            }
        }
        Ok(())
    }
}

/// Writes the city layers into `dir` in the ingest formats, plus the planted
/// rules as `planted_rule.json`.
pub fn write_generated(dir: impl AsRef<std::path::Path>, g: &GeneratedCity) -> Result<()> {
    let dir = dir.as_ref();
    crate::ingest::write_city_dir(dir, &g.city)?;
    let path = dir.join("planted_rule.json");
    let json = serde_json::json!({
        "status": g.rule,
        "conversion": g.conversion_rule,
        "flipped": g.flipped,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&json)? + "\n").map_err(|e| Error::io(&path, e))
}
