//! Energy to emissions, car-distance and per-capita equivalents, the impact
//! statement, and conference-scale extrapolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intensity::CarbonIntensity;
use crate::scalar::Scalar;

/// kgCO2 per km implied by the closing statement (11.426 kg / 94.898 km).
pub const STATEMENT_CAR_FACTOR: f64 = 0.1204;
/// kgCO2 per km implied by the regional distance table (5.8286 kg / 66.8 km).
pub const TABLE_CAR_FACTOR: f64 = 0.08725;
pub const DEFAULT_CAR_FACTOR: f64 = STATEMENT_CAR_FACTOR;
/// Annual per-capita footprint of a low-income country, kgCO2eq.
pub const DEFAULT_PER_CAPITA_KG: f64 = 236.7;

#[derive(Debug, Error, PartialEq)]
pub enum AccountingError {
    #[error("invalid car factor {0}: must be > 0")]
    InvalidFactor(f64),
    #[error("invalid per-capita footprint {0}: must be > 0")]
    InvalidPerCapita(f64),
    #[error("invalid acceptance ratio {0}: must be in (0, 1]")]
    InvalidAcceptance(f64),
    #[error("{name} must be at least 1")]
    InvalidCount { name: &'static str },
    #[error("invalid quantity {name} = {value}: must be a non-negative number")]
    InvalidQuantity { name: &'static str, value: f64 },
}

/// Named car emission factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarFactorPreset {
    Statement,
    Table,
}

impl CarFactorPreset {
    pub fn kg_per_km(self) -> f64 {
        match self {
            Self::Statement => STATEMENT_CAR_FACTOR,
            Self::Table => TABLE_CAR_FACTOR,
        }
    }
}

impl std::str::FromStr for CarFactorPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "statement" => Ok(Self::Statement),
            "table" => Ok(Self::Table),
            other => Err(format!("unknown car factor preset `{other}`")),
        }
    }
}

/// kg CO2eq for `kwh` at the given intensity.
pub fn emissions<T: Scalar>(kwh: T, intensity: &CarbonIntensity<T>) -> T {
    emissions_at(kwh, intensity.g_per_kwh)
}

pub fn emissions_at<T: Scalar>(kwh: T, g_per_kwh: T) -> T {
    kwh * g_per_kwh / T::lit(1000.0)
}

pub fn to_car_km<T: Scalar>(kg_co2eq: T, car_factor: T) -> Result<T, AccountingError> {
    if !(car_factor > T::zero()) || !car_factor.is_finite() {
        return Err(AccountingError::InvalidFactor(car_factor.as_f64()));
    }
    Ok(kg_co2eq / car_factor)
}

pub fn to_person_years<T: Scalar>(kg_co2eq: T, per_capita_kg: T) -> Result<T, AccountingError> {
    if !(per_capita_kg > T::zero()) || !per_capita_kg.is_finite() {
        return Err(AccountingError::InvalidPerCapita(per_capita_kg.as_f64()));
    }
    Ok(kg_co2eq / per_capita_kg)
}

/// "about 27 people": person-years rounded to the nearest whole person.
pub fn people_phrase<T: Scalar>(person_years: T) -> String {
    let people = person_years.round().as_f64() as i64;
    let noun = if people == 1 { "person" } else { "people" };
    format!("about {people} {noun}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEstimate<T> {
    pub n_papers: u64,
    pub k_folds: u64,
    pub per_fold_km: T,
    pub acceptance_ratio: T,
    pub total_km: T,
}

/// Same extrapolation as [`AggregateEstimate`] in kg CO2eq instead of km.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateEmissions<T> {
    pub n_papers: u64,
    pub k_folds: u64,
    pub per_fold_kg: T,
    pub acceptance_ratio: T,
    pub total_kg: T,
}

fn aggregate<T: Scalar>(
    n_papers: u64,
    k_folds: u64,
    per_fold: T,
    acceptance_ratio: T,
) -> Result<T, AccountingError> {
    if n_papers < 1 {
        return Err(AccountingError::InvalidCount { name: "n_papers" });
    }
    if k_folds < 1 {
        return Err(AccountingError::InvalidCount { name: "k_folds" });
    }
    if !(acceptance_ratio > T::zero() && acceptance_ratio <= T::one()) {
        return Err(AccountingError::InvalidAcceptance(
            acceptance_ratio.as_f64(),
        ));
    }
    check_quantity("per_fold", per_fold)?;
    let runs = T::from_u64(n_papers).unwrap_or_else(T::infinity)
        * T::from_u64(k_folds).unwrap_or_else(T::infinity);
    Ok(runs * per_fold / acceptance_ratio)
}

/// Community-wide car distance: `N * K * per_fold_km / acceptance_ratio`.
pub fn aggregate_estimate<T: Scalar>(
    n_papers: u64,
    k_folds: u64,
    per_fold_km: T,
    acceptance_ratio: T,
) -> Result<AggregateEstimate<T>, AccountingError> {
    Ok(AggregateEstimate {
        n_papers,
        k_folds,
        per_fold_km,
        acceptance_ratio,
        total_km: aggregate(n_papers, k_folds, per_fold_km, acceptance_ratio)?,
    })
}

pub fn aggregate_emissions<T: Scalar>(
    n_papers: u64,
    k_folds: u64,
    per_fold_kg: T,
    acceptance_ratio: T,
) -> Result<AggregateEmissions<T>, AccountingError> {
    Ok(AggregateEmissions {
        n_papers,
        k_folds,
        per_fold_kg,
        acceptance_ratio,
        total_kg: aggregate(n_papers, k_folds, per_fold_kg, acceptance_ratio)?,
    })
}

fn check_quantity<T: Scalar>(name: &'static str, value: T) -> Result<(), AccountingError> {
    if value >= T::zero() && value.is_finite() {
        Ok(())
    } else {
        Err(AccountingError::InvalidQuantity {
            name,
            value: value.as_f64(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionsReport<T> {
    pub kwh: T,
    pub region: String,
    pub g_per_kwh: T,
    pub kg_co2eq: T,
    pub km_car: T,
    pub car_factor: T,
    pub person_years: T,
    pub per_capita_kg: T,
    pub statement: String,
}

impl<T: Scalar> EmissionsReport<T> {
    pub fn new(
        kwh: T,
        intensity: &CarbonIntensity<T>,
        car_factor: T,
        per_capita_kg: T,
    ) -> Result<Self, AccountingError> {
        check_quantity("kwh", kwh)?;
        let kg_co2eq = emissions(kwh, intensity);
        let mut report = Self {
            kwh,
            region: intensity.region.clone(),
            g_per_kwh: intensity.g_per_kwh,
            kg_co2eq,
            km_car: to_car_km(kg_co2eq, car_factor)?,
            car_factor,
            person_years: to_person_years(kg_co2eq, per_capita_kg)?,
            per_capita_kg,
            statement: String::new(),
        };
        report.statement = render_statement(&report);
        Ok(report)
    }

    /// Zero intensity makes every equivalent vanish; worth a warning.
    pub fn is_suspicious(&self) -> bool {
        self.g_per_kwh == T::zero()
    }

    /// JSON mirror of the report. Computed quantities are rounded to three
    /// decimals; configured inputs are emitted as given.
    pub fn document(&self) -> ReportDocument {
        ReportDocument {
            kwh: round3(self.kwh.as_f64()),
            region: self.region.clone(),
            g_per_kwh: self.g_per_kwh.as_f64(),
            kg_co2eq: round3(self.kg_co2eq.as_f64()),
            km_car: round3(self.km_car.as_f64()),
            car_factor: self.car_factor.as_f64(),
            person_years: round3(self.person_years.as_f64()),
            per_capita_kg: self.per_capita_kg.as_f64(),
            statement: self.statement.clone(),
        }
    }

    /// Statement followed by a small table and the per-capita comparison.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.statement);
        out.push_str("\n\n");
        let rows = [
            ("energy (kWh)", format!("{:.3}", self.kwh)),
            ("region", self.region.clone()),
            ("intensity (gCO2/kWh)", format!("{:.1}", self.g_per_kwh)),
            ("emissions (kgCO2eq)", format!("{:.3}", self.kg_co2eq)),
            ("car distance (km)", format!("{:.3}", self.km_car)),
            ("car factor (kgCO2/km)", format!("{}", self.car_factor)),
            ("person-years", format!("{:.3}", self.person_years)),
        ];
        for (label, value) in rows {
            out.push_str(&format!("  {label:<24}{value:>14}\n"));
        }
        out.push_str(&format!(
            "\nThis equals the annual carbon footprint of {} at {} kgCO2eq per person-year.\n",
            people_phrase(self.person_years),
            self.per_capita_kg
        ));
        if self.is_suspicious() {
            out.push_str(
                "warning: carbon intensity is zero; emissions are likely under-reported\n",
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub kwh: f64,
    pub region: String,
    pub g_per_kwh: f64,
    pub kg_co2eq: f64,
    pub km_car: f64,
    pub car_factor: f64,
    pub person_years: f64,
    pub per_capita_kg: f64,
    pub statement: String,
}

pub(crate) fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

const STATEMENT_PARTS: [&str; 4] = [
    "The training of models in this work is estimated to use ",
    " kWh of electricity contributing to ",
    " kg of CO2eq. This is equivalent to ",
    " km travelled by car.",
];

pub fn render_statement<T: Scalar>(report: &EmissionsReport<T>) -> String {
    statement_for(report.kwh, report.kg_co2eq, report.km_car)
}

pub fn statement_for<T: Scalar>(kwh: T, kg_co2eq: T, km_car: T) -> String {
    let [a, b, c, d] = STATEMENT_PARTS;
    format!(
        "{a}{:.3}{b}{:.3}{c}{:.3}{d}",
        kwh.as_f64(),
        kg_co2eq.as_f64(),
        km_car.as_f64()
    )
}

/// Recovers `(kwh, kg_co2eq, km_car)` from a rendered statement.
pub fn parse_statement(text: &str) -> Option<(f64, f64, f64)> {
    let [a, b, c, d] = STATEMENT_PARTS;
    let rest = text.trim().strip_prefix(a)?;
    let (kwh, rest) = rest.split_once(b)?;
    let (kg, rest) = rest.split_once(c)?;
    let km = rest.strip_suffix(d)?;
    Some((kwh.parse().ok()?, kg.parse().ok()?, km.parse().ok()?))
}
