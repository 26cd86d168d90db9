//! Solved equilibrium objects.

use super::types::{PerCouple, PerPerson, SkillType};
use serde::{Deserialize, Serialize};

/// Marital choice probabilities of one person type.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChoiceProbs {
    pub spouse_h: f64,
    pub spouse_l: f64,
    pub single: f64,
}

impl ChoiceProbs {
    pub fn spouse(&self, s: SkillType) -> f64 {
        match s {
            SkillType::H => self.spouse_h,
            SkillType::L => self.spouse_l,
        }
    }

    pub fn married(&self) -> f64 {
        self.spouse_h + self.spouse_l
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchingTable {
    pub couples: PerCouple<f64>,
    pub singles: PerPerson<f64>,
    pub choice_probs: PerPerson<ChoiceProbs>,
}

/// Components of a type's systematic location value, before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CityValueComponents {
    pub log_wage: f64,
    pub rent_term: f64,
    pub marital_surplus: f64,
    pub amenity_obs_term: f64,
    pub amenity_unobs: f64,
    /// Sum of components divided by the location taste scale.
    pub scaled_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityState {
    pub city_id: String,
    pub wage_h: f64,
    pub wage_l: f64,
    pub rent: f64,
    /// Wife-oriented transfers; husbands receive the negation.
    pub transfers: PerCouple<f64>,
    /// Couples whose sub-market is empty, leaving the transfer undefined.
    pub undefined_transfers: PerCouple<bool>,
    pub populations: PerPerson<f64>,
    pub matching: MatchingTable,
    pub effective_labor_h: f64,
    pub effective_labor_l: f64,
    pub income: f64,
    pub housing_quantity: f64,
    pub location_probs: PerPerson<f64>,
    pub inclusive_value: PerPerson<f64>,
    pub marital_surplus: PerPerson<f64>,
    pub values: PerPerson<CityValueComponents>,
}

impl CityState {
    pub fn skill_price(&self, s: SkillType) -> f64 {
        match s {
            SkillType::H => self.wage_h,
            SkillType::L => self.wage_l,
        }
    }

    pub fn degenerate(&self) -> bool {
        self.undefined_transfers.values().any(|&b| b)
    }
}

/// Maximum relative residual of each equilibrium block.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub labor: f64,
    pub housing: f64,
    pub marriage: f64,
    pub location: f64,
    pub population: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.labor
            .max(self.housing)
            .max(self.marriage)
            .max(self.location)
            .max(self.population)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub family: String,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub period_label: String,
    pub cities: Vec<CityState>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default = "yes")]
    pub marriage_feasible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

fn yes() -> bool {
    true
}

impl EquilibriumState {
    pub fn national_population(&self) -> PerPerson<f64> {
        let mut out = PerPerson::splat(0.0);
        for c in &self.cities {
            for (p, &n) in c.populations.iter() {
                out[p] += n;
            }
        }
        out
    }
}
