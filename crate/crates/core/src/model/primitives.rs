//! Economy primitives: technology, housing, preferences and cities.

use super::types::{CoupleType, Gender, PerPerson, PerSkill, PersonType, SkillType};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Preference and wage-shifter parameters for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceParams {
    /// Scale of marital taste shocks.
    pub sigma_eps: f64,
    /// Scale of location taste shocks.
    pub sigma_nu: f64,
    /// Weight on the observed amenity index.
    pub eta: f64,
    /// Housing expenditure share.
    pub zeta: f64,
    /// Household scale economy; couples divide income by `1 + chi`.
    pub chi: f64,
    /// Nonpecuniary marital benefit, indexed by own type then spouse skill.
    pub mu: PerPerson<PerSkill<f64>>,
    /// Female efficiency-unit shifter by skill.
    pub phi: PerSkill<f64>,
    /// Additional shifter for married females by skill.
    pub delta: PerSkill<f64>,
}

impl PreferenceParams {
    /// Nonpecuniary benefit that a member of `gender` draws from couple `c`.
    pub fn mu_for(&self, couple: CoupleType, gender: Gender) -> f64 {
        let own = couple.member(gender);
        let spouse_skill = match gender {
            Gender::M => couple.wife,
            Gender::F => couple.husband,
        };
        self.mu[own][spouse_skill]
    }

    /// Nonpecuniary component of the marital surplus core.
    pub fn mu_core(&self) -> f64 {
        let m = &self.mu;
        (m.mh.h + m.fh.h) + (m.ml.l + m.fl.l) - (m.mh.l + m.fl.h) - (m.ml.h + m.fh.l)
    }

    /// Benchmark values estimated for 1980, 1990 or 2000.
    pub fn benchmark(period: BenchmarkPeriod) -> Self {
        PreferenceParams {
            sigma_eps: 2.728,
            sigma_nu: 7.072,
            eta: 0.085,
            zeta: 0.62,
            chi: 0.7,
            mu: benchmark_mu(period),
            phi: PerSkill { h: -0.30, l: -0.35 },
            delta: PerSkill { h: -0.20, l: -0.30 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchmarkPeriod {
    Y1980,
    Y1990,
    Y2000,
}

impl BenchmarkPeriod {
    pub const ALL: [BenchmarkPeriod; 3] = [Self::Y1980, Self::Y1990, Self::Y2000];

    pub fn year(self) -> i32 {
        match self {
            Self::Y1980 => 1980,
            Self::Y1990 => 1990,
            Self::Y2000 => 2000,
        }
    }

    fn column(self) -> usize {
        match self {
            Self::Y1980 => 0,
            Self::Y1990 => 1,
            Self::Y2000 => 2,
        }
    }
}

/// Estimated nonpecuniary marital benefits; rows MH, ML, FH, FL, columns by
/// period for a college spouse then a non-college spouse.
const MU_TABLE: [[[f64; 3]; 2]; 4] = [
    [[0.558, 0.478, 0.445], [0.663, 0.556, 0.525]],
    [[0.101, -0.100, -0.088], [0.832, 0.560, 0.555]],
    [[-0.110, -0.075, 0.026], [-0.132, 0.103, 0.196]],
    [[-0.400, -0.474, -0.534], [0.204, 0.287, 0.201]],
];

pub fn benchmark_mu(period: BenchmarkPeriod) -> PerPerson<PerSkill<f64>> {
    let col = period.column();
    PerPerson::from_fn(|p| {
        let row = &MU_TABLE[p.index()];
        PerSkill {
            h: row[0][col],
            l: row[1][col],
        }
    })
}

/// Housing supply elasticity split into a base and land-index loadings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HousingElasticityParams {
    pub psi0: f64,
    pub psi1: f64,
    pub psi2: f64,
}

impl HousingElasticityParams {
    pub const BENCHMARK: HousingElasticityParams = HousingElasticityParams {
        psi0: -0.001,
        psi1: 0.015,
        psi2: 0.051,
    };

    pub fn elasticity(&self, land_unavail: f64, land_reg: f64) -> f64 {
        self.psi0 + self.psi1 * land_unavail.exp() + self.psi2 * land_reg.exp()
    }
}

pub const BENCHMARK_RHO: f64 = 0.577;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityPrimitives {
    pub city_id: String,
    /// Hicks-neutral productivity.
    pub productivity: f64,
    /// CES share on college labor, strictly inside (0, 1).
    pub skill_share: f64,
    pub construction_cost: f64,
    /// Geographic land-unavailability index.
    pub land_unavail: f64,
    /// Regulatory land-use index.
    pub land_reg: f64,
    pub amenity_obs: f64,
    /// Type-specific unobserved amenity value.
    pub amenity_unobs: PerPerson<f64>,
    /// Common rent shifter.
    pub interest_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyPrimitives {
    pub period_label: String,
    pub cities: Vec<CityPrimitives>,
    pub national_population: PerPerson<f64>,
    pub tech_rho: f64,
    pub housing: HousingElasticityParams,
    pub prefs: PreferenceParams,
}

impl EconomyPrimitives {
    /// Sorts cities lexicographically by id, the canonical city order.
    pub fn canonicalize(&mut self) {
        self.cities.sort_by(|a, b| a.city_id.cmp(&b.city_id));
    }

    pub fn city_index(&self, id: &str) -> Option<usize> {
        self.cities.iter().position(|c| c.city_id == id)
    }
}

/// Canonical city order for a list of ids.
pub fn canonical_indices(ids: &[&str]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub city_id: Option<String>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.city_id {
            Some(c) => write!(f, "city {c}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

struct Checker {
    out: Vec<Violation>,
    city: Option<String>,
}

impl Checker {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.out.push(Violation {
            city_id: self.city.clone(),
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn finite(&mut self, field: &str, v: f64) -> bool {
        if !v.is_finite() {
            self.push(field, format!("must be finite, got {v}"));
            return false;
        }
        true
    }

    fn positive(&mut self, field: &str, v: f64) {
        if self.finite(field, v) && v <= 0.0 {
            self.push(field, format!("must be positive, got {v}"));
        }
    }
}

/// Collects every violation instead of stopping at the first one.
pub fn validate_economy(econ: &EconomyPrimitives) -> Vec<Violation> {
    let mut ck = Checker {
        out: Vec::new(),
        city: None,
    };
    if econ.cities.is_empty() {
        ck.push("cities", "at least one city is required");
    }
    let mut seen = HashSet::new();
    for c in &econ.cities {
        if !seen.insert(c.city_id.as_str()) {
            ck.push("city_id", format!("duplicate city id {:?}", c.city_id));
        }
    }

    let rho = econ.tech_rho;
    if ck.finite("tech_rho", rho) {
        if rho == 0.0 {
            ck.push("tech_rho", "Cobb-Douglas limit rho = 0 is not supported");
        } else if rho >= 1.0 {
            ck.push("tech_rho", format!("must be below 1, got {rho}"));
        }
    }
    let p = &econ.prefs;
    ck.positive("sigma_eps", p.sigma_eps);
    ck.positive("sigma_nu", p.sigma_nu);
    ck.finite("eta", p.eta);
    if ck.finite("zeta", p.zeta) && !(p.zeta > 0.0 && p.zeta < 1.0) {
        ck.push("zeta", format!("housing share must lie in (0, 1), got {}", p.zeta));
    }
    if ck.finite("chi", p.chi) && !(0.0..=1.0).contains(&p.chi) {
        ck.push("chi", format!("scale economy must lie in [0, 1], got {}", p.chi));
    }
    for pt in PersonType::ALL {
        for s in SkillType::ALL {
            ck.finite(&format!("mu.{}.{}", pt.label(), s.label()), p.mu[pt][s]);
        }
    }
    for s in SkillType::ALL {
        ck.finite(&format!("phi.{}", s.label()), p.phi[s]);
        ck.finite(&format!("delta.{}", s.label()), p.delta[s]);
    }
    for h in [econ.housing.psi0, econ.housing.psi1, econ.housing.psi2] {
        ck.finite("housing", h);
    }
    for (pt, &n) in econ.national_population.iter() {
        let field = format!("national_population.{}", pt.label());
        if ck.finite(&field, n) && n < 0.0 {
            ck.push(&field, format!("must be non-negative, got {n}"));
        }
    }
    if econ.national_population.total() <= 0.0 {
        ck.push("national_population", "total population must be positive");
    }

    for c in &econ.cities {
        ck.city = Some(c.city_id.clone());
        ck.positive("productivity", c.productivity);
        if ck.finite("skill_share", c.skill_share) && !(c.skill_share > 0.0 && c.skill_share < 1.0)
        {
            ck.push(
                "skill_share",
                format!("must lie strictly inside (0, 1), got {}", c.skill_share),
            );
        }
        ck.positive("construction_cost", c.construction_cost);
        ck.positive("interest_rate", c.interest_rate);
        let geo_ok = ck.finite("land_unavail", c.land_unavail);
        let reg_ok = ck.finite("land_reg", c.land_reg);
        if geo_ok && reg_ok {
            let psi = econ.housing.elasticity(c.land_unavail, c.land_reg);
            if psi < 0.0 {
                ck.push(
                    "housing_elasticity",
                    format!("implied supply elasticity {psi} is negative"),
                );
            }
        }
        ck.finite("amenity_obs", c.amenity_obs);
        for (pt, &a) in c.amenity_unobs.iter() {
            ck.finite(&format!("amenity_unobs.{}", pt.label()), a);
        }
    }
    ck.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_core_1980() {
        let p = PreferenceParams::benchmark(BenchmarkPeriod::Y1980);
        // (0.558 - 0.110) + (0.832 + 0.204) - (0.663 - 0.400) - (0.101 - 0.132)
        assert!((p.mu_core() - 1.252).abs() < 1e-12);
    }

    #[test]
    fn mu_lookup_by_couple() {
        let p = PreferenceParams::benchmark(BenchmarkPeriod::Y2000);
        assert_eq!(p.mu_for(CoupleType::HL, Gender::M), 0.525);
        assert_eq!(p.mu_for(CoupleType::HL, Gender::F), -0.534);
        assert_eq!(p.mu_for(CoupleType::LH, Gender::F), 0.196);
    }

    #[test]
    fn elasticity_at_zero_indices() {
        let psi = HousingElasticityParams::BENCHMARK.elasticity(0.0, 0.0);
        assert!((psi - 0.065).abs() < 1e-15);
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        assert_eq!(canonical_indices(&["b", "a", "c"]), vec![1, 0, 2]);
    }
}
