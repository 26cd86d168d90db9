//! Local CES labor demand, efficiency units and housing market clearing.

use crate::error::{domain, inconsistent, Result};
use crate::model::{
    CityPrimitives, Gender, HousingElasticityParams, MatchingTable, PerPerson, PerSkill,
    PersonType, PreferenceParams, SkillType,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaborAggregates {
    pub college: f64,
    pub noncollege: f64,
}

impl LaborAggregates {
    pub fn get(&self, s: SkillType) -> f64 {
        match s {
            SkillType::H => self.college,
            SkillType::L => self.noncollege,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillPrices {
    pub college: f64,
    pub noncollege: f64,
}

impl SkillPrices {
    pub fn get(&self, s: SkillType) -> f64 {
        match s {
            SkillType::H => self.college,
            SkillType::L => self.noncollege,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HousingOutcome {
    pub rent: f64,
    pub quantity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Technology {
    pub productivity: f64,
    pub skill_share: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho == 0.0 {
        return Err(domain("rho = 0 (Cobb-Douglas) is outside the CES domain"));
    }
    if !rho.is_finite() || rho >= 1.0 {
        return Err(domain(format!("rho must be finite and below 1, got {rho}")));
    }
    Ok(())
}

fn bracket(skill_share: f64, rho: f64, labor: LaborAggregates) -> f64 {
    skill_share * labor.college.powf(rho) + (1.0 - skill_share) * labor.noncollege.powf(rho)
}

pub fn ces_output(tech: Technology, rho: f64, labor: LaborAggregates) -> Result<f64> {
    check_rho(rho)?;
    if labor.college < 0.0 || labor.noncollege < 0.0 {
        return Err(domain("labor inputs must be non-negative"));
    }
    if labor.college == 0.0 && labor.noncollege == 0.0 {
        return Err(domain("zero labor in both skill groups"));
    }
    Ok(tech.productivity * bracket(tech.skill_share, rho, labor).powf(1.0 / rho))
}

/// Marginal products of the two labor aggregates.
pub fn skill_wages(tech: Technology, rho: f64, labor: LaborAggregates) -> Result<SkillPrices> {
    check_rho(rho)?;
    if labor.college <= 0.0 || labor.noncollege <= 0.0 {
        return Err(domain(format!(
            "marginal products need positive labor in both skills, got ({}, {})",
            labor.college, labor.noncollege
        )));
    }
    let g = bracket(tech.skill_share, rho, labor);
    let common = tech.productivity * g.powf(1.0 / rho - 1.0);
    Ok(SkillPrices {
        college: common * tech.skill_share * labor.college.powf(rho - 1.0),
        noncollege: common * (1.0 - tech.skill_share) * labor.noncollege.powf(rho - 1.0),
    })
}

/// Efficiency units supplied by one worker; males supply one unit.
pub fn effective_labor_unit(p: PersonType, married: bool, prefs: &PreferenceParams) -> f64 {
    match p.gender {
        Gender::M => 1.0,
        Gender::F => {
            let mut log_unit = prefs.phi[p.skill];
            if married {
                log_unit += prefs.delta[p.skill];
            }
            log_unit.exp()
        }
    }
}

/// Efficiency units for every type, single and married.
pub fn labor_units(prefs: &PreferenceParams) -> (PerPerson<f64>, PerPerson<f64>) {
    (
        PerPerson::from_fn(|p| effective_labor_unit(p, false, prefs)),
        PerPerson::from_fn(|p| effective_labor_unit(p, true, prefs)),
    )
}

/// Married mass of each type implied by a couple table.
pub fn married_mass(matching: &MatchingTable) -> PerPerson<f64> {
    PerPerson::from_fn(|p| matching.couples.involving(p))
}

pub fn aggregate_effective_labor(
    populations: &PerPerson<f64>,
    matching: &MatchingTable,
    prefs: &PreferenceParams,
) -> Result<LaborAggregates> {
    let married = married_mass(matching);
    let (single_unit, married_unit) = labor_units(prefs);
    let mut agg = PerSkill::splat(0.0);
    for p in PersonType::ALL {
        let n = populations[p];
        let m = married[p];
        let s = matching.singles[p];
        if n < 0.0 || m < 0.0 || s < 0.0 {
            return Err(domain(format!("negative mass for type {p}")));
        }
        let scale = n.max(1.0);
        if (s + m - n).abs() > 1e-9 * scale {
            return Err(inconsistent(format!(
                "type {p}: singles {s} + married {m} differ from population {n}"
            )));
        }
        agg[p.skill] += s * single_unit[p] + m * married_unit[p];
    }
    Ok(LaborAggregates {
        college: agg.h,
        noncollege: agg.l,
    })
}

pub fn individual_wage(price: f64, unit: f64) -> f64 {
    price * unit
}

/// Total wage income of residents.
pub fn resident_income(
    prices: SkillPrices,
    matching: &MatchingTable,
    prefs: &PreferenceParams,
) -> f64 {
    let married = married_mass(matching);
    let (single_unit, married_unit) = labor_units(prefs);
    PersonType::ALL
        .iter()
        .map(|&p| {
            let w = prices.get(p.skill);
            matching.singles[p] * individual_wage(w, single_unit[p])
                + married[p] * individual_wage(w, married_unit[p])
        })
        .sum()
}

pub fn housing_demand(income: f64, rent: f64, zeta: f64) -> Result<f64> {
    if rent <= 0.0 || !rent.is_finite() {
        return Err(domain(format!("rent must be positive, got {rent}")));
    }
    if income < 0.0 {
        return Err(domain(format!("income must be non-negative, got {income}")));
    }
    Ok(zeta * income / rent)
}

pub fn supply_elasticity(housing: &HousingElasticityParams, city: &CityPrimitives) -> f64 {
    housing.elasticity(city.land_unavail, city.land_reg)
}

/// Rent on the inverse supply curve at a given quantity.
pub fn supply_rent(
    housing: &HousingElasticityParams,
    city: &CityPrimitives,
    quantity: f64,
) -> Result<f64> {
    if quantity <= 0.0 {
        return Err(domain("housing quantity must be positive"));
    }
    let psi = supply_elasticity(housing, city);
    Ok((city.interest_rate.ln() + city.construction_cost.ln() + psi * quantity.ln()).exp())
}

/// Rent at which housing demand equals supply, in closed form.
pub fn equilibrium_rent(
    income: f64,
    housing: &HousingElasticityParams,
    city: &CityPrimitives,
    zeta: f64,
) -> Result<HousingOutcome> {
    if income <= 0.0 || !income.is_finite() {
        return Err(domain(format!("aggregate income must be positive, got {income}")));
    }
    let psi = supply_elasticity(housing, city);
    if psi <= -1.0 {
        return Err(domain(format!("supply elasticity {psi} leaves no closed form")));
    }
    let log_rent = (city.interest_rate.ln()
        + city.construction_cost.ln()
        + psi * (zeta * income).ln())
        / (1.0 + psi);
    let rent = log_rent.exp();
    Ok(HousingOutcome {
        rent,
        quantity: zeta * income / rent,
    })
}

/// Recovers (productivity, skill share) from observed prices and labor.
pub fn invert_technology(prices: SkillPrices, labor: LaborAggregates, rho: f64) -> Result<Technology> {
    check_rho(rho)?;
    if prices.college <= 0.0 || prices.noncollege <= 0.0 {
        return Err(domain("skill prices must be positive"));
    }
    if labor.college <= 0.0 || labor.noncollege <= 0.0 {
        return Err(domain("labor inputs must be positive"));
    }
    let a = prices.college * labor.college.powf(1.0 - rho);
    let b = prices.noncollege * labor.noncollege.powf(1.0 - rho);
    let bill = prices.college * labor.college + prices.noncollege * labor.noncollege;
    Ok(Technology {
        productivity: (a + b).powf(1.0 / rho) / bill.powf(1.0 / rho - 1.0),
        skill_share: a / (a + b),
    })
}
