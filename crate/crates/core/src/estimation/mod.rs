//! Parameter recovery from a city panel.

pub mod bartik;
pub mod demand;
pub mod iv;
pub mod location;
pub mod marriage_gmm;
pub mod panel;

pub use bartik::{bartik_shocks, BartikOptions, BartikShock};
pub use demand::{
    estimate_housing_supply, estimate_labor_demand, recover_technology, HousingSupplyFit,
    LaborDemandFit, TechnologyEstimate,
};
pub use iv::{ols, two_sls, IvFit};
pub use location::{estimate_location_choice, LocationFit, LocationOptions};
pub use marriage_gmm::{
    calibrate_wage_gaps, estimate_marriage, marriage_identification, marriage_moments,
    marriage_objective, MarriageEstimates, MarriageOptions, WageGapCalibration, Weighting,
    ZeroCellPolicy,
};
pub use panel::{CityPanel, IndustryRow, NationalWageRow, PanelRow};

use crate::error::{invalid, Result};
use crate::model::{Gender, PersonType, SkillType};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationOptions {
    /// Period that differences are taken against; defaults to the earliest.
    pub base_period: Option<i32>,
    pub zeta: f64,
    pub bartik: BartikOptions,
    pub marriage: MarriageOptions,
    pub location: LocationOptions,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            base_period: None,
            zeta: 0.62,
            bartik: BartikOptions::default(),
            marriage: MarriageOptions::default(),
            location: LocationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub base_period: i32,
    pub bartik: Vec<BartikShock>,
    pub labor: LaborDemandFit,
    /// Empty when the labor demand estimate is on the boundary.
    pub technology: Vec<TechnologyEstimate>,
    pub housing: HousingSupplyFit,
    pub marriage: MarriageEstimates,
    pub location: LocationFit,
    pub wage_gaps: Vec<WageGapCalibration>,
}

pub fn validated(panel: &CityPanel, base_period: Option<i32>) -> Result<(CityPanel, i32)> {
    let mut p = panel.clone();
    p.canonicalize();
    let violations = p.validate(base_period);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(invalid(format!("panel validation failed:\n  {}", text.join("\n  "))));
    }
    let periods = p.periods();
    if periods.len() < 2 {
        return Err(invalid("differenced estimators need at least two periods"));
    }
    let base = base_period.unwrap_or(periods[0]);
    Ok((p, base))
}

pub fn estimate_all(panel: &CityPanel, opts: &EstimationOptions) -> Result<Estimates> {
    let (panel, base) = validated(panel, opts.base_period)?;
    let shocks = bartik_shocks(&panel, base, opts.bartik)?;
    let labor = estimate_labor_demand(&panel, &shocks, base)?;
    let technology = if labor.boundary {
        Vec::new()
    } else {
        recover_technology(&panel, labor.rho)?
    };
    let housing = estimate_housing_supply(&panel, &shocks, base, opts.zeta)?;
    let marriage = estimate_marriage(&panel, &opts.marriage)?;
    let location_opts = LocationOptions {
        zeta: opts.zeta,
        ..opts.location.clone()
    };
    let location = estimate_location_choice(&panel, &shocks, base, marriage.sigma_eps, &location_opts)?;
    let wage_gaps = calibrate_wage_gaps(&panel)?;
    Ok(Estimates {
        base_period: base,
        bartik: shocks,
        labor,
        technology,
        housing,
        marriage,
        location,
        wage_gaps,
    })
}

/// One row of the headline parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub parameter: String,
    pub estimate: f64,
    pub se: f64,
}

pub fn parameter_table(est: &Estimates) -> Vec<ParameterRow> {
    let row = |name: &str, estimate: f64, se: f64| ParameterRow {
        parameter: name.into(),
        estimate,
        se,
    };
    vec![
        row("rho", est.labor.rho, est.labor.rho_se),
        row("psi0", est.housing.psi[0], est.housing.psi_se[0]),
        row("psi1", est.housing.psi[1], est.housing.psi_se[1]),
        row("psi2", est.housing.psi[2], est.housing.psi_se[2]),
        row("sigma_eps", est.marriage.sigma_eps, est.marriage.sigma_eps_se),
        row("sigma_nu", est.location.sigma_nu, est.location.sigma_nu_se),
        row("eta", est.location.eta, est.location.eta_se),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitRow {
    pub period: i32,
    pub gender: Gender,
    pub own_skill: SkillType,
    pub spouse_skill: SkillType,
    pub mu: f64,
    pub se: f64,
}

pub fn benefit_table(est: &MarriageEstimates) -> Vec<BenefitRow> {
    let mut out = Vec::new();
    for b in &est.mu {
        for p in PersonType::ALL {
            for s in SkillType::ALL {
                out.push(BenefitRow {
                    period: b.period,
                    gender: p.gender,
                    own_skill: p.skill,
                    spouse_skill: s,
                    mu: b.mu[p][s],
                    se: b.se[p][s],
                });
            }
        }
    }
    out
}
