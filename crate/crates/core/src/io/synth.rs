//! Synthetic multi-period economies and their noiseless panels.

use super::rng::{streams, StreamRng};
use crate::error::{invalid, Result};
use crate::estimation::{CityPanel, IndustryRow, NationalWageRow, PanelRow};
use crate::labor_housing::labor_units;
use crate::model::{
    BenchmarkPeriod, CityPrimitives, EconomyPrimitives, EquilibriumState, HousingElasticityParams,
    PerPerson, PerSkill, PreferenceParams, SkillType, BENCHMARK_RHO,
};
use crate::spatial_eq::{solve_equilibrium, SolverOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_cities: usize,
    pub n_periods: usize,
    pub first_year: i32,
    pub period_step: i32,
    /// Multiplies the national population shares.
    pub population_scale: f64,
    /// Log standard deviation of productivity across cities.
    pub productivity_spread: f64,
    /// Standard deviation of the college share's logit across cities.
    pub skill_share_spread: f64,
    pub mean_skill_share: f64,
    pub amenity_spread: f64,
    pub unobs_amenity_spread: f64,
    pub construction_cost_spread: f64,
    /// Width of the interval, centered at one half, that land indices are drawn from.
    pub land_index_spread: f64,
    pub n_industries: usize,
    /// Log standard deviation of industry employment weights.
    pub industry_spread: f64,
    /// Mean national wage growth per period by skill.
    pub industry_growth: PerSkill<f64>,
    pub industry_growth_sd: f64,
    /// Response of log productivity to the average shift-share shock.
    pub bartik_loading: f64,
    /// Common change in the college share logit per period.
    pub premium_drift: f64,
    pub amenity_drift_sd: f64,
    /// Growth of the common rent shifter per period.
    pub rent_shifter_growth: f64,
    pub tech_rho: f64,
    pub housing: HousingElasticityParams,
    /// Preferences per period; missing periods reuse the last entry.
    pub prefs: Vec<PreferenceParams>,
    /// National population shares per period; missing periods reuse the last entry.
    pub population_shares: Vec<PerPerson<f64>>,
    pub n_micro_draws: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_cities: 10,
            n_periods: 3,
            first_year: 1980,
            period_step: 10,
            population_scale: 1.0,
            productivity_spread: 0.25,
            skill_share_spread: 0.3,
            mean_skill_share: 0.45,
            amenity_spread: 0.3,
            unobs_amenity_spread: 0.1,
            construction_cost_spread: 0.1,
            land_index_spread: 1.0,
            n_industries: 6,
            industry_spread: 0.8,
            industry_growth: PerSkill { h: 0.10, l: 0.02 },
            industry_growth_sd: 0.08,
            bartik_loading: 1.0,
            premium_drift: 0.15,
            amenity_drift_sd: 0.1,
            rent_shifter_growth: 0.03,
            tech_rho: BENCHMARK_RHO,
            housing: HousingElasticityParams::BENCHMARK,
            prefs: BenchmarkPeriod::ALL.iter().map(|&p| PreferenceParams::benchmark(p)).collect(),
            population_shares: vec![
                PerPerson { mh: 0.10, ml: 0.40, fh: 0.08, fl: 0.42 },
                PerPerson { mh: 0.12, ml: 0.38, fh: 0.11, fl: 0.39 },
                PerPerson { mh: 0.14, ml: 0.36, fh: 0.15, fl: 0.35 },
            ],
            n_micro_draws: 0,
        }
    }
}

impl SyntheticSpec {
    /// Same spec with every cross-city and over-time dispersion set to zero.
    pub fn without_dispersion(mut self) -> Self {
        self.productivity_spread = 0.0;
        self.skill_share_spread = 0.0;
        self.amenity_spread = 0.0;
        self.unobs_amenity_spread = 0.0;
        self.construction_cost_spread = 0.0;
        self.land_index_spread = 0.0;
        self.industry_spread = 0.0;
        self.amenity_drift_sd = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cities < 1 {
            return Err(invalid("n_cities must be at least 1"));
        }
        if self.n_periods < 1 || self.n_industries < 1 {
            return Err(invalid("n_periods and n_industries must be at least 1"));
        }
        let spreads = [
            ("productivity_spread", self.productivity_spread),
            ("skill_share_spread", self.skill_share_spread),
            ("amenity_spread", self.amenity_spread),
            ("unobs_amenity_spread", self.unobs_amenity_spread),
            ("construction_cost_spread", self.construction_cost_spread),
            ("land_index_spread", self.land_index_spread),
            ("industry_spread", self.industry_spread),
            ("industry_growth_sd", self.industry_growth_sd),
            ("amenity_drift_sd", self.amenity_drift_sd),
        ];
        for (name, v) in spreads {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if self.land_index_spread > 1.0 {
            return Err(invalid("land_index_spread must not exceed 1"));
        }
        if !(self.mean_skill_share > 0.0 && self.mean_skill_share < 1.0) {
            return Err(invalid("mean_skill_share must lie strictly between 0 and 1"));
        }
        if self.prefs.is_empty() || self.population_shares.is_empty() {
            return Err(invalid("prefs and population_shares need at least one period"));
        }
        if !(self.population_scale > 0.0) {
            return Err(invalid("population_scale must be positive"));
        }
        Ok(())
    }

    pub fn year(&self, t: usize) -> i32 {
        self.first_year + self.period_step * t as i32
    }
}

/// Base-period industry weights and national industry wages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryStructure {
    pub industry_ids: Vec<String>,
    /// Per city, per skill, weights over industries summing to one.
    pub shares: Vec<PerSkill<Vec<f64>>>,
    /// Per period, per industry, national wage by skill.
    pub wages: Vec<Vec<PerSkill<f64>>>,
}

impl IndustryStructure {
    /// Shift-share shock from national wage growth, without leave-one-out.
    pub fn national_shock(&self, city: usize, t: usize, s: SkillType) -> f64 {
        self.shares[city][s]
            .iter()
            .zip(self.wages[t].iter().zip(&self.wages[0]))
            .map(|(w, (now, base))| w * (now[s].ln() - base[s].ln()))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPeriods {
    pub economies: Vec<EconomyPrimitives>,
    pub industry: IndustryStructure,
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn period_entry<T: Clone>(v: &[T], t: usize) -> T {
    v[t.min(v.len() - 1)].clone()
}

pub fn generate_synthetic_periods(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticPeriods> {
    spec.validate()?;
    let rng = StreamRng::new(seed);
    let n = spec.n_cities;
    let k = spec.n_industries;

    let base: Vec<CityPrimitives> = (0..n)
        .map(|m| {
            let mut d = rng.at(streams::CITY_PRIMITIVES, m as u64, 32);
            let land = |u: f64| 0.5 + spec.land_index_spread * (u - 0.5);
            CityPrimitives {
                city_id: format!("city{m:03}"),
                productivity: (spec.productivity_spread * d.normal()).exp(),
                skill_share: logistic(logit(spec.mean_skill_share) + spec.skill_share_spread * d.normal()),
                construction_cost: (spec.construction_cost_spread * d.normal()).exp(),
                land_unavail: land(d.uniform()),
                land_reg: land(d.uniform()),
                amenity_obs: spec.amenity_spread * d.normal(),
                amenity_unobs: PerPerson::from_fn(|_| spec.unobs_amenity_spread * d.normal()),
                interest_rate: 1.0,
            }
        })
        .collect();

    let shares: Vec<PerSkill<Vec<f64>>> = (0..n)
        .map(|m| {
            let mut d = rng.at(streams::INDUSTRY, m as u64, 4 * k as u64);
            PerSkill::from_fn(|_| {
                let raw: Vec<f64> = (0..k).map(|_| (spec.industry_spread * d.normal()).exp()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|r| r / total).collect()
            })
        })
        .collect();
    let mut wages: Vec<Vec<PerSkill<f64>>> = vec![vec![PerSkill::splat(1.0); k]; spec.n_periods];
    for j in 0..k {
        let mut d = rng.at(streams::INDUSTRY, (n + j) as u64, 4 * spec.n_periods as u64);
        for t in 1..spec.n_periods {
            for s in SkillType::ALL {
                let g = spec.industry_growth[s] + spec.industry_growth_sd * d.normal();
                wages[t][j][s] = wages[t - 1][j][s] * g.exp();
            }
        }
    }
    let industry = IndustryStructure {
        industry_ids: (0..k).map(|j| format!("ind{j:02}")).collect(),
        shares,
        wages,
    };

    let mut amenity_path: Vec<Vec<f64>> = vec![base.iter().map(|c| c.amenity_obs).collect()];
    for t in 1..spec.n_periods {
        let prev = amenity_path[t - 1].clone();
        amenity_path.push(
            (0..n)
                .map(|m| {
                    let mut d = rng.at(streams::PERIOD_DRIFT, (m * spec.n_periods + t) as u64, 2);
                    prev[m] + spec.amenity_drift_sd * d.normal()
                })
                .collect(),
        );
    }

    let economies = (0..spec.n_periods)
        .map(|t| {
            let cities = base
                .iter()
                .enumerate()
                .map(|(m, c)| {
                    let shock = 0.5
                        * (industry.national_shock(m, t, SkillType::H) + industry.national_shock(m, t, SkillType::L));
                    CityPrimitives {
                        productivity: c.productivity * (spec.bartik_loading * shock).exp(),
                        skill_share: logistic(logit(c.skill_share) + spec.premium_drift * t as f64),
                        amenity_obs: amenity_path[t][m],
                        interest_rate: (spec.rent_shifter_growth * t as f64).exp(),
                        ..c.clone()
                    }
                })
                .collect();
            EconomyPrimitives {
                period_label: spec.year(t).to_string(),
                cities,
                national_population: period_entry(&spec.population_shares, t).map(|s| s * spec.population_scale),
                tech_rho: spec.tech_rho,
                housing: spec.housing,
                prefs: period_entry(&spec.prefs, t),
            }
        })
        .collect();
    Ok(SyntheticPeriods { economies, industry })
}

/// Base-period economy of a synthetic spec.
pub fn generate_synthetic_economy(spec: &SyntheticSpec, seed: u64) -> Result<EconomyPrimitives> {
    let mut p = generate_synthetic_periods(&SyntheticSpec { n_periods: 1, ..spec.clone() }, seed)?;
    Ok(p.economies.remove(0))
}

/// Tolerances tight enough that panels built from solved states are exact to
/// near machine precision.
pub fn tight_solver() -> SolverOptions {
    SolverOptions {
        tol_outer: 1e-13,
        tol_inner: 1e-12,
        max_outer: 20_000,
        ..SolverOptions::default()
    }
}

pub fn period_of(label: &str) -> Result<i32> {
    label
        .trim()
        .parse()
        .map_err(|_| invalid(format!("period label '{label}' is not an integer year")))
}

/// Panel row holding exact masses, wages and rents of one solved city.
pub fn analytic_row(econ: &EconomyPrimitives, state: &EquilibriumState, m: usize) -> Result<PanelRow> {
    let c = &state.cities[m];
    let prim = econ
        .cities
        .iter()
        .find(|p| p.city_id == c.city_id)
        .ok_or_else(|| invalid(format!("city {} missing from economy", c.city_id)))?;
    let (single_unit, married_unit) = labor_units(&econ.prefs);
    Ok(PanelRow {
        city_id: c.city_id.clone(),
        period: period_of(&state.period_label)?,
        populations: c.populations,
        wage_single: PerPerson::from_fn(|p| Some(c.skill_price(p.skill) * single_unit[p])),
        wage_married: PerPerson::from_fn(|p| Some(c.skill_price(p.skill) * married_unit[p])),
        rent: c.rent,
        couples: c.matching.couples,
        singles: c.matching.singles,
        amenity_obs: prim.amenity_obs,
        chi_geo: prim.land_unavail,
        chi_reg: prim.land_reg,
    })
}

/// Industry employment by city: base-period weights applied to each period's
/// effective labor. National wage rows come from the structure.
pub fn industry_rows(
    industry: &IndustryStructure,
    economies: &[EconomyPrimitives],
    states: &[EquilibriumState],
) -> Result<(Vec<IndustryRow>, Vec<NationalWageRow>)> {
    let mut emp = Vec::new();
    let mut nat = Vec::new();
    for (t, state) in states.iter().enumerate() {
        let period = period_of(&state.period_label)?;
        for c in &state.cities {
            let m = economies[t]
                .cities
                .iter()
                .position(|p| p.city_id == c.city_id)
                .ok_or_else(|| invalid(format!("city {} missing from economy", c.city_id)))?;
            // generated economies keep the draw order, which is also canonical
            let w = &industry.shares[m];
            for (j, id) in industry.industry_ids.iter().enumerate() {
                emp.push(IndustryRow {
                    city_id: c.city_id.clone(),
                    period,
                    industry_id: id.clone(),
                    emp_h: w.h[j] * c.effective_labor_h,
                    emp_l: w.l[j] * c.effective_labor_l,
                });
            }
        }
        for (j, id) in industry.industry_ids.iter().enumerate() {
            let wj = industry.wages[t][j];
            nat.push(NationalWageRow {
                industry_id: id.clone(),
                period,
                wage_h: wj.h,
                wage_l: wj.l,
            });
        }
    }
    Ok((emp, nat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanel {
    pub economies: Vec<EconomyPrimitives>,
    pub states: Vec<EquilibriumState>,
    pub panel: CityPanel,
}

/// Solves every period and records the equilibria as an exact panel.
pub fn synthetic_panel(periods: &SyntheticPeriods, opts: &SolverOptions) -> Result<SyntheticPanel> {
    let mut states = Vec::with_capacity(periods.economies.len());
    for e in &periods.economies {
        let s = solve_equilibrium(e, opts)?;
        if !s.converged {
            return Err(crate::ModelError::NonConvergence {
                what: format!("synthetic period {}", e.period_label),
                iterations: s.iterations,
                residual: s.residuals.max(),
            });
        }
        states.push(s);
    }
    let mut rows = Vec::new();
    for (e, s) in periods.economies.iter().zip(&states) {
        for m in 0..s.cities.len() {
            rows.push(analytic_row(e, s, m)?);
        }
    }
    let (industry, national_wages) = industry_rows(&periods.industry, &periods.economies, &states)?;
    let mut panel = CityPanel {
        rows,
        industry,
        national_wages,
    };
    panel.canonicalize();
    Ok(SyntheticPanel {
        economies: periods.economies.clone(),
        states,
        panel,
    })
}
