//! Spatial equilibrium: location choice across cities with nested local
//! labor, housing and marriage markets.
//!
//! Equilibria need not be unique; the solver reports the fixed point reached
//! from uniform populations and zero transfers.

use crate::error::{inconsistent, invalid, Result};
use crate::labor_housing::{
    aggregate_effective_labor, equilibrium_rent, labor_units, resident_income, skill_wages,
    LaborAggregates, SkillPrices, Technology,
};
use crate::marriage::{
    all_single, availability, city_wages, clear_marriage_market, clearing_residual,
    inclusive_value, matching_from_transfers, person_surplus, scaled_values, ClearingOptions,
    MarketClearing,
};
use crate::model::{
    validate_economy, ChoiceProbs, CityState, CityValueComponents, EconomyPrimitives,
    EquilibriumState, MatchingTable, PerCouple, PerPerson, PersonType, Residuals, TraceRecord,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub damping: f64,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub marriage_feasible: bool,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            damping: 0.5,
            tol_outer: 1e-8,
            tol_inner: 1e-10,
            max_outer: 2000,
            max_inner: 500,
            marriage_feasible: true,
            trace: false,
        }
    }
}

/// Blocks held fixed in a partial solve, one entry per city in canonical order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrozenBlocks {
    pub wages: Option<Vec<(f64, f64)>>,
    pub rents: Option<Vec<f64>>,
    pub populations: Option<Vec<PerPerson<f64>>>,
    pub transfers: Option<Vec<PerCouple<f64>>>,
}

impl FrozenBlocks {
    fn check_lengths(&self, n: usize) -> Result<()> {
        let lens = [
            ("wages", self.wages.as_ref().map(Vec::len)),
            ("rents", self.rents.as_ref().map(Vec::len)),
            ("populations", self.populations.as_ref().map(Vec::len)),
            ("transfers", self.transfers.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if let Some(l) = len {
                if l != n {
                    return Err(invalid(format!(
                        "frozen {name} has {l} entries for {n} cities"
                    )));
                }
            }
        }
        Ok(())
    }

    fn city(&self, m: usize) -> CityFixed {
        CityFixed {
            prices: self.wages.as_ref().map(|w| SkillPrices {
                college: w[m].0,
                noncollege: w[m].1,
            }),
            rent: self.rents.as_ref().map(|r| r[m]),
            transfers: self.transfers.as_ref().map(|t| t[m]),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct CityFixed {
    prices: Option<SkillPrices>,
    rent: Option<f64>,
    transfers: Option<PerCouple<f64>>,
}

fn labor_from_rates(
    populations: &PerPerson<f64>,
    rates: &PerPerson<ChoiceProbs>,
    prefs: &crate::model::PreferenceParams,
) -> LaborAggregates {
    let (single_unit, married_unit) = labor_units(prefs);
    let mut h = 0.0;
    let mut l = 0.0;
    for p in PersonType::ALL {
        let n = populations[p];
        let single = rates[p].single.clamp(0.0, 1.0);
        let units = n * (single * single_unit[p] + (1.0 - single) * married_unit[p]);
        match p.skill {
            crate::model::SkillType::H => h += units,
            crate::model::SkillType::L => l += units,
        }
    }
    LaborAggregates {
        college: h,
        noncollege: l,
    }
}

fn relative_change(a: LaborAggregates, b: LaborAggregates) -> f64 {
    let d = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
    d(a.college, b.college).max(d(a.noncollege, b.noncollege))
}

struct Matched {
    transfers: PerCouple<f64>,
    undefined: PerCouple<bool>,
    matching: MatchingTable,
}

fn match_city(
    econ: &EconomyPrimitives,
    populations: &PerPerson<f64>,
    prices: SkillPrices,
    fixed: &CityFixed,
    opts: &SolverOptions,
) -> Result<Matched> {
    let prefs = &econ.prefs;
    if !opts.marriage_feasible {
        return Ok(Matched {
            transfers: PerCouple::splat(0.0),
            undefined: PerCouple::splat(true),
            matching: all_single(populations),
        });
    }
    let wages = city_wages(prices, prefs);
    let undefined = PerCouple::from_fn(|c| {
        populations[c.husband_type()] <= 0.0 || populations[c.wife_type()] <= 0.0
    });
    if let Some(t) = fixed.transfers {
        let matching = matching_from_transfers(populations, &wages, prefs, &t)?;
        return Ok(Matched {
            transfers: t,
            undefined,
            matching,
        });
    }
    let clearing_opts = ClearingOptions {
        tol: opts.tol_inner,
        ..ClearingOptions::default()
    };
    let MarketClearing {
        transfers,
        undefined,
        matching,
        ..
    } = clear_marriage_market(populations, &wages, prefs, &clearing_opts)?;
    Ok(Matched {
        transfers,
        undefined,
        matching,
    })
}

/// Solves one city's labor, marriage and housing markets at given populations.
fn evaluate_city(
    econ: &EconomyPrimitives,
    m: usize,
    populations: &PerPerson<f64>,
    fixed: &CityFixed,
    opts: &SolverOptions,
    warm: Option<&PerPerson<ChoiceProbs>>,
) -> Result<CityState> {
    let city = &econ.cities[m];
    let prefs = &econ.prefs;
    if populations.total() <= 0.0 {
        return Err(inconsistent(format!("city {} has no residents", city.city_id)));
    }
    let tech = Technology {
        productivity: city.productivity,
        skill_share: city.skill_share,
    };
    let (prices, matched) = match fixed.prices {
        Some(p) => (p, match_city(econ, populations, p, fixed, opts)?),
        None => {
            let start = all_single(populations).choice_probs;
            let mut labor = labor_from_rates(populations, warm.unwrap_or(&start), prefs);
            let mut iter = 0;
            loop {
                iter += 1;
                let prices = skill_wages(tech, econ.tech_rho, labor)?;
                let matched = match_city(econ, populations, prices, fixed, opts)?;
                let next = aggregate_effective_labor(populations, &matched.matching, prefs)?;
                let change = relative_change(labor, next);
                if change < opts.tol_inner * 1e-2 || iter >= opts.max_inner {
                    if change >= opts.tol_inner {
                        return Err(crate::ModelError::NonConvergence {
                            what: format!("wage-matching loop in city {}", city.city_id),
                            iterations: iter,
                            residual: change,
                        });
                    }
                    break (prices, matched);
                }
                labor = next;
            }
        }
    };

    let labor = aggregate_effective_labor(populations, &matched.matching, prefs)?;
    let income = resident_income(prices, &matched.matching, prefs);
    let rent = match fixed.rent {
        Some(r) => r,
        None => equilibrium_rent(income, &econ.housing, city, prefs.zeta)?.rent,
    };
    let wages = city_wages(prices, prefs);
    let avail = availability(populations);
    let mut inclusive = PerPerson::splat(0.0);
    let mut surplus = PerPerson::splat(0.0);
    let mut values = PerPerson::splat(CityValueComponents::default());
    for p in PersonType::ALL {
        let mut v = scaled_values(p, &wages, rent, prefs, &matched.transfers, avail[p])?;
        if !opts.marriage_feasible {
            v.available = crate::model::PerSkill::splat(false);
        }
        inclusive[p] = inclusive_value(&v, prefs.sigma_eps);
        surplus[p] = person_surplus(&v, prefs.sigma_eps);
        let comp = CityValueComponents {
            log_wage: wages.single[p].ln(),
            rent_term: -prefs.zeta * rent.ln(),
            marital_surplus: surplus[p],
            amenity_obs_term: prefs.eta * city.amenity_obs,
            amenity_unobs: city.amenity_unobs[p],
            scaled_value: 0.0,
        };
        let total = comp.log_wage
            + comp.rent_term
            + comp.marital_surplus
            + comp.amenity_obs_term
            + comp.amenity_unobs;
        values[p] = CityValueComponents {
            scaled_value: total / prefs.sigma_nu,
            ..comp
        };
    }
    Ok(CityState {
        city_id: city.city_id.clone(),
        wage_h: prices.college,
        wage_l: prices.noncollege,
        rent,
        transfers: matched.transfers,
        undefined_transfers: matched.undefined,
        populations: *populations,
        matching: matched.matching,
        effective_labor_h: labor.college,
        effective_labor_l: labor.noncollege,
        income,
        housing_quantity: prefs.zeta * income / rent,
        location_probs: PerPerson::splat(0.0),
        inclusive_value: inclusive,
        marital_surplus: surplus,
        values,
    })
}

/// Softmax across cities of each type's scaled location value.
pub fn location_choice_probs(scaled: &[PerPerson<f64>]) -> Vec<PerPerson<f64>> {
    let mut out = vec![PerPerson::splat(0.0); scaled.len()];
    for p in PersonType::ALL {
        let top = scaled.iter().map(|v| v[p]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scaled.iter().map(|v| (v[p] - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (o, w) in out.iter_mut().zip(&weights) {
            o[p] = w / total;
        }
    }
    out
}

#[cfg(feature = "parallel")]
fn map_cities<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_cities<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..n).map(f).collect()
}

/// Returns a canonical copy of the economy and the permutation applied.
fn canonical(econ: &EconomyPrimitives) -> (EconomyPrimitives, Vec<usize>) {
    let ids: Vec<&str> = econ.cities.iter().map(|c| c.city_id.as_str()).collect();
    let order = crate::model::canonical_indices(&ids);
    let mut out = econ.clone();
    out.cities = order.iter().map(|&i| econ.cities[i].clone()).collect();
    (out, order)
}

fn permute<T: Clone>(v: &Option<Vec<T>>, order: &[usize]) -> Option<Vec<T>> {
    v.as_ref().map(|v| order.iter().map(|&i| v[i].clone()).collect())
}

pub fn solve_equilibrium(econ: &EconomyPrimitives, opts: &SolverOptions) -> Result<EquilibriumState> {
    solve_partial(econ, &FrozenBlocks::default(), opts)
}

/// Solves with some blocks held fixed; frozen vectors follow the input city order.
/// A state that stops at the iteration cap is returned with `converged = false`.
pub fn solve_partial(
    econ: &EconomyPrimitives,
    frozen: &FrozenBlocks,
    opts: &SolverOptions,
) -> Result<EquilibriumState> {
    let violations = validate_economy(econ);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(invalid(msgs.join("; ")));
    }
    frozen.check_lengths(econ.cities.len())?;
    let (econ, order) = canonical(econ);
    let frozen = FrozenBlocks {
        wages: permute(&frozen.wages, &order),
        rents: permute(&frozen.rents, &order),
        populations: permute(&frozen.populations, &order),
        transfers: permute(&frozen.transfers, &order),
    };
    let n = econ.cities.len();
    let nat = econ.national_population;
    let mut pops: Vec<PerPerson<f64>> = match &frozen.populations {
        Some(p) => p.clone(),
        None => vec![nat.map(|x| x / n as f64); n],
    };
    let fixed: Vec<CityFixed> = (0..n).map(|m| frozen.city(m)).collect();
    let mut warm: Vec<Option<PerPerson<ChoiceProbs>>> = vec![None; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut cities;
    loop {
        iterations += 1;
        cities = map_cities(n, |m| {
            evaluate_city(&econ, m, &pops[m], &fixed[m], opts, warm[m].as_ref())
        })?;
        let scaled: Vec<PerPerson<f64>> = cities
            .iter()
            .map(|c| c.values.map(|v| v.scaled_value))
            .collect();
        let q = location_choice_probs(&scaled);
        for (c, qm) in cities.iter_mut().zip(&q) {
            c.location_probs = *qm;
        }
        if frozen.populations.is_some() {
            converged = true;
            break;
        }
        let target: Vec<PerPerson<f64>> = q
            .iter()
            .map(|qm| PerPerson::from_fn(|p| qm[p] * nat[p]))
            .collect();
        let resid = location_gap(&pops, &target);
        if opts.trace {
            trace.push(TraceRecord {
                iteration: iterations,
                family: "location".into(),
                max_residual: resid,
            });
        }
        if resid < opts.tol_outer {
            converged = true;
            break;
        }
        if iterations >= opts.max_outer {
            break;
        }
        for (m, c) in cities.iter().enumerate() {
            warm[m] = Some(c.matching.choice_probs);
            let lam = opts.damping;
            pops[m] = PerPerson::from_fn(|p| (1.0 - lam) * pops[m][p] + lam * target[m][p]);
        }
    }
    let mut state = EquilibriumState {
        period_label: econ.period_label.clone(),
        cities,
        residuals: Residuals::default(),
        iterations,
        converged,
        marriage_feasible: opts.marriage_feasible,
        trace,
    };
    state.residuals = equilibrium_residuals(&econ, &state)?;
    Ok(state)
}

fn location_gap(pops: &[PerPerson<f64>], target: &[PerPerson<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, b) in pops.iter().zip(target) {
        for p in PersonType::ALL {
            let scale = a[p].abs().max(b[p].abs());
            if scale > 0.0 {
                worst = worst.max((a[p] - b[p]).abs() / scale);
            }
        }
    }
    worst
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Recomputes every equilibrium condition from the state alone.
pub fn equilibrium_residuals(econ: &EconomyPrimitives, state: &EquilibriumState) -> Result<Residuals> {
    let prefs = &econ.prefs;
    if state.cities.len() != econ.cities.len() {
        return Err(invalid("state and economy have different city counts"));
    }
    let mut r = Residuals::default();
    let mut scaled = Vec::with_capacity(state.cities.len());
    for cs in &state.cities {
        let m = econ
            .city_index(&cs.city_id)
            .ok_or_else(|| invalid(format!("city {} missing from economy", cs.city_id)))?;
        let city = &econ.cities[m];
        let prices = SkillPrices {
            college: cs.wage_h,
            noncollege: cs.wage_l,
        };
        let labor = aggregate_effective_labor(&cs.populations, &cs.matching, prefs)?;
        let tech = Technology {
            productivity: city.productivity,
            skill_share: city.skill_share,
        };
        let mp = skill_wages(tech, econ.tech_rho, labor)?;
        r.labor = r
            .labor
            .max(rel(mp.college, cs.wage_h))
            .max(rel(mp.noncollege, cs.wage_l));

        let income = resident_income(prices, &cs.matching, prefs);
        let fit = equilibrium_rent(income, &econ.housing, city, prefs.zeta)?;
        let demand = prefs.zeta * income / cs.rent;
        r.housing = r
            .housing
            .max(rel(fit.rent, cs.rent))
            .max(rel(demand, cs.housing_quantity));

        let wages = city_wages(prices, prefs);
        if state.marriage_feasible {
            r.marriage = r
                .marriage
                .max(clearing_residual(&cs.populations, &wages, prefs, &cs.transfers)?);
        } else {
            let total = cs.populations.total().max(f64::MIN_POSITIVE);
            r.marriage = r.marriage.max(cs.matching.couples.total() / total);
        }

        let avail = availability(&cs.populations);
        let values = PerPerson::from_fn(|p| {
            let mut v = scaled_values(p, &wages, cs.rent, prefs, &cs.transfers, avail[p])
                .expect("positive wages and rent");
            if !state.marriage_feasible {
                v.available = crate::model::PerSkill::splat(false);
            }
            (inclusive_value(&v, prefs.sigma_eps)
                + prefs.eta * city.amenity_obs
                + city.amenity_unobs[p])
                / prefs.sigma_nu
        });
        scaled.push(values);
    }
    let nat = econ.national_population;
    let q = location_choice_probs(&scaled);
    let pops: Vec<PerPerson<f64>> = state.cities.iter().map(|c| c.populations).collect();
    let target: Vec<PerPerson<f64>> = q
        .iter()
        .map(|qm| PerPerson::from_fn(|p| qm[p] * nat[p]))
        .collect();
    r.location = location_gap(&pops, &target);
    let total = state.national_population();
    for p in PersonType::ALL {
        r.population = r.population.max(rel(total[p], nat[p]));
    }
    Ok(r)
}
