//! Individual-level simulation from explicit taste draws, and aggregation back
//! into city panels.

use super::rng::{streams, StreamRng};
use super::synth::period_of;
use crate::error::{invalid, Result};
use crate::estimation::{CityPanel, PanelRow};
use crate::labor_housing::SkillPrices;
use crate::marriage::{availability, city_wages, scaled_values, CityWages, ScaledValues};
use crate::model::{
    CoupleType, EconomyPrimitives, EquilibriumState, Gender, PerCouple, PerPerson, PerSkill,
    PersonType, SkillType,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRecord {
    pub person_id: u64,
    pub person_type: PersonType,
    pub city_id: String,
    pub married: bool,
    pub spouse_type: Option<PersonType>,
    pub wage: f64,
}

struct CityDraw<'a> {
    city_id: &'a str,
    scaled: PerPerson<f64>,
    wages: CityWages,
    marital: PerPerson<ScaledValues>,
}

fn city_draws<'a>(econ: &EconomyPrimitives, state: &'a EquilibriumState) -> Result<Vec<CityDraw<'a>>> {
    state
        .cities
        .iter()
        .map(|c| {
            let wages = city_wages(
                SkillPrices {
                    college: c.wage_h,
                    noncollege: c.wage_l,
                },
                &econ.prefs,
            );
            let avail = availability(&c.populations);
            let mut marital = PerPerson::splat(ScaledValues {
                single: 0.0,
                spouse: PerSkill::splat(0.0),
                available: PerSkill::splat(false),
            });
            for p in PersonType::ALL {
                let mut v = scaled_values(p, &wages, c.rent, &econ.prefs, &c.transfers, avail[p])?;
                if !state.marriage_feasible {
                    v.available = PerSkill::splat(false);
                }
                marital[p] = v;
            }
            Ok(CityDraw {
                city_id: &c.city_id,
                scaled: c.values.map(|v| v.scaled_value),
                wages,
                marital,
            })
        })
        .collect()
}

/// Index of the largest value plus Gumbel shock among choosable options.
fn argmax_gumbel(values: &[(f64, bool)], draws: &mut super::rng::Draws) -> usize {
    let mut best = (f64::NEG_INFINITY, values.len());
    for (k, &(v, ok)) in values.iter().enumerate() {
        // a draw is consumed for every option so positions stay fixed
        let u = v + draws.gumbel();
        if ok && u > best.0 {
            best = (u, k);
        }
    }
    best.1
}

fn simulate_person(
    cities: &[CityDraw<'_>],
    rng: &StreamRng,
    p: PersonType,
    i: u64,
) -> MicroRecord {
    let m_count = cities.len() as u64;
    let mut loc = rng.at(streams::LOCATION + p.index() as u64, i, m_count);
    let options: Vec<(f64, bool)> = cities.iter().map(|c| (c.scaled[p], true)).collect();
    let m = argmax_gumbel(&options, &mut loc);
    let city = &cities[m];
    let stream = streams::MARRIAGE + (m as u64) * 4 + p.index() as u64;
    let mut mar = rng.at(stream, i, 3);
    let v = &city.marital[p];
    let choice = argmax_gumbel(
        &[(v.spouse.h, v.available.h), (v.spouse.l, v.available.l), (v.single, true)],
        &mut mar,
    );
    let spouse = match choice {
        0 => Some(p.spouse(SkillType::H)),
        1 => Some(p.spouse(SkillType::L)),
        _ => None,
    };
    let wage = if spouse.is_some() { city.wages.married[p] } else { city.wages.single[p] };
    MicroRecord {
        person_id: i,
        person_type: p,
        city_id: city.city_id.to_string(),
        married: spouse.is_some(),
        spouse_type: spouse,
        wage,
    }
}

#[cfg(feature = "parallel")]
fn simulate_type(cities: &[CityDraw<'_>], rng: &StreamRng, p: PersonType, n: u64) -> Vec<MicroRecord> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(|i| simulate_person(cities, rng, p, i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn simulate_type(cities: &[CityDraw<'_>], rng: &StreamRng, p: PersonType, n: u64) -> Vec<MicroRecord> {
    (0..n).map(|i| simulate_person(cities, rng, p, i)).collect()
}

/// Draws `n_per_type` people of each type: a city by Gumbel argmax over scaled
/// location values, then a marital option in that city the same way. Person
/// `i` of type `p` always receives the same draws, so output does not depend
/// on thread count.
pub fn simulate_micro(
    econ: &EconomyPrimitives,
    state: &EquilibriumState,
    n_per_type: u64,
    seed: u64,
) -> Result<Vec<MicroRecord>> {
    if state.cities.is_empty() {
        return Err(invalid("state has no cities"));
    }
    let cities = city_draws(econ, state)?;
    let rng = StreamRng::new(seed);
    let mut out = Vec::with_capacity(4 * n_per_type as usize);
    for p in PersonType::ALL {
        out.extend(simulate_type(&cities, &rng, p, n_per_type));
    }
    Ok(out)
}

/// Empirical frequencies of each type's marital options within one city:
/// (spouse H, spouse L, single) and the number of records.
pub fn marital_frequencies(records: &[MicroRecord], city_id: &str) -> PerPerson<([f64; 3], u64)> {
    let mut counts = PerPerson::splat(([0u64; 3], 0u64));
    for r in records.iter().filter(|r| r.city_id == city_id) {
        let k = match r.spouse_type {
            Some(s) if s.skill == SkillType::H => 0,
            Some(_) => 1,
            None => 2,
        };
        counts[r.person_type].0[k] += 1;
        counts[r.person_type].1 += 1;
    }
    counts.map(|(c, n)| {
        let d = (*n).max(1) as f64;
        ([c[0] as f64 / d, c[1] as f64 / d, c[2] as f64 / d], *n)
    })
}

/// Share of each type's records located in each city, in state order.
pub fn location_frequencies(records: &[MicroRecord], state: &EquilibriumState) -> Vec<PerPerson<f64>> {
    let mut counts = vec![PerPerson::splat(0.0); state.cities.len()];
    let mut totals = PerPerson::splat(0.0);
    for r in records {
        if let Some(m) = state.cities.iter().position(|c| c.city_id == r.city_id) {
            counts[m][r.person_type] += 1.0;
        }
        totals[r.person_type] += 1.0;
    }
    counts
        .into_iter()
        .map(|c| PerPerson::from_fn(|p| if totals[p] > 0.0 { c[p] / totals[p] } else { 0.0 }))
        .collect()
}

/// Aggregates one period's records into panel rows for every city of `econ`.
///
/// Each record stands for national population over the number of records of
/// its type. Couples are the mean of husband- and wife-reported counts. Rents
/// are not carried by records and come from `state`.
pub fn panel_from_micro(
    records: &[MicroRecord],
    econ: &EconomyPrimitives,
    state: &EquilibriumState,
) -> Result<CityPanel> {
    let period = period_of(&state.period_label)?;
    let mut per_type = PerPerson::splat(0u64);
    for r in records {
        per_type[r.person_type] += 1;
    }
    let weight = PerPerson::from_fn(|p| {
        if per_type[p] > 0 {
            econ.national_population[p] / per_type[p] as f64
        } else {
            0.0
        }
    });

    #[derive(Default, Clone)]
    struct Acc {
        pop: PerPerson<f64>,
        single: PerPerson<f64>,
        reported: PerCouple<(f64, f64)>,
        wage_single: PerPerson<(f64, u64)>,
        wage_married: PerPerson<(f64, u64)>,
    }
    let mut acc = vec![Acc::default(); econ.cities.len()];
    for r in records {
        let m = econ
            .city_index(&r.city_id)
            .ok_or_else(|| invalid(format!("record {} names unknown city {}", r.person_id, r.city_id)))?;
        let a = &mut acc[m];
        let p = r.person_type;
        let w = weight[p];
        a.pop[p] += w;
        match r.spouse_type {
            None => {
                a.single[p] += w;
                a.wage_single[p].0 += r.wage;
                a.wage_single[p].1 += 1;
            }
            Some(s) => {
                if s.gender == p.gender {
                    return Err(invalid(format!("record {}: spouse has the same gender", r.person_id)));
                }
                let c = p.couple_with(s.skill);
                match p.gender {
                    Gender::M => a.reported[c].0 += w,
                    Gender::F => a.reported[c].1 += w,
                }
                a.wage_married[p].0 += r.wage;
                a.wage_married[p].1 += 1;
            }
        }
    }

    let mean = |(sum, n): (f64, u64)| (n > 0).then(|| sum / n as f64);
    let mut rows = Vec::with_capacity(econ.cities.len());
    for (city, a) in econ.cities.iter().zip(&acc) {
        let rent = state
            .cities
            .iter()
            .find(|c| c.city_id == city.city_id)
            .map(|c| c.rent)
            .ok_or_else(|| invalid(format!("city {} missing from state", city.city_id)))?;
        rows.push(PanelRow {
            city_id: city.city_id.clone(),
            period,
            populations: a.pop,
            wage_single: PerPerson::from_fn(|p| mean(a.wage_single[p])),
            wage_married: PerPerson::from_fn(|p| mean(a.wage_married[p])),
            rent,
            couples: PerCouple::from_fn(|c: CoupleType| 0.5 * (a.reported[c].0 + a.reported[c].1)),
            singles: a.single,
            amenity_obs: city.amenity_obs,
            chi_geo: city.land_unavail,
            chi_reg: city.land_reg,
        });
    }
    let mut panel = CityPanel {
        rows,
        industry: Vec::new(),
        national_wages: Vec::new(),
    };
    panel.canonicalize();
    Ok(panel)
}
