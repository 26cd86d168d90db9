//! Shift-share labor demand shocks.

use super::panel::CityPanel;
use crate::error::{invalid, Result};
use crate::model::SkillType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BartikOptions {
    /// Remove the city's own contribution from national industry wages.
    pub leave_one_out: bool,
}

impl Default for BartikOptions {
    fn default() -> Self {
        BartikOptions { leave_one_out: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BartikShock {
    pub city_id: String,
    pub period: i32,
    pub college: f64,
    pub noncollege: f64,
}

impl BartikShock {
    pub fn get(&self, s: SkillType) -> f64 {
        match s {
            SkillType::H => self.college,
            SkillType::L => self.noncollege,
        }
    }
}

fn emp(row: &super::panel::IndustryRow, s: SkillType) -> f64 {
    match s {
        SkillType::H => row.emp_h,
        SkillType::L => row.emp_l,
    }
}

fn nat_wage(row: &super::panel::NationalWageRow, s: SkillType) -> f64 {
    match s {
        SkillType::H => row.wage_h,
        SkillType::L => row.wage_l,
    }
}

type Employment = BTreeMap<(i32, String), BTreeMap<String, f64>>;

fn employment(panel: &CityPanel, s: SkillType) -> Employment {
    let mut out: Employment = BTreeMap::new();
    for r in &panel.industry {
        *out.entry((r.period, r.city_id.clone()))
            .or_default()
            .entry(r.industry_id.clone())
            .or_insert(0.0) += emp(r, s);
    }
    out
}

/// Base-period industry shares of each city, keyed by industry.
pub fn base_shares(panel: &CityPanel, s: SkillType, base: i32) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let table = employment(panel, s);
    let mut out = BTreeMap::new();
    for city in panel.cities() {
        let row = table.get(&(base, city.clone())).ok_or_else(|| {
            invalid(format!("city {city}: no industry employment in base period {base}"))
        })?;
        let total: f64 = row.values().sum();
        if total <= 0.0 {
            return Err(invalid(format!(
                "city {city}: zero {} employment in base period {base}",
                s.label()
            )));
        }
        out.insert(city, row.iter().map(|(k, &e)| (k.clone(), e / total)).collect());
    }
    Ok(out)
}

/// National industry wage with the city's own contribution removed.
///
/// The city's industry wage is proxied by the national industry wage times the
/// city's skill price relative to the employment-weighted mean skill price.
fn leave_one_out_wage(national: f64, industry_total: f64, city_emp: f64, relative_price: f64) -> f64 {
    let rest = industry_total - city_emp;
    if rest <= 0.0 {
        return national;
    }
    let w = (industry_total * national - city_emp * national * relative_price) / rest;
    if w > 0.0 {
        w
    } else {
        national
    }
}

pub fn bartik_shocks(panel: &CityPanel, base: i32, opts: BartikOptions) -> Result<Vec<BartikShock>> {
    let periods = panel.periods();
    if !periods.contains(&base) {
        return Err(invalid(format!(
            "base period {base} is absent from the panel; set --base-period"
        )));
    }
    let rows = panel.index();
    let wages: BTreeMap<(i32, String), (f64, f64)> = panel
        .national_wages
        .iter()
        .map(|r| ((r.period, r.industry_id.clone()), (r.wage_h, r.wage_l)))
        .collect();
    let mut per_skill = Vec::new();
    for s in SkillType::ALL {
        let shares = base_shares(panel, s, base)?;
        let table = employment(panel, s);
        // Relative skill price of each city, per period.
        let mut relative: BTreeMap<(i32, String), f64> = BTreeMap::new();
        for &t in &periods {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut prices = Vec::new();
            for city in panel.cities() {
                let e: f64 = table.get(&(t, city.clone())).map_or(0.0, |r| r.values().sum());
                let price = rows.get(&(city.clone(), t)).and_then(|r| r.skill_price(s).ok());
                if let Some(p) = price {
                    num += e * p;
                    den += e;
                }
                prices.push((city, price));
            }
            for (city, price) in prices {
                let rel = match price {
                    Some(p) if den > 0.0 && num > 0.0 => p / (num / den),
                    _ => 1.0,
                };
                relative.insert((t, city), rel);
            }
        }
        let log_wage = |t: i32, city: &str, industry: &str| -> Result<f64> {
            let &(wh, wl) = wages.get(&(t, industry.to_string())).ok_or_else(|| {
                invalid(format!("national wage for industry {industry} missing in period {t}"))
            })?;
            let national = match s {
                SkillType::H => wh,
                SkillType::L => wl,
            };
            if !opts.leave_one_out {
                return Ok(national.ln());
            }
            let emp_t = if table.contains_key(&(t, city.to_string())) { t } else { base };
            let city_emp = table
                .get(&(emp_t, city.to_string()))
                .and_then(|r| r.get(industry))
                .copied()
                .unwrap_or(0.0);
            let total: f64 = table
                .iter()
                .filter(|((p, _), _)| *p == emp_t)
                .filter_map(|(_, r)| r.get(industry))
                .sum();
            let rel = relative.get(&(t, city.to_string())).copied().unwrap_or(1.0);
            Ok(leave_one_out_wage(national, total, city_emp, rel).ln())
        };
        let mut out = BTreeMap::new();
        for (city, weights) in &shares {
            for &t in periods.iter().filter(|&&t| t != base) {
                let mut shock = 0.0;
                for (industry, w) in weights {
                    shock += w * (log_wage(t, city, industry)? - log_wage(base, city, industry)?);
                }
                out.insert((t, city.clone()), shock);
            }
        }
        per_skill.push(out);
    }
    let mut shocks: Vec<BartikShock> = per_skill[0]
        .iter()
        .map(|((t, city), &h)| BartikShock {
            city_id: city.clone(),
            period: *t,
            college: h,
            noncollege: per_skill[1][&(*t, city.clone())],
        })
        .collect();
    shocks.sort_by(|a, b| (a.period, &a.city_id).cmp(&(b.period, &b.city_id)));
    Ok(shocks)
}

/// National log wage growth of one industry between two periods.
pub fn national_growth(panel: &CityPanel, s: SkillType, industry: &str, from: i32, to: i32) -> Option<f64> {
    let find = |t| {
        panel
            .national_wages
            .iter()
            .find(|r| r.period == t && r.industry_id == industry)
            .map(|r| nat_wage(r, s))
    };
    Some(find(to)?.ln() - find(from)?.ln())
}
