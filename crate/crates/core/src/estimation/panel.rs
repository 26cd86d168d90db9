//! City-period panel of observed aggregates.

use crate::error::{invalid, Result};
use crate::model::{PerCouple, PerPerson, PersonType, SkillType, Violation};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub city_id: String,
    pub period: i32,
    pub populations: PerPerson<f64>,
    /// Mean wage of singles and of married people; absent for empty cells.
    pub wage_single: PerPerson<Option<f64>>,
    pub wage_married: PerPerson<Option<f64>>,
    pub rent: f64,
    pub couples: PerCouple<f64>,
    pub singles: PerPerson<f64>,
    pub amenity_obs: f64,
    pub chi_geo: f64,
    pub chi_reg: f64,
}

impl PanelRow {
    pub fn married(&self, p: PersonType) -> f64 {
        self.couples.involving(p)
    }

    /// Skill price, read off the single-male wage.
    pub fn skill_price(&self, s: SkillType) -> Result<f64> {
        self.wage_single[PersonType::new(crate::model::Gender::M, s)]
            .filter(|w| *w > 0.0)
            .ok_or_else(|| {
                invalid(format!(
                    "city {} period {}: single male {} wage missing",
                    self.city_id,
                    self.period,
                    s.label()
                ))
            })
    }

    fn wage_bill(&self, p: PersonType) -> Result<f64> {
        let mut bill = 0.0;
        for (mass, wage, what) in [
            (self.singles[p], self.wage_single[p], "single"),
            (self.married(p), self.wage_married[p], "married"),
        ] {
            if mass > 0.0 {
                let w = wage.ok_or_else(|| {
                    invalid(format!(
                        "city {} period {}: {what} wage of {p} missing for a non-empty cell",
                        self.city_id, self.period
                    ))
                })?;
                bill += mass * w;
            }
        }
        Ok(bill)
    }

    /// Total wage income of residents.
    pub fn income(&self) -> Result<f64> {
        PersonType::ALL.iter().map(|&p| self.wage_bill(p)).sum()
    }

    /// Efficiency units of a skill group, measured as its wage bill over the price.
    pub fn effective_labor(&self, s: SkillType) -> Result<f64> {
        let price = self.skill_price(s)?;
        let bill: f64 = PersonType::ALL
            .iter()
            .filter(|p| p.skill == s)
            .map(|&p| self.wage_bill(p))
            .sum::<Result<f64>>()?;
        Ok(bill / price)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryRow {
    pub city_id: String,
    pub period: i32,
    pub industry_id: String,
    pub emp_h: f64,
    pub emp_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NationalWageRow {
    pub industry_id: String,
    pub period: i32,
    pub wage_h: f64,
    pub wage_l: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CityPanel {
    pub rows: Vec<PanelRow>,
    pub industry: Vec<IndustryRow>,
    pub national_wages: Vec<NationalWageRow>,
}

impl CityPanel {
    pub fn periods(&self) -> Vec<i32> {
        let s: BTreeSet<i32> = self.rows.iter().map(|r| r.period).collect();
        s.into_iter().collect()
    }

    pub fn cities(&self) -> Vec<String> {
        let s: BTreeSet<&str> = self.rows.iter().map(|r| r.city_id.as_str()).collect();
        s.into_iter().map(String::from).collect()
    }

    pub fn index(&self) -> BTreeMap<(String, i32), &PanelRow> {
        self.rows
            .iter()
            .map(|r| ((r.city_id.clone(), r.period), r))
            .collect()
    }

    /// Sorts rows by (period, city) so the panel has one canonical layout.
    pub fn canonicalize(&mut self) {
        self.rows
            .sort_by(|a, b| (a.period, &a.city_id).cmp(&(b.period, &b.city_id)));
        self.industry.sort_by(|a, b| {
            (a.period, &a.city_id, &a.industry_id).cmp(&(b.period, &b.city_id, &b.industry_id))
        });
        self.national_wages
            .sort_by(|a, b| (a.period, &a.industry_id).cmp(&(b.period, &b.industry_id)));
    }

    pub fn validate(&self, base_period: Option<i32>) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |city: Option<&str>, field: &str, msg: String| {
            out.push(Violation {
                city_id: city.map(String::from),
                field: field.into(),
                message: msg,
            })
        };
        let periods = self.periods();
        if let Some(b) = base_period {
            if !periods.contains(&b) {
                push(
                    None,
                    "base_period",
                    format!("base period {b} is absent from the panel; set --base-period"),
                );
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            let c = Some(r.city_id.as_str());
            if !seen.insert((r.city_id.clone(), r.period)) {
                push(c, "period", format!("duplicate row for period {}", r.period));
            }
            for (p, &n) in r.populations.iter() {
                if !(n >= 0.0 && n.is_finite()) {
                    push(c, &format!("pop_{p}"), format!("must be non-negative, got {n}"));
                }
                if !(r.singles[p] >= 0.0) {
                    push(c, &format!("single_{p}"), "must be non-negative".into());
                }
                if r.singles[p] > n * (1.0 + 1e-9) {
                    push(c, &format!("single_{p}"), format!("exceeds population {n}"));
                }
            }
            for (k, &m) in r.couples.iter() {
                let limit = r.populations[k.husband_type()].min(r.populations[k.wife_type()]);
                if !(m >= 0.0) {
                    push(c, &format!("mar_{k}"), format!("must be non-negative, got {m}"));
                } else if m > limit * (1.0 + 1e-9) {
                    push(
                        c,
                        &format!("mar_{k}"),
                        format!("{m} couples exceed min(male, female population) = {limit}"),
                    );
                }
            }
            if !(r.rent > 0.0) {
                push(c, "rent", format!("must be positive, got {}", r.rent));
            }
        }
        let cities = self.cities();
        for t in &periods {
            for c in &cities {
                if !seen.contains(&(c.clone(), *t)) {
                    push(Some(c), "period", format!("no row for period {t}"));
                }
            }
        }
        let city_set: BTreeSet<&str> = cities.iter().map(String::as_str).collect();
        for r in &self.industry {
            if !city_set.contains(r.city_id.as_str()) {
                push(Some(&r.city_id), "industry", "city absent from the core panel".into());
            }
            if !(r.emp_h >= 0.0 && r.emp_l >= 0.0) {
                push(Some(&r.city_id), "industry", "employment must be non-negative".into());
            }
        }
        for r in &self.national_wages {
            if !(r.wage_h > 0.0 && r.wage_l > 0.0) {
                push(None, "national_wages", format!("industry {} wages must be positive", r.industry_id));
            }
        }
        out
    }
}
