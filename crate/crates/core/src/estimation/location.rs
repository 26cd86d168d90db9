//! Two-step location choice: relative log shares, then an IV regression of their
//! changes on the change in the marriage-adjusted city value.

use super::bartik::BartikShock;
use super::demand::{columns, hcat};
use super::iv::{two_sls, IvFit};
use super::marriage_gmm::ZeroCellPolicy;
use super::panel::{CityPanel, PanelRow};
use crate::error::{invalid, Result};
use crate::model::{PerPerson, PersonType};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocationOptions {
    pub zeta: f64,
    /// Reference city; defaults to the first city in canonical order.
    pub reference_city: Option<String>,
    pub zero_cells: ZeroCellPolicy,
    pub continuity: f64,
}

impl Default for LocationOptions {
    fn default() -> Self {
        LocationOptions {
            zeta: 0.62,
            reference_city: None,
            zero_cells: ZeroCellPolicy::CorrectZeroCells,
            continuity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmenityEstimate {
    pub city_id: String,
    pub period: i32,
    /// Unobserved amenity, demeaned across cities within each type and period.
    pub amenity: PerPerson<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationFit {
    pub sigma_nu: f64,
    pub sigma_nu_se: f64,
    pub eta: f64,
    pub eta_se: f64,
    pub reference_city: String,
    pub fit: IvFit,
    pub amenities: Vec<AmenityEstimate>,
}

/// Single share with the continuity correction applied when needed.
fn single_share(row: &PanelRow, p: PersonType, opts: &LocationOptions) -> Result<f64> {
    let (singles, pop) = (row.singles[p], row.populations[p]);
    if singles > 0.0 && pop > 0.0 && opts.zero_cells != ZeroCellPolicy::Always {
        return Ok(singles / pop);
    }
    if opts.zero_cells == ZeroCellPolicy::Never {
        return Err(invalid(format!(
            "city {} period {}: no single {p} and smoothing disabled",
            row.city_id, row.period
        )));
    }
    Ok((singles + opts.continuity) / (pop + 3.0 * opts.continuity))
}

/// Marriage-adjusted city value of a type: log single wage net of rent, plus the
/// option value of marriage measured by the single share.
pub fn city_value(row: &PanelRow, p: PersonType, sigma_eps: f64, opts: &LocationOptions) -> Result<f64> {
    let wage = row.wage_single[p].filter(|w| *w > 0.0).ok_or_else(|| {
        invalid(format!(
            "city {} period {}: single wage of {p} missing",
            row.city_id, row.period
        ))
    })?;
    Ok(wage.ln() - opts.zeta * row.rent.ln() - sigma_eps * single_share(row, p, opts)?.ln())
}

/// Log location shares of each type, per (city, period).
fn log_shares(panel: &CityPanel, opts: &LocationOptions) -> Result<BTreeMap<(String, i32), PerPerson<f64>>> {
    let mut out = BTreeMap::new();
    for t in panel.periods() {
        let rows: Vec<&PanelRow> = panel.rows.iter().filter(|r| r.period == t).collect();
        let mut logs: Vec<PerPerson<f64>> = vec![PerPerson::splat(0.0); rows.len()];
        for p in PersonType::ALL {
            let any_zero = rows.iter().any(|r| r.populations[p] <= 0.0);
            let add = match (opts.zero_cells, any_zero) {
                (ZeroCellPolicy::Always, _) | (ZeroCellPolicy::CorrectZeroCells, true) => opts.continuity,
                (ZeroCellPolicy::Never, true) => {
                    return Err(invalid(format!(
                        "period {t}: a city has no {p} residents and smoothing is disabled"
                    )))
                }
                _ => 0.0,
            };
            let total: f64 = rows.iter().map(|r| r.populations[p] + add).sum();
            if total <= 0.0 {
                return Err(invalid(format!("period {t}: no {p} residents anywhere")));
            }
            for (i, r) in rows.iter().enumerate() {
                logs[i][p] = ((r.populations[p] + add) / total).ln();
            }
        }
        for (r, l) in rows.iter().zip(logs) {
            out.insert((r.city_id.clone(), t), l);
        }
    }
    Ok(out)
}

pub fn estimate_location_choice(
    panel: &CityPanel,
    shocks: &[BartikShock],
    base: i32,
    sigma_eps: f64,
    opts: &LocationOptions,
) -> Result<LocationFit> {
    let cities = panel.cities();
    let reference = match &opts.reference_city {
        Some(c) if cities.contains(c) => c.clone(),
        Some(c) => return Err(invalid(format!("reference city {c} is not in the panel"))),
        None => cities
            .first()
            .cloned()
            .ok_or_else(|| invalid("empty panel"))?,
    };
    let index = panel.index();
    let shares = log_shares(panel, opts)?;
    let row = |c: &str, t: i32| {
        index
            .get(&(c.to_string(), t))
            .copied()
            .ok_or_else(|| invalid(format!("city {c}: no panel row for period {t}")))
    };
    let relative = |c: &str, t: i32, p: PersonType| shares[&(c.to_string(), t)][p] - shares[&(reference.clone(), t)][p];

    let mut y = Vec::new();
    let mut dv = Vec::new();
    let mut da = Vec::new();
    let mut bh = Vec::new();
    let mut bl = Vec::new();
    let mut groups = Vec::new();
    for shock in shocks.iter().filter(|s| s.city_id != reference) {
        let (r0, r1) = (row(&shock.city_id, base)?, row(&shock.city_id, shock.period)?);
        for p in PersonType::ALL {
            y.push(relative(&shock.city_id, shock.period, p) - relative(&shock.city_id, base, p));
            dv.push(city_value(r1, p, sigma_eps, opts)? - city_value(r0, p, sigma_eps, opts)?);
            da.push(r1.amenity_obs - r0.amenity_obs);
            bh.push(shock.college);
            bl.push(shock.noncollege);
            groups.push((shock.period, p.index()));
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(invalid("location choice needs a non-reference city and two periods"));
    }
    let mut distinct = groups.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let dummies = DMatrix::from_fn(n, distinct.len(), |i, j| f64::from(u8::from(groups[i] == distinct[j])));
    let exog = hcat(&columns(n, &[da]), &dummies);
    let fit = two_sls(&DVector::from_vec(y), &columns(n, &[dv]), &exog, &columns(n, &[bh, bl]))?;
    let (b1, b2) = (fit.coef[0], fit.coef[1]);
    if b1 <= 0.0 {
        return Err(invalid(format!("value coefficient {b1} is not positive")));
    }
    let sigma_nu = 1.0 / b1;
    let eta = b2 / b1;
    let c = &fit.cov;
    let sigma_nu_se = c[0][0].max(0.0).sqrt() / (b1 * b1);
    let g = [-b2 / (b1 * b1), 1.0 / b1];
    let var_eta = g[0] * g[0] * c[0][0] + 2.0 * g[0] * g[1] * c[0][1] + g[1] * g[1] * c[1][1];

    // Level residuals, demeaned across cities, rescaled to utility units.
    let mut amenities = Vec::new();
    for t in panel.periods() {
        let mut level: Vec<(String, PerPerson<f64>)> = Vec::new();
        for city in &cities {
            let r = row(city, t)?;
            let mut v = PerPerson::splat(0.0);
            for p in PersonType::ALL {
                v[p] = relative(city, t, p) - b1 * city_value(r, p, sigma_eps, opts)? - b2 * r.amenity_obs;
            }
            level.push((city.clone(), v));
        }
        let m = level.len() as f64;
        let mean = PerPerson::from_fn(|p| level.iter().map(|(_, v)| v[p]).sum::<f64>() / m);
        for (city_id, v) in level {
            amenities.push(AmenityEstimate {
                city_id,
                period: t,
                amenity: PerPerson::from_fn(|p| sigma_nu * (v[p] - mean[p])),
            });
        }
    }
    Ok(LocationFit {
        sigma_nu,
        sigma_nu_se,
        eta,
        eta_se: var_eta.max(0.0).sqrt(),
        reference_city: reference,
        fit,
        amenities,
    })
}
