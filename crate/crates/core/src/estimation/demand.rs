//! Labor demand and housing supply estimated in long differences from the base period.

use super::bartik::BartikShock;
use super::iv::{two_sls, IvFit};
use super::panel::{CityPanel, PanelRow};
use crate::error::{invalid, Result};
use crate::labor_housing::{invert_technology, LaborAggregates, SkillPrices};
use crate::model::SkillType;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One city's change between the base period and a later period.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DiffRow<'a> {
    pub city_id: &'a str,
    pub period: i32,
    pub base: &'a PanelRow,
    pub now: &'a PanelRow,
    pub shock: &'a BartikShock,
}

pub(crate) fn diff_rows<'a>(
    panel: &'a CityPanel,
    shocks: &'a [BartikShock],
    base: i32,
) -> Result<Vec<DiffRow<'a>>> {
    let index = panel.index();
    let mut out = Vec::with_capacity(shocks.len());
    for shock in shocks {
        let get = |t: i32| {
            index.get(&(shock.city_id.clone(), t)).copied().ok_or_else(|| {
                invalid(format!("city {}: no panel row for period {t}", shock.city_id))
            })
        };
        out.push(DiffRow {
            city_id: &shock.city_id,
            period: shock.period,
            base: get(base)?,
            now: get(shock.period)?,
            shock,
        });
    }
    if out.is_empty() {
        return Err(invalid("differenced estimators need at least two periods"));
    }
    Ok(out)
}

/// Indicator columns, one per distinct period among the rows.
pub(crate) fn period_dummies(periods: &[i32]) -> DMatrix<f64> {
    let mut distinct: Vec<i32> = periods.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    DMatrix::from_fn(periods.len(), distinct.len(), |i, j| {
        f64::from(u8::from(periods[i] == distinct[j]))
    })
}

pub(crate) fn columns(n: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn labor(row: &PanelRow) -> Result<LaborAggregates> {
    Ok(LaborAggregates {
        college: row.effective_labor(SkillType::H)?,
        noncollege: row.effective_labor(SkillType::L)?,
    })
}

fn prices(row: &PanelRow) -> Result<SkillPrices> {
    Ok(SkillPrices {
        college: row.skill_price(SkillType::H)?,
        noncollege: row.skill_price(SkillType::L)?,
    })
}

fn log_ratio(a: f64, b: f64, what: &str, row: &PanelRow) -> Result<f64> {
    if a > 0.0 && b > 0.0 {
        Ok((a / b).ln())
    } else {
        Err(invalid(format!(
            "city {} period {}: {what} must be positive",
            row.city_id, row.period
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaborDemandFit {
    pub rho: f64,
    pub rho_se: f64,
    /// Elasticity of substitution between skill groups.
    pub substitution_elasticity: f64,
    pub gamma_h: f64,
    pub gamma_l: f64,
    /// Set when the estimate leaves the open unit interval.
    pub boundary: bool,
    pub fit: IvFit,
}

pub fn rho_from_slope(slope: f64) -> (f64, bool) {
    let rho = 1.0 + slope;
    (rho, !(rho > 1e-12 && rho < 1.0))
}

pub fn estimate_labor_demand(panel: &CityPanel, shocks: &[BartikShock], base: i32) -> Result<LaborDemandFit> {
    let rows = diff_rows(panel, shocks, base)?;
    let n = rows.len();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for r in &rows {
        let (p0, p1) = (prices(r.base)?, prices(r.now)?);
        let (l0, l1) = (labor(r.base)?, labor(r.now)?);
        y.push(
            log_ratio(p1.college, p1.noncollege, "skill prices", r.now)?
                - log_ratio(p0.college, p0.noncollege, "skill prices", r.base)?,
        );
        x.push(
            log_ratio(l1.college, l1.noncollege, "effective labor", r.now)?
                - log_ratio(l0.college, l0.noncollege, "effective labor", r.base)?,
        );
    }
    let bh: Vec<f64> = rows.iter().map(|r| r.shock.college).collect();
    let bl: Vec<f64> = rows.iter().map(|r| r.shock.noncollege).collect();
    let geo: Vec<f64> = rows.iter().map(|r| r.base.chi_geo).collect();
    let reg: Vec<f64> = rows.iter().map(|r| r.base.chi_reg).collect();
    let times = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let periods: Vec<i32> = rows.iter().map(|r| r.period).collect();
    let exog = hcat(&columns(n, &[bh.clone(), bl.clone()]), &period_dummies(&periods));
    let z = columns(
        n,
        &[times(&bh, &geo), times(&bh, &reg), times(&bl, &geo), times(&bl, &reg)],
    );
    let fit = two_sls(&DVector::from_vec(y), &columns(n, &[x]), &exog, &z)?;
    let (rho, boundary) = rho_from_slope(fit.coef[0]);
    Ok(LaborDemandFit {
        rho,
        rho_se: fit.se[0],
        substitution_elasticity: 1.0 / (1.0 - rho),
        gamma_h: fit.coef[1],
        gamma_l: fit.coef[2],
        boundary,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnologyEstimate {
    pub city_id: String,
    pub period: i32,
    pub skill_share: f64,
    pub productivity: f64,
}

pub fn recover_technology(panel: &CityPanel, rho: f64) -> Result<Vec<TechnologyEstimate>> {
    panel
        .rows
        .iter()
        .map(|r| {
            let tech = invert_technology(prices(r)?, labor(r)?, rho)?;
            Ok(TechnologyEstimate {
                city_id: r.city_id.clone(),
                period: r.period,
                skill_share: tech.skill_share,
                productivity: tech.productivity,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HousingSupplyFit {
    pub psi: [f64; 3],
    pub psi_se: [f64; 3],
    pub fit: IvFit,
}

/// Housing quantity implied by spending share and rent.
pub fn housing_quantity(row: &PanelRow, zeta: f64) -> Result<f64> {
    let income = row.income()?;
    if income <= 0.0 || row.rent <= 0.0 {
        return Err(invalid(format!(
            "city {} period {}: income and rent must be positive",
            row.city_id, row.period
        )));
    }
    Ok(zeta * income / row.rent)
}

pub fn estimate_housing_supply(
    panel: &CityPanel,
    shocks: &[BartikShock],
    base: i32,
    zeta: f64,
) -> Result<HousingSupplyFit> {
    let rows = diff_rows(panel, shocks, base)?;
    let n = rows.len();
    let mut y = Vec::with_capacity(n);
    let mut dh = Vec::with_capacity(n);
    for r in &rows {
        y.push(log_ratio(r.now.rent, r.base.rent, "rent", r.now)?);
        dh.push(housing_quantity(r.now, zeta)?.ln() - housing_quantity(r.base, zeta)?.ln());
    }
    let geo: Vec<f64> = rows.iter().map(|r| r.base.chi_geo).collect();
    let reg: Vec<f64> = rows.iter().map(|r| r.base.chi_reg).collect();
    let scaled = |c: &[f64]| dh.iter().zip(c).map(|(d, v)| d * v.exp()).collect::<Vec<_>>();
    let endog = columns(n, &[dh.clone(), scaled(&geo), scaled(&reg)]);
    let bh: Vec<f64> = rows.iter().map(|r| r.shock.college).collect();
    let bl: Vec<f64> = rows.iter().map(|r| r.shock.noncollege).collect();
    let times = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let z = columns(
        n,
        &[
            bh.clone(),
            bl.clone(),
            times(&bh, &geo),
            times(&bh, &reg),
            times(&bl, &geo),
            times(&bl, &reg),
        ],
    );
    let periods: Vec<i32> = rows.iter().map(|r| r.period).collect();
    let fit = two_sls(&DVector::from_vec(y), &endog, &period_dummies(&periods), &z)?;
    Ok(HousingSupplyFit {
        psi: [fit.coef[0], fit.coef[1], fit.coef[2]],
        psi_se: [fit.se[0], fit.se[1], fit.se[2]],
        fit,
    })
}
