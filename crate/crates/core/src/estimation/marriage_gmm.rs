//! Marital choice moments and their minimum-distance estimator.
//!
//! A type's log odds of marrying a spouse skill over staying single are linear in
//! the inverse taste scale, a nonpecuniary benefit per period and a city-specific
//! transfer. Transfers are concentrated out cell by cell, which leaves a weighted
//! least-squares problem in the inverse scale and the per-period sums of the two
//! partners' benefits.

use super::panel::{CityPanel, PanelRow};
use crate::error::{invalid, rank, Result};
use crate::model::{CoupleType, Gender, PerCouple, PerPerson, PerSkill, PersonType};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeroCellPolicy {
    /// Add the correction to every cell of city-periods that contain a zero.
    #[default]
    CorrectZeroCells,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Identity,
    /// Inverse sampling variance of each log odds, from cell counts.
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarriageOptions {
    pub chi: f64,
    pub continuity: f64,
    pub zero_cells: ZeroCellPolicy,
    pub weighting: Weighting,
    /// Mean squared moment above which the fit is flagged.
    pub objective_threshold: f64,
}

impl Default for MarriageOptions {
    fn default() -> Self {
        MarriageOptions {
            chi: 0.7,
            continuity: 0.5,
            zero_cells: ZeroCellPolicy::CorrectZeroCells,
            weighting: Weighting::Identity,
            objective_threshold: 1.0,
        }
    }
}

/// Both partners' moments for one couple type in one city-period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarriageCell {
    pub city_id: String,
    pub period: i32,
    pub couple: CoupleType,
    /// Log odds of this marriage over staying single, for husband and wife.
    pub log_odds: [f64; 2],
    /// Log pecuniary gain of this marriage, for husband and wife.
    pub log_gain: [f64; 2],
    pub weight: [f64; 2],
    pub couples: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarriageMoments {
    pub cells: Vec<MarriageCell>,
    pub periods: Vec<i32>,
    pub corrected_city_periods: usize,
    /// Cells left out because a wage needed for the pecuniary gain is missing.
    pub dropped_cells: usize,
}

fn corrected_counts(row: &PanelRow, opts: &MarriageOptions) -> Result<(PerCouple<f64>, PerPerson<f64>, bool)> {
    let has_zero = row.couples.values().chain(row.singles.values()).any(|&v| v <= 0.0);
    let apply = match opts.zero_cells {
        ZeroCellPolicy::Always => true,
        ZeroCellPolicy::CorrectZeroCells => has_zero,
        ZeroCellPolicy::Never => {
            if has_zero {
                return Err(invalid(format!(
                    "city {} period {}: empty marriage cell and smoothing disabled",
                    row.city_id, row.period
                )));
            }
            false
        }
    };
    let add = if apply { opts.continuity } else { 0.0 };
    if apply && add <= 0.0 {
        return Err(invalid(format!(
            "city {} period {}: empty marriage cell needs a positive continuity correction",
            row.city_id, row.period
        )));
    }
    Ok((row.couples.map(|v| v + add), row.singles.map(|v| v + add), apply))
}

pub fn marriage_moments(panel: &CityPanel, opts: &MarriageOptions) -> Result<MarriageMoments> {
    let mut cells = Vec::new();
    let mut corrected = 0;
    let mut dropped = 0;
    for row in &panel.rows {
        let (couples, singles, applied) = corrected_counts(row, opts)?;
        corrected += usize::from(applied);
        for c in CoupleType::ALL {
            let husband = c.husband_type();
            let wife = c.wife_type();
            let wages = (
                row.wage_married[husband],
                row.wage_married[wife],
                row.wage_single[husband],
                row.wage_single[wife],
            );
            let (Some(wm_h), Some(wm_w), Some(ws_h), Some(ws_w)) = wages else {
                dropped += 1;
                continue;
            };
            if wm_h <= 0.0 || wm_w <= 0.0 || ws_h <= 0.0 || ws_w <= 0.0 {
                dropped += 1;
                continue;
            }
            let joint = ((wm_h + wm_w) / (1.0 + opts.chi)).ln();
            let n = couples[c];
            let weight = |single: f64| match opts.weighting {
                Weighting::Identity => 1.0,
                Weighting::TwoStep => 1.0 / (1.0 / n + 1.0 / single),
            };
            cells.push(MarriageCell {
                city_id: row.city_id.clone(),
                period: row.period,
                couple: c,
                log_odds: [(n / singles[husband]).ln(), (n / singles[wife]).ln()],
                log_gain: [joint - ws_h.ln(), joint - ws_w.ln()],
                weight: [weight(singles[husband]), weight(singles[wife])],
                couples: n,
            });
        }
    }
    Ok(MarriageMoments {
        cells,
        periods: panel.periods(),
        corrected_city_periods: corrected,
        dropped_cells: dropped,
    })
}

/// Parameters on the scale of the taste shock: inverse scale, benefits and transfers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMarriageParams {
    pub inverse_scale: f64,
    /// Benefits divided by the taste scale, per period.
    pub mu: BTreeMap<i32, PerPerson<PerSkill<f64>>>,
    /// Wife-oriented transfers divided by the taste scale, per (city, period).
    #[serde(with = "keyed_entries")]
    pub tau: BTreeMap<(String, i32), PerCouple<f64>>,
}

/// Maps with composite keys are written as lists of [key, value] pairs.
mod keyed_entries {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(m: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

fn mu_of(mu: &PerPerson<PerSkill<f64>>, c: CoupleType, g: Gender) -> f64 {
    let spouse = match g {
        Gender::M => c.wife,
        Gender::F => c.husband,
    };
    mu[c.member(g)][spouse]
}

fn residuals(cell: &MarriageCell, s: f64, mu_m: f64, mu_f: f64, tau: f64) -> [f64; 2] {
    [
        cell.log_odds[0] - s * cell.log_gain[0] - mu_m + tau,
        cell.log_odds[1] - s * cell.log_gain[1] - mu_f - tau,
    ]
}

/// Weighted sum of squared moments at the given parameters.
pub fn marriage_objective(moments: &MarriageMoments, params: &ScaledMarriageParams) -> Result<f64> {
    let mut total = 0.0;
    for cell in &moments.cells {
        let mu = params
            .mu
            .get(&cell.period)
            .ok_or_else(|| invalid(format!("no benefits for period {}", cell.period)))?;
        let tau = params
            .tau
            .get(&(cell.city_id.clone(), cell.period))
            .ok_or_else(|| invalid(format!("no transfers for city {} period {}", cell.city_id, cell.period)))?;
        let e = residuals(
            cell,
            params.inverse_scale,
            mu_of(mu, cell.couple, Gender::M),
            mu_of(mu, cell.couple, Gender::F),
            tau[cell.couple],
        );
        total += cell.weight[0] * e[0].powi(2) + cell.weight[1] * e[1].powi(2);
    }
    Ok(total)
}

/// Transfer minimizing one cell's two moments, given the other parameters.
fn best_transfer(cell: &MarriageCell, s: f64, mu_m: f64, mu_f: f64) -> f64 {
    let a_m = cell.log_odds[0] - s * cell.log_gain[0] - mu_m;
    let a_f = cell.log_odds[1] - s * cell.log_gain[1] - mu_f;
    let [w_m, w_f] = cell.weight;
    (w_f * a_f - w_m * a_m) / (w_m + w_f)
}

fn harmonic(cell: &MarriageCell) -> f64 {
    let [w_m, w_f] = cell.weight;
    w_m * w_f / (w_m + w_f)
}

/// Layout of the concentrated problem: inverse scale, then one benefit sum per
/// (period, couple).
struct Layout {
    groups: BTreeMap<(i32, CoupleType), usize>,
}

impl Layout {
    fn new(moments: &MarriageMoments) -> Self {
        let mut groups = BTreeMap::new();
        for cell in &moments.cells {
            let next = groups.len();
            groups.entry((cell.period, cell.couple)).or_insert(next);
        }
        // renumber in key order so the layout does not depend on row order
        for (i, v) in groups.values_mut().enumerate() {
            *v = i;
        }
        Layout { groups }
    }

    fn dim(&self) -> usize {
        1 + self.groups.len()
    }

    fn column(&self, cell: &MarriageCell) -> usize {
        1 + self.groups[&(cell.period, cell.couple)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    /// Parameters of the profiled objective: inverse scale and both genders' benefits.
    pub n_params: usize,
    pub hessian_rank: usize,
    pub nullity: usize,
    /// Flat directions present at any number of cities: one gender split per
    /// (period, couple), along which a benefit moves into the transfers.
    pub structural_nullity: usize,
    /// Flat directions beyond the structural ones.
    pub extra_flat_directions: usize,
    /// Unit directions spanning the extra flat subspace, over the inverse scale
    /// followed by husband and wife benefits per (period, couple).
    pub flat_directions: Vec<Vec<f64>>,
    pub smallest_singular_values: Vec<f64>,
}

const HESSIAN_TOL: f64 = 1e-9;

/// Rank analysis of the objective with transfers profiled out.
pub fn marriage_identification(moments: &MarriageMoments) -> IdentificationReport {
    let layout = Layout::new(moments);
    let g = layout.groups.len();
    let k = 1 + 2 * g;
    let mut hess = DMatrix::<f64>::zeros(k, k);
    for cell in &moments.cells {
        let h = harmonic(cell);
        let j = layout.column(cell) - 1;
        let mut grad = DVector::<f64>::zeros(k);
        grad[0] = cell.log_gain[0] + cell.log_gain[1];
        grad[1 + j] = 1.0;
        grad[1 + g + j] = 1.0;
        hess += &grad * grad.transpose() * (2.0 * h);
    }
    let svd = hess.clone().svd(true, true);
    let sv = svd.singular_values.clone();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let hessian_rank = sv.iter().filter(|&&s| top > 0.0 && s > top * HESSIAN_TOL).count();
    let nullity = k - hessian_rank;
    let structural_nullity = g;

    // Null space of the Hessian with the structural splits projected out.
    let v_t = svd.v_t.expect("requested");
    let mut null: Vec<DVector<f64>> = (0..k)
        .filter(|&i| !(top > 0.0 && sv[i] > top * HESSIAN_TOL))
        .map(|i| v_t.row(i).transpose().into_owned())
        .collect();
    let structural: Vec<DVector<f64>> = (0..g)
        .map(|j| {
            let mut d = DVector::zeros(k);
            d[1 + j] = std::f64::consts::FRAC_1_SQRT_2;
            d[1 + g + j] = -std::f64::consts::FRAC_1_SQRT_2;
            d
        })
        .collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in null.iter_mut() {
        for s in structural.iter().chain(basis.iter()) {
            let proj = v.dot(s);
            *v -= s * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            basis.push(&*v / norm);
        }
    }
    let mut smallest: Vec<f64> = sv.iter().cloned().collect();
    smallest.sort_by(f64::total_cmp);
    smallest.truncate(nullity + 2);
    IdentificationReport {
        n_params: k,
        hessian_rank,
        nullity,
        structural_nullity,
        extra_flat_directions: nullity.saturating_sub(structural_nullity),
        flat_directions: basis.into_iter().map(|d| d.iter().cloned().collect()).collect(),
        smallest_singular_values: smallest,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodBenefits {
    pub period: i32,
    pub mu: PerPerson<PerSkill<f64>>,
    pub se: PerPerson<PerSkill<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityTransfers {
    pub city_id: String,
    pub period: i32,
    /// Wife-oriented transfers; husbands pay the negation. Absent for dropped cells.
    pub transfers: PerCouple<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarriageEstimates {
    pub sigma_eps: f64,
    pub sigma_eps_se: f64,
    pub mu: Vec<PeriodBenefits>,
    /// Sum of both partners' benefits per period; identified without a normalization.
    pub mu_sum: Vec<(i32, PerCouple<f64>)>,
    pub tau: Vec<CityTransfers>,
    pub objective: f64,
    pub objective_flag: bool,
    pub n_moments: usize,
    pub corrected_city_periods: usize,
    pub dropped_cells: usize,
    pub weighting: Weighting,
    pub identification: IdentificationReport,
    pub scaled: ScaledMarriageParams,
}

pub fn estimate_marriage(panel: &CityPanel, opts: &MarriageOptions) -> Result<MarriageEstimates> {
    let moments = marriage_moments(panel, opts)?;
    estimate_from_moments(&moments, opts)
}

pub fn estimate_from_moments(moments: &MarriageMoments, opts: &MarriageOptions) -> Result<MarriageEstimates> {
    if moments.cells.is_empty() {
        return Err(invalid("no usable marriage cells"));
    }
    let identification = marriage_identification(moments);
    if identification.extra_flat_directions > 0 {
        return Err(rank(format!(
            "marriage moments leave {} flat direction(s) beyond the benefit split, \
             in the inverse taste scale and benefit sums {:?}; more cities are needed",
            identification.extra_flat_directions,
            identification.flat_directions
        )));
    }
    let layout = Layout::new(moments);
    let k = layout.dim();
    let n = moments.cells.len();
    let mut g = DMatrix::<f64>::zeros(n, k);
    let mut y = DVector::<f64>::zeros(n);
    let mut h = vec![0.0; n];
    for (i, cell) in moments.cells.iter().enumerate() {
        h[i] = harmonic(cell);
        g[(i, 0)] = cell.log_gain[0] + cell.log_gain[1];
        g[(i, layout.column(cell))] = 1.0;
        y[i] = cell.log_odds[0] + cell.log_odds[1];
    }
    let sqrt_h = DVector::from_iterator(n, h.iter().map(|v| v.sqrt()));
    let gw = DMatrix::from_fn(n, k, |i, j| g[(i, j)] * sqrt_h[i]);
    let yw = y.component_mul(&sqrt_h);
    let qr = gw.clone().qr();
    let theta = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &yw))
        .ok_or_else(|| rank("marriage least squares is singular"))?;
    let inverse_scale = theta[0];
    if inverse_scale <= 0.0 {
        return Err(invalid(format!(
            "estimated inverse taste scale {inverse_scale} is not positive"
        )));
    }
    let resid = &y - &g * &theta;
    let objective: f64 = (0..n).map(|i| h[i] * resid[i].powi(2)).sum();

    // Sandwich covariance of the profiled parameters.
    let bread = (gw.transpose() * &gw)
        .try_inverse()
        .ok_or_else(|| rank("marriage normal matrix is singular"))?;
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let row = g.row(i);
        meat += row.transpose() * row * (h[i] * resid[i]).powi(2);
    }
    let cov = &bread * meat * &bread;

    // Split each benefit sum so that couple-weighted mean transfers are zero per
    // (period, couple). The husband's benefit is then linear in the profiled
    // parameters; keep its value and gradient.
    let mut split: BTreeMap<(i32, CoupleType), (f64, DVector<f64>, f64)> = BTreeMap::new();
    for cell in &moments.cells {
        let j = layout.column(cell);
        let [w_m, w_f] = cell.weight;
        let t0 = best_transfer(cell, inverse_scale, 0.0, theta[j]);
        let mut grad = DVector::<f64>::zeros(k);
        grad[0] = (w_m * cell.log_gain[0] - w_f * cell.log_gain[1]) / (w_m + w_f);
        grad[j] = -w_f / (w_m + w_f);
        let e = split
            .entry((cell.period, cell.couple))
            .or_insert((0.0, DVector::zeros(k), 0.0));
        e.0 += cell.couples * t0;
        e.1 += grad * cell.couples;
        e.2 += cell.couples;
    }
    let sigma = 1.0 / inverse_scale;
    let sigma_se = cov[(0, 0)].max(0.0).sqrt() * sigma * sigma;
    let quad = |d: &DVector<f64>| (d.transpose() * &cov * d)[(0, 0)].max(0.0).sqrt();

    let mut scaled_mu: BTreeMap<i32, PerPerson<PerSkill<f64>>> = BTreeMap::new();
    let mut mu_out: BTreeMap<i32, (PerPerson<PerSkill<f64>>, PerPerson<PerSkill<f64>>)> = BTreeMap::new();
    let mut mu_sum: BTreeMap<i32, PerCouple<f64>> = BTreeMap::new();
    for (&(period, c), (num, grad_num, mass)) in &split {
        let j = layout.column_for(period, c);
        let mass = if *mass > 0.0 { *mass } else { 1.0 };
        // scaled husband benefit = -(couple-weighted mean transfer at zero husband benefit)
        let mu_m = -num / mass;
        let d_mu_m = -grad_num / mass;
        let mu_f = theta[j] - mu_m;
        let mut d_mu_f = -d_mu_m.clone();
        d_mu_f[j] += 1.0;
        let unscale = |v: f64, d: &DVector<f64>| {
            let mut dd = d * sigma;
            dd[0] -= v * sigma * sigma;
            (v * sigma, quad(&dd))
        };
        let (m_val, m_se) = unscale(mu_m, &d_mu_m);
        let (f_val, f_se) = unscale(mu_f, &d_mu_f);
        let entry = mu_out
            .entry(period)
            .or_insert_with(|| (PerPerson::splat(PerSkill::splat(f64::NAN)), PerPerson::splat(PerSkill::splat(f64::NAN))));
        entry.0[c.husband_type()][c.wife] = m_val;
        entry.1[c.husband_type()][c.wife] = m_se;
        entry.0[c.wife_type()][c.husband] = f_val;
        entry.1[c.wife_type()][c.husband] = f_se;
        let sm = scaled_mu
            .entry(period)
            .or_insert_with(|| PerPerson::splat(PerSkill::splat(0.0)));
        sm[c.husband_type()][c.wife] = mu_m;
        sm[c.wife_type()][c.husband] = mu_f;
        mu_sum.entry(period).or_insert_with(|| PerCouple::splat(f64::NAN))[c] = theta[j] * sigma;
    }

    let mut tau_scaled: BTreeMap<(String, i32), PerCouple<f64>> = BTreeMap::new();
    let mut tau_out: BTreeMap<(String, i32), PerCouple<Option<f64>>> = BTreeMap::new();
    for cell in &moments.cells {
        let mu = &scaled_mu[&cell.period];
        let t = best_transfer(
            cell,
            inverse_scale,
            mu_of(mu, cell.couple, Gender::M),
            mu_of(mu, cell.couple, Gender::F),
        );
        let key = (cell.city_id.clone(), cell.period);
        tau_scaled.entry(key.clone()).or_insert_with(|| PerCouple::splat(0.0))[cell.couple] = t;
        tau_out.entry(key).or_insert_with(|| PerCouple::splat(None))[cell.couple] = Some(t * sigma);
    }
    let n_moments = 2 * n;
    Ok(MarriageEstimates {
        sigma_eps: sigma,
        sigma_eps_se: sigma_se,
        mu: mu_out
            .into_iter()
            .map(|(period, (mu, se))| PeriodBenefits { period, mu, se })
            .collect(),
        mu_sum: mu_sum.into_iter().collect(),
        tau: {
            let mut v: Vec<CityTransfers> = tau_out
                .into_iter()
                .map(|((city_id, period), transfers)| CityTransfers { city_id, period, transfers })
                .collect();
            v.sort_by(|a, b| (a.period, &a.city_id).cmp(&(b.period, &b.city_id)));
            v
        },
        objective,
        objective_flag: objective / n_moments as f64 > opts.objective_threshold,
        n_moments,
        corrected_city_periods: moments.corrected_city_periods,
        dropped_cells: moments.dropped_cells,
        weighting: opts.weighting,
        identification,
        scaled: ScaledMarriageParams {
            inverse_scale,
            mu: scaled_mu,
            tau: tau_scaled,
        },
    })
}

impl Layout {
    fn column_for(&self, period: i32, c: CoupleType) -> usize {
        1 + self.groups[&(period, c)]
    }
}

/// Female efficiency shifters implied by mean wages, per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageGapCalibration {
    pub period: i32,
    pub phi: PerSkill<f64>,
    pub delta: PerSkill<f64>,
}

pub fn calibrate_wage_gaps(panel: &CityPanel) -> Result<Vec<WageGapCalibration>> {
    let mut out = Vec::new();
    for t in panel.periods() {
        let rows: Vec<&PanelRow> = panel.rows.iter().filter(|r| r.period == t).collect();
        let mean_log = |p: PersonType, married: bool| -> Result<f64> {
            let mut num = 0.0;
            let mut den = 0.0;
            for r in &rows {
                let (mass, wage) = if married {
                    (r.married(p), r.wage_married[p])
                } else {
                    (r.singles[p], r.wage_single[p])
                };
                if let Some(w) = wage.filter(|w| *w > 0.0 && mass > 0.0) {
                    num += mass * w.ln();
                    den += mass;
                }
            }
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(invalid(format!("period {t}: no wages observed for {p}")))
            }
        };
        let mut phi = PerSkill::splat(0.0);
        let mut delta = PerSkill::splat(0.0);
        for s in crate::model::SkillType::ALL {
            let male_single = mean_log(PersonType::new(Gender::M, s), false)?;
            let female = PersonType::new(Gender::F, s);
            let female_single = mean_log(female, false)?;
            phi[s] = female_single - male_single;
            // married differential measured within city against single men's price
            let mut num = 0.0;
            let mut den = 0.0;
            for r in &rows {
                let mass = r.married(female);
                if let (Some(wm), Some(ws)) = (r.wage_married[female], r.wage_single[PersonType::new(Gender::M, s)]) {
                    if mass > 0.0 && wm > 0.0 && ws > 0.0 {
                        num += mass * (wm / ws).ln();
                        den += mass;
                    }
                }
            }
            if den > 0.0 {
                delta[s] = num / den - phi[s];
            }
        }
        out.push(WageGapCalibration { period: t, phi, delta });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(city: &str, c: CoupleType, odds: [f64; 2], gain: [f64; 2]) -> MarriageCell {
        MarriageCell {
            city_id: city.into(),
            period: 0,
            couple: c,
            log_odds: odds,
            log_gain: gain,
            weight: [1.0, 1.0],
            couples: 1.0,
        }
    }

    /// Moments generated exactly from known scaled parameters.
    fn exact(cities: usize, s: f64) -> (MarriageMoments, Vec<(f64, f64)>) {
        let mut cells = Vec::new();
        let mut truth = Vec::new();
        for (ci, c) in CoupleType::ALL.into_iter().enumerate() {
            let mu_m = 0.1 * ci as f64 - 0.2;
            let mu_f = 0.3 - 0.05 * ci as f64;
            truth.push((mu_m, mu_f));
            for m in 0..cities {
                let tau = 0.07 * (m as f64 - (cities as f64 - 1.0) / 2.0) + 0.01 * ci as f64;
                let gain = [0.2 + 0.05 * m as f64 + 0.01 * ci as f64, 0.4 - 0.03 * (m * m) as f64];
                let odds = [s * gain[0] + mu_m - tau, s * gain[1] + mu_f + tau];
                cells.push(cell(&format!("c{m}"), c, odds, gain));
            }
        }
        let moments = MarriageMoments {
            cells,
            periods: vec![0],
            corrected_city_periods: 0,
            dropped_cells: 0,
        };
        (moments, truth)
    }

    #[test]
    fn exact_moments_recover_scale_and_sums() {
        let (m, truth) = exact(6, 1.0 / 2.728);
        let est = estimate_from_moments(&m, &MarriageOptions::default()).unwrap();
        assert!((est.sigma_eps - 2.728).abs() < 1e-10);
        assert!(est.objective < 1e-20);
        for (c, (mm, mf)) in CoupleType::ALL.into_iter().zip(truth) {
            assert!((est.mu_sum[0].1[c] - (mm + mf) * 2.728).abs() < 1e-9);
        }
        assert!(est.sigma_eps_se < 1e-8);
    }

    #[test]
    fn objective_is_zero_at_truth() {
        let s = 0.4;
        let (m, truth) = exact(4, s);
        let mut mu = PerPerson::splat(PerSkill::splat(0.0));
        for (c, (mm, mf)) in CoupleType::ALL.into_iter().zip(&truth) {
            mu[c.husband_type()][c.wife] = *mm;
            mu[c.wife_type()][c.husband] = *mf;
        }
        let mut tau = BTreeMap::new();
        for cell in &m.cells {
            let mi: usize = cell.city_id[1..].parse().unwrap();
            let t = 0.07 * (mi as f64 - 1.5) + 0.01 * cell.couple.index() as f64;
            tau.entry((cell.city_id.clone(), 0)).or_insert_with(|| PerCouple::splat(0.0))[cell.couple] = t;
        }
        let params = ScaledMarriageParams { inverse_scale: s, mu: [(0, mu)].into(), tau };
        assert!(marriage_objective(&m, &params).unwrap() <= 1e-16);
    }

    #[test]
    fn transfers_shift_with_the_benefit_split() {
        // moving k from the husband's to the wife's benefit and into the transfer leaves
        // every moment unchanged
        let c = cell("a", CoupleType::HL, [0.3, -0.2], [0.5, 0.1]);
        let base = residuals(&c, 0.4, 0.1, 0.2, 0.05);
        let moved = residuals(&c, 0.4, 0.1 + 0.3, 0.2 - 0.3, 0.05 + 0.3);
        assert!((base[0] - moved[0]).abs() < 1e-15 && (base[1] - moved[1]).abs() < 1e-15);
    }

    #[test]
    fn single_city_has_extra_flat_direction() {
        let (m, _) = exact(1, 0.4);
        let rep = marriage_identification(&m);
        assert_eq!(rep.structural_nullity, 4);
        assert_eq!(rep.extra_flat_directions, 1);
        assert_eq!(rep.flat_directions.len(), 1);
        assert!(matches!(
            estimate_from_moments(&m, &MarriageOptions::default()),
            Err(crate::ModelError::RankDeficiency(_))
        ));
    }

    #[test]
    fn many_cities_leave_only_structural_directions() {
        let (m, _) = exact(10, 0.4);
        let rep = marriage_identification(&m);
        assert_eq!(rep.extra_flat_directions, 0);
        assert_eq!(rep.nullity, rep.structural_nullity);
    }

    #[test]
    fn zero_pecuniary_gain_drops_the_scale() {
        let (mut m, _) = exact(5, 0.4);
        for c in m.cells.iter_mut() {
            c.log_gain = [0.0, 0.0];
        }
        let rep = marriage_identification(&m);
        assert_eq!(rep.extra_flat_directions, 1);
    }
}
