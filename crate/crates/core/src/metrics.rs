//! Marital sorting, assortativeness, inequality and welfare measures.

use crate::error::{domain, invalid, Result};
use crate::estimation::iv::ols;
use crate::labor_housing::SkillPrices;
use crate::marriage::{
    city_wages, clear_marriage_market, couple_income, couple_log_income, surplus_core, CityWages,
    ClearingOptions,
};
use crate::model::{
    ChoiceProbs, CityState, CoupleType, EconomyPrimitives, EquilibriumState, Gender, PerCouple,
    PerPerson, PersonType, PreferenceParams, SkillType,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const NATIONAL: &str = "NATIONAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PmhKind {
    /// Share of marriages with a college spouse.
    #[default]
    Conditional,
    /// Probability of marrying a college spouse, including singles.
    Unconditional,
}

/// Propensity to marry a college graduate; `None` when nobody marries.
pub fn pmh(probs: &ChoiceProbs, kind: PmhKind) -> Option<f64> {
    match kind {
        PmhKind::Unconditional => Some(probs.spouse_h),
        PmhKind::Conditional => {
            let m = probs.married();
            (m > 0.0).then(|| probs.spouse_h / m)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenderPair {
    pub male: f64,
    pub female: f64,
}

impl GenderPair {
    pub fn get(&self, g: Gender) -> f64 {
        match g {
            Gender::M => self.male,
            Gender::F => self.female,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaritalGapReport {
    pub local: Vec<(String, GenderPair)>,
    pub national: GenderPair,
}

fn married_with(couples: &PerCouple<f64>, p: PersonType, spouse: SkillType) -> f64 {
    couples[p.couple_with(spouse)]
}

/// College minus non-college conditional propensity to marry a college
/// spouse. The national figure pools married people across cities.
pub fn college_marital_gap(state: &EquilibriumState) -> MaritalGapReport {
    let gap = |couples: &PerCouple<f64>, g: Gender| {
        let share = |s: SkillType| {
            let p = PersonType::new(g, s);
            let m = couples.involving(p);
            if m > 0.0 {
                married_with(couples, p, SkillType::H) / m
            } else {
                f64::NAN
            }
        };
        share(SkillType::H) - share(SkillType::L)
    };
    let local = state
        .cities
        .iter()
        .map(|c| {
            let t = &c.matching.couples;
            (
                c.city_id.clone(),
                GenderPair {
                    male: gap(t, Gender::M),
                    female: gap(t, Gender::F),
                },
            )
        })
        .collect();
    let pooled = pooled_couples(state);
    MaritalGapReport {
        local,
        national: GenderPair {
            male: gap(&pooled, Gender::M),
            female: gap(&pooled, Gender::F),
        },
    }
}

pub fn pooled_couples(state: &EquilibriumState) -> PerCouple<f64> {
    let mut out = PerCouple::splat(0.0);
    for c in &state.cities {
        for (k, &v) in c.matching.couples.iter() {
            out[k] += v;
        }
    }
    out
}

fn check_gini_inputs(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(invalid("values and weights differ in length"));
    }
    if values.is_empty() {
        return Err(domain("Gini of an empty distribution"));
    }
    let mut total = 0.0;
    for (&x, &w) in values.iter().zip(weights) {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(domain(format!("Gini needs non-negative finite incomes, got {x}")));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(domain(format!("Gini needs non-negative finite weights, got {w}")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(domain("Gini weights sum to zero"));
    }
    let mean = values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    if mean <= 0.0 {
        return Err(domain("Gini of a zero-mean distribution"));
    }
    Ok(total)
}

/// Weighted Gini via the sorted cumulative-weight formula, O(n log n).
pub fn weighted_gini(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total = check_gini_inputs(values, weights)?;
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut below = 0.0;
    let mut num = 0.0;
    let mut mass = 0.0;
    for &i in &idx {
        let (x, w) = (values[i], weights[i]);
        num += w * x * (2.0 * below + w - total);
        mass += w * x;
        below += w;
    }
    Ok(num / (total * mass))
}

/// Weighted Gini from all pairwise differences, O(n^2); used as a reference.
pub fn weighted_gini_pairwise(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total = check_gini_inputs(values, weights)?;
    let mass: f64 = values.iter().zip(weights).map(|(x, w)| x * w).sum();
    let mut num = 0.0;
    for (i, (&xi, &wi)) in values.iter().zip(weights).enumerate() {
        for (&xj, &wj) in values[..i].iter().zip(&weights[..i]) {
            num += wi * wj * (xi - xj).abs();
        }
    }
    // each unordered pair counted once here, twice in the full double sum
    Ok(2.0 * num / (2.0 * total * mass))
}

/// Per-adult-equivalent household incomes with their masses.
pub fn household_income_units(city: &CityState, prefs: &PreferenceParams) -> Vec<(f64, f64)> {
    let wages = state_wages(city, prefs);
    let mut out = Vec::with_capacity(8);
    for c in CoupleType::ALL {
        let w = city.matching.couples[c];
        if w > 0.0 {
            out.push((couple_income(c, &wages, prefs.chi), w));
        }
    }
    for p in PersonType::ALL {
        let w = city.matching.singles[p];
        if w > 0.0 {
            out.push((wages.single[p], w));
        }
    }
    out
}

pub fn state_wages(city: &CityState, prefs: &PreferenceParams) -> CityWages {
    city_wages(
        SkillPrices {
            college: city.wage_h,
            noncollege: city.wage_l,
        },
        prefs,
    )
}

fn gini_of_units(units: &[(f64, f64)]) -> Result<f64> {
    let (x, w): (Vec<f64>, Vec<f64>) = units.iter().cloned().unzip();
    weighted_gini(&x, &w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub national: f64,
    pub local: Vec<(String, f64)>,
    pub local_mean: f64,
    pub local_mean_weighted: f64,
    pub local_std: f64,
}

pub fn inequality_report(state: &EquilibriumState, prefs: &PreferenceParams) -> Result<InequalityReport> {
    let mut pooled = Vec::new();
    let mut local = Vec::with_capacity(state.cities.len());
    let mut pops = Vec::with_capacity(state.cities.len());
    for c in &state.cities {
        let units = household_income_units(c, prefs);
        local.push((c.city_id.clone(), gini_of_units(&units)?));
        pops.push(c.populations.total());
        pooled.extend(units);
    }
    let n = local.len() as f64;
    let local_mean = local.iter().map(|l| l.1).sum::<f64>() / n;
    let var = local.iter().map(|l| (l.1 - local_mean).powi(2)).sum::<f64>() / n;
    let total_pop: f64 = pops.iter().sum();
    let local_mean_weighted = local.iter().zip(&pops).map(|(l, p)| l.1 * p).sum::<f64>() / total_pop;
    Ok(InequalityReport {
        national: gini_of_units(&pooled)?,
        local,
        local_mean,
        local_mean_weighted,
        local_std: var.sqrt(),
    })
}

/// Same-education couple mass relative to what independent matching implies.
pub fn likelihood_ratio(couples: &PerCouple<f64>) -> Option<f64> {
    let total = couples.total();
    if total <= 0.0 {
        return None;
    }
    let husband = |s| (couples[CoupleType::new(s, SkillType::H)] + couples[CoupleType::new(s, SkillType::L)]) / total;
    let wife = |s| (couples[CoupleType::new(SkillType::H, s)] + couples[CoupleType::new(SkillType::L, s)]) / total;
    let same = (couples.hh + couples.ll) / total;
    let independent: f64 = SkillType::ALL.iter().map(|&s| husband(s) * wife(s)).sum();
    (independent > 0.0).then(|| same / independent)
}

/// Correlation of husband and wife college indicators.
pub fn spousal_correlation(couples: &PerCouple<f64>) -> Option<f64> {
    let total = couples.total();
    if total <= 0.0 {
        return None;
    }
    let ph = (couples.hh + couples.hl) / total;
    let pw = (couples.hh + couples.lh) / total;
    let cov = couples.hh / total - ph * pw;
    let denom = (ph * (1.0 - ph) * pw * (1.0 - pw)).sqrt();
    (denom > 0.0).then(|| cov / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityAssortativeness {
    pub city_id: String,
    pub surplus_core: f64,
    pub likelihood_ratio: Option<f64>,
    pub correlation: Option<f64>,
    pub married: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssortativenessReport {
    pub cities: Vec<CityAssortativeness>,
    /// Married-population-weighted mean of local measures.
    pub core_local: f64,
    pub lr_local: Option<f64>,
    pub correlation_local: Option<f64>,
    /// Measures after pooling every city into a single market.
    pub core_national: f64,
    pub lr_national: Option<f64>,
    pub correlation_national: Option<f64>,
    pub national_transfers: PerCouple<f64>,
}

fn weighted_mean(items: impl Iterator<Item = (Option<f64>, f64)>) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (v, w) in items {
        if let Some(v) = v {
            num += v * w;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Local vs national assortativeness.
///
/// National figures treat the country as one marriage market: the couple
/// table is summed over cities, and the surplus core uses population-weighted
/// national wages, at which the pooled market is re-cleared.
pub fn assortativeness_report(econ: &EconomyPrimitives, state: &EquilibriumState) -> Result<AssortativenessReport> {
    let prefs = &econ.prefs;
    let mut cities = Vec::with_capacity(state.cities.len());
    for c in &state.cities {
        let wages = state_wages(c, prefs);
        cities.push(CityAssortativeness {
            city_id: c.city_id.clone(),
            surplus_core: surplus_core(&wages, prefs),
            likelihood_ratio: likelihood_ratio(&c.matching.couples),
            correlation: spousal_correlation(&c.matching.couples),
            married: c.matching.couples.total(),
        });
    }
    let core_local = weighted_mean(cities.iter().map(|c| (Some(c.surplus_core), c.married))).unwrap_or(f64::NAN);
    let lr_local = weighted_mean(cities.iter().map(|c| (c.likelihood_ratio, c.married)));
    let correlation_local = weighted_mean(cities.iter().map(|c| (c.correlation, c.married)));

    let nat = state.national_population();
    let mut single = PerPerson::splat(0.0);
    let mut married = PerPerson::splat(0.0);
    for c in &state.cities {
        let w = state_wages(c, prefs);
        for p in PersonType::ALL {
            single[p] += c.populations[p] * w.single[p];
            married[p] += c.populations[p] * w.married[p];
        }
    }
    let pooled_wages = CityWages {
        single: PerPerson::from_fn(|p| single[p] / nat[p]),
        married: PerPerson::from_fn(|p| married[p] / nat[p]),
    };
    let national_transfers = if state.marriage_feasible {
        clear_marriage_market(&nat, &pooled_wages, prefs, &ClearingOptions::default())?.transfers
    } else {
        PerCouple::splat(0.0)
    };
    let pooled = pooled_couples(state);
    Ok(AssortativenessReport {
        cities,
        core_local,
        lr_local,
        correlation_local,
        core_national: surplus_core(&pooled_wages, prefs),
        lr_national: likelihood_ratio(&pooled),
        correlation_national: spousal_correlation(&pooled),
        national_transfers,
    })
}

/// Mean per-spouse components of marital value for a type, weighted by its
/// marital choice probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurplusComponents {
    pub pecuniary: f64,
    pub nonpecuniary: f64,
    pub transfer: f64,
}

pub fn pecuniary_gain(p: PersonType, spouse: SkillType, wages: &CityWages, chi: f64) -> f64 {
    couple_log_income(p.couple_with(spouse), wages, chi) - wages.single[p].ln()
}

/// Components weighted by unconditional choice probabilities (singles add 0).
pub fn surplus_components(city: &CityState, prefs: &PreferenceParams, p: PersonType) -> SurplusComponents {
    let wages = state_wages(city, prefs);
    let probs = city.matching.choice_probs[p];
    let mut out = SurplusComponents::default();
    for s in SkillType::ALL {
        let pr = probs.spouse(s);
        if pr <= 0.0 {
            continue;
        }
        let c = p.couple_with(s);
        out.pecuniary += pr * pecuniary_gain(p, s, &wages, prefs.chi);
        out.nonpecuniary += pr * prefs.mu[p][s];
        out.transfer += pr * p.gender.transfer_sign() * city.transfers[c];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusCoefficient {
    pub person_type: String,
    pub component: String,
    pub regressor: String,
    pub coef: f64,
    pub se: f64,
}

const SURPLUS_REGRESSORS: [&str; 4] = ["college_share_M", "college_share_F", "log_wage_H", "log_wage_L"];

/// Regresses each surplus component on local college shares and log skill
/// prices, with period dummies, separately for each type.
pub fn surplus_regression(periods: &[(&EconomyPrimitives, &EquilibriumState)]) -> Result<Vec<SurplusCoefficient>> {
    let mut out = Vec::new();
    let k = SURPLUS_REGRESSORS.len() + periods.len();
    for p in PersonType::ALL {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut ys: [Vec<f64>; 4] = Default::default();
        for (t, (econ, state)) in periods.iter().enumerate() {
            for c in &state.cities {
                let share = |g| {
                    let n = c.populations.gender_total(g);
                    if n > 0.0 {
                        c.populations[PersonType::new(g, SkillType::H)] / n
                    } else {
                        0.0
                    }
                };
                let mut row = vec![share(Gender::M), share(Gender::F), c.wage_h.ln(), c.wage_l.ln()];
                row.extend((0..periods.len()).map(|j| if j == t { 1.0 } else { 0.0 }));
                rows.push(row);
                let comp = surplus_components(c, &econ.prefs, p);
                ys[0].push(comp.pecuniary);
                ys[1].push(comp.nonpecuniary);
                ys[2].push(comp.transfer);
                ys[3].push(c.marital_surplus[p]);
            }
        }
        let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        for (name, y) in ["pecuniary", "nonpecuniary", "transfer", "total"].iter().zip(&ys) {
            let fit = ols(&DVector::from_column_slice(y), &x)?;
            for (j, reg) in SURPLUS_REGRESSORS.iter().enumerate() {
                out.push(SurplusCoefficient {
                    person_type: p.label().into(),
                    component: (*name).into(),
                    regressor: (*reg).into(),
                    coef: fit.coef[j],
                    se: fit.se[j],
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareToggles {
    pub pecuniary: bool,
    pub nonpecuniary: bool,
    pub transfers: bool,
}

impl WelfareToggles {
    pub const ALL: WelfareToggles = WelfareToggles {
        pecuniary: true,
        nonpecuniary: true,
        transfers: true,
    };
    pub const NONE: WelfareToggles = WelfareToggles {
        pecuniary: false,
        nonpecuniary: false,
        transfers: false,
    };
}

/// Systematic utility of a type in a city, without taste-shock terms.
pub fn type_welfare(city: &CityState, prefs: &PreferenceParams, p: PersonType, toggles: WelfareToggles) -> f64 {
    let wages = state_wages(city, prefs);
    let comp = surplus_components(city, prefs, p);
    let mut w = wages.single[p].ln() - prefs.zeta * city.rent.ln();
    if toggles.pecuniary {
        w += comp.pecuniary;
    }
    if toggles.nonpecuniary {
        w += comp.nonpecuniary;
    }
    if toggles.transfers {
        w += comp.transfer;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareGap {
    pub male: f64,
    pub female: f64,
    pub pooled: f64,
}

/// College minus non-college welfare, averaging each type over its own
/// location distribution.
pub fn college_welfare_gap(state: &EquilibriumState, prefs: &PreferenceParams, toggles: WelfareToggles) -> WelfareGap {
    let nat = state.national_population();
    let level = PerPerson::from_fn(|p| {
        if nat[p] <= 0.0 {
            return 0.0;
        }
        state
            .cities
            .iter()
            .map(|c| c.populations[p] / nat[p] * type_welfare(c, prefs, p, toggles))
            .sum::<f64>()
    });
    let by_gender = |g| level[PersonType::new(g, SkillType::H)] - level[PersonType::new(g, SkillType::L)];
    let pooled_level = |s: SkillType| {
        let types = Gender::ALL.map(|g| PersonType::new(g, s));
        let n: f64 = types.iter().map(|&p| nat[p]).sum();
        types.iter().map(|&p| nat[p] * level[p]).sum::<f64>() / n
    };
    WelfareGap {
        male: by_gender(Gender::M),
        female: by_gender(Gender::F),
        pooled: pooled_level(SkillType::H) - pooled_level(SkillType::L),
    }
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn college_shares(state: &EquilibriumState) -> Vec<f64> {
    state
        .cities
        .iter()
        .map(|c| (c.populations.mh + c.populations.fh) / c.populations.total())
        .collect()
}

/// Upper-quartile minus lower-quartile city college share.
pub fn college_share_iqr(state: &EquilibriumState) -> f64 {
    let s = college_shares(state);
    quantile(&s, 0.75) - quantile(&s, 0.25)
}

/// One long-format metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub period: String,
    pub city_id: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub value: f64,
}

fn row(metric: &str, period: &str, city: &str, ty: &str, value: f64) -> MetricRow {
    MetricRow {
        metric: metric.into(),
        period: period.into(),
        city_id: city.into(),
        type_label: ty.into(),
        value,
    }
}

/// Standard metric set for one solved period.
pub fn metric_rows(econ: &EconomyPrimitives, state: &EquilibriumState) -> Result<Vec<MetricRow>> {
    let prefs = &econ.prefs;
    let t = state.period_label.as_str();
    let mut out = Vec::new();
    for c in &state.cities {
        for p in PersonType::ALL {
            if let Some(v) = pmh(&c.matching.choice_probs[p], PmhKind::Conditional) {
                out.push(row("pmh", t, &c.city_id, p.label(), v));
            }
            out.push(row("population", t, &c.city_id, p.label(), c.populations[p]));
            out.push(row("single_share", t, &c.city_id, p.label(), c.matching.choice_probs[p].single));
            out.push(row("marital_surplus", t, &c.city_id, p.label(), c.marital_surplus[p]));
        }
        for k in CoupleType::ALL {
            out.push(row("couples", t, &c.city_id, k.label(), c.matching.couples[k]));
            if !c.undefined_transfers[k] {
                out.push(row("transfer", t, &c.city_id, k.label(), c.transfers[k]));
            }
        }
        out.push(row("wage", t, &c.city_id, "H", c.wage_h));
        out.push(row("wage", t, &c.city_id, "L", c.wage_l));
        out.push(row("rent", t, &c.city_id, "ALL", c.rent));
    }
    let gap = college_marital_gap(state);
    for (id, g) in &gap.local {
        out.push(row("college_marital_gap", t, id, "M", g.male));
        out.push(row("college_marital_gap", t, id, "F", g.female));
    }
    out.push(row("college_marital_gap", t, NATIONAL, "M", gap.national.male));
    out.push(row("college_marital_gap", t, NATIONAL, "F", gap.national.female));

    let ineq = inequality_report(state, prefs)?;
    for (id, g) in &ineq.local {
        out.push(row("gini", t, id, "ALL", *g));
    }
    out.push(row("gini", t, NATIONAL, "ALL", ineq.national));
    out.push(row("gini_local_mean", t, NATIONAL, "ALL", ineq.local_mean));
    out.push(row("gini_local_mean_weighted", t, NATIONAL, "ALL", ineq.local_mean_weighted));
    out.push(row("gini_local_std", t, NATIONAL, "ALL", ineq.local_std));

    let a = assortativeness_report(econ, state)?;
    for c in &a.cities {
        out.push(row("surplus_core", t, &c.city_id, "ALL", c.surplus_core));
        if let Some(v) = c.likelihood_ratio {
            out.push(row("likelihood_ratio", t, &c.city_id, "ALL", v));
        }
        if let Some(v) = c.correlation {
            out.push(row("spousal_correlation", t, &c.city_id, "ALL", v));
        }
    }
    out.push(row("surplus_core_local", t, NATIONAL, "ALL", a.core_local));
    out.push(row("surplus_core", t, NATIONAL, "ALL", a.core_national));
    if let Some(v) = a.lr_national {
        out.push(row("likelihood_ratio", t, NATIONAL, "ALL", v));
    }
    if let Some(v) = a.lr_local {
        out.push(row("likelihood_ratio_local", t, NATIONAL, "ALL", v));
    }
    if let Some(v) = a.correlation_national {
        out.push(row("spousal_correlation", t, NATIONAL, "ALL", v));
    }
    if let Some(v) = a.correlation_local {
        out.push(row("spousal_correlation_local", t, NATIONAL, "ALL", v));
    }
    let w = college_welfare_gap(state, prefs, WelfareToggles::ALL);
    out.push(row("college_welfare_gap", t, NATIONAL, "M", w.male));
    out.push(row("college_welfare_gap", t, NATIONAL, "F", w.female));
    out.push(row("college_welfare_gap", t, NATIONAL, "ALL", w.pooled));
    out.push(row("college_share_iqr", t, NATIONAL, "ALL", college_share_iqr(state)));
    Ok(out)
}
