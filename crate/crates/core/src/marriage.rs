//! Local transferable-utility marriage market: values, choice probabilities,
//! market clearing and surplus accounting.

use crate::error::{domain, ModelError, Result};
use crate::labor_housing::{individual_wage, labor_units, SkillPrices};
use crate::model::{
    ChoiceProbs, CoupleType, Gender, MatchingTable, PerCouple, PerPerson, PerSkill, PersonType,
    PreferenceParams, SkillType,
};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// Individual wages of each type when single and when married.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CityWages {
    pub single: PerPerson<f64>,
    pub married: PerPerson<f64>,
}

pub fn city_wages(prices: SkillPrices, prefs: &PreferenceParams) -> CityWages {
    let (single_unit, married_unit) = labor_units(prefs);
    CityWages {
        single: PerPerson::from_fn(|p| individual_wage(prices.get(p.skill), single_unit[p])),
        married: PerPerson::from_fn(|p| individual_wage(prices.get(p.skill), married_unit[p])),
    }
}

/// Systematic marital values of one type, divided by the taste scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledValues {
    pub single: f64,
    pub spouse: PerSkill<f64>,
    /// Spouse types absent from the local market are not choosable.
    pub available: PerSkill<bool>,
}

/// Spouse skills that are choosable given local populations.
pub fn availability(populations: &PerPerson<f64>) -> PerPerson<PerSkill<bool>> {
    PerPerson::from_fn(|p| PerSkill::from_fn(|s| populations[p.spouse(s)] > 0.0))
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{what} must be positive and finite, got {v}")))
    }
}

/// Household income per adult equivalent.
pub fn couple_income(c: CoupleType, wages: &CityWages, chi: f64) -> f64 {
    (wages.married[c.husband_type()] + wages.married[c.wife_type()]) / (1.0 + chi)
}

/// Household log income per adult equivalent, before rent and transfers.
pub fn couple_log_income(c: CoupleType, wages: &CityWages, chi: f64) -> f64 {
    let total = wages.married[c.husband_type()] + wages.married[c.wife_type()];
    total.ln() - (1.0 + chi).ln()
}

pub fn scaled_values(
    p: PersonType,
    wages: &CityWages,
    rent: f64,
    prefs: &PreferenceParams,
    transfers: &PerCouple<f64>,
    available: PerSkill<bool>,
) -> Result<ScaledValues> {
    check_positive("rent", rent)?;
    check_positive("single wage", wages.single[p])?;
    let rent_term = prefs.zeta * rent.ln();
    let single = (wages.single[p].ln() - rent_term) / prefs.sigma_eps;
    let sign = p.gender.transfer_sign();
    let spouse = PerSkill::from_fn(|s| {
        let c = p.couple_with(s);
        (couple_log_income(c, wages, prefs.chi) - rent_term
            + prefs.mu[p][s]
            + sign * transfers[c])
            / prefs.sigma_eps
    });
    Ok(ScaledValues {
        single,
        spouse,
        available,
    })
}

fn options(v: &ScaledValues) -> [(f64, bool); 3] {
    [
        (v.spouse.h, v.available.h),
        (v.spouse.l, v.available.l),
        (v.single, true),
    ]
}

/// Softmax over {spouse H, spouse L, single} with max subtraction.
pub fn choice_probs(v: &ScaledValues) -> ChoiceProbs {
    let opts = options(v);
    let top = opts
        .iter()
        .filter(|o| o.1)
        .map(|o| o.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = opts
        .iter()
        .map(|&(x, ok)| if ok { (x - top).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    ChoiceProbs {
        spouse_h: w[0] / total,
        spouse_l: w[1] / total,
        single: w[2] / total,
    }
}

/// Log-sum-exp of the scaled values over available options.
pub fn log_sum_exp(v: &ScaledValues) -> f64 {
    let opts = options(v);
    let top = opts
        .iter()
        .filter(|o| o.1)
        .map(|o| o.0)
        .fold(f64::NEG_INFINITY, f64::max);
    top + opts
        .iter()
        .filter(|o| o.1)
        .map(|o| (o.0 - top).exp())
        .sum::<f64>()
        .ln()
}

/// Expected maximal marital value, excluding the mean-zero taste shifts.
pub fn inclusive_value(v: &ScaledValues, sigma_eps: f64) -> f64 {
    sigma_eps * log_sum_exp(v)
}

/// Gain from the option to marry, relative to staying single.
pub fn person_surplus(v: &ScaledValues, sigma_eps: f64) -> f64 {
    (sigma_eps * (log_sum_exp(v) - v.single)).max(0.0)
}

/// Joint surplus of a couple over both partners staying single; transfers cancel.
pub fn couple_surplus(c: CoupleType, wages: &CityWages, prefs: &PreferenceParams) -> f64 {
    2.0 * couple_log_income(c, wages, prefs.chi) - wages.single[c.husband_type()].ln()
        - wages.single[c.wife_type()].ln()
        + prefs.mu_for(c, Gender::M)
        + prefs.mu_for(c, Gender::F)
}

/// Supermodularity measure of the couple surplus.
pub fn surplus_core(wages: &CityWages, prefs: &PreferenceParams) -> f64 {
    let s = |c| couple_surplus(c, wages, prefs);
    s(CoupleType::HH) + s(CoupleType::LL) - s(CoupleType::HL) - s(CoupleType::LH)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearingOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClearingOptions {
    fn default() -> Self {
        ClearingOptions {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketClearing {
    pub transfers: PerCouple<f64>,
    pub undefined: PerCouple<bool>,
    pub matching: MatchingTable,
    pub iterations: usize,
    pub residual: f64,
}

/// Desired flows of husbands and of wives into each couple type.
fn desired_flows(
    populations: &PerPerson<f64>,
    probs: &PerPerson<ChoiceProbs>,
) -> (PerCouple<f64>, PerCouple<f64>) {
    let men = PerCouple::from_fn(|c| populations[c.husband_type()] * probs[c.husband_type()].spouse(c.wife));
    let women = PerCouple::from_fn(|c| populations[c.wife_type()] * probs[c.wife_type()].spouse(c.husband));
    (men, women)
}

fn desired_probs(
    wages: &CityWages,
    rent: f64,
    prefs: &PreferenceParams,
    transfers: &PerCouple<f64>,
    populations: &PerPerson<f64>,
) -> Result<PerPerson<ChoiceProbs>> {
    let avail = availability(populations);
    let mut out = PerPerson::splat(ChoiceProbs::default());
    for p in PersonType::ALL {
        let v = scaled_values(p, wages, rent, prefs, transfers, avail[p])?;
        out[p] = choice_probs(&v);
    }
    Ok(out)
}

/// Largest relative gap between husbands' and wives' desired flows.
pub fn clearing_residual(
    populations: &PerPerson<f64>,
    wages: &CityWages,
    prefs: &PreferenceParams,
    transfers: &PerCouple<f64>,
) -> Result<f64> {
    let probs = desired_probs(wages, 1.0, prefs, transfers, populations)?;
    let (men, women) = desired_flows(populations, &probs);
    let scale = populations.total().max(f64::MIN_POSITIVE);
    Ok(CoupleType::ALL
        .iter()
        .map(|&c| {
            let d = (men[c] - women[c]).abs();
            let base = men[c].max(women[c]);
            if base > 0.0 {
                d / base.max(1e-12 * scale)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max))
}

/// Realized matching at given transfers; each cell takes the short side.
pub fn matching_from_transfers(
    populations: &PerPerson<f64>,
    wages: &CityWages,
    prefs: &PreferenceParams,
    transfers: &PerCouple<f64>,
) -> Result<MatchingTable> {
    let probs = desired_probs(wages, 1.0, prefs, transfers, populations)?;
    let (men, women) = desired_flows(populations, &probs);
    let couples = PerCouple::from_fn(|c| men[c].min(women[c]));
    Ok(table_from_couples(populations, couples, probs))
}

fn table_from_couples(
    populations: &PerPerson<f64>,
    couples: PerCouple<f64>,
    fallback: PerPerson<ChoiceProbs>,
) -> MatchingTable {
    let singles = PerPerson::from_fn(|p| (populations[p] - couples.involving(p)).max(0.0));
    let choice_probs = PerPerson::from_fn(|p| {
        let n = populations[p];
        if n > 0.0 {
            ChoiceProbs {
                spouse_h: couples[p.couple_with(SkillType::H)] / n,
                spouse_l: couples[p.couple_with(SkillType::L)] / n,
                single: singles[p] / n,
            }
        } else {
            fallback[p]
        }
    });
    MatchingTable {
        couples,
        singles,
        choice_probs,
    }
}

/// Everyone stays single.
pub fn all_single(populations: &PerPerson<f64>) -> MatchingTable {
    MatchingTable {
        couples: PerCouple::splat(0.0),
        singles: *populations,
        choice_probs: PerPerson::splat(ChoiceProbs {
            spouse_h: 0.0,
            spouse_l: 0.0,
            single: 1.0,
        }),
    }
}

/// Random matching that keeps each type's married mass; the short side of
/// the married pool is matched fully.
pub fn random_matching(populations: &PerPerson<f64>, observed: &MatchingTable) -> MatchingTable {
    let married = PerPerson::from_fn(|p| observed.couples.involving(p));
    let men = married.gender_total(Gender::M);
    let women = married.gender_total(Gender::F);
    let total = men.min(women);
    let couples = PerCouple::from_fn(|c| {
        if men > 0.0 && women > 0.0 {
            total * (married[c.husband_type()] / men) * (married[c.wife_type()] / women)
        } else {
            0.0
        }
    });
    table_from_couples(populations, couples, observed.choice_probs)
}

/// Log odds of a couple against singlehood for each side, at zero transfers.
fn odds_at_zero(wages: &CityWages, prefs: &PreferenceParams) -> Result<(PerCouple<f64>, PerCouple<f64>)> {
    let zero = PerCouple::splat(0.0);
    let all = PerSkill::splat(true);
    let mut husband = PerCouple::splat(0.0);
    let mut wife = PerCouple::splat(0.0);
    for c in CoupleType::ALL {
        let vm = scaled_values(c.husband_type(), wages, 1.0, prefs, &zero, all)?;
        let vf = scaled_values(c.wife_type(), wages, 1.0, prefs, &zero, all)?;
        husband[c] = vm.spouse[c.wife] - vm.single;
        wife[c] = vf.spouse[c.husband] - vf.single;
    }
    Ok((husband, wife))
}

/// Root of x^2 + s x = n for x >= 0, in a cancellation-free form.
fn quadratic_root(n: f64, s: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        2.0 * n / (s + (s * s + 4.0 * n).sqrt())
    }
}

struct Ipfp {
    kernel: PerCouple<f64>,
    mass: PerPerson<f64>,
}

impl Ipfp {
    fn partner_sum(&self, p: PersonType, root: &PerPerson<f64>) -> f64 {
        SkillType::ALL
            .iter()
            .map(|&s| self.kernel[p.couple_with(s)] * root[p.spouse(s)])
            .sum()
    }

    fn sweep(&self, root: &mut PerPerson<f64>) {
        for g in Gender::ALL {
            for s in SkillType::ALL {
                let p = PersonType::new(g, s);
                root[p] = quadratic_root(self.mass[p], self.partner_sum(p, root));
            }
        }
    }

    fn residual(&self, root: &PerPerson<f64>) -> Vector4<f64> {
        Vector4::from_fn(|i, _| {
            let p = PersonType::ALL[i];
            let n = self.mass[p];
            if n > 0.0 {
                (root[p] * root[p] + root[p] * self.partner_sum(p, root) - n) / n
            } else {
                0.0
            }
        })
    }

    /// Newton step in log roots over the active types.
    fn newton(&self, root: &PerPerson<f64>) -> Option<PerPerson<f64>> {
        let f = self.residual(root);
        let mut jac = Matrix4::<f64>::zeros();
        for (i, &p) in PersonType::ALL.iter().enumerate() {
            let n = self.mass[p];
            if n <= 0.0 {
                jac[(i, i)] = 1.0;
                continue;
            }
            let x = root[p];
            jac[(i, i)] = (2.0 * x * x + x * self.partner_sum(p, root)) / n;
            for s in SkillType::ALL {
                let q = p.spouse(s);
                if self.mass[q] > 0.0 {
                    jac[(i, q.index())] = x * self.kernel[p.couple_with(s)] * root[q] / n;
                }
            }
        }
        let step = jac.lu().solve(&(-f))?;
        let next = PerPerson::from_fn(|p| {
            if self.mass[p] > 0.0 {
                root[p] * step[p.index()].exp()
            } else {
                0.0
            }
        });
        let before = f.amax();
        let after = self.residual(&next).amax();
        (after.is_finite() && after < before).then_some(next)
    }
}

/// Clears the four couple sub-markets.
///
/// Works on square roots of single masses, where each side's accounting is a
/// quadratic given the other side; alternating closed-form updates are then
/// polished by Newton steps. Transfers follow from the cleared single masses.
/// Rent drops out of every choice probability and is not an input.
pub fn clear_marriage_market(
    populations: &PerPerson<f64>,
    wages: &CityWages,
    prefs: &PreferenceParams,
    opts: &ClearingOptions,
) -> Result<MarketClearing> {
    for (p, &n) in populations.iter() {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(domain(format!("population of {p} must be non-negative, got {n}")));
        }
    }
    let scale = populations.values().cloned().fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(domain("empty marriage market"));
    }
    let (husband, wife) = odds_at_zero(wages, prefs)?;
    let solver = Ipfp {
        kernel: PerCouple::from_fn(|c| (0.5 * (husband[c] + wife[c])).exp()),
        mass: populations.map(|n| n / scale),
    };
    let mut root = solver.mass.map(|n| n.sqrt());
    let mut iterations = 0;
    let mut resid = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        solver.sweep(&mut root);
        if iterations % 8 == 0 {
            while let Some(next) = solver.newton(&root) {
                root = next;
                if solver.residual(&root).amax() < 1e-15 {
                    break;
                }
            }
        }
        resid = solver.residual(&root).amax();
        if resid < opts.tol * 1e-3 {
            break;
        }
    }

    let undefined = PerCouple::from_fn(|c| {
        populations[c.husband_type()] <= 0.0 || populations[c.wife_type()] <= 0.0
    });
    let transfers = PerCouple::from_fn(|c| {
        if undefined[c] {
            0.0
        } else {
            let shift = root[c.husband_type()].ln() - root[c.wife_type()].ln();
            prefs.sigma_eps * (0.5 * (husband[c] - wife[c]) + shift)
        }
    });
    let residual = clearing_residual(populations, wages, prefs, &transfers)?;
    if !(residual <= opts.tol) {
        return Err(ModelError::NonConvergence {
            what: "marriage market clearing".into(),
            iterations,
            residual: residual.min(resid),
        });
    }
    let matching = matching_from_transfers(populations, wages, prefs, &transfers)?;
    Ok(MarketClearing {
        transfers,
        undefined,
        matching,
        iterations,
        residual,
    })
}
