//! Counterfactual scenarios built from two solved periods.

use crate::error::{invalid, ModelError, Result};
use crate::marriage::random_matching;
use crate::metrics::{
    assortativeness_report, college_marital_gap, college_share_iqr, college_welfare_gap,
    inequality_report, metric_rows, AssortativenessReport, InequalityReport, MaritalGapReport,
    MetricRow, WelfareGap, WelfareToggles,
};
use crate::model::{EconomyPrimitives, EquilibriumState, PerPerson, PerSkill, PersonType, PreferenceParams, SkillType};
use crate::spatial_eq::{solve_equilibrium, solve_partial, FrozenBlocks, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::cell::OnceCell;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Toggle {
    Wages,
    Rents,
    NonpecuniaryMu,
    EducationDistribution,
    LocationChoices,
    CollegePremium,
    NationalEducationLevel,
    /// City deviations from national mean log wages take target values.
    CityWageDifferentials,
    TransfersResolve,
}

impl Toggle {
    pub const ALL: [Toggle; 9] = [
        Toggle::Wages,
        Toggle::Rents,
        Toggle::NonpecuniaryMu,
        Toggle::EducationDistribution,
        Toggle::LocationChoices,
        Toggle::CollegePremium,
        Toggle::NationalEducationLevel,
        Toggle::CityWageDifferentials,
        Toggle::TransfersResolve,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Toggle::Wages => "wages",
            Toggle::Rents => "rents",
            Toggle::NonpecuniaryMu => "nonpecuniary_mu",
            Toggle::EducationDistribution => "education_distribution",
            Toggle::LocationChoices => "location_choices",
            Toggle::CollegePremium => "college_premium",
            Toggle::NationalEducationLevel => "national_education_level",
            Toggle::CityWageDifferentials => "city_wage_differentials",
            Toggle::TransfersResolve => "transfers_resolve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    #[default]
    Assortative,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumMode {
    #[default]
    Full,
    Partial,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Toggle structure of a scenario, independent of the economies it is applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub name: String,
    pub toggles: BTreeSet<Toggle>,
    #[serde(default)]
    pub matching_mode: MatchingMode,
    #[serde(default = "one")]
    pub mu_core_scale: f64,
    #[serde(default = "yes")]
    pub marriage_feasible: bool,
    #[serde(default)]
    pub equilibrium_mode: EquilibriumMode,
}

impl ScenarioTemplate {
    pub fn new(name: &str, toggles: &[Toggle], mode: EquilibriumMode) -> Self {
        ScenarioTemplate {
            name: name.into(),
            toggles: toggles.iter().copied().collect(),
            matching_mode: MatchingMode::Assortative,
            mu_core_scale: 1.0,
            marriage_feasible: true,
            equilibrium_mode: mode,
        }
    }

    pub fn with_matching(mut self, m: MatchingMode) -> Self {
        self.matching_mode = m;
        self
    }

    pub fn instantiate(&self, base: &EconomyPrimitives, target: &EconomyPrimitives) -> ScenarioSpec {
        ScenarioSpec {
            template: self.clone(),
            base: base.clone(),
            target: target.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_core_scale >= 0.0 && self.mu_core_scale.is_finite()) {
            return Err(invalid(format!(
                "scenario {}: mu_core_scale must be non-negative, got {}",
                self.name, self.mu_core_scale
            )));
        }
        if self.equilibrium_mode == EquilibriumMode::Full && !self.toggles.contains(&Toggle::TransfersResolve) {
            return Err(invalid(format!(
                "scenario {}: a full equilibrium always re-solves transfers; add transfers_resolve or use partial mode",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(flatten)]
    pub template: ScenarioTemplate,
    pub base: EconomyPrimitives,
    pub target: EconomyPrimitives,
}

impl ScenarioSpec {
    pub fn has(&self, t: Toggle) -> bool {
        self.template.toggles.contains(&t)
    }

    /// Hex SHA-256 of the spec's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub inequality: InequalityReport,
    pub assortativeness: AssortativenessReport,
    pub marital_gap: MaritalGapReport,
    pub welfare: WelfareGap,
    pub college_share_iqr: f64,
    pub rows: Vec<MetricRow>,
}

pub fn scenario_metrics(econ: &EconomyPrimitives, state: &EquilibriumState) -> Result<ScenarioMetrics> {
    Ok(ScenarioMetrics {
        inequality: inequality_report(state, &econ.prefs)?,
        assortativeness: assortativeness_report(econ, state)?,
        marital_gap: college_marital_gap(state),
        welfare: college_welfare_gap(state, &econ.prefs, WelfareToggles::ALL),
        college_share_iqr: college_share_iqr(state),
        rows: metric_rows(econ, state)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: String,
    pub toggles: Vec<String>,
    pub matching_mode: MatchingMode,
    pub equilibrium_mode: EquilibriumMode,
    pub mu_core_scale: f64,
    pub marriage_feasible: bool,
    pub spec_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    /// Primitives the outcome was solved under.
    pub economy: EconomyPrimitives,
    pub equilibrium: EquilibriumState,
    pub metrics: ScenarioMetrics,
    pub provenance: Provenance,
}

fn tag(name: &str, e: ModelError) -> ModelError {
    match e {
        ModelError::NonConvergence { what, iterations, residual } => ModelError::NonConvergence {
            what: format!("scenario {name}: {what}"),
            iterations,
            residual,
        },
        ModelError::Invalid(m) => ModelError::Invalid(format!("scenario {name}: {m}")),
        ModelError::Domain(m) => ModelError::Domain(format!("scenario {name}: {m}")),
        ModelError::Inconsistent(m) => ModelError::Inconsistent(format!("scenario {name}: {m}")),
        other => other,
    }
}

fn require_converged(name: &str, state: EquilibriumState) -> Result<EquilibriumState> {
    if state.converged {
        Ok(state)
    } else {
        Err(ModelError::NonConvergence {
            what: format!("{name} location fixed point"),
            iterations: state.iterations,
            residual: state.residuals.max(),
        })
    }
}

/// Raises same-education benefits and lowers mixed ones by a common offset so the
/// nonpecuniary core scales by `factor` while each gender's mean benefit is unchanged.
pub fn scale_assortativeness(econ: &EconomyPrimitives, factor: f64) -> EconomyPrimitives {
    let mut out = econ.clone();
    if factor == 1.0 {
        return out;
    }
    out.prefs.mu = scaled_mu(&econ.prefs, factor);
    out
}

fn scaled_mu(prefs: &PreferenceParams, factor: f64) -> PerPerson<PerSkill<f64>> {
    let offset = (factor - 1.0) * prefs.mu_core() / 8.0;
    PerPerson::from_fn(|p| {
        PerSkill::from_fn(|s| {
            let sign = if s == p.skill { 1.0 } else { -1.0 };
            prefs.mu[p][s] + sign * offset
        })
    })
}

/// Replaces each city's couple table by independent matching of the married pools.
pub fn apply_random_matching(state: &EquilibriumState) -> EquilibriumState {
    let mut out = state.clone();
    for c in out.cities.iter_mut() {
        c.matching = random_matching(&c.populations, &c.matching);
    }
    out
}

pub fn no_marriage_scenario(econ: &EconomyPrimitives, opts: &SolverOptions) -> Result<EquilibriumState> {
    let opts = SolverOptions {
        marriage_feasible: false,
        ..*opts
    };
    solve_equilibrium(econ, &opts)
}

/// Population-weighted national mean log college wage minus non-college wage.
pub fn national_log_wage_gap(state: &EquilibriumState) -> f64 {
    let mean = |s: SkillType| {
        let mut num = 0.0;
        let mut den = 0.0;
        for c in &state.cities {
            let n: f64 = PersonType::ALL.iter().filter(|p| p.skill == s).map(|&p| c.populations[p]).sum();
            num += n * c.skill_price(s).ln();
            den += n;
        }
        num / den
    };
    mean(SkillType::H) - mean(SkillType::L)
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Lazily solved base and target equilibria shared by several scenarios.
pub struct ScenarioContext {
    base: EconomyPrimitives,
    target: EconomyPrimitives,
    opts: SolverOptions,
    base_state: OnceCell<EquilibriumState>,
    target_state: OnceCell<EquilibriumState>,
}

impl ScenarioContext {
    pub fn new(base: &EconomyPrimitives, target: &EconomyPrimitives, opts: &SolverOptions) -> Result<Self> {
        let mut base = base.clone();
        let mut target = target.clone();
        base.canonicalize();
        target.canonicalize();
        let ids = |e: &EconomyPrimitives| e.cities.iter().map(|c| c.city_id.clone()).collect::<Vec<_>>();
        if ids(&base) != ids(&target) {
            return Err(invalid("base and target economies must contain the same cities"));
        }
        Ok(ScenarioContext {
            base,
            target,
            opts: *opts,
            base_state: OnceCell::new(),
            target_state: OnceCell::new(),
        })
    }

    pub fn base(&self) -> &EconomyPrimitives {
        &self.base
    }

    pub fn target(&self) -> &EconomyPrimitives {
        &self.target
    }

    fn solved(cell: &OnceCell<EquilibriumState>, econ: &EconomyPrimitives, opts: &SolverOptions, what: &str) -> Result<EquilibriumState> {
        if let Some(s) = cell.get() {
            return Ok(s.clone());
        }
        let s = require_converged(what, solve_equilibrium(econ, opts)?)?;
        let _ = cell.set(s.clone());
        Ok(s)
    }

    pub fn base_state(&self) -> Result<EquilibriumState> {
        Self::solved(&self.base_state, &self.base, &self.opts, "base")
    }

    pub fn target_state(&self) -> Result<EquilibriumState> {
        Self::solved(&self.target_state, &self.target, &self.opts, "target")
    }

    /// Primitives with each toggled block taken from the target.
    pub fn hybrid(&self, t: &ScenarioTemplate) -> Result<EconomyPrimitives> {
        let has = |x: Toggle| t.toggles.contains(&x);
        let (base, target) = (&self.base, &self.target);
        let mut out = base.clone();
        if has(Toggle::Wages) {
            out.tech_rho = target.tech_rho;
            out.prefs.phi = target.prefs.phi;
            out.prefs.delta = target.prefs.delta;
            for (c, tc) in out.cities.iter_mut().zip(&target.cities) {
                c.productivity = tc.productivity;
                c.skill_share = tc.skill_share;
            }
        } else {
            if has(Toggle::CityWageDifferentials) {
                let geo_mean = |e: &EconomyPrimitives| {
                    e.cities.iter().map(|c| c.productivity.ln()).sum::<f64>() / e.cities.len() as f64
                };
                let shift = geo_mean(base) - geo_mean(target);
                for (c, tc) in out.cities.iter_mut().zip(&target.cities) {
                    c.productivity = (tc.productivity.ln() + shift).exp();
                }
            }
            if has(Toggle::CollegePremium) {
                let gap = national_log_wage_gap(&self.target_state()?) - national_log_wage_gap(&self.base_state()?);
                for c in out.cities.iter_mut() {
                    c.skill_share = logistic(logit(c.skill_share) + gap);
                }
            }
        }
        if has(Toggle::Rents) {
            out.housing = target.housing;
            out.prefs.zeta = target.prefs.zeta;
            for (c, tc) in out.cities.iter_mut().zip(&target.cities) {
                c.construction_cost = tc.construction_cost;
                c.interest_rate = tc.interest_rate;
                c.land_unavail = tc.land_unavail;
                c.land_reg = tc.land_reg;
            }
        }
        if has(Toggle::NonpecuniaryMu) {
            out.prefs.mu = target.prefs.mu;
            out.prefs.sigma_eps = target.prefs.sigma_eps;
            out.prefs.chi = target.prefs.chi;
        }
        if has(Toggle::LocationChoices) {
            out.prefs.sigma_nu = target.prefs.sigma_nu;
            out.prefs.eta = target.prefs.eta;
            for (c, tc) in out.cities.iter_mut().zip(&target.cities) {
                c.amenity_obs = tc.amenity_obs;
                c.amenity_unobs = tc.amenity_unobs;
            }
        }
        if has(Toggle::EducationDistribution) || has(Toggle::NationalEducationLevel) {
            out.national_population = target.national_population;
        }
        if t.mu_core_scale != 1.0 {
            out.prefs.mu = scaled_mu(&out.prefs, t.mu_core_scale);
        }
        out.period_label = if out == relabel(target, &base.period_label) {
            target.period_label.clone()
        } else if out == *base {
            base.period_label.clone()
        } else {
            format!("scenario:{}", t.name)
        };
        Ok(out)
    }

    /// Blocks held fixed in a partial solve, in canonical city order.
    fn frozen(&self, t: &ScenarioTemplate) -> Result<FrozenBlocks> {
        let has = |x: Toggle| t.toggles.contains(&x);
        let s0 = self.base_state()?;
        let needs_target = [
            Toggle::Wages,
            Toggle::Rents,
            Toggle::LocationChoices,
            Toggle::EducationDistribution,
            Toggle::CollegePremium,
            Toggle::CityWageDifferentials,
        ]
        .iter()
        .any(|&x| has(x));
        let s1 = if needs_target { self.target_state()? } else { s0.clone() };

        let mut wages: Vec<(f64, f64)> = if has(Toggle::Wages) { &s1 } else { &s0 }
            .cities
            .iter()
            .map(|c| (c.wage_h, c.wage_l))
            .collect();
        if !has(Toggle::Wages) {
            if has(Toggle::CityWageDifferentials) {
                let mean = |s: &EquilibriumState, k: SkillType| national_mean_log_price(s, k);
                let shift_h = mean(&s0, SkillType::H) - mean(&s1, SkillType::H);
                let shift_l = mean(&s0, SkillType::L) - mean(&s1, SkillType::L);
                wages = s1
                    .cities
                    .iter()
                    .map(|c| ((c.wage_h.ln() + shift_h).exp(), (c.wage_l.ln() + shift_l).exp()))
                    .collect();
            }
            if has(Toggle::CollegePremium) {
                let gap = national_log_wage_gap(&s1) - national_log_wage_gap(&s0);
                for w in wages.iter_mut() {
                    w.0 *= gap.exp();
                }
            }
        }
        let rents = if has(Toggle::Rents) { &s1 } else { &s0 }
            .cities
            .iter()
            .map(|c| c.rent)
            .collect();

        let probs_from_target = has(Toggle::LocationChoices) || has(Toggle::EducationDistribution);
        let nat_from_target = has(Toggle::EducationDistribution) || has(Toggle::NationalEducationLevel);
        let same_totals = self.base.national_population == self.target.national_population;
        let populations = match (probs_from_target, nat_from_target || (same_totals && probs_from_target)) {
            (false, false) => s0.cities.iter().map(|c| c.populations).collect(),
            (false, true) if same_totals => s0.cities.iter().map(|c| c.populations).collect(),
            (true, true) => s1.cities.iter().map(|c| c.populations).collect(),
            (from_target, _) => {
                let probs = if from_target { &s1 } else { &s0 };
                let nat = if nat_from_target {
                    self.target.national_population
                } else {
                    self.base.national_population
                };
                probs
                    .cities
                    .iter()
                    .map(|c| PerPerson::from_fn(|p| c.location_probs[p] * nat[p]))
                    .collect()
            }
        };
        let transfers = if has(Toggle::TransfersResolve) {
            None
        } else {
            Some(s0.cities.iter().map(|c| c.transfers).collect())
        };
        Ok(FrozenBlocks {
            wages: Some(wages),
            rents: Some(rents),
            populations: Some(populations),
            transfers,
        })
    }

    pub fn run(&self, t: &ScenarioTemplate) -> Result<ScenarioOutcome> {
        self.run_inner(t).map_err(|e| tag(&t.name, e))
    }

    fn run_inner(&self, t: &ScenarioTemplate) -> Result<ScenarioOutcome> {
        t.validate()?;
        let econ = self.hybrid(t)?;
        let opts = SolverOptions {
            marriage_feasible: t.marriage_feasible && self.opts.marriage_feasible,
            ..self.opts
        };
        let mut state = match t.equilibrium_mode {
            EquilibriumMode::Full => {
                if econ == self.base && opts == self.opts {
                    self.base_state()?
                } else if econ == self.target && opts == self.opts {
                    self.target_state()?
                } else {
                    require_converged("scenario", solve_equilibrium(&econ, &opts)?)?
                }
            }
            EquilibriumMode::Partial => solve_partial(&econ, &self.frozen(t)?, &opts)?,
        };
        if t.matching_mode == MatchingMode::Random {
            state = apply_random_matching(&state);
        }
        let metrics = scenario_metrics(&econ, &state)?;
        let spec = t.instantiate(&self.base, &self.target);
        Ok(ScenarioOutcome {
            provenance: Provenance {
                scenario: t.name.clone(),
                toggles: t.toggles.iter().map(|x| x.label().to_string()).collect(),
                matching_mode: t.matching_mode,
                equilibrium_mode: t.equilibrium_mode,
                mu_core_scale: t.mu_core_scale,
                marriage_feasible: t.marriage_feasible,
                spec_hash: spec.hash(),
            },
            economy: econ,
            equilibrium: state,
            metrics,
        })
    }
}

fn relabel(e: &EconomyPrimitives, label: &str) -> EconomyPrimitives {
    let mut out = e.clone();
    out.period_label = label.to_string();
    out
}

fn national_mean_log_price(state: &EquilibriumState, s: SkillType) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for c in &state.cities {
        let n: f64 = PersonType::ALL.iter().filter(|p| p.skill == s).map(|&p| c.populations[p]).sum();
        num += n * c.skill_price(s).ln();
        den += n;
    }
    num / den
}

pub fn run_scenario(spec: &ScenarioSpec, opts: &SolverOptions) -> Result<ScenarioOutcome> {
    let ctx = ScenarioContext::new(&spec.base, &spec.target, opts).map_err(|e| tag(&spec.template.name, e))?;
    ctx.run(&spec.template)
}

/// Cumulative toggle sets of the welfare decomposition columns.
pub fn welfare_column(k: usize) -> Option<ScenarioTemplate> {
    use Toggle::*;
    let sets: [&[Toggle]; 6] = [
        &[Wages],
        &[Wages, Rents],
        &[Wages, Rents, TransfersResolve],
        &[Wages, Rents, TransfersResolve, NonpecuniaryMu],
        &[Wages, Rents, TransfersResolve, NonpecuniaryMu, LocationChoices],
        &[Wages, Rents, TransfersResolve, NonpecuniaryMu, LocationChoices, EducationDistribution],
    ];
    let toggles = sets.get(k.checked_sub(1)?)?;
    Some(ScenarioTemplate::new(&format!("welfare_columns_{k}"), toggles, EquilibriumMode::Partial))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareColumn {
    pub column: usize,
    pub toggles: Vec<String>,
    pub base_gap: WelfareGap,
    pub scenario_gap: WelfareGap,
    pub change: WelfareGap,
}

pub fn welfare_columns(ctx: &ScenarioContext, columns: &[usize]) -> Result<Vec<WelfareColumn>> {
    let base = ctx.base_state()?;
    let base_gap = college_welfare_gap(&base, &ctx.base().prefs, WelfareToggles::ALL);
    columns
        .iter()
        .map(|&k| {
            let t = welfare_column(k).ok_or_else(|| invalid(format!("welfare column {k} is not in 1..=6")))?;
            let out = ctx.run(&t)?;
            let g = out.metrics.welfare;
            Ok(WelfareColumn {
                column: k,
                toggles: out.provenance.toggles,
                base_gap,
                scenario_gap: g,
                change: WelfareGap {
                    male: g.male - base_gap.male,
                    female: g.female - base_gap.female,
                    pooled: g.pooled - base_gap.pooled,
                },
            })
        })
        .collect()
}

pub fn welfare_decomposition(
    base: &EconomyPrimitives,
    target: &EconomyPrimitives,
    opts: &SolverOptions,
) -> Result<Vec<WelfareColumn>> {
    let ctx = ScenarioContext::new(base, target, opts)?;
    welfare_columns(&ctx, &[1, 2, 3, 4, 5, 6])
}

/// Named scenarios; `assortativeness_scale` is listed at factor 1.5.
pub fn scenario_catalog() -> Vec<ScenarioTemplate> {
    use EquilibriumMode::{Full, Partial};
    use Toggle::*;
    let mut out = vec![
        ScenarioTemplate::new("benchmark", &[TransfersResolve], Full),
        ScenarioTemplate::new("target", &Toggle::ALL, Full),
        ScenarioTemplate::new("only_preference", &[NonpecuniaryMu, TransfersResolve], Partial),
        ScenarioTemplate::new("only_distribution", &[EducationDistribution, TransfersResolve], Partial),
        ScenarioTemplate::new(
            "random_matching_evolving",
            &[
                Wages,
                Rents,
                NonpecuniaryMu,
                EducationDistribution,
                LocationChoices,
                TransfersResolve,
            ],
            Partial,
        )
        .with_matching(MatchingMode::Random),
        ScenarioTemplate {
            marriage_feasible: false,
            ..ScenarioTemplate::new("no_marriage", &[TransfersResolve], Full)
        },
        assortativeness_scale(1.5),
    ];
    let ineq = [
        NationalEducationLevel,
        CollegePremium,
        LocationChoices,
        CityWageDifferentials,
    ];
    for (i, t) in ineq.into_iter().enumerate() {
        let name = format!("ineq_experiment_{}", i + 1);
        out.push(ScenarioTemplate::new(&name, &[t, TransfersResolve], Partial));
        out.push(
            ScenarioTemplate::new(&format!("{name}_random"), &[t, TransfersResolve], Partial)
                .with_matching(MatchingMode::Random),
        );
    }
    out.extend((1..=6).filter_map(welfare_column));
    out
}

pub fn assortativeness_scale(factor: f64) -> ScenarioTemplate {
    ScenarioTemplate {
        mu_core_scale: factor,
        ..ScenarioTemplate::new("assortativeness_scale", &[Toggle::TransfersResolve], EquilibriumMode::Full)
    }
}

/// Looks up a catalog name; `assortativeness_scale(c)` takes any factor.
pub fn scenario_by_name(name: &str) -> Result<ScenarioTemplate> {
    if let Some(arg) = name
        .strip_prefix("assortativeness_scale(")
        .and_then(|r| r.strip_suffix(')'))
    {
        let c: f64 = arg
            .trim()
            .parse()
            .map_err(|_| invalid(format!("scenario {name}: factor {arg} is not a number")))?;
        return Ok(ScenarioTemplate {
            name: name.into(),
            ..assortativeness_scale(c)
        });
    }
    scenario_catalog()
        .into_iter()
        .find(|t| t.name == name)
        .ok_or_else(|| {
            let names: Vec<String> = scenario_catalog().into_iter().map(|t| t.name).collect();
            invalid(format!("unknown scenario {name}; known: {}", names.join(", ")))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BenchmarkPeriod, CityPrimitives, HousingElasticityParams};

    fn economy() -> EconomyPrimitives {
        let city = |id: &str, a: f64, s: f64, am: f64| CityPrimitives {
            city_id: id.into(),
            productivity: a,
            skill_share: s,
            construction_cost: 1.0,
            land_unavail: 0.3,
            land_reg: 0.2,
            amenity_obs: am,
            amenity_unobs: PerPerson::splat(0.0),
            interest_rate: 1.0,
        };
        EconomyPrimitives {
            period_label: "1980".into(),
            cities: vec![city("b", 1.2, 0.45, 0.1), city("a", 1.0, 0.4, 0.0), city("c", 0.9, 0.5, -0.2)],
            national_population: PerPerson {
                mh: 1.0,
                ml: 2.0,
                fh: 0.9,
                fl: 2.1,
            },
            tech_rho: 0.577,
            housing: HousingElasticityParams::BENCHMARK,
            prefs: PreferenceParams::benchmark(BenchmarkPeriod::Y1980),
        }
    }

    #[test]
    fn unit_scale_leaves_benefits_alone() {
        let e = economy();
        assert_eq!(scale_assortativeness(&e, 1.0), e);
    }

    #[test]
    fn scaling_moves_core_and_keeps_gender_means() {
        let e = economy();
        let core = e.prefs.mu_core();
        let s = scale_assortativeness(&e, 1.5);
        assert!((s.prefs.mu_core() - 1.5 * core).abs() < 1e-12);
        for g in crate::model::Gender::ALL {
            let mean = |m: &PerPerson<PerSkill<f64>>| -> f64 {
                PersonType::ALL
                    .iter()
                    .filter(|p| p.gender == g)
                    .flat_map(|&p| [m[p].h, m[p].l])
                    .sum::<f64>()
                    / 4.0
            };
            assert!((mean(&s.prefs.mu) - mean(&e.prefs.mu)).abs() < 1e-15);
        }
        assert!(scale_assortativeness(&e, 0.0).prefs.mu_core().abs() < 1e-12);
    }

    #[test]
    fn catalog_has_named_experiments() {
        let cat = scenario_catalog();
        assert!(cat.len() >= 12);
        let e1 = scenario_by_name("ineq_experiment_1").unwrap();
        assert!(e1.toggles.contains(&Toggle::NationalEducationLevel));
        assert!(!e1.toggles.contains(&Toggle::Wages));
        let w1 = scenario_by_name("welfare_columns_1").unwrap();
        assert_eq!(w1.toggles.iter().copied().collect::<Vec<_>>(), vec![Toggle::Wages]);
        assert!(scenario_by_name("nope").is_err());
        assert_eq!(scenario_by_name("assortativeness_scale(2)").unwrap().mu_core_scale, 2.0);
    }

    #[test]
    fn welfare_columns_add_one_toggle_each() {
        for k in 2..=6 {
            let prev = welfare_column(k - 1).unwrap().toggles;
            let next = welfare_column(k).unwrap().toggles;
            assert!(prev.is_subset(&next));
            assert_eq!(next.len(), prev.len() + 1);
        }
    }

    #[test]
    fn full_mode_requires_resolved_transfers() {
        let t = ScenarioTemplate::new("x", &[Toggle::Wages], EquilibriumMode::Full);
        assert!(t.validate().is_err());
    }

    #[test]
    fn identity_scenarios_reproduce_solves() {
        let base = economy();
        let mut target = economy();
        target.period_label = "2000".into();
        for c in target.cities.iter_mut() {
            c.productivity *= 1.1;
            c.skill_share += 0.05;
        }
        target.national_population.mh *= 1.3;
        let opts = SolverOptions::default();
        let ctx = ScenarioContext::new(&base, &target, &opts).unwrap();
        let none = ctx.run(&ScenarioTemplate::new("none", &[Toggle::TransfersResolve], EquilibriumMode::Full)).unwrap();
        assert_eq!(none.equilibrium, solve_equilibrium(&base, &opts).unwrap());
        let all = ctx.run(&ScenarioTemplate::new("all", &Toggle::ALL, EquilibriumMode::Full)).unwrap();
        assert_eq!(all.equilibrium, solve_equilibrium(&target, &opts).unwrap());
        let frozen = ctx.run(&ScenarioTemplate::new("frozen", &[], EquilibriumMode::Partial)).unwrap();
        let s0 = ctx.base_state().unwrap();
        for (a, b) in frozen.equilibrium.cities.iter().zip(&s0.cities) {
            assert_eq!(a.matching, b.matching);
            assert_eq!(a.populations, b.populations);
        }
    }

    #[test]
    fn equal_periods_give_zero_welfare_changes() {
        let e = economy();
        for col in welfare_decomposition(&e, &e, &SolverOptions::default()).unwrap() {
            for v in [col.change.male, col.change.female, col.change.pooled] {
                assert!(v.abs() < 1e-12, "column {} change {v}", col.column);
            }
        }
    }

    #[test]
    fn random_matching_is_independent_per_city() {
        let e = economy();
        let s = solve_equilibrium(&e, &SolverOptions::default()).unwrap();
        let r = apply_random_matching(&s);
        for (a, b) in r.cities.iter().zip(&s.cities) {
            let lr = crate::metrics::likelihood_ratio(&a.matching.couples).unwrap();
            assert!((lr - 1.0).abs() < 1e-12);
            for p in PersonType::ALL {
                assert!((a.matching.couples.involving(p) - b.matching.couples.involving(p)).abs() < 1e-12);
            }
        }
    }
}
