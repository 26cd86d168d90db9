//! Browser bindings. Each export takes a JSON request and returns a JSON reply.

use serde::{Deserialize, Serialize};
use spatial_marriage::experiments::{scenario_by_name, ScenarioContext, ScenarioMetrics};
use spatial_marriage::io::synth::{generate_synthetic_economy, SyntheticSpec};
use spatial_marriage::labor_housing::SkillPrices;
use spatial_marriage::marriage::{city_wages, clear_marriage_market, ClearingOptions};
use spatial_marriage::metrics::{college_shares, likelihood_ratio, spousal_correlation};
use spatial_marriage::model::{BenchmarkPeriod, PerCouple, PerPerson, PreferenceParams};
use spatial_marriage::spatial_eq::{solve_equilibrium, SolverOptions};
use wasm_bindgen::prelude::*;

fn period(year: i32) -> Result<BenchmarkPeriod, String> {
    BenchmarkPeriod::ALL
        .into_iter()
        .find(|p| p.year() == year)
        .ok_or_else(|| format!("period must be 1980, 1990 or 2000, got {year}"))
}

fn parse<'a, T: Deserialize<'a>>(input: &'a str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("bad request: {e}"))
}

fn reply<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct MarketRequest {
    pub period: i32,
    pub wage_h: f64,
    pub wage_l: f64,
    pub populations: PerPerson<f64>,
    /// Multiplies the nonpecuniary benefits.
    pub mu_scale: f64,
}

impl Default for MarketRequest {
    fn default() -> Self {
        MarketRequest {
            period: 1990,
            wage_h: 1.5,
            wage_l: 1.0,
            populations: PerPerson { mh: 0.25, ml: 0.25, fh: 0.25, fl: 0.25 },
            mu_scale: 1.0,
        }
    }
}

#[derive(Debug, Serialize)]
struct MarketReply {
    transfers: PerCouple<f64>,
    couples: PerCouple<f64>,
    singles: PerPerson<f64>,
    likelihood_ratio: Option<f64>,
    correlation: Option<f64>,
    iterations: usize,
    residual: f64,
}

pub fn clear_market_json(input: &str) -> Result<String, String> {
    let req: MarketRequest = parse(input)?;
    let mut prefs = PreferenceParams::benchmark(period(req.period)?);
    prefs.mu = prefs.mu.map(|m| m.map(|v| v * req.mu_scale));
    let wages = city_wages(
        SkillPrices {
            college: req.wage_h,
            noncollege: req.wage_l,
        },
        &prefs,
    );
    let m = clear_marriage_market(&req.populations, &wages, &prefs, &ClearingOptions::default())
        .map_err(|e| e.to_string())?;
    reply(&MarketReply {
        transfers: m.transfers,
        couples: m.matching.couples,
        singles: m.matching.singles,
        likelihood_ratio: likelihood_ratio(&m.matching.couples),
        correlation: spousal_correlation(&m.matching.couples),
        iterations: m.iterations,
        residual: m.residual,
    })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct EconomyRequest {
    pub cities: usize,
    pub seed: u64,
    pub productivity_spread: f64,
    pub amenity_spread: f64,
}

impl Default for EconomyRequest {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        EconomyRequest {
            cities: 10,
            seed: 1,
            productivity_spread: d.productivity_spread,
            amenity_spread: d.amenity_spread,
        }
    }
}

impl EconomyRequest {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_cities: self.cities,
            productivity_spread: self.productivity_spread,
            amenity_spread: self.amenity_spread,
            ..SyntheticSpec::default()
        }
    }
}

#[derive(Debug, Serialize)]
struct CityRow {
    city_id: String,
    college_share: f64,
    wage_h: f64,
    wage_l: f64,
    rent: f64,
    population: f64,
    likelihood_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SolveReply {
    converged: bool,
    iterations: usize,
    max_residual: f64,
    cities: Vec<CityRow>,
}

pub fn solve_synthetic_json(input: &str) -> Result<String, String> {
    let req: EconomyRequest = parse(input)?;
    let econ = generate_synthetic_economy(&req.spec(), req.seed).map_err(|e| e.to_string())?;
    let state = solve_equilibrium(&econ, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let shares = college_shares(&state);
    reply(&SolveReply {
        converged: state.converged,
        iterations: state.iterations,
        max_residual: state.residuals.max(),
        cities: state
            .cities
            .iter()
            .zip(shares)
            .map(|(c, s)| CityRow {
                city_id: c.city_id.clone(),
                college_share: s,
                wage_h: c.wage_h,
                wage_l: c.wage_l,
                rent: c.rent,
                population: c.populations.total(),
                likelihood_ratio: likelihood_ratio(&c.matching.couples),
            })
            .collect(),
    })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct ScenarioRequest {
    #[serde(flatten)]
    pub economy: EconomyRequest,
    pub scenario: String,
}

impl Default for ScenarioRequest {
    fn default() -> Self {
        ScenarioRequest {
            economy: EconomyRequest::default(),
            scenario: "no_marriage".into(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    national_gini: f64,
    local_mean_gini: f64,
    lr_local: Option<f64>,
    lr_national: Option<f64>,
    college_share_iqr: f64,
    welfare_gap: f64,
}

impl From<&ScenarioMetrics> for Summary {
    fn from(m: &ScenarioMetrics) -> Self {
        Summary {
            national_gini: m.inequality.national,
            local_mean_gini: m.inequality.local_mean,
            lr_local: m.assortativeness.lr_local,
            lr_national: m.assortativeness.lr_national,
            college_share_iqr: m.college_share_iqr,
            welfare_gap: m.welfare.pooled,
        }
    }
}

#[derive(Debug, Serialize)]
struct ScenarioReply {
    scenario: String,
    benchmark: Summary,
    counterfactual: Summary,
}

/// Benchmark vs one catalog scenario on a synthetic economy; the target economy
/// is the benchmark itself, so only the scenario's own switches matter.
pub fn compare_scenario_json(input: &str) -> Result<String, String> {
    let req: ScenarioRequest = parse(input)?;
    let econ = generate_synthetic_economy(&req.economy.spec(), req.economy.seed).map_err(|e| e.to_string())?;
    let ctx = ScenarioContext::new(&econ, &econ, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let bench = ctx
        .run(&scenario_by_name("benchmark").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let template = scenario_by_name(&req.scenario).map_err(|e| e.to_string())?;
    let out = ctx.run(&template).map_err(|e| e.to_string())?;
    reply(&ScenarioReply {
        scenario: template.name,
        benchmark: Summary::from(&bench.metrics),
        counterfactual: Summary::from(&out.metrics),
    })
}

#[wasm_bindgen]
pub fn clear_market(input: &str) -> Result<String, JsValue> {
    clear_market_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve_synthetic(input: &str) -> Result<String, JsValue> {
    solve_synthetic_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_scenario(input: &str) -> Result<String, JsValue> {
    compare_scenario_json(input).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_market_clears() {
        let out: serde_json::Value = serde_json::from_str(&clear_market_json("{}").unwrap()).unwrap();
        assert!(out["residual"].as_f64().unwrap() < 1e-9);
        assert!(out["couples"]["HH"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn bad_period_is_reported() {
        let err = clear_market_json(r#"{"period": 1970}"#).unwrap_err();
        assert!(err.contains("1970"));
    }

    #[test]
    fn solve_returns_every_city() {
        let out: serde_json::Value =
            serde_json::from_str(&solve_synthetic_json(r#"{"cities": 4, "seed": 3}"#).unwrap()).unwrap();
        assert_eq!(out["cities"].as_array().unwrap().len(), 4);
        assert_eq!(out["converged"], true);
    }

    #[test]
    fn scenario_comparison_runs() {
        let out: serde_json::Value =
            serde_json::from_str(&compare_scenario_json(r#"{"cities": 4, "scenario": "no_marriage"}"#).unwrap())
                .unwrap();
        assert_eq!(out["scenario"], "no_marriage");
        assert!(out["counterfactual"]["lr_local"].is_null());
    }
}
