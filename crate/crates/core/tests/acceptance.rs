//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion with its sub-checks, and exits non-zero when a check fails that
//! is not listed in `KNOWN_FAILURES`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_marriage::estimation::{
    estimate_all, estimate_marriage, marriage_identification, marriage_moments, marriage_objective, CityPanel,
    EstimationOptions, MarriageOptions,
};
use spatial_marriage::estimation::marriage_gmm::{MarriageMoments, ScaledMarriageParams};
use spatial_marriage::experiments::{
    apply_random_matching, scenario_by_name, welfare_decomposition, MatchingMode, ScenarioContext,
};
use spatial_marriage::io::files::{
    load_city_panel, load_micro, read_json, render_micro, render_panel, to_json, write_panel,
};
use spatial_marriage::io::manifest::Manifest;
use spatial_marriage::io::micro::{location_frequencies, marital_frequencies, panel_from_micro, simulate_micro};
use spatial_marriage::io::synth::{
    generate_synthetic_economy, generate_synthetic_periods, synthetic_panel, tight_solver, SyntheticSpec,
};
use spatial_marriage::labor_housing::SkillPrices;
use spatial_marriage::marriage::{
    choice_probs, city_wages, clear_marriage_market, couple_income, couple_surplus, random_matching, scaled_values,
    surplus_core, CityWages, ClearingOptions,
};
use spatial_marriage::metrics::{
    assortativeness_report, household_income_units, inequality_report, likelihood_ratio, weighted_gini,
    weighted_gini_pairwise,
};
use spatial_marriage::model::{
    BenchmarkPeriod, CoupleType, EconomyPrimitives, EquilibriumState, Gender, PerCouple, PerPerson, PerSkill,
    PersonType, PreferenceParams, SkillType,
};
use spatial_marriage::spatial_eq::{location_choice_probs, solve_equilibrium, SolverOptions};
use spatial_marriage::ModelError;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

// Pinned tolerances.
const EQ_RESIDUAL_TOL: f64 = 1e-8;
const EQ_TIME_LIMIT_S: f64 = 30.0;
const MC_DRAWS: u64 = 1_000_000;
const MC_SE_BOUND: f64 = 3.0;
const RHO_TOL: f64 = 1e-6;
const PSI_TOL: f64 = 1e-6;
const SIGMA_EPS_TOL: f64 = 1e-4;
const MU_TOL: f64 = 1e-4;
const SIGMA_NU_TOL: f64 = 1e-6;
const ETA_TOL: f64 = 1e-6;
const NOISE_REPLICATIONS: u64 = 100;
const NOISE_DRAWS: u64 = 100_000;
const FLAT_OBJECTIVE_TOL: f64 = 1e-10;
const SURPLUS_TOL: f64 = 1e-12;
const CORE_TOL: f64 = 1e-12;
const SYMMETRIC_TRANSFER_TOL: f64 = 1e-10;
const ACCOUNTING_TOL: f64 = 1e-12;
const GINI_TOL: f64 = 1e-12;
const LR_TOL: f64 = 1e-12;
const DIRECTION_TOL: f64 = 1e-12;
const N_ECONOMIES: u64 = 10;

/// Checks that fail for reasons analysed in the decisions ledger. They are
/// still run and reported as FAIL.
const KNOWN_FAILURES: &[(u8, &str, &str)] = &[
    (
        3,
        "benefits per gender, noiseless",
        "only each couple's benefit sum is identified; the split between spouses moves into the transfers",
    ),
    (
        3,
        "rho with sampling noise",
        "changes in the local skill ratio do not respond to the housing-supply instruments, so the labor-demand \
         first stage is empty and 2SLS is inconsistent once cell counts carry noise",
    ),
    (
        6,
        "random matching does not raise Gini, positive core",
        "a positive core does not order spouses' incomes; in cities where married non-graduates out-earn \
         graduates, sorting compresses household incomes",
    ),
];

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn error_check(name: &str, e: impl std::fmt::Display) -> Vec<Check> {
    vec![check(name, false, format!("error: {e}"))]
}

fn known_failure(id: u8, name: &str) -> Option<&'static str> {
    KNOWN_FAILURES
        .iter()
        .find(|(c, n, _)| *c == id && *n == name)
        .map(|(_, _, why)| *why)
}

fn main() {
    let criteria: [(u8, &str, fn() -> Vec<Check>); 9] = [
        (1, "equilibrium residuals from an independent evaluator", criterion_1),
        (2, "closed-form choice probabilities vs simulated draws", criterion_2),
        (3, "estimator round trips", criterion_3),
        (4, "identification structure of the marriage moments", criterion_4),
        (5, "matching-market algebra", criterion_5),
        (6, "inequality metrics", criterion_6),
        (7, "pooling bias of the national-market view", criterion_7),
        (8, "counterfactual directions", criterion_8),
        (9, "determinism and serialization", criterion_9),
    ];
    let mut unexpected = 0;
    let mut summary = Vec::new();
    for (id, title, run) in criteria {
        let started = Instant::now();
        let checks = run();
        let pass = checks.iter().all(|c| c.pass);
        for c in &checks {
            let known = known_failure(id, &c.name);
            let note = match (c.pass, known) {
                (false, Some(why)) => format!(" [known: {why}]"),
                (false, None) => {
                    unexpected += 1;
                    String::new()
                }
                (true, Some(_)) => {
                    unexpected += 1;
                    " [listed as a known failure but passed]".to_string()
                }
                (true, None) => String::new(),
            };
            println!(
                "    criterion {id} / {}: {} ({}){note}",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.detail
            );
        }
        let line = format!(
            "{} criterion {id}: {title} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        summary.push(line);
    }
    println!("\nsummary");
    for line in &summary {
        println!("{line}");
    }
    if unexpected > 0 {
        println!("{unexpected} check(s) differ from the recorded outcome");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Equilibrium oracle, written from the model equations and sharing no code
// with the solver.

fn person_wage(p: PersonType, price: f64, married: bool, prefs: &PreferenceParams) -> f64 {
    match p.gender {
        Gender::M => price,
        Gender::F => {
            let shift = if married { prefs.delta[p.skill] } else { 0.0 };
            price * (prefs.phi[p.skill] + shift).exp()
        }
    }
}

fn price_of(s: SkillType, wage_h: f64, wage_l: f64) -> f64 {
    match s {
        SkillType::H => wage_h,
        SkillType::L => wage_l,
    }
}

/// Marital logits (spouse H, spouse L, single) on the taste scale, `None` when
/// a spouse type is absent.
fn oracle_logits(
    p: PersonType,
    wage_h: f64,
    wage_l: f64,
    rent: f64,
    transfers: &PerCouple<f64>,
    pops: &PerPerson<f64>,
    prefs: &PreferenceParams,
) -> [Option<f64>; 3] {
    let own_single = person_wage(p, price_of(p.skill, wage_h, wage_l), false, prefs);
    let housing = prefs.zeta * rent.ln();
    let single = (own_single.ln() - housing) / prefs.sigma_eps;
    let married = |s: SkillType| {
        let spouse = p.spouse(s);
        if pops[spouse] <= 0.0 {
            return None;
        }
        let own = person_wage(p, price_of(p.skill, wage_h, wage_l), true, prefs);
        let other = person_wage(spouse, price_of(s, wage_h, wage_l), true, prefs);
        let (husband_skill, wife_skill) = match p.gender {
            Gender::M => (p.skill, s),
            Gender::F => (s, p.skill),
        };
        let tau = transfers[CoupleType::new(husband_skill, wife_skill)];
        // the transfer is paid by the husband and received by the wife
        let share = if p.gender == Gender::F { tau } else { -tau };
        Some(((own + other).ln() - (1.0 + prefs.chi).ln() - housing + prefs.mu[p][s] + share) / prefs.sigma_eps)
    };
    [married(SkillType::H), married(SkillType::L), Some(single)]
}

fn oracle_softmax(logits: &[Option<f64>; 3]) -> ([f64; 3], f64) {
    let top = logits.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| v.map_or(0.0, |x| (x - top).exp())).collect();
    let total: f64 = e.iter().sum();
    ([e[0] / total, e[1] / total, e[2] / total], top + total.ln())
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Debug, Default)]
struct OracleResiduals {
    labor: f64,
    housing: f64,
    marriage: [f64; 4],
    location: f64,
}

fn oracle_residuals(econ: &EconomyPrimitives, state: &EquilibriumState) -> OracleResiduals {
    let prefs = &econ.prefs;
    let mut out = OracleResiduals::default();
    let mut city_values = Vec::new();
    for cs in &state.cities {
        let city = econ.cities.iter().find(|c| c.city_id == cs.city_id).expect("city in economy");
        let probs = PerPerson::from_fn(|p| {
            oracle_softmax(&oracle_logits(p, cs.wage_h, cs.wage_l, cs.rent, &cs.transfers, &cs.populations, prefs))
        });
        // the four sub-market flows, demanded by husbands and by wives
        let scale = cs.populations.values().sum::<f64>();
        let mut married = PerPerson::splat(0.0);
        for (k, c) in CoupleType::ALL.into_iter().enumerate() {
            let (h, w) = (c.husband_type(), c.wife_type());
            let col = |s: SkillType| if s == SkillType::H { 0 } else { 1 };
            let by_men = cs.populations[h] * probs[h].0[col(c.wife)];
            let by_women = cs.populations[w] * probs[w].0[col(c.husband)];
            out.marriage[k] = out.marriage[k].max((by_men - by_women).abs() / scale);
            married[h] += by_men;
            married[w] += by_women;
        }
        // labor market: supply in efficiency units, demand from marginal products
        let mut labor = PerSkill::splat(0.0);
        let mut income = 0.0;
        for p in PersonType::ALL {
            let price = price_of(p.skill, cs.wage_h, cs.wage_l);
            let single = cs.populations[p] - married[p];
            let units = single * person_wage(p, 1.0, false, prefs) + married[p] * person_wage(p, 1.0, true, prefs);
            labor[p.skill] += units;
            income += price * units;
        }
        let (a, alpha, rho) = (city.productivity, city.skill_share, econ.tech_rho);
        let g = alpha * labor.h.powf(rho) + (1.0 - alpha) * labor.l.powf(rho);
        let mp_h = a * alpha * labor.h.powf(rho - 1.0) * g.powf(1.0 / rho - 1.0);
        let mp_l = a * (1.0 - alpha) * labor.l.powf(rho - 1.0) * g.powf(1.0 / rho - 1.0);
        out.labor = out.labor.max(relative_gap(mp_h, cs.wage_h)).max(relative_gap(mp_l, cs.wage_l));
        // housing: demand share of income against the inverse supply curve
        let quantity = prefs.zeta * income / cs.rent;
        let psi = econ.housing.psi0
            + econ.housing.psi1 * city.land_unavail.exp()
            + econ.housing.psi2 * city.land_reg.exp();
        let supply_log_rent = city.interest_rate.ln() + city.construction_cost.ln() + psi * quantity.ln();
        out.housing = out.housing.max((supply_log_rent - cs.rent.ln()).abs());
        city_values.push(PerPerson::from_fn(|p| {
            (prefs.sigma_eps * probs[p].1 + prefs.eta * city.amenity_obs + city.amenity_unobs[p]) / prefs.sigma_nu
        }));
    }
    for p in PersonType::ALL {
        let top = city_values.iter().map(|v| v[p]).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = city_values.iter().map(|v| (v[p] - top).exp()).sum();
        for (cs, v) in state.cities.iter().zip(&city_values) {
            let implied = econ.national_population[p] * (v[p] - top).exp() / total;
            out.location = out.location.max(relative_gap(implied, cs.populations[p]));
        }
    }
    out
}

fn criterion_1() -> Vec<Check> {
    let spec = SyntheticSpec::default();
    let econ = match generate_synthetic_economy(&spec, 1) {
        Ok(e) => e,
        Err(e) => return error_check("economy", e),
    };
    let p = &econ.prefs;
    let defaults = econ.tech_rho == 0.577
        && econ.housing.psi0 == -0.001
        && econ.housing.psi1 == 0.015
        && econ.housing.psi2 == 0.051
        && p.sigma_eps == 2.728
        && p.sigma_nu == 7.072
        && p.eta == 0.085
        && p.chi == 0.7
        && p.zeta == 0.62;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let started = Instant::now();
    let solved = pool.install(|| solve_equilibrium(&econ, &SolverOptions::default()));
    let secs = started.elapsed().as_secs_f64();
    let state = match solved {
        Ok(s) => s,
        Err(e) => return error_check("solve", e),
    };
    let r = oracle_residuals(&econ, &state);
    let flows = r.marriage.iter().cloned().fold(0.0, f64::max);
    vec![
        check("defaults", defaults && econ.cities.len() == 10, format!("{} cities", econ.cities.len())),
        check("converged", state.converged, format!("{} iterations", state.iterations)),
        check("labor", r.labor < EQ_RESIDUAL_TOL, format!("{:.2e}", r.labor)),
        check("housing", r.housing < EQ_RESIDUAL_TOL, format!("{:.2e}", r.housing)),
        check(
            "marriage flows",
            flows < EQ_RESIDUAL_TOL,
            format!("HH {:.2e} HL {:.2e} LH {:.2e} LL {:.2e}", r.marriage[0], r.marriage[1], r.marriage[2], r.marriage[3]),
        ),
        check("location", r.location < EQ_RESIDUAL_TOL, format!("{:.2e}", r.location)),
        check("single-thread time", secs < EQ_TIME_LIMIT_S, format!("{secs:.3}s")),
    ]
}

// ---------------------------------------------------------------------------

fn within_se(freq: f64, p: f64, n: u64) -> (bool, f64) {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let z = if se > 0.0 { (freq - p).abs() / se } else if freq == p { 0.0 } else { f64::INFINITY };
    (z <= MC_SE_BOUND, z)
}

fn criterion_2() -> Vec<Check> {
    let mut out = Vec::new();
    // marriage: one city, so every draw lands in the same market
    let spec = SyntheticSpec {
        n_cities: 1,
        ..SyntheticSpec::default()
    };
    let solved = generate_synthetic_economy(&spec, 11).and_then(|e| {
        let s = solve_equilibrium(&e, &tight_solver())?;
        Ok((e, s))
    });
    match solved.and_then(|(e, s)| Ok((simulate_micro(&e, &s, MC_DRAWS, 21)?, e, s))) {
        Ok((records, econ, state)) => {
            let city = &state.cities[0];
            let freq = marital_frequencies(&records, &city.city_id);
            let wages = city_wages(
                SkillPrices {
                    college: city.wage_h,
                    noncollege: city.wage_l,
                },
                &econ.prefs,
            );
            let mut worst: f64 = 0.0;
            let mut ok = true;
            for p in PersonType::ALL {
                let avail = PerSkill::from_fn(|s| city.populations[p.spouse(s)] > 0.0);
                let v = scaled_values(p, &wages, city.rent, &econ.prefs, &city.transfers, avail).expect("values");
                let cp = choice_probs(&v);
                let (f, n) = freq[p];
                for (k, prob) in [cp.spouse_h, cp.spouse_l, cp.single].into_iter().enumerate() {
                    let (pass, z) = within_se(f[k], prob, n);
                    ok &= pass;
                    worst = worst.max(z);
                }
            }
            out.push(check("marital choices, 12 cells", ok, format!("max |z| {worst:.2}, {MC_DRAWS} draws per type")));
        }
        Err(e) => out.extend(error_check("marital choices, 12 cells", e)),
    }

    let spec = SyntheticSpec {
        n_cities: 5,
        ..SyntheticSpec::default()
    };
    let solved = generate_synthetic_economy(&spec, 12).and_then(|e| {
        let s = solve_equilibrium(&e, &tight_solver())?;
        Ok((e, s))
    });
    match solved.and_then(|(e, s)| Ok((simulate_micro(&e, &s, MC_DRAWS, 22)?, s))) {
        Ok((records, state)) => {
            let scaled: Vec<PerPerson<f64>> =
                state.cities.iter().map(|c| c.values.map(|v| v.scaled_value)).collect();
            let q = location_choice_probs(&scaled);
            let freq = location_frequencies(&records, &state);
            let mut worst: f64 = 0.0;
            let mut ok = true;
            for (qm, fm) in q.iter().zip(&freq) {
                for p in PersonType::ALL {
                    let (pass, z) = within_se(fm[p], qm[p], MC_DRAWS);
                    ok &= pass;
                    worst = worst.max(z);
                }
            }
            out.push(check("location choices, 20 cells", ok, format!("max |z| {worst:.2}, {MC_DRAWS} draws per type")));
        }
        Err(e) => out.extend(error_check("location choices, 20 cells", e)),
    }
    out
}

// ---------------------------------------------------------------------------

fn true_mu(econ: &EconomyPrimitives) -> PerPerson<PerSkill<f64>> {
    econ.prefs.mu
}

fn true_mu_sum(econ: &EconomyPrimitives, c: CoupleType) -> f64 {
    econ.prefs.mu[c.husband_type()][c.wife] + econ.prefs.mu[c.wife_type()][c.husband]
}

fn criterion_3() -> Vec<Check> {
    let mut out = noiseless_round_trip();
    out.extend(noisy_round_trip());
    out
}

fn noiseless_round_trip() -> Vec<Check> {
    let periods = match generate_synthetic_periods(&SyntheticSpec::default(), 42) {
        Ok(p) => p,
        Err(e) => return error_check("noiseless panel", e),
    };
    let sp = match synthetic_panel(&periods, &tight_solver()) {
        Ok(p) => p,
        Err(e) => return error_check("noiseless panel", e),
    };
    let est = match estimate_all(&sp.panel, &EstimationOptions::default()) {
        Ok(e) => e,
        Err(e) => return error_check("noiseless estimate", e),
    };
    let truth = &sp.economies[0];
    let h = truth.housing;
    let psi_gap = [h.psi0, h.psi1, h.psi2]
        .iter()
        .zip(est.housing.psi)
        .map(|(t, e)| (t - e).abs())
        .fold(0.0, f64::max);
    let rho_gap = (est.labor.rho - truth.tech_rho).abs();
    let eps_gap = (est.marriage.sigma_eps - truth.prefs.sigma_eps).abs();
    let nu_gap = (est.location.sigma_nu - truth.prefs.sigma_nu).abs();
    let eta_gap = (est.location.eta - truth.prefs.eta).abs();

    let mut sum_gap: f64 = 0.0;
    for (period, sums) in &est.marriage.mu_sum {
        let econ = sp.economies.iter().find(|e| e.period_label == period.to_string()).expect("period");
        for c in CoupleType::ALL {
            sum_gap = sum_gap.max((sums[c] - true_mu_sum(econ, c)).abs());
        }
    }
    let mut split_gap: f64 = 0.0;
    for b in &est.marriage.mu {
        let econ = sp.economies.iter().find(|e| e.period_label == b.period.to_string()).expect("period");
        let t = true_mu(econ);
        for p in PersonType::ALL {
            for s in SkillType::ALL {
                split_gap = split_gap.max((b.mu[p][s] - t[p][s]).abs());
            }
        }
    }
    vec![
        check("rho, noiseless", rho_gap <= RHO_TOL, format!("|error| {rho_gap:.2e}")),
        check("psi, noiseless", psi_gap <= PSI_TOL, format!("max |error| {psi_gap:.2e}")),
        check("sigma_eps, noiseless", eps_gap <= SIGMA_EPS_TOL, format!("|error| {eps_gap:.2e}")),
        check(
            "benefit sums, noiseless",
            sum_gap <= MU_TOL,
            format!("max |error| {sum_gap:.2e} over {} periods x 4 couples", est.marriage.mu_sum.len()),
        ),
        check("benefits per gender, noiseless", split_gap <= MU_TOL, format!("max |error| {split_gap:.2e}")),
        check("sigma_nu, noiseless", nu_gap <= SIGMA_NU_TOL, format!("|error| {nu_gap:.2e}")),
        check("eta, noiseless", eta_gap <= ETA_TOL, format!("|error| {eta_gap:.2e}")),
    ]
}

/// Design for the noisy replications: more cities and wider skill-share
/// dispersion than the default, so that the taste scale is well determined
/// at the simulated sample size.
fn noisy_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_cities: 30,
        skill_share_spread: 0.8,
        ..SyntheticSpec::default()
    }
}

fn noisy_round_trip() -> Vec<Check> {
    let periods = match generate_synthetic_periods(&noisy_spec(), 42) {
        Ok(p) => p,
        Err(e) => return error_check("noisy panel", e),
    };
    let sp = match synthetic_panel(&periods, &tight_solver()) {
        Ok(p) => p,
        Err(e) => return error_check("noisy panel", e),
    };
    let truth = &sp.economies[0];
    let mut names = vec!["rho", "psi0", "psi1", "psi2", "sigma_eps", "sigma_nu", "eta"];
    let mut targets = vec![
        truth.tech_rho,
        truth.housing.psi0,
        truth.housing.psi1,
        truth.housing.psi2,
        truth.prefs.sigma_eps,
        truth.prefs.sigma_nu,
        truth.prefs.eta,
    ];
    let mut sum_labels = Vec::new();
    for econ in &sp.economies {
        for c in CoupleType::ALL {
            sum_labels.push(format!("{} {}", econ.period_label, c.label()));
            targets.push(true_mu_sum(econ, c));
        }
    }
    names.extend(sum_labels.iter().map(|s| s.as_str()));

    let mut draws: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];
    let mut failures = 0;
    for r in 0..NOISE_REPLICATIONS {
        let mut rows = Vec::new();
        for (econ, state) in sp.economies.iter().zip(&sp.states) {
            match simulate_micro(econ, state, NOISE_DRAWS, 1000 + r).and_then(|recs| panel_from_micro(&recs, econ, state)) {
                Ok(p) => rows.extend(p.rows),
                Err(_) => failures += 1,
            }
        }
        let panel = CityPanel {
            rows,
            industry: sp.panel.industry.clone(),
            national_wages: sp.panel.national_wages.clone(),
        };
        match estimate_all(&panel, &EstimationOptions::default()) {
            Ok(e) => {
                let mut v = vec![
                    e.labor.rho,
                    e.housing.psi[0],
                    e.housing.psi[1],
                    e.housing.psi[2],
                    e.marriage.sigma_eps,
                    e.location.sigma_nu,
                    e.location.eta,
                ];
                for (_, sums) in &e.marriage.mu_sum {
                    v.extend(CoupleType::ALL.iter().map(|&c| sums[c]));
                }
                if v.len() == targets.len() {
                    for (d, x) in draws.iter_mut().zip(v) {
                        d.push(x);
                    }
                } else {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let mc = |k: usize| {
        let v = &draws[k];
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        let z = (mean - targets[k]) / se;
        (mean, se, z)
    };
    let mut out = vec![check(
        "replications completed",
        failures == 0,
        format!("{} of {NOISE_REPLICATIONS}, {NOISE_DRAWS} draws per type and period", draws[0].len()),
    )];
    for (k, name) in names.iter().enumerate().take(7) {
        let (mean, se, z) = mc(k);
        out.push(check(
            format!("{name} with sampling noise"),
            z.abs() <= MC_SE_BOUND,
            format!("truth {} mean {mean:.5} MC se {se:.2e} z {z:.2}", targets[k]),
        ));
    }
    let sums: Vec<(f64, f64, f64)> = (7..targets.len()).map(mc).collect();
    let worst = sums.iter().map(|s| s.2.abs()).fold(0.0, f64::max);
    out.push(check(
        "benefit sums with sampling noise",
        worst <= MC_SE_BOUND,
        format!("{} sums, max |z| {worst:.2}", sums.len()),
    ));
    out
}

// ---------------------------------------------------------------------------

/// Transfers minimizing the objective for the given inverse scale and benefits.
fn profiled_params(moments: &MarriageMoments, s: f64, mu: &BTreeMap<i32, PerPerson<PerSkill<f64>>>) -> ScaledMarriageParams {
    let mut tau: BTreeMap<(String, i32), PerCouple<f64>> = BTreeMap::new();
    for cell in &moments.cells {
        let m = &mu[&cell.period];
        let a_m = cell.log_odds[0] - s * cell.log_gain[0] - m[cell.couple.husband_type()][cell.couple.wife];
        let a_f = cell.log_odds[1] - s * cell.log_gain[1] - m[cell.couple.wife_type()][cell.couple.husband];
        let [w_m, w_f] = cell.weight;
        tau.entry((cell.city_id.clone(), cell.period)).or_insert_with(|| PerCouple::splat(0.0))[cell.couple] =
            (w_f * a_f - w_m * a_m) / (w_m + w_f);
    }
    ScaledMarriageParams {
        inverse_scale: s,
        mu: mu.clone(),
        tau,
    }
}

/// Moves along a direction over (inverse scale, husband benefits, wife benefits)
/// per (period, couple) group in key order, then re-profiles the transfers.
fn shifted_objective(
    moments: &MarriageMoments,
    s: f64,
    mu: &BTreeMap<i32, PerPerson<PerSkill<f64>>>,
    direction: &[f64],
    step: f64,
) -> f64 {
    let groups: BTreeSet<(i32, CoupleType)> = moments.cells.iter().map(|c| (c.period, c.couple)).collect();
    let g = groups.len();
    let mut mu = mu.clone();
    for (j, (period, c)) in groups.iter().enumerate() {
        let m = mu.get_mut(period).expect("period");
        m[c.husband_type()][c.wife] += step * direction[1 + j];
        m[c.wife_type()][c.husband] += step * direction[1 + g + j];
    }
    let params = profiled_params(moments, s + step * direction[0], &mu);
    marriage_objective(moments, &params).expect("objective")
}

fn panel_for(n_cities: usize) -> Result<(CityPanel, Vec<EconomyPrimitives>), ModelError> {
    let spec = SyntheticSpec {
        n_cities,
        ..SyntheticSpec::default()
    };
    let periods = generate_synthetic_periods(&spec, 5)?;
    let sp = synthetic_panel(&periods, &tight_solver())?;
    Ok((sp.panel, sp.economies))
}

fn criterion_4() -> Vec<Check> {
    let mut out = Vec::new();
    let opts = MarriageOptions::default();
    match panel_for(1).and_then(|(p, e)| Ok((marriage_moments(&p, &opts)?, p, e))) {
        Ok((moments, panel, economies)) => {
            let report = marriage_identification(&moments);
            out.push(check(
                "single city: rank deficiency detected",
                report.extra_flat_directions >= 1,
                format!(
                    "{} parameters, rank {}, {} flat direction(s) beyond the benefit split",
                    report.n_params, report.hessian_rank, report.extra_flat_directions
                ),
            ));
            let reported = matches!(estimate_marriage(&panel, &opts), Err(ModelError::RankDeficiency(_)));
            out.push(check("single city: estimator reports it", reported, "RankDeficiency error"));
            // evaluate the objective along the reported direction, away from the truth
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut jitter = || (rng.next_u64() as f64 / u64::MAX as f64 - 0.5) * 0.4;
            let s0 = 1.0 / economies[0].prefs.sigma_eps + jitter();
            let mu0: BTreeMap<i32, PerPerson<PerSkill<f64>>> = economies
                .iter()
                .map(|e| {
                    let period: i32 = e.period_label.parse().expect("year label");
                    let m = e.prefs.mu.map(|row| row.map(|v| v / e.prefs.sigma_eps));
                    (period, m)
                })
                .collect();
            let mu0: BTreeMap<_, _> = mu0.into_iter().map(|(k, m)| (k, m.map(|row| row.map(|v| v + jitter())))).collect();
            match report.flat_directions.first() {
                Some(d) => {
                    let base = shifted_objective(&moments, s0, &mu0, d, 0.0);
                    let moved = [0.5, -1.0, 2.0].map(|t| shifted_objective(&moments, s0, &mu0, d, t));
                    let drift = moved.iter().map(|f| (f - base).abs()).fold(0.0, f64::max) / base.max(1.0);
                    let mut scale_only = vec![0.0; d.len()];
                    scale_only[0] = 1.0;
                    let off = shifted_objective(&moments, s0, &mu0, &scale_only, 0.5);
                    out.push(check(
                        "single city: objective flat along the direction",
                        drift <= FLAT_OBJECTIVE_TOL && off > base * (1.0 + 1e-3),
                        format!("objective {base:.4e}, drift {drift:.1e}, moving the scale alone gives {off:.4e}"),
                    ));
                }
                None => out.push(check("single city: objective flat along the direction", false, "no direction reported")),
            }
        }
        Err(e) => out.extend(error_check("single city", e)),
    }
    match panel_for(10).and_then(|(p, _)| Ok((marriage_moments(&p, &opts)?, p))) {
        Ok((moments, panel)) => {
            let report = marriage_identification(&moments);
            out.push(check(
                "ten cities: no flat direction",
                report.extra_flat_directions == 0 && estimate_marriage(&panel, &opts).is_ok(),
                format!("rank {} of {}, structural splits {}", report.hessian_rank, report.n_params, report.structural_nullity),
            ));
        }
        Err(e) => out.extend(error_check("ten cities", e)),
    }
    out
}

// ---------------------------------------------------------------------------

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() as f64 / u64::MAX as f64)
}

fn random_prefs(rng: &mut ChaCha8Rng) -> PreferenceParams {
    let mut prefs = PreferenceParams::benchmark(BenchmarkPeriod::ALL[(rng.next_u64() % 3) as usize]);
    prefs.mu = PerPerson::from_fn(|_| PerSkill::from_fn(|_| uniform(rng, -4.0, 1.0)));
    prefs.phi = PerSkill::from_fn(|_| uniform(rng, -0.5, 0.0));
    prefs.delta = PerSkill::from_fn(|_| uniform(rng, -0.4, 0.0));
    prefs.sigma_eps = uniform(rng, 0.5, 4.0);
    prefs
}

fn random_wages(rng: &mut ChaCha8Rng, prefs: &PreferenceParams) -> CityWages {
    city_wages(
        SkillPrices {
            college: uniform(rng, 0.5, 3.0),
            noncollege: uniform(rng, 0.3, 1.5),
        },
        prefs,
    )
}

fn random_pops(rng: &mut ChaCha8Rng) -> PerPerson<f64> {
    PerPerson::from_fn(|_| uniform(rng, 0.05, 1.0))
}

fn criterion_5() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let trials = 200;

    let mut surplus_gap: f64 = 0.0;
    for _ in 0..trials {
        let prefs = random_prefs(&mut rng);
        let wages = random_wages(&mut rng, &prefs);
        let rent = uniform(&mut rng, 0.5, 2.0);
        let transfers = PerCouple::from_fn(|_| uniform(&mut rng, -3.0, 3.0));
        let avail = PerSkill::splat(true);
        let values = PerPerson::from_fn(|p| scaled_values(p, &wages, rent, &prefs, &transfers, avail).expect("values"));
        for c in CoupleType::ALL {
            let (h, w) = (values[c.husband_type()], values[c.wife_type()]);
            let with_transfers =
                prefs.sigma_eps * ((h.spouse[c.wife] - h.single) + (w.spouse[c.husband] - w.single));
            let reference = couple_surplus(c, &wages, &prefs);
            surplus_gap = surplus_gap.max((with_transfers - reference).abs() / reference.abs().max(1.0));
        }
    }

    let mut core_gap: f64 = 0.0;
    for _ in 0..trials {
        let mut prefs = random_prefs(&mut rng);
        prefs.phi = PerSkill::splat(0.0);
        prefs.delta = PerSkill::splat(0.0);
        let own = PerPerson::from_fn(|_| uniform(&mut rng, -3.0, 0.0));
        let partner = PerPerson::from_fn(|_| uniform(&mut rng, -1.0, 1.0));
        // benefit = own-type term + spouse-type term
        prefs.mu = PerPerson::from_fn(|p| PerSkill::from_fn(|s| own[p] + partner[p.spouse(s)]));
        let price = uniform(&mut rng, 0.5, 2.0);
        let wages = city_wages(
            SkillPrices {
                college: price,
                noncollege: price,
            },
            &prefs,
        );
        core_gap = core_gap.max(surplus_core(&wages, &prefs).abs());
    }

    // gender-swap symmetry: equal populations and benefits for both genders,
    // with the fully symmetric case also equal across skills on the diagonal
    let mut symmetric_gap: f64 = 0.0;
    let mut mirrored_gap: f64 = 0.0;
    for trial in 0..trials {
        let full = trial % 2 == 0;
        let mut prefs = random_prefs(&mut rng);
        prefs.phi = PerSkill::splat(0.0);
        prefs.delta = PerSkill::splat(0.0);
        let same = uniform(&mut rng, -4.0, 1.0);
        let (hh, ll) = if full { (same, same) } else { (uniform(&mut rng, -4.0, 1.0), uniform(&mut rng, -4.0, 1.0)) };
        let (hl, lh) = (uniform(&mut rng, -4.0, 1.0), uniform(&mut rng, -4.0, 1.0));
        let (hl, lh) = if full { (hl, hl) } else { (hl, lh) };
        let m = PerSkill {
            h: PerSkill { h: hh, l: hl },
            l: PerSkill { h: lh, l: ll },
        };
        prefs.mu = PerPerson::from_fn(|p| m[p.skill]);
        let price = uniform(&mut rng, 0.5, 2.0);
        let wages = city_wages(
            SkillPrices {
                college: price,
                noncollege: price,
            },
            &prefs,
        );
        let (h, l) = (uniform(&mut rng, 0.05, 1.0), uniform(&mut rng, 0.05, 1.0));
        let (h, l) = if full { (h, h) } else { (h, l) };
        let pops = PerPerson::from_fn(|p| if p.skill == SkillType::H { h } else { l });
        match clear_marriage_market(&pops, &wages, &prefs, &ClearingOptions::default()) {
            Ok(mc) => {
                let t = mc.transfers;
                if full {
                    symmetric_gap = symmetric_gap.max(t.values().map(|v| v.abs()).fold(0.0, f64::max));
                } else {
                    mirrored_gap = mirrored_gap.max(t.hh.abs()).max(t.ll.abs()).max((t.hl + t.lh).abs());
                }
            }
            Err(_) => symmetric_gap = f64::INFINITY,
        }
    }

    let mut accounting_gap: f64 = 0.0;
    let mut flow_gap: f64 = 0.0;
    for _ in 0..trials {
        let prefs = random_prefs(&mut rng);
        let wages = random_wages(&mut rng, &prefs);
        let pops = random_pops(&mut rng);
        match clear_marriage_market(&pops, &wages, &prefs, &ClearingOptions::default()) {
            Ok(mc) => {
                let t = &mc.matching;
                for p in PersonType::ALL {
                    let married: f64 = SkillType::ALL.iter().map(|&s| t.couples[p.couple_with(s)]).sum();
                    accounting_gap = accounting_gap.max((married + t.singles[p] - pops[p]).abs() / pops[p]);
                }
                flow_gap = flow_gap.max(mc.residual);
            }
            Err(_) => accounting_gap = f64::INFINITY,
        }
    }
    vec![
        check(
            "couple surplus invariant to transfers",
            surplus_gap <= SURPLUS_TOL,
            format!("max gap {surplus_gap:.1e} over {trials} markets"),
        ),
        check("separable surplus has zero core", core_gap <= CORE_TOL, format!("max |core| {core_gap:.1e}")),
        check(
            "symmetric markets clear at zero transfers",
            symmetric_gap <= SYMMETRIC_TRANSFER_TOL,
            format!("max |transfer| {symmetric_gap:.1e}"),
        ),
        check(
            "gender-mirrored markets: zero same-education and opposite mixed transfers",
            mirrored_gap <= SYMMETRIC_TRANSFER_TOL,
            format!("max gap {mirrored_gap:.1e}"),
        ),
        check(
            "clearing preserves type accounting",
            accounting_gap <= ACCOUNTING_TOL,
            format!("max relative gap {accounting_gap:.1e}, max flow residual {flow_gap:.1e}"),
        ),
    ]
}

// ---------------------------------------------------------------------------

/// Solved default economies with a positive surplus core in every city.
/// With `college_earns_more`, every city must also pay married college
/// graduates more than married non-graduates of the same gender.
fn qualifying_economies(count: u64, college_earns_more: bool) -> Vec<(u64, EconomyPrimitives, EquilibriumState)> {
    let mut out = Vec::new();
    for seed in 0..count * 5 {
        if out.len() as u64 == count {
            break;
        }
        let Ok(econ) = generate_synthetic_economy(&SyntheticSpec::default(), 100 + seed) else {
            continue;
        };
        let Ok(state) = solve_equilibrium(&econ, &tight_solver()) else {
            continue;
        };
        let qualifies = state.cities.iter().all(|c| {
            let w = city_wages(
                SkillPrices {
                    college: c.wage_h,
                    noncollege: c.wage_l,
                },
                &econ.prefs,
            );
            let premium = [Gender::M, Gender::F].iter().all(|&g| {
                w.married[PersonType { gender: g, skill: SkillType::H }]
                    >= w.married[PersonType { gender: g, skill: SkillType::L }]
            });
            surplus_core(&w, &econ.prefs) > 0.0 && (premium || !college_earns_more)
        });
        if qualifies && state.converged {
            out.push((seed, econ, state));
        }
    }
    out
}

/// Smallest assortative-minus-random Gini gap over national and local Gini,
/// and the seed where it occurs.
fn gini_ordering(economies: &[(u64, EconomyPrimitives, EquilibriumState)]) -> (f64, u64) {
    let mut worst = (f64::INFINITY, 0);
    for (seed, econ, state) in economies {
        let random = apply_random_matching(state);
        let am = inequality_report(state, &econ.prefs).expect("gini");
        let rm = inequality_report(&random, &econ.prefs).expect("gini");
        let mut margins = vec![am.national - rm.national];
        margins.extend(am.local.iter().zip(&rm.local).map(|(a, r)| a.1 - r.1));
        let m = margins.into_iter().fold(f64::INFINITY, f64::min);
        if m < worst.0 {
            worst = (m, *seed);
        }
    }
    worst
}

fn criterion_6() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut formula_gap: f64 = 0.0;
    let mut scale_exact = true;
    for n in [1usize, 2, 7, 50, 400] {
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.0, 10.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.01, 3.0)).collect();
            let sorted = weighted_gini(&x, &w).expect("gini");
            let pairwise = weighted_gini_pairwise(&x, &w).expect("gini");
            formula_gap = formula_gap.max((sorted - pairwise).abs());
            for k in [-3, 1, 5] {
                let f = 2f64.powi(k);
                let xs: Vec<f64> = x.iter().map(|v| v * f).collect();
                let ws: Vec<f64> = w.iter().map(|v| v * f).collect();
                scale_exact &= weighted_gini(&xs, &w).expect("gini") == sorted;
                scale_exact &= weighted_gini(&x, &ws).expect("gini") == sorted;
            }
        }
    }

    // couple earning 2 and 1.4 with equivalence scale 0.7
    let mut prefs = PreferenceParams::benchmark(BenchmarkPeriod::ALL[0]);
    prefs.chi = 0.7;
    let mut wages = city_wages(
        SkillPrices {
            college: 1.0,
            noncollege: 1.0,
        },
        &prefs,
    );
    wages.married[PersonType { gender: Gender::M, skill: SkillType::H }] = 2.0;
    wages.married[PersonType { gender: Gender::F, skill: SkillType::H }] = 1.4;
    let equivalized = couple_income(CoupleType::new(SkillType::H, SkillType::H), &wages, prefs.chi);

    let economies = qualifying_economies(N_ECONOMIES, false);
    let mut lr_gap: f64 = 0.0;
    let mut units_ok = true;
    for (_, econ, state) in &economies {
        let random = apply_random_matching(state);
        for c in &random.cities {
            lr_gap = lr_gap.max(likelihood_ratio(&c.matching.couples).map_or(f64::INFINITY, |v| (v - 1.0).abs()));
        }
        for c in &state.cities {
            let units = household_income_units(c, &econ.prefs);
            let mass: f64 = units.iter().map(|u| u.1).sum();
            units_ok &= relative_gap(mass, c.matching.couples.total() + c.matching.singles.total()) < 1e-12;
        }
    }
    let enough = economies.len() as u64 == N_ECONOMIES;
    let (margin, at) = gini_ordering(&economies);
    let ordered = qualifying_economies(N_ECONOMIES, true);
    let (ordered_margin, ordered_at) = gini_ordering(&ordered);
    vec![
        check("sorted and pairwise Gini agree", formula_gap <= GINI_TOL, format!("max gap {formula_gap:.1e}")),
        check("Gini scale invariance", scale_exact, "power-of-two rescaling of incomes and weights, bitwise equal"),
        check("equivalized couple income", equivalized == 2.0, format!("(2 + 1.4) / 1.7 = {equivalized:?}")),
        check("household units cover every adult unit", units_ok, "couples plus singles"),
        check(
            "random matching has unit likelihood ratio",
            enough && lr_gap <= LR_TOL,
            format!("{} economies with positive core in every city, max |LR - 1| {lr_gap:.1e}", economies.len()),
        ),
        check(
            "random matching does not raise Gini, positive core",
            enough && margin >= -GINI_TOL,
            format!("min (assortative - random) over national and local Gini {margin:.3e} at seed {}", 100 + at),
        ),
        check(
            "random matching does not raise Gini, positive core and college premium",
            ordered.len() as u64 == N_ECONOMIES && ordered_margin >= -GINI_TOL,
            format!(
                "{} economies, min (assortative - random) {ordered_margin:.3e} at seed {}",
                ordered.len(),
                100 + ordered_at
            ),
        ),
    ]
}

// ---------------------------------------------------------------------------

fn criterion_7() -> Vec<Check> {
    let spec = SyntheticSpec {
        n_cities: 2,
        ..SyntheticSpec::default()
    };
    // college graduates favour the first city, everyone else the second
    let segregated = generate_synthetic_economy(&spec, 7).map(|mut e| {
        for (m, city) in e.cities.iter_mut().enumerate() {
            city.amenity_unobs = PerPerson::from_fn(|p| if (p.skill == SkillType::H) == (m == 0) { 10.0 } else { 0.0 });
        }
        e
    });
    let solved = segregated.and_then(|e| {
        let s = solve_equilibrium(&e, &tight_solver())?;
        Ok((e, s))
    });
    let (econ, state) = match solved {
        Ok(v) => v,
        Err(e) => return error_check("two-city economy", e),
    };
    let shares: Vec<f64> = state
        .cities
        .iter()
        .map(|c| {
            let h: f64 = PersonType::ALL.iter().filter(|p| p.skill == SkillType::H).map(|&p| c.populations[p]).sum();
            h / c.populations.total()
        })
        .collect();
    let random = apply_random_matching(&state);
    let report = match assortativeness_report(&econ, &random) {
        Ok(r) => r,
        Err(e) => return error_check("assortativeness report", e),
    };
    let local_lr = report
        .cities
        .iter()
        .map(|c| c.likelihood_ratio.map_or(f64::INFINITY, |v| (v - 1.0).abs()))
        .fold(0.0, f64::max);
    let local_corr = report
        .cities
        .iter()
        .map(|c| c.correlation.map_or(f64::INFINITY, f64::abs))
        .fold(0.0, f64::max);
    let lr_nat = report.lr_national.unwrap_or(f64::NAN);
    let corr_nat = report.correlation_national.unwrap_or(f64::NAN);
    // the same pooling applied to an explicit independent table
    let pooled_direct = {
        let mut sum = PerCouple::splat(0.0);
        for c in &state.cities {
            let t = random_matching(&c.populations, &c.matching);
            for k in CoupleType::ALL {
                sum[k] += t.couples[k];
            }
        }
        likelihood_ratio(&sum).unwrap_or(f64::NAN)
    };
    vec![
        check(
            "cities are segregated by education",
            (shares[0] - shares[1]).abs() > 0.2,
            format!("college shares {:.3} and {:.3}", shares[0], shares[1]),
        ),
        check("local likelihood ratios equal one", local_lr <= LR_TOL, format!("max |LR - 1| {local_lr:.1e}")),
        check("local correlations equal zero", local_corr <= LR_TOL, format!("max |corr| {local_corr:.1e}")),
        check(
            "pooled likelihood ratio above one",
            lr_nat > 1.0 && (lr_nat - pooled_direct).abs() < 1e-12,
            format!("pooled LR {lr_nat:.6}"),
        ),
        check("pooled correlation above zero", corr_nat > 0.0, format!("pooled corr {corr_nat:.6}")),
    ]
}

// ---------------------------------------------------------------------------

fn criterion_8() -> Vec<Check> {
    let mut iqr_scaled = (true, f64::INFINITY);
    let mut iqr_no_marriage = (true, f64::INFINITY);
    let mut premium = (true, f64::INFINITY);
    let mut decomposition = (true, 0.0f64);
    let mut errors = Vec::new();
    let opts = tight_solver();
    for seed in 0..N_ECONOMIES {
        let mut run = || -> Result<(), ModelError> {
            let periods = generate_synthetic_periods(&SyntheticSpec::default(), seed)?;
            let base = &periods.economies[0];
            let target = periods.economies.last().expect("periods");
            let ctx = ScenarioContext::new(base, target, &opts)?;
            let bench = ctx.run(&scenario_by_name("benchmark")?)?;
            let scaled = ctx.run(&scenario_by_name("assortativeness_scale(1.5)")?)?;
            let none = ctx.run(&scenario_by_name("no_marriage")?)?;
            let d = scaled.metrics.college_share_iqr - bench.metrics.college_share_iqr;
            iqr_scaled.0 &= d >= -DIRECTION_TOL;
            iqr_scaled.1 = iqr_scaled.1.min(d);
            let d = none.metrics.college_share_iqr - bench.metrics.college_share_iqr;
            iqr_no_marriage.0 &= d >= -DIRECTION_TOL;
            iqr_no_marriage.1 = iqr_no_marriage.1.min(d);

            let bench_random = ctx.run(&scenario_by_name("benchmark")?.with_matching(MatchingMode::Random))?;
            let am = ctx.run(&scenario_by_name("ineq_experiment_2")?)?;
            let rm = ctx.run(&scenario_by_name("ineq_experiment_2_random")?)?;
            let rise_am = am.metrics.inequality.national - bench.metrics.inequality.national;
            let rise_rm = rm.metrics.inequality.national - bench_random.metrics.inequality.national;
            premium.0 &= rise_am > rise_rm;
            premium.1 = premium.1.min(rise_am - rise_rm);

            for col in welfare_decomposition(base, base, &opts)? {
                let m = [col.change.male, col.change.female, col.change.pooled]
                    .iter()
                    .map(|v| v.abs())
                    .fold(0.0, f64::max);
                decomposition.0 &= m == 0.0;
                decomposition.1 = decomposition.1.max(m);
            }
            Ok(())
        };
        if let Err(e) = run() {
            errors.push(format!("seed {seed}: {e}"));
        }
    }
    let ok = errors.is_empty();
    let suffix = if ok { String::new() } else { format!("; {}", errors.join("; ")) };
    vec![
        check(
            "stronger assortative core widens college-share IQR",
            ok && iqr_scaled.0,
            format!("{N_ECONOMIES} economies, min change {:.3e}{suffix}", iqr_scaled.1),
        ),
        check(
            "no marriage widens college-share IQR",
            ok && iqr_no_marriage.0,
            format!("min change {:.3e}", iqr_no_marriage.1),
        ),
        check(
            "college premium raises Gini more under assortative matching",
            ok && premium.0,
            format!("min (assortative - random) rise {:.3e}", premium.1),
        ),
        check(
            "welfare decomposition with base = target is zero",
            ok && decomposition.0,
            format!("max |change| {:.1e}", decomposition.1),
        ),
    ]
}

// ---------------------------------------------------------------------------

fn cli(args: &[&str], threads: usize) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spmarriage"))
        .args(args)
        .env("SPMARRIAGE_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("dir").flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("prefix").display().to_string();
                out.insert(rel, std::fs::read(&path).expect("file"));
            }
        }
    }
    out
}

/// Runs every subcommand into `root`. The synth step writes its own copy;
/// later steps read the shared inputs under `inputs` so that manifests name
/// the same input files.
fn run_pipeline(root: &Path, inputs: &Path, threads: usize) -> Result<(), String> {
    let s = |p: &Path| p.display().to_string();
    cli(
        &["synth", "--cities", "6", "--periods", "3", "--micro", "3000", "--panel", "--seed", "7", "--out-dir", &s(&root.join("synth"))],
        threads,
    )?;
    let synth = inputs.join("synth");
    let econ = synth.join("economy.json");
    let target = synth.join("economy_target.json");
    cli(&["solve", &s(&econ), "--out-dir", &s(&root.join("solve"))], threads)?;
    cli(&["solve", &s(&econ), "--format", "json", "--out-dir", &s(&root.join("solve_json"))], threads)?;
    cli(&["estimate", &s(&synth), "--out-dir", &s(&root.join("estimate"))], threads)?;
    cli(
        &[
            "scenario",
            "--base",
            &s(&econ),
            "--target",
            &s(&target),
            "--name",
            "no_marriage",
            "--name",
            "ineq_experiment_2_random",
            "--name",
            "welfare_decomposition",
            "--out-dir",
            &s(&root.join("scenario")),
        ],
        threads,
    )?;
    let state = inputs.join("solve/state.json");
    cli(&["metrics", "--economy", &s(&econ), "--state", &s(&state), "--out-dir", &s(&root.join("metrics"))], threads)?;
    Ok(())
}

fn text_round_trip<T, F>(path: &Path, render: F) -> Result<bool, String>
where
    T: serde::de::DeserializeOwned + serde::Serialize + PartialEq,
    F: Fn(&T) -> String,
{
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: T = read_json(path).map_err(|e| e.to_string())?;
    let again: T = serde_json::from_str(&render(&value)).map_err(|e| e.to_string())?;
    Ok(render(&value) == text && again == value)
}

fn criterion_9() -> Vec<Check> {
    let dir = tempfile::tempdir().expect("tempdir");
    let one = dir.path().join("t1");
    let four = dir.path().join("t4");
    let mut out = Vec::new();
    let runs = run_pipeline(&one, &one, 1).and_then(|_| run_pipeline(&four, &one, 4));
    if let Err(e) = runs {
        return error_check("command-line pipeline", e);
    }
    let (a, b) = (tree(&one), tree(&four));
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    out.push(check(
        "outputs byte-identical at 1 and 4 threads",
        a.len() == b.len() && differing.is_empty() && !a.is_empty(),
        if differing.is_empty() {
            format!("{} files across synth, solve, estimate, scenario, metrics", a.len())
        } else {
            format!("differ: {differing:?}")
        },
    ));

    // in-process micro draws under different pools
    let econ: EconomyPrimitives = read_json(&one.join("synth/economy.json")).expect("economy");
    let state: EquilibriumState = read_json(&one.join("solve/state.json")).expect("state");
    let draw = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("pool")
            .install(|| simulate_micro(&econ, &state, 20_000, 3))
            .expect("micro")
    };
    out.push(check("micro draws identical at 1, 2 and 4 threads", draw(1) == draw(2) && draw(1) == draw(4), "80000 records"));

    let synth = one.join("synth");
    let mut failures = Vec::new();
    let mut note = |name: &str, r: Result<bool, String>| match r {
        Ok(true) => {}
        Ok(false) => failures.push(name.to_string()),
        Err(e) => failures.push(format!("{name}: {e}")),
    };
    note("economy json", text_round_trip::<EconomyPrimitives, _>(&synth.join("economy.json"), to_json));
    note("economies json", text_round_trip::<Vec<EconomyPrimitives>, _>(&synth.join("economies.json"), to_json));
    note("synthetic spec json", text_round_trip::<SyntheticSpec, _>(&synth.join("synthetic_spec.json"), to_json));
    note("state json", text_round_trip::<EquilibriumState, _>(&one.join("solve/state.json"), to_json));
    note("manifest json", text_round_trip::<Manifest, _>(&one.join("estimate/manifest.json"), to_json));
    note(
        "estimates json",
        text_round_trip::<spatial_marriage::estimation::Estimates, _>(&one.join("estimate/estimates.json"), to_json),
    );
    note(
        "panel csv",
        (|| {
            let panel = load_city_panel(&synth).map_err(|e| e.to_string())?;
            let (rows, industry, wages) = render_panel(&panel);
            let same_text = rows == std::fs::read_to_string(synth.join("panel.csv")).map_err(|e| e.to_string())?
                && industry == std::fs::read_to_string(synth.join("industry.csv")).map_err(|e| e.to_string())?
                && wages == std::fs::read_to_string(synth.join("national_wages.csv")).map_err(|e| e.to_string())?;
            let copy = dir.path().join("panel_copy");
            write_panel(&copy, &panel).map_err(|e| e.to_string())?;
            Ok(same_text && load_city_panel(&copy).map_err(|e| e.to_string())? == panel)
        })(),
    );
    note(
        "micro csv",
        (|| {
            let path = synth.join("micro_1980.csv");
            let records = load_micro(&path).map_err(|e| e.to_string())?;
            Ok(render_micro(&records) == std::fs::read_to_string(&path).map_err(|e| e.to_string())? && !records.is_empty())
        })(),
    );
    out.push(check(
        "formats round-trip losslessly",
        failures.is_empty(),
        if failures.is_empty() {
            "economy, economies, spec, state, manifest, estimates JSON; panel and micro CSV".to_string()
        } else {
            format!("failed: {failures:?}")
        },
    ));
    out
}
