//! JSON documents and strict-header CSV tables.

use crate::error::{ModelError, Result};
use super::micro::MicroRecord;
use crate::estimation::{CityPanel, IndustryRow, NationalWageRow, PanelRow};
use crate::model::{CoupleType, EquilibriumState, PerCouple, PerPerson, PersonType};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::path::Path;

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn schema(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        file: path.display().to_string(),
        message: message.into(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|source| ModelError::Json {
        file: path.display().to_string(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("model types serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

/// Renders rows with a fixed header; floats use the shortest exact decimal form.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 fields")
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const PANEL_FILE: &str = "panel.csv";
pub const INDUSTRY_FILE: &str = "industry.csv";
pub const NATIONAL_WAGE_FILE: &str = "national_wages.csv";

pub fn panel_header() -> Vec<String> {
    let mut h = vec!["city_id".to_string(), "period".to_string()];
    let types = PersonType::ALL.map(|p| p.label());
    h.extend(types.iter().map(|t| format!("pop_{t}")));
    h.extend(types.iter().map(|t| format!("wage_single_{t}")));
    h.extend(types.iter().map(|t| format!("wage_married_{t}")));
    h.push("rent".into());
    h.extend(CoupleType::ALL.iter().map(|c| format!("mar_{}", c.label())));
    h.extend(types.iter().map(|t| format!("single_{t}")));
    h.extend(["amenity_obs", "chi_geo", "chi_reg"].map(String::from));
    h
}

pub const INDUSTRY_HEADER: [&str; 5] = ["city_id", "period", "industry_id", "emp_H", "emp_L"];
pub const NATIONAL_WAGE_HEADER: [&str; 4] = ["industry_id", "period", "wage_H", "wage_L"];

pub fn render_panel(panel: &CityPanel) -> (String, String, String) {
    let mut core = Table::new(&panel_header());
    for r in &panel.rows {
        let mut row = vec![r.city_id.clone(), r.period.to_string()];
        row.extend(r.populations.values().map(|&v| num(v)));
        row.extend(r.wage_single.values().map(|&v| opt_num(v)));
        row.extend(r.wage_married.values().map(|&v| opt_num(v)));
        row.push(num(r.rent));
        row.extend(r.couples.values().map(|&v| num(v)));
        row.extend(r.singles.values().map(|&v| num(v)));
        row.extend([num(r.amenity_obs), num(r.chi_geo), num(r.chi_reg)]);
        core.push(row);
    }
    let mut ind = Table::new(&INDUSTRY_HEADER);
    for r in &panel.industry {
        ind.push(vec![
            r.city_id.clone(),
            r.period.to_string(),
            r.industry_id.clone(),
            num(r.emp_h),
            num(r.emp_l),
        ]);
    }
    let mut nat = Table::new(&NATIONAL_WAGE_HEADER);
    for r in &panel.national_wages {
        nat.push(vec![r.industry_id.clone(), r.period.to_string(), num(r.wage_h), num(r.wage_l)]);
    }
    (core.render(), ind.render(), nat.render())
}

pub fn write_panel(dir: &Path, panel: &CityPanel) -> Result<()> {
    let (core, ind, nat) = render_panel(panel);
    write_text(&dir.join(PANEL_FILE), &core)?;
    write_text(&dir.join(INDUSTRY_FILE), &ind)?;
    write_text(&dir.join(NATIONAL_WAGE_FILE), &nat)
}

/// Parsed records of a CSV whose header must match `expected` exactly.
fn strict_records(path: &Path, text: &str, expected: &[String]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let csv_err = |source| ModelError::Csv {
        file: path.display().to_string(),
        source,
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(schema(
                    path,
                    format!("column {} is '{got}', expected '{want}'", i + 1),
                ))
            }
            None => return Err(schema(path, format!("missing column '{want}'"))),
        }
    }
    if header.len() > expected.len() {
        return Err(schema(
            path,
            format!("unknown column '{}'", &header[expected.len()]),
        ));
    }
    rdr.records().map(|r| r.map_err(csv_err)).collect()
}

struct Fields<'a> {
    path: &'a Path,
    header: &'a [String],
    record: &'a csv::StringRecord,
    line: usize,
}

impl Fields<'_> {
    fn text(&self, i: usize) -> &str {
        self.record.get(i).unwrap_or("").trim()
    }

    fn err(&self, i: usize, what: &str) -> ModelError {
        schema(
            self.path,
            format!("line {}: column '{}' {what}, got '{}'", self.line, self.header[i], self.text(i)),
        )
    }

    fn f64(&self, i: usize) -> Result<f64> {
        self.text(i).parse().map_err(|_| self.err(i, "must be a number"))
    }

    fn opt_f64(&self, i: usize) -> Result<Option<f64>> {
        if self.text(i).is_empty() {
            Ok(None)
        } else {
            self.f64(i).map(Some)
        }
    }

    fn i32(&self, i: usize) -> Result<i32> {
        self.text(i).parse().map_err(|_| self.err(i, "must be an integer"))
    }

    fn string(&self, i: usize) -> Result<String> {
        let s = self.text(i);
        if s.is_empty() {
            Err(self.err(i, "must not be empty"))
        } else {
            Ok(s.to_string())
        }
    }

    fn per_person(&self, start: usize) -> Result<PerPerson<f64>> {
        Ok(PerPerson {
            mh: self.f64(start)?,
            ml: self.f64(start + 1)?,
            fh: self.f64(start + 2)?,
            fl: self.f64(start + 3)?,
        })
    }

    fn per_person_opt(&self, start: usize) -> Result<PerPerson<Option<f64>>> {
        Ok(PerPerson {
            mh: self.opt_f64(start)?,
            ml: self.opt_f64(start + 1)?,
            fh: self.opt_f64(start + 2)?,
            fl: self.opt_f64(start + 3)?,
        })
    }

    fn per_couple(&self, start: usize) -> Result<PerCouple<f64>> {
        Ok(PerCouple {
            hh: self.f64(start)?,
            hl: self.f64(start + 1)?,
            lh: self.f64(start + 2)?,
            ll: self.f64(start + 3)?,
        })
    }
}

fn each<T>(path: &Path, text: &str, header: &[String], mut f: impl FnMut(&Fields) -> Result<T>) -> Result<Vec<T>> {
    strict_records(path, text, header)?
        .iter()
        .enumerate()
        .map(|(i, record)| {
            f(&Fields {
                path,
                header,
                record,
                line: i + 2,
            })
        })
        .collect()
}

pub fn parse_panel_rows(path: &Path, text: &str) -> Result<Vec<PanelRow>> {
    let header = panel_header();
    each(path, text, &header, |f| {
        Ok(PanelRow {
            city_id: f.string(0)?,
            period: f.i32(1)?,
            populations: f.per_person(2)?,
            wage_single: f.per_person_opt(6)?,
            wage_married: f.per_person_opt(10)?,
            rent: f.f64(14)?,
            couples: f.per_couple(15)?,
            singles: f.per_person(19)?,
            amenity_obs: f.f64(23)?,
            chi_geo: f.f64(24)?,
            chi_reg: f.f64(25)?,
        })
    })
}

pub fn parse_industry(path: &Path, text: &str) -> Result<Vec<IndustryRow>> {
    let header: Vec<String> = INDUSTRY_HEADER.map(String::from).to_vec();
    each(path, text, &header, |f| {
        Ok(IndustryRow {
            city_id: f.string(0)?,
            period: f.i32(1)?,
            industry_id: f.string(2)?,
            emp_h: f.f64(3)?,
            emp_l: f.f64(4)?,
        })
    })
}

pub fn parse_national_wages(path: &Path, text: &str) -> Result<Vec<NationalWageRow>> {
    let header: Vec<String> = NATIONAL_WAGE_HEADER.map(String::from).to_vec();
    each(path, text, &header, |f| {
        Ok(NationalWageRow {
            industry_id: f.string(0)?,
            period: f.i32(1)?,
            wage_h: f.f64(2)?,
            wage_l: f.f64(3)?,
        })
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Loads the three panel files from a directory; the industry and national wage
/// files are optional when only the marriage step is run.
pub fn load_city_panel(dir: &Path) -> Result<CityPanel> {
    let core = dir.join(PANEL_FILE);
    let mut panel = CityPanel {
        rows: parse_panel_rows(&core, &read(&core)?)?,
        ..CityPanel::default()
    };
    let ind = dir.join(INDUSTRY_FILE);
    if ind.exists() {
        panel.industry = parse_industry(&ind, &read(&ind)?)?;
    }
    let nat = dir.join(NATIONAL_WAGE_FILE);
    if nat.exists() {
        panel.national_wages = parse_national_wages(&nat, &read(&nat)?)?;
    }
    Ok(panel)
}

pub const MICRO_FILE: &str = "micro.csv";
pub const MICRO_HEADER: [&str; 6] = ["person_id", "person_type", "city_id", "married", "spouse_type", "wage"];

pub fn render_micro(records: &[MicroRecord]) -> String {
    let mut t = Table::new(&MICRO_HEADER);
    for r in records {
        t.push(vec![
            r.person_id.to_string(),
            r.person_type.label().to_string(),
            r.city_id.clone(),
            u8::from(r.married).to_string(),
            r.spouse_type.map(|s| s.label().to_string()).unwrap_or_default(),
            num(r.wage),
        ]);
    }
    t.render()
}

pub fn parse_micro(path: &Path, text: &str) -> Result<Vec<MicroRecord>> {
    let header: Vec<String> = MICRO_HEADER.map(String::from).to_vec();
    let person = |f: &Fields, i: usize| {
        PersonType::parse(f.text(i)).ok_or_else(|| f.err(i, "must be one of MH, ML, FH, FL"))
    };
    each(path, text, &header, |f| {
        let married = match f.text(3) {
            "0" => false,
            "1" => true,
            _ => return Err(f.err(3, "must be 0 or 1")),
        };
        let spouse_type = if f.text(4).is_empty() { None } else { Some(person(f, 4)?) };
        if married != spouse_type.is_some() {
            return Err(f.err(4, "must be set exactly when married is 1"));
        }
        Ok(MicroRecord {
            person_id: f.text(0).parse().map_err(|_| f.err(0, "must be a non-negative integer"))?,
            person_type: person(f, 1)?,
            city_id: f.string(2)?,
            married,
            spouse_type,
            wage: f.f64(5)?,
        })
    })
}

pub fn load_micro(path: &Path) -> Result<Vec<MicroRecord>> {
    parse_micro(path, &read(path)?)
}

pub const EQUILIBRIUM_HEADER: [&str; 8] = [
    "period",
    "city_id",
    "wage_H",
    "wage_L",
    "rent",
    "income",
    "housing_quantity",
    "effective_labor_H",
];

/// One row per city and block of equilibrium outcomes.
pub fn render_equilibrium(state: &EquilibriumState) -> String {
    let mut header: Vec<String> = EQUILIBRIUM_HEADER.map(String::from).to_vec();
    header.push("effective_labor_L".into());
    let types = PersonType::ALL.map(|p| p.label());
    header.extend(types.iter().map(|t| format!("pop_{t}")));
    header.extend(types.iter().map(|t| format!("single_{t}")));
    header.extend(CoupleType::ALL.iter().map(|c| format!("mar_{}", c.label())));
    header.extend(CoupleType::ALL.iter().map(|c| format!("tau_{}", c.label())));
    header.extend(types.iter().map(|t| format!("location_prob_{t}")));
    header.extend(types.iter().map(|t| format!("marital_surplus_{t}")));
    let mut t = Table::new(&header);
    for c in &state.cities {
        let mut row = vec![
            state.period_label.clone(),
            c.city_id.clone(),
            num(c.wage_h),
            num(c.wage_l),
            num(c.rent),
            num(c.income),
            num(c.housing_quantity),
            num(c.effective_labor_h),
            num(c.effective_labor_l),
        ];
        row.extend(c.populations.values().map(|&v| num(v)));
        row.extend(c.matching.singles.values().map(|&v| num(v)));
        row.extend(c.matching.couples.values().map(|&v| num(v)));
        row.extend(
            CoupleType::ALL
                .iter()
                .map(|&k| if c.undefined_transfers[k] { String::new() } else { num(c.transfers[k]) }),
        );
        row.extend(c.location_probs.values().map(|&v| num(v)));
        row.extend(c.marital_surplus.values().map(|&v| num(v)));
        t.push(row);
    }
    t.render()
}

pub fn render_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|source| ModelError::Csv {
            file: "<memory>".into(),
            source,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| ModelError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("utf8 fields"))
}
