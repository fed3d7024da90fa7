use std::io::{Read, Write};

use serde::Deserialize;

use super::{
    PhaseClass, PhaseClassifier, PhaseError, TemperatureGrid, MAX_TEMPERATURE_K, MIN_TEMPERATURE_K,
    PARSE_SUM_TOLERANCE, TABLE_SUM_TOLERANCE,
};
use crate::chem::Composition;

pub const CSV_HEADER: &str = "temperature_K,phase,mole_fraction,lattice_param_A";

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRecord {
    pub temperature: f64,
    pub label: String,
    pub class: PhaseClass,
    pub mole_fraction: f64,
    /// Å
    pub lattice_param: Option<f64>,
}

/// Per-temperature phase records for one master composition. Records are
/// sorted by temperature and then label.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTable {
    master: Option<Composition>,
    grid: TemperatureGrid,
    records: Vec<PhaseRecord>,
}

impl PhaseTable {
    /// Validates and sorts. Every grid temperature must carry records summing
    /// to one within 1e-6, and every record must sit on the grid.
    pub fn new(master: Option<Composition>, grid: TemperatureGrid, mut records: Vec<PhaseRecord>) -> Result<PhaseTable, PhaseError> {
        if records.is_empty() {
            return Err(PhaseError::EmptyTable);
        }
        for r in &records {
            validate_record(r)?;
        }
        records.sort_by(|a, b| a.temperature.total_cmp(&b.temperature).then_with(|| a.label.cmp(&b.label)));
        let table = PhaseTable { master, grid, records };
        let temps = table.grid.temperatures();
        let mut seen = 0;
        for (t, group) in table.by_temperature() {
            if temps.binary_search_by(|g| g.total_cmp(&t)).is_err() {
                return Err(PhaseError::Range(format!("record temperature {t} K is not on the grid")));
            }
            let sum: f64 = group.iter().map(|r| r.mole_fraction).sum();
            if (sum - 1.0).abs() > TABLE_SUM_TOLERANCE {
                return Err(PhaseError::Normalization { temperature: t, sum });
            }
            seen += 1;
        }
        if seen != temps.len() {
            return Err(PhaseError::Schema(format!("{} grid temperatures have no records", temps.len() - seen)));
        }
        Ok(table)
    }

    pub fn master(&self) -> Option<&Composition> {
        self.master.as_ref()
    }

    pub fn with_master(mut self, master: Composition) -> PhaseTable {
        self.master = Some(master);
        self
    }

    pub fn grid(&self) -> &TemperatureGrid {
        &self.grid
    }

    pub fn records(&self) -> &[PhaseRecord] {
        &self.records
    }

    /// `(temperature, records)` groups in ascending temperature.
    pub fn by_temperature(&self) -> impl Iterator<Item = (f64, &[PhaseRecord])> + '_ {
        self.records
            .chunk_by(|a, b| a.temperature == b.temperature)
            .map(|group| (group[0].temperature, group))
    }

    /// Total fraction of `class` at each grid temperature, ascending.
    pub fn class_fractions(&self, class: PhaseClass) -> Vec<(f64, f64)> {
        self.by_temperature()
            .map(|(t, group)| (t, group.iter().filter(|r| r.class == class).map(|r| r.mole_fraction).sum()))
            .collect()
    }

    /// Writes the CSV form. Floats use the shortest representation that
    /// parses back to the same value, so write/parse is lossless.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), PhaseError> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let lattice = r.lattice_param.map(|a| a.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.temperature, csv_field(&r.label), r.mole_fraction, lattice)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

fn csv_field(label: &str) -> String {
    if label.contains([',', '"', '\n']) {
        format!("\"{}\"", label.replace('"', "\"\""))
    } else {
        label.to_string()
    }
}

fn validate_record(r: &PhaseRecord) -> Result<(), PhaseError> {
    if !(MIN_TEMPERATURE_K..=MAX_TEMPERATURE_K).contains(&r.temperature) {
        return Err(PhaseError::Range(format!("temperature {} K outside [373, 2273]", r.temperature)));
    }
    if !(0.0..=1.0).contains(&r.mole_fraction) {
        return Err(PhaseError::Range(format!("mole fraction {} of {} at {} K", r.mole_fraction, r.label, r.temperature)));
    }
    if let Some(a) = r.lattice_param {
        if !(a.is_finite() && a > 0.0) {
            return Err(PhaseError::Range(format!("lattice parameter {a} of {} at {} K", r.label, r.temperature)));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    #[serde(rename = "temperature_K")]
    temperature: f64,
    phase: String,
    mole_fraction: f64,
    #[serde(rename = "lattice_param_A")]
    lattice_param: Option<f64>,
}

/// Parses a phase-table CSV with the default label classifier.
pub fn parse_phase_table<R: Read>(reader: R) -> Result<PhaseTable, PhaseError> {
    parse_phase_table_with(reader, &PhaseClassifier::default())
}

/// Parses a phase-table CSV. Fractions at a temperature may be off by up to
/// 1e-3 (rounded exports); such groups are rescaled to sum to one. The grid is
/// the set of temperatures present in the file.
pub fn parse_phase_table_with<R: Read>(reader: R, classifier: &PhaseClassifier) -> Result<PhaseTable, PhaseError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(PhaseError::Schema(e.to_string())),
    };
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(PhaseError::EmptyTable);
    }
    for column in ["temperature_K", "phase", "mole_fraction", "lattice_param_A"] {
        if !headers.iter().any(|h| h == column) {
            return Err(PhaseError::Schema(format!("missing column {column}")));
        }
    }
    let mut records = Vec::new();
    for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| PhaseError::Schema(format!("row {}: {e}", line + 2)))?;
        records.push(PhaseRecord {
            temperature: row.temperature,
            class: classifier.classify(&row.phase),
            label: row.phase,
            mole_fraction: row.mole_fraction,
            lattice_param: row.lattice_param,
        });
    }
    if records.is_empty() {
        return Err(PhaseError::EmptyTable);
    }
    for r in &records {
        validate_record(r)?;
    }
    records.sort_by(|a, b| a.temperature.total_cmp(&b.temperature).then_with(|| a.label.cmp(&b.label)));

    let mut temps = Vec::new();
    for group in records.chunk_by_mut(|a, b| a.temperature == b.temperature) {
        let t = group[0].temperature;
        let sum: f64 = group.iter().map(|r| r.mole_fraction).sum();
        if (sum - 1.0).abs() > PARSE_SUM_TOLERANCE {
            return Err(PhaseError::Normalization { temperature: t, sum });
        }
        if (sum - 1.0).abs() > TABLE_SUM_TOLERANCE {
            for r in group.iter_mut() {
                r.mole_fraction /= sum;
            }
        }
        temps.push(t);
    }
    PhaseTable::new(None, TemperatureGrid::new(temps)?, records)
}
