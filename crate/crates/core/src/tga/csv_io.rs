//! Dataset CSV files.
//!
//! Columns are the 15 features, 6 targets, `provenance` and `source_id`.
//! Numeric headers carry a unit annotation `name[unit]`; the canonical
//! units are written on output and a few common alternatives are
//! converted on input.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    FeatureVector, Provenance, Sample, TargetVector, TgaError, FEATURE_NAMES, N_FEATURES, N_TARGETS, TARGET_NAMES,
};
use crate::kinetics::SingleStepKinetics;

pub const CSV_HEADER: [&str; N_FEATURES + N_TARGETS + 2] = [
    FEATURE_NAMES[0],
    FEATURE_NAMES[1],
    FEATURE_NAMES[2],
    FEATURE_NAMES[3],
    FEATURE_NAMES[4],
    FEATURE_NAMES[5],
    FEATURE_NAMES[6],
    FEATURE_NAMES[7],
    FEATURE_NAMES[8],
    FEATURE_NAMES[9],
    FEATURE_NAMES[10],
    FEATURE_NAMES[11],
    FEATURE_NAMES[12],
    FEATURE_NAMES[13],
    FEATURE_NAMES[14],
    TARGET_NAMES[0],
    TARGET_NAMES[1],
    TARGET_NAMES[2],
    TARGET_NAMES[3],
    TARGET_NAMES[4],
    TARGET_NAMES[5],
    "provenance",
    "source_id",
];

pub fn write_csv(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), TgaError> {
    let file = std::fs::File::create(path)?;
    write_csv_to(std::io::BufWriter::new(file), samples)
}

pub fn write_csv_to<W: Write>(w: W, samples: &[Sample]) -> Result<(), TgaError> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for s in samples {
        let mut rec: Vec<String> = s.features.to_array().iter().map(|v| v.to_string()).collect();
        rec.extend(s.targets.to_array().iter().map(|v| v.to_string()));
        rec.push(s.provenance.as_str().to_string());
        rec.push(s.source_id.clone());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestIssue {
    /// 1-based line in the file (header is line 1); 1 for header problems.
    pub line: u64,
    pub column: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    pub issues: Vec<IngestIssue>,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} of {} rows accepted", self.accepted, self.rows)?;
        for i in &self.issues {
            write!(f, "; line {}", i.line)?;
            if let Some(c) = &i.column {
                write!(f, " column `{c}`")?;
            }
            write!(f, ": {}", i.message)?;
        }
        Ok(())
    }
}

/// How a provenance column is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// External measurements: every row becomes EXPERIMENT.
    Ingest,
    /// Our own dataset files: provenance is read back.
    Dataset,
}

type Converter = fn(f64) -> f64;

fn unit_converter(base: &str, unit: &str) -> Option<Converter> {
    let fraction = |u: &str| -> Option<Converter> {
        match u {
            "-" | "" => Some(|v| v),
            "%" | "wt%" => Some(|v| v / 100.0),
            _ => None,
        }
    };
    let pressure = |u: &str| -> Option<Converter> {
        match u {
            "Pa" => Some(|v| v),
            "kPa" => Some(|v| v * 1e3),
            "MPa" => Some(|v| v * 1e6),
            "bar" => Some(|v| v * 1e5),
            "atm" => Some(|v| v * 101_325.0),
            _ => None,
        }
    };
    match base {
        "moisture" | "volatile" | "fixed_carbon" | "ash" | "C" | "H" | "O" | "N" | "S" | "y_gas" | "y_liquid"
        | "y_solid" => fraction(unit),
        "n" => (unit == "-" || unit.is_empty()).then_some((|v| v) as Converter),
        "T" => match unit {
            "K" => Some(|v| v),
            "C" | "degC" => Some(|v| v + 273.15),
            _ => None,
        },
        "beta" => match unit {
            "K/s" | "C/s" => Some(|v| v),
            "K/min" | "C/min" => Some(|v| v / 60.0),
            _ => None,
        },
        "P" | "p_H2O" | "p_O2" | "p_CO2" => pressure(unit),
        "ln_A" => match unit {
            "ln(1/s)" => Some(|v| v),
            "ln(1/min)" => Some(|v| v - 60f64.ln()),
            _ => None,
        },
        "Ea" => match unit {
            "J/mol" => Some(|v| v),
            "kJ/mol" => Some(|v| v * 1e3),
            _ => None,
        },
        _ => None,
    }
}

fn split_header(h: &str) -> (&str, &str) {
    match (h.find('['), h.ends_with(']')) {
        (Some(i), true) => (h[..i].trim(), &h[i + 1..h.len() - 1]),
        _ => (h.trim(), ""),
    }
}

fn base_name(canonical: &str) -> &str {
    split_header(canonical).0
}

/// Reads external measurements; every accepted row is an EXPERIMENT sample.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<(Vec<Sample>, IngestReport), TgaError> {
    let file = std::fs::File::open(path)?;
    parse(file, Mode::Ingest)
}

pub fn ingest_reader<R: Read>(r: R) -> Result<(Vec<Sample>, IngestReport), TgaError> {
    parse(r, Mode::Ingest)
}

/// Reads a dataset file written by [`write_csv`], keeping provenance.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<(Vec<Sample>, IngestReport), TgaError> {
    let file = std::fs::File::open(path)?;
    parse(file, Mode::Dataset)
}

pub fn read_dataset_from<R: Read>(r: R) -> Result<(Vec<Sample>, IngestReport), TgaError> {
    parse(r, Mode::Dataset)
}

fn parse<R: Read>(r: R, mode: Mode) -> Result<(Vec<Sample>, IngestReport), TgaError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r);
    let headers = rd.headers()?.clone();
    let mut report = IngestReport::default();
    let header_issue = |column: Option<String>, message: String| IngestIssue { line: 1, column, message };

    let numeric_names: Vec<&str> = FEATURE_NAMES.iter().chain(TARGET_NAMES.iter()).map(|n| base_name(n)).collect();
    let mut columns: Vec<Option<(usize, Converter)>> = vec![None; numeric_names.len()];
    let mut provenance_col = None;
    let mut source_col = None;
    for (pos, h) in headers.iter().enumerate() {
        let (base, unit) = split_header(h);
        match base {
            "provenance" => provenance_col = Some(pos),
            "source_id" => source_col = Some(pos),
            _ => match numeric_names.iter().position(|n| *n == base) {
                Some(k) if columns[k].is_some() => {
                    report.issues.push(header_issue(Some(h.to_string()), "duplicate column".into()))
                }
                Some(k) => match unit_converter(base, unit) {
                    Some(conv) => columns[k] = Some((pos, conv)),
                    None => report.issues.push(header_issue(Some(h.to_string()), format!("unsupported unit `{unit}`"))),
                },
                None => report.issues.push(header_issue(Some(h.to_string()), "unknown column".into())),
            },
        }
    }
    for (k, c) in columns.iter().enumerate() {
        if c.is_none() && !report.issues.iter().any(|i| i.column.as_deref().map(base_name) == Some(numeric_names[k])) {
            let canonical = FEATURE_NAMES.iter().chain(TARGET_NAMES.iter()).nth(k).unwrap();
            report.issues.push(header_issue(Some(canonical.to_string()), "missing column".into()));
        }
    }
    if mode == Mode::Dataset && provenance_col.is_none() {
        report.issues.push(header_issue(Some("provenance".into()), "missing column".into()));
    }
    if !report.issues.is_empty() {
        return Err(TgaError::Ingest(report));
    }
    let columns: Vec<(usize, Converter)> = columns.into_iter().map(|c| c.unwrap()).collect();

    let mut samples = Vec::new();
    for rec in rd.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rows += 1;
                let line = e.position().map_or(0, |p| p.line());
                report.issues.push(IngestIssue { line, column: None, message: e.to_string() });
                continue;
            }
        };
        report.rows += 1;
        let line = rec.position().map_or(0, |p| p.line());
        match parse_row(&rec, &columns, provenance_col, source_col, mode, line) {
            Ok(s) => samples.push(s),
            Err(issue) => report.issues.push(issue),
        }
    }
    report.accepted = samples.len();
    Ok((samples, report))
}

fn parse_row(
    rec: &csv::StringRecord,
    columns: &[(usize, Converter)],
    provenance_col: Option<usize>,
    source_col: Option<usize>,
    mode: Mode,
    line: u64,
) -> Result<Sample, IngestIssue> {
    let issue =
        |column: Option<&str>, message: String| IngestIssue { line, column: column.map(str::to_string), message };
    let mut values = [0.0; N_FEATURES + N_TARGETS];
    for (k, (pos, conv)) in columns.iter().enumerate() {
        let cell = rec.get(*pos).unwrap_or("").trim();
        let name = FEATURE_NAMES.iter().chain(TARGET_NAMES.iter()).nth(k).unwrap();
        let v: f64 = cell.parse().map_err(|_| issue(Some(name), format!("`{cell}` is not a number")))?;
        if !v.is_finite() {
            return Err(issue(Some(name), format!("`{cell}` is not finite")));
        }
        values[k] = conv(v);
    }
    let features = FeatureVector::from_array(values[..N_FEATURES].try_into().unwrap());
    let t = &values[N_FEATURES..];
    let targets = TargetVector {
        kinetics: SingleStepKinetics::new(t[0], t[1], t[2]),
        yields: super::Yields { gas: t[3], liquid: t[4], solid: t[5] },
    };
    features.validate().map_err(|m| issue(None, m))?;
    let prox: f64 = values[..4].iter().sum();
    if (prox - 1.0).abs() > 1e-6 {
        return Err(issue(None, format!("proximate fractions sum to {prox}, expected 1")));
    }
    let ult: f64 = values[4..9].iter().sum();
    if (ult - 1.0).abs() > 1e-6 {
        return Err(issue(None, format!("ultimate fractions sum to {ult}, expected 1")));
    }
    if let Some(i) = values[..9].iter().position(|v| *v > 1.0) {
        return Err(issue(Some(FEATURE_NAMES[i]), "fraction exceeds 1".into()));
    }
    targets.validate().map_err(|m| issue(None, m))?;
    let provenance = match mode {
        Mode::Ingest => Provenance::Experiment,
        Mode::Dataset => {
            let cell = rec.get(provenance_col.unwrap()).unwrap_or("");
            Provenance::parse(cell)
                .ok_or_else(|| issue(Some("provenance"), format!("`{cell}` is neither EXPERIMENT nor SIMULATION")))?
        }
    };
    let source_id = source_col.and_then(|c| rec.get(c)).unwrap_or("").to_string();
    let source_id = if source_id.is_empty() && mode == Mode::Ingest { format!("row@{line}") } else { source_id };
    Ok(Sample { features, targets, provenance, source_id })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(prox_vol: &str) -> String {
        format!("0.08,{prox_vol},0.16,0.04,0.5,0.06,0.435,0.004,0.001,900,1,101325,0,0,0,20,120000,1,0.5,0.3,0.2,EXPERIMENT,lit")
    }

    #[test]
    fn header_only_is_empty() {
        let text = CSV_HEADER.join(",") + "\n";
        let (s, rep) = ingest_reader(text.as_bytes()).unwrap();
        assert!(s.is_empty());
        assert_eq!(rep.rows, 0);
    }

    #[test]
    fn bad_proximate_row_is_cited() {
        let text = format!("{}\n{}\n{}\n", CSV_HEADER.join(","), row("0.72"), row("0.92"));
        let (s, rep) = ingest_reader(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(rep.issues.len(), 1);
        assert_eq!(rep.issues[0].line, 3);
        assert!(rep.issues[0].message.contains("proximate"));
    }

    #[test]
    fn converts_annotated_units() {
        let header = CSV_HEADER
            .join(",")
            .replace("moisture[-]", "moisture[%]")
            .replace("volatile[-]", "volatile[%]")
            .replace("fixed_carbon[-]", "fixed_carbon[%]")
            .replace("ash[-]", "ash[%]")
            .replace("T[K]", "T[C]")
            .replace("beta[K/s]", "beta[K/min]")
            .replace("Ea[J/mol]", "Ea[kJ/mol]")
            .replace("P[Pa]", "P[kPa]");
        let body = "8,72,16,4,0.5,0.06,0.435,0.004,0.001,626.85,60,101.325,0,0,0,20,120,1,0.5,0.3,0.2,,x";
        let (s, rep) = ingest_reader(format!("{header}\n{body}\n").as_bytes()).unwrap();
        assert_eq!(rep.issues, vec![]);
        let f = s[0].features;
        assert!((f.temperature - 900.0).abs() < 1e-9);
        assert!((f.beta - 1.0).abs() < 1e-12);
        assert!((f.pressure - 101_325.0).abs() < 1e-9);
        assert!((f.volatile - 0.72).abs() < 1e-12);
        assert_eq!(s[0].targets.kinetics.ea, 120_000.0);
        assert_eq!(s[0].provenance, Provenance::Experiment);
    }

    #[test]
    fn missing_column_is_reported() {
        let header: Vec<&str> = CSV_HEADER.iter().copied().filter(|h| *h != "Ea[J/mol]").collect();
        let err = ingest_reader(format!("{}\n", header.join(",")).as_bytes()).unwrap_err();
        match err {
            TgaError::Ingest(rep) => assert_eq!(rep.issues[0].column.as_deref(), Some("Ea[J/mol]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell() {
        let text = format!("{}\n{}\n", CSV_HEADER.join(","), row("abc"));
        let (_, rep) = ingest_reader(text.as_bytes()).unwrap();
        assert_eq!(rep.issues[0].column.as_deref(), Some("volatile[-]"));
    }
}
