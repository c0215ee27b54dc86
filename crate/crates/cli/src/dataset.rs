//! CSV datasets: transition lines and refractive-index points.
//!
//! Transition files have the header `transition,m_z,energy_cm1,sigma_cm1`.
//! `m_z` may be `-7/2` or `-3.5`; left empty it marks a hyperfine-averaged
//! energy. A transition cell of the form `jz:8.n` turns the row into a
//! `⟨J_z⟩` constraint on level `8.n`. Lines starting with `#` are comments;
//! `# source: …`, `# temperature_k: …` and `# doping: …` fill the metadata.

use std::path::Path;

use cfhf_core::fitting::{DatasetMetadata, MomentConstraint, TransitionDataset};
use cfhf_core::spectra::TransitionLine;
use cfhf_core::HalfInt;

use crate::config::{parse_level, parse_transition};
use crate::error::{CliError, Result};

pub const DATASET_HEADER: [&str; 4] = ["transition", "m_z", "energy_cm1", "sigma_cm1"];
pub const REFRACTIVE_HEADER: [&str; 2] = ["wavenumber_cm1", "index"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, want: &[&str]) -> std::result::Result<(), String> {
    let header = rdr.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(want.iter().copied()) {
        return Err(format!(
            "header must be `{}`, found `{}`",
            want.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    Ok(())
}

fn metadata(text: &str) -> std::result::Result<DatasetMetadata, String> {
    let mut meta = DatasetMetadata::default();
    for line in text.lines() {
        let Some(body) = line.trim().strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = body.split_once(':') else {
            continue;
        };
        let value = value.trim();
        let number = || value.parse::<f64>().map_err(|_| format!("metadata {}: bad number {value:?}", key.trim()));
        match key.trim() {
            "source" => meta.source = Some(value.to_string()),
            "temperature_k" => meta.temperature = Some(number()?),
            "doping" => meta.doping = Some(number()?),
            _ => {}
        }
    }
    Ok(meta)
}

fn number(cell: &str, what: &str) -> std::result::Result<f64, String> {
    let v: f64 = cell.parse().map_err(|_| format!("{what}: cannot parse {cell:?}"))?;
    if !v.is_finite() {
        return Err(format!("{what}: not finite"));
    }
    Ok(v)
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<TransitionDataset> {
    let err = |message: String| CliError::Dataset {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = reader(text);
    check_header(&mut rdr, &DATASET_HEADER).map_err(err)?;
    let mut data = TransitionDataset {
        metadata: metadata(text).map_err(err)?,
        ..Default::default()
    };
    for record in rdr.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |m: String| err(format!("line {line}: {m}"));
        let sigma = match &record[3] {
            "" => None,
            s => Some(number(s, "sigma_cm1").map_err(at)?),
        };
        if sigma.is_some_and(|s| s <= 0.0) {
            return Err(at("sigma_cm1 must be positive".into()));
        }
        let value = number(&record[2], "energy_cm1").map_err(at)?;
        if let Some(level) = record[0].strip_prefix("jz:") {
            let level = parse_level(level).map_err(at)?;
            if !record[1].is_empty() {
                return Err(at("moment rows take no m_z".into()));
            }
            data.moments.push(MomentConstraint {
                level,
                jz: value,
                sigma: sigma.ok_or_else(|| at("moment rows need sigma_cm1".into()))?,
            });
            continue;
        }
        let (n_init, n_final) = parse_transition(&record[0]).map_err(at)?;
        let m_z = match &record[1] {
            "" => None,
            s => Some(s.parse::<HalfInt>().map_err(|e| at(format!("m_z: {e}")))?),
        };
        data.rows.push(TransitionLine {
            n_init,
            n_final,
            m_z,
            energy: value,
            uncertainty: sigma,
            intensity: None,
        });
    }
    if data.is_empty() {
        return Err(err("no data rows".into()));
    }
    Ok(data)
}

pub fn read_dataset(path: &Path) -> Result<TransitionDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn write_dataset(data: &TransitionDataset) -> String {
    let mut out = String::new();
    let meta = &data.metadata;
    if let Some(s) = &meta.source {
        out += &format!("# source: {s}\n");
    }
    if let Some(t) = meta.temperature {
        out += &format!("# temperature_k: {t}\n");
    }
    if let Some(d) = meta.doping {
        out += &format!("# doping: {d}\n");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DATASET_HEADER).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &data.rows {
        w.write_record([
            format!("8.{}-8.{}", r.n_init, r.n_final),
            r.m_z.map(|m| m.to_string()).unwrap_or_default(),
            r.energy.to_string(),
            opt(r.uncertainty),
        ])
        .expect("in-memory write");
    }
    for m in &data.moments {
        w.write_record([format!("jz:8.{}", m.level), String::new(), m.jz.to_string(), m.sigma.to_string()])
            .expect("in-memory write");
    }
    out + &String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
}

pub fn parse_refractive(text: &str, path: &Path) -> Result<Vec<(f64, f64)>> {
    let err = |message: String| CliError::Dataset {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = reader(text);
    check_header(&mut rdr, &REFRACTIVE_HEADER).map_err(err)?;
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |m: String| err(format!("line {line}: {m}"));
        points.push((
            number(&record[0], "wavenumber_cm1").map_err(at)?,
            number(&record[1], "index").map_err(at)?,
        ));
    }
    Ok(points)
}

pub fn read_refractive(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_refractive(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# source: synthetic
# temperature_k: 3
transition,m_z,energy_cm1,sigma_cm1
8.1-8.2,-7/2,7.33,0.01
8.1-8.2,3.5,6.31,0.01
8.1-8.5,,56.9,0.5
jz:8.1,,5.40,0.05
";

    fn p() -> &'static Path {
        Path::new("t.csv")
    }

    #[test]
    fn parses_rows_moments_and_metadata() {
        let d = parse_dataset(SAMPLE, p()).unwrap();
        assert_eq!(d.rows.len(), 3);
        assert_eq!(d.rows[0].m_z, Some(HalfInt::from_twice(-7)));
        assert_eq!(d.rows[1].m_z, Some(HalfInt::from_twice(7)));
        assert_eq!(d.rows[2].m_z, None);
        assert_eq!(d.moments, vec![MomentConstraint { level: 1, jz: 5.40, sigma: 0.05 }]);
        assert_eq!(d.metadata.source.as_deref(), Some("synthetic"));
        assert_eq!(d.metadata.temperature, Some(3.0));
    }

    #[test]
    fn write_then_read() {
        let d = parse_dataset(SAMPLE, p()).unwrap();
        assert_eq!(parse_dataset(&write_dataset(&d), p()).unwrap(), d);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SAMPLE.replace("6.31", "six");
        let err = parse_dataset(&bad, p()).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
        assert_eq!(err.exit_code(), 4);

        let bad = SAMPLE.replace("-7/2", "-7/3");
        assert!(parse_dataset(&bad, p()).unwrap_err().to_string().contains("line 4"));
        let bad = SAMPLE.replace("8.1-8.5", "8.1_8.5");
        assert!(parse_dataset(&bad, p()).unwrap_err().to_string().contains("line 6"));
        let bad = SAMPLE.replace("0.5\n", "-0.5\n");
        assert!(parse_dataset(&bad, p()).is_err());
    }

    #[test]
    fn header_enforced() {
        let bad = SAMPLE.replace("energy_cm1", "energy");
        assert!(parse_dataset(&bad, p()).unwrap_err().to_string().contains("header"));
        assert!(parse_dataset("transition,m_z,energy_cm1,sigma_cm1\n", p()).is_err());
    }

    #[test]
    fn ragged_row_rejected() {
        let bad = SAMPLE.replace("7.33,0.01", "7.33");
        assert_eq!(parse_dataset(&bad, p()).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn refractive_points() {
        let pts = parse_refractive("wavenumber_cm1,index\n10,2.5\n20,2.49\n", p()).unwrap();
        assert_eq!(pts, vec![(10.0, 2.5), (20.0, 2.49)]);
        assert!(parse_refractive("nu,n\n10,2.5\n", p()).is_err());
    }
}
