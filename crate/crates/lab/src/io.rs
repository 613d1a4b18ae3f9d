//! CSV and JSON formats.
//!
//! Every file written here starts with a provenance comment
//! `# storage-scaling-lab <version> seed=<seed>`; readers skip `#` lines.
//! Floats are written in Rust's shortest round-trip form, so a load/store
//! cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use storage_scaling_core::allocation::Allocation;
use storage_scaling_core::fit::{FitReport, ScalingLawParams};
use storage_scaling_core::plan::{Item, ItemCatalog, SizeModel};
use storage_scaling_core::{Observation, ObservationGrid, SpectrumConfig};

use crate::LabError;

pub fn provenance(seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("# storage-scaling-lab {} seed={}", env!("CARGO_PKG_VERSION"), seed)
}

fn open(path: &Path) -> Result<File, LabError> {
    File::open(path).map_err(|e| LabError::Io { path: path.to_path_buf(), source: e })
}

fn create(path: &Path) -> Result<BufWriter<File>, LabError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LabError::Io { path: path.to_path_buf(), source: e })
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> LabError + '_ {
    move |e| LabError::Io { path: path.to_path_buf(), source: e }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> LabError {
    LabError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn csv_error(path: &Path, e: csv::Error) -> LabError {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(path, line, e.to_string())
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T, LabError> {
    raw.parse()
        .map_err(|_| parse_error(path, line, format!("column `{name}`: cannot parse `{raw}`")))
}

fn optional<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: Option<&str>) -> Result<Option<T>, LabError> {
    match raw {
        None | Some("") => Ok(None),
        Some(raw) => field(path, line, name, raw).map(Some),
    }
}

/// Reads `n,L,err[,stderr][,replicates]`. Columns are matched by name.
pub fn load_grid(path: &Path) -> Result<ObservationGrid, LabError> {
    read_grid(open(path)?, path)
}

pub fn read_grid<R: Read>(input: R, path: &Path) -> Result<ObservationGrid, LabError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let header_line = rdr.position().line();
    let index = |name: &str| headers.iter().position(|h| h == name);
    let (Some(n_col), Some(l_col), Some(err_col)) = (index("n"), index("L"), index("err")) else {
        return Err(parse_error(path, header_line, "header must contain n, L and err"));
    };
    if let Some(unknown) = headers.iter().find(|h| !["n", "L", "err", "stderr", "replicates"].contains(h)) {
        return Err(parse_error(path, header_line, format!("unknown column `{unknown}`")));
    }
    let (se_col, rep_col) = (index("stderr"), index("replicates"));

    let mut grid = ObservationGrid::default();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row = Observation {
            n: field(path, line, "n", &record[n_col])?,
            l: field(path, line, "L", &record[l_col])?,
            err: field(path, line, "err", &record[err_col])?,
            stderr: optional(path, line, "stderr", se_col.and_then(|c| record.get(c)))?,
            replicates: optional(path, line, "replicates", rep_col.and_then(|c| record.get(c)))?,
        };
        grid.push(row).map_err(|e| match e {
            storage_scaling_core::Error::DomainError(msg) => parse_error(path, line, msg),
            other => LabError::Core(other),
        })?;
    }
    Ok(grid)
}

/// Writes the grid; `stderr`/`replicates` columns appear when any row has them.
pub fn store_grid(grid: &ObservationGrid, path: &Path, seed: Option<u64>) -> Result<(), LabError> {
    let mut out = create(path)?;
    write_grid(grid, &mut out, seed).map_err(write_err(path))?;
    out.flush().map_err(write_err(path))
}

pub fn write_grid<W: Write + ?Sized>(grid: &ObservationGrid, out: &mut W, seed: Option<u64>) -> std::io::Result<()> {
    let with_se = grid.rows().iter().any(|r| r.stderr.is_some());
    let with_reps = grid.rows().iter().any(|r| r.replicates.is_some());
    writeln!(out, "{}", provenance(seed))?;
    let mut header = vec!["n", "L", "err"];
    with_se.then(|| header.push("stderr"));
    with_reps.then(|| header.push("replicates"));
    writeln!(out, "{}", header.join(","))?;
    for r in grid.rows() {
        write!(out, "{},{},{}", r.n, r.l, r.err)?;
        if with_se {
            write!(out, ",{}", r.stderr.map(|v| v.to_string()).unwrap_or_default())?;
        }
        if with_reps {
            write!(out, ",{}", r.replicates.map(|v| v.to_string()).unwrap_or_default())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<SpectrumConfig, LabError> {
    let config: SpectrumConfig = serde_json::from_reader(open(path)?)
        .map_err(|e| parse_error(path, e.line() as u64, e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Fit output: the report plus its provenance line (JSON has no comments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub provenance: String,
    #[serde(flatten)]
    pub report: FitReport,
}

pub fn store_fit(report: &FitReport, path: &Path) -> Result<(), LabError> {
    let file = FitFile { provenance: provenance(None), report: *report };
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &file).map_err(|e| write_err(path)(e.into()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(write_err(path))
}

/// Accepts a fit file or a bare parameter object.
pub fn load_params(path: &Path) -> Result<ScalingLawParams, LabError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(write_err(path))?;
    let params = match serde_json::from_str::<FitFile>(&text) {
        Ok(file) => file.report.params,
        Err(_) => serde_json::from_str::<ScalingLawParams>(&text)
            .map_err(|e| parse_error(path, e.line() as u64, e.to_string()))?,
    };
    params.validate()?;
    Ok(params)
}

/// Reads `id,class,level_<x>_bytes,...` (one column per tabulated level `x`)
/// or `id,class,s0,decay`. An empty class cell means no label.
pub fn load_catalog(path: &Path) -> Result<ItemCatalog, LabError> {
    read_catalog(open(path)?, path)
}

pub fn read_catalog<R: Read>(input: R, path: &Path) -> Result<ItemCatalog, LabError> {
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let header_line = rdr.position().line();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "class" {
        return Err(parse_error(path, header_line, "catalog header must start with id,class"));
    }
    let exponential = headers.len() == 4 && &headers[2] == "s0" && &headers[3] == "decay";
    let levels: Vec<f64> = if exponential {
        Vec::new()
    } else {
        headers
            .iter()
            .skip(2)
            .map(|h| {
                h.strip_prefix("level_")
                    .and_then(|rest| rest.strip_suffix("_bytes"))
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| parse_error(path, header_line, format!("bad level column `{h}`")))
            })
            .collect::<Result<_, _>>()?
    };

    let mut items = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let size = if exponential {
            SizeModel::Exponential {
                s0: field(path, line, "s0", &record[2])?,
                decay: field(path, line, "decay", &record[3])?,
            }
        } else {
            let mut knots = Vec::with_capacity(levels.len());
            for (k, level) in levels.iter().enumerate() {
                let bytes = field(path, line, &headers[k + 2], &record[k + 2])?;
                knots.push((*level, bytes));
            }
            SizeModel::Table(knots)
        };
        let class = &record[1];
        items.push(Item {
            id: record[0].to_string(),
            class_label: (!class.is_empty()).then(|| class.to_string()),
            size,
        });
    }
    Ok(ItemCatalog::new(items)?)
}

pub fn write_plan<W: Write + ?Sized>(
    plan: &storage_scaling_core::plan::CompressionPlan,
    out: &mut W,
    seed: u64,
) -> std::io::Result<()> {
    writeln!(out, "{}", provenance(Some(seed)))?;
    writeln!(out, "id,level,bytes")?;
    for a in &plan.assignments {
        writeln!(out, "{},{},{}", a.id, a.level, a.bytes)?;
    }
    Ok(())
}

pub fn write_allocations<W: Write + ?Sized>(rows: &[Allocation], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", provenance(None))?;
    writeln!(out, "s,n_star,L_star,n_int,predicted_err,scheme")?;
    for a in rows {
        writeln!(out, "{},{},{},{},{},{}", a.s, a.n_star, a.l_star, a.n_int, a.predicted_err, a.scheme)?;
    }
    Ok(())
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit<F>(path: Option<&PathBuf>, body: F) -> Result<(), LabError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match path {
        Some(path) => {
            let mut out = create(path)?;
            body(&mut out).and_then(|_| out.flush()).map_err(write_err(path))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).and_then(|_| lock.flush()).map_err(write_err(Path::new("<stdout>")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip_in_memory() {
        let mut grid = ObservationGrid::default();
        grid.push(Observation { n: 64, l: 7.0, err: 1.0 / 3.0, stderr: Some(0.1), replicates: Some(5) }).unwrap();
        grid.push(Observation { n: 128, l: 7.0, err: 0.2, stderr: None, replicates: None }).unwrap();
        let mut buf = Vec::new();
        write_grid(&grid, &mut buf, Some(7)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# storage-scaling-lab "));
        assert!(text.contains("seed=7"));
        let back = read_grid(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let text = "n,L,err\n10,5,0.1\n12,abc,0.3\n";
        match read_grid(text.as_bytes(), Path::new("mem")) {
            Err(LabError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_data_section_loads() {
        let grid = read_grid("# note\nn,L,err\n".as_bytes(), Path::new("mem")).unwrap();
        assert!(grid.is_empty());
    }

    #[test]
    fn catalog_formats() {
        let table = "id,class,level_1_bytes,level_2_bytes,level_4_bytes\na,cat,100,60,20\nb,,90,50,10\n";
        let cat = read_catalog(table.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.items()[1].class_label, None);
        assert_eq!(cat.items()[0].size.bytes_at(3.0), 40.0);
        let exp = "id,class,s0,decay\na,x,100,1\n";
        let cat = read_catalog(exp.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(cat.items()[0].size.bytes_at(2.0), 25.0);
        let bad = "id,class,level_x_bytes\na,x,1\n";
        assert!(read_catalog(bad.as_bytes(), Path::new("mem")).is_err());
    }
}
