//! CSV readers and writers for samples, bases, data specs, models, fields and
//! result rows. Floats are written with 17 significant digits so every value
//! round-trips exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::heat::SpaceTimeField;
use crate::learning::AffineScoreModel;
use crate::oracle::MixtureDataSpec;
use crate::spectral::{Grid, SpectralBasis};

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
}

fn expect_header(record: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if record.iter().map(str::trim).eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            record.iter().collect::<Vec<_>>().join(",")
        )))
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(out)
}

fn records<R: Read>(input: R) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    rdr.records().map(|r| r.map_err(Error::from)).collect()
}

/// `sample_id,mode_0,...,mode_{M-1}`.
pub fn write_coefficients<W: Write>(out: W, rows: &[Vec<f64>]) -> Result<()> {
    let modes = rows.first().map_or(0, Vec::len);
    let mut w = writer(out);
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..modes).map(|n| format!("mode_{n}")));
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != modes {
            return Err(Error::DimensionMismatch {
                expected: modes,
                got: row.len(),
            });
        }
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coefficients<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let recs = records(input)?;
    let header = recs.first().ok_or_else(|| Error::Parse("empty sample file".into()))?;
    let modes = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("sample_id".to_string())
        .chain((0..modes).map(|n| format!("mode_{n}")))
        .collect();
    expect_header(header, &expected.iter().map(String::as_str).collect::<Vec<_>>())?;
    recs[1..]
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != modes + 1 || parse_usize(&r[0], "sample_id")? != i {
                return Err(Error::Parse(format!("malformed sample row {i}")));
            }
            r.iter().skip(1).map(|v| parse_f64(v, "coefficient")).collect()
        })
        .collect()
}

/// Long format `sample_id,idx,value` of grid values.
pub fn write_grid_values<W: Write>(out: W, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["sample_id", "idx", "value"])?;
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), fmt_f64(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `mode,eigenvalue`.
pub fn write_basis<W: Write>(out: W, basis: &SpectralBasis) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["mode", "eigenvalue"])?;
    for (n, &l) in basis.eigenvalues().iter().enumerate() {
        w.write_record([n.to_string(), fmt_f64(l)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eigenvalues<R: Read>(input: R) -> Result<Vec<f64>> {
    let recs = records(input)?;
    expect_header(
        recs.first().ok_or_else(|| Error::Parse("empty basis file".into()))?,
        &["mode", "eigenvalue"],
    )?;
    recs[1..]
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() != 2 || parse_usize(&r[0], "mode")? != i {
                return Err(Error::Parse(format!("malformed basis row {i}")));
            }
            parse_f64(&r[1], "eigenvalue")
        })
        .collect()
}

/// Two blocks: `component,weight` then `component,mode,mean,variance`.
pub fn write_mixture<W: Write>(out: W, spec: &MixtureDataSpec) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["component", "weight"])?;
    for (k, &wt) in spec.weights().iter().enumerate() {
        w.write_record([k.to_string(), fmt_f64(wt)])?;
    }
    w.write_record(["component", "mode", "mean", "variance"])?;
    for k in 0..spec.components() {
        for n in 0..spec.modes() {
            w.write_record([
                k.to_string(),
                n.to_string(),
                fmt_f64(spec.means()[k][n]),
                fmt_f64(spec.variances()[k][n]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_mixture<R: Read>(input: R) -> Result<MixtureDataSpec> {
    let recs = records(input)?;
    let mut it = recs.iter();
    expect_header(
        it.next().ok_or_else(|| Error::Parse("empty mixture file".into()))?,
        &["component", "weight"],
    )?;
    let mut weights = Vec::new();
    let mut rest = None;
    for r in it.by_ref() {
        if r.len() == 4 {
            rest = Some(r);
            break;
        }
        if r.len() != 2 || parse_usize(&r[0], "component")? != weights.len() {
            return Err(Error::Parse("malformed weight row".into()));
        }
        weights.push(parse_f64(&r[1], "weight")?);
    }
    expect_header(
        rest.ok_or_else(|| Error::Parse("missing component block".into()))?,
        &["component", "mode", "mean", "variance"],
    )?;
    let k = weights.len();
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut variances: Vec<Vec<f64>> = vec![Vec::new(); k];
    for r in it {
        if r.len() != 4 {
            return Err(Error::Parse("malformed component row".into()));
        }
        let c = parse_usize(&r[0], "component")?;
        let n = parse_usize(&r[1], "mode")?;
        if c >= k || n != means[c].len() {
            return Err(Error::Parse(format!("component row ({c},{n}) out of order")));
        }
        means[c].push(parse_f64(&r[2], "mean")?);
        variances[c].push(parse_f64(&r[3], "variance")?);
    }
    MixtureDataSpec::new(weights, means, variances)
}

/// `edges,e_0,...,e_B` followed by `bin,mode,slope,intercept`.
pub fn write_model<W: Write>(out: W, model: &AffineScoreModel) -> Result<()> {
    let mut w = writer(out);
    let mut edges = vec!["edges".to_string()];
    edges.extend(model.edges().iter().map(|&e| fmt_f64(e)));
    w.write_record(&edges)?;
    w.write_record(["bin", "mode", "slope", "intercept"])?;
    for b in 0..model.bins() {
        for n in 0..model.modes() {
            w.write_record([
                b.to_string(),
                n.to_string(),
                fmt_f64(model.slope()[b][n]),
                fmt_f64(model.intercept()[b][n]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<AffineScoreModel> {
    let recs = records(input)?;
    let first = recs.first().ok_or_else(|| Error::Parse("empty model file".into()))?;
    if first.get(0).map(str::trim) != Some("edges") {
        return Err(Error::Parse("model file must start with an `edges` row".into()));
    }
    let edges: Vec<f64> = first
        .iter()
        .skip(1)
        .map(|e| parse_f64(e, "edge"))
        .collect::<Result<_>>()?;
    expect_header(
        recs.get(1).ok_or_else(|| Error::Parse("missing model header".into()))?,
        &["bin", "mode", "slope", "intercept"],
    )?;
    let bins = edges.len().saturating_sub(1);
    let mut slope: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut intercept: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for r in &recs[2..] {
        if r.len() != 4 {
            return Err(Error::Parse("malformed model row".into()));
        }
        let b = parse_usize(&r[0], "bin")?;
        let n = parse_usize(&r[1], "mode")?;
        if b >= bins || n != slope[b].len() {
            return Err(Error::Parse(format!("model row ({b},{n}) out of order")));
        }
        slope[b].push(parse_f64(&r[2], "slope")?);
        intercept[b].push(parse_f64(&r[3], "intercept")?);
    }
    AffineScoreModel::new(edges, slope, intercept)
}

/// `frame,row,col,value`, rows along the first grid axis.
pub fn write_field<W: Write>(out: W, field: &SpaceTimeField) -> Result<()> {
    let n = field.grid.points_per_axis();
    let mut w = writer(out);
    w.write_record(["frame", "row", "col", "value"])?;
    for (f, frame) in field.frames.iter().enumerate() {
        for (idx, &v) in frame.iter().enumerate() {
            w.write_record([f.to_string(), (idx / n).to_string(), (idx % n).to_string(), fmt_f64(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads frames back onto `grid`; frame times are not part of the schema.
pub fn read_field<R: Read>(input: R, grid: &Grid, times: Vec<f64>) -> Result<SpaceTimeField> {
    let recs = records(input)?;
    expect_header(
        recs.first().ok_or_else(|| Error::Parse("empty field file".into()))?,
        &["frame", "row", "col", "value"],
    )?;
    let n = grid.points_per_axis();
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for r in &recs[1..] {
        if r.len() != 4 {
            return Err(Error::Parse("malformed field row".into()));
        }
        let f = parse_usize(&r[0], "frame")?;
        let idx = parse_usize(&r[1], "row")? * n + parse_usize(&r[2], "col")?;
        if f == frames.len() {
            frames.push(Vec::with_capacity(grid.len()));
        }
        if f + 1 != frames.len() || idx != frames[f].len() {
            return Err(Error::Parse(format!("field row ({f},{idx}) out of order")));
        }
        frames[f].push(parse_f64(&r[3], "value")?);
    }
    SpaceTimeField::new(grid.clone(), times, frames)
}

/// One metric value of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub nfe: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

pub const RESULT_HEADER: [&str; 6] = ["experiment", "method", "nfe", "metric", "value", "seed"];

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.method.clone(),
            r.nfe.to_string(),
            r.metric.clone(),
            fmt_f64(r.value),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let recs = records(input)?;
    expect_header(
        recs.first().ok_or_else(|| Error::Parse("empty result file".into()))?,
        &RESULT_HEADER,
    )?;
    recs[1..]
        .iter()
        .map(|r| {
            if r.len() != RESULT_HEADER.len() {
                return Err(Error::Parse("malformed result row".into()));
            }
            Ok(ResultRow {
                experiment: r[0].to_string(),
                method: r[1].to_string(),
                nfe: parse_usize(&r[2], "nfe")?,
                metric: r[3].to_string(),
                value: parse_f64(&r[4], "value")?,
                seed: r[5]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed `{}`", &r[5])))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn coefficient_round_trip_and_header() {
        let rows = vec![vec![1.5, -2.0], vec![0.1, 1e-9]];
        let mut buf = Vec::new();
        write_coefficients(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,mode_0,mode_1\n0,"));
        assert_eq!(read_coefficients(buf.as_slice()).unwrap(), rows);
        assert!(read_coefficients("sample_id,mode_1\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_sample_file_keeps_header() {
        let mut buf = Vec::new();
        write_coefficients(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sample_id\n");
    }

    #[test]
    fn mixture_round_trip() {
        let spec = MixtureDataSpec::new(
            vec![0.25, 0.75],
            vec![vec![1.0, 2.0], vec![-1.0, 0.5]],
            vec![vec![0.1, 0.2], vec![0.3, 0.4]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_mixture(&mut buf, &spec).unwrap();
        assert_eq!(read_mixture(buf.as_slice()).unwrap(), spec);
    }

    #[test]
    fn model_round_trip() {
        let model = AffineScoreModel::new(
            vec![1e-3, 0.5, 1.0],
            vec![vec![-1.0, -2.0], vec![-0.5, -0.25]],
            vec![vec![0.0, 0.1], vec![0.2, 0.3]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), model);
    }

    #[test]
    fn field_round_trip() {
        let grid = Grid::square(3, -1.0, 1.0).unwrap();
        let frames = vec![(0..9).map(f64::from).collect(), vec![0.5; 9]];
        let field = SpaceTimeField::new(grid.clone(), vec![0.0, 0.1], frames).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &field).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(4).unwrap().starts_with("0,1,0,"));
        assert_eq!(read_field(buf.as_slice(), &grid, vec![0.0, 0.1]).unwrap(), field);
    }

    #[test]
    fn results_round_trip() {
        let rows = vec![ResultRow {
            experiment: "quadratic".into(),
            method: "ode".into(),
            nfe: 10,
            metric: "sw".into(),
            value: 0.125,
            seed: 42,
        }];
        let mut buf = Vec::new();
        write_results(&mut buf, &rows).unwrap();
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
        assert!(read_results("experiment,method\n".as_bytes()).is_err());
    }
}
