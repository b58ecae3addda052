//! On-disk formats: CSI traces, calibration matrices and position estimates.
//!
//! Every file starts with a line-oriented `key = value` header. Numbers are
//! written with Rust's shortest round-trip formatting, so text values parse
//! back to the identical `f64` regardless of locale.
//!
//! Trace layout:
//!
//! ```text
//! fresnel-trace 1
//! sample_rate = 500
//! start_time = 0
//! center_freq = 5745000000
//! spacing = 1250000
//! count = 30
//! tx = 0 0
//! rx = 4 0
//! environment = free_space
//! encoding = f32le
//! samples = 1501
//! truth = 0 2 1          (optional, repeated)
//! end_header
//! <body>
//! ```
//!
//! A binary body holds, per sample, a `u32` index then `count` `f32`
//! amplitudes, all little-endian. A text body holds one line per sample:
//! the index followed by the amplitudes.

use crate::fresnel::{LinkGeometry, Point2D, SubcarrierSet};
use crate::locate::LocationEstimate;
use crate::phase::PhaseOffsetMatrix;
use crate::sim::{CsiSeries, Trajectory};
use std::io::{BufRead, Write};
use std::str::FromStr;
use thiserror::Error;

const TRACE_MAGIC: &str = "fresnel-trace 1";
const CALIB_MAGIC: &str = "fresnel-calibration 1";
const ESTIMATES_HEADER: &str = "# time_s x_m y_m residual_m contributing_links";
const END_HEADER: &str = "end_header";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid content: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    FreeSpace,
    Multipath,
}

impl Environment {
    fn as_str(self) -> &'static str {
        match self {
            Environment::FreeSpace => "free_space",
            Environment::Multipath => "multipath",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    F32Le,
    Text,
}

impl Encoding {
    fn as_str(self) -> &'static str {
        match self {
            Encoding::F32Le => "f32le",
            Encoding::Text => "text",
        }
    }
}

/// A link's trace plus what the simulator knows about it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub series: CsiSeries,
    pub truth: Option<Trajectory>,
    pub environment: Environment,
    pub encoding: Encoding,
}

pub fn write_trace<W: Write>(trace: &TraceFile, mut out: W) -> Result<(), FormatError> {
    let s = &trace.series;
    let subs = s.subcarriers();
    let link = s.link();
    let mut header = String::new();
    header.push_str(TRACE_MAGIC);
    header.push('\n');
    let mut kv = |k: &str, v: String| {
        header.push_str(k);
        header.push_str(" = ");
        header.push_str(&v);
        header.push('\n');
    };
    kv("sample_rate", s.sample_rate().to_string());
    kv("start_time", s.start_time().to_string());
    kv("center_freq", subs.center_freq().to_string());
    kv("spacing", subs.spacing().to_string());
    kv("count", subs.count().to_string());
    kv("tx", format!("{} {}", link.tx().x, link.tx().y));
    kv("rx", format!("{} {}", link.rx().x, link.rx().y));
    kv("environment", trace.environment.as_str().to_string());
    kv("encoding", trace.encoding.as_str().to_string());
    kv("samples", s.len().to_string());
    if let Some(truth) = &trace.truth {
        for (t, p) in truth.samples() {
            kv("truth", format!("{t} {} {}", p.x, p.y));
        }
    }
    header.push_str(END_HEADER);
    header.push('\n');
    out.write_all(header.as_bytes())?;

    let rows = s.rows();
    match trace.encoding {
        Encoding::F32Le => {
            let mut buf = Vec::with_capacity(s.len() * (4 + 4 * rows.len()));
            for n in 0..s.len() {
                let index = u32::try_from(n)
                    .map_err(|_| FormatError::Invalid("more than 2^32 samples".into()))?;
                buf.extend_from_slice(&index.to_le_bytes());
                for row in rows {
                    buf.extend_from_slice(&(row[n] as f32).to_le_bytes());
                }
            }
            out.write_all(&buf)?;
        }
        Encoding::Text => {
            for n in 0..s.len() {
                let mut line = n.to_string();
                for row in rows {
                    line.push(' ');
                    line.push_str(&(row[n] as f32).to_string());
                }
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn parse_num<T: FromStr>(v: &str, line: usize, key: &str) -> Result<T, FormatError> {
    v.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad value for {key}: {v:?}")))
}

fn parse_nums(v: &str, n: usize, line: usize, key: &str) -> Result<Vec<f64>, FormatError> {
    let vals: Vec<f64> = v
        .split_whitespace()
        .map(|x| parse_num(x, line, key))
        .collect::<Result<_, _>>()?;
    if vals.len() != n {
        return Err(parse_err(line, format!("{key} needs {n} numbers, got {}", vals.len())));
    }
    Ok(vals)
}

/// Reads header lines up to `end_header`; returns `(line number, key, value)`.
fn read_header<R: BufRead>(
    input: &mut R,
    magic: &str,
) -> Result<(Vec<(usize, String, String)>, usize), FormatError> {
    let mut line = String::new();
    let mut lineno = 1;
    input.read_line(&mut line)?;
    if line.trim_end() != magic {
        return Err(parse_err(lineno, format!("expected {magic:?}")));
    }
    let mut entries = Vec::new();
    loop {
        line.clear();
        lineno += 1;
        if input.read_line(&mut line)? == 0 {
            return Err(parse_err(lineno, "missing end_header"));
        }
        let l = line.trim_end();
        if l == END_HEADER {
            break;
        }
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, "expected key = value"))?;
        entries.push((lineno, k.trim().to_string(), v.trim().to_string()));
    }
    Ok((entries, lineno))
}

fn take<'a>(
    entries: &'a [(usize, String, String)],
    key: &str,
) -> Result<(usize, &'a str), FormatError> {
    let mut found = entries.iter().filter(|(_, k, _)| k == key);
    let (line, _, v) = found
        .next()
        .ok_or_else(|| FormatError::Invalid(format!("header lacks {key}")))?;
    if let Some((dup, _, _)) = found.next() {
        return Err(parse_err(*dup, format!("duplicate {key}")));
    }
    Ok((*line, v.as_str()))
}

fn subcarriers_from(entries: &[(usize, String, String)]) -> Result<SubcarrierSet, FormatError> {
    let (l, v) = take(entries, "center_freq")?;
    let center: f64 = parse_num(v, l, "center_freq")?;
    let (l, v) = take(entries, "spacing")?;
    let spacing: f64 = parse_num(v, l, "spacing")?;
    let (l, v) = take(entries, "count")?;
    let count: usize = parse_num(v, l, "count")?;
    SubcarrierSet::new(center, spacing, count).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn read_trace<R: BufRead>(mut input: R) -> Result<TraceFile, FormatError> {
    let (entries, mut lineno) = read_header(&mut input, TRACE_MAGIC)?;
    for (l, k, _) in &entries {
        let known = [
            "sample_rate",
            "start_time",
            "center_freq",
            "spacing",
            "count",
            "tx",
            "rx",
            "environment",
            "encoding",
            "samples",
            "truth",
        ];
        if !known.contains(&k.as_str()) {
            return Err(parse_err(*l, format!("unknown key {k}")));
        }
    }
    let (l, v) = take(&entries, "sample_rate")?;
    let sample_rate: f64 = parse_num(v, l, "sample_rate")?;
    let (l, v) = take(&entries, "start_time")?;
    let start_time: f64 = parse_num(v, l, "start_time")?;
    let subs = subcarriers_from(&entries)?;
    let k = subs.count();
    let (l, v) = take(&entries, "tx")?;
    let tx = parse_nums(v, 2, l, "tx")?;
    let (l, v) = take(&entries, "rx")?;
    let rx = parse_nums(v, 2, l, "rx")?;
    let link = LinkGeometry::new(Point2D::new(tx[0], tx[1]), Point2D::new(rx[0], rx[1]))
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    let (l, v) = take(&entries, "environment")?;
    let environment = match v {
        "free_space" => Environment::FreeSpace,
        "multipath" => Environment::Multipath,
        other => return Err(parse_err(l, format!("unknown environment {other:?}"))),
    };
    let (l, v) = take(&entries, "encoding")?;
    let encoding = match v {
        "f32le" => Encoding::F32Le,
        "text" => Encoding::Text,
        other => return Err(parse_err(l, format!("unknown encoding {other:?}"))),
    };
    let (l, v) = take(&entries, "samples")?;
    let n: usize = parse_num(v, l, "samples")?;
    if n == 0 {
        return Err(parse_err(l, "trace has no samples"));
    }

    let truth_points: Vec<(f64, Point2D)> = entries
        .iter()
        .filter(|(_, key, _)| key == "truth")
        .map(|(l, _, v)| {
            let p = parse_nums(v, 3, *l, "truth")?;
            Ok((p[0], Point2D::new(p[1], p[2])))
        })
        .collect::<Result<_, FormatError>>()?;
    let truth = if truth_points.is_empty() {
        None
    } else {
        Some(Trajectory::new(truth_points).map_err(|e| FormatError::Invalid(e.to_string()))?)
    };

    let mut rows = vec![Vec::with_capacity(n); k];
    match encoding {
        Encoding::F32Le => {
            let record = 4 + 4 * k;
            let mut body = Vec::new();
            input.read_to_end(&mut body)?;
            if body.len() != record * n {
                return Err(FormatError::Invalid(format!(
                    "binary body has {} bytes, expected {} ({n} records of {record})",
                    body.len(),
                    record * n
                )));
            }
            for (i, rec) in body.chunks_exact(record).enumerate() {
                let index = u32::from_le_bytes(rec[..4].try_into().expect("4 bytes"));
                if index as usize != i {
                    return Err(FormatError::Invalid(format!(
                        "record {i} carries sample index {index}"
                    )));
                }
                for (kk, row) in rows.iter_mut().enumerate() {
                    let off = 4 + 4 * kk;
                    let v = f32::from_le_bytes(rec[off..off + 4].try_into().expect("4 bytes"));
                    row.push(v as f64);
                }
            }
        }
        Encoding::Text => {
            let mut line = String::new();
            let mut i = 0;
            loop {
                line.clear();
                lineno += 1;
                if input.read_line(&mut line)? == 0 {
                    break;
                }
                if line.trim().is_empty() {
                    continue;
                }
                let mut fields = line.split_whitespace();
                let index: usize = parse_num(fields.next().unwrap_or(""), lineno, "index")?;
                if index != i {
                    return Err(parse_err(lineno, format!("expected sample index {i}, got {index}")));
                }
                let vals: Vec<f32> = fields
                    .map(|x| parse_num(x, lineno, "amplitude"))
                    .collect::<Result<_, _>>()?;
                if vals.len() != k {
                    return Err(parse_err(
                        lineno,
                        format!("record has {} amplitudes, header says {k}", vals.len()),
                    ));
                }
                for (row, v) in rows.iter_mut().zip(vals) {
                    row.push(v as f64);
                }
                i += 1;
            }
            if i != n {
                return Err(FormatError::Invalid(format!("found {i} records, header says {n}")));
            }
        }
    }
    let series = CsiSeries::new(sample_rate, start_time, rows, subs, link)
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(TraceFile {
        series,
        truth,
        environment,
        encoding,
    })
}

pub fn write_calibration<W: Write>(m: &PhaseOffsetMatrix, mut out: W) -> Result<(), FormatError> {
    let subs = m.subcarriers();
    let mut text = format!(
        "{CALIB_MAGIC}\ncenter_freq = {}\nspacing = {}\ncount = {}\n{END_HEADER}\n",
        subs.center_freq(),
        subs.spacing(),
        subs.count()
    );
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_calibration<R: BufRead>(mut input: R) -> Result<PhaseOffsetMatrix, FormatError> {
    let (entries, mut lineno) = read_header(&mut input, CALIB_MAGIC)?;
    let subs = subcarriers_from(&entries)?;
    let k = subs.count();
    let mut rows = Vec::with_capacity(k);
    let mut line = String::new();
    loop {
        line.clear();
        lineno += 1;
        if input.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_nums(&line, k, lineno, "matrix row")?);
    }
    if rows.len() != k {
        return Err(FormatError::Invalid(format!("matrix has {} rows, expected {k}", rows.len())));
    }
    PhaseOffsetMatrix::from_rows(rows, subs).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_estimates<W: Write>(estimates: &[LocationEstimate], mut out: W) -> Result<(), FormatError> {
    let mut text = String::from(ESTIMATES_HEADER);
    text.push('\n');
    for e in estimates {
        text.push_str(&format!(
            "{} {} {} {} {}\n",
            e.time, e.position.x, e.position.y, e.residual, e.contributing_links
        ));
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_estimates<R: BufRead>(input: R) -> Result<Vec<LocationEstimate>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 5 {
            return Err(parse_err(i + 1, format!("expected 5 fields, got {}", f.len())));
        }
        let num = |j: usize, what: &str| -> Result<f64, FormatError> {
            let v: f64 = parse_num(f[j], i + 1, what)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(i + 1, format!("{what} is not finite")))
            }
        };
        out.push(LocationEstimate {
            time: num(0, "time")?,
            position: Point2D::new(num(1, "x")?, num(2, "y")?),
            residual: num(3, "residual")?,
            contributing_links: parse_num(f[4], i + 1, "contributing_links")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{
        make_trajectory, simulate_free_space, MultipathSpec, NoiseSpec, PathShape, ReflectorSpec,
        TrajectorySpec,
    };

    fn trace(encoding: Encoding, with_truth: bool) -> TraceFile {
        let link = LinkGeometry::new(Point2D::new(0.0, 0.0), Point2D::new(4.0, 0.0)).unwrap();
        let subs = SubcarrierSet::wifi_40mhz();
        let traj = make_trajectory(&TrajectorySpec::new(
            PathShape::Linear {
                from: Point2D::new(1.0, 1.0),
                to: Point2D::new(3.0, 2.0),
            },
            1.0,
        ))
        .unwrap();
        let refl = ReflectorSpec::default();
        let series = simulate_free_space(
            &link,
            &subs,
            &traj,
            &refl,
            &NoiseSpec::from_snr_db(20.0, &refl, 3),
            500.0,
        )
        .unwrap();
        TraceFile {
            series,
            truth: with_truth.then_some(traj),
            environment: Environment::FreeSpace,
            encoding,
        }
    }

    fn bytes(t: &TraceFile) -> Vec<u8> {
        let mut v = Vec::new();
        write_trace(t, &mut v).unwrap();
        v
    }

    #[test]
    fn trace_round_trips_byte_for_byte() {
        for enc in [Encoding::F32Le, Encoding::Text] {
            for truth in [false, true] {
                let t = trace(enc, truth);
                let first = bytes(&t);
                let back = read_trace(first.as_slice()).unwrap();
                assert_eq!(back.truth, t.truth);
                assert_eq!(back.series.link(), t.series.link());
                assert_eq!(back.series.subcarriers(), t.series.subcarriers());
                assert_eq!(back.series.len(), t.series.len());
                assert_eq!(bytes(&back), first);
                for (a, b) in back.series.rows().iter().zip(t.series.rows()) {
                    for (x, y) in a.iter().zip(b) {
                        assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn trace_rejects_corruption() {
        let t = trace(Encoding::F32Le, false);
        let mut b = bytes(&t);
        b.truncate(b.len() - 3);
        assert!(read_trace(b.as_slice()).is_err());

        let text = String::from_utf8(bytes(&trace(Encoding::Text, false))).unwrap();
        let bad_width = text.replacen("\n0 ", "\n0 1.0 ", 1);
        assert!(read_trace(bad_width.as_bytes()).is_err());
        let bad_index = text.replacen("\n1 ", "\n7 ", 1);
        assert!(read_trace(bad_index.as_bytes()).is_err());
        assert!(read_trace("fresnel-trace 9\n".as_bytes()).is_err());
        let no_rate = text.replacen("sample_rate = 500\n", "", 1);
        assert!(read_trace(no_rate.as_bytes()).is_err());
    }

    #[test]
    fn calibration_round_trip_is_lossless() {
        let subs = SubcarrierSet::wifi_40mhz();
        let eps = MultipathSpec::random_offsets(&subs, 11).static_phase;
        let m = PhaseOffsetMatrix::from_subcarrier_offsets(&eps, &subs);
        let mut buf = Vec::new();
        write_calibration(&m, &mut buf).unwrap();
        let back = read_calibration(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_calibration(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn estimates_round_trip() {
        let est = vec![
            LocationEstimate {
                position: Point2D::new(1.25, -0.1),
                time: 0.024,
                residual: 1e-9,
                contributing_links: 3,
            },
            LocationEstimate {
                position: Point2D::new(5.0, 2.0 / 3.0),
                time: 0.074,
                residual: 0.02,
                contributing_links: 2,
            },
        ];
        let mut buf = Vec::new();
        write_estimates(&est, &mut buf).unwrap();
        assert_eq!(read_estimates(buf.as_slice()).unwrap(), est);
        assert!(read_estimates("0.1 2 3 NaN 3\n".as_bytes()).is_err());
        assert!(read_estimates("0.1 2 3\n".as_bytes()).is_err());
    }
}
