//! File formats.
//!
//! - QHF1: `QHF1 <ndim> <n1> [n2] <ext1> [ext2]\n`, then little-endian f64 (re, im) pairs, row-major.
//! - QHK1: `QHK1 <n_out> <n_in>\n`, then little-endian f64 (re, im) pairs, row-major over (out, in).
//! - QHE1: `QHE1 <n> <seed> <rng-name>\n`, then little-endian u32 (x1, x2) pairs.
//! - CSV: one line per cell, coordinates then value, 17 significant digits.
//! - PGM: binary P5, maxval 65535, linear min-max scaling of `|field|`.

use std::io::{BufRead, Read, Write};

use num_complex::Complex64;

use crate::error::{QholoError, Result};
use crate::grid::{ComplexField, GridSpec};
use crate::holography::Peak;
use crate::montecarlo::EventStream;
use crate::optics::DenseKernel;

fn bad(msg: impl Into<String>) -> QholoError {
    QholoError::Format(msg.into())
}

/// Shortest round-tripping text is not required; 17 significant digits always are.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_header(r: &mut impl BufRead) -> Result<Vec<String>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(bad("missing header line"));
    }
    Ok(line.split_whitespace().map(str::to_string).collect())
}

fn write_pairs(w: &mut impl Write, values: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_pairs(r: &mut impl Read, count: usize) -> Result<Vec<Complex64>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != count * 16 {
        return Err(bad(format!("expected {} payload bytes, found {}", count * 16, buf.len())));
    }
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| bad(format!("bad {what} `{s}`")))
}

pub fn write_qhf1(w: &mut impl Write, f: &ComplexField) -> Result<()> {
    let g = f.grid();
    let mut header = format!("QHF1 {}", g.ndim());
    for a in 0..g.ndim() {
        header += &format!(" {}", g.samples(a));
    }
    for a in 0..g.ndim() {
        header += &format!(" {}", fmt_f64(g.extent(a)));
    }
    writeln!(w, "{header}")?;
    write_pairs(w, f.values())
}

/// A real map stored as QHF1 with zero imaginary parts.
pub fn write_qhf1_real(w: &mut impl Write, grid: &GridSpec, values: &[f64]) -> Result<()> {
    let f = ComplexField::new(*grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())?;
    write_qhf1(w, &f)
}

pub fn read_qhf1(r: &mut impl BufRead) -> Result<ComplexField> {
    let h = read_header(r)?;
    if h.first().map(String::as_str) != Some("QHF1") || h.len() < 2 {
        return Err(bad("not a QHF1 stream"));
    }
    let ndim: usize = parse(&h[1], "dimension")?;
    if !(ndim == 1 || ndim == 2) || h.len() != 2 + 2 * ndim {
        return Err(bad("malformed QHF1 header"));
    }
    let grid = if ndim == 1 {
        GridSpec::line(parse(&h[2], "sample count")?, parse(&h[3], "extent")?)?
    } else {
        GridSpec::plane(
            [parse(&h[2], "sample count")?, parse(&h[3], "sample count")?],
            [parse(&h[4], "extent")?, parse(&h[5], "extent")?],
        )?
    };
    let values = read_pairs(r, grid.len())?;
    ComplexField::new(grid, values)
}

pub fn write_qhk1(w: &mut impl Write, k: &DenseKernel) -> Result<()> {
    writeln!(w, "QHK1 {} {}", k.rows(), k.cols())?;
    write_pairs(w, k.entries())
}

/// Returns `(n_out, n_in, entries)`.
pub fn read_qhk1(r: &mut impl BufRead) -> Result<(usize, usize, Vec<Complex64>)> {
    let h = read_header(r)?;
    if h.len() != 3 || h[0] != "QHK1" {
        return Err(bad("not a QHK1 stream"));
    }
    let (rows, cols): (usize, usize) = (parse(&h[1], "row count")?, parse(&h[2], "column count")?);
    let entries = read_pairs(r, rows * cols)?;
    Ok((rows, cols, entries))
}

pub fn write_qhe1(w: &mut impl Write, s: &EventStream) -> Result<()> {
    writeln!(w, "QHE1 {} {} {}", s.events.len(), s.seed, s.rng_name)?;
    let mut buf = Vec::with_capacity(s.events.len() * 8);
    for &(a, b) in &s.events {
        buf.extend_from_slice(&a.to_le_bytes());
        buf.extend_from_slice(&b.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// `(seed, rng name, events)` of a QHE1 file.
pub type QheContents = (u64, String, Vec<(u32, u32)>);

pub fn read_qhe1(r: &mut impl BufRead) -> Result<QheContents> {
    let h = read_header(r)?;
    if h.len() != 4 || h[0] != "QHE1" {
        return Err(bad("not a QHE1 stream"));
    }
    let n: usize = parse(&h[1], "event count")?;
    let seed: u64 = parse(&h[2], "seed")?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != n * 8 {
        return Err(bad(format!("expected {} event bytes, found {}", n * 8, buf.len())));
    }
    let events = buf
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes(c[..4].try_into().unwrap()),
                u32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((seed, h[3].clone(), events))
}

/// `x2,value` (or `x2,y2,value`) with cell-centre coordinates.
pub fn write_csv(w: &mut impl Write, grid: &GridSpec, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(QholoError::GridMismatch(format!("{} values for {grid}", values.len())));
    }
    let mut out = String::new();
    out += if grid.ndim() == 1 { "x2,value\n" } else { "x2,y2,value\n" };
    for (cell, v) in values.iter().enumerate() {
        let c = grid.cell_center(cell);
        if grid.ndim() == 1 {
            out += &format!("{},{}\n", fmt_f64(c[0]), fmt_f64(*v));
        } else {
            out += &format!("{},{},{}\n", fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(*v));
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Last column of a CSV written by [`write_csv`].
pub fn read_csv_values(r: &mut impl BufRead) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or("");
        values.push(parse(last, &format!("value on line {}", i + 1))?);
    }
    Ok(values)
}

/// Minimum and maximum of `|field|` used for the grey-level mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

impl PgmScale {
    pub fn sidecar(&self) -> String {
        format!("scale linear\nquantity magnitude\nmin {}\nmax {}\n", fmt_f64(self.min), fmt_f64(self.max))
    }
}

/// `|field|` as a 16-bit P5 image; 1-D fields become a single row.
pub fn write_pgm(w: &mut impl Write, f: &ComplexField) -> Result<PgmScale> {
    let g = f.grid();
    let (rows, cols) = if g.ndim() == 1 { (1, g.samples(0)) } else { (g.samples(0), g.samples(1)) };
    let mag: Vec<f64> = f.values().iter().map(|v| v.norm()).collect();
    let min = mag.iter().copied().fold(f64::INFINITY, f64::min);
    let max = mag.iter().copied().fold(0.0, f64::max);
    let span = max - min;
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    let mut buf = Vec::with_capacity(mag.len() * 2);
    for m in &mag {
        let level = if span > 0.0 { ((m - min) / span * 65535.0).round() as u16 } else { 0 };
        buf.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(PgmScale { min, max })
}

/// `rank,x[,y],depth,magnitude` with 1-based ranks.
pub fn write_peaks_csv(w: &mut impl Write, ndim: usize, peaks: &[Peak]) -> Result<()> {
    let mut out = String::from(if ndim == 1 { "rank,x,depth,magnitude\n" } else { "rank,x,y,depth,magnitude\n" });
    for (i, p) in peaks.iter().enumerate() {
        out += &format!("{},{}", i + 1, fmt_f64(p.position[0]));
        if ndim == 2 {
            out += &format!(",{}", fmt_f64(p.position[1]));
        }
        out += &format!(",{},{}\n", fmt_f64(p.depth), fmt_f64(p.magnitude));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn qhf1_round_trip() {
        for g in [GridSpec::line(5, 2.5).unwrap(), GridSpec::plane([3, 4], [1.5, 0.1]).unwrap()] {
            let f = ComplexField::from_fn(g, |x| Complex64::new(x[0], x[1] + 0.3)).unwrap();
            let mut buf = Vec::new();
            write_qhf1(&mut buf, &f).unwrap();
            let back = read_qhf1(&mut Cursor::new(buf)).unwrap();
            assert_eq!(back, f);
        }
        assert!(read_qhf1(&mut Cursor::new(b"QHF1 1 4 1.0\n\x00".to_vec())).is_err());
    }

    #[test]
    fn qhk1_and_qhe1_round_trip() {
        let g = GridSpec::line(3, 3.0).unwrap();
        let k = DenseKernel::from_fn(g, g, |o, i| Complex64::new(o as f64, i as f64)).unwrap();
        let mut buf = Vec::new();
        write_qhk1(&mut buf, &k).unwrap();
        let (r, c, e) = read_qhk1(&mut Cursor::new(buf)).unwrap();
        assert_eq!((r, c, e.as_slice()), (3, 3, k.entries()));

        let s = EventStream {
            seed: 7,
            rng_name: "test-rng".into(),
            wall_grid: g,
            detector_grid: g,
            events: vec![(1, 2), (0, 0), (2, 1)],
        };
        let mut buf = Vec::new();
        write_qhe1(&mut buf, &s).unwrap();
        assert!(buf.starts_with(b"QHE1 3 7 test-rng\n"));
        let (seed, name, ev) = read_qhe1(&mut Cursor::new(buf)).unwrap();
        assert_eq!((seed, name, ev), (7, "test-rng".to_string(), s.events));
    }

    #[test]
    fn csv_keeps_every_bit() {
        let g = GridSpec::line(4, 1.0).unwrap();
        let v = vec![0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 12345.678901234567];
        let mut buf = Vec::new();
        write_csv(&mut buf, &g, &v).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x2,value\n"));
        assert_eq!(read_csv_values(&mut Cursor::new(buf)).unwrap(), v);
    }

    #[test]
    fn pgm_scaling() {
        let g = GridSpec::plane([2, 2], [2.0, 2.0]).unwrap();
        let f = ComplexField::new(
            g,
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 3.0), Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        let s = write_pgm(&mut buf, &f).unwrap();
        assert_eq!((s.min, s.max), (0.0, 3.0));
        let header = b"P5\n2 2\n65535\n";
        assert!(buf.starts_with(header));
        let px = &buf[header.len()..];
        assert_eq!(&px[2..4], &65535u16.to_be_bytes());
        assert_eq!(&px[6..8], &0u16.to_be_bytes());
        assert!(s.sidecar().contains("max 3.0000000000000000e0"));
    }
}
