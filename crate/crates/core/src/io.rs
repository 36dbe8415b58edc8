//! File formats: volumes (`PTVOL1`), sinograms (`PTSIN1`), six-view data
//! (`PTLAM1`), the iteration history CSV, and grayscale PPM heatmaps.
//!
//! Binary files start with one text header line followed by little-endian
//! `f64` pairs `(re, im)` in storage order. Header floats use the shortest
//! representation that round-trips, so files round-trip bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarVolume, TensorField};
use crate::geometry::{standard_directions, Direction, Vec3, ViewSet};
use crate::reconstruct::IterRecord;
use crate::tensor_inversion::LambdaData;
use crate::transport::{Sinogram, SinogramKind};

pub const VOLUME_MAGIC: &str = "PTVOL1";
pub const SINOGRAM_MAGIC: &str = "PTSIN1";
pub const LAMBDA_MAGIC: &str = "PTLAM1";

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

fn write_values(w: &mut impl Write, values: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 16);
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_values(r: &mut impl Read, count: usize, complex: bool, path: &Path) -> Result<Vec<Complex64>> {
    let width = if complex { 16 } else { 8 };
    let mut buf = vec![0u8; count * width];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(path, format!("payload shorter than {count} values")),
        _ => Error::Io(e),
    })?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err(path, "trailing bytes after payload"));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    Ok(buf
        .chunks_exact(width)
        .map(|c| if complex { Complex64::new(f(&c[..8]), f(&c[8..])) } else { Complex64::new(f(c), 0.0) })
        .collect())
}

struct Header<'a> {
    path: &'a Path,
    fields: Vec<String>,
    pos: usize,
}

impl<'a> Header<'a> {
    fn read(r: &mut impl BufRead, path: &'a Path, magic: &str) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        match fields.first() {
            Some(m) if m == magic => Ok(Header { path, fields, pos: 1 }),
            Some(m) => Err(format_err(path, format!("expected magic {magic}, found {m}"))),
            None => Err(format_err(path, "empty header")),
        }
    }

    fn next<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok =
            self.fields.get(self.pos).ok_or_else(|| format_err(self.path, format!("header is missing {what}")))?;
        self.pos += 1;
        tok.parse().map_err(|_| format_err(self.path, format!("bad {what} in header: {tok}")))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.fields.len() {
            return Err(format_err(self.path, "unexpected extra header fields"));
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn write_volume_file(path: &Path, grid: Grid, comps: &[&ScalarVolume], r0: Option<f64>) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "{VOLUME_MAGIC} {} {} {} 1", grid.n, grid.half_width, comps.len())?;
    if let Some(r0) = r0 {
        write!(w, " {r0}")?;
    }
    writeln!(w)?;
    for c in comps {
        write_values(&mut w, &c.data)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tensor(path: &Path, field: &TensorField) -> Result<()> {
    let comps: Vec<&ScalarVolume> = field.components.iter().collect();
    write_volume_file(path, field.grid(), &comps, Some(field.support_radius))
}

pub fn write_scalar(path: &Path, vol: &ScalarVolume) -> Result<()> {
    write_volume_file(path, vol.grid, &[vol], None)
}

/// Either kind of volume file.
#[derive(Clone, Debug, PartialEq)]
pub enum VolumeFile {
    Scalar(ScalarVolume),
    Tensor(TensorField),
}

pub fn read_volume(path: &Path) -> Result<VolumeFile> {
    let mut r = open(path)?;
    let mut h = Header::read(&mut r, path, VOLUME_MAGIC)?;
    let n: usize = h.next("grid size")?;
    let half_width: f64 = h.next("half width")?;
    let count: usize = h.next("component count")?;
    let complex: u8 = h.next("complex flag")?;
    if complex > 1 {
        return Err(format_err(path, "complex flag must be 0 or 1"));
    }
    let r0 = match count {
        1 => None,
        6 => Some(h.next::<f64>("support radius")?),
        c => return Err(format_err(path, format!("component count must be 1 or 6, got {c}"))),
    };
    h.finish()?;
    let grid = Grid::new(n, half_width).map_err(|e| format_err(path, e.to_string()))?;
    let values = read_values(&mut r, count * grid.len(), complex == 1, path)?;
    let mut comps = values
        .chunks_exact(grid.len())
        .map(|c| ScalarVolume::from_data(grid, c.to_vec()))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| format_err(path, e.to_string()))?;
    match r0 {
        None => Ok(VolumeFile::Scalar(comps.remove(0))),
        Some(r0) => {
            let comps: [ScalarVolume; 6] = comps.try_into().expect("six components");
            TensorField::new(comps, r0).map(VolumeFile::Tensor).map_err(|e| format_err(path, e.to_string()))
        }
    }
}

pub fn read_tensor(path: &Path) -> Result<TensorField> {
    match read_volume(path)? {
        VolumeFile::Tensor(t) => Ok(t),
        VolumeFile::Scalar(_) => Err(format_err(path, "expected a 6-component tensor volume")),
    }
}

pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    match read_volume(path)? {
        VolumeFile::Scalar(s) => Ok(s),
        VolumeFile::Tensor(_) => Err(format_err(path, "expected a scalar volume")),
    }
}

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    let v = &sino.views;
    let mut w = create(path)?;
    write!(w, "{SINOGRAM_MAGIC} {} {}", sino.kind, v.view_count())?;
    for d in &v.omegas {
        let [x, y, z] = d.vec().0;
        write!(w, " {x} {y} {z}")?;
    }
    writeln!(w, " {} {} {} {}", v.angles_per_view, v.slice_count, v.detector_count, v.half_width)?;
    write_values(&mut w, &sino.data)?;
    w.flush()?;
    Ok(())
}

fn parse_kind(path: &Path, s: &str) -> Result<SinogramKind> {
    SinogramKind::parse(s).ok_or_else(|| format_err(path, format!("unknown sinogram kind {s}")))
}

fn view_set(path: &Path, omegas: Vec<Direction>, k: usize, m_slice: usize, m_det: usize, h: f64) -> Result<ViewSet> {
    if m_slice != m_det {
        return Err(format_err(path, format!("slice count {m_slice} differs from detector count {m_det}")));
    }
    ViewSet::new(omegas, k, m_det, h).map_err(|e| format_err(path, e.to_string()))
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let mut r = open(path)?;
    let mut h = Header::read(&mut r, path, SINOGRAM_MAGIC)?;
    let kind = parse_kind(path, &h.next::<String>("kind")?)?;
    let count: usize = h.next("view count")?;
    let mut omegas = Vec::with_capacity(count);
    for _ in 0..count {
        let v = Vec3::new(h.next("view vector")?, h.next("view vector")?, h.next("view vector")?);
        omegas.push(Direction::from_unit(v).map_err(|e| format_err(path, e.to_string()))?);
    }
    let (k, ms, md, hw) =
        (h.next("angle count")?, h.next("slice count")?, h.next("detector count")?, h.next("half width")?);
    h.finish()?;
    let views = view_set(path, omegas, k, ms, md, hw)?;
    let data = read_values(&mut r, views.len(), true, path)?;
    Sinogram::from_data(views, kind, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_lambda(path: &Path, data: &LambdaData) -> Result<()> {
    let s = data.sinogram();
    let v = &s.views;
    let mut w = create(path)?;
    writeln!(
        w,
        "{LAMBDA_MAGIC} {} {} {} {} {}",
        s.kind, v.angles_per_view, v.slice_count, v.detector_count, v.half_width
    )?;
    write_values(&mut w, &s.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_lambda(path: &Path) -> Result<LambdaData> {
    let mut r = open(path)?;
    let mut h = Header::read(&mut r, path, LAMBDA_MAGIC)?;
    let kind = parse_kind(path, &h.next::<String>("kind")?)?;
    let (k, ms, md, hw) =
        (h.next("angle count")?, h.next("slice count")?, h.next("detector count")?, h.next("half width")?);
    h.finish()?;
    let views = view_set(path, standard_directions().to_vec(), k, ms, md, hw)?;
    let data = read_values(&mut r, views.len(), true, path)?;
    let sino = Sinogram::from_data(views, kind, data).map_err(|e| format_err(path, e.to_string()))?;
    LambdaData::new(sino).map_err(|e| format_err(path, e.to_string()))
}

/// Magic of a file, for commands that accept several formats.
pub fn sniff(path: &Path) -> Result<String> {
    let mut line = String::new();
    open(path)?.read_line(&mut line)?;
    Ok(line.split_whitespace().next().unwrap_or_default().to_owned())
}

pub const HISTORY_COLUMNS: &str = "n,residual_sup,update_sup,err_sup,err_fourier,seconds";

pub fn write_history(path: &Path, history: &[IterRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{HISTORY_COLUMNS}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in history {
        writeln!(
            w,
            "{},{:e},{:e},{},{},{:.3}",
            r.n,
            r.residual_sup,
            r.update_sup,
            opt(r.err_sup),
            opt(r.err_fourier),
            r.seconds
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<IterRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_COLUMNS) {
        return Err(format_err(path, "missing history header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || format_err(path, format!("malformed history row {}", i + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(IterRecord {
                n: cols[0].parse().map_err(|_| bad())?,
                residual_sup: num(cols[1])?,
                update_sup: num(cols[2])?,
                err_sup: opt(cols[3])?,
                err_fourier: opt(cols[4])?,
                seconds: num(cols[5])?,
            })
        })
        .collect()
}

/// Which real quantity of a complex image is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    fn of(self, z: Complex64) -> f64 {
        match self {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Part::Re => "re",
            Part::Im => "im",
        }
    }
}

/// Grayscale PPM of a `width x height` image (row-major, first row on top)
/// with a linear ramp from `-scale` (black) to `+scale` (white); the ramp
/// is recorded in a `.txt` sidecar next to the image.
pub fn write_heatmap(path: &Path, width: usize, height: usize, values: &[Complex64]) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let max = |p: Part| values.iter().map(|z| p.of(*z).abs()).fold(0.0, f64::max);
    let part = if max(Part::Re) >= max(Part::Im) { Part::Re } else { Part::Im };
    let scale = max(part);
    let mut w = create(path)?;
    write!(w, "P6\n{width} {height}\n255\n")?;
    let mut pixels = Vec::with_capacity(3 * values.len());
    for z in values {
        let t = if scale > 0.0 { 0.5 + 0.5 * part.of(*z) / scale } else { 0.5 };
        let g = (t * 255.0).round().clamp(0.0, 255.0) as u8;
        pixels.extend_from_slice(&[g, g, g]);
    }
    w.write_all(&pixels)?;
    w.flush()?;
    let mut side = create(&path.with_extension("txt"))?;
    writeln!(side, "part = {}", part.name())?;
    writeln!(side, "black = {}", -scale)?;
    writeln!(side, "white = {scale}")?;
    writeln!(side, "ramp = linear")?;
    side.flush()?;
    Ok(())
}

/// The `z = const` plane through the grid centre, `x` to the right and `y` up.
pub fn mid_plane(vol: &ScalarVolume) -> Vec<Complex64> {
    let n = vol.grid.n;
    let iz = n / 2;
    let mut out = Vec::with_capacity(n * n);
    for iy in (0..n).rev() {
        for ix in 0..n {
            out.push(vol.data[vol.grid.index(ix, iy, iz)]);
        }
    }
    out
}
