//! Bit-exact file formats and image export.
//!
//! Three little-endian binary containers share the same layout style:
//!
//! - `BIFSGRD1`: 8-byte magic, rows (u32), cols (u32), then rows*cols f64
//!   pixel values row-major.
//! - `BIFSCPX1`: 8-byte magic, rows, cols, then rows*cols interleaved
//!   (re, im) f64 pairs row-major.
//! - `BIFSCHN1`: 8-byte magic, rows, cols, retained (u32), thin (u32),
//!   burn_in (u32), seed (u64), then one record per stored lattice site in
//!   row-major site order: k (i32), l (i32), accept_count (u64), retained
//!   (a, b) f64 pairs.
//!
//! PNG export is presentation-only: 16-bit grayscale, min-max scaled, with
//! the scale recorded in a `<name>.txt` sidecar so values stay recoverable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{BifsError, Result};
use crate::fourier::unique_sites;
use crate::grid::{CartesianPoint, ImageGrid, SpectralGrid};
use crate::sampler::{ChainField, SiteChain};

pub const GRID_MAGIC: &[u8; 8] = b"BIFSGRD1";
pub const COMPLEX_MAGIC: &[u8; 8] = b"BIFSCPX1";
pub const CHAIN_MAGIC: &[u8; 8] = b"BIFSCHN1";

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn magic(&mut self, expected: &[u8; 8], what: &str) -> Result<()> {
        let mut buf = [0u8; 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| BifsError::Format(format!("{what}: file too short for magic")))?;
        if &buf != expected {
            return Err(BifsError::Format(format!(
                "{what}: bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| BifsError::Format(format!("truncated file while reading {what}")))?;
        Ok(u32::from_le_bytes(buf))
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        let mut buf = [0u8; 4];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| BifsError::Format(format!("truncated file while reading {what}")))?;
        Ok(i32::from_le_bytes(buf))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| BifsError::Format(format!("truncated file while reading {what}")))?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|_| BifsError::Format(format!("truncated file while reading {what}")))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_eof(&mut self, what: &str) -> Result<()> {
        let mut buf = [0u8; 1];
        match self.inner.read(&mut buf) {
            Ok(0) => Ok(()),
            Ok(_) => Err(BifsError::Format(format!("{what}: trailing bytes after payload"))),
            Err(e) => Err(e.into()),
        }
    }
}

fn dims_header(r: &mut Reader<impl Read>, what: &str) -> Result<(usize, usize)> {
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    if rows < 2 || cols < 2 || rows.saturating_mul(cols) > (1usize << 28) {
        return Err(BifsError::Format(format!("{what}: implausible dimensions {rows}x{cols}")));
    }
    Ok((rows, cols))
}

/// Write a real grid as `BIFSGRD1`.
pub fn write_grid(path: &Path, grid: &ImageGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GRID_MAGIC)?;
    w.write_all(&(grid.rows() as u32).to_le_bytes())?;
    w.write_all(&(grid.cols() as u32).to_le_bytes())?;
    for &v in grid.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a `BIFSGRD1` grid, validating magic, size and finiteness.
pub fn read_grid(path: &Path) -> Result<ImageGrid> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    r.magic(GRID_MAGIC, "grid")?;
    let (rows, cols) = dims_header(&mut r, "grid")?;
    let data = r.f64s(rows * cols, "grid payload")?;
    r.expect_eof("grid")?;
    ImageGrid::from_vec(rows, cols, data)
}

/// Write a complex grid as `BIFSCPX1`.
pub fn write_spectrum(path: &Path, spec: &SpectralGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(COMPLEX_MAGIC)?;
    w.write_all(&(spec.rows() as u32).to_le_bytes())?;
    w.write_all(&(spec.cols() as u32).to_le_bytes())?;
    for v in spec.as_slice() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a `BIFSCPX1` complex grid.
pub fn read_spectrum(path: &Path) -> Result<SpectralGrid> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    r.magic(COMPLEX_MAGIC, "spectrum")?;
    let (rows, cols) = dims_header(&mut r, "spectrum")?;
    let raw = r.f64s(rows * cols * 2, "spectrum payload")?;
    r.expect_eof("spectrum")?;
    let data = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    SpectralGrid::from_vec(rows, cols, data)
}

/// Write a chain container as `BIFSCHN1`.
pub fn write_chain_field(path: &Path, field: &ChainField) -> Result<()> {
    field.validate_structure()?;
    let retained = field.retained_len();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHAIN_MAGIC)?;
    w.write_all(&(field.rows as u32).to_le_bytes())?;
    w.write_all(&(field.cols as u32).to_le_bytes())?;
    w.write_all(&(retained as u32).to_le_bytes())?;
    w.write_all(&(field.thin as u32).to_le_bytes())?;
    w.write_all(&(field.burn_in as u32).to_le_bytes())?;
    w.write_all(&field.seed.to_le_bytes())?;
    for chain in &field.chains {
        w.write_all(&chain.site.k.to_le_bytes())?;
        w.write_all(&chain.site.l.to_le_bytes())?;
        w.write_all(&chain.accept_count.to_le_bytes())?;
        for s in &chain.samples {
            w.write_all(&s.a.to_le_bytes())?;
            w.write_all(&s.b.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a `BIFSCHN1` chain container. Site records must appear in row-major
/// stored-site order for the declared dimensions.
///
/// The file does not record which sites were pinned, so `fixed` is false on
/// every loaded chain; acceptance maps are meant to be produced at sampling
/// time, not from a reloaded container.
pub fn read_chain_field(path: &Path) -> Result<ChainField> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    r.magic(CHAIN_MAGIC, "chain container")?;
    let (rows, cols) = dims_header(&mut r, "chain container")?;
    let retained = r.u32("retained count")? as usize;
    let thin = r.u32("thin")? as usize;
    let burn_in = r.u32("burn_in")? as usize;
    let seed = r.u64("seed")?;
    if retained == 0 || thin == 0 {
        return Err(BifsError::Format(
            "chain container declares an empty schedule".into(),
        ));
    }
    let total_iters = (burn_in + retained * thin) as u64;
    let partition = unique_sites(rows, cols)?;
    let mut chains = Vec::new();
    for (site, _) in partition.stored() {
        let k = r.i32("site k")?;
        let l = r.i32("site l")?;
        if k != site.k || l != site.l {
            return Err(BifsError::Format(format!(
                "chain record at ({k}, {l}) does not match expected site ({}, {})",
                site.k, site.l
            )));
        }
        let accept_count = r.u64("accept count")?;
        if accept_count > total_iters {
            return Err(BifsError::Format(format!(
                "accept count {accept_count} exceeds total iterations {total_iters}"
            )));
        }
        let raw = r.f64s(retained * 2, "chain samples")?;
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(BifsError::Data(format!(
                "non-finite chain sample at site ({k}, {l})"
            )));
        }
        let samples = raw
            .chunks_exact(2)
            .map(|p| CartesianPoint::new(p[0], p[1]))
            .collect();
        chains.push(SiteChain {
            site,
            samples,
            accept_count,
            propose_count: total_iters,
            fixed: false,
        });
    }
    r.expect_eof("chain container")?;
    Ok(ChainField {
        rows,
        cols,
        burn_in,
        thin,
        seed,
        chains,
    })
}

/// Min-max scale recorded alongside a PNG export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PngScale {
    pub min: f64,
    pub max: f64,
}

/// Export a grid as a 16-bit grayscale PNG plus a `<path>.txt` sidecar with
/// the min/max used for scaling. A constant grid maps to all zeros.
pub fn write_png16(path: &Path, grid: &ImageGrid) -> Result<PngScale> {
    let (min, max) = grid.min_max();
    let span = max - min;
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        grid.cols() as u32,
        grid.rows() as u32,
    );
    for (r, row) in (0..grid.rows()).enumerate() {
        for c in 0..grid.cols() {
            let v = if span > 0.0 {
                ((grid.get(row, c) - min) / span * 65535.0).round() as u16
            } else {
                0
            };
            buf.put_pixel(c as u32, r as u32, image::Luma([v]));
        }
    }
    buf.save(path)
        .map_err(|e| BifsError::Data(format!("png encode failed: {e}")))?;
    let sidecar = sidecar_path(path);
    let mut w = BufWriter::new(File::create(sidecar)?);
    writeln!(w, "min={min:.17e}")?;
    writeln!(w, "max={max:.17e}")?;
    w.flush()?;
    Ok(PngScale { min, max })
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".txt");
    std::path::PathBuf::from(os)
}

/// Load a grayscale image (PNG/PGM) as intensities scaled to `[0, 1]`.
pub fn read_image_gray(path: &Path) -> Result<ImageGrid> {
    let img = image::open(path)
        .map_err(|e| BifsError::Format(format!("cannot decode image {}: {e}", path.display())))?
        .into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
    ImageGrid::from_vec(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::forward_fft;
    use crate::phantom::{add_noise, make_phantom, PhantomKind};
    use crate::priors::{DcMode, MagnitudePriorSpec, ParamFnSpec, PriorField};
    use crate::sampler::{run_field, SamplerConfig};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn grid_roundtrip_is_bit_exact() {
        let dir = tmp();
        let img = add_noise(&make_phantom(32, 48, PhantomKind::SmoothBlobs).unwrap(), 0.1, 1).unwrap();
        let path = dir.path().join("g.grd");
        write_grid(&path, &img).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(img, back);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..8], GRID_MAGIC);
        assert_eq!(bytes.len(), 8 + 4 + 4 + 32 * 48 * 8);
    }

    #[test]
    fn spectrum_roundtrip_is_bit_exact() {
        let dir = tmp();
        let img = add_noise(&make_phantom(32, 32, PhantomKind::SmoothBlobs).unwrap(), 0.1, 2).unwrap();
        let spec = forward_fft(&img).unwrap();
        let path = dir.path().join("s.cpx");
        write_spectrum(&path, &spec).unwrap();
        let back = read_spectrum(&path).unwrap();
        assert_eq!(spec.as_slice(), back.as_slice());
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let dir = tmp();
        let path = dir.path().join("bad.grd");
        std::fs::write(&path, b"NOTMAGIC\x01\x02").unwrap();
        assert!(matches!(read_grid(&path), Err(BifsError::Format(_))));

        let img = make_phantom(32, 32, PhantomKind::Flat).unwrap();
        let good = dir.path().join("good.grd");
        write_grid(&good, &img).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&good, &bytes).unwrap();
        assert!(matches!(read_grid(&good), Err(BifsError::Format(_))));
    }

    #[test]
    fn chain_roundtrip_preserves_everything_observable() {
        let dir = tmp();
        let img = add_noise(&make_phantom(32, 32, PhantomKind::SmoothBlobs).unwrap(), 0.08, 5).unwrap();
        let observed = forward_fft(&img).unwrap();
        let priors = PriorField::new(
            MagnitudePriorSpec::new(1.0, ParamFnSpec::new(1.0, 1.0, 1.0).unwrap()).unwrap(),
            DcMode::FixObserved,
        )
        .unwrap();
        let cfg = SamplerConfig {
            total_iters: 1_000,
            burn_in: 200,
            thin: 4,
            seed: 17,
            ..SamplerConfig::default()
        };
        let field = run_field(&observed, &priors, 0.06, &cfg).unwrap();
        let path = dir.path().join("c.chn");
        write_chain_field(&path, &field).unwrap();
        let back = read_chain_field(&path).unwrap();
        assert_eq!(back.rows, field.rows);
        assert_eq!(back.burn_in, field.burn_in);
        assert_eq!(back.thin, field.thin);
        assert_eq!(back.seed, field.seed);
        assert_eq!(back.retained_len(), field.retained_len());
        assert_eq!(back.total_iters(), field.total_iters());
        for (a, b) in field.chains.iter().zip(&back.chains) {
            assert_eq!(a.site, b.site);
            assert_eq!(a.accept_count, b.accept_count);
            assert_eq!(a.samples, b.samples);
        }

        // Corrupt the magic and expect a format error.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_chain_field(&path), Err(BifsError::Format(_))));
    }

    #[test]
    fn png_export_writes_sidecar_scale() {
        let dir = tmp();
        let img = make_phantom(32, 32, PhantomKind::SmoothBlobs).unwrap();
        let path = dir.path().join("m.png");
        let scale = write_png16(&path, &img).unwrap();
        assert!(path.exists());
        let sidecar = std::fs::read_to_string(dir.path().join("m.png.txt")).unwrap();
        assert!(sidecar.contains("min="));
        assert!(sidecar.contains("max="));
        let (min, max) = img.min_max();
        assert_eq!(scale, PngScale { min, max });

        let back = read_image_gray(&path).unwrap();
        assert_eq!(back.rows(), 32);
        assert_eq!(back.cols(), 32);
        // Round-tripping through 16 bits keeps relative structure.
        let expected = (img.get(16, 16) - min) / (max - min);
        assert!((back.get(16, 16) - expected).abs() < 1e-3);
    }

    #[test]
    fn chain_record_order_is_validated() {
        let dir = tmp();
        let img = add_noise(&make_phantom(32, 32, PhantomKind::Flat).unwrap(), 0.1, 6).unwrap();
        let observed = forward_fft(&img).unwrap();
        let priors = PriorField::new(
            MagnitudePriorSpec::new(1.0, ParamFnSpec::new(1.0, 1.0, 1.0).unwrap()).unwrap(),
            DcMode::FixObserved,
        )
        .unwrap();
        let cfg = SamplerConfig {
            total_iters: 300,
            burn_in: 100,
            thin: 2,
            seed: 3,
            ..SamplerConfig::default()
        };
        let field = run_field(&observed, &priors, 0.07, &cfg).unwrap();
        let path = dir.path().join("c.chn");
        write_chain_field(&path, &field).unwrap();
        // Flip the first site record's k to break the expected order.
        let mut bytes = std::fs::read(&path).unwrap();
        let off = 8 + 4 + 4 + 4 + 4 + 4 + 8;
        let k = i32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        bytes[off..off + 4].copy_from_slice(&(k + 1).to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_chain_field(&path), Err(BifsError::Format(_))));
    }

    #[test]
    fn read_rejects_unknown_sizes() {
        // A 2x2 grid written by hand parses; a 1xN one does not.
        let dir = tmp();
        let path = dir.path().join("tiny.grd");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(GRID_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 32]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_grid(&path), Err(BifsError::Format(_))));
    }
}
