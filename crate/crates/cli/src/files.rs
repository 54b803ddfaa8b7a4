use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deblur::imagegrid::io::{encode_netpbm, matrix_from_csv, matrix_to_csv, read_netpbm};
use deblur::Image;
use tempfile::NamedTempFile;

/// A loaded image with the netpbm maxval it came with, if any.
pub struct Loaded {
    pub image: Image,
    pub maxval: Option<u16>,
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads PGM/PPM, or a single-channel CSV grid.
pub fn load_image(path: &Path) -> Result<Loaded> {
    if is_csv(path) {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m = matrix_from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
        return Ok(Loaded { image: Image::gray(m)?, maxval: None });
    }
    let d = read_netpbm(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Loaded { image: d.image, maxval: Some(d.maxval) })
}

/// Replaces `path` in one step so readers never see a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV keeps raw values; netpbm clamps to `[0, 1]` and scales by `maxval`.
pub fn save_image(path: &Path, image: &Image, maxval: Option<u16>) -> Result<()> {
    if is_csv(path) {
        if image.channel_count() != 1 {
            bail!("CSV output holds one channel; use a .ppm path for color images");
        }
        return atomic_write(path, matrix_to_csv(image.channel(0)).as_bytes());
    }
    atomic_write(path, &encode_netpbm(image, maxval.unwrap_or(255))?)
}

/// `path` itself for single-channel data, else `stem.c<index>.ext`.
pub fn channel_path(path: &Path, channel: usize, channels: usize) -> PathBuf {
    if channels == 1 {
        return path.to_path_buf();
    }
    let mut name = OsString::from(path.file_stem().unwrap_or_default());
    name.push(format!(".c{channel}"));
    if let Some(ext) = path.extension() {
        name.push(".");
        name.push(ext);
    }
    path.with_file_name(name)
}

/// Writes one CSV per channel and returns the paths written.
pub fn write_channel_csvs(path: &Path, tables: &[String]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(tables.len());
    for (c, table) in tables.iter().enumerate() {
        let p = channel_path(path, c, tables.len());
        atomic_write(&p, table.as_bytes())?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn channel_paths() {
        let p = Path::new("out/picard.csv");
        assert_eq!(channel_path(p, 0, 1), PathBuf::from("out/picard.csv"));
        assert_eq!(channel_path(p, 2, 3), PathBuf::from("out/picard.c2.csv"));
        assert_eq!(channel_path(Path::new("noext"), 1, 3), PathBuf::from("noext.c1"));
    }

    #[test]
    fn csv_round_trip_keeps_raw_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let m = DMatrix::from_row_slice(2, 2, &[-0.5, 0.25, 1.5, 0.0]);
        save_image(&path, &Image::gray(m.clone()).unwrap(), None).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.image.channel(0), &m);
        assert_eq!(back.maxval, None);
    }

    #[test]
    fn pgm_output_clamps_and_keeps_maxval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let m = DMatrix::from_row_slice(1, 3, &[-0.5, 0.5, 2.0]);
        save_image(&path, &Image::gray(m).unwrap(), Some(1000)).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.maxval, Some(1000));
        assert_eq!(back.image.channel(0).as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
