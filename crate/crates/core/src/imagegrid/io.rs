//! Netpbm (PGM/PPM) and CSV readers and writers.
//!
//! CSV grids are row-major: the first line holds `m,n`, followed by `m`
//! lines of `n` comma-separated values.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{Image, Psf};
use crate::error::{DeblurError, Result};

/// An image decoded from a Netpbm file, together with its sample range.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedImage {
    pub image: Image,
    pub maxval: u16,
}

fn parse_err(msg: impl Into<String>) -> DeblurError {
    DeblurError::Parse(msg.into())
}

struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err("unexpected end of netpbm data"));
        }
        std::str::from_utf8(&self.data[start..self.pos]).map_err(|_| parse_err("non-ascii header"))
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.next()?;
        tok.parse()
            .map_err(|_| parse_err(format!("bad netpbm number '{tok}'")))
    }
}

/// Decodes P2/P5 (gray) and P3/P6 (RGB) data, scaling samples by `maxval`.
pub fn decode_netpbm(data: &[u8]) -> Result<DecodedImage> {
    let mut t = Tokens { data, pos: 0 };
    let magic = t.next()?;
    let (channels, binary) = match magic {
        "P2" => (1, false),
        "P5" => (1, true),
        "P3" => (3, false),
        "P6" => (3, true),
        other => return Err(parse_err(format!("unsupported netpbm magic '{other}'"))),
    };
    let width = t.number()?;
    let height = t.number()?;
    let maxval = t.number()?;
    if width == 0 || height == 0 {
        return Err(parse_err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(format!("maxval {maxval} out of range")));
    }
    let count = width * height * channels;
    let samples: Vec<u16> = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = t.pos + 1;
        let bytes_per = if maxval < 256 { 1 } else { 2 };
        let raster = data
            .get(start..start + count * bytes_per)
            .ok_or_else(|| parse_err("truncated netpbm raster"))?;
        if bytes_per == 1 {
            raster.iter().map(|&b| b as u16).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
    } else {
        (0..count)
            .map(|_| t.number().map(|v| v as u16))
            .collect::<Result<_>>()?
    };
    if samples.iter().any(|&s| s as usize > maxval) {
        return Err(parse_err("sample exceeds maxval"));
    }
    let scale = maxval as f64;
    let planes = (0..channels)
        .map(|c| {
            DMatrix::from_fn(height, width, |i, j| {
                samples[(i * width + j) * channels + c] as f64 / scale
            })
        })
        .collect();
    Ok(DecodedImage {
        image: Image::new(planes)?,
        maxval: maxval as u16,
    })
}

/// Encodes as binary P5 (1 channel) or P6 (3 channels), clamping to [0, 1].
pub fn encode_netpbm(image: &Image, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(parse_err("maxval must be positive"));
    }
    let (m, n, c) = (image.height(), image.width(), image.channel_count());
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{n} {m}\n{maxval}\n").into_bytes();
    let scale = maxval as f64;
    for i in 0..m {
        for j in 0..n {
            for ch in image.channels() {
                let s = (ch[(i, j)].clamp(0.0, 1.0) * scale).round() as u16;
                if maxval < 256 {
                    out.push(s as u8);
                } else {
                    out.extend_from_slice(&s.to_be_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn read_netpbm(path: impl AsRef<Path>) -> Result<DecodedImage> {
    decode_netpbm(&fs::read(path)?)
}

/// Renders a matrix as a row-major CSV grid.
pub fn matrix_to_csv(x: &DMatrix<f64>) -> String {
    let mut s = format!("{},{}\n", x.nrows(), x.ncols());
    for row in x.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// Parses a row-major CSV grid written by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| parse_err("empty CSV"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| parse_err(format!("bad CSV header '{header}'"))))
        .collect::<Result<_>>()?;
    let [m, n] = dims[..] else {
        return Err(parse_err(format!("CSV header must be 'm,n', got '{header}'")));
    };
    let mut values = Vec::with_capacity(m * n);
    for (r, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| parse_err(format!("bad CSV value '{t}'"))))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(parse_err(format!("CSV row {r} has {} values, expected {n}", row.len())));
        }
        values.extend(row);
    }
    if values.len() != m * n {
        return Err(parse_err(format!("CSV has {} rows, expected {m}", values.len() / n.max(1))));
    }
    Ok(DMatrix::from_row_slice(m, n, &values))
}

pub fn read_psf_csv(path: impl AsRef<Path>) -> Result<Psf> {
    Psf::new(matrix_from_csv(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm() {
        let text = b"P2\n# comment\n3 2\n255\n0 51 102\n153 204 255\n";
        let d = decode_netpbm(text).unwrap();
        assert_eq!(d.maxval, 255);
        let ch = d.image.channel(0);
        assert_eq!(ch.shape(), (2, 3));
        assert!((ch[(0, 1)] - 0.2).abs() < 1e-15);
        assert_eq!(ch[(1, 2)], 1.0);
    }

    #[test]
    fn binary_round_trip_8_and_16_bit() {
        for maxval in [255u16, 65535] {
            let ch = DMatrix::from_fn(4, 5, |i, j| ((i * 5 + j) * 3) as f64 / maxval as f64);
            let img = Image::gray(ch).unwrap();
            let bytes = encode_netpbm(&img, maxval).unwrap();
            let back = decode_netpbm(&bytes).unwrap();
            assert_eq!(back.maxval, maxval);
            assert_eq!(encode_netpbm(&back.image, maxval).unwrap(), bytes);
        }
    }

    #[test]
    fn color_round_trip() {
        let planes = (0..3)
            .map(|c| DMatrix::from_fn(2, 3, |i, j| ((i + j + c) * 20) as f64 / 255.0))
            .collect();
        let img = Image::new(planes).unwrap();
        let bytes = encode_netpbm(&img, 255).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = decode_netpbm(&bytes).unwrap();
        assert_eq!(back.image.channel_count(), 3);
        assert_eq!(encode_netpbm(&back.image, 255).unwrap(), bytes);
    }

    #[test]
    fn export_clamps() {
        let img = Image::gray(DMatrix::from_row_slice(1, 2, &[-0.5, 1.5])).unwrap();
        let bytes = encode_netpbm(&img, 255).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[0, 255]);
    }

    #[test]
    fn truncated_raster_rejected() {
        assert!(decode_netpbm(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode_netpbm(b"P7\n1 1\n255\n0").is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let x = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let text = matrix_to_csv(&x);
        assert!(text.starts_with("3,4\n"));
        assert_eq!(matrix_from_csv(&text).unwrap(), x);
    }

    #[test]
    fn csv_errors() {
        assert!(matrix_from_csv("").is_err());
        assert!(matrix_from_csv("2,2\n1,2\n3\n").is_err());
        assert!(matrix_from_csv("2,2\n1,2\n").is_err());
        assert!(matrix_from_csv("2\n1,2\n").is_err());
    }
}
