use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Vec3;

/// Row-major RGB image with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, rgb: Vec3) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::config(format!(
                "frame buffer has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec3 {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_shape(&self, other: &Frame) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::config(format!(
                "frame size mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Binary PPM (P6, maxval 255); each channel is `round(clamp(v, 0, 1) · 255)`.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| quantize(*v)));
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_ppm()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_ppm(&bytes)
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = header_token(bytes, &mut pos)?;
        if magic != "P6" {
            return Err(Error::parse(0, format!("expected P6 magic, found {magic:?}")));
        }
        let mut number = |what: &str| -> Result<usize> {
            let start = pos;
            let tok = header_token(bytes, &mut pos)?;
            tok.parse()
                .map_err(|_| Error::parse(start, format!("invalid {what} {tok:?}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(Error::parse(pos, format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height * 3;
        if bytes.len() < pos + need {
            return Err(Error::parse(
                bytes.len(),
                format!("raster truncated: need {need} bytes after offset {pos}"),
            ));
        }
        let data = bytes[pos..pos + need].iter().map(|b| *b as f64 / 255.0).collect();
        Ok(Self { width, height, data })
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(start, "unexpected end of PPM header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_bytes_are_exact() {
        let f = Frame::from_data(2, 1, vec![0.0, 0.5, 1.0, 1.5, -0.2, 0.25]).unwrap();
        let bytes = f.to_ppm();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255, 255, 0, 64]);
    }

    #[test]
    fn ppm_round_trip_of_quantized_frame() {
        let data: Vec<f64> = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        let f = Frame::from_data(2, 2, data).unwrap();
        let back = Frame::from_ppm(&f.to_ppm()).unwrap();
        assert_eq!(back.to_ppm(), f.to_ppm());
        for (a, b) in back.data.iter().zip(&f.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_ppm_reports_offset() {
        let f = Frame::filled(3, 3, [0.2; 3]);
        let bytes = f.to_ppm();
        let err = Frame::from_ppm(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(Frame::from_ppm(b"P5\n1 1\n255\n\0").is_err());
    }

    #[test]
    fn buffer_length_checked() {
        assert!(Frame::from_data(2, 2, vec![0.0; 11]).is_err());
    }
}
