//! 8-bit RGB rasters from binary PPM (P6) and PNG files.

use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved RGB, row-major, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("image must be at least 1x1, got {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::dim("rgb pixel bytes", width * height * 3, pixels.len()));
        }
        Ok(RawImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, rgb.repeat(width * height))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

pub fn decode_image(path: &Path) -> Result<RawImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image_bytes(&bytes).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

/// Decodes PPM or PNG by signature.
pub fn decode_image_bytes(bytes: &[u8]) -> std::result::Result<RawImage, String> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err("unsupported format (expected binary PPM or PNG)".into())
    }
}

fn decode_ppm(bytes: &[u8]) -> std::result::Result<RawImage, String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated PPM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let digits = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = digits.parse().map_err(|_| format!("bad PPM header field at byte {start}"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after PPM header".into());
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("PPM size {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("PPM maxval {maxval} out of range"));
    }
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or("PPM size overflows")?;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let raster = bytes
        .get(pos..pos + samples * bytes_per)
        .ok_or_else(|| format!("truncated PPM raster: need {} bytes", samples * bytes_per))?;
    let scale = |v: usize| -> u8 {
        if maxval == 255 {
            v as u8
        } else {
            ((v.min(maxval) * 255 + maxval / 2) / maxval) as u8
        }
    };
    let pixels = if bytes_per == 1 {
        raster.iter().map(|&b| scale(b as usize)).collect()
    } else {
        raster.chunks_exact(2).map(|b| scale(u16::from_be_bytes([b[0], b[1]]) as usize)).collect()
    };
    RawImage::new(width, height, pixels).map_err(|e| e.to_string())
}

fn decode_png(bytes: &[u8]) -> std::result::Result<RawImage, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("PNG too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err("palette was not expanded".into()),
    };
    let mut pixels = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let row = &buf[y * info.line_size..y * info.line_size + w * channels];
        for px in row.chunks_exact(channels) {
            match channels {
                1 | 2 => pixels.extend_from_slice(&[px[0]; 3]),
                _ => pixels.extend_from_slice(&px[..3]),
            }
        }
    }
    RawImage::new(w, h, pixels).map_err(|e| e.to_string())
}

pub fn encode_ppm(img: &RawImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn encode_png(img: &RawImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let err = |e: png::EncodingError| Error::Output(format!("png: {e}"));
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(err)?;
    w.write_image_data(&img.pixels).map_err(err)?;
    w.finish().map_err(err)?;
    Ok(out)
}
