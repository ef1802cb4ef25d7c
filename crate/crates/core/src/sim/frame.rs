//! RGB frames and observations.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

/// Edge length of every rendered frame, in pixels.
pub const FRAME_SIZE: usize = 256;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame must be {FRAME_SIZE}x{FRAME_SIZE} RGB, got {width}x{height} ({bytes} bytes)")]
    Dimensions { width: usize, height: usize, bytes: usize },
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout {0:?}")]
    Layout(png::ColorType),
    #[error("base64: {0}")]
    Base64(#[from] base64::DecodeError),
}

/// A 256x256 RGB image, 8 bits per channel, row-major from the top row.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Frame({FRAME_SIZE}x{FRAME_SIZE})")
    }
}

impl Frame {
    pub fn from_rgb(pixels: Vec<u8>) -> Result<Self, FrameError> {
        if pixels.len() != FRAME_SIZE * FRAME_SIZE * 3 {
            return Err(FrameError::Dimensions {
                width: FRAME_SIZE,
                height: FRAME_SIZE,
                bytes: pixels.len(),
            });
        }
        Ok(Self { pixels })
    }

    pub fn as_rgb(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * FRAME_SIZE + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>, FrameError> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, FRAME_SIZE as u32, FRAME_SIZE as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut decoder = png::Decoder::new(bytes);
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf)?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width as usize, info.height as usize);
        if w != FRAME_SIZE || h != FRAME_SIZE {
            return Err(FrameError::Dimensions {
                width: w,
                height: h,
                bytes: buf.len(),
            });
        }
        let rgb = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => buf
                .chunks_exact(2)
                .flat_map(|p| [p[0], p[0], p[0]])
                .collect(),
            other => return Err(FrameError::Layout(other)),
        };
        Self::from_rgb(rgb)
    }

    pub fn to_png_base64(&self) -> Result<String, FrameError> {
        Ok(BASE64.encode(self.to_png()?))
    }

    pub fn from_png_base64(text: &str) -> Result<Self, FrameError> {
        Self::from_png(&BASE64.decode(text)?)
    }
}

/// A rendered frame tagged with the simulator step that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub frame: Frame,
    pub step: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_size() {
        assert!(Frame::from_rgb(vec![0; 10]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let pixels: Vec<u8> = (0..FRAME_SIZE * FRAME_SIZE * 3).map(|i| (i % 251) as u8).collect();
        let frame = Frame::from_rgb(pixels).unwrap();
        let b64 = frame.to_png_base64().unwrap();
        assert_eq!(Frame::from_png_base64(&b64).unwrap(), frame);
    }
}
