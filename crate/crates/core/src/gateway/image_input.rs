use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Encoded image bytes plus the facts the pipeline needs without decoding
/// pixels: frame size and a content digest.
#[derive(Clone, Debug)]
pub struct ImageInput {
    id: String,
    bytes: Arc<[u8]>,
    width: u32,
    height: u32,
    digest: [u8; 32],
}

impl ImageInput {
    /// Reads the header to learn the frame size. Undecodable data is an
    /// `InvalidInput` error.
    pub fn decode(id: impl Into<String>, bytes: Vec<u8>) -> Result<Self> {
        let id = id.into();
        let (width, height) = image::ImageReader::new(Cursor::new(&bytes))
            .with_guessed_format()
            .map_err(|e| Error::invalid(format!("{id}: {e}")))?
            .into_dimensions()
            .map_err(|e| Error::invalid(format!("{id}: cannot decode image: {e}")))?;
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("{id}: image has zero size")));
        }
        let digest = Sha256::digest(&bytes).into();
        Ok(ImageInput {
            id,
            bytes: bytes.into(),
            width,
            height,
            digest,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::decode(id, bytes)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn area(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png(width: u32, height: u32) -> Vec<u8> {
        let img = image::RgbImage::from_pixel(width, height, image::Rgb([10, 20, 30]));
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
            .unwrap();
        out
    }

    #[test]
    fn reads_dimensions() {
        let img = ImageInput::decode("a.png", png(7, 3)).unwrap();
        assert_eq!((img.width(), img.height()), (7, 3));
        assert_eq!(img.area(), 21.0);
    }

    #[test]
    fn garbage_is_invalid_input() {
        let err = ImageInput::decode("bad.png", b"not an image".to_vec()).unwrap_err();
        assert!(err.is_invalid_input());
    }
}
