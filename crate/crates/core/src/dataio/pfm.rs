//! Portable float maps: `PF` (RGB) or `Pf` (gray), little-endian (scale
//! `-1.0`), rows stored bottom to top.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Image;

pub fn encode_pfm(img: &Image<f32>) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Shape(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    out.reserve(img.data.len() * 4);
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image<f32>> {
    let mut reader = BufReader::new(bytes);
    let bad = |m: &str| Error::InvalidInput(format!("PFM: {m}"));
    let mut line = String::new();
    let mut next_token_line = |reader: &mut BufReader<&[u8]>| -> Result<String> {
        line.clear();
        reader.read_line(&mut line).map_err(|e| bad(&e.to_string()))?;
        Ok(line.trim().to_string())
    };
    let channels = match next_token_line(&mut reader)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(bad(&format!("unknown header {other:?}"))),
    };
    let dims = next_token_line(&mut reader)?;
    let mut it = dims.split_whitespace().map(|s| s.parse::<usize>());
    let (Some(Ok(width)), Some(Ok(height)), None) = (it.next(), it.next(), it.next()) else {
        return Err(bad("bad dimensions line"));
    };
    let scale: f64 = next_token_line(&mut reader)?.parse().map_err(|_| bad("bad scale line"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero"));
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let mut raw = vec![0u8; n * 4];
    reader.read_exact(&mut raw).map_err(|_| bad("truncated data"))?;
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Image::from_vec(width, height, channels, data)
}

pub fn write_pfm(path: &Path, img: &Image<f32>) -> Result<()> {
    let bytes = encode_pfm(img)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Image<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let data: Vec<f32> = (0..24).map(|i| (i as f32 * 0.731).sin() * 1e3).collect();
        let img = Image::from_vec(4, 2, 3, data).unwrap();
        assert_eq!(decode_pfm(&encode_pfm(&img).unwrap()).unwrap(), img);
        let gray = Image::from_vec(2, 3, 1, vec![f32::MIN_POSITIVE, -0.0, 1.5, 2.5, -7.0, 1e-30]).unwrap();
        let back = decode_pfm(&encode_pfm(&gray).unwrap()).unwrap();
        assert_eq!(
            back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            gray.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rows_are_stored_bottom_up() {
        let img = Image::from_vec(1, 2, 1, vec![1.0f32, 2.0]).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        let header = b"Pf\n1 2\n-1.0\n".len();
        assert_eq!(&bytes[header..header + 4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn truncated_data_is_rejected() {
        let img = Image::from_vec(2, 2, 1, vec![1.0f32; 4]).unwrap();
        let bytes = encode_pfm(&img).unwrap();
        assert!(decode_pfm(&bytes[..bytes.len() - 1]).is_err());
    }
}
