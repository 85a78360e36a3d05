//! Binary weight checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "CFW1"                 4-byte magic
//! spec hash              u64
//! layer count            u32
//! per layer:             u8 kind (0 = conv, 1 = dense), then 4 x u32
//!                        conv:  out_channels, in_channels, kernel, stride
//!                        dense: outputs, inputs, 1, 1
//! per layer, in order:   weights as f32, then biases as f32
//! ```

use std::path::Path;

use super::network::{LayerShape, Network, NetworkSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CFW1";

fn layer_header(shape: &LayerShape) -> (u8, [u32; 4]) {
    match *shape {
        LayerShape::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            ..
        } => (
            0,
            [out_channels as u32, in_channels as u32, kernel as u32, stride as u32],
        ),
        LayerShape::Dense { inputs, outputs } => (1, [outputs as u32, inputs as u32, 1, 1]),
    }
}

pub fn encode_checkpoint(net: &Network<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * net.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&net.spec().hash().to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        let (kind, dims) = layer_header(&layer.shape);
        out.push(kind);
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    for layer in &net.layers {
        for v in layer.weight.iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::BadCheckpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint for `spec`. A different spec hash yields
/// [`Error::ChecksumMismatch`].
pub fn decode_checkpoint(spec: &NetworkSpec, bytes: &[u8]) -> Result<Network<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let found = r.u64()?;
    let expected = spec.hash();
    if found != expected {
        return Err(Error::ChecksumMismatch { expected, found });
    }
    let mut net = Network::<f32>::zeros(spec)?;
    let count = r.u32()? as usize;
    if count != net.layers.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} layers", net.layers.len()),
            found: format!("{count} layers"),
        });
    }
    for (i, layer) in net.layers.iter().enumerate() {
        let kind = r.take(1)?[0];
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        if (kind, dims) != layer_header(&layer.shape) {
            return Err(Error::ShapeMismatch {
                expected: format!("layer {i} {:?}", layer_header(&layer.shape)),
                found: format!("layer {i} {:?}", (kind, dims)),
            });
        }
    }
    for layer in &mut net.layers {
        for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            *v = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::BadCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(net)
}

pub fn save_checkpoint(path: &Path, net: &Network<f32>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, spec: &NetworkSpec) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(spec, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::xavier_init;
    use crate::rng::derive_stream;

    #[test]
    fn roundtrip_is_bit_identical() {
        let spec = NetworkSpec::standard();
        let mut net: Network<f32> = xavier_init(&spec, &mut derive_stream(3, 0)).unwrap();
        net.layers[2].bias[5] = -0.0;
        net.layers[8].bias[0] = f32::MIN_POSITIVE / 2.0;
        let bytes = encode_checkpoint(&net);
        assert_eq!(bytes.len(), 4 + 8 + 4 + 9 * 17 + 4 * 251_019);
        let back = decode_checkpoint(&spec, &bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back.layers[2].bias[5].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn header_fields() {
        let spec = NetworkSpec::standard();
        let net = Network::<f32>::zeros(&spec).unwrap();
        let bytes = encode_checkpoint(&net);
        assert_eq!(&bytes[..4], b"CFW1");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), spec.hash());
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 9);
        // first layer: conv 24 <- 1, 5x5, stride 2
        assert_eq!(bytes[16], 0);
        assert_eq!(u32::from_le_bytes(bytes[17..21].try_into().unwrap()), 24);
        assert_eq!(u32::from_le_bytes(bytes[29..33].try_into().unwrap()), 2);
    }

    #[test]
    fn mismatched_hash_is_rejected() {
        let spec = NetworkSpec::standard();
        let net = Network::<f32>::zeros(&spec).unwrap();
        let mut bytes = encode_checkpoint(&net);
        bytes[4] ^= 1;
        match decode_checkpoint(&spec, &bytes) {
            Err(Error::ChecksumMismatch { expected, found }) => {
                assert_eq!(expected, spec.hash());
                assert_eq!(found, spec.hash() ^ 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let spec = NetworkSpec::standard();
        let bytes = encode_checkpoint(&Network::<f32>::zeros(&spec).unwrap());
        assert!(matches!(
            decode_checkpoint(&spec, &bytes[..bytes.len() - 1]),
            Err(Error::BadCheckpoint(_))
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_checkpoint(&spec, &longer), Err(Error::BadCheckpoint(_))));
        assert!(matches!(decode_checkpoint(&spec, b"CFW2"), Err(Error::BadCheckpoint(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.cfw");
        let spec = NetworkSpec::standard();
        let net: Network<f32> = xavier_init(&spec, &mut derive_stream(9, 9)).unwrap();
        save_checkpoint(&path, &net).unwrap();
        let back = load_checkpoint(&path, &spec).unwrap();
        assert_eq!(back, net);
    }
}
