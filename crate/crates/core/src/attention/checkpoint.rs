//! `BATT` parameter checkpoints.
//!
//! Layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! "BATT" | version | layer count
//! per layer:
//!   L | M | M_d | M' | variant | fusion | use_w_qart | leaky_slope
//!   w_self_q (M x M_d) | w_self_k (M x M_d) | w_qart_q (L x L) | w_qart_k (L x L)
//!   theta_qart | theta_self | w_l (M x M')
//! ```
//!
//! Matrices are row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::{AttentionModel, AttentionParams, Fusion, Variant};

pub const BATT_MAGIC: &[u8; 4] = b"BATT";
pub const BATT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_matrix(w: &mut impl Write, m: &Array2<f64>) -> Result<()> {
    for v in m.iter() {
        put_f64(w, *v)?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
    Ok(f64::from_le_bytes(b))
}

fn get_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let values = (0..rows * cols)
        .map(|_| get_f64(r))
        .collect::<Result<Vec<f64>>>()?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::format(e.to_string()))
}

fn dim_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format("dimension exceeds u32"))
}

pub fn write_checkpoint(mut w: impl Write, model: &AttentionModel) -> Result<()> {
    w.write_all(BATT_MAGIC)?;
    put_u32(&mut w, BATT_VERSION)?;
    put_u32(&mut w, dim_u32(model.layers.len())?)?;
    for layer in &model.layers {
        let d = layer.dims();
        for v in [d.l, d.m, d.md, d.m_out] {
            put_u32(&mut w, dim_u32(v)?)?;
        }
        put_u32(&mut w, layer.variant.code())?;
        put_u32(&mut w, layer.fusion.code())?;
        put_u32(&mut w, u32::from(layer.use_w_qart))?;
        put_f64(&mut w, layer.leaky_slope)?;
        put_matrix(&mut w, &layer.w_self_q)?;
        put_matrix(&mut w, &layer.w_self_k)?;
        put_matrix(&mut w, &layer.w_qart_q)?;
        put_matrix(&mut w, &layer.w_qart_k)?;
        put_f64(&mut w, layer.theta_qart)?;
        put_f64(&mut w, layer.theta_self)?;
        put_matrix(&mut w, &layer.w_l)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<AttentionModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::format(format!("truncated checkpoint: {e}")))?;
    if &magic != BATT_MAGIC {
        return Err(Error::format("missing BATT magic"));
    }
    let version = get_u32(&mut r)?;
    if version != BATT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let count = get_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let l = get_u32(&mut r)? as usize;
        let m = get_u32(&mut r)? as usize;
        let md = get_u32(&mut r)? as usize;
        let m_out = get_u32(&mut r)? as usize;
        let variant = Variant::from_code(get_u32(&mut r)?)?;
        let fusion = Fusion::from_code(get_u32(&mut r)?)?;
        let use_w_qart = match get_u32(&mut r)? {
            0 => false,
            1 => true,
            other => return Err(Error::format(format!("bad use_w_qart flag {other}"))),
        };
        let leaky_slope = get_f64(&mut r)?;
        let w_self_q = get_matrix(&mut r, m, md)?;
        let w_self_k = get_matrix(&mut r, m, md)?;
        let w_qart_q = get_matrix(&mut r, l, l)?;
        let w_qart_k = get_matrix(&mut r, l, l)?;
        let theta_qart = get_f64(&mut r)?;
        let theta_self = get_f64(&mut r)?;
        let w_l = get_matrix(&mut r, m, m_out)?;
        layers.push(AttentionParams {
            w_self_q,
            w_self_k,
            w_qart_q,
            w_qart_k,
            theta_qart,
            theta_self,
            w_l,
            variant,
            fusion,
            use_w_qart,
            leaky_slope,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after checkpoint"));
    }
    AttentionModel::new(layers)
}

pub fn save_checkpoint(path: &Path, model: &AttentionModel) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), model)
}

pub fn load_checkpoint(path: &Path) -> Result<AttentionModel> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::LayerDims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn model() -> AttentionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = AttentionModel::init(
            2,
            LayerDims { l: 3, m: 2, md: 4, m_out: 2 },
            Variant::BandTilde,
            Fusion::ElementwiseProduct,
            0.3,
            &mut rng,
        )
        .unwrap();
        m.layers[1].use_w_qart = false;
        m.layers[1].theta_qart = -0.25;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        assert_eq!(read_checkpoint(Cursor::new(buf)).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model()).unwrap();
        assert_eq!(&buf[0..4], b"BATT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        let dims: Vec<u32> = buf[12..28]
            .chunks(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(dims, vec![3, 2, 4, 2]);
        // per layer: 7 u32 + slope + 2*(2*4) + 2*(3*3) + 2 thetas + 2*2
        let per_layer = 7 * 4 + 8 * (1 + 16 + 18 + 2 + 4);
        assert_eq!(buf.len(), 12 + 2 * per_layer);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model()).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint(Cursor::new(bad_magic)).is_err());
        let mut bad_version = buf.clone();
        bad_version[4] = 9;
        assert!(read_checkpoint(Cursor::new(bad_version)).is_err());
        assert!(read_checkpoint(Cursor::new(buf[..buf.len() - 3].to_vec())).is_err());
        let mut long = buf;
        long.push(0);
        assert!(read_checkpoint(Cursor::new(long)).is_err());
    }
}
