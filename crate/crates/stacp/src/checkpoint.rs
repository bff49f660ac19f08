//! Binary factor-model checkpoints.
//!
//! Layout, all little-endian: 8-byte magic, then `u64` K, m, n, seed and
//! epoch count, then K `f64` prior shapes and K prior scales, then U as a
//! K×m row-major matrix and L as K×n.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use stacp_core::FactorModel;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"STACPFM1";

pub fn encode(model: &FactorModel, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [model.k, model.n_users, model.n_pois] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&model.seed.to_le_bytes())?;
    w.write_all(&(model.epochs as u64).to_le_bytes())?;
    for v in model.sigma.iter().chain(&model.rho) {
        w.write_all(&v.to_le_bytes())?;
    }
    // stored entity-major in memory, factor-major on disk
    for (data, rows) in [(&model.user_factors, model.n_users), (&model.poi_factors, model.n_pois)] {
        for f in 0..model.k {
            for r in 0..rows {
                w.write_all(&data[r * model.k + f].to_le_bytes())?;
            }
        }
    }
    w.flush()
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    read_u64(r).map(f64::from_bits)
}

pub fn decode(mut r: impl Read) -> Result<FactorModel> {
    let bad = |what: &str| Error::Data(format!("checkpoint: {what}"));
    let io = |e: std::io::Error| bad(&format!("truncated ({e})"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let k = read_u64(&mut r).map_err(io)? as usize;
    let n_users = read_u64(&mut r).map_err(io)? as usize;
    let n_pois = read_u64(&mut r).map_err(io)? as usize;
    let seed = read_u64(&mut r).map_err(io)?;
    let epochs = read_u64(&mut r).map_err(io)? as usize;
    if k == 0 || k > 1 << 16 {
        return Err(bad("implausible latent dimension"));
    }
    let mut vec = |len: usize| -> Result<Vec<f64>> { (0..len).map(|_| read_f64(&mut r).map_err(io)).collect() };
    let sigma = vec(k)?;
    let rho = vec(k)?;
    let user_t = vec(k.checked_mul(n_users).ok_or_else(|| bad("size overflow"))?)?;
    let poi_t = vec(k.checked_mul(n_pois).ok_or_else(|| bad("size overflow"))?)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io)? != 0 {
        return Err(bad("trailing bytes"));
    }
    let untranspose = |src: &[f64], rows: usize| {
        let mut out = vec![0.0; src.len()];
        for f in 0..k {
            for i in 0..rows {
                out[i * k + f] = src[f * rows + i];
            }
        }
        out
    };
    Ok(FactorModel {
        k,
        n_users,
        n_pois,
        user_factors: untranspose(&user_t, n_users),
        poi_factors: untranspose(&poi_t, n_pois),
        sigma,
        rho,
        seed,
        epochs,
    })
}

pub fn save(model: &FactorModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<FactorModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use stacp_core::TrainConfig;

    #[test]
    fn header_layout() {
        let cfg = TrainConfig { k: 2, seed: 9, ..TrainConfig::default() };
        let m = FactorModel::init(3, 4, &cfg);
        let mut buf = Vec::new();
        encode(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 5 * 8 + 2 * 2 * 8 + 2 * (3 + 4) * 8);
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
        // first U entry on disk is factor 0 of user 0, second is factor 0 of user 1
        let first = 8 + 5 * 8 + 4 * 8;
        assert_eq!(f64::from_le_bytes(buf[first..first + 8].try_into().unwrap()), m.user(0)[0]);
        assert_eq!(f64::from_le_bytes(buf[first + 8..first + 16].try_into().unwrap()), m.user(1)[0]);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let cfg = TrainConfig { k: 5, seed: 3, ..TrainConfig::default() };
        let mut m = FactorModel::init(7, 11, &cfg);
        m.user_factors[3] = f64::MIN_POSITIVE;
        m.epochs = 42;
        let mut buf = Vec::new();
        encode(&m, &mut buf).unwrap();
        let back = decode(buf.as_slice()).unwrap();
        assert_eq!(back.user_factors.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), m.user_factors.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = FactorModel::init(2, 2, &TrainConfig { k: 1, ..TrainConfig::default() });
        let mut buf = Vec::new();
        encode(&m, &mut buf).unwrap();
        assert!(decode(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(decode(extra.as_slice()).is_err());
        let mut wrong = buf;
        wrong[0] = b'X';
        assert!(decode(wrong.as_slice()).is_err());
    }
}
