//! Seeded scalar Wiener paths stored at a fine resolution so coarse and
//! reference runs of one Monte Carlo sample consume the same randomness.
//!
//! Increments are drawn with a pinned pipeline: a ChaCha8 stream keyed by a
//! SplitMix64 expansion of the 64-bit seed, mapped to uniforms in ( 0, 1 )
//! and through the AS241 inverse normal CDF. Each increment is rounded to
//! the nearest multiple of 2^-45; the quantum is ten orders of magnitude
//! below the increment scale and makes every partial sum of increments
//! exactly representable, so telescoped coarse increments reproduce W(T)
//! bit for bit at any dyadic coarsening.

use crate::error::{Error, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

/// Pinned identifier of the draw pipeline; changing any stage must change
/// this string.
pub const GENERATOR_ID: &str = "chacha8-splitmix64/as241/q2p45/v1";

const QUANTUM: f64 = 1.0 / (1u64 << 45) as f64;

#[derive(Debug, Clone)]
pub struct WienerPath {
    seed: u64,
    horizon: f64,
    k0: f64,
    increments: Vec<f64>,
    generator_id: String,
}

impl WienerPath {
    /// Draws the path at resolution `k0` over `[0, horizon]`; `horizon / k0`
    /// must be a positive integer (within 1e-12 relative).
    pub fn generate(seed: u64, horizon: f64, k0: f64) -> Result<Self> {
        if !(horizon > 0.0) || !(k0 > 0.0) {
            return Err(Error::invalid("horizon and resolution must be positive"));
        }
        let steps = (horizon / k0).round();
        if steps < 1.0 || (steps * k0 - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon {horizon} is not an integer multiple of k0 {k0}"
            )));
        }
        let n = steps as usize;
        let mut rng = ChaCha8Rng::from_seed(expand_seed(seed));
        let scale = k0.sqrt();
        let increments = (0..n)
            .map(|_| {
                let u = uniform_open(rng.next_u64());
                quantize(scale * inverse_normal_cdf(u))
            })
            .collect();
        Ok(WienerPath {
            seed,
            horizon,
            k0,
            increments,
            generator_id: GENERATOR_ID.to_string(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn resolution(&self) -> f64 {
        self.k0
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// W(t_b) - W(t_a): the left-to-right sum of the fine increments on
    /// `[t_a, t_b)`. Both times must sit on the k0 grid; misaligned queries
    /// are rejected so coarse and reference runs cannot silently decouple.
    pub fn increment(&self, t_a: f64, t_b: f64) -> Result<f64> {
        if !(t_a < t_b) {
            return Err(Error::invalid(format!(
                "increment needs t_a < t_b, got {t_a} and {t_b}"
            )));
        }
        let ia = self.grid_index(t_a)?;
        let ib = self.grid_index(t_b)?;
        if ib > self.increments.len() {
            return Err(Error::invalid(format!(
                "time {t_b} beyond the path horizon {}",
                self.horizon
            )));
        }
        Ok(self.increments[ia..ib].iter().sum())
    }

    /// W at the horizon.
    pub fn total(&self) -> f64 {
        self.increments.iter().sum()
    }

    fn grid_index(&self, t: f64) -> Result<usize> {
        let idx = (t / self.k0).round();
        if idx < 0.0 || (idx * self.k0 - t).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "time {t} is not aligned to the path resolution {}",
                self.k0
            )));
        }
        Ok(idx as usize)
    }

    /// Binary dump: header (magic, version, seed, horizon, k0, generator id)
    /// then the increments as little-endian 64-bit floats.
    pub fn dump(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"SKSW")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&self.k0.to_le_bytes())?;
        let id = self.generator_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(self.increments.len() as u64).to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SKSW" {
            return Err(Error::invalid("not a wiener path dump"));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::invalid(format!("unsupported dump version {version}")));
        }
        let seed = read_u64(r)?;
        let horizon = read_f64(r)?;
        let k0 = read_f64(r)?;
        let id_len = read_u32(r)? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let generator_id = String::from_utf8(id)
            .map_err(|_| Error::invalid("generator id is not utf-8"))?;
        let n = read_u64(r)? as usize;
        let mut increments = Vec::with_capacity(n);
        for _ in 0..n {
            increments.push(read_f64(r)?);
        }
        Ok(WienerPath {
            seed,
            horizon,
            k0,
            increments,
            generator_id,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// SplitMix64 expansion of a 64-bit seed into the 32-byte ChaCha key.
fn expand_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut out = [0u8; 32];
    for chunk in out.chunks_exact_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    out
}

/// Maps a u64 to the open interval (0, 1) with 53-bit resolution.
#[inline]
fn uniform_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn quantize(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

/// AS241 (Wichura) rational approximation of the inverse standard normal
/// CDF, accurate to about 1e-15 of a standard deviation.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 8] = [
        3.3871328727963666080e0,
        1.3314166789178437745e2,
        1.9715909503065514427e3,
        1.3731693765509461125e4,
        4.5921953931549871457e4,
        6.7265770927008700853e4,
        3.3430575583588128105e4,
        2.5090809287301226727e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.2313330701600911252e1,
        6.8718700749205790830e2,
        5.3941960214247511077e3,
        2.1213794301586595867e4,
        3.9307895800092710610e4,
        2.8729085735721942674e4,
        5.2264952788528545610e3,
    ];
    const C: [f64; 8] = [
        1.42343711074968357734e0,
        4.63033784615654529590e0,
        5.76949722146069140550e0,
        3.64784832476320460504e0,
        1.27045825245236838258e0,
        2.41780725177450611770e-1,
        2.27238449892691845833e-2,
        7.74545014278341407640e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.05319162663775882187e0,
        1.67638483018380384940e0,
        6.89767334985100004550e-1,
        1.48103976427480074590e-1,
        1.51986665636164571966e-2,
        5.47593808499534494600e-4,
        1.05075007164441684324e-9,
    ];
    const E: [f64; 8] = [
        6.65790464350110377720e0,
        5.46378491116411436990e0,
        1.78482653991729133580e0,
        2.96560571828504891230e-1,
        2.65321895265761230930e-2,
        1.24266094738807843860e-3,
        2.71155556874348757815e-5,
        2.01033439929228813265e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.99832206555887937690e-1,
        1.36929880922735805310e-1,
        1.48753612908506148525e-2,
        7.86869131145613259100e-4,
        1.84631831751005468180e-5,
        1.42151175831644588870e-7,
        2.04426310338993978564e-15,
    ];
    let poly = |coeffs: &[f64; 8], r: f64| {
        coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * r + c)
    };
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r0 = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r0.ln()).sqrt();
    let val = if r <= 5.0 {
        let s = r - 1.6;
        poly(&C, s) / poly(&D, s)
    } else {
        let s = r - 5.0;
        poly(&E, s) / poly(&F, s)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
