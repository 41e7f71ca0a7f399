use rand_distr::{Distribution, StandardNormal};

use super::{ChannelRealization, PilotBook};
use crate::{rng, CMatrix, Error, RMatrix, Result, C64};

/// Complex `r × c` → real `r × 2c`: real parts in columns `[0, c)`, imaginary
/// parts in `[c, 2c)`.
pub fn pack_real(m: &CMatrix) -> RMatrix {
    let (r, c) = m.shape();
    RMatrix::from_fn(r, 2 * c, |i, j| {
        if j < c {
            m[(i, j)].re
        } else {
            m[(i, j - c)].im
        }
    })
}

pub fn unpack_real(m: &RMatrix) -> Result<CMatrix> {
    let (r, c2) = m.shape();
    if c2 % 2 != 0 {
        return Err(Error::Shape(format!(
            "packed matrix needs an even column count, got {r}x{c2}"
        )));
    }
    let c = c2 / 2;
    Ok(CMatrix::from_fn(r, c, |i, j| C64::new(m[(i, j)], m[(i, j + c)])))
}

/// Despread, real-packed observation of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y_packed: RMatrix,
    /// Noise standard deviation per complex entry.
    pub sigma_n: f64,
    pub truth: ChannelRealization,
    pub user: usize,
    pub seed: u64,
}

/// Despread user `k`'s pilot block: `y_k = (H Φ_kᵀ + n) Φ_k* = H + n Φ_k*`.
///
/// The receiver noise `n` is drawn as a full `N_b × τ` block of `CN(0, σ_n²)`
/// entries and explicitly projected onto the user's pilots. The signal term
/// uses `Φ_kᵀ Φ_k* = I` directly, so a noiseless observation equals `H`
/// bit-for-bit.
pub fn observe(
    real: &ChannelRealization,
    pilots: &PilotBook,
    k: usize,
    sigma_n: f64,
    seed: u64,
) -> Result<Observation> {
    if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
        return Err(Error::Domain(format!(
            "noise std must be finite and >= 0, got {sigma_n}"
        )));
    }
    let phi = pilots.user(k)?;
    let h = &real.h_cascade;
    if phi.ncols() != h.ncols() {
        return Err(Error::Shape(format!(
            "pilot book has N_u = {}, channel has N_u = {}",
            phi.ncols(),
            h.ncols()
        )));
    }
    let n_b = h.nrows();
    let mut rng = rng::stream(seed, "receiver-noise", k as u64);
    let s = sigma_n / std::f64::consts::SQRT_2;
    let noise = CMatrix::from_fn(n_b, pilots.tau, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re * s, im * s)
    });
    let despread = h + noise * phi.map(|z| z.conj());
    Ok(Observation {
        y_packed: pack_real(&despread),
        sigma_n,
        truth: real.clone(),
        user: k,
        seed,
    })
}
