use std::f64::consts::PI;

use crate::{CMatrix, Error, Result, C64};

/// Per-user pilot matrices `Φ_k ∈ C^{τ × N_u}` whose columns, taken across all
/// users, are orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    pub tau: usize,
    pub k_users: usize,
    pub n_u: usize,
    pub pilots: Vec<CMatrix>,
}

impl PilotBook {
    pub fn user(&self, k: usize) -> Result<&CMatrix> {
        self.pilots.get(k).ok_or_else(|| {
            Error::Domain(format!("user {k} out of range for {} users", self.k_users))
        })
    }

    /// All `K · N_u` pilot columns side by side (`τ × K N_u`).
    pub fn stacked(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.tau, self.k_users * self.n_u);
        for (k, p) in self.pilots.iter().enumerate() {
            out.columns_mut(k * self.n_u, self.n_u).copy_from(p);
        }
        out
    }
}

/// Assign user `k`, antenna `i` column `k·N_u + i` of the unitary `τ`-point DFT.
pub fn make_pilots(k_users: usize, n_u: usize, tau: usize) -> Result<PilotBook> {
    let required = k_users * n_u;
    if k_users == 0 || n_u == 0 {
        return Err(Error::Domain("pilot book needs k_users, n_u >= 1".into()));
    }
    if tau < required {
        return Err(Error::Capacity { tau, required });
    }
    let scale = 1.0 / (tau as f64).sqrt();
    let pilots = (0..k_users)
        .map(|k| {
            CMatrix::from_fn(tau, n_u, |t, i| {
                // reduce t*c mod tau in integers to keep the phase small
                let tc = ((t * (k * n_u + i)) % tau) as f64;
                C64::from_polar(scale, -2.0 * PI * tc / tau as f64)
            })
        })
        .collect();
    Ok(PilotBook {
        tau,
        k_users,
        n_u,
        pilots,
    })
}
