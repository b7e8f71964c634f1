//! Time- and space-correlated Rician MIMO channel with LoS blockage.
//!
//! The whitened NLoS matrix follows a first-order Gauss-Markov recursion
//! `vec(H_w(t)) = rho * vec(H_w(t-1)) + w`, `w ~ CN(0, (1 - rho^2) I)`, so every
//! entry keeps unit stationary power. Spatial correlation uses the Kronecker
//! model with exponential correlation matrices, the LoS part is a ULA
//! steering outer product with a random-walk phase, and the Rician factor
//! drops to zero inside the configured blockage intervals.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::seed::{self, Rng as SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Identity {
    Alice,
    Eve,
}

/// LoS blockage covering the closed slot range `[start, start + len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockageInterval {
    pub start: u64,
    pub len: u64,
}

impl BlockageInterval {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }

    pub fn contains(&self, t: u64) -> bool {
        t >= self.start && t <= self.end()
    }
}

fn default_eve_offset() -> f64 {
    PI / 6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub m_t: usize,
    pub m_r: usize,
    pub rho_t: f64,
    pub r_tx: f64,
    pub r_rx: f64,
    pub noise_var: f64,
    pub k0: f64,
    pub sigma_phi: f64,
    /// (departure, arrival) angles in radians.
    pub los_angles: (f64, f64),
    #[serde(default)]
    pub blockage: Vec<BlockageInterval>,
    /// Angle offset applied to both LoS angles when simulating Eve.
    #[serde(default = "default_eve_offset")]
    pub eve_angle_offset: f64,
    /// Optional (r_tx, r_rx) override for Eve's channel.
    #[serde(default)]
    pub eve_correlation: Option<(f64, f64)>,
}

impl Default for ChannelParams {
    /// Four antennas per side, rho_t = 0.7, K0 = 10 and SNR 5 dB.
    fn default() -> Self {
        Self {
            m_t: 4,
            m_r: 4,
            rho_t: 0.7,
            r_tx: 0.5,
            r_rx: 0.5,
            noise_var: crate::math::snr_db_to_noise_var(5.0),
            k0: 10.0,
            sigma_phi: 0.0,
            los_angles: (PI / 9.0, -PI / 12.0),
            blockage: Vec::new(),
            eve_angle_offset: default_eve_offset(),
            eve_correlation: None,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_t == 0 || self.m_r == 0 {
            return Err(Error::invalid("antenna counts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.rho_t) {
            return Err(Error::invalid(format!("rho_t must lie in [0, 1], got {}", self.rho_t)));
        }
        let (r_tx, r_rx) = self.eve_correlation.unwrap_or((self.r_tx, self.r_rx));
        for r in [self.r_tx, self.r_rx, r_tx, r_rx] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!(
                    "spatial correlation must lie in [0, 1), got {r}"
                )));
            }
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        if !(self.k0 >= 0.0) {
            return Err(Error::invalid("Rician factor must be non-negative"));
        }
        if !(self.sigma_phi >= 0.0) {
            return Err(Error::invalid("phase drift std must be non-negative"));
        }
        if self.blockage.iter().any(|b| b.start < 1) {
            return Err(Error::invalid("blockage intervals must start at t >= 1"));
        }
        Ok(())
    }

    /// Blockage intervals sorted by start with overlapping/adjacent ones merged.
    pub fn normalized_blockage(&self) -> Vec<BlockageInterval> {
        let mut v = self.blockage.clone();
        v.sort_by_key(|b| b.start);
        let mut out: Vec<BlockageInterval> = Vec::with_capacity(v.len());
        for b in v {
            match out.last_mut() {
                Some(last) if b.start <= last.end() + 1 => {
                    let end = last.end().max(b.end());
                    last.len = end - last.start;
                }
                _ => out.push(b),
            }
        }
        out
    }

    pub fn is_blocked(&self, t: u64) -> bool {
        self.blockage.iter().any(|b| b.contains(t))
    }

    /// Piecewise Rician factor: `k0` with LoS available, `0` inside blockage.
    pub fn rician_k(&self, t: u64) -> f64 {
        if self.is_blocked(t) {
            0.0
        } else {
            self.k0
        }
    }

    pub fn angles_for(&self, identity: Identity) -> (f64, f64) {
        match identity {
            Identity::Alice => self.los_angles,
            Identity::Eve => (
                self.los_angles.0 + self.eve_angle_offset,
                self.los_angles.1 + self.eve_angle_offset,
            ),
        }
    }

    pub fn correlation_for(&self, identity: Identity) -> (f64, f64) {
        match identity {
            Identity::Alice => (self.r_tx, self.r_rx),
            Identity::Eve => self.eve_correlation.unwrap_or((self.r_tx, self.r_rx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub t: u64,
    pub h_w: CMatrix,
    pub h_los: CMatrix,
    pub k_now: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiObservation {
    pub t: u64,
    pub h_hat: CMatrix,
}

fn check_dims(state: &ChannelState, params: &ChannelParams) -> Result<()> {
    let want = (params.m_r, params.m_t);
    for m in [&state.h_w, &state.h_los] {
        if m.shape() != want {
            return Err(Error::dims(
                format!("{}x{}", want.0, want.1),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    Ok(())
}

/// Half-wavelength ULA steering vector.
pub fn steering_vector(n: usize, theta: f64) -> Vec<C64> {
    (0..n)
        .map(|k| C64::from_polar(1.0, PI * k as f64 * theta.sin()))
        .collect()
}

/// One Gauss-Markov step of the whitened NLoS state. Advances `t` by one.
pub fn step_whitened<R: Rng + ?Sized>(
    state: &ChannelState,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<ChannelState> {
    check_dims(state, params)?;
    let rho = params.rho_t;
    let innovation_var = 1.0 - rho * rho;
    let mut next = state.clone();
    next.t = state.t + 1;
    if innovation_var > 0.0 {
        let w = linalg::complex_normal_matrix(params.m_r, params.m_t, innovation_var, rng);
        next.h_w = state.h_w.map(|c| c * rho) + w;
    }
    next.k_now = params.rician_k(next.t);
    Ok(next)
}

/// `R_r^{1/2} H_w R_t^{1/2}`.
pub fn apply_spatial_correlation(
    h_w: &CMatrix,
    r_rx_sqrt: &CMatrix,
    r_tx_sqrt: &CMatrix,
) -> Result<CMatrix> {
    if r_rx_sqrt.ncols() != h_w.nrows() || r_tx_sqrt.nrows() != h_w.ncols() {
        return Err(Error::dims(
            format!("{}x{} and {}x{} factors", h_w.nrows(), h_w.nrows(), h_w.ncols(), h_w.ncols()),
            format!(
                "{}x{} and {}x{}",
                r_rx_sqrt.nrows(),
                r_rx_sqrt.ncols(),
                r_tx_sqrt.nrows(),
                r_tx_sqrt.ncols()
            ),
        ));
    }
    Ok(r_rx_sqrt * h_w * r_tx_sqrt)
}

/// Multiply the LoS matrix by `e^{j phi}`, `phi ~ N(0, sigma_phi^2)`.
pub fn step_los<R: Rng + ?Sized>(state: &ChannelState, params: &ChannelParams, rng: &mut R) -> ChannelState {
    let mut next = state.clone();
    if params.sigma_phi > 0.0 {
        let phi = Normal::new(0.0, params.sigma_phi)
            .expect("validated sigma_phi")
            .sample(rng);
        let rot = C64::from_polar(1.0, phi);
        next.h_los = state.h_los.map(|c| c * rot);
    }
    next
}

/// Rician mixture at slot `t` given the (already spatially correlated) NLoS part.
pub fn compose_rician(state: &ChannelState, t: u64, params: &ChannelParams, nlos: &CMatrix) -> CMatrix {
    let k = params.rician_k(t);
    mix(k, &state.h_los, nlos)
}

fn mix(k: f64, h_los: &CMatrix, nlos: &CMatrix) -> CMatrix {
    if k == 0.0 {
        return nlos.clone();
    }
    if k.is_infinite() {
        return h_los.clone();
    }
    let a = (k / (k + 1.0)).sqrt();
    let b = (1.0 / (k + 1.0)).sqrt();
    h_los.map(|c| c * a) + nlos.map(|c| c * b)
}

/// Add iid `CN(0, noise_var)` estimation noise.
pub fn observe<R: Rng + ?Sized>(h: &CMatrix, t: u64, noise_var: f64, rng: &mut R) -> Result<CsiObservation> {
    if !(noise_var >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be non-negative, got {noise_var}")));
    }
    let h_hat = if noise_var == 0.0 {
        h.clone()
    } else {
        h + linalg::complex_normal_matrix(h.nrows(), h.ncols(), noise_var, rng)
    };
    Ok(CsiObservation { t, h_hat })
}

/// Initial state at `t = 0`: stationary whitened draw and a steering-product LoS
/// matrix with `||H_los||_F^2 = m_t * m_r`.
pub fn init_channel(params: &ChannelParams, identity: Identity, seed: u64) -> Result<ChannelState> {
    params.validate()?;
    let mut rng = seed::rng(seed);
    Ok(init_with_rng(params, identity, &mut rng))
}

fn init_with_rng<R: Rng + ?Sized>(params: &ChannelParams, identity: Identity, rng: &mut R) -> ChannelState {
    let h_w = linalg::complex_normal_matrix(params.m_r, params.m_t, 1.0, rng);
    ChannelState {
        t: 0,
        h_w,
        h_los: los_matrix(params, identity),
        k_now: params.rician_k(0),
    }
}

pub fn los_matrix(params: &ChannelParams, identity: Identity) -> CMatrix {
    let (dep, arr) = params.angles_for(identity);
    let a_r = steering_vector(params.m_r, arr);
    let a_t = steering_vector(params.m_t, dep);
    // Every entry has unit modulus, so the Frobenius norm is already sqrt(m_t m_r).
    CMatrix::from_fn(params.m_r, params.m_t, |i, j| a_r[i] * a_t[j].conj())
}

/// A running channel for one transmitter: owns its state, correlation factors
/// and random stream.
#[derive(Debug, Clone)]
pub struct ChannelSim {
    params: ChannelParams,
    identity: Identity,
    sqrt_rx: CMatrix,
    sqrt_tx: CMatrix,
    state: ChannelState,
    rng: SimRng,
    force_nlos: bool,
}

impl ChannelSim {
    pub fn new(params: ChannelParams, identity: Identity, seed: u64) -> Result<Self> {
        params.validate()?;
        let (r_tx, r_rx) = params.correlation_for(identity);
        let sqrt_rx = linalg::hermitian_sqrt(&linalg::exp_correlation_matrix(params.m_r, r_rx)?)?;
        let sqrt_tx = linalg::hermitian_sqrt(&linalg::exp_correlation_matrix(params.m_t, r_tx)?)?;
        let mut rng = seed::rng(seed);
        let state = init_with_rng(&params, identity, &mut rng);
        Ok(Self {
            params,
            identity,
            sqrt_rx,
            sqrt_tx,
            state,
            rng,
            force_nlos: false,
        })
    }

    /// Treat every slot as blocked (used to calibrate the NLoS-only state).
    pub fn with_forced_nlos(mut self) -> Self {
        self.force_nlos = true;
        self
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn identity(&self) -> Identity {
        self.identity
    }

    pub fn state(&self) -> &ChannelState {
        &self.state
    }

    pub fn t(&self) -> u64 {
        self.state.t
    }

    pub fn is_blocked(&self, t: u64) -> bool {
        self.force_nlos || self.params.is_blocked(t)
    }

    /// Advance one slot and return the noiseless channel `H(t)`.
    pub fn step(&mut self) -> CMatrix {
        let next = step_whitened(&self.state, &self.params, &mut self.rng)
            .expect("state dimensions fixed at construction");
        let mut next = step_los(&next, &self.params, &mut self.rng);
        if self.force_nlos {
            next.k_now = 0.0;
        }
        self.state = next;
        let nlos = apply_spatial_correlation(&self.state.h_w, &self.sqrt_rx, &self.sqrt_tx)
            .expect("factor dimensions fixed at construction");
        mix(self.state.k_now, &self.state.h_los, &nlos)
    }

    /// Advance one slot and return Bob's noisy observation.
    pub fn next_observation(&mut self) -> CsiObservation {
        let h = self.step();
        let t = self.state.t;
        observe(&h, t, self.params.noise_var, &mut self.rng).expect("validated noise variance")
    }

    /// Advance one slot and return the channel observed with a caller-chosen noise level.
    pub fn next_observation_with_noise(&mut self, noise_var: f64) -> Result<CsiObservation> {
        let h = self.step();
        let t = self.state.t;
        observe(&h, t, noise_var, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize) -> ChannelParams {
        ChannelParams {
            m_t: m,
            m_r: m,
            ..ChannelParams::default()
        }
    }

    #[test]
    fn full_correlation_freezes_whitened_state() {
        let p = ChannelParams { rho_t: 1.0, ..params(3) };
        let s0 = init_channel(&p, Identity::Alice, 1).unwrap();
        let mut rng = seed::rng(2);
        let s1 = step_whitened(&s0, &p, &mut rng).unwrap();
        assert_eq!(s1.h_w, s0.h_w);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn memoryless_step_is_fresh_draw() {
        let p = ChannelParams { rho_t: 0.0, ..params(2) };
        let s0 = init_channel(&p, Identity::Alice, 1).unwrap();
        let mut a = seed::rng(9);
        let mut b = seed::rng(9);
        let s1 = step_whitened(&s0, &p, &mut a).unwrap();
        let fresh = linalg::complex_normal_matrix(2, 2, 1.0, &mut b);
        assert_eq!(s1.h_w, fresh);
    }

    #[test]
    fn lag_one_autocorrelation_matches_rho() {
        let p = ChannelParams { rho_t: 0.7, ..params(1) };
        let mut s = init_channel(&p, Identity::Alice, 4).unwrap();
        let mut rng = seed::rng(5);
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            s = step_whitened(&s, &p, &mut rng).unwrap();
            xs.push(s.h_w[(0, 0)]);
        }
        let num: f64 = xs.windows(2).map(|w| (w[1] * w[0].conj()).re).sum();
        let den: f64 = xs.iter().map(|c| c.norm_sqr()).sum();
        let rho_hat = num / den;
        assert!((rho_hat - 0.7).abs() < 0.02, "rho_hat = {rho_hat}");
        let var = den / n as f64;
        assert!((var - 1.0).abs() < 0.02, "stationary variance {var}");
    }

    #[test]
    fn identity_factors_leave_matrix_unchanged() {
        let mut rng = seed::rng(1);
        let h = linalg::complex_normal_matrix(3, 2, 1.0, &mut rng);
        let out = apply_spatial_correlation(&h, &CMatrix::identity(3, 3), &CMatrix::identity(2, 2)).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn single_entry_maps_to_outer_product_of_root_columns() {
        let srx = linalg::hermitian_sqrt(&linalg::exp_correlation_matrix(3, 0.4).unwrap()).unwrap();
        let stx = linalg::hermitian_sqrt(&linalg::exp_correlation_matrix(2, 0.6).unwrap()).unwrap();
        let mut h = CMatrix::zeros(3, 2);
        h[(1, 0)] = C64::new(1.0, 0.0);
        let out = apply_spatial_correlation(&h, &srx, &stx).unwrap();
        let expected = srx.column(1) * stx.row(0);
        assert!((out - expected).norm() < 1e-14);
    }

    #[test]
    fn spatial_correlation_rejects_bad_factor() {
        let h = CMatrix::zeros(3, 2);
        assert!(apply_spatial_correlation(&h, &CMatrix::identity(2, 2), &CMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn zero_drift_keeps_los() {
        let p = params(4);
        let s = init_channel(&p, Identity::Alice, 1).unwrap();
        let mut rng = seed::rng(3);
        assert_eq!(step_los(&s, &p, &mut rng).h_los, s.h_los);
    }

    #[test]
    fn drift_preserves_frobenius_norm() {
        let p = ChannelParams { sigma_phi: 0.3, ..params(4) };
        let mut s = init_channel(&p, Identity::Alice, 1).unwrap();
        let mut rng = seed::rng(3);
        for _ in 0..100 {
            s = step_los(&s, &p, &mut rng);
            assert!((linalg::frobenius_norm_sq(&s.h_los) - 16.0).abs() < 1e-10);
        }
    }

    #[test]
    fn accumulated_phase_variance() {
        let p = ChannelParams { sigma_phi: 0.1, ..params(1) };
        let steps = 10_000;
        let runs = 400;
        let mut sum_sq = 0.0;
        for r in 0..runs {
            let mut s = init_channel(&p, Identity::Alice, r).unwrap();
            let mut rng = seed::rng(1000 + r);
            let mut unwrapped = 0.0f64;
            let mut prev = s.h_los[(0, 0)].arg();
            for _ in 0..steps {
                s = step_los(&s, &p, &mut rng);
                let cur = s.h_los[(0, 0)].arg();
                let mut d = cur - prev;
                if d > PI {
                    d -= 2.0 * PI;
                } else if d < -PI {
                    d += 2.0 * PI;
                }
                unwrapped += d;
                prev = cur;
            }
            sum_sq += unwrapped * unwrapped;
        }
        let var = sum_sq / runs as f64;
        let want = steps as f64 * 0.01;
        // 400 chi-square draws: relative sd ~ 7%, so allow 3 sd.
        assert!((var / want - 1.0).abs() < 0.21, "phase variance {var} vs {want}");
    }

    #[test]
    fn accumulated_phase_variance_from_increment_sum() {
        // Same contract on the summed increments; the relative spread of a
        // variance estimate from 10^4 increments is 1.4%, well inside 5%.
        let p = ChannelParams { sigma_phi: 0.1, ..params(1) };
        let mut s = init_channel(&p, Identity::Alice, 0).unwrap();
        let mut rng = seed::rng(77);
        let mut prev = s.h_los[(0, 0)];
        let mut sq = 0.0;
        for _ in 0..10_000 {
            s = step_los(&s, &p, &mut rng);
            let d = (s.h_los[(0, 0)] * prev.conj()).arg();
            sq += d * d;
            prev = s.h_los[(0, 0)];
        }
        assert!((sq / (10_000.0 * 0.01) - 1.0).abs() < 0.05);
    }

    #[test]
    fn blocked_slot_has_no_los() {
        let p = ChannelParams {
            blockage: vec![BlockageInterval { start: 5, len: 3 }],
            ..params(2)
        };
        let s = init_channel(&p, Identity::Alice, 1).unwrap();
        let nlos = linalg::complex_normal_matrix(2, 2, 1.0, &mut seed::rng(1));
        for t in 5..=8 {
            assert_eq!(compose_rician(&s, t, &p, &nlos), nlos);
        }
        assert_ne!(compose_rician(&s, 9, &p, &nlos), nlos);
        assert_ne!(compose_rician(&s, 4, &p, &nlos), nlos);
    }

    #[test]
    fn los_power_fraction() {
        let p = params(4);
        let s = init_channel(&p, Identity::Alice, 1).unwrap();
        let zero = CMatrix::zeros(4, 4);
        let los_only = compose_rician(&s, 1, &p, &zero);
        let frac = linalg::frobenius_norm_sq(&los_only) / 16.0;
        assert!((frac - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn large_k_limit_is_los() {
        let p = ChannelParams { k0: 1e9, ..params(4) };
        let s = init_channel(&p, Identity::Alice, 1).unwrap();
        let nlos = linalg::complex_normal_matrix(4, 4, 1.0, &mut seed::rng(1));
        let h = compose_rician(&s, 1, &p, &nlos);
        let rel = (h - &s.h_los).norm() / s.h_los.norm();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn noiseless_observation_is_exact() {
        let h = linalg::complex_normal_matrix(2, 2, 1.0, &mut seed::rng(1));
        let obs = observe(&h, 3, 0.0, &mut seed::rng(2)).unwrap();
        assert_eq!(obs.h_hat, h);
        assert_eq!(obs.t, 3);
        assert!(observe(&h, 3, -1.0, &mut seed::rng(2)).is_err());
    }

    #[test]
    fn observation_noise_variance() {
        let h = CMatrix::zeros(4, 4);
        let mut rng = seed::rng(11);
        let mut acc = 0.0;
        let n = 100_000 / 16 + 1;
        for _ in 0..n {
            let obs = observe(&h, 0, 1.0, &mut rng).unwrap();
            acc += linalg::frobenius_norm_sq(&obs.h_hat);
        }
        let var = acc / (n * 16) as f64;
        assert!((var - 1.0).abs() < 0.02, "noise variance {var}");
    }

    #[test]
    fn single_antenna_los_is_unit() {
        let p = params(1);
        let s = init_channel(&p, Identity::Alice, 0).unwrap();
        assert!((s.h_los[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn los_normalization() {
        let p = params(4);
        for id in [Identity::Alice, Identity::Eve] {
            let s = init_channel(&p, id, 0).unwrap();
            assert!((linalg::frobenius_norm_sq(&s.h_los) - 16.0).abs() < 1e-10);
        }
        let a = init_channel(&p, Identity::Alice, 0).unwrap();
        let e = init_channel(&p, Identity::Eve, 0).unwrap();
        assert_ne!(a.h_los, e.h_los);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = ChannelParams { sigma_phi: 0.05, ..params(4) };
        let a = init_channel(&p, Identity::Alice, 42).unwrap();
        let b = init_channel(&p, Identity::Alice, 42).unwrap();
        assert_eq!(a, b);
        let mut s1 = ChannelSim::new(p.clone(), Identity::Alice, 7).unwrap();
        let mut s2 = ChannelSim::new(p, Identity::Alice, 7).unwrap();
        for _ in 0..20 {
            assert_eq!(s1.next_observation(), s2.next_observation());
        }
    }

    #[test]
    fn blockage_normalization_merges_overlaps() {
        let p = ChannelParams {
            blockage: vec![
                BlockageInterval { start: 20, len: 5 },
                BlockageInterval { start: 3, len: 4 },
                BlockageInterval { start: 6, len: 10 },
            ],
            ..params(1)
        };
        let n = p.normalized_blockage();
        assert_eq!(
            n,
            vec![
                BlockageInterval { start: 3, len: 13 },
                BlockageInterval { start: 20, len: 5 }
            ]
        );
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ChannelParams { r_tx: 1.0, ..params(2) }.validate().is_err());
        assert!(ChannelParams { noise_var: -1.0, ..params(2) }.validate().is_err());
        assert!(ChannelParams {
            blockage: vec![BlockageInterval { start: 0, len: 2 }],
            ..params(2)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn power_is_invariant_to_k() {
        // E||H||_F^2 = m_t m_r regardless of K when both parts have unit power.
        for k0 in [0.0, 1.0, 10.0] {
            let p = ChannelParams { k0, sigma_phi: 0.2, ..params(4) };
            let mut sim = ChannelSim::new(p, Identity::Alice, 99).unwrap();
            let n = 100_000 / 16;
            let mut acc = 0.0;
            for _ in 0..n {
                acc += linalg::frobenius_norm_sq(&sim.step());
            }
            let mean = acc / (n as f64 * 16.0);
            assert!((mean - 1.0).abs() < 0.03, "k0={k0}: per-entry power {mean}");
        }
    }
}
