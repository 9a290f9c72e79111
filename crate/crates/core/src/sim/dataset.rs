use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::sim::car_inverse_diagonal;
use crate::spatial::{build_lattice_adjacency, car_precision, sample_car, BiopsyGraph};

/// Effect-size class of a true effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
    Null,
}

impl SizeClass {
    pub const SIZES: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
            SizeClass::Null => "null",
        }
    }
}

/// How the global spatial and pure-error variances are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Fixed `τ²` and `ν²`.
    Fixed { tau2: f64, nu2: f64 },
    /// Choose `var(Y)` so both SNRs land in their windows, then split the
    /// remaining variance between `δ` and `ε`.
    Calibrated {
        snr_fixed: (f64, f64),
        snr_rand: (f64, f64),
        /// Fraction of the remaining variance given to `δ`.
        spatial_share: f64,
        /// Redraw the true effects until both windows can be met.
        condition_truth: bool,
        max_attempts: usize,
    },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Calibrated {
            snr_fixed: (0.37, 0.42),
            snr_rand: (0.38, 0.39),
            spatial_share: 0.5,
            condition_truth: true,
            max_attempts: 100_000,
        }
    }
}

/// One simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSetting {
    pub n_biopsies: usize,
    pub p: usize,
    pub lattice: (usize, usize),
    /// True fixed effects per size class (small, medium, large).
    pub fixed_per_size: [usize; 3],
    pub random_per_size: [usize; 3],
    pub fixed_ranges: [(f64, f64); 3],
    pub random_ranges: [(f64, f64); 3],
    pub phi: f64,
    pub rho: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SimSetting {
    fn default() -> Self {
        Self::paper(50).expect("50 is a paper setting")
    }
}

impl SimSetting {
    /// The three published designs: `p` = 50, 75 or 90 with `N` = 200 and
    /// 3, 6 or 9 true effects of each kind split evenly across sizes.
    pub fn paper(p: usize) -> Result<Self> {
        let per = match p {
            50 => 1,
            75 => 2,
            90 => 3,
            _ => return Err(Error::Validation(format!("no published setting with p = {p}"))),
        };
        Ok(Self {
            n_biopsies: 200,
            p,
            lattice: (5, 5),
            fixed_per_size: [per; 3],
            random_per_size: [per; 3],
            fixed_ranges: [(0.13, 0.23), (0.23, 0.33), (0.33, 0.43)],
            random_ranges: [(0.1, 0.2), (0.2, 0.3), (0.3, 0.4)],
            phi: 0.3,
            rho: 0.3,
            noise: NoiseSpec::default(),
            seed: 0,
        })
    }

    pub fn relative_dimensionality(&self) -> f64 {
        2.0 * self.p as f64 / self.n_biopsies as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_biopsies == 0 || self.p == 0 {
            return Err(Error::Validation("n_biopsies and p must be positive".into()));
        }
        if self.lattice.0 * self.lattice.1 < 2 {
            return Err(Error::Validation("lattice needs at least two sub-regions".into()));
        }
        for (name, counts) in [("fixed", self.fixed_per_size), ("random", self.random_per_size)] {
            if counts.iter().sum::<usize>() > self.p {
                return Err(Error::Validation(format!("more true {name} effects than covariates")));
            }
        }
        for (name, r) in [("fixed_ranges", self.fixed_ranges), ("random_ranges", self.random_ranges)] {
            let ordered = r.iter().all(|&(lo, hi)| 0.0 < lo && lo < hi) && r[0].1 <= r[1].0 && r[1].1 <= r[2].0;
            if !ordered {
                return Err(Error::Validation(format!("{name} must be positive, non-empty and ordered")));
            }
        }
        if !(self.phi > -1.0 && self.phi < 1.0 && self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Validation("phi and rho must lie in (-1, 1)".into()));
        }
        match self.noise {
            NoiseSpec::Fixed { tau2, nu2 } => {
                if !(tau2 >= 0.0 && nu2 > 0.0) {
                    return Err(Error::Validation("noise: tau2 must be >= 0 and nu2 > 0".into()));
                }
            }
            NoiseSpec::Calibrated { snr_fixed, snr_rand, spatial_share, max_attempts, .. } => {
                if !(0.0 < snr_fixed.0 && snr_fixed.0 <= snr_fixed.1 && 0.0 < snr_rand.0 && snr_rand.0 <= snr_rand.1)
                    || snr_fixed.1 + snr_rand.1 >= 1.0
                {
                    return Err(Error::Validation("noise: SNR windows must be ordered and sum below 1".into()));
                }
                if !(0.0..=1.0).contains(&spatial_share) || max_attempts == 0 {
                    return Err(Error::Validation("noise: spatial_share in [0, 1], max_attempts > 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// True effects and their size labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha: Vec<f64>,
    pub alpha_size: Vec<SizeClass>,
    pub psi2: Vec<f64>,
    pub psi2_size: Vec<SizeClass>,
}

impl GroundTruth {
    pub fn fixed_indices(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&j| self.alpha_size[j] != SizeClass::Null).collect()
    }

    pub fn random_indices(&self) -> Vec<usize> {
        (0..self.psi2.len()).filter(|&j| self.psi2_size[j] != SizeClass::Null).collect()
    }
}

/// A simulated data set with its truth and the variances that produced it.
#[derive(Debug, Clone)]
pub struct SimReplicate {
    pub biopsies: Vec<BiopsyGraph>,
    pub truth: GroundTruth,
    pub tau2: f64,
    pub nu2: f64,
    pub rho: f64,
    pub phi: f64,
    /// Model-implied marginal variance of a sub-region outcome, averaged
    /// over sub-regions.
    pub var_y: f64,
    pub snr_fixed: f64,
    pub snr_rand: f64,
    /// Truth draws needed to meet the SNR windows.
    pub attempts: usize,
}

/// Assigns sizes to a random subset of `p` indices and draws magnitudes.
fn draw_effects<R: Rng + ?Sized>(
    p: usize,
    per_size: [usize; 3],
    ranges: [(f64, f64); 3],
    signed: bool,
    rng: &mut R,
) -> (Vec<f64>, Vec<SizeClass>) {
    let total: usize = per_size.iter().sum();
    let chosen = sample(rng, p, total).into_vec();
    let mut values = vec![0.0; p];
    let mut sizes = vec![SizeClass::Null; p];
    let mut it = chosen.into_iter();
    for (class, (&count, &(lo, hi))) in SizeClass::SIZES.iter().zip(per_size.iter().zip(&ranges)) {
        for _ in 0..count {
            let j = it.next().expect("enough chosen indices");
            let mut v = rng.random_range(lo..hi);
            if signed && rng.random::<bool>() {
                v = -v;
            }
            values[j] = v;
            sizes[j] = *class;
        }
    }
    (values, sizes)
}

/// Draws a data set under the model, with covariates i.i.d. standard normal.
pub fn simulate_dataset(setting: &SimSetting) -> Result<SimReplicate> {
    setting.validate()?;
    let mut rng = seeds::stream(setting.seed, "simulate");
    let adj = Arc::new(build_lattice_adjacency(setting.lattice.0, setting.lattice.1)?);
    let mean_diag = |c: f64| -> Result<f64> {
        let d = car_inverse_diagonal(&adj, c)?;
        Ok(d.iter().sum::<f64>() / d.len() as f64)
    };
    let eta_diag = mean_diag(setting.phi)?;
    let delta_diag = mean_diag(setting.rho)?;

    let mut attempts = 0;
    let (truth, tau2, nu2, var_y, fixed_part, rand_part) = loop {
        attempts += 1;
        let (alpha, alpha_size) =
            draw_effects(setting.p, setting.fixed_per_size, setting.fixed_ranges, true, &mut rng);
        let (psi2, psi2_size) =
            draw_effects(setting.p, setting.random_per_size, setting.random_ranges, false, &mut rng);
        let truth = GroundTruth { alpha, alpha_size, psi2, psi2_size };
        // covariates are standard normal: Σ_x = I, μ = 0
        let a: f64 = truth.alpha.iter().map(|v| v * v).sum();
        let rr: f64 = truth.psi2.iter().sum::<f64>() * eta_diag;
        match setting.noise {
            NoiseSpec::Fixed { tau2, nu2 } => {
                break (truth, tau2, nu2, a + rr + tau2 * delta_diag + nu2, a, rr);
            }
            NoiseSpec::Calibrated { snr_fixed, snr_rand, spatial_share, condition_truth, max_attempts } => {
                let Some(v) = calibrate_variance(a, rr, snr_fixed, snr_rand) else {
                    if condition_truth && attempts < max_attempts {
                        continue;
                    }
                    if condition_truth {
                        return Err(Error::NonConvergence(format!(
                            "no truth draw met both SNR windows in {attempts} attempts"
                        )));
                    }
                    let v = if rr > 0.0 { rr / (0.5 * (snr_rand.0 + snr_rand.1)) } else { a / snr_fixed.1 };
                    let rest = v - a - rr;
                    if rest <= 0.0 {
                        return Err(Error::Domain("signal variance exceeds the calibrated total".into()));
                    }
                    break (truth, spatial_share * rest / delta_diag, (1.0 - spatial_share) * rest, v, a, rr);
                };
                let rest = v - a - rr;
                break (truth, spatial_share * rest / delta_diag, (1.0 - spatial_share) * rest, v, a, rr);
            }
        }
    };
    if !(nu2 > 0.0) {
        return Err(Error::Domain("calibrated pure-error variance is not positive".into()));
    }

    let eta_prec: Vec<Option<_>> = truth
        .psi2
        .iter()
        .map(|&v| if v > 0.0 { car_precision(adj.clone(), setting.phi, v).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let delta_prec = if tau2 > 0.0 { Some(car_precision(adj.clone(), setting.rho, tau2)?) } else { None };
    let n = adj.n();
    let nu = nu2.sqrt();
    let mut biopsies = Vec::with_capacity(setting.n_biopsies);
    for i in 0..setting.n_biopsies {
        let x: Vec<f64> = (0..setting.p).map(|_| rng.sample(StandardNormal)).collect();
        let fixed: f64 = truth.alpha.iter().zip(&x).map(|(a, x)| a * x).sum();
        let mut y = vec![fixed; n];
        for (k, prec) in eta_prec.iter().enumerate() {
            if let Some(prec) = prec {
                let eta = sample_car(prec, &mut rng);
                for (y, e) in y.iter_mut().zip(eta) {
                    *y += e * x[k];
                }
            }
        }
        if let Some(prec) = &delta_prec {
            for (y, d) in y.iter_mut().zip(sample_car(prec, &mut rng)) {
                *y += d;
            }
        }
        for y in y.iter_mut() {
            *y += nu * rng.sample::<f64, _>(StandardNormal);
        }
        biopsies.push(BiopsyGraph::new(format!("b{:04}", i + 1), adj.clone(), y, x)?);
    }
    Ok(SimReplicate {
        biopsies,
        truth,
        tau2,
        nu2,
        rho: setting.rho,
        phi: setting.phi,
        var_y,
        snr_fixed: fixed_part / var_y,
        snr_rand: rand_part / var_y,
        attempts,
    })
}

/// Total variance `V` with `rr/V` in the random window and `a/V` in the
/// fixed window, or `None` when the two windows cannot both be met. The
/// random SNR is placed as close to the middle of its window as the
/// fixed window allows.
fn calibrate_variance(a: f64, rr: f64, fixed: (f64, f64), rand: (f64, f64)) -> Option<f64> {
    if rr <= 0.0 {
        return (a > 0.0).then(|| a / (0.5 * (fixed.0 + fixed.1)));
    }
    if a <= 0.0 {
        return (fixed.0 <= 0.0).then(|| rr / (0.5 * (rand.0 + rand.1)));
    }
    // s_rand = rr / V and s_fixed = (a / rr) s_rand
    // shrunk by a few ulps so rounding in `a / V` cannot leave the window
    let k = a / rr;
    let lo = rand.0.max(fixed.0 / k) * (1.0 + 1e-12);
    let hi = rand.1.min(fixed.1 / k) * (1.0 - 1e-12);
    if lo > hi {
        return None;
    }
    let s = (0.5 * (rand.0 + rand.1)).clamp(lo, hi);
    Some(rr / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_settings() {
        let s = SimSetting::paper(90).unwrap();
        assert_eq!(s.fixed_per_size, [3, 3, 3]);
        assert!((s.relative_dimensionality() - 0.9).abs() < 1e-12);
        assert!(SimSetting::paper(60).is_err());
        s.validate().unwrap();
    }

    #[test]
    fn calibration_windows() {
        let v = calibrate_variance(0.25, 0.25, (0.37, 0.42), (0.38, 0.39)).unwrap();
        assert!((0.25 / v - 0.385).abs() < 1e-12);
        let v = calibrate_variance(0.27, 0.25, (0.37, 0.42), (0.38, 0.39)).unwrap();
        assert!((0.27 / v) <= 0.42 && (0.25 / v) >= 0.38);
        assert!(calibrate_variance(0.5, 0.25, (0.37, 0.42), (0.38, 0.39)).is_none());
    }

    #[test]
    fn simulated_snrs_in_windows() {
        for p in [50, 75, 90] {
            let mut s = SimSetting::paper(p).unwrap();
            s.n_biopsies = 5;
            for seed in 0..20 {
                s.seed = seed;
                let r = simulate_dataset(&s).unwrap();
                assert!((0.37..=0.42).contains(&r.snr_fixed), "{}", r.snr_fixed);
                assert!((0.38..=0.39).contains(&r.snr_rand), "{}", r.snr_rand);
                assert_eq!(r.truth.fixed_indices().len(), 3 * SimSetting::paper(p).unwrap().fixed_per_size[0]);
                assert!(r.tau2 > 0.0 && r.nu2 > 0.0);
            }
        }
    }

    #[test]
    fn truth_labels_match_ranges() {
        let mut s = SimSetting::paper(75).unwrap();
        s.n_biopsies = 3;
        let r = simulate_dataset(&s).unwrap();
        for j in 0..75 {
            match r.truth.alpha_size[j] {
                SizeClass::Null => assert_eq!(r.truth.alpha[j], 0.0),
                c => {
                    let (lo, hi) = s.fixed_ranges[c as usize];
                    assert!((lo..hi).contains(&r.truth.alpha[j].abs()));
                }
            }
            if r.truth.psi2_size[j] == SizeClass::Null {
                assert_eq!(r.truth.psi2[j], 0.0);
            }
        }
    }

    #[test]
    fn null_variance_decomposition() {
        // no true effects, τ² = ν² = 1: var(Y) = mean diag((D − ρW)⁻¹) + 1
        let s = SimSetting {
            n_biopsies: 4000,
            p: 2,
            fixed_per_size: [0; 3],
            random_per_size: [0; 3],
            noise: NoiseSpec::Fixed { tau2: 1.0, nu2: 1.0 },
            seed: 5,
            ..SimSetting::paper(50).unwrap()
        };
        let r = simulate_dataset(&s).unwrap();
        let ys: Vec<f64> = r.biopsies.iter().flat_map(|b| b.y.iter().copied()).collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        let adj = Arc::new(build_lattice_adjacency(5, 5).unwrap());
        let d = car_inverse_diagonal(&adj, 0.3).unwrap();
        let expect = d.iter().sum::<f64>() / 25.0 + 1.0;
        assert!((v - expect).abs() < 0.03 * expect, "{v} vs {expect}");
        assert!((r.var_y - expect).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let mut s = SimSetting::paper(50).unwrap();
        s.n_biopsies = 4;
        let a = simulate_dataset(&s).unwrap();
        let b = simulate_dataset(&s).unwrap();
        assert_eq!(a.biopsies[3].y, b.biopsies[3].y);
        assert_eq!(a.truth, b.truth);
    }
}
