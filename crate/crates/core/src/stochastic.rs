//! Stochastic output models for wind and solar DG, with seeded Monte Carlo
//! sampling. Micro-turbines are dispatchable and sample as a constant.
//!
//! Wind speed follows a Weibull distribution pushed through a piecewise
//! linear power curve; irradiance follows a scaled Beta distribution pushed
//! through a linear PV model. Every site draws from its own RNG stream keyed
//! by `(seed, bus id)`, so a site's samples do not depend on which other
//! sites are being sampled — downstream consumers (storage sizing,
//! probabilistic power flow) rely on this to see identical draws.

use crate::objectives::{DgKind, DgUnit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Weibull};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Piecewise linear wind power curve: zero below cut-in and at/above
/// cut-out, linear ramp from cut-in to rated speed, flat at `s_rated_kw`
/// in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WtCurve {
    pub v_in_ms: f64,
    pub v_r_ms: f64,
    pub v_out_ms: f64,
    pub s_rated_kw: f64,
}

/// Linear PV model, rated at irradiance `r_max_w_m2`. The conversion
/// efficiency `eta` cancels in the capacity-normalized model and is kept
/// only for area-based studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvModel {
    pub eta: f64,
    pub r_max_w_m2: f64,
    pub s_rated_kw: f64,
}

/// Wind power output at wind speed `v_ms`, in kW.
pub fn wt_power(v_ms: f64, curve: &WtCurve) -> f64 {
    if v_ms < curve.v_in_ms || v_ms >= curve.v_out_ms {
        0.0
    } else if v_ms < curve.v_r_ms {
        curve.s_rated_kw * (v_ms - curve.v_in_ms) / (curve.v_r_ms - curve.v_in_ms)
    } else {
        curve.s_rated_kw
    }
}

/// PV output at irradiance `r_w_m2`, in kW: `s_rated · min(r/r_max, 1)`.
pub fn pv_power(r_w_m2: f64, model: &PvModel) -> f64 {
    model.s_rated_kw * (r_w_m2 / model.r_max_w_m2).min(1.0)
}

/// Distribution and curve parameters shared by all stochastic sites.
/// Defaults: Weibull(k=2, c=8 m/s) wind, 1000·Beta(2.06, 2.5) W/m²
/// irradiance, and a 4/16/28 m/s wind power curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StochasticModels {
    pub weibull_k: f64,
    pub weibull_c_ms: f64,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    pub r_max_w_m2: f64,
    pub eta: f64,
    pub v_in_ms: f64,
    pub v_r_ms: f64,
    pub v_out_ms: f64,
}

impl Default for StochasticModels {
    fn default() -> Self {
        Self {
            weibull_k: 2.0,
            weibull_c_ms: 8.0,
            beta_alpha: 2.06,
            beta_beta: 2.5,
            r_max_w_m2: 1000.0,
            eta: 0.12,
            v_in_ms: 4.0,
            v_r_ms: 16.0,
            v_out_ms: 28.0,
        }
    }
}

impl StochasticModels {
    pub fn validate(&self) -> Result<(), StochasticError> {
        let positive = [
            ("weibull_k", self.weibull_k),
            ("weibull_c_ms", self.weibull_c_ms),
            ("beta_alpha", self.beta_alpha),
            ("beta_beta", self.beta_beta),
            ("r_max_w_m2", self.r_max_w_m2),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(StochasticError::BadParameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if !(0.0 < self.v_in_ms && self.v_in_ms < self.v_r_ms && self.v_r_ms < self.v_out_ms) {
            return Err(StochasticError::BadParameter {
                name: "v_in_ms/v_r_ms/v_out_ms",
                value: self.v_in_ms,
                reason: "wind curve speeds must satisfy 0 < v_in < v_r < v_out",
            });
        }
        Ok(())
    }

    pub fn wt_curve(&self, s_rated_kw: f64) -> WtCurve {
        WtCurve {
            v_in_ms: self.v_in_ms,
            v_r_ms: self.v_r_ms,
            v_out_ms: self.v_out_ms,
            s_rated_kw,
        }
    }

    pub fn pv_model(&self, s_rated_kw: f64) -> PvModel {
        PvModel {
            eta: self.eta,
            r_max_w_m2: self.r_max_w_m2,
            s_rated_kw,
        }
    }
}

/// Monte Carlo output draws for one DG site, in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub bus: usize,
    pub kind: DgKind,
    pub s_rated_kw: f64,
    pub seed: u64,
    pub samples: Vec<f64>,
}

impl SampleSet {
    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    BadParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("sample count must be at least 1")]
    ZeroSamples,
}

/// Draws `n` output samples for every site, keyed by `(seed, bus id)`.
///
/// Identical seeds reproduce bit-identical sample sets, and a site's stream
/// is unaffected by the other sites in the list.
pub fn sample_outputs(
    sites: &[DgUnit],
    models: &StochasticModels,
    n: usize,
    seed: u64,
) -> Result<Vec<SampleSet>, StochasticError> {
    models.validate()?;
    if n == 0 {
        return Err(StochasticError::ZeroSamples);
    }
    sites
        .iter()
        .map(|site| {
            let mut samples = Vec::with_capacity(n);
            match site.kind {
                DgKind::Mt => samples.resize(n, site.s_rated_kw),
                DgKind::Wt => {
                    let mut rng = site_rng(seed, site.bus);
                    let weibull = Weibull::new(models.weibull_c_ms, models.weibull_k)
                        .expect("validated weibull parameters");
                    let curve = models.wt_curve(site.s_rated_kw);
                    for _ in 0..n {
                        samples.push(wt_power(weibull.sample(&mut rng), &curve));
                    }
                }
                DgKind::Pv => {
                    let mut rng = site_rng(seed, site.bus);
                    let beta = Beta::new(models.beta_alpha, models.beta_beta)
                        .expect("validated beta parameters");
                    let model = models.pv_model(site.s_rated_kw);
                    for _ in 0..n {
                        let r = models.r_max_w_m2 * beta.sample(&mut rng);
                        samples.push(pv_power(r, &model));
                    }
                }
            }
            Ok(SampleSet {
                bus: site.bus,
                kind: site.kind,
                s_rated_kw: site.s_rated_kw,
                seed,
                samples,
            })
        })
        .collect()
}

fn site_rng(seed: u64, bus: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(bus as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn curve(s: f64) -> WtCurve {
        WtCurve { v_in_ms: 4.0, v_r_ms: 16.0, v_out_ms: 28.0, s_rated_kw: s }
    }

    #[test]
    fn wt_power_anchor_points() {
        assert_eq!(wt_power(2.0, &curve(1556.0)), 0.0);
        assert_eq!(wt_power(4.0, &curve(1556.0)), 0.0);
        assert_eq!(wt_power(16.0, &curve(1556.0)), 1556.0);
        assert_eq!(wt_power(27.999, &curve(1556.0)), 1556.0);
        assert_eq!(wt_power(28.0, &curve(1556.0)), 0.0);
        assert_relative_eq!(wt_power(10.0, &curve(100.0)), 50.0, max_relative = 1e-12);
    }

    #[test]
    fn pv_power_anchor_points() {
        let model = PvModel { eta: 0.12, r_max_w_m2: 1000.0, s_rated_kw: 183.0 };
        assert_eq!(pv_power(0.0, &model), 0.0);
        assert_eq!(pv_power(1000.0, &model), 183.0);
        assert_eq!(pv_power(2500.0, &model), 183.0);
        let small = PvModel { s_rated_kw: 100.0, ..model };
        assert_relative_eq!(pv_power(250.0, &small), 25.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn wt_power_is_monotone_below_cutout_and_bounded(
            a in 0.0..28.0f64,
            b in 0.0..28.0f64,
        ) {
            let c = curve(750.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(wt_power(lo, &c) <= wt_power(hi, &c) + 1e-12);
            prop_assert!((0.0..=750.0).contains(&wt_power(a, &c)));
        }

        #[test]
        fn pv_power_is_monotone_and_bounded(a in 0.0..3000.0f64, b in 0.0..3000.0f64) {
            let m = PvModel { eta: 0.12, r_max_w_m2: 1000.0, s_rated_kw: 250.0 };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(pv_power(lo, &m) <= pv_power(hi, &m) + 1e-12);
            prop_assert!((0.0..=250.0).contains(&pv_power(a, &m)));
        }
    }

    #[test]
    fn mt_sites_sample_as_constants() {
        let sites = [DgUnit::new(DgKind::Mt, 49, 185.0)];
        let sets = sample_outputs(&sites, &StochasticModels::default(), 500, 42).unwrap();
        assert!(sets[0].samples.iter().all(|&s| s == 185.0));
    }

    #[test]
    fn degenerate_wind_below_cut_in_yields_zero() {
        let sites = [DgUnit::new(DgKind::Wt, 61, 1000.0)];
        let models = StochasticModels { weibull_c_ms: 0.1, ..Default::default() };
        let sets = sample_outputs(&sites, &models, 2000, 1).unwrap();
        assert!(sets[0].samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn samples_stay_within_rated_bounds() {
        let sites = [
            DgUnit::new(DgKind::Wt, 61, 1556.0),
            DgUnit::new(DgKind::Pv, 50, 183.0),
        ];
        let sets = sample_outputs(&sites, &StochasticModels::default(), 10_000, 3).unwrap();
        for set in &sets {
            assert!(set
                .samples
                .iter()
                .all(|&s| (0.0..=set.s_rated_kw + 1e-9).contains(&s)));
        }
    }

    #[test]
    fn same_seed_reproduces_identical_sets() {
        let sites = [
            DgUnit::new(DgKind::Wt, 61, 1556.0),
            DgUnit::new(DgKind::Pv, 50, 183.0),
        ];
        let a = sample_outputs(&sites, &StochasticModels::default(), 1000, 99).unwrap();
        let b = sample_outputs(&sites, &StochasticModels::default(), 1000, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn site_streams_do_not_depend_on_the_site_list() {
        let models = StochasticModels::default();
        let wt = DgUnit::new(DgKind::Wt, 61, 1556.0);
        let pv = DgUnit::new(DgKind::Pv, 50, 183.0);
        let together = sample_outputs(&[wt.clone(), pv.clone()], &models, 256, 5).unwrap();
        let alone = sample_outputs(&[wt], &models, 256, 5).unwrap();
        assert_eq!(together[0].samples, alone[0].samples);
    }

    #[test]
    fn different_seeds_agree_in_distribution() {
        // Two-sample Kolmogorov–Smirnov statistic below the 1% critical
        // value 1.628·sqrt(2/n) for n = m = 10⁴.
        let sites = [DgUnit::new(DgKind::Wt, 61, 1000.0)];
        let models = StochasticModels::default();
        let mut a = sample_outputs(&sites, &models, 10_000, 11).unwrap()[0].samples.clone();
        let mut b = sample_outputs(&sites, &models, 10_000, 12).unwrap()[0].samples.clone();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let n = a.len() as f64;
        let mut ks: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / n - j as f64 / n).abs());
        }
        let critical = 1.628 * (2.0 / n).sqrt();
        assert!(ks < critical, "KS = {ks:.5}, critical = {critical:.5}");
    }

    #[test]
    fn wind_mean_matches_quadrature_oracle() {
        let sites = [DgUnit::new(DgKind::Wt, 61, 1000.0)];
        let models = StochasticModels::default();
        let n = 100_000;
        let samples = &sample_outputs(&sites, &models, n, 7).unwrap()[0].samples;
        let mean = samples.iter().sum::<f64>() / n as f64;

        // Simpson integration of the power curve against the Weibull density
        // over [0, v_out]; everything beyond contributes zero.
        let (k, c) = (models.weibull_k, models.weibull_c_ms);
        let pdf = |v: f64| {
            if v <= 0.0 {
                0.0
            } else {
                k / c * (v / c).powf(k - 1.0) * (-(v / c).powf(k)).exp()
            }
        };
        let curve = models.wt_curve(1000.0);
        let moment = |power: &dyn Fn(f64) -> f64| {
            let steps = 20_000;
            let h = models.v_out_ms / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let x0 = i as f64 * h;
                let x1 = x0 + h;
                let xm = 0.5 * (x0 + x1);
                acc += h / 6.0
                    * (power(x0) * pdf(x0) + 4.0 * power(xm) * pdf(xm) + power(x1) * pdf(x1));
            }
            acc
        };
        let expect = moment(&|v| wt_power(v, &curve));
        let second = moment(&|v| wt_power(v, &curve).powi(2));
        let sigma = (second - expect * expect).sqrt();
        let band = 3.0 * sigma / (n as f64).sqrt();
        assert!(
            (mean - expect).abs() < band,
            "mean {mean:.3} vs quadrature {expect:.3} (±{band:.3})"
        );
    }

    #[test]
    fn solar_mean_matches_beta_moment() {
        let sites = [DgUnit::new(DgKind::Pv, 50, 183.0)];
        let models = StochasticModels::default();
        let n = 100_000;
        let samples = &sample_outputs(&sites, &models, n, 13).unwrap()[0].samples;
        let mean = samples.iter().sum::<f64>() / n as f64;
        // Output is s·X with X ~ Beta(α, β), so the moments are exact.
        let (a, b) = (models.beta_alpha, models.beta_beta);
        let expect = 183.0 * a / (a + b);
        let var = 183.0_f64.powi(2) * a * b / ((a + b).powi(2) * (a + b + 1.0));
        let band = 3.0 * var.sqrt() / (n as f64).sqrt();
        assert!(
            (mean - expect).abs() < band,
            "mean {mean:.3} vs analytic {expect:.3} (±{band:.3})"
        );
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let sites = [DgUnit::new(DgKind::Wt, 61, 100.0)];
        let bad_k = StochasticModels { weibull_k: 0.0, ..Default::default() };
        assert!(matches!(
            sample_outputs(&sites, &bad_k, 10, 1),
            Err(StochasticError::BadParameter { name: "weibull_k", .. })
        ));
        let bad_curve = StochasticModels { v_r_ms: 3.0, ..Default::default() };
        assert!(sample_outputs(&sites, &bad_curve, 10, 1).is_err());
        assert!(matches!(
            sample_outputs(&sites, &StochasticModels::default(), 0, 1),
            Err(StochasticError::ZeroSamples)
        ));
    }
}
