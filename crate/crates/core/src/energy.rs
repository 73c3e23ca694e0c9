//! Energy estimates for centralized versus parallel learning.
//!
//! Power times time is in watt-seconds and converted to Wh by dividing by
//! 3600; communication is in GB and `sigma` in Wh/GB.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Wh per GB transferred.
    pub sigma: f64,
    /// Central processor power (W).
    pub p_c: f64,
    /// Low-power processor power (W).
    pub p_p: f64,
    /// Aggregation time per data point (s).
    pub a: f64,
    /// Training time (s).
    pub t_train: f64,
    pub m: u64,
    /// Data points per learner.
    pub n_points: f64,
    /// Central communication (GB).
    pub c_c: f64,
    /// Parallel communication (GB).
    pub c_p: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            sigma: 0.0,
            p_c: 0.0,
            p_p: 0.0,
            a: 0.0,
            t_train: 0.0,
            m: 1,
            n_points: 0.0,
            c_c: 0.0,
            c_p: 0.0,
        }
    }
}

impl EnergyParams {
    /// Reference setting: 16 learners with 100 points each, a 3-bit
    /// model, 100 W central and 1 W low-power processors.
    pub fn reference() -> Self {
        EnergyParams {
            sigma: 0.0029,
            p_c: 100.0,
            p_p: 1.0,
            a: 1e-12,
            t_train: 1e-10,
            m: 16,
            n_points: 100.0,
            c_c: 6_200_640e-9,
            c_p: 34_020e-9,
        }
    }

    /// Same as [`EnergyParams::reference`] but reading the per-GB cost as 2.9 Wh.
    pub fn reference_high_sigma() -> Self {
        EnergyParams {
            sigma: 2.9,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma", self.sigma),
            ("p_c", self.p_c),
            ("p_p", self.p_p),
            ("a", self.a),
            ("t", self.t_train),
            ("n", self.n_points),
            ("c_c", self.c_c),
            ("c_p", self.c_p),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.m < 1 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines. `preset = reference|reference_high_sigma` sets the base
    /// values that later keys override.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = EnergyParams::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|e| err(format!("bad value {value:?} for {key}: {e}")))
            };
            match key {
                "preset" => {
                    p = match value {
                        "reference" => Self::reference(),
                        "reference_high_sigma" => Self::reference_high_sigma(),
                        other => return Err(err(format!("unknown preset {other:?}"))),
                    }
                }
                "sigma" => p.sigma = float()?,
                "p_c" => p.p_c = float()?,
                "p_p" => p.p_p = float()?,
                "a" => p.a = float()?,
                "t" | "t_train" => p.t_train = float()?,
                "m" => {
                    p.m = value
                        .parse()
                        .map_err(|e| err(format!("bad value {value:?} for m: {e}")))?
                }
                "n" | "N" | "n_points" => p.n_points = float()?,
                "c_c" => p.c_c = float()?,
                "c_p" => p.c_p = float()?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// `(m N a + t) p_c + c_c sigma`, in Wh.
pub fn central_energy(p: &EnergyParams) -> f64 {
    let m = p.m as f64;
    (m * p.n_points * p.a + p.t_train) * p.p_c / SECONDS_PER_HOUR + p.c_c * p.sigma
}

/// `m (N a + t) p_p + m a p_p + c_p sigma`, in Wh.
pub fn parallel_energy(p: &EnergyParams) -> f64 {
    let m = p.m as f64;
    (m * (p.n_points * p.a + p.t_train) * p.p_p + m * p.a * p.p_p) / SECONDS_PER_HOUR + p.c_p * p.sigma
}

/// `central_energy / parallel_energy`, with the communication factor
/// `sigma` divided out first so that without compute the result is exactly
/// `c_c / c_p`.
pub fn energy_ratio(p: &EnergyParams) -> f64 {
    ratio_with_comm_scale(p, 1.0)
}

/// Ratio when both communication volumes are multiplied by `scale`.
fn ratio_with_comm_scale(p: &EnergyParams, scale: f64) -> f64 {
    let m = p.m as f64;
    let compute_c = (m * p.n_points * p.a + p.t_train) * p.p_c;
    let compute_p = m * (p.n_points * p.a + p.t_train) * p.p_p + m * p.a * p.p_p;
    let unit = SECONDS_PER_HOUR * p.sigma * scale;
    if unit > 0.0 {
        let c = compute_c / unit + p.c_c;
        let q = compute_p / unit + p.c_p;
        if c.is_finite() && q.is_finite() && q > 0.0 {
            return c / q;
        }
    }
    (compute_c / SECONDS_PER_HOUR + p.c_c * scale * p.sigma) / (compute_p / SECONDS_PER_HOUR + p.c_p * scale * p.sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub m: u64,
    pub central: f64,
    pub parallel: f64,
    pub ratio: f64,
}

/// Evaluates both energies for each `m`, scaling `c_c` and `c_p` by `m / p.m`
/// so their ratio stays fixed.
pub fn scaling_curves(p: &EnergyParams, m_range: &[u64]) -> Result<Vec<ScalingRow>> {
    if m_range.is_empty() {
        return Err(Error::Empty("m range"));
    }
    p.validate()?;
    m_range
        .iter()
        .map(|&m| {
            if m < 1 {
                return Err(Error::Config("m must be at least 1".into()));
            }
            let scale = m as f64 / p.m as f64;
            let q = EnergyParams {
                m,
                c_c: p.c_c * scale,
                c_p: p.c_p * scale,
                ..*p
            };
            Ok(ScalingRow {
                m,
                central: central_energy(&q),
                parallel: parallel_energy(&q),
                ratio: ratio_with_comm_scale(&EnergyParams { m, ..*p }, scale),
            })
        })
        .collect()
}

pub const SCALING_HEADER: &str = "m,central_wh,parallel_wh,ratio";

/// CSV with `{:e}` floats, which round-trip exactly.
pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = format!("{SCALING_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{:e},{:e},{:e}", r.m, r.central, r.parallel, r.ratio);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    #[test]
    fn zero_params_cost_nothing() {
        let p = EnergyParams::default();
        assert_eq!(central_energy(&p), 0.0);
        assert_eq!(parallel_energy(&p), 0.0);
    }

    #[test]
    fn communication_only() {
        let p = EnergyParams {
            sigma: 1.0,
            c_c: 1.0,
            c_p: 0.5,
            ..Default::default()
        };
        assert_eq!(central_energy(&p), 1.0);
        assert_eq!(parallel_energy(&p), 0.5);
    }

    #[test]
    fn central_compute_term() {
        let p = EnergyParams {
            m: 16,
            n_points: 100.0,
            a: 1e-12,
            t_train: 1e-10,
            p_c: 100.0,
            ..Default::default()
        };
        assert!(rel(central_energy(&p), 1.7e-7 / 3600.0) < 1e-12);
        assert!(rel(central_energy(&p), 4.722e-11) < 1e-3);
    }

    #[test]
    fn single_learner_training_only() {
        let p = EnergyParams {
            m: 1,
            t_train: 7.0,
            p_p: 2.0,
            n_points: 5.0,
            ..Default::default()
        };
        assert_eq!(parallel_energy(&p), 7.0 * 2.0 / 3600.0);
    }

    #[test]
    fn compute_free_ratio_is_constant() {
        let p = EnergyParams {
            a: 0.0,
            t_train: 0.0,
            ..EnergyParams::reference()
        };
        let rows = scaling_curves(&p, &(1..=64).collect::<Vec<_>>()).unwrap();
        for r in rows {
            assert_eq!(r.ratio, p.c_c / p.c_p);
        }
    }

    #[test]
    fn reference_ratio_is_non_increasing() {
        for p in [EnergyParams::reference(), EnergyParams::reference_high_sigma()] {
            let rows = scaling_curves(&p, &(1..=1000).collect::<Vec<_>>()).unwrap();
            assert!(rows.windows(2).all(|w| w[1].ratio <= w[0].ratio));
            let single = &scaling_curves(&p, &[p.m]).unwrap()[0];
            assert_eq!(single.central, central_energy(&p));
            assert_eq!(single.parallel, parallel_energy(&p));
        }
    }

    #[test]
    fn params_file() {
        let p = EnergyParams::from_text("preset = reference\nsigma = 2.9 # override\nm = 8\n").unwrap();
        assert_eq!(p.sigma, 2.9);
        assert_eq!(p.m, 8);
        assert_eq!(p.p_c, 100.0);
        assert!(EnergyParams::from_text("sigma = -1").is_err());
        assert!(matches!(
            EnergyParams::from_text("\nsigma 1"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(EnergyParams::from_text("m = 0").is_err());
        assert!(scaling_curves(&p, &[]).is_err());
    }

    #[test]
    fn csv_round_trips_floats() {
        let rows = scaling_curves(&EnergyParams::reference(), &[1, 16]).unwrap();
        let text = scaling_csv(&rows);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (rec, row) in rdr.records().zip(&rows) {
            let rec = rec.unwrap();
            assert_eq!(rec[1].parse::<f64>().unwrap(), row.central);
            assert_eq!(rec[3].parse::<f64>().unwrap(), row.ratio);
        }
    }

    fn params() -> impl Strategy<Value = EnergyParams> {
        (
            0.0..10.0f64,
            0.0..200.0f64,
            0.0..5.0f64,
            0.0..1e-3f64,
            0.0..10.0f64,
            1u64..64,
            0.0..1e4f64,
            0.0..10.0f64,
            0.0..10.0f64,
        )
            .prop_map(|(sigma, p_c, p_p, a, t_train, m, n_points, c_c, c_p)| EnergyParams {
                sigma,
                p_c,
                p_p,
                a,
                t_train,
                m,
                n_points,
                c_c,
                c_p,
            })
    }

    proptest! {
        #[test]
        fn linear_in_sigma_and_power(p in params(), s in 0.0..10.0f64) {
            let with = |f: &dyn Fn(&mut EnergyParams)| { let mut q = p; f(&mut q); q };
            let zero_sigma = with(&|q| q.sigma = 0.0);
            let scaled = with(&|q| q.sigma *= s);
            let comm_c = central_energy(&p) - central_energy(&zero_sigma);
            let comm_p = parallel_energy(&p) - parallel_energy(&zero_sigma);
            prop_assert!((central_energy(&scaled) - central_energy(&zero_sigma) - s * comm_c).abs() <= 1e-9 * (1.0 + comm_c.abs() * s));
            prop_assert!((parallel_energy(&scaled) - parallel_energy(&zero_sigma) - s * comm_p).abs() <= 1e-9 * (1.0 + comm_p.abs() * s));
            let no_pc = with(&|q| q.p_c = 0.0);
            let pc_scaled = with(&|q| q.p_c *= s);
            let compute = central_energy(&p) - central_energy(&no_pc);
            prop_assert!((central_energy(&pc_scaled) - central_energy(&no_pc) - s * compute).abs() <= 1e-9 * (1.0 + compute.abs() * s));
        }

        #[test]
        fn parallel_is_monotone(p in params(), bump in 0.0..2.0f64, which in 0usize..8) {
            let mut q = p;
            match which {
                0 => q.sigma += bump,
                1 => q.p_p += bump,
                2 => q.a += bump,
                3 => q.t_train += bump,
                4 => q.m += bump as u64,
                5 => q.n_points += bump,
                6 => q.c_p += bump,
                _ => q.p_c += bump,
            }
            prop_assert!(parallel_energy(&q) >= parallel_energy(&p));
        }
    }
}
