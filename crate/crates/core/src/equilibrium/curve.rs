use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{pool_adjacent_violators, EquilibriumPoint};
use crate::{Error, Result, ETA_MIN};

pub const CURVE_HEADER: &str = "eta,pa,mse,r_star,pa_stderr,mse_stderr";
const SAMPLES_TAG: &str = "# mc_samples=";

/// Tabulated equilibrium quantities, sorted by threshold. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCurve {
    points: Vec<EquilibriumPoint>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveViolation {
    PaDecreasing { index: usize },
    MseDecreasing { index: usize },
    PaOutOfRange { index: usize },
}

impl EquilibriumCurve {
    /// Builds a curve from raw points without enforcing monotonicity; see
    /// [`validate`](Self::validate).
    pub fn from_points(points: Vec<EquilibriumPoint>) -> Result<Self> {
        let (first, last) = match (points.first(), points.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::Config("equilibrium curve needs at least one point".into())),
        };
        if points.windows(2).any(|w| !(w[0].eta < w[1].eta)) {
            return Err(Error::Config("curve thresholds must be strictly increasing".into()));
        }
        if first.eta < ETA_MIN {
            return Err(Error::Config(format!(
                "curve starts at eta={} below the minimum {ETA_MIN}",
                first.eta
            )));
        }
        if let Some(p) = points.iter().find(|p| !(p.mse >= 0.0) || !p.pa.is_finite()) {
            return Err(Error::Config(format!("curve point at eta={} has invalid pa/mse", p.eta)));
        }
        Ok(Self {
            eta_min: first.eta,
            eta_max: last.eta,
            sigma2_min: first.mse,
            sigma2_max: last.mse,
            p_min: first.pa,
            p_max: last.pa,
            points,
        })
    }

    /// Projects the acceptance-probability and MSE columns onto
    /// nondecreasing sequences before building the curve.
    pub fn smoothed(mut points: Vec<EquilibriumPoint>) -> Result<Self> {
        let pa: Vec<f64> = points.iter().map(|p| p.pa).collect();
        let mse: Vec<f64> = points.iter().map(|p| p.mse).collect();
        let pa = pool_adjacent_violators(&pa);
        let mse = pool_adjacent_violators(&mse);
        for ((p, a), m) in points.iter_mut().zip(pa).zip(mse) {
            p.pa = a;
            p.mse = m;
        }
        Self::from_points(points)
    }

    pub fn points(&self) -> &[EquilibriumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Vec<CurveViolation> {
        let mut out = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            if !(p.pa > 0.0 && p.pa <= 1.0) {
                out.push(CurveViolation::PaOutOfRange { index: i });
            }
            if i > 0 {
                let prev = &self.points[i - 1];
                if p.pa < prev.pa {
                    out.push(CurveViolation::PaDecreasing { index: i });
                }
                if p.mse < prev.mse {
                    out.push(CurveViolation::MseDecreasing { index: i });
                }
            }
        }
        out
    }

    fn interpolate(&self, eta: f64, column: impl Fn(&EquilibriumPoint) -> f64) -> f64 {
        let eta = if eta < self.eta_min || eta > self.eta_max || eta.is_nan() {
            tracing::warn!(
                eta,
                eta_min = self.eta_min,
                eta_max = self.eta_max,
                "threshold outside the tabulated curve; clamping"
            );
            if eta > self.eta_max {
                self.eta_max
            } else {
                self.eta_min
            }
        } else {
            eta
        };
        let i = self.points.partition_point(|p| p.eta <= eta);
        if i >= self.points.len() {
            return column(self.points.last().expect("nonempty"));
        }
        let (p0, p1) = (&self.points[i - 1], &self.points[i]);
        let (v0, v1) = (column(p0), column(p1));
        let t = (eta - p0.eta) / (p1.eta - p0.eta);
        // Clamp so rounding never overshoots the segment endpoints.
        (v0 + (v1 - v0) * t).clamp(v0.min(v1), v0.max(v1))
    }

    /// Piecewise-linear MSE at threshold `eta` (clamped into range).
    pub fn mse_of_eta(&self, eta: f64) -> f64 {
        self.interpolate(eta, |p| p.mse)
    }

    pub fn pa_of_eta(&self, eta: f64) -> f64 {
        self.interpolate(eta, |p| p.pa)
    }

    /// Adversary magnitude played against `eta`.
    pub fn r_star_of_eta(&self, eta: f64) -> f64 {
        self.interpolate(eta, |p| p.r_star)
    }

    /// Interpolated Monte Carlo standard errors `(pa, mse)` at `eta`.
    pub fn stderrs_of_eta(&self, eta: f64) -> (f64, f64) {
        (
            self.interpolate(eta, |p| p.pa_stderr),
            self.interpolate(eta, |p| p.mse_stderr),
        )
    }

    pub fn clamp_target(&self, target: f64) -> f64 {
        if target.is_nan() {
            return self.sigma2_min;
        }
        target.max(self.sigma2_min).min(self.sigma2_max)
    }

    /// Smallest threshold whose MSE reaches `target` after clamping it into
    /// `[sigma2_min, sigma2_max]`. Binary search to 1e-6 in `eta`; flat
    /// stretches resolve to their left end.
    pub fn eta_for_target_mse(&self, target: f64) -> f64 {
        let t = self.clamp_target(target);
        let k = self.points.partition_point(|p| p.mse < t);
        if k == 0 {
            return self.eta_min;
        }
        if k == self.points.len() {
            return self.eta_max;
        }
        if self.points[k].mse == t {
            return self.points[k].eta;
        }
        let (mut lo, mut hi) = (self.points[k - 1].eta, self.points[k].eta);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if self.mse_of_eta(mid) >= t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(64 * (self.points.len() + 2));
        s.push_str(CURVE_HEADER);
        s.push('\n');
        for p in &self.points {
            let cols = [p.eta, p.pa, p.mse, p.r_star, p.pa_stderr, p.mse_stderr];
            let row: Vec<String> = cols.iter().map(|v| format_sig17(*v)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        let n = self.points[0].mc_samples;
        if self.points.iter().all(|p| p.mc_samples == n) {
            let _ = writeln!(s, "{SAMPLES_TAG}{n}");
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == CURVE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    msg: format!("expected header {CURVE_HEADER:?}"),
                })
            }
        }
        let mut points = Vec::new();
        let mut samples = 0usize;
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix(SAMPLES_TAG) {
                samples = rest.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column: SAMPLES_TAG.len() + 1,
                    msg: format!("bad sample count {rest:?}"),
                })?;
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut vals = [0.0; 6];
            let mut column = 1;
            let mut count = 0;
            for field in line.split(',') {
                if count == 6 {
                    return Err(Error::Parse {
                        line: line_no,
                        column,
                        msg: "too many fields (expected 6)".into(),
                    });
                }
                vals[count] = field.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column,
                    msg: format!("not a number: {field:?}"),
                })?;
                count += 1;
                column += field.chars().count() + 1;
            }
            if count != 6 {
                return Err(Error::Parse {
                    line: line_no,
                    column: line.chars().count() + 1,
                    msg: format!("expected 6 fields, found {count}"),
                });
            }
            points.push(EquilibriumPoint {
                eta: vals[0],
                pa: vals[1],
                mse: vals[2],
                r_star: vals[3],
                mc_samples: 0,
                pa_stderr: vals[4],
                mse_stderr: vals[5],
            });
        }
        for p in &mut points {
            p.mc_samples = samples;
        }
        Self::from_points(points)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }
}

/// Positional decimal with 17 significant digits (exact `f64` round trip).
pub(crate) fn format_sig17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mant) = match mant.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mant),
    };
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if exp as usize >= digits.len() - 1 {
        format!("{}{}.0", digits, "0".repeat(exp as usize + 1 - digits.len()))
    } else {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    };
    format!("{sign}{body}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(eta: f64, pa: f64, mse: f64) -> EquilibriumPoint {
        EquilibriumPoint {
            eta,
            pa,
            mse,
            r_star: eta - 0.5,
            mc_samples: 1000,
            pa_stderr: 0.01,
            mse_stderr: 0.02,
        }
    }

    fn curve() -> EquilibriumCurve {
        EquilibriumCurve::from_points(vec![
            pt(2.0, 0.1, 1.0),
            pt(3.0, 0.2, 2.0),
            pt(4.0, 0.2, 2.0),
            pt(5.0, 0.5, 6.0),
            pt(6.0, 0.9, 6.5),
        ])
        .unwrap()
    }

    #[test]
    fn endpoints_and_degenerate_curve() {
        let c = curve();
        assert_eq!((c.eta_min, c.eta_max), (2.0, 6.0));
        assert_eq!((c.sigma2_min, c.sigma2_max, c.p_min, c.p_max), (1.0, 6.5, 0.1, 0.9));
        let one = EquilibriumCurve::from_points(vec![pt(2.0, 0.3, 4.0)]).unwrap();
        assert_eq!(one.sigma2_min, one.sigma2_max);
        assert_eq!(one.eta_for_target_mse(100.0), 2.0);
        assert_eq!(one.mse_of_eta(2.0), 4.0);
        assert!(EquilibriumCurve::from_points(vec![]).is_err());
        assert!(EquilibriumCurve::from_points(vec![pt(1.0, 0.3, 4.0)]).is_err());
        assert!(EquilibriumCurve::from_points(vec![pt(3.0, 0.3, 4.0), pt(2.5, 0.3, 4.0)]).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let c = curve();
        for p in c.points() {
            assert_eq!(c.mse_of_eta(p.eta), p.mse);
            assert_eq!(c.pa_of_eta(p.eta), p.pa);
            assert_eq!(c.r_star_of_eta(p.eta), p.r_star);
        }
        assert!((c.mse_of_eta(4.5) - 4.0).abs() < 1e-12);
        assert!((c.pa_of_eta(2.5) - 0.15).abs() < 1e-12);
        // Out of range clamps.
        assert_eq!(c.mse_of_eta(100.0), 6.5);
        assert_eq!(c.mse_of_eta(0.0), 1.0);
    }

    #[test]
    fn inversion_examples() {
        let c = curve();
        assert_eq!(c.eta_for_target_mse(0.5), 2.0);
        assert_eq!(c.eta_for_target_mse(1.0), 2.0);
        assert_eq!(c.eta_for_target_mse(1e9), 6.0);
        assert_eq!(c.eta_for_target_mse(f64::NAN), 2.0);
        // Flat segment [3, 4] at mse 2: infimum is its left end.
        assert!((c.eta_for_target_mse(2.0) - 3.0).abs() <= 1e-6);
        assert!((c.eta_for_target_mse(6.0) - 5.0).abs() <= 1e-6);
        // Interior of a segment: mse(eta) = 2 + 4 (eta - 4).
        let eta = c.eta_for_target_mse(4.0);
        assert!((eta - 4.5).abs() <= 1e-6);
        assert!(c.mse_of_eta(eta) >= 4.0);
    }

    #[test]
    fn smoothing_enforces_monotonicity() {
        let c = EquilibriumCurve::smoothed(vec![
            pt(2.0, 0.2, 3.0),
            pt(3.0, 0.1, 2.0),
            pt(4.0, 0.4, 5.0),
        ])
        .unwrap();
        assert!(c.validate().is_empty());
        assert_eq!(c.points()[0].mse, 2.5);
        assert_eq!(c.sigma2_min, 2.5);
        assert!((c.p_min - 0.15).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let c = curve();
        let text = c.to_csv_string();
        assert!(text.starts_with(CURVE_HEADER));
        let back = EquilibriumCurve::parse_csv(&text).unwrap();
        assert_eq!(back, c);

        let bad = EquilibriumCurve::from_points(vec![pt(2.0, 0.1, 3.0), pt(3.0, 0.2, 1.0)]).unwrap();
        let loaded = EquilibriumCurve::parse_csv(&bad.to_csv_string()).unwrap();
        assert_eq!(loaded.validate(), vec![CurveViolation::MseDecreasing { index: 1 }]);
    }

    #[test]
    fn csv_errors_name_position() {
        let no_header = "2.0,0.1,1.0,1.5,0.0,0.0\n";
        assert!(matches!(
            EquilibriumCurve::parse_csv(no_header),
            Err(Error::Parse { line: 1, column: 1, .. })
        ));
        let bad_num = format!("{CURVE_HEADER}\n2.0,0.1,1.0,1.5,0.0,0.0\n3.0,0.2,abc,2.5,0.0,0.0\n");
        match EquilibriumCurve::parse_csv(&bad_num) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 9)),
            other => panic!("unexpected {other:?}"),
        }
        let short = format!("{CURVE_HEADER}\n2.0,0.1\n");
        assert!(matches!(
            EquilibriumCurve::parse_csv(&short),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/curve.csv");
        let c = curve();
        c.save(&path).unwrap();
        assert_eq!(EquilibriumCurve::load(&path).unwrap(), c);
    }

    #[test]
    fn sig17_format() {
        assert_eq!(format_sig17(1.0), "1.0000000000000000");
        assert_eq!(format_sig17(-2.5e-3), "-0.0025000000000000001");
        assert_eq!(format_sig17(123456.0), "123456.00000000000");
        assert_eq!(format_sig17(1e20), "100000000000000000000.0");
        assert_eq!(format_sig17(0.0), "0.0");
    }

    proptest! {
        #[test]
        fn sig17_round_trips(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL) {
            prop_assume!(x.abs() < 1e200 && x.abs() > 1e-200);
            let s = format_sig17(x);
            prop_assert!(!s.contains('e'));
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn interpolation_is_monotone(
            incs in prop::collection::vec((0.01f64..3.0, 0.0f64..5.0), 1..20),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let mut eta = 2.0;
            let mut mse = 0.5;
            let mut pts = vec![pt(eta, 0.5, mse)];
            for (de, dm) in incs {
                eta += de;
                mse += dm;
                pts.push(pt(eta, 0.5, mse));
            }
            let c = EquilibriumCurve::from_points(pts).unwrap();
            let span = c.eta_max - c.eta_min;
            let (e1, e2) = (c.eta_min + a.min(b) * span, c.eta_min + a.max(b) * span);
            prop_assert!(c.mse_of_eta(e1) <= c.mse_of_eta(e2));

            // Inversion: infimum semantics against every grid point.
            let target = c.sigma2_min + a * (c.sigma2_max - c.sigma2_min) * 1.2;
            let t = c.clamp_target(target);
            let eta_star = c.eta_for_target_mse(target);
            prop_assert!(c.mse_of_eta(eta_star) >= t - 1e-12);
            for p in c.points() {
                if p.mse >= t {
                    prop_assert!(eta_star <= p.eta);
                }
            }
        }
    }
}
