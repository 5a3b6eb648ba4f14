//! Synthetic TOA localization data.
//!
//! Ground truth follows uniform circular motion, anchors sit equally spaced
//! on a circle around the origin, and ranges are corrupted by Gaussian or
//! Gaussian-mixture noise drawn from a seeded, platform-independent stream.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Point, StateVector, STATE_DIM};

/// Identifier written to dataset headers describing the sample stream.
pub const RNG_ID: &str =
    "chacha8(rand_chacha-0.9,seed_from_u64);uniform=(u64>>11)*2^-53;gauss=box-muller(cos)";

/// Anchor radius of the slightly nonlinear schemes.
pub const LINEAR_ANCHOR_RADIUS: f64 = 1000.0;
/// Anchor radius of the heavily nonlinear schemes.
pub const NONLINEAR_ANCHOR_RADIUS: f64 = 105.0;

/// Smallest receiver-anchor distance treated as non-singular.
const MIN_RANGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeName {
    #[serde(rename = "L+G")]
    LinearGaussian,
    #[serde(rename = "NL+G")]
    NonlinearGaussian,
    #[serde(rename = "L+NG")]
    LinearNonGaussian,
    #[serde(rename = "NL+NG")]
    NonlinearNonGaussian,
}

impl SchemeName {
    pub const ALL: [SchemeName; 4] = [
        SchemeName::LinearGaussian,
        SchemeName::NonlinearGaussian,
        SchemeName::LinearNonGaussian,
        SchemeName::NonlinearNonGaussian,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeName::LinearGaussian => "L+G",
            SchemeName::NonlinearGaussian => "NL+G",
            SchemeName::LinearNonGaussian => "L+NG",
            SchemeName::NonlinearNonGaussian => "NL+NG",
        }
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(
            self,
            SchemeName::NonlinearGaussian | SchemeName::NonlinearNonGaussian
        )
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(
            self,
            SchemeName::LinearGaussian | SchemeName::NonlinearGaussian
        )
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(' ', "+");
        SchemeName::ALL
            .into_iter()
            .find(|n| n.as_str() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scheme '{s}' (valid: L+G, NL+G, L+NG, NL+NG)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    Gaussian {
        std: f64,
    },
    /// Zero-mean Gaussian mixture.
    Gmm {
        weights: Vec<f64>,
        stds: Vec<f64>,
    },
}

impl NoiseModel {
    /// Zero-mean mixture `0.8 N(0, 0.1²) + 0.2 N(0, 10²)`.
    pub fn default_gmm() -> Self {
        NoiseModel::Gmm {
            weights: vec![0.8, 0.2],
            stds: vec![0.1, 10.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Gaussian { std } => {
                if !(std.is_finite() && *std >= 0.0) {
                    return Err(Error::Config(format!("noise std must be >= 0, got {std}")));
                }
            }
            NoiseModel::Gmm { weights, stds } => {
                if weights.is_empty() || weights.len() != stds.len() {
                    return Err(Error::Config(
                        "GMM needs matching, non-empty weight and std lists".into(),
                    ));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Config("GMM weights must be non-negative".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("GMM weights sum to {total}, not 1")));
                }
                if stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::Config("GMM stds must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Std of the dominant component; used as the nominal range std for `R`.
    pub fn nominal_std(&self) -> f64 {
        match self {
            NoiseModel::Gaussian { std } => *std,
            NoiseModel::Gmm { weights, stds } => {
                let (idx, _) = weights
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |best, (i, w)| if *w > best.1 { (i, *w) } else { best });
                stds[idx]
            }
        }
    }

    /// Std of the whole distribution.
    pub fn total_std(&self) -> f64 {
        match self {
            NoiseModel::Gaussian { std } => *std,
            NoiseModel::Gmm { weights, stds } => weights
                .iter()
                .zip(stds)
                .map(|(w, s)| w * s * s)
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Compact text form, e.g. `gmm:0.8/0.1,0.2/10`.
    pub fn encode(&self) -> String {
        match self {
            NoiseModel::Gaussian { std } => format!("gaussian:{std}"),
            NoiseModel::Gmm { weights, stds } => {
                let parts: Vec<String> = weights
                    .iter()
                    .zip(stds)
                    .map(|(w, s)| format!("{w}/{s}"))
                    .collect();
                format!("gmm:{}", parts.join(","))
            }
        }
    }

    /// Parses the form produced by [`NoiseModel::encode`].
    pub fn decode(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed noise description '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let model = match kind {
            "gaussian" => NoiseModel::Gaussian {
                std: rest.parse().map_err(|_| bad())?,
            },
            "gmm" => {
                let mut weights = Vec::new();
                let mut stds = Vec::new();
                for part in rest.split(',') {
                    let (w, sd) = part.split_once('/').ok_or_else(bad)?;
                    weights.push(w.parse().map_err(|_| bad())?);
                    stds.push(sd.parse().map_err(|_| bad())?);
                }
                NoiseModel::Gmm { weights, stds }
            }
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Data-generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataScheme {
    pub name: SchemeName,
    pub anchor_radius: f64,
    pub noise: NoiseModel,
    pub anchor_count: usize,
    pub epochs: usize,
    pub dt: f64,
    /// UCM angular rate, rad/s.
    pub omega: f64,
    pub initial_pos: [f64; 2],
    pub initial_vel: [f64; 2],
}

impl DataScheme {
    pub const DEFAULT_EPOCHS: usize = 100;
    pub const DEFAULT_ANCHOR_COUNT: usize = 4;
    pub const DEFAULT_DT: f64 = 1.0;
    pub const DEFAULT_OMEGA: f64 = 0.05;
    pub const INITIAL_POS: [f64; 2] = [200.0, -100.0];
    pub const INITIAL_VEL: [f64; 2] = [5.0, 5.0];

    pub fn named(name: SchemeName) -> Self {
        let anchor_radius = if name.is_nonlinear() {
            NONLINEAR_ANCHOR_RADIUS
        } else {
            LINEAR_ANCHOR_RADIUS
        };
        let noise = if name.is_gaussian() {
            NoiseModel::Gaussian { std: 0.1 }
        } else {
            NoiseModel::default_gmm()
        };
        DataScheme {
            name,
            anchor_radius,
            noise,
            anchor_count: Self::DEFAULT_ANCHOR_COUNT,
            epochs: Self::DEFAULT_EPOCHS,
            dt: Self::DEFAULT_DT,
            omega: Self::DEFAULT_OMEGA,
            initial_pos: Self::INITIAL_POS,
            initial_vel: Self::INITIAL_VEL,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.anchor_count < 3 {
            return Err(Error::Config(format!(
                "anchor_count must be >= 3, got {}",
                self.anchor_count
            )));
        }
        if !(self.anchor_radius.is_finite() && self.anchor_radius > 0.0) {
            return Err(Error::Config("anchor_radius must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !self.omega.is_finite() {
            return Err(Error::Config("omega must be finite".into()));
        }
        Ok(())
    }
}

/// Seeded uniform/Gaussian stream. Identical seeds give identical sequences.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// One noise draw plus the mixture component it came from (0 for Gaussian).
pub fn sample_noise_with_component(model: &NoiseModel, rng: &mut SeededRng) -> (f64, usize) {
    match model {
        NoiseModel::Gaussian { std } => (std * rng.standard_normal(), 0),
        NoiseModel::Gmm { weights, stds } => {
            let u = rng.uniform();
            let mut cumulative = 0.0;
            let mut component = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                cumulative += w;
                if u < cumulative {
                    component = i;
                    break;
                }
            }
            (stds[component] * rng.standard_normal(), component)
        }
    }
}

pub fn sample_noise(model: &NoiseModel, rng: &mut SeededRng) -> f64 {
    sample_noise_with_component(model, rng).0
}

/// Uniform circular motion starting at `initial_pos` with velocity `initial_vel`.
///
/// Returns `epochs` states at `t = k·dt`, `k = 0..epochs`.
pub fn ucm_trajectory(
    initial_pos: Point,
    initial_vel: Point,
    omega: f64,
    epochs: usize,
    dt: f64,
) -> Result<Vec<StateVector>> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::Config(
            "omega = 0 is degenerate circular motion; use cv_trajectory for straight lines".into(),
        ));
    }
    let speed = initial_vel.norm();
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::Config("initial velocity must be non-zero".into()));
    }
    let radius = speed / omega.abs();
    let unit = initial_vel / speed;
    // Left normal for counter-clockwise motion, right normal otherwise.
    let normal = if omega > 0.0 {
        Point::new(-unit.y, unit.x)
    } else {
        Point::new(unit.y, -unit.x)
    };
    let center = initial_pos + normal * radius;
    let offset0 = initial_pos - center;
    Ok((0..epochs)
        .map(|k| {
            let theta = omega * k as f64 * dt;
            let (s, c) = theta.sin_cos();
            let off = Point::new(c * offset0.x - s * offset0.y, s * offset0.x + c * offset0.y);
            let pos = center + off;
            StateVector::new(pos.x, pos.y, -omega * off.y, omega * off.x)
        })
        .collect())
}

/// Circle center of the trajectory produced by [`ucm_trajectory`].
pub fn ucm_center(initial_pos: Point, initial_vel: Point, omega: f64) -> Point {
    let speed = initial_vel.norm();
    let unit = initial_vel / speed;
    let normal = if omega > 0.0 {
        Point::new(-unit.y, unit.x)
    } else {
        Point::new(unit.y, -unit.x)
    };
    initial_pos + normal * (speed / omega.abs())
}

/// Straight-line constant-velocity trajectory.
pub fn cv_trajectory(initial_pos: Point, vel: Point, epochs: usize, dt: f64) -> Vec<StateVector> {
    (0..epochs)
        .map(|k| {
            let p = initial_pos + vel * (k as f64 * dt);
            StateVector::new(p.x, p.y, vel.x, vel.y)
        })
        .collect()
}

/// `count` anchors at angles `2πi / count` on a circle around the origin.
pub fn place_anchors(radius: f64, count: usize) -> Result<Vec<Point>> {
    if count < 3 || !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!(
            "need count >= 3 and radius > 0, got count={count}, radius={radius}"
        )));
    }
    Ok((0..count)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / count as f64;
            Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect())
}

/// Ranges `‖pos − aᵢ‖`.
pub fn toa_measure(anchors: &[Point], pos: &Point) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(anchors.len());
    for (i, a) in anchors.iter().enumerate() {
        let dx = pos.x - a.x;
        let dy = pos.y - a.y;
        let r = (dx * dx + dy * dy).sqrt();
        if r.is_nan() || r <= MIN_RANGE {
            return Err(singular(a));
        }
        out[i] = r;
    }
    Ok(out)
}

/// Rows `[(p − aᵢ)ₓ / rᵢ, (p − aᵢ)ᵧ / rᵢ, 0, 0]`.
pub fn toa_jacobian(anchors: &[Point], state: &StateVector) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(anchors.len(), STATE_DIM);
    for (i, a) in anchors.iter().enumerate() {
        let dx = state.px() - a.x;
        let dy = state.py() - a.y;
        let r = (dx * dx + dy * dy).sqrt();
        if r.is_nan() || r <= MIN_RANGE {
            return Err(singular(a));
        }
        jac[(i, 0)] = dx / r;
        jac[(i, 1)] = dy / r;
    }
    Ok(jac)
}

fn singular(a: &Point) -> Error {
    Error::Singular(format!("receiver coincides with anchor ({}, {})", a.x, a.y))
}

/// Simulated ranges and ground truth. Epoch `k` (1-based) is at `t = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scheme: DataScheme,
    pub seed: u64,
    pub anchors: Vec<Point>,
    pub truth: Vec<StateVector>,
    pub ranges: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn epochs(&self) -> usize {
        self.truth.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.truth.is_empty() {
            return Err(Error::Config("dataset has no epochs".into()));
        }
        if self.truth.len() != self.ranges.len() {
            return Err(Error::Dimension {
                context: "dataset truth vs ranges".into(),
                expected: self.truth.len(),
                actual: self.ranges.len(),
            });
        }
        if self.anchors.len() < 3 {
            return Err(Error::Config("dataset needs at least 3 anchors".into()));
        }
        for (k, r) in self.ranges.iter().enumerate() {
            if r.len() != self.anchors.len() {
                return Err(Error::Dimension {
                    context: format!("ranges of epoch {}", k + 1),
                    expected: self.anchors.len(),
                    actual: r.len(),
                });
            }
        }
        Ok(())
    }

    /// CSV serialization with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# scheme={}\n", self.scheme.name));
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(&format!("# rng={RNG_ID}\n"));
        let anchors: Vec<String> = self
            .anchors
            .iter()
            .map(|a| format!("{},{}", fmt17(a.x), fmt17(a.y)))
            .collect();
        out.push_str(&format!("# anchors={}\n", anchors.join(";")));
        out.push_str(&format!("# dt={}\n", fmt17(self.scheme.dt)));
        out.push_str(&format!("# omega={}\n", fmt17(self.scheme.omega)));
        out.push_str(&format!("# noise={}\n", self.scheme.noise.encode()));
        let range_cols: Vec<String> = (1..=self.anchors.len()).map(|i| format!("r_{i}")).collect();
        out.push_str(&format!(
            "# columns=k,true_px,true_py,true_vx,true_vy,{}\n",
            range_cols.join(",")
        ));
        for (k, (s, r)) in self.truth.iter().zip(&self.ranges).enumerate() {
            let mut fields = vec![(k + 1).to_string()];
            fields.extend(s.as_array().iter().map(|v| fmt17(*v)));
            fields.extend(r.iter().map(|v| fmt17(*v)));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the CSV serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_csv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses [`Dataset::to_csv`] output. Errors carry 1-based line numbers.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut scheme_name = None;
        let mut seed = None;
        let mut anchors: Option<Vec<Point>> = None;
        let mut dt = DataScheme::DEFAULT_DT;
        let mut omega = DataScheme::DEFAULT_OMEGA;
        let mut noise = None;
        let mut truth = Vec::new();
        let mut ranges = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let perr = |message: String| Error::Parse { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                let (key, value) = header
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| perr(format!("header without '=': {trimmed}")))?;
                let value = value.trim();
                match key.trim() {
                    "scheme" => {
                        scheme_name = Some(value.parse::<SchemeName>().map_err(|e| perr(e.to_string()))?)
                    }
                    "seed" => {
                        seed = Some(value.parse::<u64>().map_err(|e| perr(format!("bad seed: {e}")))?)
                    }
                    "anchors" => {
                        let mut pts = Vec::new();
                        for pair in value.split(';') {
                            let (x, y) = pair
                                .split_once(',')
                                .ok_or_else(|| perr(format!("bad anchor '{pair}'")))?;
                            pts.push(Point::new(parse_f64(x, line)?, parse_f64(y, line)?));
                        }
                        anchors = Some(pts);
                    }
                    "dt" => dt = parse_f64(value, line)?,
                    "omega" => omega = parse_f64(value, line)?,
                    "noise" => {
                        noise = Some(NoiseModel::decode(value).map_err(|e| perr(e.to_string()))?)
                    }
                    "rng" | "columns" => {}
                    other => return Err(perr(format!("unknown header key '{other}'"))),
                }
                continue;
            }
            let anchors = anchors
                .as_ref()
                .ok_or_else(|| perr("data row before '# anchors=' header".into()))?;
            let fields: Vec<&str> = trimmed.split(',').collect();
            let expected = 1 + STATE_DIM + anchors.len();
            if fields.len() != expected {
                return Err(perr(format!(
                    "expected {expected} fields, found {}",
                    fields.len()
                )));
            }
            let k: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad epoch index '{}'", fields[0])))?;
            if k != truth.len() + 1 {
                return Err(perr(format!("epoch index {k} out of sequence")));
            }
            let values = fields[1..]
                .iter()
                .map(|f| parse_f64(f, line))
                .collect::<Result<Vec<_>>>()?;
            truth.push(StateVector::try_from_slice(&values[..STATE_DIM]).map_err(|e| perr(e.to_string()))?);
            ranges.push(DVector::from_column_slice(&values[STATE_DIM..]));
        }

        let name = scheme_name.ok_or(Error::Parse {
            line: 0,
            message: "missing '# scheme=' header".into(),
        })?;
        let anchors = anchors.ok_or(Error::Parse {
            line: 0,
            message: "missing '# anchors=' header".into(),
        })?;
        let mut scheme = DataScheme::named(name);
        scheme.anchor_count = anchors.len();
        scheme.anchor_radius = anchors.iter().map(|a| a.norm()).fold(0.0, f64::max);
        scheme.epochs = truth.len();
        scheme.dt = dt;
        scheme.omega = omega;
        if let Some(n) = noise {
            scheme.noise = n;
        }
        let ds = Dataset {
            scheme,
            seed: seed.ok_or(Error::Parse {
                line: 0,
                message: "missing '# seed=' header".into(),
            })?,
            anchors,
            truth,
            ranges,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{}'", s.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value '{}'", s.trim()),
        });
    }
    Ok(v)
}

/// Deterministic in `(scheme, seed)`. Noise is drawn epoch-major, anchor-minor.
pub fn generate_dataset(scheme: &DataScheme, seed: u64) -> Result<Dataset> {
    scheme.validate()?;
    let anchors = place_anchors(scheme.anchor_radius, scheme.anchor_count)?;
    let full = ucm_trajectory(
        Point::from(scheme.initial_pos),
        Point::from(scheme.initial_vel),
        scheme.omega,
        scheme.epochs + 1,
        scheme.dt,
    )?;
    let truth: Vec<StateVector> = full.into_iter().skip(1).collect();
    let mut rng = SeededRng::new(seed);
    let mut ranges = Vec::with_capacity(truth.len());
    for state in &truth {
        let mut r = toa_measure(&anchors, &state.position())?;
        for v in r.iter_mut() {
            *v += sample_noise(&scheme.noise, &mut rng);
        }
        ranges.push(r);
    }
    Ok(Dataset {
        scheme: scheme.clone(),
        seed,
        anchors,
        truth,
        ranges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_at_quarter_angles() {
        let a = place_anchors(100.0, 4).unwrap();
        let expected = [(100.0, 0.0), (0.0, 100.0), (-100.0, 0.0), (0.0, -100.0)];
        for (p, (x, y)) in a.iter().zip(expected) {
            assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12);
        }
        assert!(place_anchors(100.0, 2).is_err());
        assert!(place_anchors(0.0, 4).is_err());
    }

    #[test]
    fn named_scheme_geometry() {
        assert_eq!(DataScheme::named(SchemeName::NonlinearGaussian).anchor_radius, 105.0);
        assert_eq!(DataScheme::named(SchemeName::LinearNonGaussian).anchor_radius, 1000.0);
        assert_eq!(
            DataScheme::named(SchemeName::LinearNonGaussian).noise,
            NoiseModel::default_gmm()
        );
    }

    #[test]
    fn toa_measure_examples() {
        let r = toa_measure(&[Point::new(3.0, 4.0), Point::new(100.0, 0.0)], &Point::new(0.0, 0.0)).unwrap();
        assert_eq!(r[0], 5.0);
        assert_eq!(r[1], 100.0);
        let a = Point::new(10.0, -3.0);
        assert!(matches!(
            toa_measure(&[a], &(a + Point::new(1e-12, 0.0))),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn toa_jacobian_rows() {
        let s = StateVector::new(0.0, 0.0, 1.0, 1.0);
        let j = toa_jacobian(&[Point::new(3.0, 4.0)], &s).unwrap();
        assert_eq!(j.row(0).iter().copied().collect::<Vec<_>>(), vec![-0.6, -0.8, 0.0, 0.0]);
        let s = StateVector::new(7.0, 0.0, 0.0, 0.0);
        let j = toa_jacobian(&[Point::new(0.0, 0.0)], &s).unwrap();
        assert_eq!(j.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn toa_jacobian_matches_finite_differences() {
        let anchors = place_anchors(105.0, 4).unwrap();
        let s = StateVector::new(12.0, -40.0, 0.0, 0.0);
        let j = toa_jacobian(&anchors, &s).unwrap();
        let h = 1e-6;
        for col in 0..2 {
            let mut plus = s.as_array();
            let mut minus = s.as_array();
            plus[col] += h;
            minus[col] -= h;
            let rp = toa_measure(&anchors, &StateVector::try_from_slice(&plus).unwrap().position()).unwrap();
            let rm = toa_measure(&anchors, &StateVector::try_from_slice(&minus).unwrap().position()).unwrap();
            for row in 0..4 {
                assert!(((rp[row] - rm[row]) / (2.0 * h) - j[(row, col)]).abs() < 1e-8);
            }
        }
        for row in 0..4 {
            let n = (j[(row, 0)].powi(2) + j[(row, 1)].powi(2)).sqrt();
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ucm_default_radius() {
        let traj = ucm_trajectory(Point::new(200.0, -100.0), Point::new(5.0, 5.0), 0.05, 50, 1.0).unwrap();
        let center = ucm_center(Point::new(200.0, -100.0), Point::new(5.0, 5.0), 0.05);
        let expected = 50f64.sqrt() / 0.05;
        assert!((expected - 141.42).abs() < 0.01);
        for s in &traj {
            assert!(((s.position() - center).norm() - expected).abs() < 1e-9);
            assert!((s.velocity().norm() - 50f64.sqrt()).abs() < 1e-10);
        }
        assert_eq!(traj[0].as_array(), [200.0, -100.0, 5.0, 5.0]);
    }

    #[test]
    fn ucm_clockwise_keeps_initial_velocity() {
        let traj = ucm_trajectory(Point::new(0.0, -10.0), Point::new(2.0, 0.0), -0.2, 3, 1.0).unwrap();
        assert!((traj[0].vx() - 2.0).abs() < 1e-12 && traj[0].vy().abs() < 1e-12);
        let center = ucm_center(Point::new(0.0, -10.0), Point::new(2.0, 0.0), -0.2);
        assert!((center - Point::new(0.0, -20.0)).norm() < 1e-12);
    }

    #[test]
    fn ucm_rejects_zero_rate() {
        assert!(ucm_trajectory(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 0.0, 3, 1.0).is_err());
        assert!(ucm_trajectory(Point::new(0.0, 0.0), Point::new(0.0, 0.0), 0.1, 3, 1.0).is_err());
    }

    #[test]
    fn zero_std_noise_is_zero() {
        let mut rng = SeededRng::new(3);
        let m = NoiseModel::Gaussian { std: 0.0 };
        assert!((0..100).all(|_| sample_noise(&m, &mut rng) == 0.0));
    }

    #[test]
    fn identical_seeds_identical_draws() {
        let m = NoiseModel::default_gmm();
        let mut a = SeededRng::new(77);
        let mut b = SeededRng::new(77);
        let xs: Vec<f64> = (0..1000).map(|_| sample_noise(&m, &mut a)).collect();
        let ys: Vec<f64> = (0..1000).map(|_| sample_noise(&m, &mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn gaussian_consumes_two_uniforms_gmm_three() {
        let mut a = SeededRng::new(5);
        let mut b = SeededRng::new(5);
        sample_noise(&NoiseModel::Gaussian { std: 1.0 }, &mut a);
        b.uniform();
        b.uniform();
        assert_eq!(a.uniform(), b.uniform());

        let mut a = SeededRng::new(5);
        let mut b = SeededRng::new(5);
        sample_noise(&NoiseModel::default_gmm(), &mut a);
        for _ in 0..3 {
            b.uniform();
        }
        assert_eq!(a.uniform(), b.uniform());
    }

    #[test]
    fn gmm_validation() {
        let bad = NoiseModel::Gmm {
            weights: vec![0.5, 0.4],
            stds: vec![1.0, 2.0],
        };
        assert!(bad.validate().is_err());
        let bad = NoiseModel::Gmm {
            weights: vec![0.5, 0.5],
            stds: vec![1.0, 0.0],
        };
        assert!(bad.validate().is_err());
        assert!((NoiseModel::default_gmm().total_std() - 20.008f64.sqrt()).abs() < 1e-12);
        assert_eq!(NoiseModel::default_gmm().nominal_std(), 0.1);
    }

    #[test]
    fn noiseless_dataset_has_exact_ranges() {
        let scheme = DataScheme::named(SchemeName::NonlinearGaussian).with_noise(NoiseModel::Gaussian { std: 0.0 });
        let ds = generate_dataset(&scheme, 1).unwrap();
        for (s, r) in ds.truth.iter().zip(&ds.ranges) {
            assert_eq!(*r, toa_measure(&ds.anchors, &s.position()).unwrap());
        }
    }

    #[test]
    fn nlng_seed_42_shape() {
        let ds = generate_dataset(&DataScheme::named(SchemeName::NonlinearNonGaussian), 42).unwrap();
        assert_eq!(ds.epochs(), 100);
        assert_eq!(ds.anchors.len(), 4);
        assert!(ds.anchors.iter().all(|a| (a.norm() - 105.0).abs() < 1e-12));
        assert!(matches!(ds.scheme.noise, NoiseModel::Gmm { .. }));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ds = generate_dataset(&DataScheme::named(SchemeName::LinearNonGaussian).with_epochs(7), 9).unwrap();
        let back = Dataset::from_csv(&ds.to_csv()).unwrap();
        assert_eq!(back.truth, ds.truth);
        assert_eq!(back.ranges, ds.ranges);
        assert_eq!(back.anchors, ds.anchors);
        assert_eq!(back.to_csv(), ds.to_csv());
    }

    #[test]
    fn csv_errors_have_line_numbers() {
        let ds = generate_dataset(&DataScheme::named(SchemeName::LinearGaussian).with_epochs(3), 1).unwrap();
        let mut lines: Vec<String> = ds.to_csv().lines().map(String::from).collect();
        let n = lines.len();
        lines[n - 2] = lines[n - 2].replacen(',', ",abc,", 1);
        let err = Dataset::from_csv(&lines.join("\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, n - 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn scheme_names_parse() {
        for n in SchemeName::ALL {
            assert_eq!(n.as_str().parse::<SchemeName>().unwrap(), n);
        }
        assert!("nl+ng".parse::<SchemeName>().is_ok());
        let err = "XX".parse::<SchemeName>().unwrap_err().to_string();
        assert!(err.contains("NL+NG"));
    }
}
