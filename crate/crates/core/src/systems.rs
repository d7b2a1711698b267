//! Discrete-time point maps whose transfer operators are approximated.
//!
//! Three kinds of system are supported: closed-form maps (identity, doubling,
//! baker, circle rotation), the double-gyre vector field advanced with explicit
//! Euler steps, and velocity fields sampled on a regular lattice and
//! interpolated bilinearly.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Point};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default Euler time step for flow systems (dimensionless time units).
pub const DEFAULT_STEP: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    AnalyticMap,
    EulerFlow,
    GriddedFlow,
}

#[derive(Clone, Debug)]
enum Dynamics<S> {
    Identity,
    Doubling,
    Baker,
    Rotation(S),
    DoubleGyre,
    Gridded(GriddedVelocityField<S>),
}

/// An immutable dynamical system `x -> T(x)` on a box domain.
#[derive(Clone, Debug)]
pub struct SystemSpec<S> {
    name: String,
    params: Vec<S>,
    dynamics: Dynamics<S>,
    domain: Domain<S>,
    step: S,
    substeps: usize,
}

/// Serializable description of a system, written into matrix metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRecord {
    pub name: String,
    pub kind: SystemKind,
    pub params: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
}

/// Builds one of the built-in systems.
///
/// | name          | domain        | params                         |
/// |---------------|---------------|--------------------------------|
/// | `identity`    | `[0,1]^d`     | `[]` or `[d]` with `d` in {1,2} |
/// | `doubling`    | `[0,1]`       | `[]`                           |
/// | `baker`       | `[0,1]^2`     | `[]`                           |
/// | `rotation`    | `[0,1]`       | `[theta]`, `0 < theta < 1`      |
/// | `double-gyre` | `[0,2]x[0,1]` | `[]`, `[step]` or `[step, substeps]` |
pub fn make_builtin<S: Scalar>(name: &str, params: &[S]) -> Result<SystemSpec<S>> {
    let expect_len = |allowed: &[usize]| -> Result<()> {
        if allowed.contains(&params.len()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "`{name}` takes {allowed:?} parameters, got {}",
                params.len()
            )))
        }
    };
    let map = |dynamics, domain| SystemSpec {
        name: name.to_string(),
        params: params.to_vec(),
        dynamics,
        domain,
        step: S::one(),
        substeps: 1,
    };
    match name {
        "identity" => {
            expect_len(&[0, 1])?;
            let domain = match params.first().map(|d| d.to_f64_lossy()) {
                None => Domain::unit_interval(),
                Some(d) if d == 1.0 => Domain::unit_interval(),
                Some(d) if d == 2.0 => Domain::unit_square(),
                Some(d) => {
                    return Err(Error::InvalidParameter(format!(
                        "identity dimension must be 1 or 2, got {d}"
                    )))
                }
            };
            Ok(map(Dynamics::Identity, domain))
        }
        "doubling" => {
            expect_len(&[0])?;
            Ok(map(Dynamics::Doubling, Domain::unit_interval()))
        }
        "baker" => {
            expect_len(&[0])?;
            Ok(map(Dynamics::Baker, Domain::unit_square()))
        }
        "rotation" => {
            expect_len(&[1])?;
            let theta = params[0];
            if !(theta > S::zero() && theta < S::one()) {
                return Err(Error::InvalidParameter(format!(
                    "rotation angle must lie in (0, 1) as a fraction of the circle, got {theta}"
                )));
            }
            Ok(map(Dynamics::Rotation(theta), Domain::unit_interval()))
        }
        "double-gyre" => {
            expect_len(&[0, 1, 2])?;
            let step = params.first().copied().unwrap_or(S::lit(DEFAULT_STEP));
            let substeps = match params.get(1) {
                None => 1,
                Some(&s) => {
                    if s < S::one() || s.fract() != S::zero() {
                        return Err(Error::InvalidParameter(format!(
                            "substeps must be a positive integer, got {s}"
                        )));
                    }
                    s.to_usize().ok_or_else(|| {
                        Error::InvalidParameter(format!("substeps {s} out of range"))
                    })?
                }
            };
            let domain = Domain::rectangle([S::zero(); 2], [S::lit(2.0), S::one()])?;
            SystemSpec {
                name: name.to_string(),
                params: Vec::new(),
                dynamics: Dynamics::DoubleGyre,
                domain,
                step: S::one(),
                substeps: 1,
            }
            .with_step(step, substeps)
        }
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

/// Reads a gridded velocity CSV and wraps it as an Euler-integrated flow.
pub fn load_gridded_flow<S: Scalar>(
    path: impl AsRef<Path>,
    step: S,
    substeps: usize,
) -> Result<SystemSpec<S>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let field = GriddedVelocityField::from_reader(file).map_err(|e| match e {
        Error::MalformedField(reason) => Error::Format {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })?;
    SystemSpec::gridded(field, step, substeps)
}

impl<S: Scalar> SystemSpec<S> {
    /// Wraps a gridded field as a flow on the lattice hull.
    pub fn gridded(field: GriddedVelocityField<S>, step: S, substeps: usize) -> Result<Self> {
        let domain = field.hull();
        SystemSpec {
            name: "gridded-flow".to_string(),
            params: Vec::new(),
            dynamics: Dynamics::Gridded(field),
            domain,
            step: S::one(),
            substeps: 1,
        }
        .with_step(step, substeps)
    }

    /// Replaces the Euler step and sub-step count of a flow system.
    pub fn with_step(mut self, step: S, substeps: usize) -> Result<Self> {
        if self.kind() == SystemKind::AnalyticMap {
            return Err(Error::InvalidParameter(format!(
                "`{}` is a map; it has no time step",
                self.name
            )));
        }
        if !(step > S::zero() && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {step}"
            )));
        }
        if substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        self.step = step;
        self.substeps = substeps;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SystemKind {
        match self.dynamics {
            Dynamics::DoubleGyre => SystemKind::EulerFlow,
            Dynamics::Gridded(_) => SystemKind::GriddedFlow,
            _ => SystemKind::AnalyticMap,
        }
    }

    pub fn domain(&self) -> &Domain<S> {
        &self.domain
    }

    pub fn step(&self) -> Option<S> {
        (self.kind() != SystemKind::AnalyticMap).then_some(self.step)
    }

    pub fn substeps(&self) -> Option<usize> {
        (self.kind() != SystemKind::AnalyticMap).then_some(self.substeps)
    }

    pub fn record(&self) -> SystemRecord {
        SystemRecord {
            name: self.name.clone(),
            kind: self.kind(),
            params: self.params.iter().map(|p| p.to_f64_lossy()).collect(),
            step: self.step().map(Scalar::to_f64_lossy),
            substeps: self.substeps(),
        }
    }

    /// Velocity of a flow system at `x`; `None` for maps.
    pub fn velocity(&self, x: &Point<S>) -> Option<Point<S>> {
        match &self.dynamics {
            Dynamics::DoubleGyre => {
                let pi = S::PI();
                let (sx, cx) = (pi * x[0]).sin_cos();
                let (sy, cy) = (pi * x[1]).sin_cos();
                Some([-pi * sx * cy, pi * sy * cx])
            }
            Dynamics::Gridded(field) => Some(field.velocity(x)),
            _ => None,
        }
    }

    /// Applies the map once. Flow systems take `substeps` explicit Euler
    /// steps of size `step / substeps`; the result may leave the domain.
    pub fn apply(&self, x: &Point<S>) -> Result<Point<S>> {
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain {
                point: x[..self.domain.dim()]
                    .iter()
                    .map(|v| v.to_f64_lossy())
                    .collect(),
            });
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &Point<S>) -> Point<S> {
        let one = S::one();
        let two = S::lit(2.0);
        match &self.dynamics {
            Dynamics::Identity => *x,
            Dynamics::Doubling => [double_mod_one(x[0]).0, x[1]],
            Dynamics::Baker => {
                let (nx, fold) = double_mod_one(x[0]);
                [nx, (x[1] + fold) / two]
            }
            Dynamics::Rotation(theta) => {
                let y = x[0] + *theta;
                [if y >= one { y - one } else { y }, x[1]]
            }
            Dynamics::DoubleGyre | Dynamics::Gridded(_) => {
                let h = self.step / S::of_usize(self.substeps);
                let mut p = *x;
                for _ in 0..self.substeps {
                    let v = self.velocity(&p).expect("flow has a velocity");
                    p = [p[0] + h * v[0], p[1] + h * v[1]];
                }
                p
            }
        }
    }
}

/// `2x mod 1` on `[0, 1]`, keeping `x = 1` at `1`. Also returns the branch (0 or 1).
fn double_mod_one<S: Scalar>(x: S) -> (S, S) {
    let two = S::lit(2.0);
    let fold = (two * x).floor().min(S::one()).max(S::zero());
    (two * x - fold, fold)
}

/// Velocity samples on a regular node lattice, interpolated bilinearly.
#[derive(Clone, Debug)]
pub struct GriddedVelocityField<S> {
    xs: Vec<S>,
    ys: Vec<S>,
    // node (ix, iy) lives at iy * nx + ix
    u: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> GriddedVelocityField<S> {
    /// Builds a field from node coordinates and row-major (x fastest) samples.
    pub fn new(xs: Vec<S>, ys: Vec<S>, u: Vec<S>, v: Vec<S>) -> Result<Self> {
        let bad = |m: String| Err(Error::MalformedField(m));
        if xs.len() < 2 || ys.len() < 2 {
            return bad(format!(
                "lattice needs at least 2 nodes per axis, got {}x{}",
                xs.len(),
                ys.len()
            ));
        }
        let nodes = xs.len() * ys.len();
        if u.len() != nodes || v.len() != nodes {
            return bad(format!(
                "lattice has {nodes} nodes but u/v have {}/{} values",
                u.len(),
                v.len()
            ));
        }
        for (axis, coords) in [("x", &xs), ("y", &ys)] {
            check_regular(axis, coords)?;
        }
        if let Some(k) = u.iter().chain(&v).position(|w| !w.is_finite()) {
            return bad(format!("non-finite velocity at value {k}"));
        }
        Ok(Self { xs, ys, u, v })
    }

    /// Parses the `x,y,u,v` CSV schema: one row per node, x varying fastest.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let bad = |m: String| Error::MalformedField(m);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["x", "y", "u", "v"] {
            return Err(bad(format!("expected header x,y,u,v, got {}", header.join(","))));
        }
        let mut rows: Vec<[S; 4]> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
            if rec.len() != 4 {
                return Err(bad(format!("row {} has {} fields", line + 1, rec.len())));
            }
            let mut vals = [S::zero(); 4];
            for (k, field) in rec.iter().enumerate() {
                let parsed: f64 = field
                    .parse()
                    .map_err(|_| bad(format!("row {}: cannot parse `{field}`", line + 1)))?;
                if parsed.is_nan() {
                    return Err(bad(format!("row {}: NaN value", line + 1)));
                }
                vals[k] = S::lit(parsed);
            }
            rows.push(vals);
        }
        let Some(first) = rows.first() else {
            return Err(bad("no lattice nodes".into()));
        };
        let nx = rows.iter().take_while(|r| r[1] == first[1]).count();
        if nx < 2 || rows.len() % nx != 0 {
            return Err(bad(format!(
                "{} rows do not form a complete lattice with {nx} nodes per row",
                rows.len()
            )));
        }
        let ny = rows.len() / nx;
        let xs: Vec<S> = rows[..nx].iter().map(|r| r[0]).collect();
        let ys: Vec<S> = rows.iter().step_by(nx).map(|r| r[1]).collect();
        for (k, r) in rows.iter().enumerate() {
            let (ix, iy) = (k % nx, k / nx);
            if r[0] != xs[ix] || r[1] != ys[iy] {
                return Err(bad(format!(
                    "row {} at ({}, {}) breaks the row-major lattice order",
                    k + 1,
                    r[0],
                    r[1]
                )));
            }
        }
        debug_assert_eq!(ys.len(), ny);
        let u = rows.iter().map(|r| r[2]).collect();
        let v = rows.iter().map(|r| r[3]).collect();
        Self::new(xs, ys, u, v)
    }

    pub fn hull(&self) -> Domain<S> {
        Domain::rectangle(
            [self.xs[0], self.ys[0]],
            [*self.xs.last().unwrap(), *self.ys.last().unwrap()],
        )
        .expect("validated lattice has positive extent")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }

    /// Bilinear interpolation; query points are clamped to the lattice hull.
    pub fn velocity(&self, x: &Point<S>) -> Point<S> {
        let q = self.hull().clamp(x);
        let (ix, tx) = bracket(&self.xs, q[0]);
        let (iy, ty) = bracket(&self.ys, q[1]);
        let nx = self.xs.len();
        let one = S::one();
        let at = |field: &[S]| {
            let f00 = field[iy * nx + ix];
            let f10 = field[iy * nx + ix + 1];
            let f01 = field[(iy + 1) * nx + ix];
            let f11 = field[(iy + 1) * nx + ix + 1];
            (one - ty) * ((one - tx) * f00 + tx * f10) + ty * ((one - tx) * f01 + tx * f11)
        };
        [at(&self.u), at(&self.v)]
    }
}

/// Lower node index and fractional offset of `q` inside `coords`.
fn bracket<S: Scalar>(coords: &[S], q: S) -> (usize, S) {
    let k = coords.partition_point(|&c| c <= q).clamp(1, coords.len() - 1) - 1;
    let t = (q - coords[k]) / (coords[k + 1] - coords[k]);
    (k, t.max(S::zero()).min(S::one()))
}

fn check_regular<S: Scalar>(axis: &str, coords: &[S]) -> Result<()> {
    let h = coords[1] - coords[0];
    for w in coords.windows(2) {
        let d = w[1] - w[0];
        if !(d > S::zero()) {
            return Err(Error::MalformedField(format!(
                "{axis} coordinates must be strictly increasing"
            )));
        }
        if (d - h).abs() > S::lit(1e-6) * h.abs().max(S::one()) {
            return Err(Error::MalformedField(format!(
                "{axis} spacing is irregular ({d} vs {h})"
            )));
        }
    }
    Ok(())
}
