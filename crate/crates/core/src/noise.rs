//! Noise laws: finite mixtures of Gaussian components and point atoms.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quadrature::{trapezoid, Quadrature};

const WEIGHT_TOL: f64 = 1e-12;
/// Minimum trapezoid grid for Fisher information.
const FISHER_GRID: usize = 4001;
/// Grid points per narrowest scale, so narrow components stay resolved.
const FISHER_POINTS_PER_SCALE: f64 = 25.0;
const FISHER_ENVELOPE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointAtom {
    pub weight: f64,
    pub location: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub name: String,
    pub gaussian_components: Vec<GaussianComponent>,
    pub atoms: Vec<PointAtom>,
}

impl NoiseModel {
    pub fn new(
        name: impl Into<String>,
        gaussian_components: Vec<GaussianComponent>,
        atoms: Vec<PointAtom>,
    ) -> Result<Self> {
        let model = NoiseModel {
            name: name.into(),
            gaussian_components,
            atoms,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(
            format!("normal:{mean},{sd}"),
            vec![GaussianComponent { weight: 1.0, mean, sd }],
            vec![],
        )
    }

    pub fn standard_normal() -> Self {
        Self::normal(0.0, 1.0).expect("valid")
    }

    /// `(1 − ε) N(0, 1) + ε δ_x`.
    pub fn contaminated_normal(eps: f64, x: f64) -> Result<Self> {
        Self::new(
            format!("cn:{eps},{x}"),
            vec![GaussianComponent {
                weight: 1.0 - eps,
                mean: 0.0,
                sd: 1.0,
            }],
            vec![PointAtom {
                weight: eps,
                location: x,
            }],
        )
    }

    pub fn point_mass(location: f64) -> Self {
        Self::new(
            format!("atom:1,{location}"),
            vec![],
            vec![PointAtom { weight: 1.0, location }],
        )
        .expect("valid")
    }

    fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for c in &self.gaussian_components {
            if !(c.weight >= 0.0 && c.sd > 0.0 && c.mean.is_finite() && c.sd.is_finite()) {
                return Err(Error::invalid(format!("bad Gaussian component {c:?}")));
            }
            total += c.weight;
        }
        for a in &self.atoms {
            if !(a.weight >= 0.0 && a.location.is_finite()) {
                return Err(Error::invalid(format!("bad atom {a:?}")));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn has_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.weight > 0.0)
    }

    /// `(weight, mean, sd)` of each component of `W + τZ`.
    pub fn smoothed_parts(&self, tau: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let gauss = self
            .gaussian_components
            .iter()
            .map(move |c| (c.weight, c.mean, c.sd.hypot(tau)));
        let atoms = self.atoms.iter().map(move |a| (a.weight, a.location, tau));
        gauss.chain(atoms).filter(|(w, _, _)| *w > 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.smoothed_parts(0.0).map(|(w, m, _)| w * m).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.smoothed_parts(0.0).map(|(w, m, s)| w * (m * m + s * s)).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let parts: Vec<(f64, f64, f64)> = self.smoothed_parts(0.0).collect();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = parts[parts.len() - 1];
                for &part in &parts {
                    acc += part.0;
                    if u < acc {
                        chosen = part;
                        break;
                    }
                }
                let (_, m, s) = chosen;
                if s > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s * z
                } else {
                    m
                }
            })
            .collect()
    }

    /// `E f(W + τZ)` with `Z ~ N(0,1)` independent of `W`. Gaussian
    /// components absorb `τ` into their scale; atoms become `N(a, τ²)`.
    /// `kinks` are the discontinuities of `f` or `f′`.
    pub fn smoothed_expectation(&self, tau: f64, f: impl Fn(f64) -> f64, kinks: &[f64], quad: &Quadrature) -> f64 {
        self.smoothed_parts(tau)
            .map(|(w, m, s)| w * quad.normal(m, s, &f, kinks))
            .sum()
    }

    /// Density and derivative of `W + τZ` at `x`.
    fn smoothed_density(&self, tau: f64, x: f64) -> (f64, f64) {
        const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
        self.smoothed_parts(tau).fold((0.0, 0.0), |(g, dg), (w, m, s)| {
            let u = (x - m) / s;
            let d = w * INV_SQRT_2PI * (-0.5 * u * u).exp() / s;
            (g + d, dg - d * u / s)
        })
    }

    /// Fisher information for location of `W + τZ`, `∫ (g′)²/g`, by the
    /// trapezoid rule over a ±10-scale envelope of every component.
    pub fn fisher_information_smoothed(&self, tau: f64) -> Result<f64> {
        if !(tau >= 0.0) {
            return Err(Error::invalid(format!("tau must be nonnegative, got {tau}")));
        }
        if tau == 0.0 && self.has_atoms() {
            return Err(Error::UndefinedFisher(format!(
                "{} has a point atom and no Gaussian smoothing",
                self.name
            )));
        }
        let parts: Vec<(f64, f64, f64)> = self.smoothed_parts(tau).collect();
        let lo = parts
            .iter()
            .map(|&(_, m, s)| m - FISHER_ENVELOPE * s)
            .fold(f64::INFINITY, f64::min);
        let hi = parts
            .iter()
            .map(|&(_, m, s)| m + FISHER_ENVELOPE * s)
            .fold(f64::NEG_INFINITY, f64::max);
        let narrowest = parts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        let points =
            (((hi - lo) / narrowest * FISHER_POINTS_PER_SCALE).ceil() as usize + 1).clamp(FISHER_GRID, 2_000_001);
        let rule = trapezoid(lo, hi, points)?;
        Ok(rule.apply(|x| {
            let (g, dg) = self.smoothed_density(tau, x);
            if g > 1e-300 {
                dg * dg / g
            } else {
                0.0
            }
        }))
    }

    /// `I(F_W)`; `+∞` when the law has an atom.
    pub fn fisher_information(&self) -> f64 {
        if self.has_atoms() {
            f64::INFINITY
        } else {
            self.fisher_information_smoothed(0.0).expect("no atoms")
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// One or more `+`-separated terms:
    /// `normal:mean,sd`, `cn:eps,x` (= `(1−eps) N(0,1) + eps δ_x`),
    /// `mix:w,mean,sd;w,mean,sd;...` and `atom:w,loc`.
    fn from_str(s: &str) -> Result<Self> {
        let input = s.trim();
        let mut comps = Vec::new();
        let mut atoms = Vec::new();
        for term in input.split('+') {
            let term = term.trim();
            let (name, args) = term
                .split_once(':')
                .ok_or_else(|| Error::parse("noise", input, format!("term {term:?} has no ':'")))?;
            let groups = args
                .split(';')
                .filter(|g| !g.trim().is_empty())
                .map(|g| {
                    g.split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<f64>, _>>()
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse("noise", input, e.to_string()))?;
            let bad = |what: &str| Error::parse("noise", input, format!("{what} in term {term:?}"));
            match (name.trim().to_ascii_lowercase().as_str(), groups.as_slice()) {
                ("normal", [g]) if g.len() == 2 => comps.push(GaussianComponent {
                    weight: 1.0,
                    mean: g[0],
                    sd: g[1],
                }),
                ("cn", [g]) if g.len() == 2 => {
                    comps.push(GaussianComponent {
                        weight: 1.0 - g[0],
                        mean: 0.0,
                        sd: 1.0,
                    });
                    atoms.push(PointAtom {
                        weight: g[0],
                        location: g[1],
                    });
                }
                ("mix", gs) if !gs.is_empty() && gs.iter().all(|g| g.len() == 3) => {
                    comps.extend(gs.iter().map(|g| GaussianComponent {
                        weight: g[0],
                        mean: g[1],
                        sd: g[2],
                    }))
                }
                ("atom", [g]) if g.len() == 2 => atoms.push(PointAtom {
                    weight: g[0],
                    location: g[1],
                }),
                ("normal" | "cn" | "atom", _) => return Err(bad("expected two numbers")),
                ("mix", _) => return Err(bad("expected w,mean,sd groups")),
                _ => return Err(bad("unknown distribution")),
            }
        }
        NoiseModel::new(input, comps, atoms).map_err(|e| Error::parse("noise", input, e.to_string()))
    }
}
