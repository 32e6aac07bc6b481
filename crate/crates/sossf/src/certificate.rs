use crate::model::PlantModel;
use crate::SfError;
use polyalg::{PolyRecord, Polynomial, VarSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Dissipation rate d(x) = lambda(x) (V(x) + V0).
#[derive(Debug, Clone)]
pub struct DissipationSpec {
    pub lambda: Polynomial,
    pub v0: f64,
}

impl DissipationSpec {
    pub fn d(&self, v: &Polynomial) -> Result<Polynomial, SfError> {
        let shifted = v.add(&Polynomial::constant(v.varset().clone(), self.v0))?;
        Ok(self.lambda.mul(&shifted)?)
    }

    pub fn eval(&self, v: &Polynomial, x: &[f64]) -> Result<f64, SfError> {
        Ok(self.lambda.eval(x)? * (v.eval(x)? + self.v0))
    }
}

/// Synthesis output: the CLF, the barriers, the rational compatibility
/// controller p/s, the dissipation parameters, slack polynomials for the
/// runtime QCQP and provenance metadata.
#[derive(Debug, Clone)]
pub struct SafetyCertificate {
    pub v: Polynomial,
    pub b: Vec<Polynomial>,
    pub p: Vec<Polynomial>,
    pub s: Polynomial,
    pub dissipation: DissipationSpec,
    /// Slack polynomials r_0 .. r_t; filled by the slack synthesis.
    pub r: Vec<Polynomial>,
    /// Archive of multiplier polynomials by row label.
    pub multipliers: BTreeMap<String, Polynomial>,
    pub degrees: BTreeMap<String, u32>,
    pub meta: CertMeta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CertMeta {
    pub seed: u64,
    pub init_iterations: usize,
    pub main_iterations: usize,
    pub rho_history: Vec<f64>,
    pub trace_history: Vec<f64>,
    pub margins: Vec<f64>,
    /// Searched-variable counts of the four SDP shapes
    /// (init part 1, init part 2, main part 1, main part 2).
    pub sdp_variables: [usize; 4],
    pub epsilon_s: f64,
}

impl SafetyCertificate {
    pub fn varset(&self) -> &Arc<VarSet> {
        self.v.varset()
    }

    pub fn t(&self) -> usize {
        self.b.len()
    }

    /// B(x) = max_i B_i(x).
    pub fn b_max(&self, x: &[f64]) -> Result<f64, SfError> {
        let mut worst = f64::NEG_INFINITY;
        for bi in &self.b {
            worst = worst.max(bi.eval(x)?);
        }
        Ok(worst)
    }

    pub fn in_safe(&self, x: &[f64], tol: f64) -> bool {
        self.b_max(x).map(|v| v <= tol).unwrap_or(false)
    }

    pub fn in_nominal(&self, x: &[f64], tol: f64) -> bool {
        self.v.eval(x).map(|v| v <= tol).unwrap_or(false)
    }

    /// u_sos(x) = p(x) / s(x).
    pub fn eval_u_sos(&self, x: &[f64]) -> Result<Vec<f64>, SfError> {
        let s = self.s.eval(x)?;
        self.p
            .iter()
            .map(|pi| Ok(pi.eval(x)? / s))
            .collect::<Result<Vec<_>, polyalg::PolyError>>()
            .map_err(Into::into)
    }
}

/// Versioned on-disk certificate ("cert-v1").
#[derive(Debug, Serialize, Deserialize)]
pub struct CertFile {
    pub schema: String,
    pub v: PolyRecord,
    pub b: Vec<PolyRecord>,
    pub p: Vec<PolyRecord>,
    pub s: PolyRecord,
    pub lambda: PolyRecord,
    pub v0: f64,
    #[serde(default)]
    pub r: Vec<PolyRecord>,
    pub multipliers: BTreeMap<String, PolyRecord>,
    pub degrees: BTreeMap<String, u32>,
    pub meta: CertMeta,
}

pub const CERT_SCHEMA: &str = "cert-v1";

impl SafetyCertificate {
    pub fn to_file(&self) -> CertFile {
        CertFile {
            schema: CERT_SCHEMA.to_string(),
            v: PolyRecord::from_poly(&self.v),
            b: self.b.iter().map(PolyRecord::from_poly).collect(),
            p: self.p.iter().map(PolyRecord::from_poly).collect(),
            s: PolyRecord::from_poly(&self.s),
            lambda: PolyRecord::from_poly(&self.dissipation.lambda),
            v0: self.dissipation.v0,
            r: self.r.iter().map(PolyRecord::from_poly).collect(),
            multipliers: self
                .multipliers
                .iter()
                .map(|(k, p)| (k.clone(), PolyRecord::from_poly(p)))
                .collect(),
            degrees: self.degrees.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_file(file: &CertFile) -> Result<Self, SfError> {
        if file.schema != CERT_SCHEMA {
            return Err(SfError::BadCertificate(format!(
                "unsupported schema `{}` (expected {CERT_SCHEMA})",
                file.schema
            )));
        }
        let vs = VarSet::new(file.v.vars.clone());
        let dec = |r: &PolyRecord| -> Result<Polynomial, SfError> {
            r.to_poly_in(&vs).map_err(Into::into)
        };
        Ok(SafetyCertificate {
            v: dec(&file.v)?,
            b: file.b.iter().map(dec).collect::<Result<_, _>>()?,
            p: file.p.iter().map(dec).collect::<Result<_, _>>()?,
            s: dec(&file.s)?,
            dissipation: DissipationSpec {
                lambda: dec(&file.lambda)?,
                v0: file.v0,
            },
            r: file.r.iter().map(dec).collect::<Result<_, _>>()?,
            multipliers: file
                .multipliers
                .iter()
                .map(|(k, r)| Ok((k.clone(), dec(r)?)))
                .collect::<Result<_, SfError>>()?,
            degrees: file.degrees.clone(),
            meta: file.meta.clone(),
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SfError> {
        let json = serde_json::to_string_pretty(&self.to_file())
            .map_err(|e| SfError::BadCertificate(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SfError> {
        let text = std::fs::read_to_string(path)?;
        let file: CertFile =
            serde_json::from_str(&text).map_err(|e| SfError::BadCertificate(e.to_string()))?;
        Self::from_file(&file)
    }

    /// Certificate varset must match the model's.
    pub fn check_model(&self, model: &PlantModel) -> Result<(), SfError> {
        if self.varset() != &model.varset {
            return Err(SfError::BadCertificate(
                "certificate variables do not match the model".to_string(),
            ));
        }
        if self.t() != model.t() {
            return Err(SfError::BadCertificate(format!(
                "certificate has {} barriers, model has {} allowable generators",
                self.t(),
                model.t()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cert_file_round_trip() {
        let vs = VarSet::new(vec!["x"]);
        let x2 = Polynomial::from_raw(vs.clone(), &[(&[2], 1.0)]);
        let cert = SafetyCertificate {
            v: x2.add(&Polynomial::constant(vs.clone(), -0.25)).unwrap(),
            b: vec![x2.add(&Polynomial::constant(vs.clone(), -1.0)).unwrap()],
            p: vec![Polynomial::from_raw(vs.clone(), &[(&[1], -1.0)])],
            s: Polynomial::constant(vs.clone(), 1.0),
            dissipation: DissipationSpec {
                lambda: Polynomial::constant(vs.clone(), 1.0),
                v0: 0.3,
            },
            r: vec![],
            multipliers: BTreeMap::new(),
            degrees: BTreeMap::new(),
            meta: CertMeta::default(),
        };
        let file = cert.to_file();
        let back = SafetyCertificate::from_file(&file).unwrap();
        assert_eq!(back.v, cert.v);
        assert_eq!(back.b[0], cert.b[0]);
        assert_eq!(back.dissipation.v0, 0.3);
    }

    #[test]
    fn wrong_schema_rejected() {
        let vs = VarSet::new(vec!["x"]);
        let p = PolyRecord::from_poly(&Polynomial::constant(vs, 1.0));
        let file = CertFile {
            schema: "cert-v0".to_string(),
            v: p.clone(),
            b: vec![],
            p: vec![],
            s: p.clone(),
            lambda: p,
            v0: 0.0,
            r: vec![],
            multipliers: BTreeMap::new(),
            degrees: BTreeMap::new(),
            meta: CertMeta::default(),
        };
        assert!(SafetyCertificate::from_file(&file).is_err());
    }
}
