//! Problem file format: one JSON document per problem.
//!
//! ```json
//! {
//!   "n": 2, "p_raw": 1,
//!   "Q": [2.0, 0.0, 0.0, 2.0], "q": [-2.0, -2.0],
//!   "G_raw": [1.0, 1.0], "g_raw": [0.0],
//!   "lbA": ["-inf"], "ubA": [1.0],
//!   "lb": [-10.0, -10.0], "ub": [10.0, 10.0]
//! }
//! ```
//!
//! Matrices are row-major flat arrays. Bounds accept numbers or the string
//! tokens `"inf"` / `"-inf"` (plus `"+inf"`). Serialization is deterministic:
//! fixed field order, shortest round-trip float formatting.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::DenseMatrix;
use crate::model::{BoxSet, RawQp};
use crate::SolverError;

/// A scalar bound that may be infinite; serialized as a number or an
/// `"inf"` / `"-inf"` token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound(pub f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Token(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) if v.is_nan() => Err(D::Error::custom("bound is NaN")),
            Repr::Num(v) => Ok(Bound(v)),
            Repr::Token(t) => match t.as_str() {
                "inf" | "+inf" => Ok(Bound(f64::INFINITY)),
                "-inf" => Ok(Bound(f64::NEG_INFINITY)),
                other => Err(D::Error::custom(format!(
                    "unrecognized bound token {other:?}"
                ))),
            },
        }
    }
}

/// On-disk problem document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub p_raw: usize,
    #[serde(rename = "Q")]
    pub q_mat: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(rename = "G_raw")]
    pub g_mat_raw: Vec<f64>,
    #[serde(rename = "g_raw")]
    pub g_vec_raw: Vec<f64>,
    #[serde(rename = "lbA")]
    pub lb_a: Vec<Bound>,
    #[serde(rename = "ubA")]
    pub ub_a: Vec<Bound>,
    pub lb: Vec<Bound>,
    pub ub: Vec<Bound>,
}

impl ProblemFile {
    pub fn from_raw(raw: &RawQp) -> Self {
        Self {
            n: raw.n(),
            p_raw: raw.p_raw(),
            q_mat: raw.q_mat.data().to_vec(),
            q: raw.q_vec.clone(),
            g_mat_raw: raw.a_mat.data().to_vec(),
            g_vec_raw: raw.a_vec.clone(),
            lb_a: raw.lb_a.iter().map(|&v| Bound(v)).collect(),
            ub_a: raw.ub_a.iter().map(|&v| Bound(v)).collect(),
            lb: raw.bounds.lb().iter().map(|&v| Bound(v)).collect(),
            ub: raw.bounds.ub().iter().map(|&v| Bound(v)).collect(),
        }
    }

    pub fn into_raw(self) -> Result<RawQp, SolverError> {
        let n = self.n;
        let p = self.p_raw;
        if self.q_mat.len() != n * n {
            return Err(SolverError::ParseError(format!(
                "Q has {} entries, expected {}",
                self.q_mat.len(),
                n * n
            )));
        }
        if self.q.len() != n {
            return Err(SolverError::ParseError(format!(
                "q has {} entries, expected {n}",
                self.q.len()
            )));
        }
        if self.g_mat_raw.len() != p * n {
            return Err(SolverError::ParseError(format!(
                "G_raw has {} entries, expected {}",
                self.g_mat_raw.len(),
                p * n
            )));
        }
        if self.g_vec_raw.len() != p || self.lb_a.len() != p || self.ub_a.len() != p {
            return Err(SolverError::ParseError(
                "constraint vectors have inconsistent lengths".into(),
            ));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err(SolverError::ParseError(
                "variable bounds have inconsistent lengths".into(),
            ));
        }
        let bounds = BoxSet::new(
            self.lb.iter().map(|b| b.0).collect(),
            self.ub.iter().map(|b| b.0).collect(),
        )?;
        Ok(RawQp {
            q_mat: DenseMatrix::new(n, n, self.q_mat),
            q_vec: self.q,
            a_mat: DenseMatrix::new(p, n, self.g_mat_raw),
            a_vec: self.g_vec_raw,
            lb_a: self.lb_a.iter().map(|b| b.0).collect(),
            ub_a: self.ub_a.iter().map(|b| b.0).collect(),
            bounds,
        })
    }
}

/// Parses a problem document.
pub fn from_json(text: &str) -> Result<RawQp, SolverError> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| SolverError::ParseError(e.to_string()))?;
    file.into_raw()
}

/// Serializes a problem deterministically.
pub fn to_json(raw: &RawQp) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_raw(raw))
        .expect("problem serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConeKind;

    const DOC: &str = r#"{
        "n": 2, "p_raw": 1,
        "Q": [2.0, 0.0, 0.0, 2.0], "q": [-2.0, -2.0],
        "G_raw": [1.0, 1.0], "g_raw": [0.0],
        "lbA": ["-inf"], "ubA": [1.0],
        "lb": [-10, -10], "ub": ["inf", 10]
    }"#;

    #[test]
    fn parses_tokens_and_numbers() {
        let raw = from_json(DOC).unwrap();
        assert_eq!(raw.n(), 2);
        assert_eq!(raw.lb_a, vec![f64::NEG_INFINITY]);
        assert_eq!(raw.ub_a, vec![1.0]);
        assert_eq!(raw.bounds.ub()[0], f64::INFINITY);
        let prob = raw.ingest().unwrap();
        assert_eq!(prob.p(), 1);
        assert_eq!(prob.cones(), &[ConeKind::NonPos]);
        assert_eq!(prob.g_vec(), &[-1.0]);
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let raw = from_json(DOC).unwrap();
        let once = to_json(&raw);
        let twice = to_json(&from_json(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn rejects_bad_token() {
        let doc = DOC.replace("\"-inf\"", "\"minus-infinity\"");
        assert!(from_json(&doc).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let doc = DOC.replace("\"Q\": [2.0, 0.0, 0.0, 2.0]", "\"Q\": [2.0, 0.0]");
        assert!(matches!(from_json(&doc), Err(SolverError::ParseError(_))));
    }
}
