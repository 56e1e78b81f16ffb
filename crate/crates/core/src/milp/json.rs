//! Instance JSON: `{"name", "sense", "objective", "rows", "lower", "upper",
//! "integrality", "family"}` with `null` standing for an infinite bound.

use serde::{Deserialize, Serialize};

use super::{MilpError, MilpInstance, ObjSense, Row, RowOrigin, RowSense};

#[derive(Clone, Serialize, Deserialize)]
struct RowJson {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
    #[serde(default, skip_serializing_if = "is_le")]
    sense: RowSense,
}

fn is_le(s: &RowSense) -> bool {
    *s == RowSense::Le
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Serialize, Deserialize)]
pub(crate) struct InstanceJson {
    name: String,
    sense: ObjSense,
    #[serde(default, skip_serializing_if = "is_false")]
    negated: bool,
    objective: Vec<f64>,
    rows: Vec<RowJson>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    integrality: Vec<usize>,
    #[serde(default)]
    family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator_version: Option<u32>,
}

impl From<MilpInstance> for InstanceJson {
    fn from(i: MilpInstance) -> Self {
        InstanceJson {
            name: i.name,
            sense: i.sense,
            negated: i.negated,
            objective: i.objective,
            rows: i
                .rows
                .into_iter()
                .map(|r| RowJson {
                    coeffs: r.coeffs,
                    rhs: r.rhs,
                    sense: r.sense,
                })
                .collect(),
            lower: i
                .var_lower
                .into_iter()
                .map(|l| l.is_finite().then_some(l))
                .collect(),
            upper: i
                .var_upper
                .into_iter()
                .map(|u| u.is_finite().then_some(u))
                .collect(),
            integrality: i.integrality,
            family: i.family,
            generator_version: i.generator_version,
        }
    }
}

impl TryFrom<InstanceJson> for MilpInstance {
    type Error = MilpError;

    fn try_from(j: InstanceJson) -> Result<Self, MilpError> {
        let inst = MilpInstance {
            name: j.name,
            objective: j.objective,
            sense: j.sense,
            negated: j.negated,
            rows: j
                .rows
                .into_iter()
                .map(|r| Row {
                    coeffs: r.coeffs,
                    rhs: r.rhs,
                    sense: r.sense,
                    origin: RowOrigin::Original,
                })
                .collect(),
            var_lower: j
                .lower
                .into_iter()
                .map(|l| l.unwrap_or(f64::NEG_INFINITY))
                .collect(),
            var_upper: j
                .upper
                .into_iter()
                .map(|u| u.unwrap_or(f64::INFINITY))
                .collect(),
            integrality: j.integrality,
            family: j.family,
            generator_version: j.generator_version,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl Serialize for MilpInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        InstanceJson::from(self.clone()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MilpInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = InstanceJson::deserialize(d)?;
        MilpInstance::try_from(j).map_err(serde::de::Error::custom)
    }
}

pub fn read_json(text: &str) -> Result<MilpInstance, MilpError> {
    serde_json::from_str(text).map_err(|e| MilpError::ParseError {
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn write_json(instance: &MilpInstance) -> String {
    serde_json::to_string_pretty(instance).expect("instance serialization cannot fail")
}
