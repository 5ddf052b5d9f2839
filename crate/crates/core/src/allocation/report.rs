use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::MicroEuro;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Nash,
    Shapley,
    CoReference,
    ParReference,
    FixedRate,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nash => "nash",
            Scheme::Shapley => "shapley",
            Scheme::CoReference => "co_reference",
            Scheme::ParReference => "par_reference",
            Scheme::FixedRate => "fixed_rate",
        }
    }

    fn parse(name: &str) -> Option<Scheme> {
        [
            Scheme::Nash,
            Scheme::Shapley,
            Scheme::CoReference,
            Scheme::ParReference,
            Scheme::FixedRate,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeBills {
    pub scheme: Scheme,
    /// Linear grid fee (€/kWh), for fixed-rate schemes.
    pub rate: Option<f64>,
    pub bills: Vec<MicroEuro>,
}

impl SchemeBills {
    pub fn total(&self) -> MicroEuro {
        self.bills.iter().copied().sum()
    }
}

/// Member bills under every computed scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingReport {
    /// Member identifiers, in scenario order.
    pub members: Vec<String>,
    /// Total cost of the cooperative optimum.
    pub cooperative_total: MicroEuro,
    pub schemes: Vec<SchemeBills>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bills row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

const COOPERATIVE: &str = "cooperative";
const TOTAL: &str = "TOTAL";

impl BillingReport {
    pub fn get(&self, scheme: Scheme) -> Option<&SchemeBills> {
        self.schemes.iter().find(|b| b.scheme == scheme)
    }

    pub fn fixed_rates(&self) -> impl Iterator<Item = &SchemeBills> {
        self.schemes.iter().filter(|b| b.scheme == Scheme::FixedRate)
    }

    /// Percentage change of each bill in `bills` relative to the Nash bills.
    pub fn delta_vs_nash(&self, bills: &SchemeBills) -> Option<Vec<f64>> {
        let nash = self.get(Scheme::Nash)?;
        Some(
            bills
                .bills
                .iter()
                .zip(&nash.bills)
                .map(|(b, r)| {
                    if r.0 == 0 {
                        f64::NAN
                    } else {
                        100.0 * (b.0 - r.0) as f64 / r.0 as f64
                    }
                })
                .collect(),
        )
    }

    /// Long format, one row per member and scheme, preceded by the
    /// cooperative total. The delta column is derived and ignored on read.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scheme", "rate", "member", "bill_eur", "delta_vs_nash_pct"])?;
        out.write_record([COOPERATIVE, "", TOTAL, &self.cooperative_total.to_string(), ""])?;
        for sb in &self.schemes {
            let rate = sb.rate.map(|r| r.to_string()).unwrap_or_default();
            let deltas = match sb.scheme {
                Scheme::Nash => None,
                _ => self.delta_vs_nash(sb),
            };
            for (i, bill) in sb.bills.iter().enumerate() {
                let delta = deltas
                    .as_ref()
                    .map(|d| d[i])
                    .filter(|d| d.is_finite())
                    .map(|d| format!("{d:.4}"))
                    .unwrap_or_default();
                out.write_record([
                    sb.scheme.name(),
                    &rate,
                    &self.members[i],
                    &bill.to_string(),
                    &delta,
                ])?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<BillingReport, ReportError> {
        let mut input = csv::Reader::from_reader(r);
        let mut members: Vec<String> = Vec::new();
        let mut cooperative_total = None;
        let mut schemes: Vec<SchemeBills> = Vec::new();
        for (i, rec) in input.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let bad = |reason: String| ReportError::Malformed { row, reason };
            if rec.len() < 4 {
                return Err(bad(format!("expected 5 fields, found {}", rec.len())));
            }
            let bill: MicroEuro = rec[3].parse().map_err(|e| bad(format!("{e}")))?;
            if &rec[0] == COOPERATIVE {
                cooperative_total = Some(bill);
                continue;
            }
            let scheme = Scheme::parse(&rec[0]).ok_or_else(|| bad(format!("unknown scheme '{}'", &rec[0])))?;
            let rate = if rec[1].is_empty() {
                None
            } else {
                Some(rec[1].parse::<f64>().map_err(|e| bad(format!("rate: {e}")))?)
            };
            let member = rec[2].to_string();
            let same = schemes
                .last()
                .is_some_and(|l| l.scheme == scheme && l.rate == rate);
            if !same {
                schemes.push(SchemeBills {
                    scheme,
                    rate,
                    bills: Vec::new(),
                });
            }
            let first = schemes.len() == 1;
            let current = schemes.last_mut().expect("pushed above");
            let pos = current.bills.len();
            if first {
                members.push(member);
            } else if members.get(pos) != Some(&member) {
                return Err(bad(format!("member '{member}' out of order")));
            }
            current.bills.push(bill);
        }
        if let Some(b) = schemes.iter().find(|b| b.bills.len() != members.len()) {
            return Err(ReportError::Malformed {
                row: 0,
                reason: format!("scheme {} lists {} members", b.scheme.name(), b.bills.len()),
            });
        }
        Ok(BillingReport {
            members,
            cooperative_total: cooperative_total.ok_or(ReportError::Malformed {
                row: 0,
                reason: "missing cooperative total".into(),
            })?,
            schemes,
        })
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<BillingReport, ReportError> {
        Ok(serde_json::from_str(text)?)
    }
}
