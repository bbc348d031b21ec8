//! Worst-case relative improvement (WCRI) and table / plot-data emission.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::{quartile_curves, RunEnsemble};
use crate::error::{Error, Result};
use crate::optimizer::{SelectionKind, Variant};
use crate::stats::median;

/// Pointwise maximum of quartile curve `k` over `ensembles`.
pub fn worst_case_aggregate(ensembles: &[&RunEnsemble], k: usize) -> Result<Vec<f64>> {
    if k > 4 {
        return Err(Error::InvalidInput(format!("quartile index {k} outside 0..=4")));
    }
    let first = ensembles.first().ok_or_else(|| Error::InvalidInput("no ensembles to aggregate".into()))?;
    let mut out = vec![f64::NEG_INFINITY; first.iterations];
    for e in ensembles {
        if e.iterations != first.iterations {
            return Err(Error::DimensionMismatch { expected: first.iterations, found: e.iterations });
        }
        let q = quartile_curves(e)?;
        for (o, v) in out.iter_mut().zip(&q[k]) {
            *o = o.max(*v);
        }
    }
    Ok(out)
}

/// `1 − median(w′/w)` in percent, for curves shifted down by `offset`.
pub fn wcri_from_curves(reference: &[f64], challenger: &[f64], offset: f64) -> Result<f64> {
    if reference.len() != challenger.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), found: challenger.len() });
    }
    if reference.is_empty() {
        return Err(Error::InvalidInput("empty curves".into()));
    }
    let mut ratios = Vec::with_capacity(reference.len());
    for (i, (w, wp)) in reference.iter().zip(challenger).enumerate() {
        let denom = w - offset;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::IllDefinedRatio { iteration: i + 1 });
        }
        ratios.push((wp - offset) / denom);
    }
    Ok((1.0 - median(&ratios)) * 100.0)
}

/// WCRI of `challenger` against `reference` at quartile `k`.
pub fn wcri(reference: &[&RunEnsemble], challenger: &[&RunEnsemble], k: usize, offset: f64) -> Result<f64> {
    let w = worst_case_aggregate(reference, k)?;
    let wp = worst_case_aggregate(challenger, k)?;
    wcri_from_curves(&w, &wp, offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Adaptivity {
    None,
    Ada,
    IAda,
}

impl Adaptivity {
    pub fn of(variant: Variant) -> Self {
        if !variant.is_adaptive() {
            Adaptivity::None
        } else if variant.uses_es_filter() {
            Adaptivity::IAda
        } else {
            Adaptivity::Ada
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Adaptivity::None => "No Ada",
            Adaptivity::Ada => "Ada",
            Adaptivity::IAda => "iAda",
        }
    }
}

/// Table row identity: objective, whether GPi initializes the model, the
/// adaptivity level, and the selection rule (absent without adaptivity).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub objective: String,
    pub gpi: bool,
    pub adaptivity: Adaptivity,
    pub selection: Option<SelectionKind>,
}

impl RowKey {
    pub fn of(e: &RunEnsemble) -> Self {
        let adaptivity = Adaptivity::of(e.variant);
        Self {
            objective: e.objective.clone(),
            gpi: e.variant.uses_gpi(),
            adaptivity,
            selection: (adaptivity != Adaptivity::None).then_some(e.selection),
        }
    }

    fn sel_rank(&self) -> u8 {
        match self.selection {
            None => 0,
            Some(SelectionKind::Categorical) => 1,
            Some(SelectionKind::Uniform) => 2,
        }
    }

    fn sort_cmp(&self, other: &Self) -> Ordering {
        (&self.objective, self.gpi, self.adaptivity, self.sel_rank())
            .cmp(&(&other.objective, other.gpi, other.adaptivity, other.sel_rank()))
    }

    fn sel_label(&self) -> &'static str {
        match self.selection {
            None => "-",
            Some(SelectionKind::Categorical) => "Cat",
            Some(SelectionKind::Uniform) => "U",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcriReport {
    pub key: RowKey,
    /// WCRI in percent for quartiles 0 through 4.
    pub values: [f64; 5],
    /// Shift subtracted from every curve before forming ratios.
    pub offset: f64,
    pub reference: Vec<String>,
    pub challenger: Vec<String>,
}

/// WCRI of `challenger` against `reference` for every quartile.
pub fn wcri_report(reference: &[&RunEnsemble], challenger: &[&RunEnsemble], offset: f64) -> Result<WcriReport> {
    let first = challenger.first().ok_or_else(|| Error::InvalidInput("empty challenger set".into()))?;
    let mut values = [0.0; 5];
    for (k, v) in values.iter_mut().enumerate() {
        *v = wcri(reference, challenger, k, offset)?;
    }
    Ok(WcriReport {
        key: RowKey::of(first),
        values,
        offset,
        reference: reference.iter().map(|e| e.label.clone()).collect(),
        challenger: challenger.iter().map(|e| e.label.clone()).collect(),
    })
}

/// One report per table row: the reference set against itself, and each
/// group of challengers sharing a [`RowKey`], per objective. Each objective's
/// curves are shifted by its recorded lower bound.
pub fn wcri_table(reference: &[RunEnsemble], challengers: &[RunEnsemble]) -> Result<Vec<WcriReport>> {
    let mut objectives: Vec<&str> = reference.iter().map(|e| e.objective.as_str()).collect();
    objectives.sort_unstable();
    objectives.dedup();
    let mut reports = Vec::new();
    for obj in objectives {
        let refs: Vec<&RunEnsemble> = reference.iter().filter(|e| e.objective == obj).collect();
        let offset = refs[0].lower_bound;
        if refs.iter().any(|e| e.lower_bound != offset) {
            return Err(Error::InvalidInput(format!("reference ensembles for {obj} disagree on the lower bound")));
        }
        let mut self_row = wcri_report(&refs, &refs, offset)?;
        self_row.key = RowKey { objective: obj.to_string(), gpi: false, adaptivity: Adaptivity::None, selection: None };
        reports.push(self_row);

        let mut groups: Vec<(RowKey, Vec<&RunEnsemble>)> = Vec::new();
        for e in challengers.iter().filter(|e| e.objective == obj) {
            let key = RowKey::of(e);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(e),
                None => groups.push((key, vec![e])),
            }
        }
        for (_, members) in groups {
            reports.push(wcri_report(&refs, &members, offset)?);
        }
    }
    reports.sort_by(|a, b| a.key.sort_cmp(&b.key));
    Ok(reports)
}

const TABLE_HEADER: [&str; 9] = ["objective", "model_init", "adaptivity", "sel", "Q0", "Q1", "Q2", "Q3", "Q4"];

fn one_decimal(v: f64) -> String {
    let s = format!("{v:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

/// Delimited WCRI table, one row per report, percentages to one decimal.
pub fn emit_table(reports: &[WcriReport], delimiter: char) -> String {
    let d = delimiter.to_string();
    let mut out = TABLE_HEADER.join(&d);
    out.push('\n');
    for r in reports {
        let mut fields = vec![
            r.key.objective.clone(),
            if r.key.gpi { "GPi" } else { "-" }.to_string(),
            r.key.adaptivity.label().to_string(),
            r.key.sel_label().to_string(),
        ];
        fields.extend(r.values.iter().map(|&v| one_decimal(v)));
        out.push_str(&fields.join(&d));
        out.push('\n');
    }
    out
}

/// A parsed row of [`emit_table`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub key: RowKey,
    pub values: [f64; 5],
}

pub fn parse_table(text: &str, delimiter: char) -> Result<Vec<TableRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(delimiter).collect();
    if header != TABLE_HEADER {
        return Err(Error::Parse("unexpected table header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(delimiter).collect();
            if f.len() != TABLE_HEADER.len() {
                return Err(Error::Parse(format!("bad table row `{line}`")));
            }
            let adaptivity = match f[2] {
                "No Ada" => Adaptivity::None,
                "Ada" => Adaptivity::Ada,
                "iAda" => Adaptivity::IAda,
                other => return Err(Error::Parse(format!("unknown adaptivity `{other}`"))),
            };
            let selection = match f[3] {
                "-" => None,
                "Cat" => Some(SelectionKind::Categorical),
                "U" => Some(SelectionKind::Uniform),
                other => return Err(Error::Parse(format!("unknown selection `{other}`"))),
            };
            let mut values = [0.0; 5];
            for (v, s) in values.iter_mut().zip(&f[4..]) {
                *v = s.parse().map_err(|_| Error::Parse(format!("bad value `{s}`")))?;
            }
            Ok(TableRow {
                key: RowKey { objective: f[0].to_string(), gpi: f[1] == "GPi", adaptivity, selection },
                values,
            })
        })
        .collect()
}

/// Plot-ready quartile series: one row per ensemble and iteration. The
/// `gpi_events` column counts runs that re-initialized the surrogate at that
/// iteration and is left empty for variants without GPi.
pub fn emit_history_plotdata(ensembles: &[RunEnsemble], delimiter: char) -> Result<String> {
    let d = delimiter;
    let mut out = ["ensemble", "objective", "iteration", "q0", "q1", "q2", "q3", "q4", "gpi_events"].join(&d.to_string());
    out.push('\n');
    for e in ensembles {
        let q = quartile_curves(e)?;
        let events = e.gpi_event_counts();
        for i in 0..e.iterations {
            let _ = write!(out, "{}{d}{}{d}{}", e.label, e.objective, i + 1);
            for curve in &q {
                let _ = write!(out, "{d}{:?}", curve[i]);
            }
            out.push(d);
            if e.variant.uses_gpi() {
                let _ = write!(out, "{}", events[i]);
            }
            out.push('\n');
        }
    }
    Ok(out)
}
