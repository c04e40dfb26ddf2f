//! Plain-text model files (see `docs/dsl.md` for the format reference).
//!
//! A file is a sequence of `[section]` blocks. A system is given either
//! explicitly via `[drift]` / `[input j]` (one component expression per
//! state), or mechanically via `[lagrangian]`. Parameters from `[params]` are
//! constants and are substituted into every expression at load time.

use super::{CFieldAnsatz, ModelError, SystemModel};
use crate::expr::{Expr, ExprDag};
use crate::geom::VectorField;
use std::collections::BTreeMap;
use std::fmt::Write as _;

struct Section {
    line: usize,
    header: Vec<String>,
    body: Vec<(usize, String)>,
}

fn syntax(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>, ModelError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| syntax(line, "unterminated section header"))?;
            let header: Vec<String> = inner.split_whitespace().map(str::to_string).collect();
            if header.is_empty() {
                return Err(syntax(line, "empty section header"));
            }
            sections.push(Section {
                line,
                header,
                body: Vec::new(),
            });
        } else {
            match sections.last_mut() {
                Some(s) => s.body.push((line, content.to_string())),
                None => return Err(syntax(line, "content before first section")),
            }
        }
    }
    Ok(sections)
}

fn key_value(line: usize, src: &str) -> Result<(String, String), ModelError> {
    let Some(eq) = src.find('=') else {
        return Err(syntax(line, "expected `key = value`"));
    };
    let key = src[..eq].trim();
    let val = src[eq + 1..].trim();
    if key.is_empty() || val.is_empty() {
        return Err(syntax(line, "expected `key = value`"));
    }
    Ok((key.to_string(), val.to_string()))
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Sections indexed by a trailing number, e.g. `[input 2]`; collects them and
/// checks the indices form 1..=k.
struct Indexed<'a> {
    what: &'a str,
    entries: BTreeMap<usize, (usize, Vec<(usize, String)>)>,
}

impl<'a> Indexed<'a> {
    fn new(what: &'a str) -> Self {
        Indexed {
            what,
            entries: BTreeMap::new(),
        }
    }

    fn insert(&mut self, sec: Section, idx_token: &str) -> Result<(), ModelError> {
        let idx: usize = idx_token
            .parse()
            .map_err(|_| syntax(sec.line, format!("bad {} index `{idx_token}`", self.what)))?;
        if idx == 0 {
            return Err(syntax(sec.line, format!("{} indices start at 1", self.what)));
        }
        if self.entries.insert(idx, (sec.line, sec.body)).is_some() {
            return Err(ModelError::DuplicateSection {
                line: sec.line,
                name: format!("{} {idx}", self.what),
            });
        }
        Ok(())
    }

    fn into_contiguous(self) -> Result<Vec<(usize, Vec<(usize, String)>)>, ModelError> {
        let k = self.entries.len();
        if let Some((&max, _)) = self.entries.iter().next_back() {
            if max != k {
                return Err(ModelError::MissingSection(format!("{} {}", self.what, {
                    (1..=max)
                        .find(|i| !self.entries.contains_key(i))
                        .unwrap_or(max)
                })));
            }
        }
        Ok(self.entries.into_values().collect())
    }
}

struct Loader {
    dag: ExprDag,
    params: Vec<(Expr, Expr)>,
    scope: Vec<String>,
}

impl Loader {
    /// Parse an expression over the state scope and fold in parameters.
    fn expr(&self, line: usize, src: &str) -> Result<Expr, ModelError> {
        let e = self
            .dag
            .parse_closed(src, &self.scope)
            .map_err(|err| ModelError::Expr { line, err })?;
        Ok(e.subst(&self.params))
    }

    fn expr_lines(&self, body: &[(usize, String)]) -> Result<Vec<Expr>, ModelError> {
        body.iter().map(|(l, s)| self.expr(*l, s)).collect()
    }

    /// Comma-separated expressions, possibly spread over several lines.
    fn expr_list(&self, line: usize, body: &[(usize, String)]) -> Result<Vec<Expr>, ModelError> {
        let mut out = Vec::new();
        for (l, joined) in body {
            for piece in joined.split(',') {
                let piece = piece.trim();
                if piece.is_empty() {
                    return Err(syntax(*l, "empty entry in expression list"));
                }
                out.push(self.expr(*l, piece)?);
            }
        }
        if out.is_empty() {
            return Err(syntax(line, "expected at least one expression"));
        }
        Ok(out)
    }
}

pub fn load_model(text: &str) -> Result<SystemModel, ModelError> {
    let dag = ExprDag::new();
    let mut name = String::new();
    let mut state_names: Option<(usize, Vec<String>)> = None;
    let mut params_raw: Vec<(usize, String, String)> = Vec::new();
    let mut domain_raw: Vec<(usize, String, String)> = Vec::new();
    let mut drift_raw: Option<Section> = None;
    let mut inputs_raw = Indexed::new("input");
    let mut lagr_raw: Option<Section> = None;
    let mut ansatz_raw = Indexed::new("ansatz c");
    let mut cfield_raw = Indexed::new("cfield");

    let mut seen: Vec<String> = Vec::new();
    for sec in split_sections(text)? {
        let tag = sec.header.join(" ");
        let line = sec.line;
        match sec.header[0].as_str() {
            "meta" => {
                mark_once(&mut seen, &tag, line)?;
                for (l, row) in &sec.body {
                    let (k, v) = key_value(*l, row)?;
                    if k == "name" {
                        name = v;
                    }
                }
            }
            "states" => {
                mark_once(&mut seen, &tag, line)?;
                let mut names = Vec::new();
                for (l, row) in &sec.body {
                    for tok in row.split_whitespace() {
                        if !is_identifier(tok) {
                            return Err(syntax(*l, format!("invalid state name `{tok}`")));
                        }
                        names.push(tok.to_string());
                    }
                }
                state_names = Some((sec.line, names));
            }
            "params" => {
                mark_once(&mut seen, &tag, line)?;
                for (l, row) in &sec.body {
                    let (k, v) = key_value(*l, row)?;
                    params_raw.push((*l, k, v));
                }
            }
            "domain" => {
                mark_once(&mut seen, &tag, line)?;
                for (l, row) in &sec.body {
                    let (k, v) = key_value(*l, row)?;
                    domain_raw.push((*l, k, v));
                }
            }
            "drift" => {
                mark_once(&mut seen, &tag, line)?;
                drift_raw = Some(sec);
            }
            "input" if sec.header.len() == 2 => {
                let idx = sec.header[1].clone();
                inputs_raw.insert(sec, &idx)?;
            }
            "lagrangian" => {
                mark_once(&mut seen, &tag, line)?;
                lagr_raw = Some(sec);
            }
            "ansatz" if sec.header.len() == 3 && sec.header[1] == "c" => {
                let idx = sec.header[2].clone();
                ansatz_raw.insert(sec, &idx)?;
            }
            "cfield" if sec.header.len() == 2 => {
                let idx = sec.header[1].clone();
                cfield_raw.insert(sec, &idx)?;
            }
            _ => return Err(syntax(sec.line, format!("unknown section [{tag}]"))),
        }
    }

    // Parameters are closed-form constants, available to every expression.
    let mut params = Vec::with_capacity(params_raw.len());
    let mut param_names = Vec::with_capacity(params_raw.len());
    for (l, k, v) in &params_raw {
        if !is_identifier(k) {
            return Err(syntax(*l, format!("invalid parameter name `{k}`")));
        }
        let val = dag
            .parse_closed(v, &[])
            .map_err(|err| ModelError::Expr { line: *l, err })?;
        if val.as_const().is_none() {
            return Err(syntax(*l, format!("parameter `{k}` is not a constant")));
        }
        params.push((dag.symbol(k), val));
        param_names.push(k.clone());
    }

    let inputs_raw = inputs_raw.into_contiguous()?;
    let has_explicit = drift_raw.is_some() || !inputs_raw.is_empty();
    if has_explicit && lagr_raw.is_some() {
        return Err(syntax(
            lagr_raw.unwrap().line,
            "[lagrangian] cannot be combined with [drift]/[input]",
        ));
    }
    if !has_explicit && lagr_raw.is_none() {
        return Err(ModelError::MissingSection("drift".into()));
    }

    let model = if let Some(lagr) = lagr_raw {
        // Mechanical model: states are derived from the configuration list.
        if state_names.is_some() {
            return Err(syntax(
                lagr.line,
                "[states] is implied by [lagrangian]; remove it",
            ));
        }
        let mut q_names: Option<Vec<String>> = None;
        let mut t_src: Option<(usize, String)> = None;
        let mut v_src: Option<(usize, String)> = None;
        let mut forces = Indexed::new("force");
        for (l, row) in &lagr.body {
            let (k, v) = key_value(*l, row)?;
            match k.as_str() {
                "q" => {
                    let names: Vec<String> = v.split_whitespace().map(str::to_string).collect();
                    for nm in &names {
                        if !is_identifier(nm) {
                            return Err(syntax(*l, format!("invalid coordinate name `{nm}`")));
                        }
                    }
                    q_names = Some(names);
                }
                "T" => t_src = Some((*l, v)),
                "V" => v_src = Some((*l, v)),
                _ => match k.strip_prefix("force").map(str::trim) {
                    Some(ix) if !ix.is_empty() => {
                        forces.insert(
                            Section {
                                line: *l,
                                header: Vec::new(),
                                body: vec![(*l, v)],
                            },
                            ix,
                        )?;
                    }
                    _ => return Err(syntax(*l, format!("unknown lagrangian key `{k}`"))),
                },
            }
        }
        let q_names = q_names.ok_or_else(|| syntax(lagr.line, "missing `q = ...` line"))?;
        let (t_line, t_src) = t_src.ok_or_else(|| syntax(lagr.line, "missing `T = ...` line"))?;
        let (v_line, v_src) = v_src.ok_or_else(|| syntax(lagr.line, "missing `V = ...` line"))?;

        let v_names: Vec<String> = q_names.iter().map(|s| super::velocity_name(s)).collect();
        let mut scope: Vec<String> = q_names.iter().chain(&v_names).cloned().collect();
        check_name_clashes(&scope, &param_names, lagr.line)?;
        scope.extend(param_names.iter().cloned());

        let loader = Loader {
            dag: dag.clone(),
            params,
            scope,
        };
        let q: Vec<Expr> = q_names.iter().map(|s| dag.symbol(s)).collect();
        let kinetic = loader.expr(t_line, &t_src)?;
        let potential = loader.expr(v_line, &v_src)?;
        let mut force_vecs = Vec::new();
        for (line, body) in forces.into_contiguous()? {
            let f = loader.expr_list(line, &body)?;
            if f.len() != q.len() {
                return Err(ModelError::DimensionMismatch {
                    what: "generalized force",
                    expected: q.len(),
                    got: f.len(),
                });
            }
            force_vecs.push(f);
        }
        if force_vecs.is_empty() {
            return Err(syntax(lagr.line, "missing `force 1 = ...` line"));
        }
        let all_names: Vec<String> = q_names.iter().chain(&v_names).cloned().collect();
        let domain = resolve_domain(&all_names, &domain_raw)?;
        let mut model =
            SystemModel::from_lagrangian(&name, &dag, &q, &kinetic, &potential, &force_vecs, domain)?;
        model.ansatz = load_ansatz(&loader, ansatz_raw, cfield_raw, model.n())?;
        Ok::<SystemModel, ModelError>(model)
    } else {
        let (states_line, state_names) =
            state_names.ok_or_else(|| ModelError::MissingSection("states".into()))?;
        if state_names.is_empty() {
            return Err(syntax(states_line, "at least one state is required"));
        }
        check_name_clashes(&state_names, &param_names, states_line)?;
        let drift_sec = drift_raw.ok_or_else(|| ModelError::MissingSection("drift".into()))?;
        if inputs_raw.is_empty() {
            return Err(ModelError::MissingSection("input 1".into()));
        }
        let mut scope = state_names.clone();
        scope.extend(param_names.iter().cloned());
        let loader = Loader {
            dag: dag.clone(),
            params,
            scope,
        };
        let n = state_names.len();
        let drift_comps = loader.expr_lines(&drift_sec.body)?;
        if drift_comps.len() != n {
            return Err(ModelError::DimensionMismatch {
                what: "drift",
                expected: n,
                got: drift_comps.len(),
            });
        }
        let mut inputs = Vec::new();
        for (_line, body) in inputs_raw {
            let comps = loader.expr_lines(&body)?;
            if comps.len() != n {
                return Err(ModelError::DimensionMismatch {
                    what: "input field",
                    expected: n,
                    got: comps.len(),
                });
            }
            inputs.push(VectorField::new(comps));
        }
        let domain = resolve_domain(&state_names, &domain_raw)?;
        let states: Vec<Expr> = state_names.iter().map(|s| dag.symbol(s)).collect();
        let ansatz = load_ansatz(&loader, ansatz_raw, cfield_raw, n)?;
        Ok(SystemModel {
            name,
            dag,
            states,
            drift: VectorField::new(drift_comps),
            inputs,
            domain,
            ansatz,
            lagrangian: None,
        })
    }?;

    Ok(model)
}

fn mark_once(seen: &mut Vec<String>, tag: &str, line: usize) -> Result<(), ModelError> {
    if seen.iter().any(|t| t == tag) {
        return Err(ModelError::DuplicateSection {
            line,
            name: tag.to_string(),
        });
    }
    seen.push(tag.to_string());
    Ok(())
}

fn check_name_clashes(
    states: &[String],
    params: &[String],
    line: usize,
) -> Result<(), ModelError> {
    for (i, s) in states.iter().enumerate() {
        if states[..i].contains(s) {
            return Err(syntax(line, format!("duplicate state name `{s}`")));
        }
        if params.contains(s) {
            return Err(syntax(line, format!("`{s}` is both a state and a parameter")));
        }
    }
    Ok(())
}

fn resolve_domain(
    names: &[String],
    raw: &[(usize, String, String)],
) -> Result<Vec<(f64, f64)>, ModelError> {
    let mut default: Option<(f64, f64)> = None;
    let mut explicit: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (l, k, v) in raw {
        let nums: Vec<&str> = v.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(syntax(*l, "domain entries are `name = lo hi`"));
        }
        let lo: f64 = nums[0]
            .parse()
            .map_err(|_| syntax(*l, format!("bad number `{}`", nums[0])))?;
        let hi: f64 = nums[1]
            .parse()
            .map_err(|_| syntax(*l, format!("bad number `{}`", nums[1])))?;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(syntax(*l, "domain bounds must be finite with lo <= hi"));
        }
        if k == "*" {
            default = Some((lo, hi));
        } else {
            if !names.iter().any(|n| n == k) {
                return Err(syntax(*l, format!("domain entry for unknown state `{k}`")));
            }
            explicit.insert(k.as_str(), (lo, hi));
        }
    }
    names
        .iter()
        .map(|n| {
            explicit
                .get(n.as_str())
                .copied()
                .or(default)
                .ok_or_else(|| ModelError::MissingDomain(n.clone()))
        })
        .collect()
}

fn load_ansatz(
    loader: &Loader,
    alpha: Indexed<'_>,
    fields: Indexed<'_>,
    n: usize,
) -> Result<Option<CFieldAnsatz>, ModelError> {
    let alpha = alpha.into_contiguous()?;
    let fields = fields.into_contiguous()?;
    match (alpha.is_empty(), fields.is_empty()) {
        (true, true) => Ok(None),
        (false, false) => Err(syntax(
            fields[0].0,
            "[ansatz c i] and [cfield i] cannot be mixed",
        )),
        (false, true) => {
            let mut rows = Vec::new();
            let mut width = None;
            for (line, body) in alpha {
                let row = loader.expr_list(line, &body)?;
                if let Some(w) = width {
                    if row.len() != w {
                        return Err(ModelError::DimensionMismatch {
                            what: "ansatz row",
                            expected: w,
                            got: row.len(),
                        });
                    }
                } else {
                    width = Some(row.len());
                }
                rows.push(row);
            }
            Ok(Some(CFieldAnsatz::Alpha(rows)))
        }
        (true, false) => {
            let mut out = Vec::new();
            for (_, body) in fields {
                let comps = loader.expr_lines(&body)?;
                if comps.len() != n {
                    return Err(ModelError::DimensionMismatch {
                        what: "cfield",
                        expected: n,
                        got: comps.len(),
                    });
                }
                out.push(VectorField::new(comps));
            }
            Ok(Some(CFieldAnsatz::Fields(out)))
        }
    }
}

fn render_exprs(out: &mut String, comps: &[Expr]) -> Result<(), ModelError> {
    for c in comps {
        let src = c
            .to_source()
            .map_err(|_| ModelError::NotSerializable("expression contains a solve node"))?;
        let _ = writeln!(out, "{src}");
    }
    Ok(())
}

pub fn save_model(model: &SystemModel) -> Result<String, ModelError> {
    let mut out = String::new();
    if !model.name.is_empty() {
        let _ = writeln!(out, "[meta]\nname = {}\n", model.name);
    }
    let names = model.state_names();

    if let Some(lagr) = &model.lagrangian {
        let dag = &model.dag;
        let q_names: Vec<String> = lagr
            .q
            .iter()
            .map(|e| dag.symbol_name(e.as_symbol().unwrap()))
            .collect();
        let _ = writeln!(out, "[lagrangian]");
        let _ = writeln!(out, "q = {}", q_names.join(" "));
        let t = lagr
            .kinetic
            .to_source()
            .map_err(|_| ModelError::NotSerializable("kinetic energy contains a solve node"))?;
        let v = lagr
            .potential
            .to_source()
            .map_err(|_| ModelError::NotSerializable("potential contains a solve node"))?;
        let _ = writeln!(out, "T = {t}");
        let _ = writeln!(out, "V = {v}");
        for (j, f) in lagr.forces.iter().enumerate() {
            let cells: Result<Vec<String>, _> = f.iter().map(|e| e.to_source()).collect();
            let cells =
                cells.map_err(|_| ModelError::NotSerializable("force contains a solve node"))?;
            let _ = writeln!(out, "force {} = {}", j + 1, cells.join(", "));
        }
        out.push('\n');
    } else {
        let _ = writeln!(out, "[states]\n{}\n", names.join(" "));
        let _ = writeln!(out, "[drift]");
        render_exprs(&mut out, &model.drift.comps)?;
        out.push('\n');
        for (j, g) in model.inputs.iter().enumerate() {
            let _ = writeln!(out, "[input {}]", j + 1);
            render_exprs(&mut out, &g.comps)?;
            out.push('\n');
        }
    }

    let _ = writeln!(out, "[domain]");
    for (nm, (lo, hi)) in names.iter().zip(&model.domain) {
        let _ = writeln!(out, "{nm} = {lo} {hi}");
    }

    match &model.ansatz {
        None => {}
        Some(CFieldAnsatz::Alpha(rows)) => {
            for (i, row) in rows.iter().enumerate() {
                let cells: Result<Vec<String>, _> = row.iter().map(|e| e.to_source()).collect();
                let cells = cells
                    .map_err(|_| ModelError::NotSerializable("ansatz contains a solve node"))?;
                let _ = writeln!(out, "\n[ansatz c {}]\n{}", i + 1, cells.join(", "));
            }
        }
        Some(CFieldAnsatz::Fields(fs)) => {
            for (i, f) in fs.iter().enumerate() {
                let _ = writeln!(out, "\n[cfield {}]", i + 1);
                render_exprs(&mut out, &f.comps)?;
            }
        }
    }
    Ok(out)
}

impl SystemModel {
    /// Parse a model from its text-format source.
    pub fn load(text: &str) -> Result<Self, ModelError> {
        load_model(text)
    }

    /// Render the model back to text format. Lagrangian models are saved via
    /// their mechanical description (the derived fields contain solve nodes
    /// and have no closed-form source).
    pub fn save(&self) -> Result<String, ModelError> {
        save_model(self)
    }
}
