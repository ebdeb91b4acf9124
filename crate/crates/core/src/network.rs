//! Network data model: buses, branches, case files, and radial topology.
//!
//! A case is a radial (tree-shaped) feeder with exactly one swing bus.
//! Branch impedances are stored in ohms and converted to per-unit on the
//! case base (`z_base = base_kv^2 / base_mva`) by the solver. Two on-disk
//! encodings are accepted: a line-oriented text format (see [`NetworkCase::parse`])
//! and an equivalent JSON document with the same field names.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Role of a bus in the feeder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    /// Voltage reference; balances the system power residual.
    Swing,
    /// Constant-power (PQ) load bus.
    Load,
}

/// One bus of the feeder. Loads are non-negative demands in kW/kVar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub umin_pu: f64,
    pub umax_pu: f64,
}

/// One series branch (line segment) in ohms, with a thermal rating in kVA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub s_rated_kva: f64,
}

/// A validated-on-demand radial distribution case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_kv: f64,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

/// Everything that can go wrong while reading or validating a case.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid JSON case: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error reading case: {0}")]
    Io(#[from] std::io::Error),
    #[error("base_kv and base_mva must be positive finite numbers")]
    BadBase,
    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),
    #[error("duplicate branch id {0}")]
    DuplicateBranchId(usize),
    #[error("branch {branch} references unknown bus {bus}")]
    UnknownBus { branch: usize, bus: usize },
    #[error("branch {0} connects a bus to itself")]
    SelfLoop(usize),
    #[error("no swing bus defined")]
    NoSwing,
    #[error("more than one swing bus (ids {0} and {1})")]
    MultipleSwing(usize, usize),
    #[error("not radial: {buses} buses require {} branches, found {branches}", buses - 1)]
    NotRadial { buses: usize, branches: usize },
    #[error("bus {0} is not reachable from the swing bus")]
    Disconnected(usize),
    #[error("bus {bus}: {message}")]
    BadBus { bus: usize, message: String },
    #[error("branch {branch}: {message}")]
    BadBranch { branch: usize, message: String },
    #[error("case has no buses")]
    Empty,
}

/// Tree structure derived from a validated case.
///
/// All indices are positions into `case.buses` / `case.branches`, not
/// external ids. `order` lists bus indices root-first so that every parent
/// appears before its children; `parent[i]` gives the upstream bus and the
/// connecting branch for every non-swing bus.
#[derive(Debug, Clone)]
pub struct Topology {
    pub swing: usize,
    pub order: Vec<usize>,
    pub parent: Vec<Option<(usize, usize)>>,
    pub children: Vec<Vec<(usize, usize)>>,
    pub depth: Vec<usize>,
    index_of: HashMap<usize, usize>,
}

impl Topology {
    /// Position of an external bus id in `case.buses`, if present.
    pub fn index_of(&self, bus_id: usize) -> Option<usize> {
        self.index_of.get(&bus_id).copied()
    }

    /// Bus indices of the subtree rooted at `bus` (inclusive), in
    /// parent-before-child order.
    pub fn subtree(&self, bus: usize) -> Vec<usize> {
        let mut out = vec![bus];
        let mut head = 0;
        while head < out.len() {
            let b = out[head];
            head += 1;
            for &(child, _) in &self.children[b] {
                out.push(child);
            }
        }
        out
    }
}

impl NetworkCase {
    /// Parses either the text case format or a JSON document.
    ///
    /// Text format: a header line `base_kv=<f> base_mva=<f>`, then a `[bus]`
    /// section (`id kind p_kw q_kvar umin_pu umax_pu` per line) and a
    /// `[branch]` section (`id from to r_ohm x_ohm s_rated_kva`). `#` starts
    /// a comment. The parsed case is validated before being returned.
    pub fn parse(source: &str) -> Result<Self, CaseError> {
        let case = if source.trim_start().starts_with('{') {
            serde_json::from_str::<NetworkCase>(source)?
        } else {
            parse_text(source)?
        };
        case.topology()?;
        Ok(case)
    }

    /// Reads and parses a case file from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CaseError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// The bundled PG&E 69-bus radial test feeder (12.66 kV base).
    pub fn pge69() -> Self {
        Self::parse(include_str!("../data/pge69.case"))
            .expect("bundled 69-bus case must be valid")
    }

    /// Serializes to the text case format. `parse` of the output yields an
    /// identical case (round-trip identity).
    pub fn to_case_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "base_kv={} base_mva={}", self.base_kv, self.base_mva);
        let _ = writeln!(s, "[bus]");
        let _ = writeln!(s, "# id kind p_kw q_kvar umin_pu umax_pu");
        for b in &self.buses {
            let kind = match b.kind {
                BusKind::Swing => "swing",
                BusKind::Load => "load",
            };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                b.id, kind, b.p_kw, b.q_kvar, b.umin_pu, b.umax_pu
            );
        }
        let _ = writeln!(s, "[branch]");
        let _ = writeln!(s, "# id from to r_ohm x_ohm s_rated_kva");
        for br in &self.branches {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                br.id, br.from, br.to, br.r_ohm, br.x_ohm, br.s_rated_kva
            );
        }
        s
    }

    /// Base impedance in ohms: `base_kv^2 / base_mva`.
    pub fn z_base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Power base in kW (and kVA): `1000 * base_mva`.
    pub fn s_base_kw(&self) -> f64 {
        1000.0 * self.base_mva
    }

    /// Total demand over all buses as `(p_kw, q_kvar)`.
    pub fn total_load(&self) -> (f64, f64) {
        self.buses
            .iter()
            .fold((0.0, 0.0), |(p, q), b| (p + b.p_kw, q + b.q_kvar))
    }

    /// Validates all case invariants and builds the tree structure.
    ///
    /// Checks: positive bases, unique ids, exactly one swing bus, sane per-bus
    /// bounds and non-negative loads, non-negative impedances, positive
    /// ratings, `|branches| = |buses| - 1`, and reachability of every bus
    /// from the swing bus (together these guarantee a radial network).
    pub fn topology(&self) -> Result<Topology, CaseError> {
        if self.buses.is_empty() {
            return Err(CaseError::Empty);
        }
        if !(self.base_kv.is_finite() && self.base_kv > 0.0)
            || !(self.base_mva.is_finite() && self.base_mva > 0.0)
        {
            return Err(CaseError::BadBase);
        }

        let mut index_of = HashMap::with_capacity(self.buses.len());
        let mut swing: Option<usize> = None;
        for (i, bus) in self.buses.iter().enumerate() {
            if index_of.insert(bus.id, i).is_some() {
                return Err(CaseError::DuplicateBusId(bus.id));
            }
            if bus.kind == BusKind::Swing {
                if let Some(first) = swing {
                    return Err(CaseError::MultipleSwing(self.buses[first].id, bus.id));
                }
                swing = Some(i);
            }
            if !(bus.umin_pu > 0.0 && bus.umin_pu < bus.umax_pu) {
                return Err(CaseError::BadBus {
                    bus: bus.id,
                    message: format!(
                        "voltage bounds must satisfy 0 < umin < umax, got [{}, {}]",
                        bus.umin_pu, bus.umax_pu
                    ),
                });
            }
            if bus.p_kw < 0.0 || bus.q_kvar < 0.0 {
                return Err(CaseError::BadBus {
                    bus: bus.id,
                    message: "loads must be non-negative".into(),
                });
            }
        }
        let swing = swing.ok_or(CaseError::NoSwing)?;

        if self.branches.len() != self.buses.len() - 1 {
            return Err(CaseError::NotRadial {
                buses: self.buses.len(),
                branches: self.branches.len(),
            });
        }

        let n = self.buses.len();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut branch_ids = HashMap::with_capacity(self.branches.len());
        for (m, br) in self.branches.iter().enumerate() {
            if branch_ids.insert(br.id, m).is_some() {
                return Err(CaseError::DuplicateBranchId(br.id));
            }
            if br.from == br.to {
                return Err(CaseError::SelfLoop(br.id));
            }
            let fi = *index_of
                .get(&br.from)
                .ok_or(CaseError::UnknownBus { branch: br.id, bus: br.from })?;
            let ti = *index_of
                .get(&br.to)
                .ok_or(CaseError::UnknownBus { branch: br.id, bus: br.to })?;
            if br.r_ohm < 0.0 || br.x_ohm < 0.0 {
                return Err(CaseError::BadBranch {
                    branch: br.id,
                    message: "impedances must be non-negative".into(),
                });
            }
            if !(br.s_rated_kva > 0.0) {
                return Err(CaseError::BadBranch {
                    branch: br.id,
                    message: "s_rated_kva must be positive".into(),
                });
            }
            adjacency[fi].push((ti, m));
            adjacency[ti].push((fi, m));
        }

        // Breadth-first walk from the swing bus orients every branch and
        // yields the parent-before-child bus order the sweep solver needs.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut depth = vec![0usize; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        seen[swing] = true;
        order.push(swing);
        let mut head = 0;
        while head < order.len() {
            let b = order[head];
            head += 1;
            for &(next, m) in &adjacency[b] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((b, m));
                    children[b].push((next, m));
                    depth[next] = depth[b] + 1;
                    order.push(next);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CaseError::Disconnected(self.buses[i].id));
        }

        Ok(Topology {
            swing,
            order,
            parent,
            children,
            depth,
            index_of,
        })
    }
}

/// Branch indices ordered root-to-leaf: every branch appears after the
/// branch feeding its sending bus, so `from` is always closer to the swing
/// bus than `to` along the discovered orientation.
pub fn downstream_order(case: &NetworkCase) -> Result<Vec<usize>, CaseError> {
    let topo = case.topology()?;
    Ok(topo
        .order
        .iter()
        .filter_map(|&b| topo.parent[b].map(|(_, m)| m))
        .collect())
}

fn parse_text(source: &str) -> Result<NetworkCase, CaseError> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Bus,
        Branch,
    }

    let mut section = Section::Header;
    let mut base: Option<(f64, f64)> = None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();

    for (lineno, raw) in source.lines().enumerate() {
        let line = lineno + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if text.eq_ignore_ascii_case("[bus]") {
            section = Section::Bus;
            continue;
        }
        if text.eq_ignore_ascii_case("[branch]") {
            section = Section::Branch;
            continue;
        }
        match section {
            Section::Header => {
                let mut kv = HashMap::new();
                for tok in text.split_whitespace() {
                    let (key, value) = tok.split_once('=').ok_or_else(|| CaseError::Parse {
                        line,
                        message: format!("expected key=value header token, got `{tok}`"),
                    })?;
                    kv.insert(key, parse_f64(value, line)?);
                }
                let kv_get = |key: &str| {
                    kv.get(key).copied().ok_or_else(|| CaseError::Parse {
                        line,
                        message: format!("header is missing `{key}=`"),
                    })
                };
                base = Some((kv_get("base_kv")?, kv_get("base_mva")?));
            }
            Section::Bus => {
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != 6 {
                    return Err(CaseError::Parse {
                        line,
                        message: format!("bus row needs 6 fields, got {}", fields.len()),
                    });
                }
                let kind = match fields[1].to_ascii_lowercase().as_str() {
                    "swing" => BusKind::Swing,
                    "load" => BusKind::Load,
                    other => {
                        return Err(CaseError::Parse {
                            line,
                            message: format!("unknown bus kind `{other}`"),
                        })
                    }
                };
                buses.push(Bus {
                    id: parse_usize(fields[0], line)?,
                    kind,
                    p_kw: parse_f64(fields[2], line)?,
                    q_kvar: parse_f64(fields[3], line)?,
                    umin_pu: parse_f64(fields[4], line)?,
                    umax_pu: parse_f64(fields[5], line)?,
                });
            }
            Section::Branch => {
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() != 6 {
                    return Err(CaseError::Parse {
                        line,
                        message: format!("branch row needs 6 fields, got {}", fields.len()),
                    });
                }
                branches.push(Branch {
                    id: parse_usize(fields[0], line)?,
                    from: parse_usize(fields[1], line)?,
                    to: parse_usize(fields[2], line)?,
                    r_ohm: parse_f64(fields[3], line)?,
                    x_ohm: parse_f64(fields[4], line)?,
                    s_rated_kva: parse_f64(fields[5], line)?,
                });
            }
        }
    }

    let (base_kv, base_mva) = base.ok_or(CaseError::Parse {
        line: 0,
        message: "missing `base_kv=... base_mva=...` header".into(),
    })?;
    Ok(NetworkCase {
        base_kv,
        base_mva,
        buses,
        branches,
    })
}

fn parse_f64(token: &str, line: usize) -> Result<f64, CaseError> {
    token.parse().map_err(|_| CaseError::Parse {
        line,
        message: format!("`{token}` is not a number"),
    })
}

fn parse_usize(token: &str, line: usize) -> Result<usize, CaseError> {
    token.parse().map_err(|_| CaseError::Parse {
        line,
        message: format!("`{token}` is not a non-negative integer"),
    })
}
