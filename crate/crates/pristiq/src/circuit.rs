//! Circuit intermediate representation shared by every pipeline stage.
//!
//! A [`Circuit`] is an ordered gate list over a fixed qubit count. Qubit 0 is
//! the most significant bit of the basis-state index, so a product state
//! |X⟩⊗|Q⟩ lays out as [x0·Q, x1·Q, ...]. The gate vocabulary is closed;
//! anything else is rejected at construction or parse time.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Closed gate vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    X,
    H,
    Cnot,
    Cz,
    Crx,
    Barrier,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Crx)
    }

    pub fn is_two_qubit(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Cz | GateKind::Crx)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::X => "x",
            GateKind::H => "h",
            GateKind::Cnot => "cnot",
            GateKind::Cz => "cz",
            GateKind::Crx => "crx",
            GateKind::Barrier => "barrier",
        }
    }

    fn from_name(s: &str) -> Option<GateKind> {
        Some(match s {
            "rx" => GateKind::Rx,
            "ry" => GateKind::Ry,
            "rz" => GateKind::Rz,
            "x" => GateKind::X,
            "h" => GateKind::H,
            "cnot" => GateKind::Cnot,
            "cz" => GateKind::Cz,
            "crx" => GateKind::Crx,
            "barrier" => GateKind::Barrier,
            _ => return None,
        })
    }
}

/// Normalize an angle to (−2π, 2π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(4.0 * PI);
    if r > 2.0 * PI {
        r -= 4.0 * PI;
    }
    // rem_euclid gives [0, 4π); map 0 to 0, keep (0, 2π], shift (2π, 4π) down.
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// One gate: kind, ordered qubit operands, optional rotation angle, optional
/// trainable-parameter slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub angle: Option<f64>,
    pub param_id: Option<usize>,
}

impl Gate {
    pub fn new(
        kind: GateKind,
        qubits: Vec<usize>,
        angle: Option<f64>,
        param_id: Option<usize>,
    ) -> Result<Gate> {
        let g = Gate {
            kind,
            qubits,
            angle: angle.map(normalize_angle),
            param_id,
        };
        g.validate_shape()?;
        Ok(g)
    }

    pub fn rx(q: usize, angle: f64) -> Gate {
        Gate::new(GateKind::Rx, vec![q], Some(angle), None).unwrap()
    }

    pub fn ry(q: usize, angle: f64) -> Gate {
        Gate::new(GateKind::Ry, vec![q], Some(angle), None).unwrap()
    }

    pub fn rz(q: usize, angle: f64) -> Gate {
        Gate::new(GateKind::Rz, vec![q], Some(angle), None).unwrap()
    }

    pub fn x(q: usize) -> Gate {
        Gate::new(GateKind::X, vec![q], None, None).unwrap()
    }

    pub fn h(q: usize) -> Gate {
        Gate::new(GateKind::H, vec![q], None, None).unwrap()
    }

    pub fn cnot(control: usize, target: usize) -> Result<Gate> {
        Gate::new(GateKind::Cnot, vec![control, target], None, None)
    }

    pub fn cz(a: usize, b: usize) -> Result<Gate> {
        Gate::new(GateKind::Cz, vec![a, b], None, None)
    }

    pub fn crx(control: usize, target: usize, angle: f64) -> Result<Gate> {
        Gate::new(GateKind::Crx, vec![control, target], Some(angle), None)
    }

    /// Barrier over the full register of an `n`-qubit circuit.
    pub fn barrier(n_qubits: usize) -> Gate {
        Gate {
            kind: GateKind::Barrier,
            qubits: (0..n_qubits).collect(),
            angle: None,
            param_id: None,
        }
    }

    pub fn with_param(mut self, param_id: usize) -> Gate {
        self.param_id = Some(param_id);
        self
    }

    fn validate_shape(&self) -> Result<()> {
        let arity_ok = match self.kind {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::X | GateKind::H => {
                self.qubits.len() == 1
            }
            GateKind::Cnot | GateKind::Cz | GateKind::Crx => self.qubits.len() == 2,
            GateKind::Barrier => !self.qubits.is_empty(),
        };
        if !arity_ok {
            return Err(Error::InvalidGate(format!(
                "{} takes {} qubit(s), got {}",
                self.kind.name(),
                if self.kind.is_two_qubit() { 2 } else { 1 },
                self.qubits.len()
            )));
        }
        for (i, &q) in self.qubits.iter().enumerate() {
            if self.qubits[..i].contains(&q) {
                return Err(Error::InvalidGate(format!(
                    "{}: duplicate qubit {}",
                    self.kind.name(),
                    q
                )));
            }
        }
        if self.kind.is_rotation() {
            if self.angle.is_none() {
                return Err(Error::InvalidGate(format!(
                    "{} requires an angle",
                    self.kind.name()
                )));
            }
        } else if self.angle.is_some() {
            return Err(Error::InvalidGate(format!(
                "{} carries no angle",
                self.kind.name()
            )));
        }
        if self.param_id.is_some() && !self.kind.is_rotation() {
            return Err(Error::InvalidGate(format!(
                "{} cannot carry a parameter slot",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

/// Ordered gate list over a fixed number of qubits. Immutable by convention
/// after construction; all transforms return new circuits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

/// Structural metrics: barrier-free gate count, qubit-frontier depth,
/// distinct trainable parameter slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircuitMetrics {
    pub gate_count: usize,
    pub depth: usize,
    pub param_count: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Circuit> {
        if n_qubits == 0 {
            return Err(Error::Argument("circuit needs at least one qubit".into()));
        }
        Ok(Circuit {
            n_qubits,
            gates: Vec::new(),
        })
    }

    pub fn with_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Circuit> {
        let mut c = Circuit::new(n_qubits)?;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate_shape()?;
        if let Some(&q) = gate.qubits.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::InvalidGate(format!(
                "qubit {} out of range for {}-qubit circuit",
                q, self.n_qubits
            )));
        }
        self.gates.push(gate);
        Ok(())
    }

    /// `a` followed by `b`; as a matrix, U(b)·U(a).
    pub fn compose(a: &Circuit, b: &Circuit) -> Result<Circuit> {
        if a.n_qubits != b.n_qubits {
            return Err(Error::QubitMismatch {
                left: a.n_qubits,
                right: b.n_qubits,
            });
        }
        let mut gates = a.gates.clone();
        gates.extend(b.gates.iter().cloned());
        Ok(Circuit {
            n_qubits: a.n_qubits,
            gates,
        })
    }

    /// Same gates on a wider register. Used to apply an N-qubit model to an
    /// (N+M)-qubit encrypted state, acting as identity on the extra qubits.
    pub fn widened(&self, n_qubits: usize) -> Result<Circuit> {
        if n_qubits < self.n_qubits {
            return Err(Error::Argument(format!(
                "cannot widen {}-qubit circuit to {}",
                self.n_qubits, n_qubits
            )));
        }
        Circuit::with_gates(
            n_qubits,
            self.gates
                .iter()
                .filter(|g| g.kind != GateKind::Barrier)
                .cloned()
                .collect(),
        )
    }

    pub fn metrics(&self) -> CircuitMetrics {
        let mut frontier = vec![0usize; self.n_qubits];
        let mut gate_count = 0;
        let mut params = std::collections::BTreeSet::new();
        for g in &self.gates {
            if g.kind == GateKind::Barrier {
                continue;
            }
            gate_count += 1;
            let level = 1 + g.qubits.iter().map(|&q| frontier[q]).max().unwrap_or(0);
            for &q in &g.qubits {
                frontier[q] = level;
            }
            if let Some(p) = g.param_id {
                params.insert(p);
            }
        }
        CircuitMetrics {
            gate_count,
            depth: frontier.into_iter().max().unwrap_or(0),
            param_count: params.len(),
        }
    }

    /// Deterministic text form: `qubits <n>` header, one gate per line,
    /// angles at 12 significant digits.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "qubits {}", self.n_qubits).unwrap();
        for g in &self.gates {
            if g.kind == GateKind::Barrier {
                out.push_str("barrier\n");
                continue;
            }
            out.push_str(g.kind.name());
            for q in &g.qubits {
                write!(out, " {}", q).unwrap();
            }
            if let Some(a) = g.angle {
                write!(out, " {:.11e}", a).unwrap();
            }
            if let Some(p) = g.param_id {
                write!(out, " @{}", p).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Circuit> {
        let mut circuit: Option<Circuit> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let head = tokens.next().unwrap();
            if circuit.is_none() {
                if head != "qubits" {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "expected `qubits <n>` header".into(),
                    });
                }
                let n: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .filter(|&n| n > 0)
                    .ok_or(Error::Parse {
                        line: line_no,
                        msg: "invalid qubit count".into(),
                    })?;
                circuit = Some(Circuit::new(n)?);
                continue;
            }
            let c = circuit.as_mut().unwrap();
            let kind = GateKind::from_name(head).ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("unknown gate kind `{}`", head),
            })?;
            if kind == GateKind::Barrier {
                if tokens.next().is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "barrier takes no arguments".into(),
                    });
                }
                let n = c.n_qubits;
                c.push(Gate::barrier(n)).unwrap();
                continue;
            }
            let rest: Vec<&str> = tokens.collect();
            let mut param_id = None;
            let mut fields = &rest[..];
            if let Some(last) = fields.last() {
                if let Some(p) = last.strip_prefix('@') {
                    param_id = Some(p.parse::<usize>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("bad parameter slot `{}`", last),
                    })?);
                    fields = &fields[..fields.len() - 1];
                }
            }
            let n_q = if kind.is_two_qubit() { 2 } else { 1 };
            let want = n_q + usize::from(kind.is_rotation());
            if fields.len() != want {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{} expects {} field(s), got {}", head, want, fields.len()),
                });
            }
            let mut qubits = Vec::with_capacity(n_q);
            for f in &fields[..n_q] {
                qubits.push(f.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad qubit index `{}`", f),
                })?);
            }
            let angle = if kind.is_rotation() {
                Some(fields[n_q].parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad angle `{}`", fields[n_q]),
                })?)
            } else {
                None
            };
            let gate = Gate::new(kind, qubits, angle, param_id).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            c.push(gate).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
        }
        circuit.ok_or(Error::Parse {
            line: 0,
            msg: "missing `qubits <n>` header".into(),
        })
    }
}
