//! Text exporter for TLA+ modules. Models describe their variables, init
//! clauses and actions; the exporter derives `Vars`, `UNCHANGED` lists,
//! `Next`, `Live`, `Spec` and a type invariant.

use std::fmt::Write as _;

/// TLA+ rendering of a state field's type, used for `TypeInv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TlaType {
    Nat,
    Boolean,
    /// A set expression defined elsewhere in the module (e.g. a constant).
    Set(String),
    Seq(Box<TlaType>),
    Product(Vec<TlaType>),
    /// `[domain -> range]`
    Function(Box<TlaType>, Box<TlaType>),
}

impl TlaType {
    pub fn render(&self) -> String {
        match self {
            TlaType::Nat => "Nat".into(),
            TlaType::Boolean => "BOOLEAN".into(),
            TlaType::Set(s) => s.clone(),
            TlaType::Seq(t) => format!("Seq({})", t.render()),
            TlaType::Product(ts) => ts.iter().map(TlaType::render).collect::<Vec<_>>().join(" \\X "),
            TlaType::Function(d, r) => format!("[{} -> {}]", d.render(), r.render()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TlaVariable {
    pub name: String,
    pub ty: TlaType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TlaAction {
    pub name: String,
    /// Existentially quantified parameters `(var, set)`, outermost first.
    pub exists: Vec<(String, String)>,
    /// Enabling conjuncts over unprimed variables.
    pub guards: Vec<String>,
    /// `(variable, expression)` for each primed variable; the rest are
    /// `UNCHANGED`.
    pub updates: Vec<(String, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TlaFairnessKind {
    Weak,
    Strong,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TlaFairness {
    pub kind: TlaFairnessKind,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TlaModule {
    pub name: String,
    pub extends: Vec<String>,
    pub constants: Vec<String>,
    pub variables: Vec<TlaVariable>,
    /// Operator definitions placed before `Init`, as `(lhs, rhs)`.
    pub definitions: Vec<(String, String)>,
    pub init: Vec<String>,
    pub actions: Vec<TlaAction>,
    pub fairness: Vec<TlaFairness>,
}

fn conj(out: &mut String, indent: usize, items: &[String]) {
    let pad = " ".repeat(indent);
    for item in items {
        let _ = writeln!(out, "{pad}/\\ {item}");
    }
}

impl TlaModule {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "---- MODULE {} ----", self.name);
        if !self.extends.is_empty() {
            let _ = writeln!(out, "EXTENDS {}", self.extends.join(", "));
        }
        if !self.constants.is_empty() {
            let _ = writeln!(out, "CONSTANTS {}", self.constants.join(", "));
        }
        let names: Vec<&str> = self.variables.iter().map(|v| v.name.as_str()).collect();
        let _ = writeln!(out, "VARIABLES {}", names.join(", "));
        out.push_str("----\n\n");
        let _ = writeln!(out, "Vars == <<{}>>\n", names.join(", "));

        for (lhs, rhs) in &self.definitions {
            let _ = writeln!(out, "{lhs} == {rhs}\n");
        }

        out.push_str("TypeInv ==\n");
        let types: Vec<String> = self.variables.iter().map(|v| format!("{} \\in {}", v.name, v.ty.render())).collect();
        conj(&mut out, 4, &types);
        out.push('\n');

        out.push_str("Init ==\n");
        conj(&mut out, 4, &self.init);
        out.push('\n');

        for a in &self.actions {
            let _ = writeln!(out, "{} ==", a.name);
            let mut indent = 4;
            for (var, set) in &a.exists {
                let _ = writeln!(out, "{}\\E {var} \\in {set} :", " ".repeat(indent));
                indent += 4;
            }
            let mut items = a.guards.clone();
            items.extend(a.updates.iter().map(|(v, e)| format!("{v}' = {e}")));
            let unchanged: Vec<&str> =
                names.iter().copied().filter(|n| a.updates.iter().all(|(v, _)| v != n)).collect();
            if !unchanged.is_empty() {
                items.push(format!("UNCHANGED <<{}>>", unchanged.join(", ")));
            }
            conj(&mut out, indent, &items);
            out.push('\n');
        }

        out.push_str("Next ==\n");
        for a in &self.actions {
            let _ = writeln!(out, "    \\/ {}", a.name);
        }
        out.push('\n');

        if self.fairness.is_empty() {
            out.push_str("Live == TRUE\n\n");
        } else {
            out.push_str("Live ==\n");
            let items: Vec<String> = self
                .fairness
                .iter()
                .map(|f| match f.kind {
                    TlaFairnessKind::Weak => format!("WF_Vars({})", f.action),
                    TlaFairnessKind::Strong => format!("SF_Vars({})", f.action),
                })
                .collect();
            conj(&mut out, 4, &items);
            out.push('\n');
        }
        out.push_str("Spec == Init /\\ [][Next]_Vars /\\ Live\n");
        out.push_str("----\n");
        out.push_str("THEOREM Spec => []TypeInv\n");
        out.push_str("====\n");
        out
    }
}
