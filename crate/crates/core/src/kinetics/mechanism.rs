use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::reaction::{ArrheniusParams, HeatOfReaction, Reaction};
use super::species::{Phase, Species, DEFAULT_ASH_MASS};
use super::KineticsError;

const REFERENCE_MECHANISM: &str = include_str!("../../data/reference_mechanism.json");
const SINGLE_STEP_MECHANISM: &str = include_str!("../../data/single_step.json");
const FIRST_ORDER_MECHANISM: &str = include_str!("../../data/first_order.json");
const STIFF_PAIR_MECHANISM: &str = include_str!("../../data/stiff_pair.json");
const WGS_MECHANISM: &str = include_str!("../../data/water_gas_shift.json");

/// Names of the bundled mechanisms, addressable as `builtin:<name>`.
pub const BUILTIN_MECHANISMS: [&str; 5] = ["reference", "single_step", "first_order", "stiff_pair", "water_gas_shift"];

/// Which species and reactions describe the fuel particle.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidRoles {
    pub volatile: usize,
    pub devolatilization: usize,
    pub moisture: Option<usize>,
    pub drying: Option<usize>,
    pub char: Option<usize>,
    pub ash: Option<usize>,
    /// Devolatilization products counted in the liquid (condensable) yield.
    pub liquid_products: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ReactionMechanism {
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    /// K
    pub reference_temperature: f64,
    pub pseudo_elements: BTreeMap<String, f64>,
    pub roles: Option<SolidRoles>,
    index: HashMap<String, usize>,
}

impl ReactionMechanism {
    pub fn new(
        species: Vec<Species>,
        reactions: Vec<Reaction>,
        reference_temperature: f64,
        pseudo_elements: BTreeMap<String, f64>,
    ) -> Result<Self, KineticsError> {
        let mut index = HashMap::new();
        for (i, s) in species.iter().enumerate() {
            if index.insert(s.name.clone(), i).is_some() {
                return Err(KineticsError::InvalidMechanism(format!("duplicate species `{}`", s.name)));
            }
        }
        let mech = Self { species, reactions, reference_temperature, pseudo_elements, roles: None, index };
        for s in &mech.species {
            s.validate(&mech.pseudo_elements).map_err(KineticsError::InvalidMechanism)?;
        }
        for r in 0..mech.reactions.len() {
            mech.validate_reaction(r).map_err(KineticsError::InvalidMechanism)?;
        }
        if !(reference_temperature > 0.0) {
            return Err(KineticsError::InvalidMechanism("reference_temperature must be > 0".into()));
        }
        Ok(mech)
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn reaction_index(&self, name: &str) -> Option<usize> {
        self.reactions.iter().position(|r| r.name.as_deref() == Some(name))
    }

    pub fn gas_species(&self) -> Vec<usize> {
        (0..self.species.len()).filter(|&i| self.species[i].phase == Phase::Gas).collect()
    }

    pub fn solid_species(&self) -> Vec<usize> {
        (0..self.species.len()).filter(|&i| self.species[i].phase == Phase::Solid).collect()
    }

    pub fn roles(&self) -> Result<&SolidRoles, KineticsError> {
        self.roles.as_ref().ok_or_else(|| KineticsError::InvalidMechanism("mechanism declares no solid roles".into()))
    }

    /// Per-element molar totals of a concentration vector.
    pub fn element_totals(&self, c: &[f64]) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (s, ci) in self.species.iter().zip(c) {
            for (el, n) in &s.elements {
                *out.entry(el.clone()).or_insert(0.0) += n * ci;
            }
        }
        out
    }

    fn validate_reaction(&self, r: usize) -> Result<(), String> {
        let rx = &self.reactions[r];
        let label = rx.label(r);
        let n = self.species.len();
        for (i, v) in rx.reactants.iter().chain(&rx.products) {
            if *i >= n {
                return Err(format!("reaction {label}: species index {i} out of range"));
            }
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(format!("reaction {label}: stoichiometric coefficient {v} must be >= 0"));
            }
        }
        for (i, o) in rx.forward_orders.iter().chain(&rx.reverse_orders) {
            if *i >= n {
                return Err(format!("reaction {label}: order species index {i} out of range"));
            }
            if !(*o >= 0.0 && o.is_finite()) {
                return Err(format!("reaction {label}: order {o} for `{}` must be >= 0", self.species[*i].name));
            }
        }
        rx.forward.validate().map_err(|e| format!("reaction {label}: forward {e}"))?;
        if let Some(rev) = &rx.reverse {
            rev.validate().map_err(|e| format!("reaction {label}: reverse {e}"))?;
        }
        let mut balance: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for (i, v) in &rx.reactants {
            for (el, c) in &self.species[*i].elements {
                balance.entry(el).or_default().0 += v * c;
            }
        }
        for (i, v) in &rx.products {
            for (el, c) in &self.species[*i].elements {
                balance.entry(el).or_default().1 += v * c;
            }
        }
        for (el, (lhs, rhs)) in balance {
            if (lhs - rhs).abs() > 1e-9 * lhs.abs().max(rhs.abs()).max(1.0) {
                return Err(format!("reaction {label}: element `{el}` unbalanced ({lhs} reactant vs {rhs} product)"));
            }
        }
        Ok(())
    }

    /// Loads `builtin:<name>` or a JSON file path.
    pub fn load(source: &str) -> Result<Self, KineticsError> {
        if let Some(name) = source.strip_prefix("builtin:") {
            return Self::builtin(name);
        }
        Self::from_path(source)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, KineticsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| KineticsError::InvalidMechanism(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn builtin(name: &str) -> Result<Self, KineticsError> {
        let text = match name {
            "reference" => REFERENCE_MECHANISM,
            "single_step" => SINGLE_STEP_MECHANISM,
            "first_order" => FIRST_ORDER_MECHANISM,
            "stiff_pair" => STIFF_PAIR_MECHANISM,
            "water_gas_shift" => WGS_MECHANISM,
            other => {
                return Err(KineticsError::InvalidMechanism(format!(
                    "unknown builtin mechanism `{other}` (known: {})",
                    BUILTIN_MECHANISMS.join(", ")
                )))
            }
        };
        Self::from_json_str(text)
    }

    /// The bundled gasification mechanism.
    pub fn reference() -> Self {
        Self::builtin("reference").expect("bundled reference mechanism is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self, KineticsError> {
        let file: MechanismFile = serde_json::from_str(text)
            .map_err(|e| KineticsError::MechanismFile { line: e.line(), message: e.to_string() })?;
        let species_lines = array_element_lines(text, "species");
        let reaction_lines = array_element_lines(text, "reactions");
        let roles_line = key_line(text, "roles").unwrap_or(1);
        let at = |lines: &[usize], i: usize| lines.get(i).copied().unwrap_or(1);

        let mut pseudo = file.pseudo_elements.clone();
        pseudo.entry("ASH".to_string()).or_insert(DEFAULT_ASH_MASS);

        let mut species = Vec::with_capacity(file.species.len());
        let mut index = HashMap::new();
        for (i, s) in file.species.into_iter().enumerate() {
            let sp = Species {
                name: s.name,
                molar_mass: s.molar_mass,
                phase: s.phase,
                h_form: s.h_form,
                cp_coeffs: s.cp_coeffs,
                elements: s.elements,
                lumped: s.lumped,
            };
            sp.validate(&pseudo)
                .map_err(|message| KineticsError::MechanismFile { line: at(&species_lines, i), message })?;
            if index.insert(sp.name.clone(), i).is_some() {
                return Err(KineticsError::MechanismFile {
                    line: at(&species_lines, i),
                    message: format!("duplicate species `{}`", sp.name),
                });
            }
            species.push(sp);
        }

        let mut reactions = Vec::with_capacity(file.reactions.len());
        for (r, entry) in file.reactions.into_iter().enumerate() {
            let line = at(&reaction_lines, r);
            let lookup = |map: &BTreeMap<String, f64>| -> Result<Vec<(usize, f64)>, KineticsError> {
                map.iter()
                    .map(|(name, v)| {
                        index.get(name).map(|&i| (i, *v)).ok_or_else(|| KineticsError::MechanismFile {
                            line,
                            message: format!("reaction references unknown species `{name}`"),
                        })
                    })
                    .collect()
            };
            let reactants = lookup(&entry.reactants)?;
            let products = lookup(&entry.products)?;
            let forward_orders = match &entry.orders_fwd {
                Some(o) => lookup(o)?,
                None => reactants.clone(),
            };
            let reverse_orders = match &entry.orders_rev {
                Some(o) => lookup(o)?,
                None => products.clone(),
            };
            if reactants.is_empty() || products.is_empty() {
                return Err(KineticsError::MechanismFile {
                    line,
                    message: "reaction needs at least one reactant and one product".into(),
                });
            }
            reactions.push(Reaction {
                name: entry.name,
                reactants,
                products,
                forward_orders,
                reverse_orders,
                forward: entry.arrhenius_fwd,
                reverse: entry.arrhenius_rev,
                heat: match entry.dh {
                    Some(v) => HeatOfReaction::Declared(v),
                    None => HeatOfReaction::FromFormationEnthalpies,
                },
            });
        }

        let mut mech = Self {
            species,
            reactions,
            reference_temperature: file.reference_temperature,
            pseudo_elements: pseudo,
            roles: None,
            index,
        };
        if !(mech.reference_temperature > 0.0) {
            return Err(KineticsError::MechanismFile {
                line: key_line(text, "reference_temperature").unwrap_or(1),
                message: "reference_temperature must be > 0".into(),
            });
        }
        for r in 0..mech.reactions.len() {
            mech.validate_reaction(r)
                .map_err(|message| KineticsError::MechanismFile { line: at(&reaction_lines, r), message })?;
        }
        if let Some(roles) = file.roles {
            mech.roles = Some(
                mech.resolve_roles(&roles)
                    .map_err(|message| KineticsError::MechanismFile { line: roles_line, message })?,
            );
        }
        Ok(mech)
    }

    fn resolve_roles(&self, roles: &RolesEntry) -> Result<SolidRoles, String> {
        let sp = |name: &str| -> Result<usize, String> {
            let i = self.species_index(name).ok_or_else(|| format!("roles: unknown species `{name}`"))?;
            if self.species[i].phase != Phase::Solid {
                return Err(format!("roles: `{name}` must be a solid species"));
            }
            Ok(i)
        };
        let rx = |name: &str| -> Result<usize, String> {
            self.reaction_index(name).ok_or_else(|| format!("roles: unknown reaction `{name}`"))
        };
        let volatile = sp(&roles.volatile)?;
        let devolatilization = rx(&roles.devolatilization)?;
        let char = roles.char.as_deref().map(sp).transpose()?;
        let devol = &self.reactions[devolatilization];
        if devol.reactants.len() != 1 || devol.reactants[0].0 != volatile {
            return Err(format!("roles: devolatilization reaction must consume only `{}`", roles.volatile));
        }
        for (p, _) in &devol.products {
            if self.species[*p].phase == Phase::Solid && Some(*p) != char {
                return Err(format!(
                    "roles: devolatilization produces solid `{}` that is not the char species",
                    self.species[*p].name
                ));
            }
        }
        let moisture = roles.moisture.as_deref().map(sp).transpose()?;
        let drying = roles.drying.as_deref().map(rx).transpose()?;
        if let (Some(m), Some(d)) = (moisture, drying) {
            let dr = &self.reactions[d];
            if dr.reactants.len() != 1 || dr.reactants[0].0 != m {
                return Err("roles: drying reaction must consume only the moisture species".into());
            }
            if dr.products.iter().any(|(p, _)| self.species[*p].phase != Phase::Gas) {
                return Err("roles: drying reaction must produce gas species only".into());
            }
        } else if moisture.is_some() != drying.is_some() {
            return Err("roles: moisture and drying must be declared together".into());
        }
        let mut liquid_products = Vec::new();
        for name in &roles.liquid_products {
            let i = self.species_index(name).ok_or_else(|| format!("roles: unknown liquid product `{name}`"))?;
            if !devol.products.iter().any(|(p, _)| *p == i) || self.species[i].phase != Phase::Gas {
                return Err(format!("roles: liquid product `{name}` is not a gaseous devolatilization product"));
            }
            liquid_products.push(i);
        }
        Ok(SolidRoles {
            volatile,
            devolatilization,
            moisture,
            drying,
            char,
            ash: roles.ash.as_deref().map(sp).transpose()?,
            liquid_products,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanismFile {
    #[serde(default = "default_reference_temperature")]
    reference_temperature: f64,
    #[serde(default)]
    pseudo_elements: BTreeMap<String, f64>,
    species: Vec<SpeciesEntry>,
    #[serde(default)]
    reactions: Vec<ReactionEntry>,
    #[serde(default)]
    roles: Option<RolesEntry>,
}

fn default_reference_temperature() -> f64 {
    298.15
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeciesEntry {
    name: String,
    molar_mass: f64,
    phase: Phase,
    elements: BTreeMap<String, f64>,
    #[serde(default)]
    h_form: Option<f64>,
    #[serde(default)]
    cp_coeffs: Option<Vec<f64>>,
    #[serde(default)]
    lumped: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionEntry {
    #[serde(default)]
    name: Option<String>,
    reactants: BTreeMap<String, f64>,
    products: BTreeMap<String, f64>,
    #[serde(default)]
    orders_fwd: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    orders_rev: Option<BTreeMap<String, f64>>,
    arrhenius_fwd: ArrheniusParams,
    #[serde(default)]
    arrhenius_rev: Option<ArrheniusParams>,
    #[serde(default, rename = "dH")]
    dh: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RolesEntry {
    volatile: String,
    devolatilization: String,
    #[serde(default)]
    moisture: Option<String>,
    #[serde(default)]
    drying: Option<String>,
    #[serde(default)]
    char: Option<String>,
    #[serde(default)]
    ash: Option<String>,
    #[serde(default)]
    liquid_products: Vec<String>,
}

/// Scans raw JSON text for the 1-based line where each element of the
/// top-level array `key` starts.
fn array_element_lines(text: &str, key: &str) -> Vec<usize> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut line = 1;
    let mut depth = 0usize;
    let mut last_string: Option<(usize, usize)> = None;
    let mut current_key: Option<(usize, usize)> = None;
    let mut in_target = false;
    let mut expect_element = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => line += 1,
            b'"' => {
                if expect_element && in_target && depth == 2 {
                    out.push(line);
                    expect_element = false;
                }
                let start = i + 1;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                if depth == 1 {
                    last_string = Some((start, i));
                }
            }
            b':' if depth == 1 => current_key = last_string.take(),
            b'{' | b'[' => {
                if expect_element && in_target && depth == 2 {
                    out.push(line);
                    expect_element = false;
                }
                depth += 1;
                if c == b'[' && depth == 2 {
                    if let Some((s, e)) = current_key {
                        if &text[s..e] == key {
                            in_target = true;
                            expect_element = true;
                        }
                    }
                }
            }
            b'}' | b']' => {
                depth = depth.saturating_sub(1);
                if depth <= 1 {
                    in_target = false;
                    expect_element = false;
                }
            }
            b',' if in_target && depth == 2 => expect_element = true,
            b' ' | b'\t' | b'\r' | b',' | b':' => {}
            _ => {
                if expect_element && in_target && depth == 2 {
                    out.push(line);
                    expect_element = false;
                }
            }
        }
        i += 1;
    }
    out
}

fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let pos = text.find(&needle)?;
    Some(text[..pos].matches('\n').count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in BUILTIN_MECHANISMS {
            let m = ReactionMechanism::builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!m.species.is_empty());
        }
        let r = ReactionMechanism::reference();
        assert_eq!(r.reactions.len(), 5);
        let roles = r.roles().unwrap();
        assert_eq!(r.species[roles.volatile].name, "BIOMASS");
        assert!(roles.drying.is_some());
        assert_eq!(roles.liquid_products.len(), 2);
        assert!(r.reactions[r.reaction_index("WGS").unwrap()].reverse.is_some());
    }

    #[test]
    fn element_lines_tracks_array_items() {
        let text = "{\n \"species\": [\n  {\"a\": 1},\n\n  {\"b\": [1,2]}\n ],\n \"reactions\": [ {\n } ]\n}";
        assert_eq!(array_element_lines(text, "species"), vec![3, 5]);
        assert_eq!(array_element_lines(text, "reactions"), vec![7]);
    }

    const TWO_SPECIES: &str = r#"{
  "species": [
    {"name": "CO", "molar_mass": 0.028010, "phase": "gas", "elements": {"C": 1, "O": 1},
     "h_form": -110527, "cp_coeffs": [29.0]},
    {"name": "O2", "molar_mass": 0.031998, "phase": "gas", "elements": {"O": 2},
     "h_form": 0, "cp_coeffs": [29.0]},
    {"name": "CO2", "molar_mass": 0.044009, "phase": "gas", "elements": {"C": 1, "O": 2},
     "h_form": -393522, "cp_coeffs": [37.0]}
  ],
  "reactions": [
    {"reactants": {"CO": 1, "O2": 0.5}, "products": {"CO2": 1},
     "arrhenius_fwd": {"A": 1.0, "b": 0, "Ea": 0}},
    {"reactants": {"CO": 1, "O2": 1}, "products": {"CO2": 1},
     "arrhenius_fwd": {"A": 1.0, "b": 0, "Ea": 0}}
  ]
}"#;

    #[test]
    fn unbalanced_reaction_reports_its_line() {
        let err = ReactionMechanism::from_json_str(TWO_SPECIES).unwrap_err();
        match err {
            KineticsError::MechanismFile { line, message } => {
                assert_eq!(line, 13, "{message}");
                assert!(message.contains("element `O` unbalanced"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_species_reports_its_line() {
        let text = TWO_SPECIES.replace("0.031998", "0.032998");
        let err = ReactionMechanism::from_json_str(&text).unwrap_err();
        assert!(matches!(err, KineticsError::MechanismFile { line: 5, .. }), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = TWO_SPECIES.replace(
            "\"phase\": \"gas\", \"elements\": {\"O\": 2}",
            "\"phase\": \"gas\", \"colour\": 1, \"elements\": {\"O\": 2}",
        );
        let err = ReactionMechanism::from_json_str(&text).unwrap_err();
        match err {
            KineticsError::MechanismFile { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("colour"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_species_in_reaction() {
        let text = TWO_SPECIES.replace("{\"CO\": 1, \"O2\": 1}", "{\"XX\": 1}");
        let err = ReactionMechanism::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("unknown species `XX`"), "{err}");
    }

    #[test]
    fn duplicate_species_rejected() {
        let text = TWO_SPECIES.replace("\"name\": \"O2\"", "\"name\": \"CO\"").replace(
            "\"molar_mass\": 0.031998, \"phase\": \"gas\", \"elements\": {\"O\": 2}",
            "\"molar_mass\": 0.028010, \"phase\": \"gas\", \"elements\": {\"C\": 1, \"O\": 1}",
        );
        let err = ReactionMechanism::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }
}
