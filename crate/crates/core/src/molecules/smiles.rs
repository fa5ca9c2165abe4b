use super::{Atom, Bond, BondOrder, MolError, MolGraph};

const ORGANIC: &[(&str, &[u32])] = &[
    ("B", &[3]),
    ("C", &[4]),
    ("N", &[3, 5]),
    ("O", &[2]),
    ("P", &[3, 5]),
    ("S", &[2, 4, 6]),
    ("F", &[1]),
    ("Cl", &[1]),
    ("Br", &[1]),
    ("I", &[1]),
];

const BRACKET_ELEMENTS: &[&str] = &[
    "H", "B", "C", "N", "O", "F", "Na", "Si", "P", "S", "Cl", "K", "Se", "Br", "I",
];
const AROMATIC_BRACKET: &[&str] = &["b", "c", "n", "o", "p", "s", "se"];

fn valences(element: &str) -> Option<&'static [u32]> {
    ORGANIC.iter().find(|(e, _)| *e == element).map(|(_, v)| *v)
}

fn err(pos: usize, message: impl Into<String>) -> MolError {
    MolError::Parse {
        pos,
        message: message.into(),
    }
}

struct RingOpen {
    atom: usize,
    bond: Option<BondOrder>,
    pos: usize,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Atoms written in organic-subset form get implicit hydrogens afterwards.
    implicit: Vec<bool>,
    positions: Vec<usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| {
            std::str::from_utf8(&self.s[start..self.pos])
                .unwrap()
                .parse()
                .unwrap_or(u32::MAX)
        })
    }

    fn organic_atom(&mut self) -> Result<Atom, MolError> {
        let start = self.pos;
        let c = self.s[self.pos];
        let two = self.s.get(self.pos..self.pos + 2);
        let (element, aromatic, width) = match (c, two) {
            (b'C', Some(b"Cl")) => ("Cl", false, 2),
            (b'B', Some(b"Br")) => ("Br", false, 2),
            (b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I', _) => {
                (std::str::from_utf8(&self.s[start..start + 1]).unwrap(), false, 1)
            }
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            _ => return Err(err(start, format!("unknown symbol {:?}", c as char))),
        };
        self.pos += width;
        Ok(Atom {
            element: element.to_string(),
            charge: 0,
            aromatic,
            hydrogens: 0,
            isotope: None,
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, MolError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.number();
        let sym_start = self.pos;
        let mut end = self.pos + 1;
        while self.s.get(end).is_some_and(|c| c.is_ascii_lowercase()) {
            end += 1;
        }
        let word = std::str::from_utf8(self.s.get(self.pos..end).unwrap_or_default()).unwrap();
        let (element, aromatic) = if BRACKET_ELEMENTS.contains(&word) {
            (word.to_string(), false)
        } else if AROMATIC_BRACKET.contains(&word) {
            let mut cap = word.to_string();
            cap[..1].make_ascii_uppercase();
            (cap, true)
        } else {
            return Err(err(sym_start, "unknown element in bracket atom"));
        };
        self.pos += element.len();
        while self.peek() == Some(b'@') {
            self.pos += 1;
            while self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                self.pos += 1;
            }
            self.number();
        }
        let mut hydrogens = 0;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = self.number().unwrap_or(1);
        }
        let mut charge = 0i32;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            match self.number() {
                Some(n) => charge = unit * n as i32,
                None => {
                    charge = unit;
                    while self.peek() == Some(sign) {
                        self.pos += 1;
                        charge += unit;
                    }
                }
            }
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.number();
        }
        if self.peek() != Some(b']') {
            return Err(err(open, "unterminated bracket atom"));
        }
        self.pos += 1;
        Ok(Atom {
            element,
            charge,
            aromatic,
            hydrogens,
            isotope,
        })
    }

    fn add_bond(&mut self, a: usize, b: usize, order: Option<BondOrder>, pos: usize) -> Result<(), MolError> {
        if a == b {
            return Err(err(pos, "ring closure onto the same atom"));
        }
        if self.bonds.iter().any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a)) {
            return Err(err(pos, "duplicate bond"));
        }
        let order = order.unwrap_or(if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        });
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn parse(&mut self) -> Result<(), MolError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
        let mut pending: Option<(BondOrder, usize)> = None;
        let mut rings: std::collections::HashMap<u32, RingOpen> = Default::default();
        while let Some(c) = self.peek() {
            let here = self.pos;
            match c {
                b'(' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(err(here, "branch must follow an atom"));
                    }
                    branches.push((prev, here));
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(err(here, "bond without a following atom"));
                    }
                    prev = branches.pop().ok_or_else(|| err(here, "unbalanced ')'"))?.0;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(err(here, "misplaced bond symbol"));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    // stereo bonds carry no order information beyond "single or default"
                    if c != b'/' && c != b'\\' {
                        pending = Some((order, here));
                    }
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(err(here, "misplaced '.'"));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    let Some(atom) = prev else {
                        return Err(err(here, "ring closure without an atom"));
                    };
                    let label = if c == b'%' {
                        self.pos += 1;
                        let start = self.pos;
                        let n = self.number();
                        if n.is_none() || self.pos - start != 2 {
                            return Err(err(here, "'%' needs two digits"));
                        }
                        n.unwrap()
                    } else {
                        self.pos += 1;
                        u32::from(c - b'0')
                    };
                    let bond = pending.take().map(|(o, _)| o);
                    match rings.remove(&label) {
                        Some(open) => {
                            if let (Some(x), Some(y)) = (bond, open.bond) {
                                if x != y {
                                    return Err(err(here, "conflicting ring-closure bonds"));
                                }
                            }
                            self.add_bond(open.atom, atom, bond.or(open.bond), here)?;
                        }
                        None => {
                            rings.insert(label, RingOpen { atom, bond, pos: here });
                        }
                    }
                }
                b'[' | b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    let idx = self.atoms.len();
                    self.atoms.push(atom);
                    self.implicit.push(c != b'[');
                    self.positions.push(here);
                    if let Some(p) = prev {
                        self.add_bond(p, idx, pending.take().map(|(o, _)| o), here)?;
                    }
                    prev = Some(idx);
                }
                _ => return Err(err(here, format!("unknown symbol {:?}", c as char))),
            }
        }
        if let Some((_, pos)) = pending {
            return Err(err(pos, "bond without a following atom"));
        }
        if let Some(&(_, pos)) = branches.last() {
            return Err(err(pos, "unbalanced '('"));
        }
        if let Some(open) = rings.values().min_by_key(|r| r.pos) {
            return Err(err(open.pos, "unmatched ring closure"));
        }
        if self.atoms.is_empty() {
            return Err(err(0, "no atoms"));
        }
        Ok(())
    }

    fn assign_hydrogens(&mut self) -> Result<(), MolError> {
        for i in 0..self.atoms.len() {
            if !self.implicit[i] {
                continue;
            }
            let allowed = valences(&self.atoms[i].element).expect("organic subset");
            let incident = self.bonds.iter().filter(|b| b.a == i || b.b == i);
            if self.atoms[i].aromatic {
                // aromatic bonds count once; the delocalized electron takes one more
                let used: u32 = incident
                    .map(|b| match b.order {
                        BondOrder::Aromatic => 1,
                        o => o.value() as u32,
                    })
                    .sum();
                self.atoms[i].hydrogens = allowed[0].saturating_sub(used + 1);
            } else {
                let used = incident.map(|b| b.order.value()).sum::<f64>().ceil() as u32;
                let target = allowed.iter().copied().find(|&v| v >= used).ok_or_else(|| {
                    err(
                        self.positions[i],
                        format!("valence {used} exceeds {} limit", self.atoms[i].element),
                    )
                })?;
                self.atoms[i].hydrogens = target - used;
            }
        }
        Ok(())
    }
}

/// Parses the supported SMILES subset. Error positions are byte offsets.
pub fn parse_smiles(s: &str) -> Result<MolGraph, MolError> {
    let mut p = Parser {
        s: s.trim().as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        implicit: Vec::new(),
        positions: Vec::new(),
    };
    p.parse()?;
    p.assign_hydrogens()?;
    Ok(MolGraph {
        id: String::new(),
        atoms: p.atoms,
        bonds: p.bonds,
    })
}
