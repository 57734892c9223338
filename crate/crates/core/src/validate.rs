//! Independent colouring checker.
//!
//! Deliberately shares no code with the engine or finisher: it walks vertex
//! incidence lists and looks colour pairs up in the raw matching tables.

use serde::Serialize;

use crate::correspondence::{Colour, Colouring, EdgeCorrespondence};
use crate::graph::{EdgeId, SimpleGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Problem {
    WrongLength { expected: usize, found: usize },
    Uncoloured { edge: EdgeId },
    OutOfRange { edge: EdgeId, colour: Colour },
    Conflict { e: EdgeId, f: EdgeId, ce: Colour, cf: Colour },
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Problem::WrongLength { expected, found } => write!(f, "colouring has {found} entries, graph has {expected} edges"),
            Problem::Uncoloured { edge } => write!(f, "edge {edge} is uncoloured"),
            Problem::OutOfRange { edge, colour } => write!(f, "edge {edge} has colour {colour} outside the palette"),
            Problem::Conflict { e, f: g, ce, cf } => write!(f, "{ce} on edge {e} blocks {cf} on edge {g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub problems: Vec<Problem>,
}

impl Report {
    pub fn is_valid(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks a total colouring.
pub fn validate_colouring(graph: &SimpleGraph, corr: &EdgeCorrespondence, colouring: &Colouring) -> Report {
    check(graph, corr, colouring, true)
}

/// Checks the coloured part of a partial colouring.
pub fn validate_partial(graph: &SimpleGraph, corr: &EdgeCorrespondence, colouring: &Colouring) -> Report {
    check(graph, corr, colouring, false)
}

fn check(graph: &SimpleGraph, corr: &EdgeCorrespondence, colouring: &Colouring, total: bool) -> Report {
    let mut problems = Vec::new();
    let colours = colouring.as_slice();
    if colours.len() != graph.edge_count() {
        problems.push(Problem::WrongLength {
            expected: graph.edge_count(),
            found: colours.len(),
        });
        return Report { problems };
    }
    for (e, c) in colours.iter().enumerate() {
        match c {
            None if total => problems.push(Problem::Uncoloured { edge: e as EdgeId }),
            Some(c) if *c < 1 || *c > corr.q() => problems.push(Problem::OutOfRange {
                edge: e as EdgeId,
                colour: *c,
            }),
            _ => {}
        }
    }
    for v in 0..graph.vertex_count() {
        let at = graph.edges_at(v);
        for (i, &a) in at.iter().enumerate() {
            for &b in &at[i + 1..] {
                let (e, f) = (a.min(b), a.max(b));
                let (Some(ce), Some(cf)) = (colours[e as usize], colours[f as usize]) else {
                    continue;
                };
                let Some(m) = corr.matchings().get(&(e, f)) else {
                    continue;
                };
                if m.pairs().iter().any(|&(x, y)| x == ce && y == cf) {
                    problems.push(Problem::Conflict { e, f, ce, cf });
                }
            }
        }
    }
    Report { problems }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{identity_correspondence, shift_correspondence};
    use crate::graph::{gen_cycle, gen_path};

    #[test]
    fn identity_path() {
        let g = gen_path(3).unwrap();
        let c = identity_correspondence(&g, 2).unwrap();
        assert!(validate_colouring(&g, &c, &Colouring::from_total(&[1, 2])).is_valid());
        let bad = validate_colouring(&g, &c, &Colouring::from_total(&[2, 2]));
        assert_eq!(bad.problems, vec![Problem::Conflict { e: 0, f: 1, ce: 2, cf: 2 }]);
    }

    #[test]
    fn partial_and_range() {
        let g = gen_path(3).unwrap();
        let c = identity_correspondence(&g, 2).unwrap();
        let partial = Colouring::from_options(vec![Some(1), None]);
        assert!(validate_partial(&g, &c, &partial).is_valid());
        assert!(!validate_colouring(&g, &c, &partial).is_valid());
        let r = validate_colouring(&g, &c, &Colouring::from_total(&[1, 3]));
        assert_eq!(r.problems, vec![Problem::OutOfRange { edge: 1, colour: 3 }]);
        let r = validate_colouring(&g, &c, &Colouring::from_total(&[1]));
        assert!(matches!(r.problems[0], Problem::WrongLength { .. }));
    }

    #[test]
    fn shifted_pair_is_directional() {
        // one shifted pair on C4: (c, c%2+1) forbids 1-2 and 2-1 but allows equal colours
        let g = gen_cycle(4).unwrap();
        let c = shift_correspondence(&g, 2, &[(0, 1)]).unwrap();
        assert!(validate_partial(&g, &c, &Colouring::from_options(vec![Some(1), Some(1), None, None])).is_valid());
        assert!(!validate_partial(&g, &c, &Colouring::from_options(vec![Some(1), Some(2), None, None])).is_valid());
    }
}
