//! Three-way verdicts for checkers.
//!
//! Every checker in this crate reports one of three outcomes: the property
//! holds with a certificate, it fails with a witness, or the computation
//! cannot decide (typically because some intermediate set was only an outer
//! estimate). `Holds` and `Fails` carry checker-specific evidence types;
//! `Inconclusive` carries a human-readable reason.

use alloc::string::String;

/// Outcome of a check, with evidence.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict<H, F> {
    /// The property holds; the payload is a machine-checkable certificate.
    Holds(H),
    /// The property fails; the payload is a concrete witness.
    Fails(F),
    /// Neither direction could be certified; the payload explains why.
    Inconclusive(String),
}

impl<H, F> Verdict<H, F> {
    pub fn is_holds(&self) -> bool {
        matches!(self, Verdict::Holds(_))
    }

    pub fn is_fails(&self) -> bool {
        matches!(self, Verdict::Fails(_))
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Verdict::Inconclusive(_))
    }

    /// Short status label, used by reports.
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds(_) => "holds",
            Verdict::Fails(_) => "fails",
            Verdict::Inconclusive(_) => "inconclusive",
        }
    }
}

/// Three-valued membership answer for set queries backed by sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    In,
    Out,
    Borderline,
}

impl Membership {
    pub fn label(&self) -> &'static str {
        match self {
            Membership::In => "in",
            Membership::Out => "out",
            Membership::Borderline => "borderline",
        }
    }
}
