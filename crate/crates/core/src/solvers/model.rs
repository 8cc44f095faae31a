use std::fmt;
use std::str::FromStr;

use super::params::SolverParams;
use crate::error::{Error, Result};

/// The reconstruction models the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    AnalysisPet,
    AnalysisMri,
    DdtfPet,
    DdtfMri,
    Janal,
    Jstf,
    Jsddtf,
}

impl Model {
    pub const ALL: [Model; 7] = [
        Model::AnalysisPet,
        Model::AnalysisMri,
        Model::DdtfPet,
        Model::DdtfMri,
        Model::Janal,
        Model::Jstf,
        Model::Jsddtf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::AnalysisPet => "analysis-pet",
            Model::AnalysisMri => "analysis-mri",
            Model::DdtfPet => "ddtf-pet",
            Model::DdtfMri => "ddtf-mri",
            Model::Janal => "janal",
            Model::Jstf => "jstf",
            Model::Jsddtf => "jsddtf",
        }
    }

    /// Column of the comparison table this model reports under.
    pub fn family(self) -> &'static str {
        match self {
            Model::AnalysisPet | Model::AnalysisMri => "Analysis",
            Model::DdtfPet | Model::DdtfMri => "DDTF",
            Model::Janal => "JAnal",
            Model::Jstf => "JSTF",
            Model::Jsddtf => "JSDDTF",
        }
    }

    pub fn reconstructs_pet(self) -> bool {
        !matches!(self, Model::AnalysisMri | Model::DdtfMri)
    }

    pub fn reconstructs_mri(self) -> bool {
        !matches!(self, Model::AnalysisPet | Model::DdtfPet)
    }

    /// Split Bregman models iterate to a splitting residual, the others run
    /// alternating minimization.
    pub fn uses_split_bregman(self) -> bool {
        matches!(self, Model::AnalysisPet | Model::AnalysisMri | Model::Janal)
    }

    /// Default parameters. The sparsity weights were tuned on the 64×64
    /// phantoms with the default acquisition.
    pub fn default_params(self) -> SolverParams {
        let base = SolverParams::default();
        match self {
            Model::AnalysisPet | Model::AnalysisMri => SolverParams {
                lambda1: 1e-3,
                lambda2: 3e-3,
                outer_iters: 300,
                ..base
            },
            Model::Janal => SolverParams { lambda: 3e-3, outer_iters: 300, ..base },
            Model::DdtfPet | Model::DdtfMri => SolverParams { lambda1: 1e-4, lambda2: 1e-4, ..base },
            Model::Jstf | Model::Jsddtf => SolverParams { lambda: 3e-4, ..base },
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Model::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown model {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
            m.default_params().validate().unwrap();
        }
        assert!(matches!("qpls".parse::<Model>(), Err(Error::Config(_))));
    }
}
