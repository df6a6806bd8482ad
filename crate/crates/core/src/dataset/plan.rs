use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{lookup, FrictionVariant, Protocol, Scenario};

/// Parameter sets for one collection protocol; scenarios are their full
/// Cartesian product per object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionPlan {
    pub protocol: Protocol,
    pub approach_angles: Vec<f64>,
    pub perturb_angles: Vec<f64>,
    #[serde(default)]
    pub stop_angles: Vec<f64>,
    pub repeats: u32,
    pub friction_variants: Vec<FrictionVariant>,
}

impl CollectionPlan {
    /// The data-collection parameter sets, nominal friction only.
    pub fn paper(protocol: Protocol) -> Self {
        match protocol {
            Protocol::RotateToStop => CollectionPlan {
                protocol,
                approach_angles: vec![-30.0, -15.0, 0.0, 15.0, 30.0],
                perturb_angles: vec![-45.0, 0.0, 15.0, 30.0, 45.0, 60.0],
                stop_angles: Vec::new(),
                repeats: 1,
                friction_variants: vec![FrictionVariant::Nominal],
            },
            Protocol::AngleGoal => CollectionPlan {
                protocol,
                approach_angles: vec![-15.0, 0.0],
                perturb_angles: vec![0.0, 30.0, 45.0, 60.0],
                stop_angles: vec![15.0, 30.0, 45.0],
                repeats: 2,
                friction_variants: vec![FrictionVariant::Nominal],
            },
        }
    }

    /// The closed-loop experiment grid (approach × stop, no perturbation).
    pub fn experiment_grid() -> Self {
        CollectionPlan {
            protocol: Protocol::AngleGoal,
            approach_angles: vec![-30.0, 0.0, 30.0],
            perturb_angles: vec![0.0],
            stop_angles: vec![30.0, 45.0, 60.0],
            repeats: 1,
            friction_variants: vec![FrictionVariant::Nominal],
        }
    }

    pub fn with_both_variants(mut self) -> Self {
        self.friction_variants = vec![FrictionVariant::Nominal, FrictionVariant::Taped];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.approach_angles.is_empty() || self.perturb_angles.is_empty() || self.friction_variants.is_empty() {
            return Err(Error::invalid("plan needs approach, perturb and friction values"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("plan repeats must be at least 1"));
        }
        match self.protocol {
            Protocol::AngleGoal if self.stop_angles.is_empty() => {
                Err(Error::invalid("angle-goal plan needs at least one stop angle"))
            }
            Protocol::RotateToStop if !self.stop_angles.is_empty() => {
                Err(Error::invalid("rotate-to-stop plan takes no stop angles"))
            }
            _ => Ok(()),
        }
    }

    /// Scenarios per object.
    pub fn scenarios_per_object(&self) -> usize {
        let stops = self.stop_angles.len().max(1);
        self.approach_angles.len()
            * self.perturb_angles.len()
            * stops
            * self.repeats as usize
            * self.friction_variants.len()
    }
}

/// Expands a plan over objects, in object → friction → approach → perturb →
/// stop → repeat order. Scenario seeds derive from `seed` and the position
/// in that order.
pub fn generate_plan(plan: &CollectionPlan, objects: &[String], seed: u64) -> Result<Vec<Scenario>> {
    if objects.is_empty() {
        return Err(Error::invalid("collection plan needs at least one object"));
    }
    plan.validate()?;
    let stops: Vec<Option<f64>> = if plan.protocol == Protocol::AngleGoal {
        plan.stop_angles.iter().map(|s| Some(*s)).collect()
    } else {
        vec![None]
    };
    let mut out = Vec::new();
    for name in objects {
        let canonical = lookup(name)?.name;
        for &friction in &plan.friction_variants {
            for &approach_deg in &plan.approach_angles {
                for &perturb_deg in &plan.perturb_angles {
                    for &stop_deg in &stops {
                        for repeat in 0..plan.repeats {
                            let s = Scenario {
                                object: canonical.clone(),
                                protocol: plan.protocol,
                                approach_deg,
                                perturb_deg,
                                stop_deg,
                                friction,
                                // Kept within i64 so manifests stay valid TOML.
                                seed: rng::derive(seed, plan.protocol.as_str(), out.len() as u64) >> 1,
                                repeat,
                            };
                            s.validate()?;
                            out.push(s);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
