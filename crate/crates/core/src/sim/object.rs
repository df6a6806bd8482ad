use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectClass {
    Box,
    Cylinder,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Box => "Box",
            ObjectClass::Cylinder => "Cylinder",
        }
    }
}

impl std::str::FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "box" => Ok(ObjectClass::Box),
            "cylinder" | "cyl" => Ok(ObjectClass::Cylinder),
            _ => Err(Error::invalid(format!("unknown object class {s:?}"))),
        }
    }
}

/// Physical description of a prism-like object held in the gripper.
///
/// Lengths are in metres and mass in kilograms. For cylinders `width` and
/// `depth` are both the diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProfile {
    pub name: String,
    pub class: ObjectClass,
    pub mass: f64,
    pub length: f64,
    pub width: f64,
    pub depth: f64,
    /// Distance from the grip point to the centre of mass along the long axis.
    pub com_offset: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Effective lever arm of the fingertip friction torque.
    pub pad_contact_radius: f64,
    #[serde(default)]
    pub deformable: bool,
}

/// Default centre-of-mass offset as a fraction of the object length.
pub const COM_FRACTION: f64 = 0.3;
pub const DEFAULT_MU_STATIC: f64 = 0.5;
/// Kinetic friction is kept close to static friction so slip starts smoothly.
pub const DEFAULT_MU_RATIO: f64 = 0.98;
/// Pad compression (mm) at which each catalog object is exactly at the slip
/// threshold when held horizontally.
pub const THRESHOLD_COMPRESSION_MM: f64 = 5.0;
/// Pad stiffness assumed when deriving catalog contact radii.
pub const CATALOG_PAD_STIFFNESS: f64 = 1.0;

impl ObjectProfile {
    /// Thickness squeezed between the fingertips, in millimetres.
    pub fn grip_thickness_mm(&self) -> f64 {
        self.depth.min(self.width) * 1000.0
    }

    /// Moment of inertia about the centre of mass for rotation about the grip axis.
    pub fn inertia_com(&self) -> f64 {
        match self.class {
            // Rotation in the length x width plane.
            ObjectClass::Box => self.mass * (self.length.powi(2) + self.width.powi(2)) / 12.0,
            // Solid cylinder spinning about a diameter.
            ObjectClass::Cylinder => {
                let r = 0.5 * self.width;
                self.mass * (3.0 * r * r + self.length.powi(2)) / 12.0
            }
        }
    }

    /// Inertia about the grip axis (parallel axis theorem).
    pub fn inertia_grip(&self) -> f64 {
        self.inertia_com() + self.mass * self.com_offset.powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mass,
            self.length,
            self.width,
            self.depth,
            self.com_offset,
            self.mu_static,
            self.mu_kinetic,
            self.pad_contact_radius,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("object {}", self.name)));
        }
        if self.mass <= 0.0 {
            return Err(Error::invalid(format!("{}: mass must be positive", self.name)));
        }
        if !(self.length > self.width && self.length > self.depth) || self.width <= 0.0 || self.depth <= 0.0 {
            return Err(Error::invalid(format!(
                "{}: object must be prism-like (length > width, depth > 0)",
                self.name
            )));
        }
        if !(self.com_offset > 0.0 && self.com_offset <= self.length) {
            return Err(Error::invalid(format!(
                "{}: com_offset must lie in (0, length]",
                self.name
            )));
        }
        if !(0.0 <= self.mu_kinetic && self.mu_kinetic <= self.mu_static) {
            return Err(Error::invalid(format!(
                "{}: need 0 <= mu_kinetic <= mu_static",
                self.name
            )));
        }
        if self.pad_contact_radius < 0.0 {
            return Err(Error::invalid(format!(
                "{}: pad_contact_radius must be non-negative",
                self.name
            )));
        }
        Ok(())
    }

    /// Copy with both friction coefficients scaled (the "taped" variant).
    pub fn with_friction_scale(&self, scale: f64) -> Self {
        ObjectProfile {
            mu_static: self.mu_static * scale,
            mu_kinetic: self.mu_kinetic * scale,
            ..self.clone()
        }
    }

    /// Copy with zero friction; used by diagnostics.
    pub fn frictionless(&self) -> Self {
        self.with_friction_scale(0.0)
    }
}

struct CatalogEntry {
    name: &'static str,
    class: ObjectClass,
    /// mm; for cylinders `(diameter, height)`, for boxes `(length, width, depth)`.
    dims: [f64; 3],
    mass_g: f64,
    deformable: bool,
}

const CATALOG: [CatalogEntry; 10] = [
    CatalogEntry {
        name: "Toothpaste",
        class: ObjectClass::Box,
        dims: [167.0, 58.0, 12.0],
        mass_g: 52.0,
        deformable: true,
    },
    CatalogEntry {
        name: "Earbud",
        class: ObjectClass::Box,
        dims: [134.0, 51.0, 29.0],
        mass_g: 27.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Breadboard",
        class: ObjectClass::Box,
        dims: [167.0, 58.0, 12.0],
        mass_g: 84.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Magnet",
        class: ObjectClass::Box,
        dims: [181.0, 68.0, 40.0],
        mass_g: 29.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Deodorant",
        class: ObjectClass::Cylinder,
        dims: [49.0, 210.0, 0.0],
        mass_g: 50.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Spray2",
        class: ObjectClass::Cylinder,
        dims: [41.0, 158.0, 0.0],
        mass_g: 135.0,
        deformable: true,
    },
    CatalogEntry {
        name: "Shampoo",
        class: ObjectClass::Cylinder,
        dims: [50.0, 157.0, 0.0],
        mass_g: 96.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Spray1",
        class: ObjectClass::Cylinder,
        dims: [37.0, 142.0, 0.0],
        mass_g: 46.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Pill",
        class: ObjectClass::Cylinder,
        dims: [55.0, 116.0, 0.0],
        mass_g: 26.0,
        deformable: false,
    },
    CatalogEntry {
        name: "Toothbrush",
        class: ObjectClass::Box,
        dims: [217.0, 29.0, 21.0],
        mass_g: 33.0,
        deformable: false,
    },
];

impl CatalogEntry {
    fn profile(&self) -> ObjectProfile {
        let m = |mm: f64| mm / 1000.0;
        let (length, width, depth) = match self.class {
            ObjectClass::Box => (m(self.dims[0]), m(self.dims[1]), m(self.dims[2])),
            ObjectClass::Cylinder => (m(self.dims[1]), m(self.dims[0]), m(self.dims[0])),
        };
        let mass = self.mass_g / 1000.0;
        let com_offset = COM_FRACTION * length;
        // Contact radius chosen so the horizontal hold threshold sits at a
        // fixed pad compression for every object.
        let holding_torque = mass * GRAVITY * com_offset;
        let threshold_force = CATALOG_PAD_STIFFNESS * THRESHOLD_COMPRESSION_MM;
        let pad_contact_radius = holding_torque / (2.0 * DEFAULT_MU_STATIC * threshold_force);
        ObjectProfile {
            name: self.name.to_string(),
            class: self.class,
            mass,
            length,
            width,
            depth,
            com_offset,
            mu_static: DEFAULT_MU_STATIC,
            mu_kinetic: DEFAULT_MU_STATIC * DEFAULT_MU_RATIO,
            pad_contact_radius,
            deformable: self.deformable,
        }
    }
}

/// The ten household objects, in table order.
pub fn catalog() -> Vec<ObjectProfile> {
    CATALOG.iter().map(CatalogEntry::profile).collect()
}

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|e| e.name).collect()
}

/// Looks up a catalog object by case-insensitive name.
pub fn lookup(name: &str) -> Result<ObjectProfile> {
    CATALOG
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .map(CatalogEntry::profile)
        .ok_or_else(|| Error::UnknownObject {
            name: name.to_string(),
            valid: catalog_names().join(", "),
        })
}
