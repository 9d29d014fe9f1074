//! Physical constants (CODATA 2018 / AME 2020), recorded once in `f64`.

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Atomic mass constant, kg.
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;

/// Electron mass, u.
pub const ELECTRON_MASS_U: f64 = 5.485_799_090_65e-4;

/// Calcium-40 atomic mass, u (9 significant figures kept deliberately:
/// spectral-density conversions are sensitive to this value).
pub const CA40_ATOM_MASS_U: f64 = 39.962_590_863;

/// Mass of a singly ionized calcium-40 ion, kg (atom minus one electron).
pub const CA40_ION_MASS_KG: f64 = (CA40_ATOM_MASS_U - ELECTRON_MASS_U) * ATOMIC_MASS;
