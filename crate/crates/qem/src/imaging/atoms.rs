use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use crate::error::{Error, Result};
use crate::physics::{BeamModel, ME_C2_EV};

use super::{GridSpec, PixelImage};

/// ħc in eV·nm.
pub const HBAR_C_EV_NM: f64 = 197.326_980_4;
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;
pub const WATER_MASS_U: f64 = 18.015;
/// Low-density amorphous ice, kg/m³.
pub const LDA_ICE_DENSITY: f64 = 930.0;

/// 2πħ²/(m_e e) in V·nm².
pub fn potential_per_amplitude() -> f64 {
    2.0 * PI * HBAR_C_EV_NM * HBAR_C_EV_NM / ME_C2_EV
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    C,
    N,
    O,
    S,
}

impl Element {
    pub const ALL: [Element; 5] = [Element::H, Element::C, Element::N, Element::O, Element::S];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::S => "S",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Element {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H" => Ok(Element::H),
            "C" => Ok(Element::C),
            "N" => Ok(Element::N),
            "O" => Ok(Element::O),
            "S" => Ok(Element::S),
            other => Err(Error::Input(format!("unsupported element '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementTable {
    /// V_i in V·nm³.
    pub inner_potential: [f64; 5],
    /// Mask radii a_i in nm.
    pub radius: [f64; 5],
}

impl Default for ElementTable {
    fn default() -> Self {
        Self { inner_potential: [0.0253, 0.118, 0.106, 0.095, 0.246], radius: [0.0, 0.180, 0.164, 0.144, 0.177] }
    }
}

impl ElementTable {
    pub fn inner_potential(&self, e: Element) -> f64 {
        self.inner_potential[e.index()]
    }

    pub fn radius(&self, e: Element) -> f64 {
        self.radius[e.index()]
    }

    /// f(0) in nm from V_i = sqrt(1 − v²/c²)·(2πħ²/m_e e)·f(0).
    pub fn scattering_amplitude_nm(&self, e: Element, beam: &BeamModel) -> f64 {
        beam.gamma * self.inner_potential(e) / potential_per_amplitude()
    }
}

/// Phase per projected potential, σ = λγ/(2πħ²/m_e e), in rad/(V·nm).
pub fn interaction_constant(beam: &BeamModel) -> f64 {
    beam.wavelength_nm * beam.gamma / potential_per_amplitude()
}

/// Molecular volume of water in LDA ice, nm³.
pub fn water_molecular_volume() -> f64 {
    WATER_MASS_U * ATOMIC_MASS_KG / LDA_ICE_DENSITY * 1e27
}

/// (2V_H + V_O)/v_water in volts.
pub fn mean_ice_potential(table: &ElementTable) -> f64 {
    (2.0 * table.inner_potential(Element::H) + table.inner_potential(Element::O)) / water_molecular_volume()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: Element,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub residue: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomList {
    pub atoms: Vec<Atom>,
}

impl AtomList {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.iter().any(|a| !(a.x.is_finite() && a.y.is_finite() && a.z.is_finite())) {
            return Err(Error::Input("atom coordinates must be finite".into()));
        }
        Ok(Self { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `element x y z [residue]` per line, nm; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 4 || f.len() > 5 {
                return Err(Error::Input(format!("line {}: expected 'element x y z [residue]'", ln + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Input(format!("line {}: {e}", ln + 1)));
            atoms.push(Atom {
                element: f[0].parse()?,
                x: num(f[1])?,
                y: num(f[2])?,
                z: num(f[3])?,
                residue: f.get(4).map(|s| s.to_string()),
            });
        }
        Self::new(atoms)
    }

    /// ATOM/HETATM records of a PDB file; Å converted to nm.
    pub fn parse_pdb(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if !(line.starts_with("ATOM") || line.starts_with("HETATM")) {
                continue;
            }
            let col = |a: usize, b: usize| line.get(a..b.min(line.len())).unwrap_or("").trim();
            let num = |a, b| {
                col(a, b).parse::<f64>().map_err(|e| Error::Input(format!("line {}: bad coordinate: {e}", ln + 1)))
            };
            let elem = match col(76, 78) {
                "" => col(12, 16).trim_start_matches(|c: char| c.is_ascii_digit()).chars().take(1).collect(),
                s => s.to_string(),
            };
            let residue = col(17, 20);
            atoms.push(Atom {
                element: elem.parse().map_err(|e| Error::Input(format!("line {}: {e}", ln + 1)))?,
                x: 0.1 * num(30, 38)?,
                y: 0.1 * num(38, 46)?,
                z: 0.1 * num(46, 54)?,
                residue: (!residue.is_empty()).then(|| residue.to_string()),
            });
        }
        Self::new(atoms)
    }

    /// PDB for `.pdb`/`.ent`, plain text otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "pdb" || e == "ent" => Self::parse_pdb(&text),
            _ => Self::parse_text(&text),
        }
    }

    /// Copy with the xy centroid moved to the origin.
    pub fn centered_xy(&self) -> Self {
        if self.atoms.is_empty() {
            return self.clone();
        }
        let n = self.atoms.len() as f64;
        let cx = self.atoms.iter().map(|a| a.x).sum::<f64>() / n;
        let cy = self.atoms.iter().map(|a| a.y).sum::<f64>() / n;
        let atoms = self.atoms.iter().map(|a| Atom { x: a.x - cx, y: a.y - cy, ..a.clone() }).collect();
        Self { atoms }
    }
}

/// Implicit hydrogens: each heavy atom of element X carries `per_heavy[X]`
/// extra H amplitudes. Explicit H atoms are always used as given.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HydrogenModel {
    pub per_heavy: [f64; 5],
}

impl HydrogenModel {
    pub fn set(&mut self, e: Element, count: f64) {
        self.per_heavy[e.index()] = count;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMapOptions {
    /// Gaussian smoothing width, nm.
    pub blur_nm: f64,
    pub hydrogen: HydrogenModel,
    /// Uniform ice outside the radius mask.
    pub water: bool,
    /// Move the xy centroid of the atoms to the image centre first.
    pub center: bool,
    pub mean_subtract: bool,
}

impl Default for PhaseMapOptions {
    fn default() -> Self {
        Self { blur_nm: 0.1, hydrogen: HydrogenModel::default(), water: false, center: true, mean_subtract: true }
    }
}

/// Fraction of a unit Gaussian at `x0` falling in each pixel along one axis;
/// indices wrap periodically. Returns (first index, weights).
fn axis_weights(x0: f64, n: usize, l: f64, sigma: f64) -> (i64, Vec<f64>) {
    let half = (n / 2) as f64;
    let centre = (x0 / l).round() as i64;
    if sigma <= 0.0 {
        return (centre + half as i64, vec![1.0]);
    }
    let reach = (6.0 * sigma / l).ceil() as i64 + 1;
    let s = SQRT_2 * sigma;
    let w = (-reach..=reach)
        .map(|d| {
            let c = (centre + d) as f64 * l;
            0.5 * (libm::erf((c + 0.5 * l - x0) / s) - libm::erf((c - 0.5 * l - x0) / s))
        })
        .collect();
    (centre - reach + half as i64, w)
}

/// θ(x, y) = λΣ f_s·G(r − r_s), Gaussian G integrated over each pixel.
pub fn phase_map_from_atoms(
    atoms: &AtomList,
    table: &ElementTable,
    grid: GridSpec,
    beam: &BeamModel,
    opts: &PhaseMapOptions,
) -> Result<PixelImage> {
    let grid = GridSpec::new(grid.rows, grid.cols, grid.pixel_nm)?;
    if !(opts.blur_nm >= 0.0) {
        return Err(Error::Domain("blur width must be non-negative".into()));
    }
    let atoms = if opts.center { atoms.centered_xy() } else { atoms.clone() };
    let l = grid.pixel_nm;
    let (hx, hy) = (grid.cols as f64 * l / 2.0, grid.rows as f64 * l / 2.0);
    if let Some(a) = atoms.atoms.iter().find(|a| a.x < -hx || a.x >= hx || a.y < -hy || a.y >= hy) {
        return Err(Error::Input(format!(
            "{} atom at ({:.3}, {:.3}) nm lies outside the {:.2} x {:.2} nm image",
            a.element.symbol(),
            a.x,
            a.y,
            2.0 * hx,
            2.0 * hy
        )));
    }
    let f_h = table.scattering_amplitude_nm(Element::H, beam);
    let mut img = PixelImage::zeros(grid);
    for a in &atoms.atoms {
        let f = table.scattering_amplitude_nm(a.element, beam)
            + if a.element == Element::H { 0.0 } else { opts.hydrogen.per_heavy[a.element.index()] * f_h };
        let amp = beam.wavelength_nm * f / (l * l);
        let (c0, wx) = axis_weights(a.x, grid.cols, l, opts.blur_nm);
        let (r0, wy) = axis_weights(a.y, grid.rows, l, opts.blur_nm);
        for (dr, vy) in wy.iter().enumerate() {
            let row = crate::fft::wrap(r0 + dr as i64, grid.rows);
            let base = row * grid.cols;
            for (dc, vx) in wx.iter().enumerate() {
                img.data[base + crate::fft::wrap(c0 + dc as i64, grid.cols)] += amp * vy * vx;
            }
        }
    }
    if opts.water && !atoms.is_empty() {
        let mask = Mask3::from_atoms(&atoms, table, grid)?;
        let per_nm = interaction_constant(beam) * mean_ice_potential(table);
        for (v, t) in img.data.iter_mut().zip(mask.projected_thickness()) {
            *v -= per_nm * t;
        }
    }
    if opts.mean_subtract {
        img.subtract_mean();
    }
    Ok(img)
}

/// Voxelized molecule indicator (true inside), xy aligned with an image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3 {
    pub grid: GridSpec,
    pub nz: usize,
    pub voxel_z_nm: f64,
    pub z0: f64,
    pub inside: Vec<bool>,
}

impl Mask3 {
    pub fn empty(grid: GridSpec, nz: usize, voxel_z_nm: f64) -> Self {
        Self { grid, nz, voxel_z_nm, z0: 0.0, inside: vec![false; grid.len() * nz] }
    }

    /// Union of spheres of the element radii; voxel height equals the pixel size.
    pub fn from_atoms(atoms: &AtomList, table: &ElementTable, grid: GridSpec) -> Result<Self> {
        let l = grid.pixel_nm;
        let body: Vec<(&Atom, f64)> =
            atoms.atoms.iter().map(|a| (a, table.radius(a.element))).filter(|(_, r)| *r > 0.0).collect();
        if body.is_empty() {
            return Ok(Self::empty(grid, 1, l));
        }
        let zmin = body.iter().map(|(a, r)| a.z - r).fold(f64::INFINITY, f64::min);
        let zmax = body.iter().map(|(a, r)| a.z + r).fold(f64::NEG_INFINITY, f64::max);
        let nz = ((zmax - zmin) / l).ceil().max(1.0) as usize;
        let mut m = Self { grid, nz, voxel_z_nm: l, z0: zmin, inside: vec![false; grid.len() * nz] };
        let (hr, hc) = ((grid.rows / 2) as f64, (grid.cols / 2) as f64);
        for (a, rad) in body {
            let span = |c: f64, half: f64, n: usize| {
                let lo = ((c - rad) / l + half).floor().max(0.0) as usize;
                let hi = (((c + rad) / l + half).ceil().max(0.0) as usize).min(n - 1);
                (lo, hi)
            };
            let (c_lo, c_hi) = span(a.x, hc, grid.cols);
            let (r_lo, r_hi) = span(a.y, hr, grid.rows);
            let k_lo = ((a.z - rad - zmin) / l).floor().max(0.0) as usize;
            let k_hi = (((a.z + rad - zmin) / l).ceil() as usize).min(nz - 1);
            for r in r_lo..=r_hi {
                let dy = grid.coord(r, grid.rows) - a.y;
                for c in c_lo..=c_hi {
                    let dx = grid.coord(c, grid.cols) - a.x;
                    for k in k_lo..=k_hi {
                        let dz = zmin + (k as f64 + 0.5) * l - a.z;
                        if dx * dx + dy * dy + dz * dz <= rad * rad {
                            m.inside[(r * grid.cols + c) * nz + k] = true;
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// ∫(1 − m)dz per pixel, nm.
    pub fn projected_thickness(&self) -> Vec<f64> {
        self.inside.chunks(self.nz).map(|col| col.iter().filter(|&&b| b).count() as f64 * self.voxel_z_nm).collect()
    }
}

/// Area of pixels whose projected occupancy is strictly positive, nm².
pub fn molecule_area(mask: &Mask3) -> f64 {
    let px = mask.grid.pixel_nm * mask.grid.pixel_nm;
    mask.projected_thickness().iter().filter(|&&t| t > 0.0).count() as f64 * px
}

/// Random C/N/O/S atoms filling an ellipsoid with semi-axes `radii` (nm) at
/// roughly protein density (about 50 heavy atoms per nm³).
pub fn synthetic_specimen(radii: [f64; 3], seed: u64) -> Result<AtomList> {
    use rand::Rng as _;
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("ellipsoid radii must be positive".into()));
    }
    let volume = 4.0 / 3.0 * PI * radii[0] * radii[1] * radii[2];
    let n = (50.0 * volume).round() as usize;
    let mut r = crate::rng::stream(seed, 0x61746f6d);
    let mut atoms = Vec::with_capacity(n);
    while atoms.len() < n {
        let p: [f64; 3] = std::array::from_fn(|i| r.random_range(-radii[i]..radii[i]));
        if p.iter().zip(&radii).map(|(x, a)| (x / a).powi(2)).sum::<f64>() > 1.0 {
            continue;
        }
        // rough protein composition by heavy-atom count
        let u: f64 = r.random();
        let element = match u {
            u if u < 0.63 => Element::C,
            u if u < 0.80 => Element::N,
            u if u < 0.99 => Element::O,
            _ => Element::S,
        };
        atoms.push(Atom { element, x: p[0], y: p[1], z: p[2], residue: None });
    }
    AtomList::new(atoms)
}
