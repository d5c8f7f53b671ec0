//! C ABI over `qem`.
//!
//! Every fallible call returns a `QemStatus`; on failure the message is kept
//! per thread and read back with `qem_last_error`. Handles are opaque and
//! released with their `_free` function (null is accepted).

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use qem::classical_baselines::{self as cb, MeasurementScheme, SchemeKind};
use qem::cli::RunConfig;
use qem::imaging::{self, AtomList, ElementTable, GridSpec, PhaseMapOptions, PixelImage};
use qem::isn_analysis;
use qem::physics::{BeamModel, DoseModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QemStatus {
    Ok = 0,
    Domain = 1,
    Config = 2,
    Input = 3,
    Numeric = 4,
    Sampling = 5,
    Io = 6,
    NullPointer = 7,
    InvalidUtf8 = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

pub struct QemBeam(BeamModel);
pub struct QemConfig(RunConfig);
pub struct QemImage(PixelImage);

/// Discrete reference schemes, in the order of `SchemeKind::ALL`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QemScheme {
    InFocusPhaseContrast = 0,
    DarkField = 1,
    Diffraction = 2,
    DiscreteNPixel = 3,
    ScanningPairwise = 4,
}

impl From<QemScheme> for SchemeKind {
    fn from(s: QemScheme) -> Self {
        match s {
            QemScheme::InFocusPhaseContrast => SchemeKind::InFocusPhaseContrast,
            QemScheme::DarkField => SchemeKind::DarkField,
            QemScheme::Diffraction => SchemeKind::Diffraction,
            QemScheme::DiscreteNPixel => SchemeKind::DiscreteNPixel,
            QemScheme::ScanningPairwise => SchemeKind::ScanningPairwise,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(QemStatus, String);

impl From<qem::Error> for Fail {
    fn from(e: qem::Error) -> Self {
        use qem::Error::*;
        let s = match e {
            Domain(_) => QemStatus::Domain,
            Config(_) => QemStatus::Config,
            Input(_) => QemStatus::Input,
            Numeric(_) => QemStatus::Numeric,
            Sampling(_) => QemStatus::Sampling,
            Io(_) => QemStatus::Io,
        };
        Fail(s, e.to_string())
    }
}

type R<T> = std::result::Result<T, Fail>;

fn guard(f: impl FnOnce() -> R<()>) -> QemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QemStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            QemStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> R<&'a str> {
    if p.is_null() {
        return Err(Fail(QemStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(QemStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> R<&'a T> {
    p.as_ref().ok_or_else(|| Fail(QemStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, v: T) -> R<()> {
    if out.is_null() {
        return Err(Fail(QemStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(v);
    Ok(())
}

/// Copies `s` with a terminating NUL; `BufferTooSmall` if `len` is short.
/// `needed` (optional) receives the full size including the NUL.
unsafe fn put_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> R<()> {
    if !needed.is_null() {
        needed.write(s.len() + 1);
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err(Fail(QemStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1)));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qem_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn qem_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qem_beam_new(
    kinetic_energy_ev: f64,
    energy_loss_ev: f64,
    mean_free_path_nm: f64,
    out: *mut *mut QemBeam,
) -> QemStatus {
    guard(|| {
        let b = BeamModel::new(kinetic_energy_ev, energy_loss_ev, mean_free_path_nm)?;
        put(out, Box::into_raw(Box::new(QemBeam(b))))
    })
}

/// # Safety
/// `beam` must come from `qem_beam_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qem_beam_free(beam: *mut QemBeam) {
    if !beam.is_null() {
        drop(Box::from_raw(beam));
    }
}

/// # Safety
/// `beam` valid, outputs writable (each may be null to skip).
#[no_mangle]
pub unsafe extern "C" fn qem_beam_info(
    beam: *const QemBeam,
    wavelength_nm: *mut f64,
    gamma: *mut f64,
    theta_e: *mut f64,
) -> QemStatus {
    guard(|| {
        let b = &obj(beam, "beam")?.0;
        for (p, v) in [(wavelength_nm, b.wavelength_nm), (gamma, b.gamma), (theta_e, qem::physics::theta_e(b))] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Inelastic blur coefficient μ at stripe period `beta` (rad).
///
/// # Safety
/// `beam` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_mu_of_beta(beam: *const QemBeam, beta: f64, out: *mut f64) -> QemStatus {
    guard(|| {
        let mu = isn_analysis::mu_of_beta(beta, &obj(beam, "beam")?.0)?;
        put(out, mu)
    })
}

/// Phase noise of conventional imaging at `beta` (rad) for damage constant
/// `r_nm4` and allocation constant `zeta`.
///
/// # Safety
/// `beam` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_classical_noise(
    beam: *const QemBeam,
    beta: f64,
    r_nm4: f64,
    zeta: f64,
    out: *mut f64,
) -> QemStatus {
    guard(|| {
        let dose = DoseModel::new(r_nm4, zeta, 1.0)?;
        put(out, isn_analysis::classical_noise(beta, &obj(beam, "beam")?.0, &dose))
    })
}

/// Analytic phase variance of a reference scheme.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_scheme_variance(
    scheme: QemScheme,
    electrons: u64,
    n_pixels: u64,
    alpha: f64,
    out: *mut f64,
) -> QemStatus {
    guard(|| {
        let s = MeasurementScheme::new(scheme.into(), electrons, n_pixels)?;
        put(out, cb::variance_analytic(&s, alpha)?)
    })
}

/// # Safety
/// `profile` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_config_new(profile: *const c_char, seed: u64, out: *mut *mut QemConfig) -> QemStatus {
    guard(|| {
        let c = RunConfig::new(str_arg(profile, "profile")?, seed, PathBuf::new())?;
        put(out, Box::into_raw(Box::new(QemConfig(c))))
    })
}

/// # Safety
/// `cfg` from `qem_config_new`, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qem_config_free(cfg: *mut QemConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` valid; `key`, `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn qem_config_set(cfg: *mut QemConfig, key: *const c_char, value: *const c_char) -> QemStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| Fail(QemStatus::NullPointer, "config is null".into()))?;
        c.0.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// Numeric value of `key`.
///
/// # Safety
/// `cfg` valid, `key` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_config_get(cfg: *const QemConfig, key: *const c_char, out: *mut f64) -> QemStatus {
    guard(|| {
        let c = &obj(cfg, "config")?.0;
        let key = str_arg(key, "key")?;
        let v = c
            .values()
            .get(key)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Fail(QemStatus::Config, format!("'{key}' is not a numeric key")))?;
        put(out, v)
    })
}

/// SHA-256 of the canonical configuration, 64 hex digits.
///
/// # Safety
/// `cfg` valid; `buf` holds `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn qem_config_hash(
    cfg: *const QemConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> QemStatus {
    guard(|| put_str(&obj(cfg, "config")?.0.hash(), buf, len, needed))
}

/// Projected phase map of an atom file on a square grid.
///
/// # Safety
/// `path` NUL-terminated, `beam` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_image_from_atoms(
    path: *const c_char,
    beam: *const QemBeam,
    grid: usize,
    pixel_nm: f64,
    out: *mut *mut QemImage,
) -> QemStatus {
    guard(|| {
        let atoms = AtomList::load(std::path::Path::new(str_arg(path, "path")?))?;
        let g = GridSpec::new(grid, grid, pixel_nm)?;
        let img = imaging::phase_map_from_atoms(
            &atoms,
            &ElementTable::default(),
            g,
            &obj(beam, "beam")?.0,
            &PhaseMapOptions::default(),
        )?;
        put(out, Box::into_raw(Box::new(QemImage(img))))
    })
}

/// Image from `rows * cols` row-major values.
///
/// # Safety
/// `data` holds `rows * cols` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_image_from_data(
    data: *const f64,
    rows: usize,
    cols: usize,
    pixel_nm: f64,
    out: *mut *mut QemImage,
) -> QemStatus {
    guard(|| {
        let g = GridSpec::new(rows, cols, pixel_nm)?;
        if data.is_null() {
            return Err(Fail(QemStatus::NullPointer, "data is null".into()));
        }
        let v = std::slice::from_raw_parts(data, g.len()).to_vec();
        put(out, Box::into_raw(Box::new(QemImage(PixelImage::from_data(g, v)?))))
    })
}

/// # Safety
/// `img` from a `qem_image_*` constructor, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qem_image_free(img: *mut QemImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// # Safety
/// `img` valid, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn qem_image_dims(img: *const QemImage, rows: *mut usize, cols: *mut usize) -> QemStatus {
    guard(|| {
        let g = obj(img, "image")?.0.grid;
        put(rows, g.rows)?;
        put(cols, g.cols)
    })
}

/// Copies the row-major pixels into `buf` of `len` doubles.
///
/// # Safety
/// `img` valid, `buf` holds `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qem_image_copy(img: *const QemImage, buf: *mut f64, len: usize) -> QemStatus {
    guard(|| {
        let d = &obj(img, "image")?.0.data;
        if buf.is_null() || len < d.len() {
            return Err(Fail(QemStatus::BufferTooSmall, format!("need {} values", d.len())));
        }
        std::ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        Ok(())
    })
}

/// Band-pass between `beta_l` and `beta_h` (rad) as a new image.
///
/// # Safety
/// `img`, `beam` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qem_image_bandpass(
    img: *const QemImage,
    beam: *const QemBeam,
    beta_l: f64,
    beta_h: f64,
    out: *mut *mut QemImage,
) -> QemStatus {
    guard(|| {
        let b = &obj(beam, "beam")?.0;
        let f = imaging::bandpass(&obj(img, "image")?.0, b.wavelength_nm, beta_l, beta_h)?;
        put(out, Box::into_raw(Box::new(QemImage(f))))
    })
}

/// Runs the command-line front end with `argv[0..argc]`; returns its exit code.
///
/// # Safety
/// `argv` holds `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qem_run_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    if argv.is_null() || argc < 1 {
        set_error("argv is empty".into());
        return 2;
    }
    let mut args = Vec::with_capacity(argc as usize);
    for i in 0..argc as usize {
        match str_arg(*argv.add(i), "argument") {
            Ok(s) => args.push(s.to_string()),
            Err(Fail(_, m)) => {
                set_error(m);
                return 2;
            }
        }
    }
    catch_unwind(|| qem::cli::run(args)).unwrap_or(1)
}
