//! C interface. Objects are opaque handles released with their `*_free`
//! function. Every call returns an [`OccStatus`]; on failure the message is
//! available from [`occ_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use occusurf::config::ExperimentConfig;
use occusurf::field::SceneModel;
use occusurf::geom::Vec3;
use occusurf::mesh::{extract_mesh, Mesh};
use occusurf::sensor::{generate_dataset, Dataset};
use occusurf::train::{Checkpoint, Trainer};
use occusurf::verify::oracle_suite;
use occusurf::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Checkpoint = 5,
    DimensionMismatch = 6,
    NonFinite = 7,
    EmptyMesh = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Summary of one training step.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OccStepReport {
    pub iteration: u64,
    pub loss: f64,
    pub laplacian: f64,
    pub batch_psnr: f64,
    pub flagged_fraction: f64,
    pub relaxed: bool,
}

pub struct OccModel {
    model: SceneModel,
}

pub struct OccMesh {
    mesh: Mesh,
}

pub struct OccTrainer {
    trainer: Trainer,
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(OccStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } | Error::Image(_) => OccStatus::Io,
            Error::Config { .. } => OccStatus::Config,
            Error::Checkpoint(_) => OccStatus::Checkpoint,
            Error::DimensionMismatch(_) => OccStatus::DimensionMismatch,
            Error::NonFiniteLoss { .. } => OccStatus::NonFinite,
            Error::EmptyMesh(_) => OccStatus::EmptyMesh,
            _ => OccStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OccStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OccStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            OccStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(OccStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn occ_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn occ_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the model stored in a training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_model_load(path: *const c_char, out: *mut *mut OccModel) -> OccStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(OccModel { model: ck.model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn occ_model_free(model: *mut OccModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Grid cells per axis.
///
/// # Safety
/// `model` must be a live handle and `out` a pointer to three values.
#[no_mangle]
pub unsafe extern "C" fn occ_model_resolution(model: *const OccModel, out: *mut usize) -> OccStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = m.model.grid().resolution;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&r);
        Ok(())
    })
}

/// Occupancy at a world-space point; 0 outside the bounds.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_model_alpha(model: *const OccModel, x: f64, y: f64, z: f64, out: *mut f64) -> OccStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out_arg(out, "out")? = m.model.occupancy.eval_alpha(&Vec3::new(x, y, z));
        Ok(())
    })
}

/// Extracts the mesh of the `level` set.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_mesh_extract(model: *const OccModel, level: f64, out: *mut *mut OccMesh) -> OccStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let out = out_arg(out, "out")?;
        let mesh = extract_mesh(&m.model.occupancy, level)?;
        *out = Box::into_raw(Box::new(OccMesh { mesh }));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn occ_mesh_free(mesh: *mut OccMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn occ_mesh_counts(mesh: *const OccMesh, vertices: *mut usize, triangles: *mut usize) -> OccStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        *out_arg(vertices, "vertices")? = m.mesh.vertices.len();
        *out_arg(triangles, "triangles")? = m.mesh.triangles.len();
        Ok(())
    })
}

/// Copies vertex positions as `x, y, z` triples into `buf` of `len` doubles.
///
/// # Safety
/// `mesh` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn occ_mesh_vertices(mesh: *const OccMesh, buf: *mut f64, len: usize) -> OccStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        let need = 3 * m.mesh.vertices.len();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < need {
            return Err(Failure(OccStatus::BufferTooSmall, format!("need {need} doubles, got {len}")));
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (d, v) in dst.chunks_exact_mut(3).zip(&m.mesh.vertices) {
            d.copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Copies triangle vertex indices into `buf` of `len` entries.
///
/// # Safety
/// `mesh` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn occ_mesh_triangles(mesh: *const OccMesh, buf: *mut u32, len: usize) -> OccStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        let need = 3 * m.mesh.triangles.len();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < need {
            return Err(Failure(OccStatus::BufferTooSmall, format!("need {need} indices, got {len}")));
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (d, t) in dst.chunks_exact_mut(3).zip(&m.mesh.triangles) {
            d.copy_from_slice(t);
        }
        Ok(())
    })
}

/// Writes the mesh as OBJ or PLY depending on the extension.
///
/// # Safety
/// `mesh` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn occ_mesh_save(mesh: *const OccMesh, path: *const c_char) -> OccStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        m.mesh.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// Creates a trainer from an experiment config; the dataset is rendered from
/// the configured scene.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_trainer_new(config_path: *const c_char, out: *mut *mut OccTrainer) -> OccStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = ExperimentConfig::load(&path_arg(config_path)?)?;
        let data = generate_dataset(&cfg.scene, &cfg.rig)?;
        let trainer = Trainer::new(cfg.train.clone(), cfg.bounds, &data)?;
        *out = Box::into_raw(Box::new(OccTrainer { trainer, data }));
        Ok(())
    })
}

/// # Safety
/// `trainer` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn occ_trainer_free(trainer: *mut OccTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Runs one optimization step. `report` may be null.
///
/// # Safety
/// `trainer` must be a live handle; `report` null or valid.
#[no_mangle]
pub unsafe extern "C" fn occ_trainer_step(trainer: *mut OccTrainer, report: *mut OccStepReport) -> OccStatus {
    guard(|| {
        let t = trainer.as_mut().ok_or_else(|| null("trainer"))?;
        let r = t.trainer.train_step(&t.data)?;
        if let Some(out) = report.as_mut() {
            *out = OccStepReport {
                iteration: r.iteration,
                loss: r.loss,
                laplacian: r.laplacian,
                batch_psnr: r.batch_psnr,
                flagged_fraction: r.flagged_fraction,
                relaxed: r.relaxed,
            };
        }
        Ok(())
    })
}

/// Completed steps.
///
/// # Safety
/// `trainer` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_trainer_iteration(trainer: *const OccTrainer, out: *mut u64) -> OccStatus {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        *out_arg(out, "out")? = t.trainer.iteration();
        Ok(())
    })
}

/// Writes a checkpoint that [`occ_model_load`] can read.
///
/// # Safety
/// `trainer` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn occ_trainer_save(trainer: *const OccTrainer, path: *const c_char) -> OccStatus {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        t.trainer.state.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// Independent copy of the current model.
///
/// # Safety
/// `trainer` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_trainer_model(trainer: *const OccTrainer, out: *mut *mut OccModel) -> OccStatus {
    guard(|| {
        let t = handle(trainer, "trainer")?;
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(OccModel {
            model: t.trainer.model().clone(),
        }));
        Ok(())
    })
}

/// Runs the gradient and sampling self-checks; `failed` receives the number
/// of failing checks.
///
/// # Safety
/// `failed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn occ_verify(seed: u64, failed: *mut u32) -> OccStatus {
    guard(|| {
        let failed = out_arg(failed, "failed")?;
        let checks = oracle_suite(seed)?;
        *failed = checks.iter().filter(|c| !c.passed).count() as u32;
        Ok(())
    })
}
