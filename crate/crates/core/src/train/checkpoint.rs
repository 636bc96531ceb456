//! Training checkpoint: the field section followed by the optimizer and
//! relaxation state.
//!
//! ```text
//! field section                 (see field::io)
//! magic        b"OCST"
//! version      u32
//! iteration    u64
//! environment  3 x f64
//! relax        ema_decay f64, has_threshold u32, threshold f64,
//!              cells u64, ema cells x f64, visited cells x u8
//! adam         occupancy m, v (f32), color m, v (f32), environment m, v (3 x f64)
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::Moments;
use crate::error::{Error, Result};
use crate::field::io::{io_err, read_array, read_f32s, read_f64, read_f64s, read_fields, read_u32, read_u64, write_f32s, write_f64, write_f64s, write_fields, write_u32, write_u64};
use crate::field::SceneModel;
use crate::geom::Rgb;
use crate::loss::RelaxedState;

pub const TRAIN_MAGIC: &[u8; 4] = b"OCST";
pub const TRAIN_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub occupancy: Moments<f32>,
    pub color: Moments<f32>,
    pub environment: Moments<f64>,
}

impl OptimizerState {
    pub fn zeros(model: &SceneModel) -> Self {
        OptimizerState {
            occupancy: Moments::zeros(model.occupancy.logits.len()),
            color: Moments::zeros(model.radiance.coeffs.len()),
            environment: Moments::zeros(3),
        }
    }
}

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Completed optimization steps.
    pub iteration: u64,
    pub model: SceneModel,
    pub relax: RelaxedState,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        write_fields(w, &self.model.occupancy, &self.model.radiance)?;
        w.write_all(TRAIN_MAGIC).map_err(io_err)?;
        write_u32(w, TRAIN_VERSION)?;
        write_u64(w, self.iteration)?;
        write_f64s(w, self.model.environment.as_slice())?;
        let r = &self.relax;
        write_f64(w, r.ema_decay)?;
        write_u32(w, r.threshold.is_some() as u32)?;
        write_f64(w, r.threshold.unwrap_or(0.0))?;
        write_u64(w, r.ema.len() as u64)?;
        write_f64s(w, &r.ema)?;
        let visited: Vec<u8> = r.visited.iter().map(|&v| v as u8).collect();
        w.write_all(&visited).map_err(io_err)?;
        let o = &self.optimizer;
        for mom in [&o.occupancy, &o.color] {
            write_f32s(w, &mom.m)?;
            write_f32s(w, &mom.v)?;
        }
        write_f64s(w, &o.environment.m)?;
        write_f64s(w, &o.environment.v)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let (occupancy, radiance) = read_fields(r)?;
        let magic: [u8; 4] = read_array(r)?;
        if &magic != TRAIN_MAGIC {
            return Err(Error::Checkpoint("missing training section".into()));
        }
        let version = read_u32(r)?;
        if version != TRAIN_VERSION {
            return Err(Error::Checkpoint(format!("unsupported training version {version}")));
        }
        let iteration = read_u64(r)?;
        let env = read_f64s(r, 3)?;
        let ema_decay = read_f64(r)?;
        let has_threshold = read_u32(r)? != 0;
        let threshold = read_f64(r)?;
        let cells = read_u64(r)? as usize;
        let grid = occupancy.grid;
        if cells != grid.cell_count() {
            return Err(Error::Checkpoint(format!("relax state has {cells} cells, grid has {}", grid.cell_count())));
        }
        let ema = read_f64s(r, cells)?;
        let mut visited = vec![0u8; cells];
        r.read_exact(&mut visited).map_err(io_err)?;
        let mut moments = |n: usize| -> Result<Moments<f32>> {
            Ok(Moments {
                m: read_f32s(r, n)?,
                v: read_f32s(r, n)?,
            })
        };
        let occ_m = moments(occupancy.logits.len())?;
        let col_m = moments(radiance.coeffs.len())?;
        let env_m = Moments {
            m: read_f64s(r, 3)?,
            v: read_f64s(r, 3)?,
        };
        Ok(Checkpoint {
            iteration,
            model: SceneModel {
                occupancy,
                radiance,
                environment: Rgb::new(env[0], env[1], env[2]),
            },
            relax: RelaxedState {
                grid,
                ema,
                visited: visited.into_iter().map(|v| v != 0).collect(),
                ema_decay,
                threshold: has_threshold.then_some(threshold),
            },
            optimizer: OptimizerState {
                occupancy: occ_m,
                color: col_m,
                environment: env_m,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::read(&mut BufReader::new(f))
    }
}
