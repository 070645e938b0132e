//! Parameters, objective gradient, adaptive updates and the two-stage loop.

mod adam;
mod gradcheck;
mod objective;
mod params;
mod schedule;

pub use adam::{update_step, AdamConfig, LearningRates, OptimState};
pub use gradcheck::{relative_error, run_gradcheck, GradcheckConfig, GradcheckReport};
pub use objective::{Evaluation, FreezeFlags, Problem};
pub use params::{FrameParams, ParamGroup, ParamLayout, ParamVector};
pub use schedule::{
    optimize, run_stage, OptimizeConfig, Preset, Reconstruction, RunState, SequenceInput, Stage,
    StageSchedule, TraceRow, MAX_REJECTIONS,
};
