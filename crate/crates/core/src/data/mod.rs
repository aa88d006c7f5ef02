//! Task generators: GP-sampled 1D regression and clock-digit image completion.

mod digits;
mod gp;
mod io;

pub use digits::{
    bernoulli_mask, digit_set, image_task_with_rate, lit_segments, random_transform, render_digit,
    sample_image_task, transform_image, DigitImage, TransformMode, GLYPH_HEIGHT, IMAGE_SIZE,
    MASK_RATE_RANGE, TEST_ANGLE_RANGE_DEG, TEST_SCALE_RANGE,
};
pub use gp::{
    extend_task_1d, gp_conditional_sample, gp_sample, kernel_eval, sample_task_1d, task_from_locations, KernelKind, KernelSpec,
    TaskConfig1D, DEFAULT_JITTER,
};
pub use io::{read_pgm, read_task, write_pgm, write_task, TaskDump};
