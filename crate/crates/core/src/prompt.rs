//! Prompt templates shared by the dataset sampler and the tracker.

use crate::geometry::BBox;
use crate::rewards::{format_box, ResponseMode};

/// Placeholder replaced by the template box in template-crop pixels.
pub const BBOX_FLAG: &str = "<BBOXFLAG>";

/// Two-image relocation prompt. `<image_1>` is the template, `<image_2>` the search region.
pub const TASK_PROMPT: &str = "Given two images, you need to:\n\
1. Analyze and identify the target object marked by bounding box <BBOXFLAG> in <image_1>;\n\
2. Re-locate this target in <image_2>;\n\
3. Return [x_min, y_min, x_max, y_max] coordinates of the target in <image_2>.";

/// Default output-format instruction appended in think mode.
pub const DEFAULT_THINK_INSTRUCTION: &str = "Output the thinking process in <think> </think> \
and the final answer in <answer> </answer> tags, i.e., \
<think> reasoning process here </think><answer>[x_min, y_min, x_max, y_max]</answer>.";

const GROUNDING_PROMPT: &str = "Please return the coordinates of {text_description} in JSON format.";

/// Task prompt with the template box substituted as integer pixels.
pub fn task_prompt(template_box: &BBox, mode: ResponseMode, think_instruction: &str) -> String {
    let prompt = TASK_PROMPT.replace(BBOX_FLAG, &format_box(template_box));
    match mode {
        ResponseMode::NoThink => prompt,
        ResponseMode::Think => format!("{prompt}\n{think_instruction}"),
    }
}

/// Text-description initialization prompt.
pub fn grounding_prompt(description: &str) -> String {
    GROUNDING_PROMPT.replace("{text_description}", description)
}
