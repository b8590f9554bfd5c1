//! Optical flow, warping and the recurrent video relighting loop.

mod flow;
mod video;
mod warp;

pub use flow::{estimate_flow, FlowEstimate, FlowParams};
pub use video::{
    carried_shading, relight_video, BlendWeights, FlowSource, LightingTimeline, VideoJob, VideoOutput,
    RATIO_EPSILON,
};
pub use warp::{align_previous, spatial_blend, temporal_blend, warp, Warped};
