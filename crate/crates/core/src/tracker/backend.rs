use image::RgbImage;

use crate::error::BackendError;
use crate::geometry::CropTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryKind {
    /// Template + search crop relocation.
    Track,
    /// Full first frame + text description.
    Ground,
}

/// One model query. `frame_index` and `search_transform` are harness context
/// that real backends ignore and test doubles may use.
#[derive(Debug, Clone)]
pub struct BackendRequest<'a> {
    pub kind: QueryKind,
    /// Images in prompt order (`<image_1>`, `<image_2>`, ...).
    pub images: Vec<&'a RgbImage>,
    pub prompt: String,
    /// Zero-based frame index within the sequence.
    pub frame_index: usize,
    pub search_transform: Option<CropTransform>,
}

/// Anything that maps images plus a prompt to response text.
pub trait PolicyBackend: Send + Sync {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError>;
}

impl<B: PolicyBackend + ?Sized> PolicyBackend for &B {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        (**self).respond(request)
    }
}

impl<B: PolicyBackend + ?Sized> PolicyBackend for Box<B> {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<String, BackendError> {
        (**self).respond(request)
    }
}
