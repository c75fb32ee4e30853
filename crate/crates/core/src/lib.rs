//! Solar panel mapping from aerial imagery: tile geometry, imagery access,
//! classification and segmentation backends, region analysis, evaluation,
//! and result storage.

pub mod eval;
pub mod geo;
pub mod http;
pub mod imagery;
pub mod inference;
pub mod pipeline;
pub mod store;

pub use geo::{GeoError, GeoPolygon, GeoRect, LatLon, TileRef};
pub use imagery::{ImageTile, ImageryProvider, ProviderConfig, ProviderKind};
pub use inference::{BackendConfig, BackendKind, InferenceBackend};
pub use pipeline::{
    BinaryMask, PanelEstimate, PipelineConfig, PipelineError, RegionReport, RegionSpec, TileResult, Totals,
};
